use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interval [{z1}, {z2}] with {n} faces")]
    InvalidInterval { z1: f64, z2: f64, n: usize },
    #[error("face {value} outside [{z1}, {z2}]")]
    FaceOutOfRange { value: f64, z1: f64, z2: f64 },
    #[error("balanced sampling rejected {attempts} consecutive attempts")]
    AttemptsExhausted { attempts: usize },
    #[error("face counts differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dice live on different intervals")]
    IntervalMismatch,
    #[error("argument {value} outside the admissible range [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },
    #[error("closed forms need the symmetric interval [-sqrt 3, sqrt 3]")]
    UnsupportedInterval,
    #[error("die is not balanced (face-sum off by {deviation:e})")]
    NotBalanced { deviation: f64 },
    #[error("exact Irwin-Hall oracle supports 2 <= n <= {max}, got {n}")]
    UnsupportedN { n: usize, max: usize },
    #[error("unsupported number of free faces k = {0}")]
    UnsupportedK(usize),
    #[error("unsupported expansion order {0}")]
    UnsupportedOrder(usize),
    #[error("quadrature needs {needed} evaluations, budget is {budget}")]
    QuadratureBudget { needed: u64, budget: u64 },
    #[error("conditional variances are not positive (var_a_cond = {var_a_cond}, var_b_cond = {var_b_cond})")]
    DegenerateMoments { var_a_cond: f64, var_b_cond: f64 },
    #[error("worker {worker} panicked: {message}")]
    TaskFailure { worker: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
