//! Numerical laboratory for random balanced dice.
//!
//! Dice are vectors of `n` real faces drawn uniformly from an interval and,
//! in the balanced model, conditioned on the face-sum being equal to its
//! expectation. The crate covers:
//!
//! * [`dice`]: interval conventions, iid and balanced (rejection) sampling,
//!   the beats relation.
//! * [`gstats`]: the centered counting function `g_A` and the second-moment
//!   statistics of `(U_A, U_B, V)`, by exact piecewise integration and by
//!   closed forms on the symmetric interval.
//! * [`tournaments`]: classification of 3- and 4-dice tournaments, class
//!   probability estimates, nested conditional estimators and the linear
//!   identities relating the 3- and 4-dice class probabilities.
//! * [`edgeworth`]: Edgeworth expansion of uniform sums, the exact
//!   Irwin-Hall oracle, correction factors for balanced conditioning and
//!   conditional expectations of a few faces.
//! * [`charfn`]: the characteristic function of `(U_A, U_B, V - n/2)`, its
//!   Gaussian surrogate and numerical checks of the associated bounds.
//! * [`mc`]: reproducible parallel Monte Carlo with mergeable accumulators.
//! * [`acceptance`]: the end-to-end quantitative checks, shared by the test
//!   suite and the command line.

pub mod acceptance;
pub mod charfn;
pub mod dice;
pub mod edgeworth;
mod error;
pub mod gstats;
pub mod mc;
pub mod quadrature;
pub mod tournaments;

pub use error::{Error, Result};

pub use dice::{BeatsOutcome, Die, IntervalSpec, Outcome};
pub use gstats::GMoments;
pub use mc::{Accumulator, EstimateReport, Mergeable, RngStream};
