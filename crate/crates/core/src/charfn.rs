//! Characteristic function of `(U_A, U_B, V - n/2)` for a uniform roll `V`
//! on `[0, n]`, its Gaussian surrogate `exp(-n Q)` and numerical checks of
//! the bounds relating the two.
//!
//! Frequencies are in cycles: `e(x) = exp(2 pi i x)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dice::{sample_balanced_into, Die, IntervalSpec, Neumaier};
use crate::gstats::{moments_quadrature, sum_g_rolls, sup_norm_g, GMoments};
use crate::mc::{run_parallel, Mergeable};
use crate::{Error, Result};

/// Absolute slack allowed on the deterministic inequalities.
pub const CHECK_SLACK: f64 = 1e-12;

/// `e(x) = exp(2 pi i x)`.
pub fn e(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// A frequency triple and the value of a transform there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharFnPoint {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub value: Complex64,
}

fn check_wide(a: &Die, b: &Die) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    let n = a.n() as f64;
    for spec in [a.spec(), b.spec()] {
        if spec.z1() != 0.0 || spec.z2() != n {
            return Err(Error::IntervalMismatch);
        }
    }
    Ok(())
}

/// Exact `E e(alpha U_A + beta U_B + gamma (V - n/2))` for dice on `[0, n]`.
///
/// Between consecutive faces `f_A = d` and `f_B = e` are constant, so the
/// integrand is `e(alpha d + beta e - gamma n/2) e(kappa t)` with
/// `kappa = gamma - alpha - beta` and integrates in closed form. At
/// `kappa = 0` the piece contributes its length times the constant.
pub fn fhat_exact(a: &Die, b: &Die, alpha: f64, beta: f64, gamma: f64) -> Result<Complex64> {
    fhat_refined(a, b, alpha, beta, gamma, &[])
}

/// [`fhat_exact`] with the pieces further split at `extra` points in `(0, n)`.
pub fn fhat_refined(a: &Die, b: &Die, alpha: f64, beta: f64, gamma: f64, extra: &[f64]) -> Result<Complex64> {
    check_wide(a, b)?;
    let n = a.n() as f64;
    let mut breaks = Vec::with_capacity(2 * a.n() + 2 + extra.len());
    breaks.push(0.0);
    breaks.push(n);
    breaks.extend_from_slice(a.sorted_faces());
    breaks.extend_from_slice(b.sorted_faces());
    breaks.extend(extra.iter().copied().filter(|&x| x > 0.0 && x < n));
    breaks.sort_unstable_by(f64::total_cmp);
    breaks.dedup();

    let kappa = gamma - alpha - beta;
    let (sa, sb) = (a.sorted_faces(), b.sorted_faces());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut re = Neumaier::default();
    let mut im = Neumaier::default();
    for piece in breaks.windows(2) {
        let (c, d) = (piece[0], piece[1]);
        while ia < sa.len() && sa[ia] <= c {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= c {
            ib += 1;
        }
        let h = d - c;
        let phase = alpha * ia as f64 + beta * ib as f64 - 0.5 * gamma * n + kappa * (c + 0.5 * h);
        let z = e(phase) * (h * sinc(PI * kappa * h));
        re.add(z.re);
        im.add(z.im);
    }
    Ok(Complex64::new(re.value(), im.value()) / n)
}

/// `Q = 2 pi^2 (alpha^2 Var_A + beta^2 Var_B + gamma^2 Var V + 2 alpha beta CV_AB
/// + 2 alpha gamma CV_A + 2 beta gamma CV_B)`.
pub fn q_form(m: &GMoments, alpha: f64, beta: f64, gamma: f64) -> f64 {
    2.0 * PI
        * PI
        * (alpha * alpha * m.var_a
            + beta * beta * m.var_b
            + gamma * gamma * m.var_h
            + 2.0 * alpha * beta * m.cv_ab
            + 2.0 * alpha * gamma * m.cv_a
            + 2.0 * beta * gamma * m.cv_b)
}

/// Gaussian surrogate `exp(-n Q)` of `fhat^n`.
pub fn ghat(m: &GMoments, n: usize, alpha: f64, beta: f64, gamma: f64) -> f64 {
    (-(n as f64) * q_form(m, alpha, beta, gamma)).exp()
}

/// Second-order split `fhat = 1 - Q + R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QRDecomp {
    pub q: f64,
    pub r_bound: f64,
    pub r_actual: Complex64,
}

/// Cubic bound `1200 (|alpha|^3 |U_A|^3 + |beta|^3 |U_B|^3 + |gamma|^3 n^3 / 8)`.
pub fn r_bound(sup_a: f64, sup_b: f64, n: usize, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let n = n as f64;
    1200.0 * ((alpha.abs() * sup_a).powi(3) + (beta.abs() * sup_b).powi(3) + gamma.abs().powi(3) * n.powi(3) / 8.0)
}

/// Decomposes `fhat` for balanced dice on `[0, n]`.
pub fn qr_decompose(a: &Die, b: &Die, alpha: f64, beta: f64, gamma: f64) -> Result<QRDecomp> {
    let m = moments_quadrature(a, b)?;
    qr_decompose_with(a, b, &m, alpha, beta, gamma)
}

/// [`qr_decompose`] reusing precomputed moments of `(A, B)`.
pub fn qr_decompose_with(a: &Die, b: &Die, m: &GMoments, alpha: f64, beta: f64, gamma: f64) -> Result<QRDecomp> {
    let f = fhat_exact(a, b, alpha, beta, gamma)?;
    let q = q_form(m, alpha, beta, gamma);
    Ok(QRDecomp {
        q,
        r_bound: r_bound(m.sup_a, m.sup_b, a.n(), alpha, beta, gamma),
        r_actual: f - 1.0 + q,
    })
}

/// Outcome of checking an inequality `statistic <= bound` on random inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub samples: u64,
    pub violations: u64,
    /// Largest `statistic - bound` seen.
    pub max_excess: f64,
    /// Largest statistic seen.
    pub max_statistic: f64,
}

impl ViolationReport {
    pub fn record(&mut self, statistic: f64, bound: f64) {
        let excess = statistic - bound;
        if self.samples == 0 {
            self.max_excess = excess;
            self.max_statistic = statistic;
        } else {
            self.max_excess = self.max_excess.max(excess);
            self.max_statistic = self.max_statistic.max(statistic);
        }
        self.samples += 1;
        if excess.is_nan() || excess > CHECK_SLACK {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.samples > 0 && self.violations == 0
    }
}

impl Mergeable for ViolationReport {
    fn merge(&mut self, other: Self) {
        if other.samples == 0 {
            return;
        }
        if self.samples == 0 {
            *self = other;
            return;
        }
        self.samples += other.samples;
        self.violations += other.violations;
        self.max_excess = self.max_excess.max(other.max_excess);
        self.max_statistic = self.max_statistic.max(other.max_statistic);
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    half_width * (2.0 * rng.random::<f64>() - 1.0)
}

/// `|fhat| |gamma - alpha - beta| <= 1`, sampled with
/// `1.01 <= |gamma - alpha - beta| <= 10` and `|alpha|, |beta| <= 1/2`.
/// The statistic is `|fhat| |kappa|` against the bound 1.
pub fn check_large_gamma<R: Rng + ?Sized>(a: &Die, b: &Die, samples: usize, rng: &mut R) -> Result<ViolationReport> {
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let alpha = symmetric(rng, 0.5);
        let beta = symmetric(rng, 0.5);
        let magnitude = rng.random_range(1.01..10.0);
        let kappa = if rng.random::<bool>() { magnitude } else { -magnitude };
        let f = fhat_exact(a, b, alpha, beta, kappa + alpha + beta)?;
        report.record(f.norm() * kappa.abs(), 1.0);
    }
    Ok(report)
}

/// `|fhat(alpha, beta, gamma) - fhat(alpha0, beta0, gamma)|
/// <= 2 pi (|alpha - alpha0| |U_A| + |beta - beta0| |U_B|)` on random pairs
/// with all frequencies in `[-1/2, 1/2]`.
pub fn check_lipschitz<R: Rng + ?Sized>(a: &Die, b: &Die, pairs: usize, rng: &mut R) -> Result<ViolationReport> {
    let (ua, ub) = (sup_norm_g(a), sup_norm_g(b));
    let mut report = ViolationReport::default();
    for _ in 0..pairs {
        let (alpha, beta, gamma) = (symmetric(rng, 0.5), symmetric(rng, 0.5), symmetric(rng, 0.5));
        let (alpha0, beta0) = (symmetric(rng, 0.5), symmetric(rng, 0.5));
        let diff = (fhat_exact(a, b, alpha, beta, gamma)? - fhat_exact(a, b, alpha0, beta0, gamma)?).norm();
        let bound = 2.0 * PI * ((alpha - alpha0).abs() * ua + (beta - beta0).abs() * ub);
        report.record(diff, bound);
    }
    Ok(report)
}

/// Moves one random face of `a` by at most `eps` (staying on `[0, n]`) and
/// checks `|fhat_A - fhat_A'| <= 2 eps / n` at a random frequency. The bound
/// uses the realized displacement.
pub fn check_interpolation_a<R: Rng + ?Sized>(
    a: &Die,
    b: &Die,
    eps: f64,
    samples: usize,
    rng: &mut R,
) -> Result<ViolationReport> {
    check_wide(a, b)?;
    let n = a.n() as f64;
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let i = rng.random_range(0..a.n());
        let mut faces = a.faces().to_vec();
        faces[i] = (faces[i] + symmetric(rng, eps)).clamp(0.0, n);
        let moved = (faces[i] - a.faces()[i]).abs();
        let a2 = Die::new(faces, *a.spec())?;
        let (alpha, beta, gamma) = (symmetric(rng, 0.5), symmetric(rng, 0.5), symmetric(rng, 0.5));
        let diff = (fhat_exact(a, b, alpha, beta, gamma)? - fhat_exact(&a2, b, alpha, beta, gamma)?).norm();
        report.record(diff, 2.0 * moved / n);
    }
    Ok(report)
}

/// `|R| <= r_bound` for the split `fhat = 1 - Q + R` at random frequencies
/// with `|alpha|, |beta|, |gamma| <= 1/n`.
pub fn check_fhat_moments<R: Rng + ?Sized>(a: &Die, b: &Die, samples: usize, rng: &mut R) -> Result<ViolationReport> {
    let m = moments_quadrature(a, b)?;
    let h = 1.0 / a.n() as f64;
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let (alpha, beta, gamma) = (symmetric(rng, h), symmetric(rng, h), symmetric(rng, h));
        let d = qr_decompose_with(a, b, &m, alpha, beta, gamma)?;
        report.record(d.r_actual.norm(), d.r_bound);
    }
    Ok(report)
}

/// Frequency grid for [`check_decay_box`]: `alpha` and `beta` on evenly
/// spaced points of `[-1/2, 1/2]`, `gamma` on evenly spaced points of
/// `[-gamma_max, gamma_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_steps: usize,
    pub beta_steps: usize,
    pub gamma_steps: usize,
    pub gamma_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha_steps: 10,
            beta_steps: 10,
            gamma_steps: 10,
            gamma_max: 0.5,
        }
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Decay statistics of `|fhat|` outside the central box for one dice pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `1 - 10 log n / n`.
    pub threshold: f64,
    pub points: usize,
    /// Grid points inside the box, left out of the statistics.
    pub excluded: usize,
    pub exceedances: usize,
    pub max_modulus: f64,
    /// Largest `|fhat|^n` over points at or below the threshold.
    pub max_power_below: f64,
    /// `n^{-10}`.
    pub power_bound: f64,
}

impl DecayReport {
    pub fn violated(&self) -> bool {
        self.exceedances > 0
    }
}

/// Half-widths `(10^10 log n / n, 6 log^2 n / n^{3/2})` of the central box.
pub fn decay_box(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let l = nf.ln();
    (1e10 * l / nf, 6.0 * l * l / nf.powf(1.5))
}

/// `|fhat|` on the grid, restricted to points outside the central box.
pub fn check_decay_box(a: &Die, b: &Die, grid: &GridSpec) -> Result<DecayReport> {
    check_wide(a, b)?;
    let n = a.n();
    let nf = n as f64;
    let (ab_half, g_half) = decay_box(n);
    let threshold = 1.0 - 10.0 * nf.ln() / nf;
    let mut report = DecayReport {
        threshold,
        points: 0,
        excluded: 0,
        exceedances: 0,
        max_modulus: 0.0,
        max_power_below: 0.0,
        power_bound: nf.powi(-10),
    };
    let gammas = linspace(-grid.gamma_max, grid.gamma_max, grid.gamma_steps);
    for &alpha in &linspace(-0.5, 0.5, grid.alpha_steps) {
        for &beta in &linspace(-0.5, 0.5, grid.beta_steps) {
            for &gamma in &gammas {
                let inside = alpha.abs() <= ab_half && beta.abs() <= ab_half && gamma.abs() <= g_half;
                if inside {
                    report.excluded += 1;
                    continue;
                }
                let r = fhat_exact(a, b, alpha, beta, gamma)?.norm();
                report.points += 1;
                report.max_modulus = report.max_modulus.max(r);
                if r > threshold {
                    report.exceedances += 1;
                } else {
                    report.max_power_below = report.max_power_below.max(r.powi(n as i32));
                }
            }
        }
    }
    Ok(report)
}

/// Distance from `x` to the nearest multiple of `period`.
pub fn dist_to_lattice(x: f64, period: f64) -> f64 {
    debug_assert!(period > 0.0);
    let r = x.rem_euclid(period);
    r.min(period - r)
}

/// `|e(t1) + e(t2)| / 2 <= 1 - d(t1 - t2)^2` on uniform `t` in `[0, 1)^2`.
pub fn check_e_to_mod1_pair<R: Rng + ?Sized>(samples: usize, rng: &mut R) -> ViolationReport {
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let (t1, t2) = (rng.random::<f64>(), rng.random::<f64>());
        let lhs = 0.5 * (e(t1) + e(t2)).norm();
        report.record(lhs, 1.0 - dist_to_lattice(t1 - t2, 1.0).powi(2));
    }
    report
}

/// `|e(t1) + e(t2) + e(t3) + e(t4)| / 4 <= 1 - d(t1 - t2 + t3 - t4)^2 / 4`.
pub fn check_e_to_mod1_quad<R: Rng + ?Sized>(samples: usize, rng: &mut R) -> ViolationReport {
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let t: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        let lhs = 0.25 * (e(t[0]) + e(t[1]) + e(t[2]) + e(t[3])).norm();
        let d = dist_to_lattice(t[0] - t[1] + t[2] - t[3], 1.0);
        report.record(lhs, 1.0 - d * d / 4.0);
    }
    report
}

/// The two ratios `|1 - (1-Q+R)^n / exp(-nQ)|` and `|1 - exp(-nQ) / (1-Q+R)^n|`,
/// the larger of which is returned.
pub fn exp_nq_ratio(q: f64, r: Complex64, n: usize) -> f64 {
    let nf = n as f64;
    // (1 - Q + R)^n / exp(-nQ) = exp(n (ln(1 - Q + R) + Q))
    let log_ratio = (Complex64::new(1.0 - q, 0.0) + r).ln() * nf + nf * q;
    let forward = (Complex64::new(1.0, 0.0) - log_ratio.exp()).norm();
    let backward = (Complex64::new(1.0, 0.0) - (-log_ratio).exp()).norm();
    forward.max(backward)
}

/// Complex case: `Q` real, `R` complex with `Q^2, |R| <= 1/(100 n)`; both
/// ratios are at most `40 n (Q^2 + |R|)`. `n` is uniform on `1..=1000`.
pub fn check_exp_nq_approx<R: Rng + ?Sized>(samples: usize, rng: &mut R) -> ViolationReport {
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let n = rng.random_range(1..=1000usize);
        let cap = 1.0 / (100.0 * n as f64);
        let q = symmetric(rng, cap.sqrt());
        let r = Complex64::from_polar(cap * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
        let bound = 40.0 * n as f64 * (q * q + r.norm());
        report.record(exp_nq_ratio(q, r, n), bound);
    }
    report
}

/// Real case: `Q, R` real with `Q^2, |R| <= 1/(4n)`; both ratios are at
/// most `4 n (Q^2 + |R|)`.
pub fn check_exp_nq_approx_real<R: Rng + ?Sized>(samples: usize, rng: &mut R) -> ViolationReport {
    let mut report = ViolationReport::default();
    for _ in 0..samples {
        let n = rng.random_range(1..=1000usize);
        let cap = 1.0 / (4.0 * n as f64);
        let q = symmetric(rng, cap.sqrt());
        let r = symmetric(rng, cap);
        let bound = 4.0 * n as f64 * (q * q + r.abs());
        report.record(exp_nq_ratio(q, Complex64::new(r, 0.0), n), bound);
    }
    report
}

/// `Gamma_rho(0, 0) = 1/4 + asin(rho) / (2 pi)`, the probability that two
/// standard Gaussians with correlation `rho` are both positive.
pub fn gaussian_orthant(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 + 1e-9 {
        return Err(Error::OutOfRange {
            value: rho,
            low: -1.0,
            high: 1.0,
        });
    }
    Ok(0.25 + rho.clamp(-1.0, 1.0).asin() / (2.0 * PI))
}

/// How the conditioning on the roll sum is realized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ConditioningMode {
    /// Exact conditioning through the balanced rejection sampler.
    #[default]
    Exact,
    /// Plain `n` iid rolls accepted when the sum is within `eps` of the target.
    Window { eps: f64 },
}

#[derive(Debug, Clone, Copy, Default)]
struct CltState {
    trials: u64,
    both: u64,
    a_only: u64,
    max_half_dev: f64,
}

impl Mergeable for CltState {
    fn merge(&mut self, other: Self) {
        self.trials += other.trials;
        self.both += other.both;
        self.a_only += other.a_only;
        self.max_half_dev = self.max_half_dev.max(other.max_half_dev);
    }
}

/// Monte Carlo probability that a conditioned roll vector is beaten by both
/// dice, against its Gaussian counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltComparison {
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub mode: ConditioningMode,
    pub lhs: f64,
    pub se: f64,
    /// Probability that `sum g_A(v_i) > 0` alone.
    pub lhs_a: f64,
    pub rhs: f64,
    pub rho_cond: f64,
    pub var_a_cond: f64,
    pub var_b_cond: f64,
    pub difference: f64,
    /// Largest distance of `sum g_A(v_i)` from `Z + 1/2`; only tracked for odd `n`.
    pub max_half_integrality_deviation: f64,
}

/// Attempt budget of the windowed sampler, per trial.
const WINDOW_ATTEMPTS: usize = 1_000_000;

fn sample_window(spec: &IntervalSpec, eps: f64, rng: &mut ChaCha8Rng, rolls: &mut [f64]) -> Result<()> {
    let target = spec.balance_target();
    let w = spec.width();
    for _ in 0..WINDOW_ATTEMPTS {
        let mut sum = Neumaier::default();
        for v in rolls.iter_mut() {
            *v = spec.z1() + w * rng.random::<f64>();
            sum.add(*v);
        }
        if (sum.value() - target).abs() <= eps {
            return Ok(());
        }
    }
    Err(Error::AttemptsExhausted {
        attempts: WINDOW_ATTEMPTS,
    })
}

/// Compares `Pr[sum g_A(v_i) > 0, sum g_B(v_i) > 0 | sum v_i = target]` for
/// a uniform conditioned roll vector `v` with `Gamma_{rho_cond}(0, 0)`.
pub fn conditional_clt_compare(
    a: &Die,
    b: &Die,
    trials: u64,
    seed: u64,
    workers: usize,
    mode: ConditioningMode,
) -> Result<CltComparison> {
    let m = moments_quadrature(a, b)?;
    let n = a.n();
    let tol = 1e-9 * n as f64;
    if m.var_a_cond <= tol || m.var_b_cond <= tol {
        return Err(Error::DegenerateMoments {
            var_a_cond: m.var_a_cond,
            var_b_cond: m.var_b_cond,
        });
    }
    if let ConditioningMode::Window { eps } = mode {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::InvalidArgument(format!("window half-width must be positive, got {eps}")));
        }
    }
    let spec = *a.spec();
    let attempts = 100 * crate::dice::default_max_attempts(n);
    let odd = n % 2 == 1;
    let state: CltState = run_parallel(trials, workers, seed, |rng, _, s: &mut CltState| {
        let mut rolls = vec![0.0; n];
        match mode {
            ConditioningMode::Exact => sample_balanced_into(&spec, rng, attempts, &mut rolls)?,
            ConditioningMode::Window { eps } => sample_window(&spec, eps, rng, &mut rolls)?,
        }
        let ga = sum_g_rolls(a, &rolls);
        let gb = sum_g_rolls(b, &rolls);
        if odd && matches!(mode, ConditioningMode::Exact) {
            s.max_half_dev = s.max_half_dev.max(dist_to_lattice(ga - 0.5, 1.0));
        }
        s.trials += 1;
        if ga > 0.0 {
            s.a_only += 1;
            if gb > 0.0 {
                s.both += 1;
            }
        }
        Ok(())
    })?;
    let t = state.trials as f64;
    let lhs = state.both as f64 / t;
    let rhs = gaussian_orthant(m.rho_cond)?;
    Ok(CltComparison {
        n,
        trials: state.trials,
        seed,
        workers,
        mode,
        lhs,
        se: (lhs * (1.0 - lhs) / t).sqrt(),
        lhs_a: state.a_only as f64 / t,
        rhs,
        rho_cond: m.rho_cond,
        var_a_cond: m.var_a_cond,
        var_b_cond: m.var_b_cond,
        difference: lhs - rhs,
        max_half_integrality_deviation: state.max_half_dev,
    })
}
