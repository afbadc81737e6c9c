//! Beats tournaments on three and four random balanced dice.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dice::{beats_fast, default_max_attempts, sample_balanced, Die, IntervalSpec};
use crate::mc::{run_parallel, wilson_interval, Accumulator, EstimateReport, Mergeable, Z95};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tournament3Class {
    Transitive,
    Cycle,
    Degenerate,
}

impl Tournament3Class {
    pub const CLASSES: [Self; 2] = [Self::Transitive, Self::Cycle];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Transitive => "transitive",
            Self::Cycle => "cycle",
            Self::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tournament4Class {
    Transitive,
    /// A die beating (or losing to) all others on top of a 3-cycle.
    WinnerOrLoserPlusCycle,
    FourCycle,
    Degenerate,
}

impl Tournament4Class {
    pub const CLASSES: [Self; 3] = [Self::Transitive, Self::WinnerOrLoserPlusCycle, Self::FourCycle];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Transitive => "transitive",
            Self::WinnerOrLoserPlusCycle => "one_plus_cycle",
            Self::FourCycle => "four_cycle",
            Self::Degenerate => "degenerate",
        }
    }
}

/// Classifies the tournament on `(A, B, C)` from its three margins.
pub fn classify3(m_ab: i64, m_bc: i64, m_ac: i64) -> Tournament3Class {
    if m_ab == 0 || m_bc == 0 || m_ac == 0 {
        return Tournament3Class::Degenerate;
    }
    let mut deg = [0u8; 3];
    for (m, i, j) in [(m_ab, 0, 1), (m_bc, 1, 2), (m_ac, 0, 2)] {
        deg[if m > 0 { i } else { j }] += 1;
    }
    if deg == [1, 1, 1] {
        Tournament3Class::Cycle
    } else {
        Tournament3Class::Transitive
    }
}

/// Index pairs for the margins `[ab, ac, ad, bc, bd, cd]`.
pub const PAIRS4: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Classifies the tournament on four dice from the margins
/// `[ab, ac, ad, bc, bd, cd]` by its sorted out-degree sequence.
pub fn classify4(margins: [i64; 6]) -> Tournament4Class {
    if margins.contains(&0) {
        return Tournament4Class::Degenerate;
    }
    let mut deg = [0u8; 4];
    for (m, &(i, j)) in margins.iter().zip(&PAIRS4) {
        deg[if *m > 0 { i } else { j }] += 1;
    }
    deg.sort_unstable();
    match deg {
        [0, 1, 2, 3] => Tournament4Class::Transitive,
        [1, 1, 1, 3] | [0, 2, 2, 2] => Tournament4Class::WinnerOrLoserPlusCycle,
        [1, 1, 2, 2] => Tournament4Class::FourCycle,
        _ => unreachable!("out-degrees of a 4-tournament sum to 6"),
    }
}

/// Margin of die `i` against die `j` read from the 4-dice margin vector.
fn margin4(margins: &[i64; 6], i: usize, j: usize) -> i64 {
    let k = PAIRS4
        .iter()
        .position(|&p| p == (i.min(j), i.max(j)))
        .expect("distinct dice");
    if i < j {
        margins[k]
    } else {
        -margins[k]
    }
}

/// Classification of the 3-subtournament obtained by removing die `drop`.
pub fn subtournament3(margins: &[i64; 6], drop: usize) -> Tournament3Class {
    let keep: Vec<usize> = (0..4).filter(|&i| i != drop).collect();
    let (a, b, c) = (keep[0], keep[1], keep[2]);
    classify3(margin4(margins, a, b), margin4(margins, b, c), margin4(margins, a, c))
}

/// Class counts and probabilities over the non-degenerate trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentEstimate {
    pub dice: usize,
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub class_names: Vec<String>,
    pub counts: Vec<u64>,
    pub degenerate: u64,
    pub probabilities: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// 95% Wilson intervals.
    pub intervals: Vec<EstimateReport>,
}

impl TournamentEstimate {
    fn from_counts(
        dice: usize,
        names: &[&str],
        counts: &[u64],
        degenerate: u64,
        n: usize,
        seed: u64,
        workers: usize,
    ) -> Result<Self> {
        let valid: u64 = counts.iter().sum();
        let trials = valid + degenerate;
        let mut probabilities = Vec::with_capacity(counts.len());
        let mut standard_errors = Vec::with_capacity(counts.len());
        let mut intervals = Vec::with_capacity(counts.len());
        for &c in counts {
            if valid == 0 {
                probabilities.push(0.0);
                standard_errors.push(f64::NAN);
                intervals.push(EstimateReport::from_mean_se(0.0, f64::NAN, 0, Z95));
                continue;
            }
            let w = wilson_interval(c, valid, Z95)?;
            probabilities.push(w.point);
            standard_errors.push(w.se);
            intervals.push(w);
        }
        Ok(Self {
            dice,
            n,
            trials,
            seed,
            workers,
            class_names: names.iter().map(|s| s.to_string()).collect(),
            counts: counts.to_vec(),
            degenerate,
            probabilities,
            standard_errors,
            intervals,
        })
    }

    pub fn valid_trials(&self) -> u64 {
        self.trials - self.degenerate
    }

    pub fn probability(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.probabilities[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.standard_errors[i])
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Standard error of `sum_k c_k p_k` under the multinomial law.
    pub fn linear_se(&self, coefficients: &[f64]) -> f64 {
        let n = self.valid_trials() as f64;
        let (mut ex, mut ex2) = (0.0, 0.0);
        for (c, p) in coefficients.iter().zip(&self.probabilities) {
            ex += c * p;
            ex2 += c * c * p;
        }
        ((ex2 - ex * ex).max(0.0) / n).sqrt()
    }
}

fn sample_dice<const K: usize>(spec: &IntervalSpec, rng: &mut ChaCha8Rng) -> Result<[Die; K]> {
    let attempts = default_max_attempts(spec.n());
    let mut out = Vec::with_capacity(K);
    for _ in 0..K {
        out.push(sample_balanced(spec, rng, attempts)?);
    }
    Ok(out.try_into().expect("K dice"))
}

fn margin(a: &Die, b: &Die) -> Result<i64> {
    let m = beats_fast(a, b)?.margin;
    if m == 0 && a.is_balanced() && b.is_balanced() && a.n() % 2 == 1 {
        log::warn!("draw between balanced odd-n dice (floating-point tie)");
    }
    Ok(m)
}

/// Margins `[ab, ac, ad, bc, bd, cd]` of four dice.
pub fn margins4(d: &[Die; 4]) -> Result<[i64; 6]> {
    let mut out = [0i64; 6];
    for (slot, &(i, j)) in out.iter_mut().zip(&PAIRS4) {
        *slot = margin(&d[i], &d[j])?;
    }
    Ok(out)
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

/// Class probabilities of the tournament on three balanced dice.
pub fn estimate_tournament3(
    spec: &IntervalSpec,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<TournamentEstimate> {
    check_trials(trials)?;
    let counts: [u64; 3] = run_parallel(trials, workers, seed, |rng, _, s: &mut [u64; 3]| {
        let [a, b, c] = sample_dice::<3>(spec, rng)?;
        let class = classify3(margin(&a, &b)?, margin(&b, &c)?, margin(&a, &c)?);
        s[class as usize] += 1;
        Ok(())
    })?;
    let names = Tournament3Class::CLASSES.map(|c| c.name());
    TournamentEstimate::from_counts(3, &names, &counts[..2], counts[2], spec.n(), seed, workers)
}

/// Class probabilities of the tournament on four balanced dice.
pub fn estimate_tournament4(
    spec: &IntervalSpec,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<TournamentEstimate> {
    check_trials(trials)?;
    let counts: [u64; 4] = run_parallel(trials, workers, seed, |rng, _, s: &mut [u64; 4]| {
        let d = sample_dice::<4>(spec, rng)?;
        s[classify4(margins4(&d)?) as usize] += 1;
        Ok(())
    })?;
    let names = Tournament4Class::CLASSES.map(|c| c.name());
    TournamentEstimate::from_counts(4, &names, &counts[..3], counts[3], spec.n(), seed, workers)
}

/// Four-dice estimate together with the 3-dice classes obtained by
/// discarding one uniformly chosen die from each sampled tournament.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardOneReport {
    pub four: TournamentEstimate,
    pub three_from_four: TournamentEstimate,
}

pub fn estimate_discard_one(
    spec: &IntervalSpec,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<DiscardOneReport> {
    check_trials(trials)?;
    let (four, three): ([u64; 4], [u64; 3]) =
        run_parallel(trials, workers, seed, |rng, _, s: &mut ([u64; 4], [u64; 3])| {
            let d = sample_dice::<4>(spec, rng)?;
            let m = margins4(&d)?;
            s.0[classify4(m) as usize] += 1;
            let drop = rng.random_range(0..4);
            s.1[subtournament3(&m, drop) as usize] += 1;
            Ok(())
        })?;
    let n4 = Tournament4Class::CLASSES.map(|c| c.name());
    let n3 = Tournament3Class::CLASSES.map(|c| c.name());
    Ok(DiscardOneReport {
        four: TournamentEstimate::from_counts(4, &n4, &four[..3], four[3], spec.n(), seed, workers)?,
        three_from_four: TournamentEstimate::from_counts(3, &n3, &three[..2], three[2], spec.n(), seed, workers)?,
    })
}

/// Summary of a nested estimator of a conditional probability `P` from
/// `outer` independent conditionings with `inner` fresh draws each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedSummary {
    pub outer: u64,
    pub inner: u64,
    /// Mean of the per-outer estimates, an unbiased estimate of `E P`.
    pub mean: EstimateReport,
    /// Sample variance of the per-outer estimates.
    pub var_hat: f64,
    /// Binomial noise `mean(P_hat (1 - P_hat)) / (inner - 1)`.
    pub noise_correction: f64,
    /// `var_hat - noise_correction`, unbiased for `Var P`.
    pub var_corrected: f64,
    /// Unbiased estimate of `E P^2` from `k (k - 1) / (m (m - 1))`.
    pub second_moment: EstimateReport,
    pub degenerate: u64,
}

/// Per-outer running state of a nested estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NestedState {
    p_hat: Accumulator,
    noise: Accumulator,
    square: Accumulator,
    degenerate: u64,
}

impl NestedState {
    /// Records `successes` out of `inner` draws for one outer conditioning.
    pub fn record(&mut self, successes: u64, inner: u64) {
        let (k, m) = (successes as f64, inner as f64);
        let p = k / m;
        self.p_hat.push(p);
        self.noise.push(p * (1.0 - p));
        self.square.push(k * (k - 1.0) / (m * (m - 1.0)));
    }

    pub fn summary(&self, inner: u64) -> NestedSummary {
        let var_hat = self.p_hat.variance();
        let noise_correction = self.noise.mean() / (inner as f64 - 1.0);
        NestedSummary {
            outer: self.p_hat.count(),
            inner,
            mean: self.p_hat.report(Z95),
            var_hat,
            noise_correction,
            var_corrected: var_hat - noise_correction,
            second_moment: self.square.report(Z95),
            degenerate: self.degenerate,
        }
    }
}

impl Mergeable for NestedState {
    fn merge(&mut self, other: Self) {
        self.p_hat.merge(other.p_hat);
        self.noise.merge(other.noise);
        self.square.merge(other.square);
        self.degenerate += other.degenerate;
    }
}

fn check_nested(outer: u64, inner: u64) -> Result<()> {
    if outer < 2 || inner < 2 {
        return Err(Error::InvalidArgument(format!(
            "nested estimators need outer, inner >= 2 (got {outer}, {inner})"
        )));
    }
    Ok(())
}

/// Nested estimate of `X = Pr[A beats B | A]`.
pub fn estimate_nested_x(
    spec: &IntervalSpec,
    outer: u64,
    inner: u64,
    seed: u64,
    workers: usize,
) -> Result<NestedSummary> {
    check_nested(outer, inner)?;
    let attempts = default_max_attempts(spec.n());
    let state: NestedState = run_parallel(outer, workers, seed, |rng, _, s: &mut NestedState| {
        let a = sample_balanced(spec, rng, attempts)?;
        let mut wins = 0;
        for _ in 0..inner {
            let b = sample_balanced(spec, rng, attempts)?;
            match margin(&a, &b)? {
                m if m > 0 => wins += 1,
                0 => s.degenerate += 1,
                _ => {}
            }
        }
        s.record(wins, inner);
        Ok(())
    })?;
    Ok(state.summary(inner))
}

/// Nested estimate of `Y = Pr[A beats both B and C | B, C]`.
pub fn estimate_nested_y(
    spec: &IntervalSpec,
    outer: u64,
    inner: u64,
    seed: u64,
    workers: usize,
) -> Result<NestedSummary> {
    check_nested(outer, inner)?;
    let attempts = default_max_attempts(spec.n());
    let state: NestedState = run_parallel(outer, workers, seed, |rng, _, s: &mut NestedState| {
        let b = sample_balanced(spec, rng, attempts)?;
        let c = sample_balanced(spec, rng, attempts)?;
        let mut wins = 0;
        for _ in 0..inner {
            let a = sample_balanced(spec, rng, attempts)?;
            let (mb, mc) = (margin(&a, &b)?, margin(&a, &c)?);
            if mb == 0 || mc == 0 {
                s.degenerate += 1;
            } else if mb > 0 && mc > 0 {
                wins += 1;
            }
        }
        s.record(wins, inner);
        Ok(())
    })?;
    Ok(state.summary(inner))
}

/// Residuals of the two linear identities between 3- and 4-dice class
/// probabilities:
/// `P3line - (P4line + P4cycle/2 + 3 P1cycle/4)` and
/// `Pcycle - (P4cycle/2 + P1cycle/4)`.
pub fn identity_residuals(p3: [f64; 2], p4: [f64; 3]) -> [f64; 2] {
    let [t3, c3] = p3;
    let [t4, one, sq] = p4;
    [t3 - (t4 + 0.5 * sq + 0.75 * one), c3 - (0.5 * sq + 0.25 * one)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub residual: f64,
    pub se: f64,
    /// `|residual| > 4 se`.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub transitive: IdentityCheck,
    pub cycle: IdentityCheck,
}

/// Both identity residuals for independent 3- and 4-dice estimates.
pub fn identity_report(est3: &TournamentEstimate, est4: &TournamentEstimate) -> Result<IdentityReport> {
    if est3.dice != 3 || est4.dice != 4 {
        return Err(Error::InvalidArgument("identity_report needs a 3-dice and a 4-dice estimate".into()));
    }
    if est3.n != est4.n {
        return Err(Error::DimensionMismatch {
            left: est3.n,
            right: est4.n,
        });
    }
    let p3 = [est3.probabilities[0], est3.probabilities[1]];
    let p4 = [est4.probabilities[0], est4.probabilities[1], est4.probabilities[2]];
    let r = identity_residuals(p3, p4);
    let check = |residual: f64, c3: &[f64], c4: &[f64]| {
        let se = (est3.linear_se(c3).powi(2) + est4.linear_se(c4).powi(2)).sqrt();
        IdentityCheck {
            residual,
            se,
            flagged: residual.abs() > 4.0 * se,
        }
    };
    Ok(IdentityReport {
        transitive: check(r[0], &[1.0, 0.0], &[1.0, 0.75, 0.5]),
        cycle: check(r[1], &[0.0, 1.0], &[0.0, 0.25, 0.5]),
    })
}
