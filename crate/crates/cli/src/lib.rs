//! Command-line surface of dicelab: argument parsing, dispatch to the
//! library and report serialization.
//!
//! Every run produces a [`ReportEnvelope`]: the resolved configuration, the
//! tool version, the wall time and a JSON results payload. JSON is the
//! canonical format; CSV output is the payload flattened to `key,value`
//! rows with the same number formatting.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use dicelab::acceptance::{correction_discrepancy, edgeworth_sup_error, run_all, run_criterion, AcceptanceConfig};
use dicelab::charfn::{
    check_decay_box, check_e_to_mod1_pair, check_e_to_mod1_quad, check_exp_nq_approx, check_exp_nq_approx_real,
    check_fhat_moments, check_interpolation_a, check_large_gamma, check_lipschitz, conditional_clt_compare,
    fhat_exact, ghat, qr_decompose_with, ConditioningMode, GridSpec, ViolationReport,
};
use dicelab::dice::{default_max_attempts, rescale, sample_balanced, sample_iid, IntervalSpec};
use dicelab::edgeworth::{
    edgeworth_density, simple_integrals_table, uniform_sum_density, CorrectionOrder, DensityBackend,
    DirectCorrection,
};
use dicelab::gstats::{moments_closed_form, moments_quadrature, GMoments};
use dicelab::mc::{available_workers, run_parallel, Accumulator, ChaCha8Rng, Mergeable, RngStream, Z95};
use dicelab::tournaments::{estimate_nested_x, estimate_nested_y, estimate_tournament3, estimate_tournament4};

/// Version of the JSON layout.
pub const SCHEMA: u32 = 1;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "DICELAB_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Library(dicelab::Error),
    Io(std::io::Error),
    Format(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Library(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
            Self::Format(m) => write!(f, "serialization error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dicelab::Error> for CliError {
    fn from(e: dicelab::Error) -> Self {
        Self::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Format(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Format(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Face interval preset, or `custom:z1,z2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntervalArg {
    Unit,
    Wide,
    Symmetric,
    Custom { z1: f64, z2: f64 },
}

impl IntervalArg {
    pub fn spec(&self, n: usize) -> dicelab::Result<IntervalSpec> {
        match *self {
            Self::Unit => IntervalSpec::unit(n),
            Self::Wide => IntervalSpec::wide(n),
            Self::Symmetric => IntervalSpec::symmetric(n),
            Self::Custom { z1, z2 } => IntervalSpec::new(z1, z2, n),
        }
    }
}

fn parse_interval(s: &str) -> Result<IntervalArg, String> {
    match s {
        "unit" => Ok(IntervalArg::Unit),
        "wide" => Ok(IntervalArg::Wide),
        "symmetric" => Ok(IntervalArg::Symmetric),
        _ => {
            let rest = s
                .strip_prefix("custom:")
                .ok_or_else(|| format!("unknown interval '{s}' (unit, wide, symmetric or custom:z1,z2)"))?;
            let (a, b) = rest.split_once(',').ok_or("custom interval must be custom:z1,z2")?;
            let z1: f64 = a.trim().parse().map_err(|_| format!("bad z1 '{a}'"))?;
            let z2: f64 = b.trim().parse().map_err(|_| format!("bad z2 '{b}'"))?;
            if !(z1.is_finite() && z2.is_finite() && z1 < z2) {
                return Err(format!("custom interval needs finite z1 < z2, got {z1}, {z2}"));
            }
            Ok(IntervalArg::Custom { z1, z2 })
        }
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err("grid is ALPHA_STEPS,BETA_STEPS,GAMMA_STEPS[,GAMMA_MAX]".into());
    }
    let steps = |p: &str| p.parse::<usize>().map_err(|_| format!("bad grid step count '{p}'"));
    let gamma_max = match parts.get(3) {
        Some(p) => p.parse::<f64>().map_err(|_| format!("bad gamma max '{p}'"))?,
        None => 0.5,
    };
    Ok(GridSpec {
        alpha_steps: steps(parts[0])?,
        beta_steps: steps(parts[1])?,
        gamma_steps: steps(parts[2])?,
        gamma_max,
    })
}

fn parse_sweep_entry(p: &str) -> Result<usize, String> {
    match p.trim().parse::<usize>() {
        Ok(n) if n >= 2 => Ok(n),
        _ => Err(format!("sweep entries must be integers >= 2, got '{p}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct CommonArgs {
    /// Faces per die.
    #[arg(long, global = true, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    /// Monte Carlo trials (dice, tournaments or roll vectors, per subcommand).
    #[arg(long, global = true, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// unit, wide, symmetric or custom:z1,z2.
    #[arg(long, global = true, default_value = "symmetric", value_parser = parse_interval)]
    pub interval: IntervalArg,
    /// Worker threads; defaults to $DICELAB_WORKERS, then to all hardware threads.
    #[arg(long, global = true, env = WORKERS_ENV, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Exit with status 2 when the run's acceptance threshold is violated.
    #[arg(long = "assert", global = true)]
    pub assert_thresholds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum MomentStat {
    VarA,
    CvASq,
    CvAbSq,
    VarASq,
    SupA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum NestedStat {
    /// `X = Pr[A beats B | A]`.
    X,
    /// `Y = Pr[A beats B and C | B, C]`.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum EdgeworthCheck {
    SimpleIntegrals,
    Density,
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum CharfnCheck {
    Bounds,
    Decay,
    Point,
}

#[derive(Debug, Clone, Serialize, Subcommand)]
pub enum Command {
    /// Sample one die.
    Sample {
        /// Plain iid faces instead of a balanced die.
        #[arg(long)]
        iid: bool,
    },
    /// Class probabilities of 3-dice tournaments.
    Tournament3,
    /// Class probabilities of 4-dice tournaments.
    Tournament4 {
        /// Comma-separated face counts; runs one estimate per entry.
        #[arg(long, value_parser = parse_sweep_entry, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        /// Write `(n, P_transitive)` plot data for the sweep to this CSV.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Averages of a second-moment statistic over random balanced dice.
    Moments {
        #[arg(long, value_enum, default_value_t = MomentStat::VarA)]
        stat: MomentStat,
    },
    /// Nested conditional estimators.
    Nested {
        #[arg(long, value_enum, default_value_t = NestedStat::Y)]
        stat: NestedStat,
        #[arg(long, default_value_t = 2000)]
        outer: u64,
        #[arg(long, default_value_t = 500)]
        inner: u64,
    },
    /// Edgeworth expansion, correction factors and integral tables.
    Edgeworth {
        #[arg(long, value_enum, default_value_t = EdgeworthCheck::SimpleIntegrals)]
        check: EdgeworthCheck,
        /// Expansion order (0, 2 or 4).
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Free faces of the correction factor.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Write `(x, edgeworth, exact)` density plot data to this CSV.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Characteristic-function evaluations and bound checks (dice on [0, n]).
    Charfn {
        #[arg(long, value_enum, default_value_t = CharfnCheck::Bounds)]
        check: CharfnCheck,
        /// Random die pairs.
        #[arg(long, default_value_t = 20)]
        pairs: u64,
        /// ALPHA_STEPS,BETA_STEPS,GAMMA_STEPS[,GAMMA_MAX] for the decay check.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<GridSpec>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        gamma: f64,
    },
    /// Conditioned roll vectors against the Gaussian orthant probability.
    Cltcompare {
        #[arg(long, default_value_t = 1)]
        pairs: u64,
        /// Accept iid roll vectors whose sum is within this distance of the
        /// target instead of sampling the conditioned law exactly.
        #[arg(long)]
        window: Option<f64>,
    },
    /// End-to-end acceptance criteria.
    Acceptance {
        /// Run a single criterion.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=13))]
        criterion: Option<u32>,
        /// Multiplier on every trial count (thresholds assume 1).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sample { .. } => "sample",
            Self::Tournament3 => "tournament3",
            Self::Tournament4 { .. } => "tournament4",
            Self::Moments { .. } => "moments",
            Self::Nested { .. } => "nested",
            Self::Edgeworth { .. } => "edgeworth",
            Self::Charfn { .. } => "charfn",
            Self::Cltcompare { .. } => "cltcompare",
            Self::Acceptance { .. } => "acceptance",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "dicelab", version, about = "Experiments on random balanced dice")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub interval: IntervalArg,
    pub z1: f64,
    pub z2: f64,
    pub workers: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
    #[serde(rename = "assert")]
    pub assert_thresholds: bool,
}

impl ExperimentConfig {
    pub fn spec(&self) -> dicelab::Result<IntervalSpec> {
        self.interval.spec(self.n)
    }
}

/// Parses `argv` (including the program name). `--help` and `--version`
/// come back as usage errors carrying the rendered text.
pub fn parse_args<I, T>(argv: I) -> CliResult<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.render().to_string()))?;
    let c = cli.common;
    let n = c.n as usize;
    let spec = c.interval.spec(n).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Command::Acceptance { scale, .. } = cli.command {
        if scale.is_nan() || scale <= 0.0 {
            return Err(CliError::Usage(format!("--scale must be positive, got {scale}")));
        }
    }
    if let Command::Cltcompare { window: Some(eps), .. } = cli.command {
        if eps.is_nan() || eps <= 0.0 {
            return Err(CliError::Usage(format!("--window must be positive, got {eps}")));
        }
    }
    if let Command::Nested { outer, inner, .. } = cli.command {
        if outer < 2 || inner < 2 {
            return Err(CliError::Usage("--outer and --inner must be at least 2".into()));
        }
    }
    Ok(ExperimentConfig {
        command: cli.command,
        n,
        trials: c.trials,
        seed: c.seed,
        interval: c.interval,
        z1: spec.z1(),
        z2: spec.z2(),
        workers: c.workers.map(|w| w as usize).unwrap_or_else(available_workers),
        format: c.format,
        out: c.out,
        assert_thresholds: c.assert_thresholds,
    })
}

/// Result of an acceptance threshold attached to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub schema: u32,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
    pub assertion: Option<Assertion>,
    pub results: Value,
}

impl ReportEnvelope {
    /// True when `--assert` was given and the threshold failed.
    pub fn assertion_failed(&self) -> bool {
        self.config.assert_thresholds && self.assertion.as_ref().is_some_and(|a| !a.passed)
    }
}

/// Version string of the form `dicelab-cli vX.Y.Z`.
pub fn version_string() -> String {
    format!("dicelab-cli v{}", env!("CARGO_PKG_VERSION"))
}

struct Outcome {
    results: Value,
    assertion: Option<Assertion>,
    warnings: Vec<String>,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self {
            results,
            assertion: None,
            warnings: Vec::new(),
        }
    }

    fn assert(mut self, passed: bool, message: String) -> Self {
        self.assertion = Some(Assertion { passed, message });
        self
    }
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> CliResult<ReportEnvelope> {
    let start = Instant::now();
    let mut outcome = match &config.command {
        Command::Sample { iid } => run_sample(config, *iid)?,
        Command::Tournament3 => run_tournament3(config)?,
        Command::Tournament4 { sweep, plot } => run_tournament4(config, sweep.as_deref(), plot.as_deref())?,
        Command::Moments { stat } => run_moments(config, *stat)?,
        Command::Nested { stat, outer, inner } => run_nested(config, *stat, *outer, *inner)?,
        Command::Edgeworth { check, order, k, plot } => run_edgeworth(config, *check, *order, *k, plot.as_deref())?,
        Command::Charfn {
            check,
            pairs,
            grid,
            alpha,
            beta,
            gamma,
        } => run_charfn(config, *check, *pairs, grid.unwrap_or_default(), [*alpha, *beta, *gamma])?,
        Command::Cltcompare { pairs, window } => run_cltcompare(config, *pairs, *window)?,
        Command::Acceptance { criterion, scale } => run_acceptance(config, *criterion, *scale)?,
    };
    if matches!(config.command, Command::Tournament3 | Command::Tournament4 { .. }) && config.n.is_multiple_of(2) {
        outcome
            .warnings
            .push(format!("n = {} is even: ties between balanced dice have positive probability", config.n));
    }
    Ok(ReportEnvelope {
        schema: SCHEMA,
        version: version_string(),
        command: config.command.name().to_string(),
        config: config.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
        warnings: outcome.warnings,
        assertion: outcome.assertion,
        results: outcome.results,
    })
}

fn run_sample(config: &ExperimentConfig, iid: bool) -> CliResult<Outcome> {
    let spec = config.spec()?;
    let mut rng = RngStream::new(config.seed, 0).rng();
    let die = if iid {
        sample_iid(&spec, &mut rng)
    } else {
        sample_balanced(&spec, &mut rng, 100 * default_max_attempts(config.n))?
    };
    Ok(Outcome::new(json!({
        "faces": die.faces(),
        "face_sum": die.face_sum(),
        "balance_target": spec.balance_target(),
        "balanced": die.is_balanced(),
    })))
}

fn run_tournament3(config: &ExperimentConfig) -> CliResult<Outcome> {
    let est = estimate_tournament3(&config.spec()?, config.trials, config.seed, config.workers)?;
    let p = est.probability("cycle").unwrap_or(f64::NAN);
    let se = est.se("cycle").unwrap_or(f64::NAN);
    let tol = 4.0 * se + 0.02;
    let passed = (p - 0.25).abs() <= tol;
    Ok(Outcome::new(serde_json::to_value(&est)?)
        .assert(passed, format!("|P_cycle - 1/4| = {:.5}, tolerance {tol:.5}", (p - 0.25).abs())))
}

fn run_tournament4(config: &ExperimentConfig, sweep: Option<&[usize]>, plot: Option<&Path>) -> CliResult<Outcome> {
    let ns: Vec<usize> = sweep.map(<[usize]>::to_vec).unwrap_or_else(|| vec![config.n]);
    let mut estimates = Vec::new();
    let mut series = PlotSeries::new(&["n", "p_transitive"]);
    let mut passed = true;
    let mut messages = Vec::new();
    for &n in &ns {
        let spec = config.interval.spec(n)?;
        let est = estimate_tournament4(&spec, config.trials, config.seed, config.workers)?;
        let p = est.probability("transitive").unwrap_or(f64::NAN);
        let se = est.se("transitive").unwrap_or(f64::NAN);
        let sigmas = (p - 0.375) / se;
        passed &= sigmas >= 3.0;
        messages.push(format!("n={n}: P_transitive - 3/8 = {sigmas:.1} SE"));
        series.push(vec![n as f64, p]);
        estimates.push(est);
    }
    if let Some(path) = plot {
        emit_plot_data(&series, path)?;
    }
    let results = if sweep.is_some() {
        serde_json::to_value(&estimates)?
    } else {
        serde_json::to_value(&estimates[0])?
    };
    Ok(Outcome::new(results).assert(passed, messages.join("; ")))
}

fn moments_for(a: &dicelab::Die, b: &dicelab::Die) -> dicelab::Result<GMoments> {
    if a.spec().is_symmetric_unit_variance() {
        moments_closed_form(a, b)
    } else {
        moments_quadrature(a, b)
    }
}

fn run_moments(config: &ExperimentConfig, stat: MomentStat) -> CliResult<Outcome> {
    let spec = config.spec()?;
    let attempts = default_max_attempts(config.n);
    let acc: Accumulator = run_parallel(config.trials, config.workers, config.seed, |rng, _, s: &mut Accumulator| {
        let a = sample_balanced(&spec, rng, attempts)?;
        let value = match stat {
            MomentStat::CvAbSq => {
                let b = sample_balanced(&spec, rng, attempts)?;
                moments_for(&a, &b)?.cv_ab.powi(2)
            }
            _ => {
                let m = moments_for(&a, &a)?;
                match stat {
                    MomentStat::VarA => m.var_a,
                    MomentStat::CvASq => m.cv_a.powi(2),
                    MomentStat::VarASq => m.var_a.powi(2),
                    _ => m.sup_a,
                }
            }
        };
        s.push(value);
        Ok(())
    })?;
    let n = config.n as f64;
    // leading-order references and relative tolerances
    let reference = match stat {
        MomentStat::VarA => Some((n / 15.0, 0.05)),
        MomentStat::CvASq if spec.is_symmetric_unit_variance() => Some((n / 60.0, 0.05)),
        MomentStat::CvAbSq => Some((11.0 * n * n / 12600.0, 0.10)),
        _ => None,
    };
    let report = acc.report(Z95);
    let mut results = json!({
        "stat": stat,
        "n": config.n,
        "dice": acc.count(),
        "mean": report.point,
        "se": report.se,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "min": acc.min(),
        "max": acc.max(),
    });
    let mut outcome_assert = None;
    if let Some((r, tol)) = reference {
        let ratio = report.point / r;
        results["reference"] = json!(r);
        results["ratio_to_reference"] = json!(ratio);
        outcome_assert = Some(((ratio - 1.0).abs() <= tol, format!("mean / reference = {ratio:.4}, tolerance {tol}")));
    }
    let mut out = Outcome::new(results);
    if let Some((p, m)) = outcome_assert {
        out = out.assert(p, m);
    }
    Ok(out)
}

fn run_nested(config: &ExperimentConfig, stat: NestedStat, outer: u64, inner: u64) -> CliResult<Outcome> {
    let spec = config.spec()?;
    let (summary, factor, implied) = match stat {
        NestedStat::X => (estimate_nested_x(&spec, outer, inner, config.seed, config.workers)?, 3.0, "p_transitive_3"),
        NestedStat::Y => (estimate_nested_y(&spec, outer, inner, config.seed, config.workers)?, 6.0, "p_transitive_4"),
    };
    let implied_report = summary.second_moment.scaled(factor);
    Ok(Outcome::new(json!({
        "stat": stat,
        "summary": summary,
        implied: implied_report,
    })))
}

fn run_edgeworth(
    config: &ExperimentConfig,
    check: EdgeworthCheck,
    order: usize,
    k: usize,
    plot: Option<&Path>,
) -> CliResult<Outcome> {
    match check {
        EdgeworthCheck::SimpleIntegrals => {
            let rows = simple_integrals_table();
            let passed = rows.iter().all(|r| r.pass);
            let msg = format!("{} rows, {} failing", rows.len(), rows.iter().filter(|r| !r.pass).count());
            Ok(Outcome::new(json!({ "rows": rows })).assert(passed && rows.len() == 17, msg))
        }
        EdgeworthCheck::Density => {
            let n = config.n;
            let sup_error = edgeworth_sup_error(n, order)?;
            let sup_error_order0 = edgeworth_sup_error(n, 0)?;
            if let Some(path) = plot {
                let s = (n as f64).sqrt();
                let mut series = PlotSeries::new(&["x", "edgeworth", "exact"]);
                for i in 0..=600 {
                    let x = -3.0 + i as f64 / 100.0;
                    series.push(vec![x, edgeworth_density(n, x, order)?, s * uniform_sum_density(n, s * x)]);
                }
                emit_plot_data(&series, path)?;
            }
            let improvement = sup_error_order0 / sup_error;
            let out = Outcome::new(json!({
                "n": n,
                "order": order,
                "sup_error": sup_error,
                "sup_error_order0": sup_error_order0,
                "improvement": improvement,
            }));
            Ok(if order > 0 {
                out.assert(improvement >= 10.0, format!("order {order} improves the sup error {improvement:.1}x"))
            } else {
                out
            })
        }
        EdgeworthCheck::Correction => {
            let n = config.n;
            let direct = DirectCorrection::new(n, k, DensityBackend::Exact)?;
            let order = CorrectionOrder::best_for(k);
            let closed = dicelab::edgeworth::CorrectionFactor::new(n, k, order)?;
            let half = k as f64 * 3f64.sqrt();
            let mut worst: f64 = 0.0;
            let points: Vec<Value> = (0..=20)
                .map(|i| {
                    let x = -half + 2.0 * half * i as f64 / 20.0;
                    let (d, c) = (direct.eval(x), closed.eval(x));
                    worst = worst.max((d - c).abs());
                    json!({ "x": x, "direct": d, "closed": c })
                })
                .collect();
            let mut results = json!({ "n": n, "k": k, "closed_order": order, "max_gap": worst, "points": points });
            if k <= 2 && 2 * n <= dicelab::edgeworth::IRWIN_HALL_MAX_N + k {
                let shrink = correction_discrepancy(n)? / correction_discrepancy(2 * n)?;
                results["gap_shrink_on_doubling"] = json!(shrink);
            }
            Ok(Outcome::new(results))
        }
    }
}

fn violation_json(r: &ViolationReport) -> Value {
    json!(r)
}

fn run_charfn(
    config: &ExperimentConfig,
    check: CharfnCheck,
    pairs: u64,
    grid: GridSpec,
    point: [f64; 3],
) -> CliResult<Outcome> {
    let n = config.n;
    // the characteristic function is defined on [0, n]; other intervals are mapped there
    let wide = IntervalSpec::wide(n)?;
    let spec = config.spec()?;
    let draw_pair = |p: u64| -> dicelab::Result<(dicelab::Die, dicelab::Die, ChaCha8Rng)> {
        let mut rng = RngStream::new(config.seed, p).rng();
        let a = rescale(&sample_balanced(&spec, &mut rng, 100 * default_max_attempts(n))?, &wide)?;
        let b = rescale(&sample_balanced(&spec, &mut rng, 100 * default_max_attempts(n))?, &wide)?;
        Ok((a, b, rng))
    };
    match check {
        CharfnCheck::Bounds => {
            let samples = config.trials as usize;
            let mut totals = [ViolationReport::default(); 4];
            for p in 0..pairs {
                let (a, b, mut rng) = draw_pair(p)?;
                totals[0].merge(check_large_gamma(&a, &b, samples, &mut rng)?);
                totals[1].merge(check_lipschitz(&a, &b, samples, &mut rng)?);
                totals[2].merge(check_interpolation_a(&a, &b, 0.5, samples, &mut rng)?);
                totals[3].merge(check_fhat_moments(&a, &b, samples, &mut rng)?);
            }
            let mut rng = RngStream::new(config.seed, pairs).rng();
            let exp_c = check_exp_nq_approx(samples, &mut rng);
            let exp_r = check_exp_nq_approx_real(samples, &mut rng);
            let mod1_pair = check_e_to_mod1_pair(samples, &mut rng);
            let mod1_quad = check_e_to_mod1_quad(samples, &mut rng);
            let all = [totals[0], totals[1], totals[2], totals[3], exp_c, exp_r, mod1_pair, mod1_quad];
            let violations: u64 = all.iter().map(|r| r.violations).sum();
            Ok(Outcome::new(json!({
                "pairs": pairs,
                "samples_per_check": samples,
                "large_gamma": violation_json(&totals[0]),
                "lipschitz": violation_json(&totals[1]),
                "interpolation_a": violation_json(&totals[2]),
                "fhat_moments": violation_json(&totals[3]),
                "exp_nq_complex": violation_json(&exp_c),
                "exp_nq_real": violation_json(&exp_r),
                "e_to_mod1_pair": violation_json(&mod1_pair),
                "e_to_mod1_quad": violation_json(&mod1_quad),
            }))
            .assert(violations == 0, format!("{violations} violations")))
        }
        CharfnCheck::Decay => {
            let mut reports = Vec::new();
            let mut violating = 0;
            for p in 0..pairs {
                let (a, b, _) = draw_pair(p)?;
                let r = check_decay_box(&a, &b, &grid)?;
                if r.violated() {
                    violating += 1;
                }
                reports.push(r);
            }
            let fraction = violating as f64 / pairs.max(1) as f64;
            Ok(Outcome::new(json!({
                "grid": grid,
                "pairs": pairs,
                "violating_pairs": violating,
                "violating_fraction": fraction,
                "reports": reports,
            }))
            .assert(fraction <= 0.1, format!("violating-pair fraction {fraction:.3}")))
        }
        CharfnCheck::Point => {
            let (a, b, _) = draw_pair(0)?;
            let m = moments_quadrature(&a, &b)?;
            let [alpha, beta, gamma] = point;
            let f = fhat_exact(&a, &b, alpha, beta, gamma)?;
            let qr = qr_decompose_with(&a, &b, &m, alpha, beta, gamma)?;
            Ok(Outcome::new(json!({
                "alpha": alpha,
                "beta": beta,
                "gamma": gamma,
                "fhat_re": f.re,
                "fhat_im": f.im,
                "fhat_abs": f.norm(),
                "ghat": ghat(&m, n, alpha, beta, gamma),
                "q": qr.q,
                "r_abs": qr.r_actual.norm(),
                "r_bound": qr.r_bound,
            })))
        }
    }
}

fn run_cltcompare(config: &ExperimentConfig, pairs: u64, window: Option<f64>) -> CliResult<Outcome> {
    let spec = config.spec()?;
    let n = config.n;
    let mode = match window {
        Some(eps) => ConditioningMode::Window { eps },
        None => ConditioningMode::Exact,
    };
    let mut comparisons = Vec::new();
    let mut within = 0;
    for p in 0..pairs {
        let mut rng = RngStream::new(config.seed, u64::MAX - p).rng();
        let a = sample_balanced(&spec, &mut rng, 100 * default_max_attempts(n))?;
        let b = sample_balanced(&spec, &mut rng, 100 * default_max_attempts(n))?;
        let r = conditional_clt_compare(&a, &b, config.trials, config.seed.wrapping_add(p), config.workers, mode)?;
        if r.difference.abs() <= 0.05 {
            within += 1;
        }
        comparisons.push(r);
    }
    let needed = (0.9 * pairs as f64).ceil() as u64;
    Ok(Outcome::new(json!({ "pairs": pairs, "within_0_05": within, "comparisons": comparisons }))
        .assert(within >= needed, format!("{within} of {pairs} pairs within 0.05")))
}

fn run_acceptance(config: &ExperimentConfig, criterion: Option<u32>, scale: f64) -> CliResult<Outcome> {
    let cfg = AcceptanceConfig {
        seed: config.seed,
        workers: config.workers,
        scale,
    };
    let outcomes = match criterion {
        Some(id) => vec![run_criterion(id, &cfg)?],
        None => run_all(&cfg)?,
    };
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let mut out = Outcome::new(json!({ "scale": scale, "criteria": outcomes }));
    out.warnings = outcomes.iter().map(|o| o.line()).collect();
    let message = if failed.is_empty() {
        format!("{} criteria passed", outcomes.len())
    } else {
        format!("failed criteria: {failed:?}")
    };
    Ok(out.assert(failed.is_empty(), message))
}

/// Columns of numeric plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }
}

/// Writes `series` as a CSV file with a header row. No plotting is done here.
pub fn emit_plot_data(series: &PlotSeries, path: &Path) -> CliResult<()> {
    if series.rows.is_empty() {
        return Err(CliError::Usage("plot series is empty".into()));
    }
    if let Some(bad) = series.rows.iter().find(|r| r.len() != series.columns.len()) {
        return Err(CliError::Format(format!(
            "plot row has {} values for {} columns",
            bad.len(),
            series.columns.len()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&series.columns)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|&v| format_real(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal form that reads back to the same double (at most 17
/// significant digits), identical to the JSON rendering.
pub fn format_real(v: f64) -> String {
    match serde_json::Number::from_f64(v) {
        Some(num) => num.to_string(),
        None => "null".to_string(),
    }
}

/// Flattens a JSON value into `(dotted.path, scalar)` pairs.
pub fn flatten_json(value: &Value) -> Vec<(String, String)> {
    fn go(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(map) => map.iter().for_each(|(k, x)| go(&key(k), x, out)),
            Value::Array(items) => items.iter().enumerate().for_each(|(i, x)| go(&key(&i.to_string()), x, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    go("", value, &mut out);
    out
}

/// Serializes `report` in the configured format.
pub fn render(report: &ReportEnvelope) -> CliResult<String> {
    match report.config.format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in flatten_json(&serde_json::to_value(report)?) {
                w.write_record([k, v])?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| CliError::Format(e.to_string()))
        }
    }
}

/// Writes the rendered report to `--out` or standard output.
pub fn write_report(report: &ReportEnvelope) -> CliResult<()> {
    let text = render(report)?;
    match &report.config.out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Exit status for a finished run: 2 when an asserted threshold failed.
pub fn exit_code(report: &ReportEnvelope) -> i32 {
    if report.assertion_failed() {
        2
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> CliResult<ExperimentConfig> {
        parse_args(std::iter::once("dicelab").chain(args.iter().copied()))
    }

    #[test]
    fn tournament_defaults() {
        let c = parse(&["tournament4", "--n", "101", "--trials", "100000", "--seed", "42"]).unwrap();
        assert_eq!(c.n, 101);
        assert_eq!(c.trials, 100_000);
        assert_eq!(c.seed, 42);
        assert_eq!(c.format, Format::Json);
        assert!(!c.assert_thresholds);
        assert!(c.workers >= 1);
        assert!(matches!(c.command, Command::Tournament4 { sweep: None, plot: None }));
    }

    #[test]
    fn usage_errors() {
        assert!(matches!(parse(&["tournament3", "--n", "1"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["tournament3", "--bogus"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["tournament3", "--trials", "0"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["frobnicate"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["moments", "--interval", "custom:2,1"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["nested", "--outer", "1"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["sample", "--format", "xml"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn intervals() {
        let c = parse(&["sample", "--interval", "symmetric"]).unwrap();
        assert_eq!(c.z1, -(3f64.sqrt()));
        assert_eq!(c.z2, 3f64.sqrt());
        let c = parse(&["sample", "--interval", "custom:-1,2.5", "--n", "7"]).unwrap();
        assert_eq!((c.z1, c.z2), (-1.0, 2.5));
        let c = parse(&["sample", "--interval", "wide", "--n", "7"]).unwrap();
        assert_eq!((c.z1, c.z2), (0.0, 7.0));
    }

    #[test]
    fn knobs() {
        let c = parse(&["charfn", "--check", "decay", "--grid", "4,5,6,0.3", "--alpha", "-0.2"]).unwrap();
        match c.command {
            Command::Charfn { check, grid: Some(g), alpha, .. } => {
                assert_eq!(check, CharfnCheck::Decay);
                assert_eq!((g.alpha_steps, g.beta_steps, g.gamma_steps, g.gamma_max), (4, 5, 6, 0.3));
                assert_eq!(alpha, -0.2);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse(&["charfn", "--grid", "4,5"]).is_err());
        let c = parse(&["tournament4", "--sweep", "11,21"]).unwrap();
        assert!(matches!(c.command, Command::Tournament4 { sweep: Some(ref s), .. } if s == &vec![11, 21]));
        assert!(parse(&["tournament4", "--sweep", "1,21"]).is_err());
    }

    #[test]
    fn flattening() {
        let v = json!({ "a": [1.5, { "b": "x" }], "c": null, "d": true });
        let flat = flatten_json(&v);
        assert_eq!(
            flat,
            vec![
                ("a.0".to_string(), "1.5".to_string()),
                ("a.1.b".to_string(), "x".to_string()),
                ("c".to_string(), "null".to_string()),
                ("d".to_string(), "true".to_string()),
            ]
        );
    }

    #[test]
    fn real_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 123456789.12345679, f64::MIN_POSITIVE] {
            let s = format_real(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let digits = s.trim_start_matches('-').chars().filter(|c| c.is_ascii_digit()).count();
            assert!(digits <= 17 + 3, "{s}");
        }
        assert_eq!(format_real(f64::NAN), "null");
    }

    #[test]
    fn empty_plot_series_is_rejected() {
        let path = std::env::temp_dir().join("dicelab_empty_plot.csv");
        let series = PlotSeries::new(&["x", "y"]);
        assert!(matches!(emit_plot_data(&series, &path), Err(CliError::Usage(_))));
        let mut ragged = PlotSeries::new(&["x", "y"]);
        ragged.push(vec![1.0]);
        assert!(matches!(emit_plot_data(&ragged, &path), Err(CliError::Format(_))));
        assert!(!path.exists());
    }
}
