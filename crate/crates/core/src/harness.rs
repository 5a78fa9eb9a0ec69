//! Experiment orchestration: config loading, seeded trials, ledgers, bound
//! verdicts and CSV reports.
//!
//! A trial drives one learner through one stream. Each round the learner
//! predicts, the environment reveals the loss (or `r*_t`), the gradient at
//! the prediction is computed, and the learner is updated with `λ_{t-1}`.
//! Trials run on a rayon pool capped by `DISCOUNTED_OCO_THREADS` and are
//! merged in (learner, trial) order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{Domain, OgdLearner, StepRule};
use crate::conformal::{coverage_bound, ConformalLearner, CoverageTracker, RadiusLoss};
use crate::environments::{LossSpec, Round, Stream, StreamSpec};
use crate::metrics::{
    coverage_metrics, discounted_regret, discounted_sum, regret_terms, LedgerMeta, RegretMode, RoundRecord, RunLedger,
    LEDGER_SCHEMA_VERSION,
};
use crate::scalar::{magnitude_bound_inputs, magnitude_regret_bound, ScalarLearner, DEFAULT_EPS, DEFAULT_MAGDIS_V0};
use crate::schedules::{effective_horizon, DiscountSchedule, DiscountedMoments};
use crate::vector::{norm, VectorLearner};
use crate::{Error, Result};

/// Version written in the first column of every CSV report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DISCOUNTED_OCO_THREADS";
/// Discount used for radius streams when the config gives none.
pub const DEFAULT_CONFORMAL_LAMBDA: f64 = 0.999;
/// Relative slack absorbing floating-point rounding in bound comparisons.
const BOUND_RTOL: f64 = 1e-12;

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_v0() -> f64 {
    DEFAULT_MAGDIS_V0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    /// Discounted clipped magnitude learner on `[0, ∞)`.
    MaglD {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Same learner with `λ ≡ 1`.
    Magl {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Unclipped magnitude learner with a positive initial variance.
    Magdis {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_v0")]
        v0: f64,
    },
    /// Polar-decomposition learner on `R^d`.
    Polar {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        bias: Option<Vec<f64>>,
    },
    /// Conformal radius learner.
    Acp {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Conformal radius learner with `λ ≡ 1`.
    AcpUndiscounted {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Projected OGD; `x0` defaults to the projection of the origin.
    Ogd {
        rule: StepRule,
        domain: Domain,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

impl Algorithm {
    /// True when the learner ignores revealed discounts.
    pub fn undiscounted(&self) -> bool {
        matches!(
            self,
            Algorithm::Magl { .. } | Algorithm::AcpUndiscounted { .. } | Algorithm::Ogd { rule: StepRule::Simple { .. }, .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::MaglD { .. } => "magl_d",
            Algorithm::Magl { .. } => "magl",
            Algorithm::Magdis { .. } => "magdis",
            Algorithm::Polar { .. } => "polar",
            Algorithm::Acp { .. } => "acp",
            Algorithm::AcpUndiscounted { .. } => "acp_undiscounted",
            Algorithm::Ogd { .. } => "ogd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub id: String,
    #[serde(flatten)]
    pub algorithm: Algorithm,
    /// Overrides the experiment schedule for this learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<DiscountSchedule>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLossKind {
    #[default]
    Pinball,
    SkewedQuadratic,
}

impl RadiusLossKind {
    pub fn with_alpha(self, alpha: f64) -> RadiusLoss {
        match self {
            RadiusLossKind::Pinball => RadiusLoss::Pinball { alpha },
            RadiusLossKind::SkewedQuadratic => RadiusLoss::SkewedQuadratic { alpha },
        }
    }
}

/// A comparator: a scalar `c` stands for the vector with every coordinate `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Comparator {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Comparator {
    pub fn to_vec(&self, dim: usize) -> Vec<f64> {
        match self {
            Comparator::Scalar(c) => vec![*c; dim],
            Comparator::Vector(v) => v.clone(),
        }
    }

    fn label(&self) -> String {
        match self {
            Comparator::Scalar(c) => format!("{c}"),
            Comparator::Vector(v) => v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub ledgers: bool,
    /// Also write per-window coverage and width tables for radius runs.
    #[serde(default = "yes")]
    pub local_series: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            dir: None,
            ledgers: true,
            local_series: true,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_trials() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.1
}

fn default_windows() -> Vec<usize> {
    vec![1, 50, 500]
}

fn default_lce_window() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub learners: Vec<LearnerSpec>,
    /// The stream's own `seed` is replaced by a per-trial seed.
    pub environment: StreamSpec,
    #[serde(default)]
    pub schedule: Option<DiscountSchedule>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub radius_loss: RadiusLossKind,
    #[serde(default)]
    pub comparator_grid: Vec<Comparator>,
    #[serde(default = "default_windows")]
    pub stability_windows: Vec<usize>,
    #[serde(default = "default_lce_window")]
    pub lce_window: usize,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.learners.is_empty() {
            return Err(Error::config("at least one learner is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let mut ids: Vec<&str> = self.learners.iter().map(|l| l.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("duplicate learner id {}", w[0])));
        }
        self.environment.validate()?;
        let dim = self.environment.dim();
        for c in &self.comparator_grid {
            if c.to_vec(dim).len() != dim {
                return Err(Error::config(format!("comparator {} does not have dimension {dim}", c.label())));
            }
        }
        for learner in &self.learners {
            self.schedule_for(learner).validate()?;
            Runner::build(&learner.algorithm, dim, self.environment.is_radius())
                .map_err(|e| Error::config(format!("learner {}: {e}", learner.id)))?;
        }
        Ok(())
    }

    /// Learner override, else the experiment schedule, else the default for
    /// the stream type.
    pub fn schedule_for(&self, learner: &LearnerSpec) -> DiscountSchedule {
        learner.schedule.clone().or_else(|| self.schedule.clone()).unwrap_or_else(|| {
            if self.environment.is_radius() {
                DiscountSchedule::constant(DEFAULT_CONFORMAL_LAMBDA)
            } else {
                DiscountSchedule::unit()
            }
        })
    }

    /// SHA-256 over the environment and experiment schedule.
    pub fn spec_hash(&self) -> String {
        let canonical = serde_json::to_string(&(&self.environment, &self.schedule)).unwrap_or_default();
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of the stream in trial `trial`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// A live learner of any kind.
#[derive(Debug, Clone)]
pub enum Runner {
    Scalar(ScalarLearner),
    Conformal(ConformalLearner),
    Polar(VectorLearner),
    Ogd(OgdLearner),
}

impl Runner {
    pub fn build(algorithm: &Algorithm, dim: usize, radius: bool) -> Result<Self> {
        let need_dim = |want: usize| {
            if dim == want {
                Ok(())
            } else {
                Err(Error::config(format!("{} needs a {want}-dimensional stream, got {dim}", algorithm.name())))
            }
        };
        Ok(match algorithm {
            Algorithm::MaglD { eps } => {
                need_dim(1)?;
                Runner::Scalar(ScalarLearner::discounted(*eps)?)
            }
            Algorithm::Magl { eps } => {
                need_dim(1)?;
                Runner::Scalar(ScalarLearner::undiscounted(*eps)?)
            }
            Algorithm::Magdis { eps, v0 } => {
                need_dim(1)?;
                Runner::Scalar(ScalarLearner::magdis(*eps, *v0)?)
            }
            Algorithm::Polar { eps, bias } => {
                if radius {
                    return Err(Error::config("polar learner cannot run on a radius stream"));
                }
                let bias = bias.clone().unwrap_or_else(|| vec![0.0; dim]);
                need_dim(bias.len())?;
                Runner::Polar(VectorLearner::with_bias(bias, *eps)?)
            }
            Algorithm::Acp { eps } | Algorithm::AcpUndiscounted { eps } => {
                if !radius {
                    return Err(Error::config(format!("{} needs a radius stream", algorithm.name())));
                }
                Runner::Conformal(match algorithm {
                    Algorithm::Acp { .. } => ConformalLearner::new(*eps)?,
                    _ => ConformalLearner::undiscounted(*eps)?,
                })
            }
            Algorithm::Ogd { rule, domain, x0 } => {
                let x0 = x0.clone().unwrap_or_else(|| vec![0.0; dim]);
                need_dim(x0.len())?;
                Runner::Ogd(OgdLearner::new(x0, domain.clone(), *rule)?)
            }
        })
    }

    pub fn predict(&self) -> Vec<f64> {
        match self {
            Runner::Scalar(l) => vec![l.predict().x],
            Runner::Conformal(l) => vec![l.predict().x],
            Runner::Polar(l) => l.predict(),
            Runner::Ogd(l) => l.predict().to_vec(),
        }
    }

    pub fn update(&mut self, g: &[f64], lambda_prev: f64) -> Result<()> {
        match self {
            Runner::Scalar(l) => l.update(g[0], lambda_prev, None).map(drop),
            Runner::Conformal(l) => l.update(g[0], lambda_prev).map(drop),
            Runner::Polar(l) => l.update(g, lambda_prev).map(drop),
            Runner::Ogd(l) => l.step(g, lambda_prev).map(drop),
        }
    }

    pub fn saturations(&self) -> u64 {
        match self {
            Runner::Scalar(l) => l.saturations,
            Runner::Conformal(l) => l.saturations(),
            Runner::Polar(l) => l.mag.saturations,
            Runner::Ogd(_) => 0,
        }
    }

    pub fn guard_firings(&self) -> u64 {
        match self {
            Runner::Conformal(l) => l.guard_firings,
            _ => 0,
        }
    }
}

/// Per-step wall clock of one trial, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTiming {
    pub mean_ns: f64,
    pub std_ns: f64,
}

/// Runs one learner through a materialized stream.
pub fn run_trial(
    spec: &LearnerSpec,
    stream: &Stream,
    schedule: &DiscountSchedule,
    radius_loss: RadiusLoss,
    meta: LedgerMeta,
) -> Result<(RunLedger, StepTiming)> {
    let dim = match stream.rounds.first() {
        Some(Round::Loss { loss }) => loss.dim(),
        _ => 1,
    };
    let radius = matches!(stream.rounds.first(), Some(Round::Radius { .. }));
    let mut runner = Runner::build(&spec.algorithm, dim, radius)?;
    let mut rounds = Vec::with_capacity(stream.rounds.len());
    let mut times = Vec::with_capacity(stream.rounds.len());
    for (i, round) in stream.rounds.iter().enumerate() {
        let start = Instant::now();
        let x = runner.predict();
        let (loss, r_star) = match round {
            Round::Loss { loss } => (loss.clone(), None),
            Round::Radius { r_star } => (LossSpec::Radius { loss: radius_loss, r_star: *r_star }, Some(*r_star)),
        };
        let g = loss.gradient(&x)?;
        let lambda_prev = schedule.lambda(i);
        runner.update(&g, lambda_prev)?;
        times.push(start.elapsed().as_nanos() as f64);
        let loss_value = loss.value(&x)?;
        rounds.push(RoundRecord {
            t: i + 1,
            err: r_star.map(|star| u8::from(x[0] <= star)),
            x,
            g,
            loss: Some(loss),
            loss_value: Some(loss_value),
            lambda_prev,
            r_star,
        });
    }
    let meta = LedgerMeta {
        saturations: runner.saturations(),
        guard_firings: runner.guard_firings(),
        ..meta
    };
    let (mean_ns, std_ns) = mean_std(&times);
    Ok((RunLedger { meta, rounds }, StepTiming { mean_ns, std_ns }))
}

/// Mean and sample standard deviation; zero spread for fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub learner: String,
    pub trial: usize,
    pub check: String,
    pub u: String,
    pub tau: Option<usize>,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

fn within(measured: f64, bound: f64) -> bool {
    measured <= bound + BOUND_RTOL * bound.abs().max(1.0)
}

fn domain_diameter(domain: &Domain, dim: usize) -> f64 {
    match domain {
        Domain::Interval { lo, hi } => hi.map_or(f64::INFINITY, |hi| (hi - lo) * (dim as f64).sqrt()),
        Domain::Ball { radius, .. } => 2.0 * radius,
        Domain::Unconstrained => f64::INFINITY,
    }
}

/// Re-checks every applicable regret and coverage guarantee on a ledger.
///
/// OGD checks are emitted only when their assumptions hold on the recorded
/// run (gradient norms within `G`, domain diameter within `D`, comparator in
/// the domain).
pub fn verify_bounds(ledger: &RunLedger, grid: &[Comparator], windows: &[usize]) -> Result<Vec<Verdict>> {
    let horizon = ledger.horizon();
    if horizon == 0 {
        return Err(Error::domain("ledger has no rounds"));
    }
    let dim = ledger.rounds[0].x.len();
    let algorithm = &ledger.meta.learner.algorithm;
    let lambdas = if algorithm.undiscounted() {
        vec![1.0; horizon]
    } else {
        ledger.lambdas()
    };
    let norms = ledger.gradient_norms();
    let mut moments = DiscountedMoments::new();
    for (g, l) in norms.iter().zip(&lambdas) {
        moments = moments.update(*g, *l)?;
    }
    let mut out = Vec::new();
    let mut push = |check: &str, u: String, tau: Option<usize>, measured: f64, bound: f64| {
        out.push(Verdict {
            learner: ledger.meta.algorithm.clone(),
            trial: ledger.meta.trial,
            check: check.to_string(),
            u,
            tau,
            measured,
            bound,
            pass: within(measured, bound),
        });
    };
    let regret = |u: &[f64]| -> Result<f64> {
        Ok(discounted_sum(&regret_terms(&ledger.rounds, u, RegretMode::Linearized)?, &lambdas))
    };
    let mut taus: Vec<usize> = windows.iter().map(|t| (*t).clamp(1, horizon)).collect();
    taus.sort_unstable();
    taus.dedup();

    match algorithm {
        Algorithm::MaglD { eps } | Algorithm::Magl { eps } | Algorithm::Acp { eps } | Algorithm::AcpUndiscounted { eps } => {
            let xs: Vec<f64> = ledger.rounds.iter().map(|r| r.x[0]).collect();
            for c in grid {
                let u = c.to_vec(1);
                if u[0] < 0.0 {
                    continue;
                }
                let measured = regret(&u)?;
                for &tau in &taus {
                    let inputs = magnitude_bound_inputs(&norms, &lambdas, &xs, u[0], *eps, tau)?;
                    push("magnitude", c.label(), Some(tau), measured, magnitude_regret_bound(&inputs)?);
                }
            }
        }
        Algorithm::Polar { eps, bias } => {
            let bias = bias.clone().unwrap_or_else(|| vec![0.0; dim]);
            // The bound is stated for the magnitude learner's own predictions,
            // which the ledger does not store; rebuild them from the gradients.
            let mut learner = VectorLearner::with_bias(bias.clone(), *eps)?;
            let mut magnitudes = Vec::with_capacity(horizon);
            for r in &ledger.rounds {
                magnitudes.push(learner.magnitude().x);
                learner.update(&r.g, r.lambda_prev)?;
            }
            for c in grid {
                let u = c.to_vec(dim);
                let radius = norm(&u.iter().zip(&bias).map(|(a, b)| a - b).collect::<Vec<_>>());
                let measured = regret(&u)?;
                for &tau in &taus {
                    let inputs = magnitude_bound_inputs(&norms, &lambdas, &magnitudes, radius, *eps, tau)?;
                    let bound = magnitude_regret_bound(&inputs)? + radius * 1.5 * 2.0 * moments.variance.sqrt();
                    push("polar", c.label(), Some(tau), measured, bound);
                }
            }
        }
        Algorithm::Ogd { rule, domain, .. } => {
            let max_norm = norms.iter().cloned().fold(0.0, f64::max);
            let diameter = domain_diameter(domain, dim);
            let (check, bound) = match *rule {
                StepRule::Horizon { d, g } if within(max_norm, g) && within(diameter, d) => {
                    ("horizon", 1.5 * d * g * moments.horizon.sqrt())
                }
                StepRule::ConstantLr { d, g, lambda }
                    if within(max_norm, g) && within(diameter, d) && lambda < 1.0 && horizon as f64 >= 0.5 / (1.0 - lambda) =>
                {
                    ("constant_lr", 1.5 * d * g / (1.0 - lambda * lambda).sqrt())
                }
                StepRule::AdaGrad { d } if within(diameter, d) => ("adagrad", 1.5 * d * moments.variance.sqrt()),
                StepRule::Simple { scale } if within(diameter, scale) => ("adagrad", 1.5 * scale * moments.variance.sqrt()),
                _ => ("", 0.0),
            };
            if !check.is_empty() {
                for c in grid {
                    let u = c.to_vec(dim);
                    if domain.contains(&u) {
                        push(check, c.label(), None, regret(&u)?, bound);
                    }
                }
            }
        }
        Algorithm::Magdis { .. } => {}
    }

    if let Algorithm::Acp { eps } | Algorithm::AcpUndiscounted { eps } = algorithm {
        let mut learner = match algorithm {
            Algorithm::Acp { .. } => ConformalLearner::new(*eps)?,
            _ => ConformalLearner::undiscounted(*eps)?,
        };
        let mut tracker = CoverageTracker::default();
        for (r, l) in ledger.rounds.iter().zip(&lambdas) {
            learner.update(r.g[0], *l)?;
            tracker.update(r.g[0], *l);
        }
        let ceiling = ledger
            .meta
            .hidden_ceiling
            .ok_or_else(|| Error::usage("conformal ledger lacks the hidden ceiling"))?;
        let bound = coverage_bound(learner.v_clip(), learner.g_max(), ceiling, *eps)?;
        push("coverage", String::new(), None, tracker.value.abs(), bound);
        push("guard", String::new(), None, ledger.meta.guard_firings as f64, 0.0);
    }
    Ok(out)
}

/// Result of re-deriving predictions from a ledger's gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub rounds: usize,
    /// Rounds (1-based) whose replayed prediction differs bitwise.
    pub mismatches: Vec<usize>,
}

pub fn replay(ledger: &RunLedger) -> Result<ReplayReport> {
    let dim = ledger.rounds.first().map_or(1, |r| r.x.len());
    let radius = ledger.rounds.first().is_some_and(|r| r.r_star.is_some());
    let mut runner = Runner::build(&ledger.meta.learner.algorithm, dim, radius)?;
    let mut mismatches = Vec::new();
    for r in &ledger.rounds {
        if runner.predict() != r.x {
            mismatches.push(r.t);
        }
        runner.update(&r.g, r.lambda_prev)?;
    }
    Ok(ReplayReport {
        rounds: ledger.rounds.len(),
        mismatches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub learner: String,
    pub algorithm: String,
    pub trials: usize,
    pub horizon: usize,
    pub avg_coverage_mean: Option<f64>,
    pub avg_coverage_std: Option<f64>,
    pub avg_width_mean: Option<f64>,
    pub avg_width_std: Option<f64>,
    pub lce_mean: Option<f64>,
    pub lce_std: Option<f64>,
    pub step_ns_mean: f64,
    pub step_ns_std: f64,
    pub saturations: u64,
    pub guard_firings: u64,
    pub verdicts: usize,
    pub verdict_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub schema_version: u32,
    pub learner: String,
    pub trial: usize,
    pub u: String,
    pub regret_linearized: f64,
    pub regret_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub schema_version: u32,
    pub learner: String,
    pub trial: usize,
    pub check: String,
    pub u: String,
    pub tau: Option<usize>,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl From<&Verdict> for VerdictRow {
    fn from(v: &Verdict) -> Self {
        VerdictRow {
            schema_version: REPORT_SCHEMA_VERSION,
            learner: v.learner.clone(),
            trial: v.trial,
            check: v.check.clone(),
            u: v.u.clone(),
            tau: v.tau,
            measured: v.measured,
            bound: v.bound,
            pass: v.pass,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub ledger: RunLedger,
    pub timing: StepTiming,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// In (learner, trial) order.
    pub outcomes: Vec<TrialOutcome>,
    pub summary: Vec<SummaryRow>,
    pub regret: Vec<RegretRow>,
}

impl ExperimentReport {
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.outcomes.iter().flat_map(|o| o.verdicts.iter())
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().all(|v| v.pass)
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .map_err(|_| Error::config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::config(format!("thread pool: {e}")))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let hash = config.spec_hash();
    let jobs: Vec<(usize, usize)> = (0..config.learners.len())
        .flat_map(|l| (0..config.trials).map(move |t| (l, t)))
        .collect();
    let pool = thread_pool()?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(l, trial)| {
                let spec = &config.learners[l];
                let schedule = config.schedule_for(spec);
                let env = config.environment.with_seed(trial_seed(config.seed, trial));
                let stream = env.generate(&schedule)?;
                let meta = LedgerMeta {
                    schema_version: LEDGER_SCHEMA_VERSION,
                    algorithm: spec.id.clone(),
                    learner: spec.clone(),
                    spec_hash: hash.clone(),
                    seed: env.seed,
                    trial,
                    alpha: config.environment.is_radius().then_some(config.alpha),
                    hidden_ceiling: stream.hidden_ceiling,
                    saturations: 0,
                    guard_firings: 0,
                };
                let loss = config.radius_loss.with_alpha(config.alpha);
                let (ledger, timing) = run_trial(spec, &stream, &schedule, loss, meta)?;
                let verdicts = verify_bounds(&ledger, &config.comparator_grid, &config.stability_windows)?;
                Ok(TrialOutcome { ledger, timing, verdicts })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summary = Vec::new();
    let mut regret = Vec::new();
    for (l, spec) in config.learners.iter().enumerate() {
        let group = &outcomes[l * config.trials..(l + 1) * config.trials];
        let mut coverage = Vec::new();
        let mut width = Vec::new();
        let mut lce = Vec::new();
        for o in group {
            if config.environment.is_radius() {
                let window = config.lce_window.min(o.ledger.horizon());
                let m = coverage_metrics(&o.ledger, window, config.alpha)?;
                coverage.push(m.avg_coverage);
                width.push(m.avg_width);
                lce.push(m.lce);
            }
            let dim = o.ledger.rounds[0].x.len();
            for c in &config.comparator_grid {
                let u = c.to_vec(dim);
                regret.push(RegretRow {
                    schema_version: REPORT_SCHEMA_VERSION,
                    learner: spec.id.clone(),
                    trial: o.ledger.meta.trial,
                    u: c.label(),
                    regret_linearized: discounted_regret(&o.ledger, &u, RegretMode::Linearized)?,
                    regret_exact: discounted_regret(&o.ledger, &u, RegretMode::Exact)?,
                });
            }
        }
        let stat = |xs: &[f64]| if xs.is_empty() { (None, None) } else { let (m, s) = mean_std(xs); (Some(m), Some(s)) };
        let (cov_m, cov_s) = stat(&coverage);
        let (wid_m, wid_s) = stat(&width);
        let (lce_m, lce_s) = stat(&lce);
        let step_means: Vec<f64> = group.iter().map(|o| o.timing.mean_ns).collect();
        let (step_m, step_s) = mean_std(&step_means);
        let verdicts: Vec<&Verdict> = group.iter().flat_map(|o| &o.verdicts).collect();
        summary.push(SummaryRow {
            schema_version: REPORT_SCHEMA_VERSION,
            learner: spec.id.clone(),
            algorithm: spec.algorithm.name().to_string(),
            trials: config.trials,
            horizon: config.environment.horizon,
            avg_coverage_mean: cov_m,
            avg_coverage_std: cov_s,
            avg_width_mean: wid_m,
            avg_width_std: wid_s,
            lce_mean: lce_m,
            lce_std: lce_s,
            step_ns_mean: step_m,
            step_ns_std: step_s,
            saturations: group.iter().map(|o| o.ledger.meta.saturations).sum(),
            guard_firings: group.iter().map(|o| o.ledger.meta.guard_firings).sum(),
            verdicts: verdicts.len(),
            verdict_failures: verdicts.iter().filter(|v| !v.pass).count(),
        });
    }
    Ok(ExperimentReport {
        config: config.clone(),
        outcomes,
        summary,
        regret,
    })
}

pub fn ledger_file_name(learner: &str, trial: usize) -> String {
    format!("{learner}_trial{trial:03}.jsonl")
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes ledgers, `summary.csv`, `regret.csv` (when the grid is nonempty),
/// `verdicts.csv` and, for radius runs, `local/*.csv`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let outputs = &report.config.outputs;
    if outputs.ledgers {
        let ledgers = dir.join("ledgers");
        create_dir(&ledgers)?;
        for o in &report.outcomes {
            let meta = &o.ledger.meta;
            o.ledger.write(&ledgers.join(ledger_file_name(&meta.algorithm, meta.trial)))?;
        }
    }
    write_csv(&dir.join("summary.csv"), &report.summary)?;
    if !report.config.comparator_grid.is_empty() {
        write_csv(&dir.join("regret.csv"), &report.regret)?;
    }
    let verdicts: Vec<VerdictRow> = report.verdicts().map(VerdictRow::from).collect();
    write_verdicts(&dir.join("verdicts.csv"), &verdicts)?;
    if outputs.local_series && report.config.environment.is_radius() {
        let local = dir.join("local");
        create_dir(&local)?;
        for o in &report.outcomes {
            let window = report.config.lce_window.min(o.ledger.horizon());
            let m = coverage_metrics(&o.ledger, window, report.config.alpha)?;
            let rows: Vec<LocalRow> = (0..m.local_coverage.len())
                .map(|i| LocalRow {
                    schema_version: REPORT_SCHEMA_VERSION,
                    t: i + 1,
                    local_coverage: m.local_coverage[i],
                    local_width: m.local_width[i],
                    best_local_width: m.best_local_width[i],
                })
                .collect();
            let name = ledger_file_name(&o.ledger.meta.algorithm, o.ledger.meta.trial).replace(".jsonl", ".csv");
            write_csv(&local.join(name), &rows)?;
        }
    }
    Ok(())
}

/// Writes a verdict table; the header is present even with no rows.
pub fn write_verdicts(path: &Path, rows: &[VerdictRow]) -> Result<()> {
    if rows.is_empty() {
        let header = "schema_version,learner,trial,check,u,tau,measured,bound,pass\n";
        return std::fs::write(path, header).map_err(|e| Error::io(path, e));
    }
    write_csv(path, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LocalRow {
    schema_version: u32,
    t: usize,
    local_coverage: f64,
    local_width: f64,
    best_local_width: f64,
}

/// Reads every `*.jsonl` ledger in `dir`, sorted by file name.
pub fn read_ledgers(dir: &Path) -> Result<Vec<RunLedger>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunLedger::read(p)).collect()
}

/// Effective horizon of a recorded run under its revealed discounts.
pub fn ledger_horizon(ledger: &RunLedger) -> Result<f64> {
    let schedule = DiscountSchedule::new(crate::schedules::ScheduleKind::Explicit { values: ledger.lambdas() });
    effective_horizon(&schedule, ledger.horizon())
}
