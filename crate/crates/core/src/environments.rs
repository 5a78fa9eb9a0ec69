//! Seeded synthetic environments.
//!
//! Every stream is a pure function of its [`StreamSpec`] (including the seed)
//! and, for the Rademacher adversary, the discount schedule. Randomness comes
//! from `ChaCha8Rng` (rand_chacha 0.9) seeded with `seed_from_u64`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conformal::RadiusLoss;
use crate::schedules::{effective_horizon, DiscountSchedule};
use crate::vector::{check_vector, dot, norm};
use crate::{Error, Result};

/// Name and version of the generator behind every stream.
pub const PRNG: &str = "rand_chacha::ChaCha8Rng 0.9";

/// A convex loss that can be evaluated anywhere, kept as data so ledgers can
/// be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `⟨g, x⟩`.
    Linear { g: Vec<f64> },
    /// `scale·‖x − center‖`.
    Distance { center: Vec<f64>, scale: f64 },
    /// A radius loss around `r_star`; one-dimensional.
    Radius { loss: RadiusLoss, r_star: f64 },
}

impl LossSpec {
    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Linear { g } => g.len(),
            LossSpec::Distance { center, .. } => center.len(),
            LossSpec::Radius { .. } => 1,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_vector(x, self.dim())?;
        Ok(match self {
            LossSpec::Linear { g } => dot(g, x),
            LossSpec::Distance { center, scale } => scale * distance(x, center),
            LossSpec::Radius { loss, r_star } => loss.eval(x[0], *r_star)?.value,
        })
    }

    /// A subgradient at `x`; zero at the kink of a distance loss.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_vector(x, self.dim())?;
        Ok(match self {
            LossSpec::Linear { g } => g.clone(),
            LossSpec::Distance { center, scale } => {
                let d = distance(x, center);
                if d == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().zip(center).map(|(a, c)| scale * (a - c) / d).collect()
                }
            }
            LossSpec::Radius { loss, r_star } => vec![loss.eval(x[0], *r_star)?.subgradient],
        })
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: usize,
    pub optimum: Vec<f64>,
    /// Gradient norm of the segment's losses.
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    Sudden,
    Gradual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamKind {
    /// `g_t = L·ε_t·u/‖u‖` with `L = √(V/H_T)` and fair random signs.
    Rademacher {
        u: Vec<f64>,
        /// Variance budget `V`; defaults to `G²·H_T`.
        #[serde(default)]
        budget: Option<f64>,
        #[serde(default = "unit")]
        lipschitz: f64,
    },
    /// Distance losses whose optimum jumps between segments. The last
    /// segment extends to the horizon.
    PiecewiseLinear { segments: Vec<Segment> },
    /// Linear losses with gradient coordinates `±bound/√dim`. Each block of
    /// `switch_period` rounds draws a bias `b ∈ [−1, 1]^dim` and coordinate
    /// `i` is positive with probability `(1 + b_i)/2`.
    BiasedSigns {
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "unit")]
        bound: f64,
        #[serde(default)]
        switch_period: Option<usize>,
    },
    /// Optimal radii `r*_t = |level_t + noise_scale·Z_t|`.
    ///
    /// Round `t` lies in block `k = (t − 1) / shift_period`. Sudden mode uses
    /// `levels[k mod n]` for the whole block; gradual mode interpolates
    /// linearly from `levels[k mod n]` to `levels[(k + 1) mod n]`.
    QuantileShift {
        mode: ShiftMode,
        shift_period: usize,
        levels: Vec<f64>,
        #[serde(default)]
        noise_scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    #[serde(flatten)]
    pub kind: StreamKind,
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
}

/// One round of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Round {
    Loss { loss: LossSpec },
    Radius { r_star: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub rounds: Vec<Round>,
    /// Largest emitted `r*`; never shown to learners.
    pub hidden_ceiling: Option<f64>,
}

impl Stream {
    /// Writes one JSON object per round.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for round in &self.rounds {
            serde_json::to_writer(&mut out, round)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

impl StreamSpec {
    pub fn is_radius(&self) -> bool {
        matches!(self.kind, StreamKind::QuantileShift { .. })
    }

    /// Dimension of the decision variable.
    pub fn dim(&self) -> usize {
        match &self.kind {
            StreamKind::Rademacher { u, .. } => u.len(),
            StreamKind::PiecewiseLinear { segments } => segments.first().map_or(0, |s| s.optimum.len()),
            StreamKind::BiasedSigns { dim, .. } => *dim,
            StreamKind::QuantileShift { .. } => 1,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        StreamSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match &self.kind {
            StreamKind::Rademacher { u, lipschitz, .. } => {
                check_vector(u, u.len())?;
                if norm(u) == 0.0 {
                    return Err(Error::config("rademacher direction u must be nonzero"));
                }
                positive("lipschitz", *lipschitz)?;
            }
            StreamKind::PiecewiseLinear { segments } => {
                let dim = self.dim();
                if segments.is_empty() || dim == 0 {
                    return Err(Error::config("piecewise stream needs nonempty segments"));
                }
                for s in segments {
                    check_vector(&s.optimum, dim)?;
                    if !(s.bound >= 0.0 && s.bound.is_finite()) {
                        return Err(Error::config(format!("segment bound must be >= 0, got {}", s.bound)));
                    }
                    if s.duration == 0 {
                        return Err(Error::config("segment duration must be positive"));
                    }
                }
            }
            StreamKind::BiasedSigns { dim, bound, switch_period } => {
                if *dim == 0 || *switch_period == Some(0) {
                    return Err(Error::config("biased sign stream needs dim >= 1 and switch_period >= 1"));
                }
                positive("bound", *bound)?;
            }
            StreamKind::QuantileShift { shift_period, levels, noise_scale, .. } => {
                if *shift_period == 0 || levels.is_empty() {
                    return Err(Error::config("quantile stream needs shift_period >= 1 and some levels"));
                }
                if levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return Err(Error::config("levels must be finite and >= 0"));
                }
                if !(*noise_scale >= 0.0 && noise_scale.is_finite()) {
                    return Err(Error::config("noise_scale must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Materializes the stream.
    pub fn generate(&self, schedule: &DiscountSchedule) -> Result<Stream> {
        self.validate()?;
        let rounds: Vec<Round> = match &self.kind {
            StreamKind::Rademacher { .. } => rademacher_stream(self, schedule)?
                .into_iter()
                .map(|g| Round::Loss { loss: LossSpec::Linear { g } })
                .collect(),
            StreamKind::QuantileShift { .. } => {
                let radii = quantile_shift_stream(self)?;
                let ceiling = radii.iter().cloned().fold(0.0, f64::max);
                return Ok(Stream {
                    rounds: radii.into_iter().map(|r_star| Round::Radius { r_star }).collect(),
                    hidden_ceiling: Some(ceiling),
                });
            }
            StreamKind::PiecewiseLinear { .. } | StreamKind::BiasedSigns { .. } => loss_stream(self)?
                .into_iter()
                .map(|loss| Round::Loss { loss })
                .collect(),
        };
        Ok(Stream {
            rounds,
            hidden_ceiling: None,
        })
    }
}

/// Amplitude `L = √(V / H_T)` of the Rademacher adversary.
pub fn rademacher_amplitude(budget: f64, lipschitz: f64, schedule: &DiscountSchedule, horizon: usize) -> Result<f64> {
    let h = effective_horizon(schedule, horizon)?;
    if !(budget > 0.0 && budget <= lipschitz * lipschitz * h * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "variance budget {budget} outside (0, G²·H_T] = (0, {}]",
            lipschitz * lipschitz * h
        )));
    }
    Ok((budget / h).sqrt())
}

/// Gradients of the Rademacher lower-bound adversary.
pub fn rademacher_stream(spec: &StreamSpec, schedule: &DiscountSchedule) -> Result<Vec<Vec<f64>>> {
    let StreamKind::Rademacher { u, budget, lipschitz } = &spec.kind else {
        return Err(Error::usage("not a rademacher stream"));
    };
    spec.validate()?;
    let h = effective_horizon(schedule, spec.horizon)?;
    let budget = budget.unwrap_or(lipschitz * lipschitz * h);
    let amplitude = rademacher_amplitude(budget, *lipschitz, schedule, spec.horizon)?;
    let n = norm(u);
    let direction: Vec<f64> = u.iter().map(|v| v / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.horizon)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            direction.iter().map(|d| sign * amplitude * d).collect()
        })
        .collect())
}

/// `level_t` of a quantile-shift stream at round `t >= 1`.
pub fn shift_level(mode: ShiftMode, shift_period: usize, levels: &[f64], t: usize) -> f64 {
    let block = (t - 1) / shift_period;
    let current = levels[block % levels.len()];
    match mode {
        ShiftMode::Sudden => current,
        ShiftMode::Gradual => {
            let next = levels[(block + 1) % levels.len()];
            let frac = ((t - 1) % shift_period) as f64 / shift_period as f64;
            current + (next - current) * frac
        }
    }
}

/// Optimal radii `r*_1, …, r*_T`.
pub fn quantile_shift_stream(spec: &StreamSpec) -> Result<Vec<f64>> {
    let StreamKind::QuantileShift { mode, shift_period, levels, noise_scale } = &spec.kind else {
        return Err(Error::usage("not a quantile shift stream"));
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((1..=spec.horizon)
        .map(|t| {
            let z: f64 = rng.sample(StandardNormal);
            (shift_level(*mode, *shift_period, levels, t) + noise_scale * z).abs()
        })
        .collect())
}

/// Losses of the piecewise and biased-sign streams.
pub fn loss_stream(spec: &StreamSpec) -> Result<Vec<LossSpec>> {
    spec.validate()?;
    match &spec.kind {
        StreamKind::PiecewiseLinear { segments } => {
            let mut out = Vec::with_capacity(spec.horizon);
            let mut idx = 0;
            let mut left = segments[0].duration;
            for _ in 0..spec.horizon {
                if left == 0 && idx + 1 < segments.len() {
                    idx += 1;
                    left = segments[idx].duration;
                }
                left = left.saturating_sub(1);
                let s = &segments[idx];
                out.push(LossSpec::Distance { center: s.optimum.clone(), scale: s.bound });
            }
            Ok(out)
        }
        StreamKind::BiasedSigns { dim, bound, switch_period } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let period = switch_period.unwrap_or(spec.horizon);
            let magnitude = bound / (*dim as f64).sqrt();
            let mut bias = vec![0.0; *dim];
            Ok((0..spec.horizon)
                .map(|t| {
                    if t % period == 0 {
                        bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..=1.0));
                    }
                    let g = bias
                        .iter()
                        .map(|b| {
                            let up = rng.random::<f64>() < 0.5 * (1.0 + b);
                            if up { magnitude } else { -magnitude }
                        })
                        .collect();
                    LossSpec::Linear { g }
                })
                .collect())
        }
        _ => Err(Error::usage("stream does not emit loss functions")),
    }
}
