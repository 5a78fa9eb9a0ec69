//! Discount schedules and the discounted moments derived from them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest admissible discount; restarts use it in place of an exact zero.
pub const DEFAULT_FLOOR: f64 = 1e-12;

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// How the raw discount sequence is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `λ_t = lambda` for every `t`.
    Constant { lambda: f64 },
    /// Each `(start, lambda)` applies from index `start` until the next
    /// segment. Indices before the first segment use `1`.
    Piecewise { segments: Vec<(usize, f64)> },
    /// `lambda` everywhere, except that history preceding each listed round
    /// `r` is wiped: `λ_{r-1}` is replaced by the floor.
    Restart {
        lambda: f64,
        restarts: BTreeSet<usize>,
    },
    /// `λ_t = values[t]`; indices past the end reuse the last value.
    Explicit { values: Vec<f64> },
}

/// A sequence `λ_0, λ_1, …` of strictly positive discount factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl DiscountSchedule {
    pub fn constant(lambda: f64) -> Self {
        Self::new(ScheduleKind::Constant { lambda })
    }

    pub fn unit() -> Self {
        Self::constant(1.0)
    }

    pub fn new(kind: ScheduleKind) -> Self {
        DiscountSchedule {
            kind,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Checks that every raw value is finite and nonnegative and that the
    /// floor is positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::config(format!("schedule floor must be positive, got {}", self.floor)));
        }
        let raw: Vec<f64> = match &self.kind {
            ScheduleKind::Constant { lambda } | ScheduleKind::Restart { lambda, .. } => vec![*lambda],
            ScheduleKind::Piecewise { segments } => segments.iter().map(|s| s.1).collect(),
            ScheduleKind::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::config("explicit schedule needs at least one value"));
                }
                values.clone()
            }
        };
        if let Some(bad) = raw.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::config(format!("discount factors must be finite and >= 0, got {bad}")));
        }
        if let ScheduleKind::Piecewise { segments } = &self.kind {
            if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::config("piecewise segment starts must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// `λ_t`, never below the floor.
    pub fn lambda(&self, t: usize) -> f64 {
        let raw = match &self.kind {
            ScheduleKind::Constant { lambda } => *lambda,
            ScheduleKind::Piecewise { segments } => segments
                .iter()
                .take_while(|(start, _)| *start <= t)
                .last()
                .map_or(1.0, |(_, l)| *l),
            ScheduleKind::Restart { lambda, restarts } => {
                if restarts.contains(&(t + 1)) {
                    0.0
                } else {
                    *lambda
                }
            }
            ScheduleKind::Explicit { values } => values
                .get(t)
                .or(values.last())
                .copied()
                .unwrap_or(1.0),
        };
        raw.max(self.floor)
    }

    /// The constant value, if the schedule is constant.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            ScheduleKind::Constant { lambda } => Some(lambda.max(self.floor)),
            _ => None,
        }
    }
}

/// `H_t = Σ_{i=1}^t Π_{j=i}^{t-1} λ_j²`, via `H_t = λ_{t-1}² H_{t-1} + 1`.
pub fn effective_horizon(schedule: &DiscountSchedule, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::domain("effective horizon is defined for t >= 1"));
    }
    Ok((1..=t).fold(0.0, |h, round| {
        let l = schedule.lambda(round - 1);
        l * l * h + 1.0
    }))
}

/// `Π_{t=from}^{to-1} λ_t`; equal to one on an empty range.
pub fn forgetting_multiplier(schedule: &DiscountSchedule, from: usize, to: usize) -> Result<f64> {
    if from > to {
        return Err(Error::domain(format!("inverted range {from}..{to}")));
    }
    Ok((from..to).map(|t| schedule.lambda(t)).product())
}

/// Running effective horizon, discounted variance and discounted Lipschitz
/// constant of a gradient sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscountedMoments {
    /// Effective horizon `H_t`.
    pub horizon: f64,
    /// `V_t = λ_{t-1}² V_{t-1} + ‖g_t‖²`.
    pub variance: f64,
    /// `G_t = max(λ_{t-1} G_{t-1}, ‖g_t‖)`.
    pub lipschitz: f64,
}

impl DiscountedMoments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds in round `t`'s gradient norm with the discount `λ_{t-1}`.
    pub fn update(&self, g_norm: f64, lambda_prev: f64) -> Result<Self> {
        if !(g_norm >= 0.0 && g_norm.is_finite()) {
            return Err(Error::domain(format!("gradient norm must be finite and >= 0, got {g_norm}")));
        }
        if !(lambda_prev > 0.0 && lambda_prev.is_finite()) {
            return Err(Error::domain(format!("discount must be positive, got {lambda_prev}")));
        }
        let l2 = lambda_prev * lambda_prev;
        Ok(DiscountedMoments {
            horizon: l2 * self.horizon + 1.0,
            variance: l2 * self.variance + g_norm * g_norm,
            lipschitz: (lambda_prev * self.lipschitz).max(g_norm),
        })
    }
}
