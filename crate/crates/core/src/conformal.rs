//! Online conformal prediction on the radius `r_t ∈ [0, ∞)`.
//!
//! [`ConformalLearner`] runs the clipped scalar learner on subgradients of a
//! [`RadiusLoss`] without the out-of-domain guard. The guard is unnecessary:
//! `r*_t >= 0` makes the subgradient nonpositive whenever `r_t = 0`, so the
//! guard condition cannot hold. The learner still counts any round where it
//! does, so callers can assert the count stays at zero.

use serde::{Deserialize, Serialize};

use crate::scalar::{Prediction, ScalarLearner, ScalarUpdateRecord, Variant};
use crate::schedules::DiscountSchedule;
use crate::{Error, Result};

/// Value and (sub)gradient of a radius loss at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub subgradient: f64,
}

fn check_args(r: f64, r_star: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(r.is_finite() && r_star.is_finite()) {
        return Err(Error::domain(format!("radius arguments must be finite, got r = {r}, r* = {r_star}")));
    }
    Ok(())
}

/// `α(r − r*)` above `r*`, `(α − 1)(r − r*)` at or below it.
pub fn pinball_loss(r: f64, r_star: f64, alpha: f64) -> Result<LossEval> {
    check_args(r, r_star, alpha)?;
    let slope = if r > r_star { alpha } else { alpha - 1.0 };
    Ok(LossEval {
        value: slope * (r - r_star),
        subgradient: slope,
    })
}

/// `½·|α − 1[r ≤ r*]|·(r − r*)²` and its derivative.
pub fn skewed_quadratic_loss(r: f64, r_star: f64, alpha: f64) -> Result<LossEval> {
    check_args(r, r_star, alpha)?;
    let weight = if r > r_star { alpha } else { 1.0 - alpha };
    let d = r - r_star;
    Ok(LossEval {
        value: 0.5 * weight * d * d,
        subgradient: weight * d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusLoss {
    Pinball { alpha: f64 },
    SkewedQuadratic { alpha: f64 },
}

impl RadiusLoss {
    pub fn alpha(&self) -> f64 {
        match *self {
            RadiusLoss::Pinball { alpha } | RadiusLoss::SkewedQuadratic { alpha } => alpha,
        }
    }

    pub fn eval(&self, r: f64, r_star: f64) -> Result<LossEval> {
        match *self {
            RadiusLoss::Pinball { alpha } => pinball_loss(r, r_star, alpha),
            RadiusLoss::SkewedQuadratic { alpha } => skewed_quadratic_loss(r, r_star, alpha),
        }
    }
}

/// Radius learner driven by clipped discounted subgradient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalLearner {
    inner: ScalarLearner,
    /// Rounds where the out-of-domain guard fired; stays zero on valid input.
    pub guard_firings: u64,
}

impl ConformalLearner {
    pub fn new(eps: f64) -> Result<Self> {
        Self::with_variant(Variant::Discounted, eps)
    }

    /// Ignores revealed discounts and runs with `λ ≡ 1`.
    pub fn undiscounted(eps: f64) -> Result<Self> {
        Self::with_variant(Variant::Undiscounted, eps)
    }

    fn with_variant(variant: Variant, eps: f64) -> Result<Self> {
        Ok(ConformalLearner {
            inner: ScalarLearner::new(variant, eps)?,
            guard_firings: 0,
        })
    }

    /// `S*_clip`.
    pub fn s_clip(&self) -> f64 {
        self.inner.s
    }

    /// `V*_clip`.
    pub fn v_clip(&self) -> f64 {
        self.inner.v
    }

    /// `G*`.
    pub fn g_max(&self) -> f64 {
        self.inner.h
    }

    pub fn eps(&self) -> f64 {
        self.inner.eps
    }

    pub fn saturations(&self) -> u64 {
        self.inner.saturations
    }

    pub fn predict(&self) -> Prediction {
        self.inner.predict()
    }

    /// Feeds the subgradient `g*_t` at the current radius with `λ_{t-1}`.
    pub fn update(&mut self, g_star: f64, lambda_prev: f64) -> Result<ScalarUpdateRecord> {
        let (record, out_of_domain) = self.inner.update_unguarded(g_star, lambda_prev)?;
        if out_of_domain {
            self.guard_firings += 1;
        }
        Ok(record)
    }
}

/// Running `S*_t = λ_{t-1}·S*_{t-1} − g*_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTracker {
    pub value: f64,
}

impl CoverageTracker {
    pub fn update(&mut self, g_star: f64, lambda_prev: f64) -> f64 {
        self.value = lambda_prev * self.value - g_star;
        self.value
    }
}

/// `S*_t = −Σ_{i≤t} (Π_{j=i}^{t-1} λ_j)·g*_i` over the first `t` entries.
pub fn discounted_coverage_metric(g_history: &[f64], schedule: &DiscountSchedule, t: usize) -> Result<f64> {
    if t > g_history.len() {
        return Err(Error::domain(format!("t = {t} exceeds history length {}", g_history.len())));
    }
    let mut tracker = CoverageTracker::default();
    for (i, g) in g_history[..t].iter().enumerate() {
        // Round i + 1 is discounted by λ_i.
        tracker.update(*g, schedule.lambda(i));
    }
    Ok(tracker.value)
}

/// `2√V*_clip·(1 + √log(1 + 2D/ε)) + 15·G*·(1 + √log(1 + 2D/ε))²`.
pub fn coverage_bound(v_clip: f64, g_max: f64, d: f64, eps: f64) -> Result<f64> {
    if !(v_clip >= 0.0 && g_max >= 0.0 && d >= 0.0 && eps > 0.0) {
        return Err(Error::domain(format!(
            "coverage bound needs nonnegative V, G, D and eps > 0; got ({v_clip}, {g_max}, {d}, {eps})"
        )));
    }
    let factor = 1.0 + (1.0 + 2.0 * d / eps).ln().sqrt();
    Ok(2.0 * v_clip.sqrt() * factor + 15.0 * g_max * factor * factor)
}
