//! One-dimensional FTRL magnitude learners on `[0, ∞)`.
//!
//! All variants keep the same sufficient statistics: a discounted variance
//! `v`, a discounted negated gradient sum `s` and a discounted Lipschitz hint
//! `h`. The unprojected prediction is
//!
//! ```text
//! x̃ = ε·erfi(s / 2√R) − ε·h/√R · exp(s² / 4R),   R = v + 2hs + 16h²
//! ```
//!
//! and `x = max(x̃, 0)`. Incoming gradients are clipped to the previous hint
//! (shrunk by the discount), and a gradient that would push an already
//! negative `x̃` further out of the domain is replaced by zero before it
//! reaches the statistics.
//!
//! * [`Variant::Discounted`] uses the revealed discount `λ_{t-1}` everywhere.
//! * [`Variant::Undiscounted`] is the same code path with `λ` forced to 1.
//! * [`Variant::MagDis`] drops the hint and clipping, predicting
//!   `ε·erfi(s / 2√v)` from a strictly positive initial `v`.
//! * [`Variant::Hinted`] skips clipping and takes its next hint from the
//!   caller; it is the magnitude half of [`crate::vector::VectorLearner`].

use serde::{Deserialize, Serialize};

use crate::special::{erfi_flagged, stable_exp};
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1.0;
/// Initial variance of [`Variant::MagDis`].
pub const DEFAULT_MAGDIS_V0: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Discounted,
    Undiscounted,
    MagDis,
    Hinted,
}

/// Output of [`ScalarLearner::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Projected prediction, always `>= 0`.
    pub x: f64,
    pub unprojected: f64,
    /// An exponent hit the clamp; the state is diverging.
    pub saturated: bool,
}

/// Everything that happened inside one [`ScalarLearner::update`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarUpdateRecord {
    pub g: f64,
    pub g_clip: f64,
    /// Gradient actually folded into `(v, s)`; either `0` or `g_clip`.
    pub g_tilde: f64,
    pub x_unprojected: f64,
    pub x: f64,
    /// Discount applied by this update (forced to 1 for the undiscounted variant).
    pub lambda_prev: f64,
}

impl ScalarUpdateRecord {
    /// True when the out-of-domain guard replaced the gradient with zero.
    pub fn surrogate_zeroed(&self) -> bool {
        self.g_tilde != self.g_clip
    }
}

/// State of a 1D magnitude learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarLearner {
    pub v: f64,
    pub s: f64,
    pub h: f64,
    pub eps: f64,
    pub variant: Variant,
    /// Number of updates whose prediction saturated the exponent clamp.
    #[serde(default)]
    pub saturations: u64,
}

impl ScalarLearner {
    pub fn new(variant: Variant, eps: f64) -> Result<Self> {
        if variant == Variant::MagDis {
            return Self::magdis(eps, DEFAULT_MAGDIS_V0);
        }
        check_eps(eps)?;
        Ok(ScalarLearner {
            v: 0.0,
            s: 0.0,
            h: 0.0,
            eps,
            variant,
            saturations: 0,
        })
    }

    pub fn discounted(eps: f64) -> Result<Self> {
        Self::new(Variant::Discounted, eps)
    }

    pub fn undiscounted(eps: f64) -> Result<Self> {
        Self::new(Variant::Undiscounted, eps)
    }

    pub fn hinted(eps: f64) -> Result<Self> {
        Self::new(Variant::Hinted, eps)
    }

    /// [`Variant::MagDis`] with initial variance `v0 > 0`.
    pub fn magdis(eps: f64, v0: f64) -> Result<Self> {
        check_eps(eps)?;
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::domain(format!("magdis initial variance must be positive, got {v0}")));
        }
        Ok(ScalarLearner {
            v: v0,
            s: 0.0,
            h: 0.0,
            eps,
            variant: Variant::MagDis,
            saturations: 0,
        })
    }

    /// `v + 2hs + 16h²`, the quantity under every square root.
    pub fn radicand(&self) -> f64 {
        match self.variant {
            Variant::MagDis => self.v,
            _ => self.v + 2.0 * self.h * self.s + 16.0 * self.h * self.h,
        }
    }

    pub fn predict(&self) -> Prediction {
        if self.variant != Variant::MagDis && self.h == 0.0 {
            return Prediction {
                x: 0.0,
                unprojected: 0.0,
                saturated: false,
            };
        }
        let radicand = self.radicand();
        debug_assert!(radicand > 0.0, "radicand {radicand} in state {self:?}");
        let root = radicand.sqrt();
        let z = self.s / (2.0 * root);
        // z is finite: the update rejects non-finite states.
        let erfi = erfi_flagged(z).expect("finite erfi argument");
        let (unprojected, saturated) = match self.variant {
            Variant::MagDis => (self.eps * erfi.value, erfi.saturated),
            _ => {
                let e = stable_exp(z * z);
                let correction = self.eps * self.h / root * e.value;
                (self.eps * erfi.value - correction, erfi.saturated || e.saturated)
            }
        };
        Prediction {
            x: unprojected.max(0.0),
            unprojected,
            saturated,
        }
    }

    /// Feeds round `t`'s gradient together with the discount `λ_{t-1}`.
    ///
    /// `hint` is the next Lipschitz hint and must be given exactly when the
    /// variant is [`Variant::Hinted`].
    pub fn update(&mut self, g: f64, lambda_prev: f64, hint: Option<f64>) -> Result<ScalarUpdateRecord> {
        self.step(g, lambda_prev, hint, true).map(|(record, _)| record)
    }

    /// Like [`ScalarLearner::update`] but always folds in the clipped
    /// gradient; the flag reports whether the guard condition held.
    pub fn update_unguarded(&mut self, g: f64, lambda_prev: f64) -> Result<(ScalarUpdateRecord, bool)> {
        self.step(g, lambda_prev, None, false)
    }

    fn step(
        &mut self,
        g: f64,
        lambda_prev: f64,
        hint: Option<f64>,
        guarded: bool,
    ) -> Result<(ScalarUpdateRecord, bool)> {
        if !g.is_finite() {
            return Err(Error::domain(format!("gradient must be finite, got {g}")));
        }
        if !(lambda_prev > 0.0 && lambda_prev.is_finite()) {
            return Err(Error::domain(format!("discount must be positive, got {lambda_prev}")));
        }
        match (self.variant, hint) {
            (Variant::Hinted, Some(h)) if !(h >= 0.0 && h.is_finite()) => {
                return Err(Error::domain(format!("hint must be finite and >= 0, got {h}")));
            }
            (Variant::Hinted, None) => return Err(Error::usage("hinted learner requires a hint")),
            (Variant::Hinted, Some(_)) | (_, None) => {}
            (variant, Some(_)) => {
                return Err(Error::usage(format!("{variant:?} learner does not accept a hint")));
            }
        }

        let lambda = if self.variant == Variant::Undiscounted {
            1.0
        } else {
            lambda_prev
        };
        let prediction = self.predict();
        if prediction.saturated {
            self.saturations += 1;
        }

        let (g_clip, next_h) = match self.variant {
            Variant::Discounted | Variant::Undiscounted => {
                let bound = lambda * self.h;
                (g.clamp(-bound, bound), bound.max(g.abs()))
            }
            Variant::MagDis => (g, 0.0),
            Variant::Hinted => (g, hint.unwrap_or_default()),
        };
        let out_of_domain = g_clip * prediction.unprojected < g_clip * prediction.x;
        let g_tilde = if guarded && out_of_domain { 0.0 } else { g_clip };

        let v = lambda * lambda * self.v + g_tilde * g_tilde;
        let s = lambda * self.s - g_tilde;
        if !(v.is_finite() && s.is_finite()) {
            return Err(Error::domain("learner statistics overflowed"));
        }
        self.v = v;
        self.s = s;
        self.h = next_h;
        if guarded && matches!(self.variant, Variant::Discounted | Variant::Undiscounted) {
            debug_assert!(self.s >= -self.h * (1.0 + 1e-9), "s < -h in {self:?}");
        }

        let record = ScalarUpdateRecord {
            g,
            g_clip,
            g_tilde,
            x_unprojected: prediction.unprojected,
            x: prediction.x,
            lambda_prev: lambda,
        };
        Ok((record, out_of_domain))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("eps must be positive, got {eps}")))
    }
}

/// Inputs of the discounted regret bound for the clipped magnitude learner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MagnitudeBoundInputs {
    /// Discounted gradient variance `V_T`.
    pub variance: f64,
    /// Discounted Lipschitz constant `G_T`.
    pub lipschitz: f64,
    /// Comparator `u >= 0`.
    pub comparator: f64,
    pub eps: f64,
    /// Largest prediction in the last `τ` rounds.
    pub recent_max_x: f64,
    /// `Π_{t=T-τ}^{T-1} λ_t`.
    pub forgetting: f64,
    /// Largest prediction before the last `τ` rounds.
    pub old_max_x: f64,
    /// `G_{T-τ}`.
    pub old_lipschitz: f64,
}

/// `ε√(V + 2GS + 16G²) + u(S + G) + x_recent·G + Πλ · x_old · G_old`, with
/// `S = 8G(1 + √log(2u/ε + 1))² + 2√(V + 16G²)(1 + √log(2u/ε + 1))`.
pub fn magnitude_regret_bound(inputs: &MagnitudeBoundInputs) -> Result<f64> {
    let MagnitudeBoundInputs {
        variance: v,
        lipschitz: g,
        comparator: u,
        eps,
        recent_max_x,
        forgetting,
        old_max_x,
        old_lipschitz,
    } = *inputs;
    let nonneg = [v, g, u, recent_max_x, forgetting, old_max_x, old_lipschitz];
    if nonneg.iter().any(|x| !(*x >= 0.0)) || !(eps > 0.0) {
        return Err(Error::domain(format!("bound inputs must be nonnegative with eps > 0: {inputs:?}")));
    }
    let log_factor = 1.0 + (2.0 * u / eps + 1.0).ln().sqrt();
    let s = 8.0 * g * log_factor * log_factor + 2.0 * (v + 16.0 * g * g).sqrt() * log_factor;
    Ok(eps * (v + 2.0 * g * s + 16.0 * g * g).sqrt()
        + u * (s + g)
        + recent_max_x * g
        + forgetting * old_max_x * old_lipschitz)
}

/// Assembles [`MagnitudeBoundInputs`] from a recorded run.
///
/// `gradient_norms[i]`, `lambdas_prev[i]` and `predictions[i]` belong to
/// round `i + 1`; `lambdas_prev[i]` is therefore `λ_i`. `tau` must lie in
/// `1..=T`.
pub fn magnitude_bound_inputs(
    gradient_norms: &[f64],
    lambdas_prev: &[f64],
    predictions: &[f64],
    comparator: f64,
    eps: f64,
    tau: usize,
) -> Result<MagnitudeBoundInputs> {
    let horizon = gradient_norms.len();
    if lambdas_prev.len() != horizon || predictions.len() != horizon {
        return Err(Error::domain("run columns have different lengths"));
    }
    if tau < 1 || tau > horizon {
        return Err(Error::domain(format!("stability window {tau} outside 1..={horizon}")));
    }
    let split = horizon - tau;
    let mut moments = crate::DiscountedMoments::new();
    let mut old_lipschitz = 0.0;
    for (round, (g, l)) in gradient_norms.iter().zip(lambdas_prev).enumerate() {
        if round == split {
            old_lipschitz = moments.lipschitz;
        }
        moments = moments.update(*g, *l)?;
    }
    let max = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
    Ok(MagnitudeBoundInputs {
        variance: moments.variance,
        lipschitz: moments.lipschitz,
        comparator,
        eps,
        recent_max_x: max(&predictions[split..]),
        forgetting: lambdas_prev[split..].iter().product(),
        old_max_x: max(&predictions[..split]),
        old_lipschitz,
    })
}
