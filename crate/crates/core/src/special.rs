//! Special functions for the erfi-potential learners.
//!
//! `erfi` here is the unnormalized integral `∫₀ˣ exp(u²) du`, which is
//! `√π/2` times the conventional imaginary error function. It equals
//! `exp(x²)·F(x)` where `F` is Dawson's integral.
//!
//! Evaluation uses the Maclaurin series `Σ x^{2n+1} / (n! (2n+1))` for
//! `|x| ≤ 6`. All of its terms share the sign of `x`, so there is no
//! cancellation and the sum keeps full relative precision. Beyond that the
//! asymptotic expansion `exp(x²)/(2x) · Σ (2k-1)!! / (2x²)^k` is used; at
//! `|x| = 6` its smallest term is below `1e-16` relative.

use crate::{Error, Result};

/// Default ceiling applied to exponents before calling `exp`.
pub const EXP_CLAMP: f64 = 700.0;

const SERIES_CUTOVER: f64 = 6.0;
const MAX_TERMS: usize = 1000;

/// A value that may have been computed from a clamped exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturating {
    pub value: f64,
    /// True when an exponent was clamped to [`EXP_CLAMP`].
    pub saturated: bool,
}

impl Saturating {
    fn exact(value: f64) -> Self {
        Saturating {
            value,
            saturated: false,
        }
    }
}

/// `exp(x)` with the argument clamped to [`EXP_CLAMP`].
pub fn stable_exp(x: f64) -> Saturating {
    stable_exp_with(x, EXP_CLAMP)
}

/// `exp(x)` with the argument clamped to `max_exponent`.
pub fn stable_exp_with(x: f64, max_exponent: f64) -> Saturating {
    debug_assert!(!x.is_nan(), "stable_exp called with NaN");
    if x > max_exponent {
        Saturating {
            value: max_exponent.exp(),
            saturated: true,
        }
    } else {
        Saturating::exact(x.exp())
    }
}

/// `∫₀ˣ exp(u²) du`.
pub fn erfi(x: f64) -> Result<f64> {
    erfi_flagged(x).map(|s| s.value)
}

/// Like [`erfi`], also reporting whether the exponential saturated.
pub fn erfi_flagged(x: f64) -> Result<Saturating> {
    if !x.is_finite() {
        return Err(Error::domain(format!("erfi argument must be finite, got {x}")));
    }
    let a = x.abs();
    let magnitude = if a <= SERIES_CUTOVER {
        Saturating::exact(maclaurin(a))
    } else {
        asymptotic(a)
    };
    Ok(Saturating {
        value: magnitude.value.copysign(x),
        saturated: magnitude.saturated,
    })
}

fn maclaurin(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    // power = x^{2n+1} / n!
    let mut power = x;
    let mut sum = x;
    for n in 1..MAX_TERMS {
        power *= x2 / n as f64;
        let term = power / (2 * n + 1) as f64;
        sum += term;
        if n as f64 > x2 && term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> Saturating {
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        let next = term * (2 * k - 1) as f64 * inv;
        if next >= term || next < 1e-17 {
            break;
        }
        term = next;
        sum += term;
    }
    let e = stable_exp(x * x);
    Saturating {
        value: e.value / (2.0 * x) * sum,
        saturated: e.saturated,
    }
}

/// Arguments of the potential `Φ_{h,ε}(v, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialArgs {
    /// Discounted gradient variance.
    pub v: f64,
    /// Discounted negated gradient sum.
    pub s: f64,
    /// Discounted Lipschitz hint.
    pub h: f64,
    /// Confidence hyperparameter.
    pub eps: f64,
}

impl PotentialArgs {
    /// `v + 2hs + 16h²`.
    pub fn radicand(&self) -> f64 {
        self.v + 2.0 * self.h * self.s + 16.0 * self.h * self.h
    }
}

/// The FTRL potential
/// `Φ = ε √R (2 ∫₀^z erfi(u) du − 1)` with `R = v + 2hs + 16h²`, `z = s / (2√R)`.
///
/// The inner integral is `z·erfi(z) − (exp(z²) − 1)/2`. The magnitude
/// learners never call this; its `s`-derivative is their prediction rule.
pub fn potential(args: PotentialArgs) -> Result<f64> {
    let PotentialArgs { v, s, h, eps } = args;
    if !(v >= 0.0 && h > 0.0 && eps > 0.0 && s.is_finite()) {
        return Err(Error::domain(format!(
            "potential requires v >= 0, h > 0, eps > 0 and finite s; got {args:?}"
        )));
    }
    let radicand = args.radicand();
    if radicand <= 0.0 {
        return Err(Error::domain(format!(
            "potential radicand must be positive, got {radicand}"
        )));
    }
    let root = radicand.sqrt();
    let z = s / (2.0 * root);
    let inner = z * erfi(z)? - 0.5 * (stable_exp(z * z).value - 1.0);
    Ok(eps * root * (2.0 * inner - 1.0))
}
