//! Projected online gradient descent baselines.
//!
//! Every rule takes `x_{t+1} = Π_X(x_t − η_t g_t)` and differs only in `η_t`:
//!
//! | rule | `η_t` |
//! |------|-------|
//! | `constant_lr` | `(D/G)·√(1−λ²)` for a known constant `λ` |
//! | `horizon` | `D / (G·√H_t)` |
//! | `adagrad` | `D / √V_t` |
//! | `simple` | `scale / √Σ‖g‖²` (AdaGrad without discounting) |
//!
//! The AdaGrad-type rules hold position while the variance is zero.

use serde::{Deserialize, Serialize};

use crate::schedules::DiscountedMoments;
use crate::vector::{check_vector, norm};
use crate::{Error, Result};

/// Feasible set with an exact Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Coordinatewise `[lo, hi]`; a missing `hi` means `+∞`.
    Interval {
        lo: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
    Ball { center: Vec<f64>, radius: f64 },
    Unconstrained,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Domain::Interval { lo, hi: Some(hi) }
    }

    pub fn half_line() -> Self {
        Domain::Interval { lo: 0.0, hi: None }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Interval { lo, hi } => {
                let hi = hi.unwrap_or(f64::INFINITY);
                if !(lo.is_finite() && *lo <= hi) {
                    return Err(Error::config(format!("bad interval [{lo}, {hi}]")));
                }
            }
            Domain::Ball { center, radius } => {
                if !(*radius >= 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("ball needs a finite center and radius >= 0"));
                }
            }
            Domain::Unconstrained => {}
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        match self {
            Domain::Interval { lo, hi } => {
                let hi = hi.unwrap_or(f64::INFINITY);
                x.iter_mut().for_each(|v| *v = v.clamp(*lo, hi));
            }
            Domain::Ball { center, radius } => {
                let offset: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let n = norm(&offset);
                if n > *radius {
                    for ((v, o), c) in x.iter_mut().zip(&offset).zip(center) {
                        *v = c + o * radius / n;
                    }
                }
            }
            Domain::Unconstrained => {}
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let mut p = x.to_vec();
        self.project(&mut p);
        p == x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    ConstantLr { d: f64, g: f64, lambda: f64 },
    Horizon { d: f64, g: f64 },
    #[serde(rename = "adagrad")]
    AdaGrad { d: f64 },
    Simple {
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl StepRule {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            StepRule::ConstantLr { d, g, lambda } => {
                positive("D", d)?;
                positive("G", g)?;
                if !(lambda > 0.0 && lambda <= 1.0) {
                    return Err(Error::config(format!("constant rate needs λ in (0, 1], got {lambda}")));
                }
                Ok(())
            }
            StepRule::Horizon { d, g } => positive("D", d).and(positive("G", g)),
            StepRule::AdaGrad { d } => positive("D", d),
            StepRule::Simple { scale } => positive("scale", scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgdLearner {
    pub x: Vec<f64>,
    pub domain: Domain,
    pub rule: StepRule,
    pub moments: DiscountedMoments,
}

impl OgdLearner {
    /// Starts at the projection of `x0` onto `domain`.
    pub fn new(mut x0: Vec<f64>, domain: Domain, rule: StepRule) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::domain("dimension must be positive"));
        }
        check_vector(&x0, x0.len())?;
        domain.validate()?;
        rule.validate()?;
        if let Domain::Ball { center, .. } = &domain {
            if center.len() != x0.len() {
                return Err(Error::config("ball center dimension differs from the iterate"));
            }
        }
        domain.project(&mut x0);
        Ok(OgdLearner {
            x: x0,
            domain,
            rule,
            moments: DiscountedMoments::new(),
        })
    }

    pub fn predict(&self) -> &[f64] {
        &self.x
    }

    /// Feeds round `t`'s gradient together with `λ_{t-1}`; returns `η_t`.
    pub fn step(&mut self, g: &[f64], lambda_prev: f64) -> Result<f64> {
        check_vector(g, self.x.len())?;
        let lambda = match self.rule {
            StepRule::ConstantLr { lambda, .. } if lambda_prev != lambda => {
                return Err(Error::usage(format!(
                    "constant rate was tuned for λ = {lambda} but the schedule revealed {lambda_prev}"
                )));
            }
            StepRule::Simple { .. } => 1.0,
            _ => lambda_prev,
        };
        self.moments = self.moments.update(norm(g), lambda)?;
        let eta = match self.rule {
            StepRule::ConstantLr { d, g, lambda } => d / g * (1.0 - lambda * lambda).sqrt(),
            StepRule::Horizon { d, g } => d / (g * self.moments.horizon.sqrt()),
            StepRule::AdaGrad { d } => adagrad_rate(d, self.moments.variance),
            StepRule::Simple { scale } => adagrad_rate(scale, self.moments.variance),
        };
        if eta != 0.0 {
            for (x, g) in self.x.iter_mut().zip(g) {
                *x -= eta * g;
            }
            self.domain.project(&mut self.x);
        }
        Ok(eta)
    }
}

fn adagrad_rate(d: f64, variance: f64) -> f64 {
    if variance == 0.0 {
        0.0
    } else {
        d / variance.sqrt()
    }
}

/// One step of OGD on `⟨g, x⟩ + (γ/2)‖x‖²`: `(1 − ηγ)x − ηg`.
pub fn l2_regularized_ogd_step(x: &[f64], g: &[f64], eta: f64, gamma: f64) -> Vec<f64> {
    let shrink = 1.0 - eta * gamma;
    x.iter().zip(g).map(|(x, g)| shrink * x - eta * g).collect()
}

/// FTRL with a linear regularizer over discounted gradients:
/// `x_{t+1} = −c·Σ_i λ^{t-i} g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFtrl {
    pub sum: Vec<f64>,
    pub lambda: f64,
    pub c: f64,
}

impl LinearFtrl {
    pub fn new(dim: usize, lambda: f64, c: f64) -> Self {
        LinearFtrl {
            sum: vec![0.0; dim],
            lambda,
            c,
        }
    }

    /// Folds in `g` and returns the next prediction.
    pub fn step(&mut self, g: &[f64]) -> Vec<f64> {
        for (s, g) in self.sum.iter_mut().zip(g) {
            *s = self.lambda * *s + g;
        }
        self.sum.iter().map(|s| -self.c * s).collect()
    }
}
