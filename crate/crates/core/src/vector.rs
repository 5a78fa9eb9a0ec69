//! Discounted learner on `R^d` by polar decomposition.
//!
//! The prediction is `bias + w·y`, where `y >= 0` comes from a hinted
//! [`ScalarLearner`] and `w` from a discounted AdaGrad learner on the unit
//! ball. Both halves see the gradient after it is clipped to the previous
//! discounted hint.
//!
//! The sub-learners receive the same `λ_{t-1}` that updates the shared hint.

use serde::{Deserialize, Serialize};

use crate::scalar::{Prediction, ScalarLearner};
use crate::{Error, Result};

/// Diameter `D` of the unit ball searched by the direction learner.
pub const BALL_DIAMETER: f64 = 2.0;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_vector(g: &[f64], dim: usize) -> Result<()> {
    if g.len() != dim {
        return Err(Error::domain(format!("expected dimension {dim}, got {}", g.len())));
    }
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("vector has non-finite component {bad}")));
    }
    Ok(())
}

/// OGD with rate `D/√V_t` on the unit ball, `D = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallLearner {
    pub w: Vec<f64>,
    pub variance: f64,
}

impl BallLearner {
    pub fn new(dim: usize) -> Self {
        BallLearner {
            w: vec![0.0; dim],
            variance: 0.0,
        }
    }

    pub fn step(&mut self, g: &[f64], lambda_prev: f64) -> Result<()> {
        check_vector(g, self.w.len())?;
        if !(lambda_prev > 0.0 && lambda_prev.is_finite()) {
            return Err(Error::domain(format!("discount must be positive, got {lambda_prev}")));
        }
        let g2 = dot(g, g);
        self.variance = lambda_prev * lambda_prev * self.variance + g2;
        if self.variance == 0.0 {
            return Ok(());
        }
        let eta = BALL_DIAMETER / self.variance.sqrt();
        for (w, g) in self.w.iter_mut().zip(g) {
            *w -= eta * g;
        }
        let n = norm(&self.w);
        if n > 1.0 {
            self.w.iter_mut().for_each(|w| *w /= n);
        }
        Ok(())
    }
}

/// What one [`VectorLearner::update`] fed to its sub-learners.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorUpdateRecord {
    pub g_clip: Vec<f64>,
    /// `⟨g_clip, w⟩`, the magnitude learner's gradient.
    pub magnitude_gradient: f64,
    pub hint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorLearner {
    pub mag: ScalarLearner,
    pub ball: BallLearner,
    pub h: f64,
    pub bias: Vec<f64>,
}

impl VectorLearner {
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        Self::with_bias(vec![0.0; dim], eps)
    }

    pub fn with_bias(bias: Vec<f64>, eps: f64) -> Result<Self> {
        if bias.is_empty() {
            return Err(Error::domain("dimension must be positive"));
        }
        check_vector(&bias, bias.len())?;
        Ok(VectorLearner {
            mag: ScalarLearner::hinted(eps)?,
            ball: BallLearner::new(bias.len()),
            h: 0.0,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn magnitude(&self) -> Prediction {
        self.mag.predict()
    }

    pub fn predict(&self) -> Vec<f64> {
        let y = self.mag.predict().x;
        self.bias.iter().zip(&self.ball.w).map(|(b, w)| b + w * y).collect()
    }

    /// Feeds round `t`'s gradient together with `λ_{t-1}`.
    pub fn update(&mut self, g: &[f64], lambda_prev: f64) -> Result<VectorUpdateRecord> {
        check_vector(g, self.dim())?;
        if !(lambda_prev > 0.0 && lambda_prev.is_finite()) {
            return Err(Error::domain(format!("discount must be positive, got {lambda_prev}")));
        }
        let bound = lambda_prev * self.h;
        let hint = bound.max(norm(g));
        let scale = if hint == 0.0 { 0.0 } else { bound / hint };
        let g_clip: Vec<f64> = g.iter().map(|v| v * scale).collect();
        let magnitude_gradient = dot(&g_clip, &self.ball.w);

        self.mag.update(magnitude_gradient, lambda_prev, Some(hint))?;
        self.ball.step(&g_clip, lambda_prev)?;
        self.h = hint;
        Ok(VectorUpdateRecord {
            g_clip,
            magnitude_gradient,
            hint,
        })
    }
}
