//! Reference implementations shared by the integration tests.
//!
//! Everything here is written from the defining formulas and does not call
//! into the library's numerics, so agreement is evidence rather than
//! tautology.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton's method on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

thread_local! {
    static GL16: (Vec<f64>, Vec<f64>) = gauss_legendre(16);
}

/// `∫₀ˣ exp(u²) du` by composite 16-point Gauss-Legendre on panels of width
/// at most 1/8.
pub fn erfi_quadrature(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = x.abs();
    let panels = (a * 8.0).ceil().max(1.0) as usize;
    let width = a / panels as f64;
    let total = GL16.with(|(nodes, weights)| {
        let mut total = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            let half = 0.5 * width;
            let mut panel = 0.0;
            for (n, w) in nodes.iter().zip(weights) {
                let u = mid + half * n;
                panel += w * (u * u).exp();
            }
            total += half * panel;
        }
        total
    });
    total.copysign(x)
}

/// The clipped erfi-potential magnitude learner, written from its pseudocode.
///
/// With `lambda = 1` on every call this is the undiscounted learner.
#[derive(Debug, Clone, Default)]
pub struct MagnitudeOracle {
    pub v: f64,
    pub s: f64,
    pub h: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleStep {
    pub x_tilde: f64,
    pub x: f64,
    pub g_clip: f64,
    /// The out-of-domain branch fired and the surrogate gradient was zeroed.
    pub zeroed: bool,
}

impl MagnitudeOracle {
    pub fn new(eps: f64) -> Self {
        MagnitudeOracle { eps, ..Default::default() }
    }

    pub fn unprojected(&self) -> f64 {
        if self.h == 0.0 {
            return 0.0;
        }
        let r = self.v + 2.0 * self.h * self.s + 16.0 * self.h * self.h;
        let z = self.s / (2.0 * r.sqrt());
        self.eps * erfi_quadrature(z) - self.eps * self.h / r.sqrt() * (z * z).exp()
    }

    pub fn predict(&self) -> f64 {
        self.unprojected().max(0.0)
    }

    /// `guarded = false` always folds in the clipped gradient.
    pub fn step(&mut self, g: f64, lambda: f64, guarded: bool) -> OracleStep {
        let x_tilde = self.unprojected();
        let x = x_tilde.max(0.0);
        let bound = lambda * self.h;
        let g_clip = g.max(-bound).min(bound);
        self.h = bound.max(g.abs());
        let zeroed = g_clip * x_tilde < g_clip * x;
        let g_tilde = if zeroed && guarded { 0.0 } else { g_clip };
        self.v = lambda * lambda * self.v + g_tilde * g_tilde;
        self.s = lambda * self.s - g_tilde;
        OracleStep { x_tilde, x, g_clip, zeroed }
    }
}

/// `Σ_t λ^{T−t} a_t` computed with explicit powers.
pub fn discounted_total(terms: &[f64], lambda: f64) -> f64 {
    let horizon = terms.len() as i32;
    terms
        .iter()
        .enumerate()
        .map(|(i, a)| lambda.powi(horizon - 1 - i as i32) * a)
        .sum()
}

/// Discounted regret of predictions `xs` on linear losses `g_t·x` against `u`.
pub fn linear_regret(gs: &[f64], xs: &[f64], u: f64, lambda: f64) -> f64 {
    let terms: Vec<f64> = gs.iter().zip(xs).map(|(g, x)| g * (x - u)).collect();
    discounted_total(&terms, lambda)
}

/// `H_T` in closed form for constant `λ`.
pub fn horizon_closed_form(lambda: f64, horizon: usize) -> f64 {
    if lambda == 1.0 {
        horizon as f64
    } else {
        (1.0 - lambda.powi(2 * horizon as i32)) / (1.0 - lambda * lambda)
    }
}

/// `V_T = Σ λ^{2(T−t)} g_t²`.
pub fn variance_direct(gs: &[f64], lambda: f64) -> f64 {
    let sq: Vec<f64> = gs.iter().map(|g| g * g).collect();
    discounted_total(&sq, lambda * lambda)
}

/// `G_T = max_t λ^{T−t}|g_t|`.
pub fn lipschitz_direct(gs: &[f64], lambda: f64) -> f64 {
    let horizon = gs.len() as i32;
    gs.iter()
        .enumerate()
        .map(|(i, g)| lambda.powi(horizon - 1 - i as i32) * g.abs())
        .fold(0.0, f64::max)
}

/// Scalar gradient streams with `|g| ≤ 1`. Seeds cycle through uniform noise,
/// blockwise sign bias, and constant-sign blocks so the suite contains both
/// easy and adversarial sequences.
pub fn suite_stream(seed: u64, horizon: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match seed % 3 {
        0 => (0..horizon).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        1 => {
            let mut bias = 0.0;
            (0..horizon)
                .map(|t| {
                    if t % 100 == 0 {
                        bias = rng.random_range(-0.8..=0.8);
                    }
                    let sign = if rng.random::<f64>() < (1.0 + bias) / 2.0 { 1.0 } else { -1.0 };
                    sign * rng.random_range(0.2..=1.0)
                })
                .collect()
        }
        _ => {
            let block = rng.random_range(20..=150);
            let mut sign = 1.0;
            (0..horizon)
                .map(|t| {
                    if t % block == 0 {
                        sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                    sign * rng.random_range(0.5..=1.0)
                })
                .collect()
        }
    }
}

/// Uniform gradients in `[-1, 1]`.
pub fn uniform_stream(seed: u64, horizon: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `|a − b| ≤ tol·max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// Largest `|α − window mean|` over every length-`k` window, scanned directly.
pub fn lce_brute_force(err: &[u8], k: usize, alpha: f64) -> f64 {
    let mut worst = 0.0f64;
    for start in 0..=err.len() - k {
        let sum: u32 = err[start..start + k].iter().map(|e| *e as u32).sum();
        worst = worst.max((alpha - sum as f64 / k as f64).abs());
    }
    worst
}
