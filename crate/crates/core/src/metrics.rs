//! Run ledgers and the statistics computed from them.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environments::LossSpec;
use crate::harness::LearnerSpec;
use crate::{Error, Result};

pub const LEDGER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerMeta {
    pub schema_version: u32,
    /// Learner id from the config.
    pub algorithm: String,
    pub learner: LearnerSpec,
    /// SHA-256 of the environment and schedule, hex encoded.
    pub spec_hash: String,
    /// Seed of the stream this run saw.
    pub seed: u64,
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Largest `r*` of a radius stream; recorded for bound checks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_ceiling: Option<f64>,
    #[serde(default)]
    pub saturations: u64,
    #[serde(default)]
    pub guard_firings: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// Prediction `x_t` (or `[r_t]`).
    pub x: Vec<f64>,
    /// Gradient revealed at `x_t`.
    pub g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_value: Option<f64>,
    /// `λ_{t-1}` revealed after the gradient.
    pub lambda_prev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_star: Option<f64>,
    /// `1[r_t <= r*_t]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub meta: LedgerMeta,
    pub rounds: Vec<RoundRecord>,
}

impl RunLedger {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.meta)?;
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let body = self.to_jsonl()?;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::config(format!("{} is empty", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let meta: LedgerMeta = serde_json::from_str(&first)?;
        if meta.schema_version != LEDGER_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "{} has schema version {}, expected {LEDGER_SCHEMA_VERSION}",
                path.display(),
                meta.schema_version
            )));
        }
        let mut rounds = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                rounds.push(serde_json::from_str(&line)?);
            }
        }
        Ok(RunLedger { meta, rounds })
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.lambda_prev).collect()
    }

    pub fn gradient_norms(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| crate::vector::norm(&r.g)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    /// `l_t(x_t) − l_t(u)` from the recorded losses.
    Exact,
    /// `⟨g_t, x_t − u⟩`.
    Linearized,
}

/// `R_t = λ_{t-1}·R_{t-1} + terms[t]`, with `lambdas_prev[t]` the discount
/// revealed in the same round.
pub fn discounted_sum(terms: &[f64], lambdas_prev: &[f64]) -> f64 {
    terms.iter().zip(lambdas_prev).fold(0.0, |acc, (term, l)| l * acc + term)
}

/// Per-round regret terms against `u`.
pub fn regret_terms(rounds: &[RoundRecord], u: &[f64], mode: RegretMode) -> Result<Vec<f64>> {
    rounds
        .iter()
        .map(|r| {
            if r.x.len() != u.len() {
                return Err(Error::domain(format!(
                    "comparator has dimension {}, predictions have {}",
                    u.len(),
                    r.x.len()
                )));
            }
            match mode {
                RegretMode::Linearized => Ok(r.g.iter().zip(r.x.iter().zip(u)).map(|(g, (x, u))| g * (x - u)).sum()),
                RegretMode::Exact => {
                    let loss = r
                        .loss
                        .as_ref()
                        .ok_or_else(|| Error::usage(format!("round {} has no recorded loss", r.t)))?;
                    Ok(loss.value(&r.x)? - loss.value(u)?)
                }
            }
        })
        .collect()
}

/// Discounted regret against `u` using the ledger's own discounts.
pub fn discounted_regret(ledger: &RunLedger, u: &[f64], mode: RegretMode) -> Result<f64> {
    Ok(discounted_sum(&regret_terms(&ledger.rounds, u, mode)?, &ledger.lambdas()))
}

/// Exponentially weighted average comparator loss
/// `Σ_t w_t l_t(u) / Σ_t w_t` with `w_t = Π_{i=t}^{T-1} λ_i`.
pub fn comparator_window_loss(ledger: &RunLedger, u: &[f64]) -> Result<f64> {
    if ledger.rounds.is_empty() {
        return Err(Error::domain("ledger has no rounds"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in &ledger.rounds {
        let loss = r
            .loss
            .as_ref()
            .ok_or_else(|| Error::usage(format!("round {} has no recorded loss", r.t)))?;
        num = r.lambda_prev * num + loss.value(u)?;
        den = r.lambda_prev * den + 1.0;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageMetrics {
    pub avg_coverage: f64,
    /// Coverage over the forward windows `t..t+k-1`, `t = 1..=T-k+1`.
    pub local_coverage: Vec<f64>,
    pub avg_width: f64,
    pub local_width: Vec<f64>,
    /// `(1 − α)` empirical quantile of `r*` over each window.
    pub best_local_width: Vec<f64>,
    /// `max_t |α − mean err over window t|`.
    pub lce: f64,
}

/// Coverage and width statistics of a conformal run.
pub fn coverage_metrics(ledger: &RunLedger, k: usize, alpha: f64) -> Result<CoverageMetrics> {
    let t = ledger.horizon();
    if k == 0 || k > t {
        return Err(Error::domain(format!("window {k} outside 1..={t}")));
    }
    let mut errs = Vec::with_capacity(t);
    let mut widths = Vec::with_capacity(t);
    let mut radii = Vec::with_capacity(t);
    for r in &ledger.rounds {
        match (r.err, r.r_star, r.x.as_slice()) {
            (Some(e), Some(star), [width]) => {
                errs.push(f64::from(e));
                widths.push(*width);
                radii.push(star);
            }
            _ => return Err(Error::usage(format!("round {} lacks conformal fields", r.t))),
        }
    }
    let windows = |xs: &[f64]| -> Vec<f64> {
        let mut prefix = vec![0.0; xs.len() + 1];
        for (i, x) in xs.iter().enumerate() {
            prefix[i + 1] = prefix[i] + x;
        }
        (0..=xs.len() - k).map(|i| (prefix[i + k] - prefix[i]) / k as f64).collect()
    };
    let local_err = windows(&errs);
    let lce = local_err.iter().map(|e| (alpha - e).abs()).fold(0.0, f64::max);
    let rank = (((1.0 - alpha) * k as f64).ceil() as usize).clamp(1, k) - 1;
    let best_local_width = radii
        .windows(k)
        .map(|w| {
            let mut sorted = w.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted[rank]
        })
        .collect();
    Ok(CoverageMetrics {
        avg_coverage: 1.0 - errs.iter().sum::<f64>() / t as f64,
        local_coverage: local_err.iter().map(|e| 1.0 - e).collect(),
        avg_width: widths.iter().sum::<f64>() / t as f64,
        local_width: windows(&widths),
        best_local_width,
        lce,
    })
}
