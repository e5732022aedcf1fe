//! Training objectives: tempered softmax, histogram cross-entropy, the
//! scalar MAE baseline, force MAE and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities inside the logarithm only.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub temperature: f64,
    pub energy_weight: f64,
    pub force_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            energy_weight: 0.7,
            force_weight: 0.3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.energy_weight >= 0.0 && self.force_weight >= 0.0) {
            return Err(Error::InvalidArgument(
                "loss weights must be nonnegative".into(),
            ));
        }
        if (self.energy_weight + self.force_weight - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "loss weights must sum to 1, got {} + {}",
                self.energy_weight, self.force_weight
            )));
        }
        Ok(())
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// `softmax(z / temperature)`, stabilized by subtracting the max logit.
pub fn softmax_with_temperature(z: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if z.is_empty() {
        return Err(Error::InvalidArgument("empty logits".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    Ok(p)
}

/// `-sum p_i ln q_i` with `q_i` floored at [`PROB_FLOOR`].
pub fn cross_entropy(target: &[f64], predicted: &[f64]) -> Result<f64> {
    check_len(target.len(), predicted.len())?;
    Ok(-target
        .iter()
        .zip(predicted)
        .filter(|(p, _)| **p != 0.0)
        .map(|(p, q)| p * q.max(PROB_FLOOR).ln())
        .sum::<f64>())
}

/// Gradient of `cross_entropy(target, softmax(z / t))` with respect to `z`:
/// `(softmax(z / t) - target) / t`.
pub fn cross_entropy_grad_logits(target: &[f64], z: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_len(target.len(), z.len())?;
    let p = softmax_with_temperature(z, temperature)?;
    Ok(p.iter()
        .zip(target)
        .map(|(q, p)| (q - p) / temperature)
        .collect())
}

pub fn mae_loss(e: f64, e_hat: f64) -> f64 {
    (e - e_hat).abs()
}

/// Subgradient of [`mae_loss`] with respect to `e_hat`; zero at the kink.
pub fn mae_grad(e: f64, e_hat: f64) -> f64 {
    let d = e_hat - e;
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over force components.
pub fn force_mae_loss(f: &[f64], f_hat: &[f64]) -> Result<f64> {
    check_len(f.len(), f_hat.len())?;
    if f.is_empty() {
        return Ok(0.0);
    }
    Ok(f.iter().zip(f_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / f.len() as f64)
}

/// Per-component subgradient of [`force_mae_loss`] with respect to `f_hat`.
pub fn force_mae_grad(f: &[f64], f_hat: &[f64]) -> Result<Vec<f64>> {
    check_len(f.len(), f_hat.len())?;
    let n = f.len().max(1) as f64;
    Ok(f.iter()
        .zip(f_hat)
        .map(|(a, b)| mae_grad(*a, *b) / n)
        .collect())
}

pub fn combined_loss(energy_loss: f64, force_loss: f64, cfg: &LossConfig) -> f64 {
    cfg.energy_weight * energy_loss + cfg.force_weight * force_loss
}
