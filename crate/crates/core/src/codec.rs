//! Scalar <-> histogram conversion.
//!
//! A scalar energy `e` becomes a target histogram by integrating a Gaussian
//! `N(e, sigma^2)` over each bin of a uniform grid; a predicted histogram is
//! turned back into a scalar by taking its expectation over the bin centers.

use crate::error::{Error, Result};

/// Targets whose in-range Gaussian mass is below this are flagged as
/// effectively outside the grid.
pub const OUT_OF_RANGE_MASS: f64 = 0.5;

/// Tolerance on the probability sum accepted by [`decode_expectation`].
pub const DECODE_SUM_TOL: f64 = 1e-6;

/// Uniform partition of `[lo, hi]` into `k` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    lo: f64,
    hi: f64,
    k: usize,
    centers: Vec<f64>,
}

impl BinGrid {
    pub fn new(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must be finite (lo={lo}, hi={hi})"
            )));
        }
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 bins, got {k}"
            )));
        }
        if hi <= lo {
            return Err(Error::InvalidArgument(format!(
                "grid upper edge {hi} must exceed lower edge {lo}"
            )));
        }
        let w = (hi - lo) / k as f64;
        let centers = (0..k).map(|i| lo + (i as f64 + 0.5) * w).collect();
        Ok(Self { lo, hi, k, centers })
    }

    /// Grid covering `[min - 3 sigma, max + 3 sigma]` where `sigma` is
    /// `sigma_multiplier` bin widths of the resulting grid.
    ///
    /// Solving `R = span + 6 m R / k` for the total range `R` gives
    /// `R = span / (1 - 6 m / k)`, so this needs `6 m < k`.
    pub fn covering(min: f64, max: f64, k: usize, sigma_multiplier: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::InvalidArgument(format!(
                "cannot cover energy range [{min}, {max}]"
            )));
        }
        if !(sigma_multiplier > 0.0) || 6.0 * sigma_multiplier >= k as f64 {
            return Err(Error::InvalidArgument(format!(
                "sigma multiplier {sigma_multiplier} too wide for {k} bins (need 6*m < k)"
            )));
        }
        // a single-valued label set still needs a nondegenerate span
        let span = if max > min {
            max - min
        } else {
            min.abs().max(1.0) * 1e-3
        };
        let range = span / (1.0 - 6.0 * sigma_multiplier / k as f64);
        let pad = 0.5 * (range - span);
        Self::new(min - pad, max + pad, k)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.k as f64
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Left boundary of bin `i`.
    pub fn left_edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Gaussian width used to smooth scalar targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeConfig {
    pub sigma: f64,
    pub sigma_multiplier: f64,
}

impl EncodeConfig {
    /// `sigma = multiplier * grid.width()`.
    pub fn from_multiplier(multiplier: f64, grid: &BinGrid) -> Result<Self> {
        let sigma = multiplier * grid.width();
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma multiplier must be positive, got {multiplier}"
            )));
        }
        Ok(Self {
            sigma,
            sigma_multiplier: multiplier,
        })
    }
}

/// Encoded target distribution over the bins of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetHistogram {
    pub probs: Vec<f64>,
    /// Gaussian mass that fell inside `[lo, hi]` before renormalization.
    pub in_range_mass: f64,
}

impl TargetHistogram {
    pub fn is_out_of_range(&self) -> bool {
        self.in_range_mass < OUT_OF_RANGE_MASS
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal mass on `[a, b]`, taken from whichever tail keeps
/// precision.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Discretize `N(e, sigma^2)` over the grid and renormalize the in-range
/// mass to one.
pub fn encode_target(e: f64, cfg: &EncodeConfig, grid: &BinGrid) -> Result<TargetHistogram> {
    if !e.is_finite() {
        return Err(Error::NonFinite("target energy".into()));
    }
    if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {}",
            cfg.sigma
        )));
    }
    let w = grid.width();
    let mut probs: Vec<f64> = (0..grid.k())
        .map(|i| {
            let left = grid.left_edge(i);
            normal_mass((left - e) / cfg.sigma, (left + w - e) / cfg.sigma).max(0.0)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    } else {
        // Gaussian entirely beyond double precision range of the grid
        probs.iter_mut().for_each(|p| *p = 0.0);
        let edge = if e < grid.lo() { 0 } else { grid.k() - 1 };
        probs[edge] = 1.0;
    }
    Ok(TargetHistogram {
        probs,
        in_range_mass: total,
    })
}

/// Expected value of the distribution over bin centers.
pub fn decode_expectation(probs: &[f64], grid: &BinGrid) -> Result<f64> {
    if probs.len() != grid.k() {
        return Err(Error::LengthMismatch {
            expected: grid.k(),
            actual: probs.len(),
        });
    }
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument(
            "probabilities must be nonnegative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DECODE_SUM_TOL {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    let e: f64 = probs.iter().zip(grid.centers()).map(|(p, c)| p * c).sum();
    Ok(e.clamp(grid.lo(), grid.hi()))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument(
            "probabilities must be nonnegative".into(),
        ));
    }
    Ok(-probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}
