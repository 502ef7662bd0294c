//! Calibration under covariate shift.
//!
//! Calibration scores drawn from a source law are turned into a sample from
//! the target law by rejection sampling with the density ratio
//! `w = dP_target / dP_source`, bounded by `B`: index `i` is kept iff
//! `U_i <= w_i` with `U_i ~ Uniform[0, B]`. The kept scores then go through
//! ordinary threshold selection with `n0` replaced by the number kept.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationInput, CertaintyPredictor};
use crate::error::{Error, Result};
use crate::scores::ScoreFunction;

pub const DEFAULT_GAMMA: f64 = 0.9;

/// Discriminator output is clamped to `[P_CLAMP, 1 - P_CLAMP]` before forming odds.
pub const P_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Density ratio per calibration score, aligned with the score list.
    pub ratios: Vec<f64>,
    /// Quantile level used to derive `B` when no explicit bound is given.
    pub gamma: f64,
    pub bound_b: Option<f64>,
    pub seed: u64,
}

impl ShiftConfig {
    pub fn new(ratios: Vec<f64>, seed: u64) -> Self {
        ShiftConfig {
            ratios,
            gamma: DEFAULT_GAMMA,
            bound_b: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_ratios(&self.ratios)?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if let Some(b) = self.bound_b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!("bound B must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if let Some(i) = ratios.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(format!(
            "density ratio {i} must be finite and non-negative, got {}",
            ratios[i]
        )));
    }
    Ok(())
}

/// Hyperparameters of the logistic discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub feature_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl DiscriminatorConfig {
    pub fn new(feature_dim: usize) -> Self {
        DiscriminatorConfig {
            feature_dim,
            learning_rate: 0.5,
            epochs: 500,
            l2: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2 must be non-negative"));
        }
        Ok(())
    }
}

/// A fitted linear-logit discriminator turned into a density-ratio function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRatioModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
    /// `n_source / n_target`, undoing the class imbalance of the training set.
    prior_correction: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DensityRatioModel {
    fn logit(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((xi, m), s), w)| w * (xi - m) / s)
                .sum::<f64>()
    }

    /// Probability the point came from the target sample.
    pub fn target_probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// `w(x) = p / (1 - p) * n_source / n_target`, with `p` clamped.
    pub fn ratio(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector has non-finite entries"));
        }
        let p = self.target_probability(x).clamp(P_CLAMP, 1.0 - P_CLAMP);
        Ok(p / (1.0 - p) * self.prior_correction)
    }

    pub fn ratios(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.ratio(x)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn check_features(name: &str, xs: &[Vec<f64>], dim: usize) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{name} feature set is empty")));
    }
    for (i, x) in xs.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::invalid(format!(
                "{name} row {i} has {} features, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} row {i} has non-finite features")));
        }
    }
    Ok(())
}

/// Fits a logistic discriminator (target = 1, source = 0) by full-batch
/// gradient descent on standardized features.
pub fn estimate_density_ratio(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    config: &DiscriminatorConfig,
) -> Result<DensityRatioModel> {
    config.validate()?;
    let dim = config.feature_dim;
    check_features("source", source, dim)?;
    check_features("target", target, dim)?;

    let n = (source.len() + target.len()) as f64;
    let all = || source.iter().chain(target.iter());
    let mean: Vec<f64> = (0..dim)
        .map(|d| all().map(|x| x[d]).sum::<f64>() / n)
        .collect();
    let scale: Vec<f64> = (0..dim)
        .map(|d| {
            let var = all().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let standardized = |x: &Vec<f64>| -> Vec<f64> {
        (0..dim).map(|d| (x[d] - mean[d]) / scale[d]).collect()
    };
    let data: Vec<(Vec<f64>, f64)> = source
        .iter()
        .map(|x| (standardized(x), 0.0))
        .chain(target.iter().map(|x| (standardized(x), 1.0)))
        .collect();

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, label) in &data {
            let z = bias + x.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>();
            let err = sigmoid(z) - label;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += err * xi;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * (g / n + config.l2 * *w);
        }
        bias -= config.learning_rate * grad_b / n;
    }
    Ok(DensityRatioModel {
        mean,
        scale,
        weights,
        bias,
        prior_correction: source.len() as f64 / target.len() as f64,
    })
}

/// Upper nearest-rank `gamma` quantile of the ratios: the
/// `ceil(gamma * n)`-th smallest value.
///
/// Should that order statistic be zero (more than a `gamma` fraction of exact
/// zeros), the smallest positive ratio is returned so that `B > 0`.
pub fn clip_bound_b(ratios: &[f64], gamma: f64) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::invalid("no density ratios to bound"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    check_ratios(ratios)?;
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against gamma * n landing a hair above an integer.
    let rank = ((gamma * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let b = sorted[rank - 1];
    if b > 0.0 {
        return Ok(b);
    }
    sorted
        .into_iter()
        .find(|&w| w > 0.0)
        .ok_or_else(|| Error::invalid("all density ratios are zero"))
}

/// Uniform draw in `(0, 1]` keyed by `(seed, index)`, independent of how
/// many other indices are drawn.
pub fn index_uniform(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Indices `i` with `B * U_i <= w_i`, ascending.
pub fn rejection_sample(ratios: &[f64], bound_b: f64, seed: u64) -> Result<Vec<usize>> {
    if !(bound_b > 0.0 && bound_b.is_finite()) {
        return Err(Error::invalid(format!("bound B must be positive, got {bound_b}")));
    }
    check_ratios(ratios)?;
    Ok(ratios
        .iter()
        .enumerate()
        .filter(|&(i, &w)| bound_b * index_uniform(seed, i as u64) <= w)
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCalibration {
    /// `n0` holds the number of accepted calibration scores.
    pub predictor: CertaintyPredictor,
    pub bound_b: f64,
    pub accepted: Vec<usize>,
    /// Set when rejection sampling kept nothing; the predictor abstains always.
    pub empty_accepted: bool,
}

/// Rejection-samples the calibration scores toward the target law, then
/// calibrates on the survivors.
pub fn calibrate_under_shift(
    scores: &[f64],
    shift: &ShiftConfig,
    alpha: f64,
    delta: f64,
    function: ScoreFunction,
) -> Result<ShiftCalibration> {
    shift.validate()?;
    if scores.len() != shift.ratios.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} density ratios",
            scores.len(),
            shift.ratios.len()
        )));
    }
    let bound_b = match shift.bound_b {
        Some(b) => b,
        None => clip_bound_b(&shift.ratios, shift.gamma)?,
    };
    let accepted = rejection_sample(&shift.ratios, bound_b, shift.seed)?;
    let kept: Vec<f64> = accepted.iter().map(|&i| scores[i]).collect();
    let predictor = calibrate(&CalibrationInput::new(kept, alpha, delta)?, function)?;
    Ok(ShiftCalibration {
        predictor,
        bound_b,
        empty_accepted: accepted.is_empty(),
        accepted,
    })
}
