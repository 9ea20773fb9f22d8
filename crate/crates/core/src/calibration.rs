//! Prior hyperparameters for the mixing model.
//!
//! The non-informative leaf prior centers every weight at 0.5 with the
//! interval `[0, 1]` at `±k` prior standard deviations. The informative prior
//! instead centers each leaf at the average precision weight of the training
//! points it contains, with a tighter `τ = 1/(2km)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::node_model::LeafPrior;

/// Fallback `λ` when every model reproduces some observation exactly.
pub const DEGENERATE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMoment {
    Mean,
    Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixPriorConfig {
    pub trees: usize,
    pub k: f64,
    pub informative: bool,
    pub nu: f64,
    /// `None` means calibrate from the data.
    pub lambda: Option<f64>,
    pub matching: MatchMoment,
}

impl Default for MixPriorConfig {
    fn default() -> Self {
        MixPriorConfig {
            trees: 10,
            k: 2.0,
            informative: false,
            nu: 10.0,
            lambda: None,
            matching: MatchMoment::Mode,
        }
    }
}

impl MixPriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidArgument("need at least one tree".into()));
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if self.matching == MatchMoment::Mean && self.lambda.is_none() && self.nu <= 2.0 {
            return Err(Error::InvalidArgument("mean matching needs nu > 2".into()));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "lambda must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }
}

fn check_mk(m: usize, k: f64) -> Result<()> {
    if m == 0 || !(k > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need m >= 1 and k > 0, got m = {m}, k = {k}"
        )));
    }
    Ok(())
}

/// `β_l = 0.5/m` for every model and `τ = 1/(2k√m)`.
pub fn noninformative_leaf_prior(models: usize, m: usize, k: f64) -> Result<LeafPrior> {
    check_mk(m, k)?;
    LeafPrior::new(
        DVector::from_element(models, 0.5 / m as f64),
        1.0 / (2.0 * k * (m as f64).sqrt()),
    )
}

/// `τ = 1/(2km)`.
pub fn informative_tau(m: usize, k: f64) -> Result<f64> {
    check_mk(m, k)?;
    Ok(1.0 / (2.0 * k * m as f64))
}

/// Normalized inverse variances.
pub fn precision_weights(variances: &[f64]) -> Result<Vec<f64>> {
    if variances.is_empty() {
        return Err(Error::InvalidArgument("no variances given".into()));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "precision weights need positive finite variances, got {v}"
        )));
    }
    // Scale by the smallest variance so tiny variances do not overflow.
    let vmin = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let prec: Vec<f64> = variances.iter().map(|v| vmin / v).collect();
    let total: f64 = prec.iter().sum();
    Ok(prec.into_iter().map(|p| p / total).collect())
}

/// Average precision weight over the member points of a leaf, divided by `m`.
///
/// `weights[i]` is the precision-weight vector of training point `members[i]`.
pub fn informative_leaf_mean(
    members: &[usize],
    weights: &[Vec<f64>],
    m: usize,
) -> Result<DVector<f64>> {
    if members.is_empty() {
        return Err(Error::InvalidArgument(
            "informative prior undefined for an empty leaf".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("need m >= 1".into()));
    }
    let k = weights[members[0]].len();
    let mut sum = DVector::zeros(k);
    for &i in members {
        for (l, w) in weights[i].iter().enumerate() {
            sum[l] += w;
        }
    }
    Ok(sum / (m as f64 * members.len() as f64))
}

/// `σ̂² = max_l min_i (y_i - f̂_l(x_i))²`.
///
/// `predictions[l][i]` is model `l` at training point `i`.
pub fn sigma2_estimate(predictions: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    if predictions.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one model and one observation".into(),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for (l, row) in predictions.iter().enumerate() {
        if row.len() != y.len() {
            return Err(Error::Dimension(format!(
                "model {l} has {} predictions for {} observations",
                row.len(),
                y.len()
            )));
        }
        let min_sq = row
            .iter()
            .zip(y)
            .map(|(f, y)| (y - f).powi(2))
            .fold(f64::INFINITY, f64::min);
        best = best.max(min_sq);
    }
    Ok(best)
}

/// Outcome of calibrating `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma2Calibration {
    pub sigma2_hat: f64,
    pub lambda: f64,
    /// `σ̂² = 0` forced the fallback `λ`.
    pub degenerate: bool,
}

/// Chooses `λ` so that `σ̂²` is the mean or mode of `νλ/χ²_ν`.
pub fn calibrate_sigma2_prior(
    predictions: &[Vec<f64>],
    y: &[f64],
    nu: f64,
    matching: MatchMoment,
) -> Result<Sigma2Calibration> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "nu must be positive, got {nu}"
        )));
    }
    if matching == MatchMoment::Mean && nu <= 2.0 {
        return Err(Error::InvalidArgument(
            "mean of the variance prior needs nu > 2".into(),
        ));
    }
    let sigma2_hat = sigma2_estimate(predictions, y)?;
    if sigma2_hat == 0.0 {
        log_warning("sigma2 estimate is zero; falling back to a tiny lambda");
        return Ok(Sigma2Calibration {
            sigma2_hat,
            lambda: DEGENERATE_LAMBDA,
            degenerate: true,
        });
    }
    let lambda = match matching {
        MatchMoment::Mean => sigma2_hat * (nu - 2.0) / nu,
        MatchMoment::Mode => sigma2_hat * (nu + 2.0) / nu,
    };
    Ok(Sigma2Calibration {
        sigma2_hat,
        lambda,
        degenerate: false,
    })
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}
