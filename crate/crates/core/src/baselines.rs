//! Global-weight Bayesian model averaging.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::node_model::NoisePrior;

/// Per-model evidences, posterior model probabilities and the averaged curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BmaResult {
    pub log_evidences: Vec<f64>,
    pub posterior_probs: Vec<f64>,
    pub mean: Vec<f64>,
}

/// `π(M_l | D) ∝ p(D | M_l) π(M_l)`, normalized with max-subtraction.
pub fn bma_weights(log_evidences: &[f64], log_priors: &[f64]) -> Result<Vec<f64>> {
    if log_evidences.is_empty() || log_evidences.len() != log_priors.len() {
        return Err(Error::Dimension(format!(
            "{} evidences and {} priors",
            log_evidences.len(),
            log_priors.len()
        )));
    }
    let scores: Vec<f64> = log_evidences
        .iter()
        .zip(log_priors)
        .map(|(e, p)| e + p)
        .collect();
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::InvalidArgument(
            "log evidences and priors must be finite".into(),
        ));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / total).collect())
}

/// Log marginal likelihood of `y` under `y_i ~ N(f̂(x_i), σ²)` with
/// `σ² ~ νλ/χ²_ν` integrated out (a multivariate Student-t in the residuals).
pub fn model_log_evidence(y: &[f64], predictions: &[f64], prior: &NoisePrior) -> Result<f64> {
    if y.is_empty() || y.len() != predictions.len() {
        return Err(Error::Dimension(format!(
            "{} observations and {} predictions",
            y.len(),
            predictions.len()
        )));
    }
    let n = y.len() as f64;
    let sse: f64 = y
        .iter()
        .zip(predictions)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let (nu, lambda) = (prior.shape, prior.scale);
    let nu_post = nu + n;
    Ok(
        -0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * nu * (0.5 * nu * lambda).ln()
            - ln_gamma(0.5 * nu)
            + ln_gamma(0.5 * nu_post)
            - 0.5 * nu_post * (0.5 * (nu * lambda + sse)).ln(),
    )
}

/// Pointwise `Σ_l w_l f̂_l(x)`; `model_means[l][p]` is model `l` at grid point `p`.
pub fn bma_predict(weights: &[f64], model_means: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != model_means.len() || weights.is_empty() {
        return Err(Error::Dimension(format!(
            "{} weights for {} models",
            weights.len(),
            model_means.len()
        )));
    }
    let n = model_means[0].len();
    if model_means.iter().any(|m| m.len() != n) {
        return Err(Error::Dimension("model curves differ in length".into()));
    }
    Ok((0..n)
        .map(|p| weights.iter().zip(model_means).map(|(w, m)| w * m[p]).sum())
        .collect())
}

/// Evidences from training predictions, uniform model priors, averaged grid curve.
pub fn fit_bma(
    y: &[f64],
    train_means: &[Vec<f64>],
    grid_means: &[Vec<f64>],
    prior: &NoisePrior,
) -> Result<BmaResult> {
    let log_evidences = train_means
        .iter()
        .map(|m| model_log_evidence(y, m, prior))
        .collect::<Result<Vec<_>>>()?;
    let k = log_evidences.len();
    let log_priors = vec![-(k as f64).ln(); k];
    let posterior_probs = bma_weights(&log_evidences, &log_priors)?;
    let mean = bma_predict(&posterior_probs, grid_means)?;
    Ok(BmaResult {
        log_evidences,
        posterior_probs,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_when_equal() {
        let w = bma_weights(&[-3.0, -3.0, -3.0], &[0.0, 0.0, 0.0]).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_gap_dominates() {
        let w = bma_weights(&[0.0, -50.0], &[0.0, 0.0]).unwrap();
        assert!(w[0] >= 1.0 - 1e-20);
        assert!(w[1] > 0.0 && w[1] < 1e-21);
    }

    #[test]
    fn shift_invariance() {
        let a = bma_weights(&[-1.0, -2.5, 0.3], &[-0.2, 0.0, -1.0]).unwrap();
        let b = bma_weights(&[999.0, 997.5, 1000.3], &[-0.2, 0.0, -1.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn evidence_monotone_in_residuals() {
        let prior = NoisePrior::new(5.0, 0.1).unwrap();
        let y = [1.0, 2.0, 3.0];
        let exact = model_log_evidence(&y, &y, &prior).unwrap();
        let off = model_log_evidence(&y, &[1.1, 2.0, 2.9], &prior).unwrap();
        assert!(exact > off);
        let further = model_log_evidence(&y, &[1.2, 2.0, 2.8], &prior).unwrap();
        assert!(off > further);
    }

    #[test]
    fn predict_cases() {
        let curves = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
        assert_eq!(bma_predict(&[1.0, 0.0], &curves).unwrap(), curves[0]);
        assert_eq!(
            bma_predict(&[0.5, 0.5], &curves).unwrap(),
            vec![2.0, 2.0, 2.0]
        );
        assert!(bma_predict(&[1.0], &curves).is_err());
    }
}
