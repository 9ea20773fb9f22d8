//! Conjugate linear model at a terminal node.
//!
//! Residuals `R` at a leaf are modeled as `R ~ N(F μ, σ² I)` with
//! `μ ~ N_K(β, τ² I_K)`, where row `i` of `F` holds the simulator predictions
//! at the leaf's `i`-th training input. With precision
//! `A⁻¹ = FᵀF/σ² + I/τ²` and `b = β/τ² + FᵀR/σ²` the leaf posterior is
//! `N(A b, A)` and the marginal likelihood of `R` has a closed form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Residuals and design rows of the training points in one leaf.
#[derive(Debug, Clone)]
pub struct NodeData {
    pub residuals: DVector<f64>,
    /// `n_p × K`
    pub design: DMatrix<f64>,
}

impl NodeData {
    pub fn new(residuals: DVector<f64>, design: DMatrix<f64>) -> Result<Self> {
        if residuals.is_empty() || design.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "node needs at least one point and one model".into(),
            ));
        }
        if design.nrows() != residuals.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but {} residuals",
                design.nrows(),
                residuals.len()
            )));
        }
        Ok(NodeData { residuals, design })
    }

    pub fn stats(&self) -> NodeStats {
        NodeStats {
            n: self.residuals.len(),
            ftf: self.design.transpose() * &self.design,
            ftr: self.design.transpose() * &self.residuals,
            rtr: self.residuals.dot(&self.residuals),
        }
    }
}

/// Sufficient statistics of a leaf: `n_p`, `FᵀF`, `FᵀR`, `RᵀR`.
#[derive(Debug, Clone)]
pub struct NodeStats {
    pub n: usize,
    pub ftf: DMatrix<f64>,
    pub ftr: DVector<f64>,
    pub rtr: f64,
}

impl NodeStats {
    pub fn zeros(k: usize) -> Self {
        NodeStats {
            n: 0,
            ftf: DMatrix::zeros(k, k),
            ftr: DVector::zeros(k),
            rtr: 0.0,
        }
    }

    /// Adds one observation with design row `f` and residual `r`.
    pub fn push(&mut self, f: &[f64], r: f64) {
        let k = f.len();
        self.n += 1;
        for a in 0..k {
            self.ftr[a] += f[a] * r;
            for b in 0..k {
                self.ftf[(a, b)] += f[a] * f[b];
            }
        }
        self.rtr += r * r;
    }
}

/// `μ ~ N_K(mean, sd² I_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPrior {
    pub mean: DVector<f64>,
    pub sd: f64,
}

impl LeafPrior {
    pub fn new(mean: DVector<f64>, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "leaf prior sd must be positive, got {sd}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "leaf prior mean must be finite".into(),
            ));
        }
        Ok(LeafPrior { mean, sd })
    }
}

/// `σ² ~ νλ/χ²_ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePrior {
    pub shape: f64,
    pub scale: f64,
}

impl NoisePrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise prior needs positive shape and scale, got {shape}, {scale}"
            )));
        }
        Ok(NoisePrior { shape, scale })
    }
}

struct Conditioned {
    chol: Cholesky<f64, Dyn>,
    b: DVector<f64>,
}

fn condition(stats: &NodeStats, prior: &LeafPrior, sigma2: f64) -> Result<Conditioned> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let k = prior.mean.len();
    if stats.ftf.nrows() != k {
        return Err(Error::Dimension(format!(
            "leaf prior has {k} components but data has {}",
            stats.ftf.nrows()
        )));
    }
    let tau2 = prior.sd * prior.sd;
    let mut precision = &stats.ftf / sigma2;
    for i in 0..k {
        precision[(i, i)] += 1.0 / tau2;
    }
    let b = &prior.mean / tau2 + &stats.ftr / sigma2;
    let chol = Cholesky::new(precision)
        .ok_or_else(|| Error::Numeric("leaf precision matrix is not positive definite".into()))?;
    Ok(Conditioned { chol, b })
}

/// Log marginal likelihood of a leaf's residuals from sufficient statistics.
pub fn log_marginal_from_stats(stats: &NodeStats, prior: &LeafPrior, sigma2: f64) -> Result<f64> {
    let c = condition(stats, prior, sigma2)?;
    let k = prior.mean.len() as f64;
    let tau2 = prior.sd * prior.sd;
    // log|A| = -log|A⁻¹|
    let log_det_precision = 2.0 * c.chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    // RᵀR/σ² + βᵀβ/τ² - bᵀAb written in terms of e = R - Fβ, which avoids
    // cancellation between large terms when τ is small.
    let beta = &prior.mean;
    let ete = stats.rtr - 2.0 * beta.dot(&stats.ftr) + beta.dot(&(&stats.ftf * beta));
    let g = (&stats.ftr - &stats.ftf * beta) / sigma2;
    let quad = ete / sigma2 - g.dot(&c.chol.solve(&g));
    Ok(
        -0.5 * stats.n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln()
            - 0.5 * k * tau2.ln()
            - 0.5 * log_det_precision
            - 0.5 * quad,
    )
}

pub fn log_marginal_likelihood(nd: &NodeData, prior: &LeafPrior, sigma2: f64) -> Result<f64> {
    log_marginal_from_stats(&nd.stats(), prior, sigma2)
}

/// Full conditional of the leaf vector.
#[derive(Debug, Clone)]
pub struct LeafPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor of the precision `cov⁻¹`.
    precision_factor: DMatrix<f64>,
}

impl LeafPosterior {
    pub fn from_stats(stats: &NodeStats, prior: &LeafPrior, sigma2: f64) -> Result<Self> {
        let c = condition(stats, prior, sigma2)?;
        let mean = c.chol.solve(&c.b);
        let cov = c.chol.inverse();
        Ok(LeafPosterior {
            mean,
            cov,
            precision_factor: c.chol.l(),
        })
    }

    /// Draws from `N(mean, cov)` by solving `Lᵀ z = ε` with `L Lᵀ = cov⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let eps = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = self
            .precision_factor
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + z
    }
}

pub fn leaf_posterior(nd: &NodeData, prior: &LeafPrior, sigma2: f64) -> Result<LeafPosterior> {
    LeafPosterior::from_stats(&nd.stats(), prior, sigma2)
}

pub fn sample_leaf<R: Rng + ?Sized>(
    nd: &NodeData,
    prior: &LeafPrior,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(leaf_posterior(nd, prior, sigma2)?.sample(rng))
}

/// Posterior hyperparameters `(ν', λ')` of `σ²` given the full-model SSE.
pub fn sigma2_posterior(total_sse: f64, n: usize, prior: &NoisePrior) -> (f64, f64) {
    let nu = prior.shape + n as f64;
    (nu, (total_sse + prior.shape * prior.scale) / nu)
}

/// Draws `σ² ~ ν'λ'/χ²_ν'`.
pub fn sample_sigma2<R: Rng + ?Sized>(
    total_sse: f64,
    n: usize,
    prior: &NoisePrior,
    rng: &mut R,
) -> Result<f64> {
    if !(total_sse >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SSE must be >= 0, got {total_sse}"
        )));
    }
    let (nu, lambda) = sigma2_posterior(total_sse, n, prior);
    let chi = ChiSquared::new(nu).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(nu * lambda / chi.sample(rng))
}
