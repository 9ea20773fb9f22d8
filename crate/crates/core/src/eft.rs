//! Finite-order expansions and their truncation-error models.
//!
//! Each simulator is a known partial sum `h^(N)(x)`. Its omitted tail is
//! modeled by factorizing the expansion as `y_ref(x) Σ c_k(x) Q(x)^k` and
//! treating the dimensionless coefficients `c_k` as draws from a common
//! Gaussian process. Summing the geometric tail of that process gives the
//! truncation-error mean `m_δ` and covariance `c̄² R_δ`, and the simulator's
//! prediction is `h^(N)(x) + m_δ(x)` with variance `c̄² R_δ(x, x)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::dataset::Point;
use crate::error::{Error, Result};

/// Largest |Q| used inside the geometric tail sums.
pub const Q_MAX: f64 = 0.995;

/// Evaluator handle for simulators given directly as functions.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A finite-order expansion `h^(N)`.
#[derive(Clone)]
pub enum Expansion {
    /// `Σ s_t x^t` (weak coupling).
    Weak { coefficients: Vec<f64> },
    /// `x^{-1/2} Σ l_t x^{-t}` (strong coupling, `x > 0`).
    Strong { coefficients: Vec<f64> },
    /// Taylor series of `sin(x1)` and `cos(x2)` about separate centers, summed.
    SinCosTaylor {
        sin_center: f64,
        sin_order: usize,
        cos_center: f64,
        cos_order: usize,
    },
    /// An arbitrary evaluator with no known coefficient structure.
    Custom {
        name: String,
        order: usize,
        eval: Evaluator,
    },
}

impl fmt::Debug for Expansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expansion::Weak { coefficients } => f
                .debug_struct("Weak")
                .field("coefficients", coefficients)
                .finish(),
            Expansion::Strong { coefficients } => f
                .debug_struct("Strong")
                .field("coefficients", coefficients)
                .finish(),
            Expansion::SinCosTaylor {
                sin_center,
                sin_order,
                cos_center,
                cos_order,
            } => f
                .debug_struct("SinCosTaylor")
                .field("sin_center", sin_center)
                .field("sin_order", sin_order)
                .field("cos_center", cos_center)
                .field("cos_order", cos_order)
                .finish(),
            Expansion::Custom { name, order, .. } => f
                .debug_struct("Custom")
                .field("name", name)
                .field("order", order)
                .finish_non_exhaustive(),
        }
    }
}

/// Weak-coupling coefficients `s_0..s_{n_s}`; odd entries are exactly zero.
pub fn weak_coefficients(order: usize) -> Vec<f64> {
    (0..=order)
        .map(|t| {
            if t % 2 == 1 {
                0.0
            } else {
                let half = (t / 2) as f64;
                std::f64::consts::SQRT_2 * gamma(t as f64 + 0.5) / gamma(half + 1.0)
                    * (-4.0f64).powi(t as i32 / 2)
            }
        })
        .collect()
}

/// Strong-coupling coefficients `l_t = Γ(t/2 + 1/4) / (2 t!) (-1/2)^t`.
pub fn strong_coefficients(order: usize) -> Vec<f64> {
    (0..=order)
        .map(|t| {
            let t_f = t as f64;
            gamma(0.5 * t_f + 0.25) / (2.0 * gamma(t_f + 1.0)) * (-0.5f64).powi(t as i32)
        })
        .collect()
}

fn taylor_sin(x: f64, center: f64, order: usize) -> f64 {
    let dx = x - center;
    let mut term_scale = 1.0; // dx^j / j!
    let mut sum = 0.0;
    for j in 0..=order {
        if j > 0 {
            term_scale *= dx / j as f64;
        }
        sum += (center + j as f64 * FRAC_PI_2).sin() * term_scale;
    }
    sum
}

fn taylor_cos(x: f64, center: f64, order: usize) -> f64 {
    let dx = x - center;
    let mut term_scale = 1.0;
    let mut sum = 0.0;
    for j in 0..=order {
        if j > 0 {
            term_scale *= dx / j as f64;
        }
        sum += (center + j as f64 * FRAC_PI_2).cos() * term_scale;
    }
    sum
}

impl Expansion {
    pub fn weak(order: usize) -> Self {
        Expansion::Weak {
            coefficients: weak_coefficients(order),
        }
    }

    pub fn strong(order: usize) -> Self {
        Expansion::Strong {
            coefficients: strong_coefficients(order),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Expansion::Weak { coefficients } | Expansion::Strong { coefficients } => {
                coefficients.len() - 1
            }
            Expansion::SinCosTaylor {
                sin_order,
                cos_order,
                ..
            } => (*sin_order).max(*cos_order),
            Expansion::Custom { order, .. } => *order,
        }
    }

    /// Whether partial sums `h^(0..N)` are available for coefficient extraction.
    pub fn has_coefficient_structure(&self) -> bool {
        matches!(self, Expansion::Weak { .. } | Expansion::Strong { .. })
    }

    /// Full-order value `h^(N)(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self {
            Expansion::Weak { .. } | Expansion::Strong { .. } => {
                self.evaluate_partial(self.order(), x)
            }
            Expansion::SinCosTaylor {
                sin_center,
                sin_order,
                cos_center,
                cos_order,
            } => {
                if x.len() < 2 {
                    return Err(Error::Dimension(format!(
                        "sin/cos Taylor simulator needs 2 inputs, got {}",
                        x.len()
                    )));
                }
                Ok(taylor_sin(x[0], *sin_center, *sin_order)
                    + taylor_cos(x[1], *cos_center, *cos_order))
            }
            Expansion::Custom { eval, .. } => Ok(eval(x)),
        }
    }

    /// Partial sum `h^(k)(x)` through order `k` (weak and strong kinds only).
    pub fn evaluate_partial(&self, k: usize, x: &[f64]) -> Result<f64> {
        let (coefficients, inverse) = match self {
            Expansion::Weak { coefficients } => (coefficients, false),
            Expansion::Strong { coefficients } => (coefficients, true),
            _ => {
                return Err(Error::InvalidArgument(
                    "partial sums are only defined for weak and strong expansions".into(),
                ))
            }
        };
        if k >= coefficients.len() {
            return Err(Error::InvalidArgument(format!(
                "order {k} exceeds expansion order {}",
                coefficients.len() - 1
            )));
        }
        let x0 = *x
            .first()
            .ok_or_else(|| Error::Dimension("empty input point".into()))?;
        let (base, prefactor) = if inverse {
            if !(x0 > 0.0) {
                return Err(Error::Domain(format!(
                    "strong-coupling expansion needs x > 0, got {x0}"
                )));
            }
            (1.0 / x0, 1.0 / x0.sqrt())
        } else {
            (x0, 1.0)
        };
        // Horner in `base`.
        Ok(prefactor
            * coefficients[..=k]
                .iter()
                .rev()
                .fold(0.0, |acc, c| acc * base + c))
    }
}

/// A scalar map of the input, used for `Q(x)` and `y_ref(x)`.
#[derive(Clone)]
pub enum InputMap {
    /// `x_1`
    Identity,
    /// `1 / x_1`
    Reciprocal,
    /// `x_1^{-1/2}`
    InverseSqrt,
    Constant(f64),
    Custom(Evaluator),
}

impl fmt::Debug for InputMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputMap::Identity => write!(f, "Identity"),
            InputMap::Reciprocal => write!(f, "Reciprocal"),
            InputMap::InverseSqrt => write!(f, "InverseSqrt"),
            InputMap::Constant(c) => write!(f, "Constant({c})"),
            InputMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl InputMap {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InputMap::Identity => x[0],
            InputMap::Reciprocal => 1.0 / x[0],
            InputMap::InverseSqrt => 1.0 / x[0].sqrt(),
            InputMap::Constant(c) => *c,
            InputMap::Custom(f) => f(x),
        }
    }
}

/// Fitted truncation-error model for one expansion.
#[derive(Debug, Clone)]
pub struct EftGp {
    pub mu: f64,
    pub cbar2: f64,
    pub ell: f64,
    pub q_map: InputMap,
    pub yref_map: InputMap,
    pub design_inputs: Vec<Point>,
    /// Row `i` holds `c_0..c_N` extracted at `design_inputs[i]`.
    pub design_coefficients: Vec<Vec<f64>>,
}

impl EftGp {
    /// A model with fixed hyperparameters and no design data.
    pub fn with_params(
        mu: f64,
        cbar2: f64,
        ell: f64,
        q_map: InputMap,
        yref_map: InputMap,
    ) -> Result<Self> {
        if !(cbar2 > 0.0) || !(ell > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cbar2 and ell must be positive, got {cbar2}, {ell}"
            )));
        }
        Ok(EftGp {
            mu,
            cbar2,
            ell,
            q_map,
            yref_map,
            design_inputs: Vec::new(),
            design_coefficients: Vec::new(),
        })
    }
}

/// A tail quantity together with whether `Q` had to be capped to compute it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub value: f64,
    pub capped: bool,
}

fn cap_q(q: f64) -> (f64, bool) {
    if q.abs() > Q_MAX || !q.is_finite() {
        (Q_MAX.copysign(if q.is_nan() { 1.0 } else { q }), true)
    } else {
        (q, false)
    }
}

/// Coefficients `c_0..c_N` from the partial sums `h^(0..N)` at one design input.
pub fn extract_coefficients(runs: &[f64], q: f64, yref: f64) -> Result<Vec<f64>> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no expansion runs given".into()));
    }
    if yref == 0.0 {
        return Err(Error::Domain("y_ref must be nonzero".into()));
    }
    if q == 0.0 && runs.len() > 1 {
        return Err(Error::Domain(
            "Q = 0 makes coefficients of order >= 1 undefined".into(),
        ));
    }
    let mut out = Vec::with_capacity(runs.len());
    out.push(runs[0] / yref);
    let mut q_pow = 1.0;
    for k in 1..runs.len() {
        q_pow *= q;
        out.push((runs[k] - runs[k - 1]) / (yref * q_pow));
    }
    Ok(out)
}

/// `m_δ(x) = μ y_ref(x) Q^{N+1}(x) / (1 - Q(x))`.
pub fn truncation_mean(gp: &EftGp, order: usize, x: &[f64]) -> Truncation {
    let (q, capped) = cap_q(gp.q_map.eval(x));
    let yref = gp.yref_map.eval(x);
    Truncation {
        value: gp.mu * yref * q.powi(order as i32 + 1) / (1.0 - q),
        capped,
    }
}

/// `c̄² R_δ(x, x')` with `R_δ = y_ref(x) y_ref(x') [Q(x)Q(x')]^{N+1} / (1 - Q(x)Q(x'))`.
pub fn truncation_cov(gp: &EftGp, order: usize, x: &[f64], x_prime: &[f64]) -> Truncation {
    let (q1, c1) = cap_q(gp.q_map.eval(x));
    let (q2, c2) = cap_q(gp.q_map.eval(x_prime));
    let qq = q1 * q2;
    let r =
        gp.yref_map.eval(x) * gp.yref_map.eval(x_prime) * qq.powi(order as i32 + 1) / (1.0 - qq);
    Truncation {
        value: gp.cbar2 * r,
        capped: c1 || c2,
    }
}

/// Full `c̄² R_δ` matrix over `grid`.
pub fn truncation_cov_matrix(gp: &EftGp, order: usize, grid: &[Point]) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| {
        truncation_cov(gp, order, &grid[i], &grid[j]).value
    })
}

/// Settings for the coefficient-GP hyperparameter fit.
#[derive(Debug, Clone)]
pub struct GpFitSettings {
    /// Prior degrees of freedom for `c̄² ~ ν₀λ₀/χ²_ν₀`.
    pub nu0: f64,
    pub lambda0: f64,
    pub ell_grid_points: usize,
    /// Length-scale grid spans `[lo, hi]` times the design width.
    pub ell_lo_factor: f64,
    pub ell_hi_factor: f64,
    /// Relative diagonal jitter added to the correlation matrix.
    pub jitter: f64,
}

impl Default for GpFitSettings {
    fn default() -> Self {
        GpFitSettings {
            nu0: 5.0,
            lambda0: 1.0,
            ell_grid_points: 50,
            ell_lo_factor: 0.01,
            ell_hi_factor: 10.0,
            jitter: 1e-8,
        }
    }
}

/// Outcome of fitting `(c̄², ℓ)` to extracted coefficients.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientFit {
    pub cbar2: f64,
    pub ell: f64,
    pub log_marginal: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Squared-exponential correlation `exp(-|x - x'|² / (2ℓ²))`.
pub fn correlation(x: &[f64], x_prime: &[f64], ell: f64) -> f64 {
    (-sq_dist(x, x_prime) / (2.0 * ell * ell)).exp()
}

struct CorrelationSolve {
    log_det: f64,
    quad_sum: f64,
}

fn solve_correlation(
    design: &[Point],
    coefficients: &[Vec<f64>],
    ell: f64,
    jitter: f64,
) -> Result<CorrelationSolve> {
    let n = design.len();
    let r = DMatrix::from_fn(n, n, |i, j| {
        let c = correlation(&design[i], &design[j], ell);
        if i == j {
            c + jitter
        } else {
            c
        }
    });
    let chol = r.cholesky().ok_or_else(|| {
        Error::Numeric(format!(
            "correlation matrix not positive definite at ell = {ell}"
        ))
    })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let order_count = coefficients[0].len();
    let mut quad_sum = 0.0;
    for k in 0..order_count {
        let c = DVector::from_iterator(n, coefficients.iter().map(|row| row[k]));
        let sol = chol.solve(&c);
        quad_sum += c.dot(&sol);
    }
    Ok(CorrelationSolve { log_det, quad_sum })
}

/// Fits `(c̄², ℓ)` given coefficients `coefficients[i][k] = c_k(x^c_i)` with `μ = 0`.
///
/// `ℓ` maximizes the log marginal likelihood with `c̄²` integrated against
/// its scaled-inverse-χ² prior; `c̄²` is then the posterior mean at that `ℓ`.
pub fn fit_coefficient_gp(
    design: &[Point],
    coefficients: &[Vec<f64>],
    settings: &GpFitSettings,
) -> Result<CoefficientFit> {
    let n = design.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 design inputs, got {n}"
        )));
    }
    if coefficients.len() != n {
        return Err(Error::Dimension(format!(
            "{} coefficient rows for {n} design inputs",
            coefficients.len()
        )));
    }
    let orders = coefficients[0].len();
    if orders == 0 || coefficients.iter().any(|r| r.len() != orders) {
        return Err(Error::Dimension(
            "coefficient rows must share a nonzero length".into(),
        ));
    }
    for i in 0..n {
        for j in 0..i {
            if sq_dist(&design[i], &design[j]) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate design inputs {i} and {j}"
                )));
            }
        }
    }

    let width = (0..design[0].len())
        .map(|d| {
            let (lo, hi) = design
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[d]), hi.max(p[d]))
                });
            hi - lo
        })
        .fold(0.0, f64::max);

    let total = (n * orders) as f64;
    let nu_post = settings.nu0 + total;
    let prior_scale = settings.nu0 * settings.lambda0;
    let constant = -0.5 * total * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * settings.nu0 * (0.5 * prior_scale).ln()
        - ln_gamma(0.5 * settings.nu0)
        + ln_gamma(0.5 * nu_post);

    let points = settings.ell_grid_points.max(2);
    let (lo, hi) = (
        (settings.ell_lo_factor * width).ln(),
        (settings.ell_hi_factor * width).ln(),
    );
    let mut best: Option<(f64, f64, f64)> = None; // (log_ml, ell, quad_sum)
    for g in 0..points {
        let ell = (lo + (hi - lo) * g as f64 / (points - 1) as f64).exp();
        let solved = solve_correlation(design, coefficients, ell, settings.jitter)?;
        let log_ml = constant
            - 0.5 * orders as f64 * solved.log_det
            - 0.5 * nu_post * (0.5 * (prior_scale + solved.quad_sum)).ln();
        if best.is_none_or(|(b, _, _)| log_ml > b) {
            best = Some((log_ml, ell, solved.quad_sum));
        }
    }
    let (log_marginal, ell, quad_sum) = best.expect("grid has at least two points");
    let lambda_post = (prior_scale + quad_sum) / nu_post;
    Ok(CoefficientFit {
        cbar2: nu_post * lambda_post / (nu_post - 2.0),
        ell,
        log_marginal,
    })
}

/// Extracts coefficients at each design input and fits the truncation model.
pub fn fit_eft(
    expansion: &Expansion,
    design_inputs: &[Point],
    q_map: InputMap,
    yref_map: InputMap,
    settings: &GpFitSettings,
) -> Result<EftGp> {
    if !expansion.has_coefficient_structure() {
        return Err(Error::InvalidArgument(
            "only weak and strong expansions carry a truncation model".into(),
        ));
    }
    let order = expansion.order();
    let mut coefficients = Vec::with_capacity(design_inputs.len());
    for x in design_inputs {
        let runs = (0..=order)
            .map(|k| expansion.evaluate_partial(k, x))
            .collect::<Result<Vec<_>>>()?;
        coefficients.push(extract_coefficients(
            &runs,
            q_map.eval(x),
            yref_map.eval(x),
        )?);
    }
    let fit = fit_coefficient_gp(design_inputs, &coefficients, settings)?;
    Ok(EftGp {
        mu: 0.0,
        cbar2: fit.cbar2,
        ell: fit.ell,
        q_map,
        yref_map,
        design_inputs: design_inputs.to_vec(),
        design_coefficients: coefficients,
    })
}

/// Posterior predictive mean and variance of one simulator over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EftPrediction {
    pub grid: Vec<Point>,
    pub mean: Vec<f64>,
    /// Diagonal of `Σ_th`.
    pub variance: Vec<f64>,
    /// Points where `|Q|` exceeded [`Q_MAX`] and was capped.
    pub capped: Vec<bool>,
}

impl EftPrediction {
    /// Variance with observational noise `σ²` added.
    pub fn variance_with_noise(&self, sigma2: f64) -> Vec<f64> {
        self.variance.iter().map(|v| v + sigma2).collect()
    }
}

/// `m_th = h^(N) + m_δ` and `Σ_th(x, x) = c̄² R_δ(x, x)` over `grid`.
pub fn predict_eft(gp: &EftGp, expansion: &Expansion, grid: &[Point]) -> Result<EftPrediction> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("prediction grid is empty".into()));
    }
    let order = expansion.order();
    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    let mut capped = Vec::with_capacity(grid.len());
    for x in grid {
        let m = truncation_mean(gp, order, x);
        let v = truncation_cov(gp, order, x, x);
        mean.push(expansion.evaluate(x)? + m.value);
        variance.push(v.value.max(0.0));
        capped.push(m.capped || v.capped);
    }
    Ok(EftPrediction {
        grid: grid.to_vec(),
        mean,
        variance,
        capped,
    })
}

/// One candidate model: an expansion plus its optional truncation model.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub name: String,
    pub expansion: Expansion,
    pub gp: Option<EftGp>,
}

impl Simulator {
    /// Predictions over `grid`. Without a truncation model the expansion is
    /// taken as exact and the variance is zero.
    pub fn predict(&self, grid: &[Point]) -> Result<EftPrediction> {
        match &self.gp {
            Some(gp) => predict_eft(gp, &self.expansion, grid),
            None => {
                if grid.is_empty() {
                    return Err(Error::InvalidArgument("prediction grid is empty".into()));
                }
                let mean = grid
                    .iter()
                    .map(|x| self.expansion.evaluate(x))
                    .collect::<Result<Vec<_>>>()?;
                Ok(EftPrediction {
                    grid: grid.to_vec(),
                    variance: vec![0.0; mean.len()],
                    capped: vec![false; mean.len()],
                    mean,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{linspace_grid, points_1d, true_system_phi4};
    use std::f64::consts::PI;

    fn gp(mu: f64, cbar2: f64, q: InputMap, yref: f64) -> EftGp {
        EftGp::with_params(mu, cbar2, 1.0, q, InputMap::Constant(yref)).unwrap()
    }

    #[test]
    fn weak_coefficient_values() {
        let s = weak_coefficients(4);
        assert!((s[0] - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[3], 0.0);
        // Γ(2.5) = 0.75√π
        assert!((s[2] + 3.0 * (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn strong_coefficient_values() {
        // Γ(1/4), Γ(3/4) reference constants.
        let l = strong_coefficients(5);
        assert!((l[0] - 3.625_609_908_221_908 / 2.0).abs() < 1e-12);
        assert!((l[1] + 1.225_416_702_465_177_6 / 4.0).abs() < 1e-12);
        for w in l.windows(2) {
            assert!(w[0] * w[1] < 0.0);
        }
    }

    #[test]
    fn expansion_evaluation() {
        let w0 = Expansion::weak(0);
        assert_eq!(w0.evaluate(&[0.37]).unwrap(), w0.evaluate(&[0.0]).unwrap());
        let w2 = Expansion::weak(2).evaluate(&[0.1]).unwrap();
        assert!((w2 - (2.0 * PI).sqrt() * 0.97).abs() < 1e-12);
        let strong = Expansion::strong(4);
        let far = strong.evaluate(&[1e8]).unwrap() * 1e4;
        assert!((far - strong_coefficients(4)[0]).abs() < 1e-7);
        assert!(matches!(strong.evaluate(&[-0.5]), Err(Error::Domain(_))));
        assert!(matches!(strong.evaluate(&[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn sin_cos_taylor_matches_truth_near_center() {
        let e = Expansion::SinCosTaylor {
            sin_center: PI,
            sin_order: 7,
            cos_center: PI,
            cos_order: 10,
        };
        let v = e.evaluate(&[PI - 0.1, PI + 0.2]).unwrap();
        assert!((v - ((PI - 0.1).sin() + (PI + 0.2).cos())).abs() < 1e-10);
        assert!(e.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn extraction_basics() {
        assert_eq!(extract_coefficients(&[5.0], 0.3, 2.0).unwrap(), vec![2.5]);
        assert!(matches!(
            extract_coefficients(&[1.0, 2.0], 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        let e = Expansion::weak(5);
        let s = weak_coefficients(5);
        for &x in &[0.05, 0.2, 0.45] {
            let runs: Vec<f64> = (0..=5)
                .map(|k| e.evaluate_partial(k, &[x]).unwrap())
                .collect();
            let c = extract_coefficients(&runs, x, 1.0).unwrap();
            for (ci, si) in c.iter().zip(&s) {
                assert!((ci - si).abs() <= 1e-9 * si.abs().max(1.0), "{ci} vs {si}");
            }
            assert!(c[1].abs() < 1e-9 && c[3].abs() < 1e-9 && c[5].abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_mean_cases() {
        let x = [0.3];
        assert_eq!(
            truncation_mean(&gp(0.0, 1.0, InputMap::Identity, 1.0), 2, &x).value,
            0.0
        );
        let m = truncation_mean(&gp(1.0, 1.0, InputMap::Constant(0.5), 1.0), 1, &x);
        assert!((m.value - 0.5).abs() < 1e-15 && !m.capped);
        let m = truncation_mean(&gp(1.0, 1.0, InputMap::Constant(0.9), 2.0), 3, &x);
        assert!((m.value - 2.0 * 0.9f64.powi(4) / 0.1).abs() < 1e-12);
    }

    #[test]
    fn truncation_cov_cases() {
        let zero_q = gp(0.0, 1.0, InputMap::Constant(0.0), 1.0);
        assert_eq!(truncation_cov(&zero_q, 1, &[0.1], &[0.2]).value, 0.0);
        let half = gp(0.0, 1.0, InputMap::Constant(0.5), 1.0);
        let v = truncation_cov(&half, 1, &[0.1], &[0.1]);
        assert!((v.value - 1.0 / 12.0).abs() < 1e-15);

        let g = gp(0.0, 1.0, InputMap::Identity, 1.0);
        let mut last = 0.0;
        for &q in &linspace_grid(0.0, 0.999, 200).unwrap() {
            let v = truncation_cov(&g, 2, &[q], &[q]).value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn divergent_q_is_capped_and_flagged() {
        let g = gp(1.0, 1.0, InputMap::Reciprocal, 1.0);
        let v = truncation_cov(&g, 4, &[0.2], &[0.2]);
        assert!(v.capped);
        let expect = Q_MAX.powi(10) / (1.0 - Q_MAX * Q_MAX);
        assert!((v.value - expect).abs() < 1e-9);
        let m = truncation_mean(&g, 4, &[0.2]);
        assert!(m.capped && m.value.is_finite());
    }

    #[test]
    fn cov_symmetric() {
        let g = gp(0.0, 2.0, InputMap::Identity, 1.5);
        for &(a, b) in &[(0.1, 0.7), (0.3, 0.31), (0.9, 0.05)] {
            assert_eq!(
                truncation_cov(&g, 3, &[a], &[b]).value,
                truncation_cov(&g, 3, &[b], &[a]).value
            );
        }
    }

    #[test]
    fn fit_with_zero_coefficients_shrinks_to_prior() {
        let design = points_1d(&[0.0, 0.3, 0.6, 0.9]);
        let coeffs = vec![vec![0.0; 3]; 4];
        let s = GpFitSettings::default();
        let fit = fit_coefficient_gp(&design, &coeffs, &s).unwrap();
        let nu_post = s.nu0 + 12.0;
        assert!((fit.cbar2 - s.nu0 * s.lambda0 / (nu_post - 2.0)).abs() < 1e-12);
        assert!(fit.cbar2 < s.lambda0);
    }

    #[test]
    fn fit_invariant_to_design_order() {
        let design = points_1d(&[0.05, 0.2, 0.35, 0.5]);
        let e = Expansion::weak(2);
        let s = GpFitSettings::default();
        let a = fit_eft(&e, &design, InputMap::Identity, InputMap::Constant(1.0), &s).unwrap();
        let rev: Vec<Point> = design.iter().rev().cloned().collect();
        let b = fit_eft(&e, &rev, InputMap::Identity, InputMap::Constant(1.0), &s).unwrap();
        assert!((a.cbar2 - b.cbar2).abs() < 1e-9 * a.cbar2);
        assert_eq!(a.ell, b.ell);
    }

    #[test]
    fn fit_rejects_degenerate_design() {
        let s = GpFitSettings::default();
        let e = Expansion::weak(2);
        let dup = points_1d(&[0.1, 0.1, 0.3]);
        assert!(fit_eft(&e, &dup, InputMap::Identity, InputMap::Constant(1.0), &s).is_err());
        let single = points_1d(&[0.1]);
        assert!(fit_eft(&e, &single, InputMap::Identity, InputMap::Constant(1.0), &s).is_err());
    }

    #[test]
    fn prediction_mean_is_raw_expansion_when_mu_zero() {
        let e = Expansion::weak(2);
        let design = points_1d(&linspace_grid(0.03, 0.5, 4).unwrap());
        let g = fit_eft(
            &e,
            &design,
            InputMap::Identity,
            InputMap::Constant(1.0),
            &GpFitSettings::default(),
        )
        .unwrap();
        let grid = points_1d(&linspace_grid(0.0, 0.5, 11).unwrap());
        let p = predict_eft(&g, &e, &grid).unwrap();
        for (x, m) in grid.iter().zip(&p.mean) {
            assert_eq!(*m, e.evaluate(x).unwrap());
        }
        assert_eq!(p.variance[0], 0.0);
        assert!(p.variance.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn mixed_case_spot_value() {
        // μ ≠ 0, y_ref ≠ 1: m_th = h + μ y Q^{N+1}/(1-Q), Σ = c̄² y² Q^{2N+2}/(1-Q²).
        let e = Expansion::weak(2);
        let g =
            EftGp::with_params(0.4, 2.5, 1.0, InputMap::Identity, InputMap::Constant(1.7)).unwrap();
        let x = 0.3f64;
        let p = predict_eft(&g, &e, &[vec![x]]).unwrap();
        let h = (2.0 * PI).sqrt() * (1.0 - 3.0 * x * x);
        let m = h + 0.4 * 1.7 * x.powi(3) / (1.0 - x);
        let v = 2.5 * 1.7 * 1.7 * x.powi(6) / (1.0 - x * x);
        assert!((p.mean[0] - m).abs() < 1e-13);
        assert!((p.variance[0] - v).abs() < 1e-15);
    }

    #[test]
    fn weak_second_order_tracks_truth_at_small_coupling() {
        let e = Expansion::weak(2);
        for &x in &linspace_grid(0.03, 0.1, 8).unwrap() {
            assert!((e.evaluate(&[x]).unwrap() - true_system_phi4(x)).abs() < 0.05);
        }
        for &x in &linspace_grid(0.41, 0.5, 5).unwrap() {
            assert!((e.evaluate(&[x]).unwrap() - true_system_phi4(x)).abs() > 0.3);
        }
    }

    #[test]
    fn exact_simulator_has_zero_variance() {
        let sim = Simulator {
            name: "h1".into(),
            expansion: Expansion::SinCosTaylor {
                sin_center: PI,
                sin_order: 7,
                cos_center: PI,
                cos_order: 10,
            },
            gp: None,
        };
        let p = sim.predict(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        assert!(p.variance.iter().all(|&v| v == 0.0));
    }
}
