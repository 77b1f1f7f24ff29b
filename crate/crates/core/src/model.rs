//! Data model, exact Poisson likelihood, negative-binomial surrogate and
//! conditionally Gaussian priors.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::special::{ln_factorial, ln_rising_factorial};

const SYMMETRY_TOL: f64 = 1e-10;
const MODE_MAX_ITER: usize = 200;
const MODE_TOL: f64 = 1e-12;

/// Counts `y` with a dense row-major design matrix `X` (one row per observation).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u64>,
    x: Matrix,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<u64>, x: Matrix, column_names: Vec<String>) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return Err(Error::Data(
                "a dataset needs at least one observation and one column".into(),
            ));
        }
        if y.len() != x.nrows() {
            return Err(Error::Data(format!(
                "{} responses but {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                column_names.len(),
                x.ncols()
            )));
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite design entry at row {}, column {}",
                pos / x.ncols(),
                pos % x.ncols()
            )));
        }
        Ok(Dataset { y, x, column_names })
    }

    /// Dataset with generated column names `x1..xp`.
    pub fn from_rows<R: AsRef<[f64]>>(y: Vec<u64>, rows: &[R]) -> Result<Self> {
        let x = Matrix::from_rows(rows)?;
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(y, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// `X β`.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len("beta", beta.len(), self.p())?;
        Ok(self.x.matvec(beta))
    }

    /// Reorders observations; used by invariance tests and CPO bookkeeping.
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        check_len("permutation", order.len(), self.n())?;
        let y = order.iter().map(|&i| self.y[i]).collect();
        Dataset::new(y, self.x.select_rows(order), self.column_names.clone())
    }
}

/// Coefficients together with the cached means `λ_i = exp(x_iᵀβ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    beta: Vec<f64>,
    lambda: Vec<f64>,
}

impl ModelState {
    pub fn new(beta: Vec<f64>, data: &Dataset) -> Result<Self> {
        let lambda = data
            .linear_predictor(&beta)?
            .into_iter()
            .map(f64::exp)
            .collect();
        Ok(ModelState { beta, lambda })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Precision {
    /// `B⁻¹ = 0`, an improper flat prior.
    Flat,
    Diagonal(Vec<f64>),
    Dense {
        precision: Matrix,
        chol: Cholesky,
    },
}

/// `β ~ N(b, B)` with the pieces the proposal needs (`B⁻¹`, `B⁻¹ b`) precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPriorParams {
    mean: Vec<f64>,
    precision: Precision,
    precision_mean: Vec<f64>,
    log_det_cov: f64,
}

impl GaussianPriorParams {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::argument(format!(
                "prior covariance is {}x{} for a mean of length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if !cov.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("prior parameters must be finite"));
        }
        let asym = cov.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::argument(format!(
                "prior covariance is not symmetric (max |B_ij − B_ji| = {asym:e})"
            )));
        }
        let chol = Cholesky::new(&cov)?;
        let precision = chol.inverse();
        let precision_mean = chol.solve(&mean);
        Ok(GaussianPriorParams {
            log_det_cov: chol.log_det(),
            mean,
            precision: Precision::Dense { precision, chol },
            precision_mean,
        })
    }

    /// Independent components with the given variances.
    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        check_len("prior variances", variances.len(), mean.len())?;
        if let Some(j) = variances.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                minor: j + 1,
                dim: variances.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("prior mean must be finite"));
        }
        let inv: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let precision_mean = mean.iter().zip(&inv).map(|(m, w)| m * w).collect();
        Ok(GaussianPriorParams {
            log_det_cov: variances.iter().map(|v| v.ln()).sum(),
            mean,
            precision: Precision::Diagonal(inv),
            precision_mean,
        })
    }

    /// `N(mean·1, variance·I)`.
    pub fn isotropic(p: usize, mean: f64, variance: f64) -> Result<Self> {
        GaussianPriorParams::diagonal(vec![mean; p], vec![variance; p])
    }

    /// Improper flat prior: `B⁻¹ = 0`, log density identically zero.
    pub fn flat(p: usize) -> Self {
        GaussianPriorParams {
            mean: vec![0.0; p],
            precision: Precision::Flat,
            precision_mean: vec![0.0; p],
            log_det_cov: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.precision, Precision::Flat)
    }

    /// `B⁻¹ b`.
    pub fn precision_mean(&self) -> &[f64] {
        &self.precision_mean
    }

    /// Adds `B⁻¹` into `target`.
    pub fn add_precision_to(&self, target: &mut Matrix) {
        match &self.precision {
            Precision::Flat => {}
            Precision::Diagonal(inv) => {
                for (j, w) in inv.iter().enumerate() {
                    target[(j, j)] += w;
                }
            }
            Precision::Dense { precision, .. } => {
                for i in 0..precision.nrows() {
                    for j in 0..precision.ncols() {
                        target[(i, j)] += precision[(i, j)];
                    }
                }
            }
        }
    }

    pub fn covariance(&self) -> Option<Matrix> {
        match &self.precision {
            Precision::Flat => None,
            Precision::Diagonal(inv) => Some(Matrix::from_diagonal(
                &inv.iter().map(|w| 1.0 / w).collect::<Vec<_>>(),
            )),
            Precision::Dense { chol, .. } => Some(chol.reconstruct()),
        }
    }

    fn quadratic_form(&self, beta: &[f64]) -> f64 {
        let diff: Vec<f64> = beta.iter().zip(&self.mean).map(|(b, m)| b - m).collect();
        match &self.precision {
            Precision::Flat => 0.0,
            Precision::Diagonal(inv) => diff.iter().zip(inv).map(|(d, w)| d * d * w).sum(),
            Precision::Dense { chol, .. } => {
                let z = chol.solve_lower(&diff);
                dot(&z, &z)
            }
        }
    }
}

/// `Σ_i [y_i η_i − e^{η_i} − ln y_i!]`; `−∞` when some `e^{η_i}` overflows.
pub fn log_poisson_likelihood(beta: &[f64], data: &Dataset) -> Result<f64> {
    let eta = data.linear_predictor(beta)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::argument("beta must be finite"));
    }
    let mut total = 0.0;
    for (&y, &e) in data.y().iter().zip(&eta) {
        let lambda = e.exp();
        if !lambda.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        total += y as f64 * e - lambda - ln_factorial(y);
    }
    Ok(total)
}

/// Negative-binomial surrogate of the Poisson likelihood with stopping
/// parameters `r`.
///
/// `normalized = false` gives only the β-dependent part
/// `Σ r_i ln(r_i/(r_i+λ_i)) + y_i ln(λ_i/(r_i+λ_i))`; `normalized = true`
/// adds `ln Γ(y_i+r_i) − ln Γ(r_i) − ln y_i!` so the terms are proper log pmfs.
pub fn log_nb_likelihood(beta: &[f64], r: &[f64], data: &Dataset, normalized: bool) -> Result<f64> {
    check_len("r", r.len(), data.n())?;
    if let Some(i) = r.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::argument(format!(
            "r[{i}] = {} must be positive and finite",
            r[i]
        )));
    }
    let eta = data.linear_predictor(beta)?;
    let mut total = 0.0;
    for ((&y, &e), &ri) in data.y().iter().zip(&eta).zip(r) {
        let lambda = e.exp();
        if !lambda.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let yf = y as f64;
        // ln(r/(r+λ)) = −ln(1+λ/r);  ln(λ/(r+λ)) = −ln(1+r/λ)
        let mut term = -ri * (lambda / ri).ln_1p();
        if y > 0 {
            term -= yf * (ri / lambda).ln_1p();
        }
        if normalized {
            term += ln_rising_factorial(ri, y) - ln_factorial(y);
        }
        total += term;
    }
    Ok(total)
}

/// Full multivariate normal log density (zero for the flat prior).
pub fn log_gaussian_prior(beta: &[f64], prior: &GaussianPriorParams) -> Result<f64> {
    check_len("beta", beta.len(), prior.dim())?;
    if prior.is_flat() {
        return Ok(0.0);
    }
    let p = prior.dim() as f64;
    Ok(-0.5 * p * (2.0 * PI).ln() - 0.5 * prior.log_det_cov - 0.5 * prior.quadratic_form(beta))
}

/// Exact unnormalized log posterior under a Gaussian prior.
pub fn log_posterior_unnorm(
    beta: &[f64],
    data: &Dataset,
    prior: &GaussianPriorParams,
) -> Result<f64> {
    check_len("prior", prior.dim(), data.p())?;
    let ll = log_poisson_likelihood(beta, data)?;
    if ll == f64::NEG_INFINITY {
        return Ok(ll);
    }
    Ok(ll + log_gaussian_prior(beta, prior)?)
}

/// Maximizer of the exact log posterior by damped Newton iteration from
/// the prior mean. Used as an optional starting point for the samplers.
pub fn posterior_mode(data: &Dataset, prior: &GaussianPriorParams) -> Result<Vec<f64>> {
    check_len("prior", prior.dim(), data.p())?;
    let p = data.p();
    let mut beta = prior.mean().to_vec();
    let mut value = log_posterior_unnorm(&beta, data, prior)?;
    let mut prior_precision = Matrix::zeros(p, p);
    prior.add_precision_to(&mut prior_precision);
    for _ in 0..MODE_MAX_ITER {
        let mu: Vec<f64> = data
            .linear_predictor(&beta)?
            .iter()
            .map(|e| e.exp())
            .collect();
        let resid: Vec<f64> = data
            .y()
            .iter()
            .zip(&mu)
            .map(|(&y, m)| y as f64 - m)
            .collect();
        let mut grad = data.x().transpose().matvec(&resid);
        let pb = prior_precision.matvec(&beta);
        for ((g, a), c) in grad.iter_mut().zip(&pb).zip(prior.precision_mean()) {
            *g -= a - c;
        }
        let mut hess = prior_precision.clone();
        for (row, m) in data.x().rows().zip(&mu) {
            for i in 0..p {
                for j in 0..p {
                    hess[(i, j)] += m * row[i] * row[j];
                }
            }
        }
        let step = Cholesky::new(&hess)?.solve(&grad);
        let decrement = dot(&grad, &step);
        if !decrement.is_finite() {
            return Err(Error::Numeric("posterior mode search diverged".into()));
        }
        if decrement < MODE_TOL {
            return Ok(beta);
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let v = log_posterior_unnorm(&trial, data, prior)?;
            if v >= value {
                beta = trial;
                value = v;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Ok(beta);
            }
        }
    }
    Err(Error::Numeric(format!(
        "posterior mode search did not converge in {MODE_MAX_ITER} iterations"
    )))
}
