//! Gaussian proposal obtained by replacing each Pólya-gamma latent with its
//! conditional expectation in the negative-binomial full conditional of β.
//!
//! Anchored at `β₀` with stopping parameters `r`, the proposal is
//! `N(m, V)` where
//!
//! ```text
//! ω_i = E[PG(y_i + r_i, x_iᵀβ₀ − ln r_i)]
//! κ_i = ω_i ln r_i + (y_i − r_i)/2
//! V   = (Xᵀ diag(ω) X + B⁻¹)⁻¹
//! m   = V (Xᵀκ + B⁻¹b)
//! ```
//!
//! All work goes through the Cholesky factor of the precision `V⁻¹`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::kernels::fill_normal;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::model::{Dataset, GaussianPriorParams};

/// Below this `|c|` the mean is replaced by its limit `b/4`.
pub const PG_MEAN_SINGULAR: f64 = 1e-8;

const JITTER_BASE: f64 = 1e-10;
const JITTER_RETRIES: usize = 3;

/// Mean of a Pólya-gamma `PG(b, c)` variable, `(b / 2c) tanh(c / 2)`.
pub fn pg_mean(b: f64, c: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::argument(format!(
            "PG shape must be positive, got {b}"
        )));
    }
    if !c.is_finite() {
        return Err(Error::argument(format!("PG tilt must be finite, got {c}")));
    }
    if c.abs() < PG_MEAN_SINGULAR {
        return Ok(0.25 * b);
    }
    Ok(b / (2.0 * c) * (0.5 * c).tanh())
}

/// Multivariate normal proposal `N(m, V)` stored through the Cholesky factor
/// of its precision `V⁻¹ = P = L_P L_Pᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalDensity {
    mean: Vec<f64>,
    precision_chol: Cholesky,
    log_det_cov: f64,
    anchor: Vec<f64>,
}

impl ProposalDensity {
    /// Builds a proposal from a mean and covariance directly.
    pub fn from_moments(mean: Vec<f64>, cov: &Matrix, anchor: Vec<f64>) -> Result<Self> {
        check_len("covariance", cov.nrows(), mean.len())?;
        check_len("anchor", anchor.len(), mean.len())?;
        let cov_chol = Cholesky::new(cov)?;
        let precision = cov_chol.inverse();
        let precision_chol = Cholesky::new(&precision)?;
        Ok(ProposalDensity {
            log_det_cov: -precision_chol.log_det(),
            mean,
            precision_chol,
            anchor,
        })
    }

    fn from_precision(mean: Vec<f64>, precision_chol: Cholesky, anchor: Vec<f64>) -> Self {
        ProposalDensity {
            log_det_cov: -precision_chol.log_det(),
            mean,
            precision_chol,
            anchor,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// `log det V`.
    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    pub fn precision_cholesky(&self) -> &Cholesky {
        &self.precision_chol
    }

    pub fn covariance(&self) -> Matrix {
        self.precision_chol.inverse()
    }

    /// Lower Cholesky factor of `V` itself.
    pub fn covariance_cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(&self.covariance())
    }

    /// Maps standard normal coordinates to the proposal: `m + L_P⁻ᵀ z`,
    /// which has covariance `V`.
    pub fn transform(&self, z: &[f64]) -> Vec<f64> {
        let w = self.precision_chol.solve_upper(z);
        self.mean.iter().zip(&w).map(|(m, v)| m + v).collect()
    }
}

fn pg_weights(anchor: &[f64], data: &Dataset, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let eta = data.linear_predictor(anchor)?;
    let mut omega = Vec::with_capacity(data.n());
    let mut kappa = Vec::with_capacity(data.n());
    for ((&y, &e), &ri) in data.y().iter().zip(&eta).zip(r) {
        let log_r = ri.ln();
        let w = pg_mean(y as f64 + ri, e - log_r)?;
        omega.push(w);
        kappa.push(w * log_r + 0.5 * (y as f64 - ri));
    }
    Ok((omega, kappa))
}

/// Proposal anchored at `anchor` for stopping parameters `r`.
///
/// On a Cholesky failure the precision diagonal is jittered by
/// `1e-10·tr/p`, escalating tenfold up to three times, before the error is
/// returned.
pub fn build_proposal(
    anchor: &[f64],
    data: &Dataset,
    r: &[f64],
    prior: &GaussianPriorParams,
) -> Result<ProposalDensity> {
    let p = data.p();
    check_len("anchor", anchor.len(), p)?;
    check_len("r", r.len(), data.n())?;
    check_len("prior", prior.dim(), p)?;
    if let Some(i) = r.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::argument(format!(
            "r[{i}] = {} must be positive",
            r[i]
        )));
    }
    let (omega, kappa) = pg_weights(anchor, data, r)?;

    let mut precision = Matrix::zeros(p, p);
    let mut rhs = prior.precision_mean().to_vec();
    for (i, row) in data.x().rows().enumerate() {
        let w = omega[i];
        for a in 0..p {
            let wa = w * row[a];
            rhs[a] += kappa[i] * row[a];
            if wa == 0.0 {
                continue;
            }
            for b in 0..=a {
                precision[(a, b)] += wa * row[b];
            }
        }
    }
    prior.add_precision_to(&mut precision);
    for a in 0..p {
        for b in 0..a {
            precision[(b, a)] = precision[(a, b)];
        }
    }

    let chol = factor_with_jitter(&mut precision)?;
    let mean = chol.solve(&rhs);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("proposal mean is not finite".into()));
    }
    Ok(ProposalDensity::from_precision(mean, chol, anchor.to_vec()))
}

fn factor_with_jitter(precision: &mut Matrix) -> Result<Cholesky> {
    let first = match Cholesky::new(precision) {
        Ok(c) => return Ok(c),
        Err(e) => e,
    };
    let p = precision.nrows();
    let trace = precision.trace();
    let mut jitter = JITTER_BASE * (trace / p as f64).abs();
    if !(jitter > 0.0) || !jitter.is_finite() {
        return Err(first);
    }
    let mut added = 0.0;
    for _ in 0..JITTER_RETRIES {
        for j in 0..p {
            precision[(j, j)] += jitter - added;
        }
        added = jitter;
        if let Ok(c) = Cholesky::new(precision) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(match first {
        Error::NotPositiveDefinite { minor, dim } => Error::Numeric(format!(
            "proposal precision not positive definite at leading minor {minor} of {dim} after jitter"
        )),
        other => other,
    })
}

pub fn sample_proposal<R: Rng + ?Sized>(prop: &ProposalDensity, rng: &mut R) -> Vec<f64> {
    let mut z = vec![0.0; prop.dim()];
    fill_normal(rng, &mut z);
    prop.transform(&z)
}

/// Full log density, evaluated as `−½‖L_Pᵀ(β − m)‖² − ½ log det V − (p/2) log 2π`.
pub fn proposal_logpdf(prop: &ProposalDensity, beta: &[f64]) -> Result<f64> {
    check_len("beta", beta.len(), prop.dim())?;
    let diff: Vec<f64> = beta.iter().zip(&prop.mean).map(|(b, m)| b - m).collect();
    let u = prop.precision_chol.upper_mul(&diff);
    let p = prop.dim() as f64;
    Ok(-0.5 * p * (2.0 * PI).ln() - 0.5 * prop.log_det_cov - 0.5 * dot(&u, &u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pg_mean_even_positive_bounded(b in 1e-3f64..1e3, c in -50.0f64..50.0) {
            let m = pg_mean(b, c).unwrap();
            prop_assert!(m > 0.0 && m <= b / 4.0 * (1.0 + 1e-12));
            prop_assert_eq!(m, pg_mean(b, -c).unwrap());
        }
    }

    #[test]
    fn pg_mean_examples() {
        assert_relative_eq!(pg_mean(2.0, 0.0).unwrap(), 0.5);
        assert_relative_eq!(pg_mean(2.0, 1e-12).unwrap(), 0.5);
        assert_relative_eq!(
            pg_mean(1.0, 2.0).unwrap(),
            1f64.tanh() / 4.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(pg_mean(1.0, 2.0).unwrap(), 0.190_398_5, epsilon = 1e-7);
        let a = pg_mean(4.0, -3.0).unwrap();
        let b = pg_mean(4.0, 3.0).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a, 4.0 / 6.0 * 1.5f64.tanh(), max_relative = 1e-15);
        assert!((a - 0.60343).abs() < 1e-5);
    }

    #[test]
    fn pg_mean_is_continuous_at_zero() {
        for b in [0.5, 3.0, 40.0] {
            assert!((pg_mean(b, 1e-9).unwrap() - b / 4.0).abs() < 1e-10);
            assert!((pg_mean(b, 2e-8).unwrap() - b / 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pg_mean_rejects_bad_shape() {
        assert!(pg_mean(0.0, 1.0).is_err());
        assert!(pg_mean(-1.0, 1.0).is_err());
        assert!(pg_mean(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn single_observation_hand_values() {
        let data = Dataset::from_rows(vec![1], &[[1.0]]).unwrap();
        let prior = GaussianPriorParams::isotropic(1, 0.0, 1.0).unwrap();
        let prop = build_proposal(&[0.0], &data, &[1.0], &prior).unwrap();
        assert_relative_eq!(prop.covariance()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(prop.mean()[0], 0.0, epsilon = 1e-15);
        assert_eq!(prop.anchor(), &[0.0]);
    }

    #[test]
    fn identity_design_decouples() {
        let data = Dataset::from_rows(vec![3, 0], &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let prior = GaussianPriorParams::diagonal(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        let anchor = [0.4, -0.7];
        let r = [2.5, 7.0];
        let prop = build_proposal(&anchor, &data, &r, &prior).unwrap();
        let v = prop.covariance();
        let w0 = pg_mean(3.0 + 2.5, 0.4 - 2.5f64.ln()).unwrap();
        let w1 = pg_mean(7.0, -0.7 - 7f64.ln()).unwrap();
        assert_relative_eq!(v[(0, 0)], 1.0 / (w0 + 0.5), max_relative = 1e-13);
        assert_relative_eq!(v[(1, 1)], 1.0 / (w1 + 2.0), max_relative = 1e-13);
        assert!(v[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn flat_prior_solves_normal_equations() {
        let data =
            Dataset::from_rows(vec![2, 5, 1], &[[1.0, 0.3], [1.0, 1.1], [1.0, -0.8]]).unwrap();
        let r = [3.0, 4.0, 5.0];
        let anchor = [0.2, 0.1];
        let prop = build_proposal(&anchor, &data, &r, &GaussianPriorParams::flat(2)).unwrap();
        let (omega, kappa) = pg_weights(&anchor, &data, &r).unwrap();
        // (XᵀΩX) m = Xᵀκ
        let m = prop.mean();
        for a in 0..2 {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for i in 0..3 {
                let row = data.x().row(i);
                lhs += omega[i] * row[a] * dot(row, m);
                rhs += kappa[i] * row[a];
            }
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn transform_examples() {
        let prop = ProposalDensity::from_moments(
            vec![1.0],
            &Matrix::from_rows(&[[4.0]]).unwrap(),
            vec![0.0],
        )
        .unwrap();
        assert_relative_eq!(prop.transform(&[1.5])[0], 4.0, epsilon = 1e-14);
        assert_eq!(prop.transform(&[0.0]), vec![1.0]);
    }

    #[test]
    fn logpdf_examples() {
        let std =
            ProposalDensity::from_moments(vec![0.0], &Matrix::identity(1), vec![0.0]).unwrap();
        assert_relative_eq!(
            proposal_logpdf(&std, &[1.0]).unwrap(),
            -0.5 * (2.0 * PI).ln() - 0.5,
            epsilon = 1e-15
        );
        let cov = Matrix::from_rows(&[[2.0, 0.4], [0.4, 1.0]]).unwrap();
        let prop = ProposalDensity::from_moments(vec![1.0, 2.0], &cov, vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(
            proposal_logpdf(&prop, &[1.0, 2.0]).unwrap(),
            -(2.0 * PI).ln() - 0.5 * prop.log_det_cov(),
            epsilon = 1e-14
        );
        assert_relative_eq!(prop.log_det_cov(), (2.0f64 - 0.16).ln(), epsilon = 1e-14);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        let prop = ProposalDensity::from_moments(
            vec![0.3],
            &Matrix::from_rows(&[[0.49]]).unwrap(),
            vec![0.0],
        )
        .unwrap();
        let (lo, hi, n) = (-8.0, 8.0, 40_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * proposal_logpdf(&prop, &[lo + k as f64 * h]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sample_moments_match() {
        let cov = Matrix::from_rows(&[[1.5, -0.6], [-0.6, 0.8]]).unwrap();
        let prop = ProposalDensity::from_moments(vec![2.0, -1.0], &cov, vec![0.0, 0.0]).unwrap();
        let mut rng = rng_from_seed(3);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_proposal(&prop, &mut rng)).collect();
        let mean: Vec<f64> = (0..2)
            .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n as f64)
            .collect();
        for j in 0..2 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!((mean[j] - prop.mean()[j]).abs() < 4.0 * se);
        }
        for a in 0..2 {
            for b in 0..2 {
                let c = draws
                    .iter()
                    .map(|d| (d[a] - mean[a]) * (d[b] - mean[b]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                assert!(
                    (c - cov[(a, b)]).abs() < 0.05 * cov[(a, b)].abs(),
                    "{a}{b}: {c}"
                );
            }
        }
    }

    #[test]
    fn covariance_factor_reconstructs() {
        let data = Dataset::from_rows(
            vec![2, 5, 1, 0],
            &[[1.0, 0.3], [1.0, 1.1], [1.0, -0.8], [1.0, 0.0]],
        )
        .unwrap();
        let prior = GaussianPriorParams::isotropic(2, 0.0, 2.0).unwrap();
        let prop = build_proposal(&[0.1, 0.2], &data, &[1.0, 2.0, 3.0, 4.0], &prior).unwrap();
        let v = prop.covariance();
        let l = prop.covariance_cholesky().unwrap();
        let rebuilt = l.reconstruct();
        let mut diff = rebuilt.clone();
        for i in 0..2 {
            for j in 0..2 {
                diff[(i, j)] -= v[(i, j)];
            }
        }
        assert!(diff.frobenius_norm() / v.frobenius_norm() < 1e-8);
        assert!(l.factor().diagonal().iter().all(|d| *d > 0.0));
        let log_det = 2.0 * l.factor().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        assert_relative_eq!(log_det, prop.log_det_cov(), epsilon = 1e-12);
    }
}
