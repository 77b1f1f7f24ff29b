use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::kernels::sample_invgamma;

/// Local scales of the horseshoe in the inverse-gamma auxiliary
/// representation: `η_j² | ν_j ~ IG(½, 1/ν_j)`, `ν_j ~ IG(½, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeState {
    pub eta2: Vec<f64>,
    pub nu: Vec<f64>,
}

impl HorseshoeState {
    /// All scales set to one.
    pub fn new(p: usize) -> Self {
        HorseshoeState {
            eta2: vec![1.0; p],
            nu: vec![1.0; p],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("nu", self.nu.len(), self.eta2.len())?;
        if self
            .eta2
            .iter()
            .chain(&self.nu)
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::argument(
                "horseshoe scales must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// One Gibbs sweep over the local scales given the coefficients:
/// `η_j² ~ IG(1, 1/ν_j + β_j²/(2τ²))`, then `ν_j ~ IG(1, 1 + 1/η_j²)`.
pub fn horseshoe_update<R: Rng + ?Sized>(
    beta: &[f64],
    state: &HorseshoeState,
    tau: f64,
    rng: &mut R,
) -> Result<HorseshoeState> {
    check_len("beta", beta.len(), state.eta2.len())?;
    if !(tau > 0.0) {
        return Err(Error::argument(format!("τ must be positive, got {tau}")));
    }
    let two_tau2 = 2.0 * tau * tau;
    let mut eta2 = Vec::with_capacity(beta.len());
    for (b, nu) in beta.iter().zip(&state.nu) {
        let scale = 1.0 / nu + b * b / two_tau2;
        eta2.push(clamp_scale(sample_invgamma(1.0, scale, rng)?));
    }
    let mut nu = Vec::with_capacity(beta.len());
    for e in &eta2 {
        nu.push(clamp_scale(sample_invgamma(1.0, 1.0 + 1.0 / e, rng)?));
    }
    Ok(HorseshoeState { eta2, nu })
}

fn clamp_scale(v: f64) -> f64 {
    v.clamp(1e-150, 1e150)
}

/// `(p_n / n) √(ln(n / p_n))` for `p_n` non-zero coefficients out of `n` observations.
pub fn tau_optimal(n: usize, p_n: usize) -> Result<f64> {
    if p_n == 0 || p_n >= n {
        return Err(Error::argument(format!(
            "tau_optimal needs 0 < p_n < n, got p_n = {p_n}, n = {n}"
        )));
    }
    let ratio = p_n as f64 / n as f64;
    Ok(ratio * (1.0 / ratio).ln().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::rng_from_seed;
    use approx::assert_relative_eq;

    #[test]
    fn tau_optimal_examples() {
        assert_relative_eq!(
            tau_optimal(100, 5).unwrap(),
            0.05 * 20f64.ln().sqrt(),
            max_relative = 1e-15
        );
        assert!((tau_optimal(100, 5).unwrap() - 0.086541).abs() < 1e-6);
        assert_relative_eq!(
            tau_optimal(2, 1).unwrap(),
            0.5 * 2f64.ln().sqrt(),
            max_relative = 1e-15
        );
        // n = e·p_n is not an integer ratio; check the log term directly at n/p = 3 instead
        assert_relative_eq!(
            tau_optimal(300, 100).unwrap(),
            3f64.ln().sqrt() / 3.0,
            max_relative = 1e-15
        );
        assert!(tau_optimal(5, 5).is_err());
        assert!(tau_optimal(5, 0).is_err());
    }

    #[test]
    fn zero_coefficient_uses_nu_only() {
        // with β = 0, η² ~ IG(1, 1/ν); P(η² ≤ t) = exp(−(1/ν)/t)
        let state = HorseshoeState {
            eta2: vec![1.0],
            nu: vec![0.5],
        };
        let mut rng = rng_from_seed(5);
        let n = 200_000;
        let mut below = 0;
        for _ in 0..n {
            let s = horseshoe_update(&[0.0], &state, 0.3, &mut rng).unwrap();
            if s.eta2[0] <= 2.0 {
                below += 1;
            }
        }
        let frac = below as f64 / n as f64;
        let expected = (-2.0f64 / 2.0).exp();
        assert!((frac - expected).abs() < 4.0 * (expected * (1.0 - expected) / n as f64).sqrt());
    }

    #[test]
    fn nu_moment_at_unit_eta() {
        // ν | η² = 1 ~ IG(1, 2) so 1/ν ~ Exp(rate 2), mean 0.5
        let mut rng = rng_from_seed(6);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let nu = sample_invgamma(1.0, 1.0 + 1.0 / 1.0, &mut rng).unwrap();
            sum += 1.0 / nu;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn update_keeps_scales_positive() {
        let mut rng = rng_from_seed(7);
        let mut state = HorseshoeState::new(4);
        for _ in 0..1000 {
            state = horseshoe_update(&[0.0, 1e-8, 3.0, -50.0], &state, 0.01, &mut rng).unwrap();
            state.validate().unwrap();
        }
    }
}
