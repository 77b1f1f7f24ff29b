//! Posterior samplers built on the Pólya-gamma expectation proposal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{posterior_mode, Dataset, GaussianPriorParams};
use crate::tuning::{TuningPolicy, TuningStats};

mod horseshoe;
mod importance;
mod mh;

pub use horseshoe::{horseshoe_update, tau_optimal, HorseshoeState};
pub use importance::{is_run, weight_ess};
pub use mh::{log_acceptance_ratio, mh_run, mh_step, MhStep};

/// Conditionally Gaussian prior on the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Gaussian(GaussianPriorParams),
    /// `β_j | η_j², τ ~ N(0, τ² η_j²)`, `η_j ~ C⁺(0, 1)`, global scale fixed.
    Horseshoe {
        tau: f64,
    },
}

impl PriorSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            PriorSpec::Gaussian(g) => {
                if g.dim() != p {
                    return Err(Error::argument(format!(
                        "prior has dimension {}, data has {p} columns",
                        g.dim()
                    )));
                }
            }
            PriorSpec::Horseshoe { tau } => {
                if !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::argument(format!(
                        "horseshoe τ must be positive, got {tau}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            PriorSpec::Gaussian(_) => "gaussian".into(),
            PriorSpec::Horseshoe { tau } => format!("horseshoe(tau={tau})"),
        }
    }
}

/// Where chains start when no explicit `init_beta` is given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    Zeros,
    /// Posterior mode under the Gaussian prior, or under `N(0, 1)` for the
    /// horseshoe. A chain started far in the tails can stall because the
    /// reverse proposal density back to the start is negligible.
    Mode,
}

impl InitStrategy {
    pub fn initial_beta(self, data: &Dataset, prior: &PriorSpec) -> Result<Vec<f64>> {
        match self {
            InitStrategy::Zeros => Ok(vec![0.0; data.p()]),
            InitStrategy::Mode => match prior {
                PriorSpec::Gaussian(g) => posterior_mode(data, g),
                PriorSpec::Horseshoe { .. } => {
                    posterior_mode(data, &GaussianPriorParams::isotropic(data.p(), 0.0, 1.0)?)
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MHConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub tuning: TuningPolicy,
    pub seed: u64,
    /// Starting coefficients; zeros when absent.
    pub init_beta: Option<Vec<f64>>,
    /// Keep the burn-in part of the trace as well.
    pub keep_burnin: bool,
}

impl Default for MHConfig {
    fn default() -> Self {
        MHConfig {
            iterations: 10_000,
            burnin: 5_000,
            tuning: TuningPolicy::default(),
            seed: 0,
            init_beta: None,
            keep_burnin: false,
        }
    }
}

impl MHConfig {
    pub fn new(iterations: usize, burnin: usize, d: f64, seed: u64) -> Result<Self> {
        let cfg = MHConfig {
            iterations,
            burnin,
            tuning: TuningPolicy::new(d)?,
            seed,
            ..MHConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::argument("iterations must be positive"));
        }
        if self.burnin >= self.iterations {
            return Err(Error::argument(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burnin, self.iterations
            )));
        }
        self.tuning.validate()
    }

    pub(crate) fn initial_beta(&self, p: usize) -> Result<Vec<f64>> {
        match &self.init_beta {
            None => Ok(vec![0.0; p]),
            Some(b) if b.len() == p && b.iter().all(|v| v.is_finite()) => Ok(b.clone()),
            Some(b) => Err(Error::argument(format!(
                "initial beta must have {p} finite entries, got {}",
                b.len()
            ))),
        }
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burnin
    }
}

/// Output of a Metropolis-Hastings run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// Post-burn-in draws, one row per iteration.
    pub draws: Matrix,
    /// Full trace including burn-in, when requested.
    pub trace: Option<Matrix>,
    /// Acceptance flag for every iteration, burn-in included.
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub elapsed_seconds: f64,
    /// Post-burn-in local scales `η²` under the horseshoe prior.
    pub prior_trace: Option<Matrix>,
    /// Steps rejected because a proposal could not be built.
    pub failures: u64,
    pub tuning: TuningStats,
}

/// Output of the adaptive importance sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct ISOutput {
    pub draws: Matrix,
    /// Unnormalized log importance weights.
    pub log_weights: Vec<f64>,
    /// `(Σw)² / Σw²`.
    pub ess_weights: f64,
    pub elapsed_seconds: f64,
    /// Iterations that reused the previous proposal because a new one failed.
    pub failures: u64,
    pub tuning: TuningStats,
}

impl ISOutput {
    /// Weights `exp(log w − max log w)`.
    pub fn relative_weights(&self) -> Vec<f64> {
        relative_weights(&self.log_weights)
    }

    /// Self-normalized estimate of `E[h(β)]`.
    pub fn estimate<F: Fn(&[f64]) -> f64>(&self, h: F) -> f64 {
        let w = self.relative_weights();
        let total: f64 = w.iter().sum();
        self.draws
            .rows()
            .zip(&w)
            .map(|(row, wi)| wi * h(row))
            .sum::<f64>()
            / total
    }
}

pub(crate) fn relative_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    log_weights.iter().map(|lw| (lw - max).exp()).collect()
}

pub(crate) fn horseshoe_prior(tau: f64, eta2: &[f64]) -> Result<GaussianPriorParams> {
    let tau2 = tau * tau;
    let variances = eta2
        .iter()
        .map(|e| (tau2 * e).clamp(1e-300, 1e300))
        .collect();
    GaussianPriorParams::diagonal(vec![0.0; eta2.len()], variances)
}
