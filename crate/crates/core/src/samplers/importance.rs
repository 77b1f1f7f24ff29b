//! Adaptive importance sampling: the importance density at iteration `t` is
//! the proposal anchored at the previous draw, and each draw carries weight
//! `π(β_t | y) / q(β_t | β_{t−1})`.

use std::time::Instant;

use super::{
    horseshoe_prior, horseshoe_update, relative_weights, HorseshoeState, ISOutput, MHConfig,
    PriorSpec,
};
use crate::error::{Error, Result};
use crate::kernels::rng_from_seed;
use crate::linalg::Matrix;
use crate::model::{log_poisson_likelihood, log_posterior_unnorm, Dataset};
use crate::proposal::{build_proposal, proposal_logpdf, sample_proposal, ProposalDensity};
use crate::special::horseshoe_marginal_log_density;
use crate::tuning::{compute_r_vector_traced, TuningStats};

/// `(Σw)² / Σw²` from log weights; lies in `[1, T]` for any positive weights.
pub fn weight_ess(log_weights: &[f64]) -> Result<f64> {
    let w = relative_weights(log_weights);
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Estimation(
            "all importance weights vanished; use a larger d or more iterations".into(),
        ));
    }
    Ok((sum * sum / sum_sq).clamp(1.0, w.len() as f64))
}

/// Exact log target. Under the horseshoe the local scales are integrated out
/// analytically so the weights target the marginal posterior of β.
fn log_target(beta: &[f64], data: &Dataset, prior: &PriorSpec) -> Result<f64> {
    match prior {
        PriorSpec::Gaussian(g) => log_posterior_unnorm(beta, data, g),
        PriorSpec::Horseshoe { tau } => {
            let ll = log_poisson_likelihood(beta, data)?;
            if ll == f64::NEG_INFINITY {
                return Ok(ll);
            }
            Ok(ll
                + beta
                    .iter()
                    .map(|b| horseshoe_marginal_log_density(*b, *tau))
                    .sum::<f64>())
        }
    }
}

pub fn is_run(data: &Dataset, prior: &PriorSpec, config: &MHConfig) -> Result<ISOutput> {
    config.validate()?;
    prior.validate(data.p())?;
    let p = data.p();
    let mut rng = rng_from_seed(config.seed);
    let mut stats = TuningStats::default();
    let mut anchor = config.initial_beta(p)?;
    let mut hs_state = match prior {
        PriorSpec::Horseshoe { .. } => Some(HorseshoeState::new(p)),
        PriorSpec::Gaussian(_) => None,
    };

    let retained = config.retained();
    let mut draws = Vec::with_capacity(retained * p);
    let mut log_weights = Vec::with_capacity(retained);
    let mut last: Option<ProposalDensity> = None;
    let mut failures = 0u64;

    let start = Instant::now();
    for t in 0..config.iterations {
        let r = compute_r_vector_traced(&anchor, data, &config.tuning, &mut stats)?;
        let built = match (prior, hs_state.as_ref()) {
            (PriorSpec::Gaussian(g), _) => build_proposal(&anchor, data, &r, g),
            (PriorSpec::Horseshoe { tau }, Some(state)) => {
                build_proposal(&anchor, data, &r, &horseshoe_prior(*tau, &state.eta2)?)
            }
            (PriorSpec::Horseshoe { .. }, None) => {
                unreachable!("horseshoe state initialised above")
            }
        };
        let proposal = match built {
            Ok(q) => q,
            Err(e) => {
                failures += 1;
                match last.take() {
                    Some(q) => q,
                    None => return Err(e),
                }
            }
        };
        let beta = sample_proposal(&proposal, &mut rng);
        let lw = log_target(&beta, data, prior)? - proposal_logpdf(&proposal, &beta)?;
        if let (PriorSpec::Horseshoe { tau }, Some(state)) = (prior, hs_state.as_mut()) {
            *state = horseshoe_update(&beta, state, *tau, &mut rng)?;
        }
        if t >= config.burnin {
            draws.extend_from_slice(&beta);
            log_weights.push(lw);
        }
        anchor = beta;
        last = Some(proposal);
    }
    let elapsed_seconds = start.elapsed().as_secs_f64();

    let ess_weights = weight_ess(&log_weights)?;
    Ok(ISOutput {
        draws: Matrix::from_row_major(retained, p, draws)?,
        log_weights,
        ess_weights,
        elapsed_seconds,
        failures,
        tuning: stats,
    })
}
