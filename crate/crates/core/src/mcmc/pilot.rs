//! Data-driven spike scales from a short run with every factor switched on.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{run_model, McmcConfig, Model, TauPrior};
use crate::diagnostics::split_rhat;
use crate::error::Result;
use crate::network::EvidenceNetwork;
use crate::priors::{psi_from_threshold, ConsistencyPrior, CorrelationMode, GammaVector, Sigma2Prior, SpikeSlabConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub c: f64,
    pub omega: f64,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub tau_prior: TauPrior,
    pub mu_prior_var: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            omega: 0.2,
            chains: 2,
            iterations: 20_000,
            burn_in: 5_000,
            seed: 7,
            tau_prior: TauPrior::default(),
            mu_prior_var: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotOutcome {
    pub psi: Vec<f64>,
    pub rhat: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// `ψ_ℓ` = pilot posterior sd of `b_ℓ` divided by `c`, so the slab spread
/// matches the pilot. The pilot uses the identity slab with scale from the
/// threshold rule.
pub fn pilot_psi(
    net: &EvidenceNetwork,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    cfg: &PilotConfig,
) -> Result<PilotOutcome> {
    let p = z.ncols();
    let psi0 = psi_from_threshold(cfg.omega, cfg.c)?;
    let ss = SpikeSlabConfig::new(
        cfg.c,
        cfg.omega,
        vec![psi0; p],
        CorrelationMode::Identity,
        Sigma2Prior::Jeffreys,
    )?;
    let model = Model::new(
        net,
        x,
        z,
        ss,
        ConsistencyPrior::Fixed { pi_cons: 0.5 },
        cfg.tau_prior,
        cfg.mu_prior_var,
    )?;
    let mcfg = McmcConfig {
        chains: cfg.chains,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        thin: 1,
        tau_prior: cfg.tau_prior,
        mu_prior_var: cfg.mu_prior_var,
    };
    let chains = run_model(&model, &mcfg, Some(&GammaVector::ones(p)))?;
    let mut psi = Vec::with_capacity(p);
    let mut rhat = Vec::with_capacity(p);
    let mut warnings = Vec::new();
    for l in 0..p {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.b_series(l)).collect();
        let pooled: Vec<f64> = series.iter().flatten().copied().collect();
        let n = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / n;
        let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        psi.push(var.sqrt() / cfg.c);
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let r = if chains.len() >= 2 { split_rhat(&refs) } else { None };
        if let Some(r) = r {
            if r > 1.05 {
                warnings.push(format!("pilot for factor {} has not converged (R-hat {r:.3})", l + 1));
            }
        }
        rhat.push(r);
    }
    Ok(PilotOutcome { psi, rhat, warnings })
}
