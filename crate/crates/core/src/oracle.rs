//! Exact posterior model probabilities by enumeration, for small `p`.
//!
//! With `τ` fixed, identity correlation and a fixed consistency prior, every
//! model `γ` has a Gaussian marginal likelihood
//! `y ~ N(0, V + W P_γ Wᵀ)` where `W = [X | Z]`, `V = Σ + Δ(τ)` and
//! `P_γ = diag(v_μ I, D_γ²)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, mvn_logpdf};
use crate::mcmc::heterogeneity_block;
use crate::network::EvidenceNetwork;
use crate::priors::{inclusion_probability, ConsistencyPrior, CorrelationMode, GammaVector, SpikeSlabConfig};

pub const MAX_ORACLE_FACTORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub id: u64,
    pub gamma: String,
    pub log_marginal: f64,
    pub log_prior: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Indexed by model id.
    pub models: Vec<OracleModel>,
}

impl OracleResult {
    pub fn probability(&self, id: u64) -> f64 {
        self.models.get(id as usize).map_or(0.0, |m| m.probability)
    }

    /// Exact inclusion probability of each factor.
    pub fn pips(&self, p: usize) -> Vec<f64> {
        (0..p)
            .map(|l| {
                self.models
                    .iter()
                    .filter(|m| m.id >> l & 1 == 1)
                    .map(|m| m.probability)
                    .sum()
            })
            .collect()
    }
}

/// Dense `Σ + Δ(τ)`.
pub fn total_covariance(net: &EvidenceNetwork, tau: f64) -> DMatrix<f64> {
    let n = net.n_contrasts();
    let mut v = DMatrix::zeros(n, n);
    for ((start, len), block) in net.study_ranges().into_iter().zip(&net.sigma.blocks) {
        let full = block + heterogeneity_block(len, tau);
        v.view_mut((start, start), (len, len)).copy_from(&full);
    }
    v
}

/// Log marginal likelihood of one model with Gaussian priors of the given
/// variances on `μ` and `b`.
pub fn log_marginal(
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    mu_prior_var: f64,
    b_prior_var: &[f64],
) -> Result<f64> {
    let mut cov = v + x * x.transpose() * mu_prior_var;
    for (l, var) in b_prior_var.iter().enumerate() {
        let col = z.column(l);
        cov += col * col.transpose() * *var;
    }
    mvn_logpdf(y, &cov)
}

pub fn enumerate_exact(
    net: &EvidenceNetwork,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ss: &SpikeSlabConfig,
    prior: ConsistencyPrior,
    tau: f64,
    mu_prior_var: f64,
) -> Result<OracleResult> {
    let p = z.ncols();
    if p == 0 {
        return Err(Error::domain("no inconsistency factors to enumerate"));
    }
    if p > MAX_ORACLE_FACTORS {
        return Err(Error::domain(format!(
            "exact enumeration supports at most {MAX_ORACLE_FACTORS} factors, got {p}"
        )));
    }
    if ss.correlation != CorrelationMode::Identity {
        return Err(Error::domain("exact enumeration requires the identity correlation"));
    }
    let ConsistencyPrior::Fixed { pi_cons } = prior else {
        return Err(Error::domain("exact enumeration requires a fixed consistency prior"));
    };
    if ss.p() != p || x.nrows() != net.n_contrasts() || z.nrows() != net.n_contrasts() {
        return Err(Error::dim("network, X, Z and spike sds do not conform"));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain("tau must be non-negative"));
    }
    let pi = inclusion_probability(pi_cons, p)?;
    let y = net.y();
    let v = total_covariance(net, tau);

    let rows: Vec<(f64, f64)> = (0..1u64 << p)
        .into_par_iter()
        .map(|id| {
            let gamma = gamma_of(id, p);
            let vars: Vec<f64> = ss.scales(&gamma).iter().map(|d| d * d).collect();
            let lm = log_marginal(&y, &v, x, z, mu_prior_var, &vars)?;
            let k = gamma.active() as f64;
            let lp = k * pi.ln() + (p as f64 - k) * (-pi).ln_1p();
            Ok((lm, lp))
        })
        .collect::<Result<_>>()?;
    let joint: Vec<f64> = rows.iter().map(|(m, p)| m + p).collect();
    let norm = log_sum_exp(&joint);
    let models = rows
        .iter()
        .enumerate()
        .map(|(id, (lm, lp))| OracleModel {
            id: id as u64,
            gamma: gamma_of(id as u64, p).bitstring(),
            log_marginal: *lm,
            log_prior: *lp,
            probability: (lm + lp - norm).exp(),
        })
        .collect();
    Ok(OracleResult { models })
}

fn gamma_of(id: u64, p: usize) -> GammaVector {
    GammaVector((0..p).map(|l| id >> l & 1 == 1).collect())
}
