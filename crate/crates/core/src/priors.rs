//! Spike-and-slab prior on the inconsistency factors and its tuning.
//!
//! Each factor gets `b_ℓ | γ_ℓ ~ (1 − γ_ℓ) N(0, ψ_ℓ²) + γ_ℓ N(0, c² ψ_ℓ²)`,
//! or jointly `b | γ ~ N(0, D_γ R D_γ)` with `D_γ = diag(a_ℓ ψ_ℓ)`,
//! `a_ℓ = c^{γ_ℓ}`, and `R` either the identity or the Zellner form
//! `g (ZᵀZ)⁻¹ σ²`. The common inclusion probability is calibrated so that the
//! prior probability of the all-zero γ equals `π_cons`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::mcmc::pilot::{pilot_psi, PilotConfig, PilotOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum CorrelationMode {
    Identity,
    Zellner { g: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Sigma2Prior {
    /// `π(σ²) ∝ 1/σ²`.
    Jeffreys,
    InverseGamma { shape: f64, scale: f64 },
}

impl Sigma2Prior {
    /// `(shape, rate)` added to the conjugate update.
    pub fn shape_rate(self) -> (f64, f64) {
        match self {
            Sigma2Prior::Jeffreys => (0.0, 0.0),
            Sigma2Prior::InverseGamma { shape, scale } => (shape, scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabConfig {
    pub c: f64,
    pub omega: f64,
    pub psi: Vec<f64>,
    pub correlation: CorrelationMode,
    pub sigma2_prior: Sigma2Prior,
}

impl SpikeSlabConfig {
    pub fn new(
        c: f64,
        omega: f64,
        psi: Vec<f64>,
        correlation: CorrelationMode,
        sigma2_prior: Sigma2Prior,
    ) -> Result<Self> {
        let cfg = Self {
            c,
            omega,
            psi,
            correlation,
            sigma2_prior,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Identity correlation, every `ψ_ℓ` set from the practical-significance
    /// threshold.
    pub fn from_threshold(p: usize, c: f64, omega: f64) -> Result<Self> {
        let psi = psi_from_threshold(omega, c)?;
        Self::new(c, omega, vec![psi; p], CorrelationMode::Identity, Sigma2Prior::Jeffreys)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("c must exceed 1, got {}", self.c)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::domain(format!("omega must be positive, got {}", self.omega)));
        }
        if let Some(p) = self.psi.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("spike sd must be positive, got {p}")));
        }
        if let CorrelationMode::Zellner { g } = self.correlation {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::domain(format!("g must be positive, got {g}")));
            }
        }
        if let Sigma2Prior::InverseGamma { shape, scale } = self.sigma2_prior {
            if !(shape > 0.0 && scale > 0.0) {
                return Err(Error::domain("inverse-gamma shape and scale must be positive"));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.psi.len()
    }

    /// Diagonal of `D_γ`.
    pub fn scales(&self, gamma: &GammaVector) -> Vec<f64> {
        self.psi
            .iter()
            .zip(&gamma.0)
            .map(|(psi, on)| if *on { self.c * psi } else { *psi })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ConsistencyPrior {
    Fixed { pi_cons: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl ConsistencyPrior {
    pub fn validate(self) -> Result<()> {
        match self {
            ConsistencyPrior::Fixed { pi_cons } if !(pi_cons > 0.0 && pi_cons < 1.0) => Err(
                Error::domain(format!("pi_cons must lie in (0, 1), got {pi_cons}")),
            ),
            ConsistencyPrior::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => Err(
                Error::domain("Beta parameters for pi_cons must be positive"),
            ),
            _ => Ok(()),
        }
    }

    pub fn mean(self) -> f64 {
        match self {
            ConsistencyPrior::Fixed { pi_cons } => pi_cons,
            ConsistencyPrior::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }

    pub fn sd(self) -> f64 {
        match self {
            ConsistencyPrior::Fixed { .. } => 0.0,
            ConsistencyPrior::Beta { alpha, beta } => {
                let s = alpha + beta;
                (alpha * beta / (s * s * (s + 1.0))).sqrt()
            }
        }
    }
}

/// Inclusion indicators, one per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GammaVector(pub Vec<bool>);

impl GammaVector {
    pub fn zeros(p: usize) -> Self {
        Self(vec![false; p])
    }

    pub fn ones(p: usize) -> Self {
        Self(vec![true; p])
    }

    pub fn active(&self) -> usize {
        self.0.iter().filter(|g| **g).count()
    }

    pub fn bitstring(&self) -> String {
        self.0.iter().map(|g| if *g { '1' } else { '0' }).collect()
    }
}

/// Common per-factor inclusion probability `1 − π_cons^{1/p}`.
pub fn inclusion_probability(pi_cons: f64, p: usize) -> Result<f64> {
    if !(pi_cons > 0.0 && pi_cons < 1.0) {
        return Err(Error::domain(format!("pi_cons must lie in (0, 1), got {pi_cons}")));
    }
    if p == 0 {
        return Err(Error::domain("at least one factor is required"));
    }
    // 1 - exp(ln(pi)/p) without cancellation
    Ok(-(pi_cons.ln() / p as f64).exp_m1())
}

/// Prior probability of consistency implied by independent Bernoulli(π)
/// indicators: `(1 − π)^p`.
pub fn naive_consistency_probability(pi: f64, p: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::domain(format!("pi must lie in [0, 1], got {pi}")));
    }
    Ok((1.0 - pi).powi(p as i32))
}

/// Spike standard deviations at which the spike and slab densities cross:
/// `2c² log c / (c² − 1)`.
pub fn xi(c: f64) -> Result<f64> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must exceed 1, got {c}")));
    }
    let ln_c = (c - 1.0).ln_1p();
    Ok(2.0 * c * c * ln_c / ((c - 1.0) * (c + 1.0)))
}

/// `ψ = ω / √ξ(c)`: the spike/slab densities cross exactly at `|b| = ω`.
pub fn psi_from_threshold(omega: f64, c: f64) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::domain(format!("omega must be positive, got {omega}")));
    }
    Ok(omega / xi(c)?.sqrt())
}

/// Unit-information choice `g = N`.
pub fn default_g(n_contrasts: usize) -> f64 {
    n_contrasts.max(1) as f64
}

/// Beta(157, 44) on `π_cons`, from 157 consistent networks out of 201.
pub fn historical_consistency_prior() -> ConsistencyPrior {
    ConsistencyPrior::Beta {
        alpha: 157.0,
        beta: 44.0,
    }
}

fn ztz_inverse(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    (z.transpose() * z)
        .try_inverse()
        .ok_or_else(|| Error::numerical("ZᵀZ is singular; factors are collinear"))
}

/// `D_γ R D_γ`.
pub fn prior_b_covariance(
    config: &SpikeSlabConfig,
    gamma: &GammaVector,
    z: &DMatrix<f64>,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    let p = config.p();
    if gamma.0.len() != p || z.ncols() != p {
        return Err(Error::dim(format!(
            "psi has {p} entries, gamma {}, Z {} columns",
            gamma.0.len(),
            z.ncols()
        )));
    }
    let d = DVector::from_vec(config.scales(gamma));
    let r = match config.correlation {
        CorrelationMode::Identity => DMatrix::identity(p, p),
        CorrelationMode::Zellner { g } => {
            if !(sigma2 > 0.0) {
                return Err(Error::domain("sigma2 must be positive"));
            }
            ztz_inverse(z)? * (g * sigma2)
        }
    };
    let mut out = DMatrix::from_fn(p, p, |i, j| d[i] * r[(i, j)] * d[j]);
    out = (&out + out.transpose()) * 0.5;
    Ok(out)
}

/// Whether `b` lies where the slab density dominates under the correlated
/// prior: `bᵀ[D₀(ZᵀZ)⁻¹D₀]⁻¹b > g p σ² ξ(c)`. The boundary belongs to the
/// spike.
pub fn correlated_significance_region(
    b: &DVector<f64>,
    config: &SpikeSlabConfig,
    z: &DMatrix<f64>,
    sigma2: f64,
) -> Result<bool> {
    let CorrelationMode::Zellner { g } = config.correlation else {
        return Err(Error::domain("the correlated region is defined for the Zellner prior"));
    };
    let p = config.p();
    if b.len() != p || z.ncols() != p {
        return Err(Error::dim(format!(
            "b has length {}, psi {p}, Z {} columns",
            b.len(),
            z.ncols()
        )));
    }
    let q = correlated_quadratic_form(b, &config.psi, z);
    Ok(q > g * p as f64 * sigma2 * xi(config.c)?)
}

/// `bᵀ D₀⁻¹ (ZᵀZ) D₀⁻¹ b`.
pub(crate) fn correlated_quadratic_form(b: &DVector<f64>, psi: &[f64], z: &DMatrix<f64>) -> f64 {
    let scaled = DVector::from_fn(b.len(), |i, _| b[i] / psi[i]);
    let zs = z * scaled;
    zs.norm_squared()
}
