//! Analysis settings, loadable from TOML. Every field has a default.
//!
//! ```toml
//! method = "dbt"
//!
//! [prior]
//! c = 10.0
//! omega = 0.2
//! correlation = "zellner"
//! g = "auto"
//!
//! [consistency]
//! mode = "beta"
//! alpha = 157.0
//! beta = 44.0
//!
//! [mcmc]
//! iterations = 100000
//! burn_in = 20000
//! seed = 1
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::pilot::PilotConfig;
use crate::mcmc::McmcConfig;
use crate::placement::PlacementMethod;
use crate::posterior::REDUCTION_THRESHOLD;
use crate::priors::{
    default_g, psi_from_threshold, ConsistencyPrior, CorrelationMode, Sigma2Prior, SpikeSlabConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    /// From the practical-significance threshold.
    #[default]
    Auto,
    /// From a pilot run with all factors included.
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationChoice {
    #[default]
    Identity,
    Zellner,
}

/// `g` for the Zellner prior: `"auto"` (number of contrasts) or a value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "GRepr", into = "GRepr")]
pub enum GSetting {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<GRepr> for GSetting {
    type Error = String;

    fn try_from(r: GRepr) -> Result<Self, String> {
        match r {
            GRepr::Number(v) => Ok(GSetting::Value(v)),
            GRepr::Text(s) if s == "auto" => Ok(GSetting::Auto),
            GRepr::Text(s) => s
                .parse::<f64>()
                .map(GSetting::Value)
                .map_err(|_| format!("g must be \"auto\" or a number, got `{s}`")),
        }
    }
}

impl From<GSetting> for GRepr {
    fn from(g: GSetting) -> Self {
        match g {
            GSetting::Auto => GRepr::Text("auto".into()),
            GSetting::Value(v) => GRepr::Number(v),
        }
    }
}

impl std::str::FromStr for GSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GSetting::try_from(GRepr::Text(s.to_owned())).map_err(Error::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub c: f64,
    pub omega: f64,
    pub psi: PsiMode,
    pub correlation: CorrelationChoice,
    pub g: GSetting,
    pub sigma2_prior: Sigma2Prior,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            c: 10.0,
            omega: 0.2,
            psi: PsiMode::Auto,
            correlation: CorrelationChoice::Identity,
            g: GSetting::Auto,
            sigma2_prior: Sigma2Prior::InverseGamma {
                shape: 1e-3,
                scale: 1e-3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for PilotSettings {
    fn default() -> Self {
        let d = PilotConfig::default();
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub method: PlacementMethod,
    pub reference: Option<String>,
    pub prior: PriorSettings,
    pub consistency: ConsistencyPrior,
    pub mcmc: McmcConfig,
    pub pilot: PilotSettings,
    pub reduction_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            method: PlacementMethod::LuAdes,
            reference: None,
            prior: PriorSettings::default(),
            consistency: ConsistencyPrior::Fixed { pi_cons: 0.5 },
            mcmc: McmcConfig::default(),
            pilot: PilotSettings::default(),
            reduction_threshold: REDUCTION_THRESHOLD,
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior.c > 1.0 && self.prior.c.is_finite()) {
            return Err(Error::domain(format!("c must exceed 1, got {}", self.prior.c)));
        }
        if !(self.prior.omega > 0.0 && self.prior.omega.is_finite()) {
            return Err(Error::domain(format!("omega must be positive, got {}", self.prior.omega)));
        }
        if let GSetting::Value(g) = self.prior.g {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::domain(format!("g must be positive, got {g}")));
            }
        }
        if let Sigma2Prior::InverseGamma { shape, scale } = self.prior.sigma2_prior {
            if !(shape > 0.0 && scale > 0.0) {
                return Err(Error::domain("inverse-gamma shape and scale must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.reduction_threshold) {
            return Err(Error::domain("reduction threshold must lie in [0, 1]"));
        }
        if self.pilot.burn_in >= self.pilot.iterations {
            return Err(Error::domain("pilot burn-in must be smaller than its iteration count"));
        }
        self.consistency.validate()?;
        self.mcmc.validate()
    }

    pub fn correlation_mode(&self, n_contrasts: usize) -> CorrelationMode {
        match (self.prior.correlation, self.prior.g) {
            (CorrelationChoice::Identity, _) => CorrelationMode::Identity,
            (CorrelationChoice::Zellner, GSetting::Auto) => CorrelationMode::Zellner {
                g: default_g(n_contrasts),
            },
            (CorrelationChoice::Zellner, GSetting::Value(g)) => CorrelationMode::Zellner { g },
        }
    }

    /// Spike-and-slab settings with `ψ` from the threshold rule.
    pub fn threshold_spike_slab(&self, p: usize, n_contrasts: usize) -> Result<SpikeSlabConfig> {
        let psi = psi_from_threshold(self.prior.omega, self.prior.c)?;
        SpikeSlabConfig::new(
            self.prior.c,
            self.prior.omega,
            vec![psi; p],
            self.correlation_mode(n_contrasts),
            self.prior.sigma2_prior,
        )
    }

    pub fn pilot_config(&self) -> PilotConfig {
        PilotConfig {
            c: self.prior.c,
            omega: self.prior.omega,
            chains: self.mcmc.chains.max(2),
            iterations: self.pilot.iterations,
            burn_in: self.pilot.burn_in,
            seed: self.pilot.seed,
            tau_prior: self.mcmc.tau_prior,
            mu_prior_var: self.mcmc.mu_prior_var,
        }
    }
}
