//! Placement, sampling and reporting in one call.

use crate::config::{AnalysisConfig, PsiMode};
use crate::design::{build_x, DesignMatrixX};
use crate::error::Result;
use crate::mcmc::pilot::{pilot_psi, PilotOutcome};
use crate::mcmc::{run_ssifs, ChainOutput, SsifsOutcome};
use crate::network::EvidenceNetwork;
use crate::placement::{place, InconsistencySpec};
use crate::priors::{CorrelationMode, SpikeSlabConfig};
use crate::report::{build_report, ConsistencyReport};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub x: DesignMatrixX,
    pub spec: InconsistencySpec,
    /// `None` when no factor was placed.
    pub spike_slab: Option<SpikeSlabConfig>,
    pub pilot: Option<PilotOutcome>,
    pub chains: Vec<ChainOutput>,
    pub report: ConsistencyReport,
}

pub fn analyze(net: &EvidenceNetwork, cfg: &AnalysisConfig) -> Result<Analysis> {
    cfg.validate()?;
    let x = build_x(net)?;
    let spec = place(net, cfg.method)?;
    let mut notes = spec.notes.clone();

    if spec.p() == 0 {
        notes.push("no inconsistency factor can be placed; the network is consistent by construction".into());
        let report = ConsistencyReport::consistent_by_construction(net, &spec, notes);
        return Ok(Analysis {
            x,
            spec,
            spike_slab: None,
            pilot: None,
            chains: Vec::new(),
            report,
        });
    }

    let mut ss = cfg.threshold_spike_slab(spec.p(), net.n_contrasts())?;
    let mut pilot = None;
    if cfg.prior.psi == PsiMode::Pilot {
        let outcome = pilot_psi(net, &x.matrix, &spec.z, &cfg.pilot_config())?;
        notes.push("spike sds set to the pilot posterior sd divided by c".into());
        notes.extend(outcome.warnings.iter().cloned());
        ss.psi = outcome.psi.clone();
        pilot = Some(outcome);
    }
    if let CorrelationMode::Zellner { g } = ss.correlation {
        notes.push(format!("Zellner correlation with g = {g}"));
    }

    let chains = match run_ssifs(net, &x.matrix, &spec, &ss, cfg.consistency, &cfg.mcmc)? {
        SsifsOutcome::Chains(c) => c,
        SsifsOutcome::ConsistentByConstruction => unreachable!("p > 0 was checked above"),
    };
    let report = build_report(net, &spec, &x.labels, &chains, cfg.reduction_threshold, notes)?;
    Ok(Analysis {
        x,
        spec,
        spike_slab: Some(ss),
        pilot,
        chains,
        report,
    })
}
