//! Serializable summary of one analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::ChainOutput;
use crate::network::EvidenceNetwork;
use crate::placement::{InconsistencySpec, PlacementMethod};
use crate::posterior::{
    consistency_odds, convergence, evidence_label, median_probability_model, pip,
    posterior_model_probs, reduce_dimension, Convergence, EvidenceLabel, Odds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Sampled,
    ConsistentByConstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub label: String,
    pub pip: f64,
    pub mcse: f64,
    pub b_mean: f64,
    pub b_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: u64,
    pub gamma: String,
    pub factors: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub draws: usize,
    pub tau_acceptance: Option<f64>,
    pub pi_cons_acceptance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub status: Status,
    pub method: PlacementMethod,
    pub reference: String,
    pub n_treatments: usize,
    pub n_studies: usize,
    pub n_contrasts: usize,
    pub p: usize,
    pub factors: Vec<FactorSummary>,
    /// Visited models by decreasing probability.
    pub model_table: Vec<ModelEntry>,
    pub consistent_prob: f64,
    /// `None` when no factor could be placed.
    pub po_consistency: Option<Odds>,
    pub po_inconsistency: Option<Odds>,
    pub evidence: Option<EvidenceLabel>,
    pub median_model: Vec<String>,
    pub reduced_factors: Vec<String>,
    pub diagnostics: Vec<Convergence>,
    pub diagnostics_available: bool,
    pub converged: bool,
    pub tau: Option<ParameterSummary>,
    pub basic_contrasts: Vec<ParameterSummary>,
    pub chains: Vec<ChainSummary>,
    pub notes: Vec<String>,
}

impl ConsistencyReport {
    pub fn consistent_by_construction(
        net: &EvidenceNetwork,
        spec: &InconsistencySpec,
        notes: Vec<String>,
    ) -> Self {
        Self {
            status: Status::ConsistentByConstruction,
            method: spec.method,
            reference: net.reference().id.clone(),
            n_treatments: net.n_treatments(),
            n_studies: net.n_studies(),
            n_contrasts: net.n_contrasts(),
            p: 0,
            factors: Vec::new(),
            model_table: vec![ModelEntry {
                id: 0,
                gamma: String::new(),
                factors: Vec::new(),
                probability: 1.0,
            }],
            consistent_prob: 1.0,
            po_consistency: None,
            po_inconsistency: None,
            evidence: None,
            median_model: Vec::new(),
            reduced_factors: Vec::new(),
            diagnostics: Vec::new(),
            diagnostics_available: false,
            converged: true,
            tau: None,
            basic_contrasts: Vec::new(),
            chains: Vec::new(),
            notes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `factor,pip,mcse` rows.
    pub fn pips_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["factor", "pip", "mcse"])?;
        for f in &self.factors {
            w.write_record([f.label.clone(), f.pip.to_string(), f.mcse.to_string()])?;
        }
        finish(w)
    }

    /// `model,gamma,factors,probability` rows.
    pub fn model_table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "gamma", "factors", "probability"])?;
        for m in &self.model_table {
            w.write_record([
                m.id.to_string(),
                m.gamma.clone(),
                m.factors.join(";"),
                m.probability.to_string(),
            ])?;
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    let v = xs.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

pub fn build_report(
    net: &EvidenceNetwork,
    spec: &InconsistencySpec,
    basic_labels: &[String],
    chains: &[ChainOutput],
    reduction_threshold: f64,
    notes: Vec<String>,
) -> Result<ConsistencyReport> {
    let pips = pip(chains)?;
    let table = posterior_model_probs(chains)?;
    let po = consistency_odds(&table)?;
    let labels = &spec.labels;
    let p = spec.p();
    if table.p != p {
        return Err(Error::dim("chains and spec disagree on the number of factors"));
    }

    let factors = (0..p)
        .map(|l| {
            let (b_mean, b_sd) = mean_sd(chains.iter().flat_map(|c| c.b_series(l)));
            FactorSummary {
                label: labels[l].clone(),
                pip: pips[l].pip,
                mcse: pips[l].mcse,
                b_mean,
                b_sd,
            }
        })
        .collect();
    let model_table = table
        .ranked()
        .into_iter()
        .map(|(id, probability)| ModelEntry {
            id,
            gamma: (0..p).map(|l| if id >> l & 1 == 1 { '1' } else { '0' }).collect(),
            factors: (0..p).filter(|l| id >> l & 1 == 1).map(|l| labels[l].clone()).collect(),
            probability,
        })
        .collect();
    let pip_values: Vec<f64> = pips.iter().map(|p| p.pip).collect();
    let diagnostics = convergence(chains, labels);
    let tau_varies = chains.iter().any(|c| c.tau.iter().any(|t| *t != c.tau[0]));
    let tau = tau_varies.then(|| {
        let (mean, sd) = mean_sd(chains.iter().flat_map(|c| c.tau.iter().copied()));
        ParameterSummary {
            label: "tau".into(),
            mean,
            sd,
        }
    });
    let k = chains.len() as f64;
    let basic_contrasts = basic_labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let mean = chains.iter().map(|c| c.mu_mean[j]).sum::<f64>() / k;
            // pooled second moment across equally sized chains
            let second = chains
                .iter()
                .map(|c| c.mu_sd[j].powi(2) + c.mu_mean[j].powi(2))
                .sum::<f64>()
                / k;
            ParameterSummary {
                label: label.clone(),
                mean,
                sd: (second - mean * mean).max(0.0).sqrt(),
            }
        })
        .collect();

    Ok(ConsistencyReport {
        status: Status::Sampled,
        method: spec.method,
        reference: net.reference().id.clone(),
        n_treatments: net.n_treatments(),
        n_studies: net.n_studies(),
        n_contrasts: net.n_contrasts(),
        p,
        factors,
        model_table,
        consistent_prob: table.consistent_prob(),
        po_consistency: Some(po),
        po_inconsistency: Some(po.inverse()),
        evidence: Some(evidence_label(po.value())?),
        median_model: median_probability_model(&pip_values)
            .into_iter()
            .map(|l| labels[l].clone())
            .collect(),
        reduced_factors: reduce_dimension(&pip_values, reduction_threshold)
            .into_iter()
            .map(|l| labels[l].clone())
            .collect(),
        converged: diagnostics.iter().all(|d| !d.flagged),
        diagnostics_available: !diagnostics.is_empty(),
        diagnostics,
        tau,
        basic_contrasts,
        chains: chains
            .iter()
            .map(|c| ChainSummary {
                chain: c.chain,
                draws: c.n_draws,
                tau_acceptance: c.tau_acceptance,
                pi_cons_acceptance: c.pi_cons_acceptance,
            })
            .collect(),
        notes,
    })
}
