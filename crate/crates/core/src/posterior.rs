//! Decision quantities from chain output: inclusion probabilities, model
//! table, posterior odds, median probability model and diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{batch_means_se, split_rhat};
use crate::error::{Error, Result};
use crate::mcmc::ChainOutput;

pub const MCSE_BATCHES: usize = 50;
pub const RHAT_THRESHOLD: f64 = 1.05;
pub const REDUCTION_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pip {
    pub pip: f64,
    pub mcse: f64,
}

/// Pooled inclusion frequency per factor with a batch-means standard error.
pub fn pip(chains: &[ChainOutput]) -> Result<Vec<Pip>> {
    let p = common_p(chains)?;
    Ok((0..p)
        .map(|l| {
            let pooled: Vec<f64> = chains.iter().flat_map(|c| c.gamma_series(l)).collect();
            let total: f64 = pooled.iter().sum();
            // chains are concatenated, so batches never straddle more than one boundary
            Pip {
                pip: total / pooled.len() as f64,
                mcse: batch_means_se(&pooled, MCSE_BATCHES),
            }
        })
        .collect())
}

fn common_p(chains: &[ChainOutput]) -> Result<usize> {
    let first = chains
        .first()
        .ok_or_else(|| Error::domain("no chains to summarize"))?;
    if chains.iter().any(|c| c.n_draws == 0) {
        return Err(Error::domain("a chain has no draws"));
    }
    if chains.iter().any(|c| c.p != first.p) {
        return Err(Error::dim("chains disagree on the number of factors"));
    }
    Ok(first.p)
}

pub const MAX_MODEL_ID_FACTORS: usize = 62;

/// `Σ γ_ℓ 2^{ℓ−1}` with factors numbered from one.
pub fn model_id(gamma: &[u8]) -> Result<u64> {
    if gamma.len() > MAX_MODEL_ID_FACTORS {
        return Err(Error::domain(format!(
            "model ids support at most {MAX_MODEL_ID_FACTORS} factors; reduce the dimension first"
        )));
    }
    Ok(gamma
        .iter()
        .enumerate()
        .fold(0u64, |acc, (l, g)| acc | (u64::from(*g & 1) << l)))
}

/// Visit counts of each model id, pooled across chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTable {
    pub p: usize,
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl ModelTable {
    pub fn probability(&self, id: u64) -> f64 {
        self.counts.get(&id).map_or(0.0, |c| *c as f64 / self.total as f64)
    }

    pub fn consistent_prob(&self) -> f64 {
        self.probability(0)
    }

    /// `(id, probability)` by decreasing probability, ties by id.
    pub fn ranked(&self) -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, u64)> = self.counts.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter()
            .map(|(id, c)| (id, c as f64 / self.total as f64))
            .collect()
    }
}

pub fn posterior_model_probs(chains: &[ChainOutput]) -> Result<ModelTable> {
    let p = common_p(chains)?;
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    for c in chains {
        for t in 0..c.n_draws {
            *counts.entry(model_id(c.gamma(t))?).or_insert(0) += 1;
            total += 1;
        }
    }
    Ok(ModelTable { p, counts, total })
}

/// Posterior odds, with bounds in place of 0 and infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Odds {
    Finite(f64),
    /// True odds are at least this value.
    AtLeast(f64),
    /// True odds are at most this value.
    AtMost(f64),
}

impl Odds {
    pub fn value(self) -> f64 {
        match self {
            Odds::Finite(v) | Odds::AtLeast(v) | Odds::AtMost(v) => v,
        }
    }

    pub fn inverse(self) -> Odds {
        match self {
            Odds::Finite(v) => Odds::Finite(1.0 / v),
            Odds::AtLeast(v) => Odds::AtMost(1.0 / v),
            Odds::AtMost(v) => Odds::AtLeast(1.0 / v),
        }
    }
}

impl fmt::Display for Odds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Odds::Finite(v) => write!(f, "{v:.3}"),
            Odds::AtLeast(v) => write!(f, ">= {v:.3}"),
            Odds::AtMost(v) => write!(f, "<= {v:.3}"),
        }
    }
}

/// Odds of the consistency model against all visited alternatives pooled.
pub fn consistency_odds(table: &ModelTable) -> Result<Odds> {
    if table.total == 0 {
        return Err(Error::domain("empty model table"));
    }
    Ok(odds_from_prob(table.consistent_prob(), table.total))
}

/// `q / (1 − q)`; at 0 or 1 the odds are bounded by shifting one draw.
pub fn odds_from_prob(q: f64, total: u64) -> Odds {
    let eps = 1.0 / total.max(1) as f64;
    if q <= 0.0 {
        Odds::AtMost(eps / (1.0 - eps).max(eps))
    } else if q >= 1.0 {
        Odds::AtLeast((1.0 - eps).max(eps) / eps)
    } else {
        Odds::Finite(q / (1.0 - q))
    }
}

/// Factors with PIP strictly above one half.
pub fn median_probability_model(pips: &[f64]) -> Vec<usize> {
    (0..pips.len()).filter(|l| pips[*l] > 0.5).collect()
}

/// Factors with PIP at or above `threshold`.
pub fn reduce_dimension(pips: &[f64], threshold: f64) -> Vec<usize> {
    (0..pips.len()).filter(|l| pips[*l] >= threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Consistency,
    Inconsistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLabel {
    pub category: String,
    /// `None` when the odds are exactly one.
    pub favours: Option<Hypothesis>,
}

impl fmt::Display for EvidenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.favours {
            Some(Hypothesis::Consistency) => write!(f, "{} evidence for consistency", self.category),
            Some(Hypothesis::Inconsistency) => write!(f, "{} evidence for inconsistency", self.category),
            None => write!(f, "{} evidence, no direction", self.category),
        }
    }
}

/// Kass and Raftery bands on the odds of whichever hypothesis is favoured.
/// Takes the odds of consistency.
pub fn evidence_label(po_consistency: f64) -> Result<EvidenceLabel> {
    if !(po_consistency > 0.0) || po_consistency.is_nan() {
        return Err(Error::domain(format!("odds must be positive, got {po_consistency}")));
    }
    let (odds, favours) = if po_consistency > 1.0 {
        (po_consistency, Some(Hypothesis::Consistency))
    } else if po_consistency < 1.0 {
        (1.0 / po_consistency, Some(Hypothesis::Inconsistency))
    } else {
        (1.0, None)
    };
    let category = if odds < 3.0 {
        "marginal"
    } else if odds < 20.0 {
        "positive/substantial"
    } else if odds < 150.0 {
        "strong"
    } else {
        "very strong"
    };
    Ok(EvidenceLabel {
        category: category.into(),
        favours,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub parameter: String,
    /// `None` when unavailable.
    pub rhat: Option<f64>,
    pub flagged: bool,
}

/// Split-R̂ for `τ`, each `b_ℓ`, each inclusion indicator, and the optional
/// scales. Needs at least two chains.
pub fn convergence(chains: &[ChainOutput], labels: &[String]) -> Vec<Convergence> {
    let mut out = Vec::new();
    if chains.len() < 2 || chains.iter().any(|c| c.n_draws < 4) {
        return out;
    }
    let mut push = |name: String, series: Vec<Vec<f64>>| {
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let rhat = split_rhat(&refs);
        out.push(Convergence {
            parameter: name,
            flagged: rhat.is_some_and(|r| !(r <= RHAT_THRESHOLD)),
            rhat,
        });
    };
    let p = chains[0].p;
    let name = |l: usize| labels.get(l).cloned().unwrap_or_else(|| format!("factor {}", l + 1));
    if chains[0].tau.iter().any(|t| *t != chains[0].tau[0]) {
        push("tau".into(), chains.iter().map(|c| c.tau.clone()).collect());
    }
    for l in 0..p {
        push(format!("b[{}]", name(l)), chains.iter().map(|c| c.b_series(l)).collect());
    }
    for l in 0..p {
        push(format!("pip[{}]", name(l)), chains.iter().map(|c| c.gamma_series(l)).collect());
    }
    if !chains[0].sigma2.is_empty() {
        push("log sigma2".into(), chains.iter().map(|c| c.sigma2.iter().map(|s| s.ln()).collect()).collect());
    }
    if !chains[0].pi_cons.is_empty() {
        push("pi_cons".into(), chains.iter().map(|c| c.pi_cons.clone()).collect());
    }
    out
}
