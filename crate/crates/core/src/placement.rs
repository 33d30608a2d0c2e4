//! Placement of inconsistency factors: which comparisons (or designs) get a
//! column in `Z`.
//!
//! All three methods share one guard: a candidate column is kept only if it
//! raises the rank of `[X | Z]`, so the resulting spec never contains a factor
//! collinear with the basic parameters or with earlier factors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{build_x, matrix_to_csv, row_labels};
use crate::error::{Error, Result};
use crate::graph::{find_bridges, independent_loops, ComparisonGraph, Edge};
use crate::linalg::SpanTracker;
use crate::network::EvidenceNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementMethod {
    #[serde(rename = "lu-ades")]
    LuAdes,
    #[serde(rename = "dbt")]
    DesignByTreatment,
    #[serde(rename = "jackson")]
    Jackson,
}

impl PlacementMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PlacementMethod::LuAdes => "lu-ades",
            PlacementMethod::DesignByTreatment => "dbt",
            PlacementMethod::Jackson => "jackson",
        }
    }
}

impl fmt::Display for PlacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlacementMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lu-ades" => Ok(PlacementMethod::LuAdes),
            "dbt" => Ok(PlacementMethod::DesignByTreatment),
            "jackson" => Ok(PlacementMethod::Jackson),
            other => Err(Error::domain(format!(
                "unknown placement method `{other}` (expected lu-ades, dbt or jackson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Factor {
    /// Factor on a comparison, owned by one independent loop.
    Loop { pair: Edge, nodes: Vec<usize> },
    /// Factor on one comparison within one design.
    DesignContrast { design: Vec<usize>, pair: Edge },
    /// Factor shared by every row of a design.
    Design { design: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InconsistencySpec {
    pub method: PlacementMethod,
    pub factors: Vec<Factor>,
    pub labels: Vec<String>,
    /// `N × p`, entries in {−1, 0, 1}.
    pub z: DMatrix<f64>,
    /// Conventions worth surfacing in reports.
    pub notes: Vec<String>,
}

impl InconsistencySpec {
    pub fn p(&self) -> usize {
        self.factors.len()
    }

    pub fn to_csv(&self, net: &EvidenceNetwork) -> String {
        matrix_to_csv(&self.z, &self.labels, &row_labels(net))
    }

    /// Keep only the listed factor positions, in order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let z = DMatrix::from_fn(self.z.nrows(), keep.len(), |i, j| self.z[(i, keep[j])]);
        Self {
            method: self.method,
            factors: keep.iter().map(|k| self.factors[*k].clone()).collect(),
            labels: keep.iter().map(|k| self.labels[*k].clone()).collect(),
            z,
            notes: self.notes.clone(),
        }
    }
}

pub fn place(net: &EvidenceNetwork, method: PlacementMethod) -> Result<InconsistencySpec> {
    match method {
        PlacementMethod::LuAdes => place_lu_ades(net),
        PlacementMethod::DesignByTreatment => place_design_by_treatment(net),
        PlacementMethod::Jackson => place_jackson(net),
    }
}

fn require_connected(net: &EvidenceNetwork) -> Result<()> {
    if net.is_connected() {
        Ok(())
    } else {
        Err(Error::domain(
            "factor placement needs a connected network; prune it first",
        ))
    }
}

fn tracker_with_x(net: &EvidenceNetwork) -> Result<SpanTracker> {
    let x = build_x(net)?.matrix;
    let mut tracker = SpanTracker::new();
    for j in 0..x.ncols() {
        tracker.try_add(&x.column(j).into_owned());
    }
    Ok(tracker)
}

fn column_for(net: &EvidenceNetwork, mut keep: impl FnMut(&[usize], Edge) -> bool) -> DVector<f64> {
    let n = net.n_contrasts();
    let mut col = DVector::zeros(n);
    for (i, (s, c)) in net.rows().enumerate() {
        if keep(&net.studies[s].design, (c.t1, c.t2)) {
            // rows are stored in canonical orientation, so the sign is +1
            col[i] = 1.0;
        }
    }
    col
}

fn assemble(
    net: &EvidenceNetwork,
    method: PlacementMethod,
    mut cols: Vec<(Factor, String, DVector<f64>)>,
    notes: Vec<String>,
    sort: bool,
) -> InconsistencySpec {
    if sort {
        cols.sort_by_key(|c| factor_key(&c.0));
    }
    let n = net.n_contrasts();
    let z = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].2[i]);
    let (factors, labels): (Vec<_>, Vec<_>) = cols.into_iter().map(|(f, l, _)| (f, l)).unzip();
    InconsistencySpec {
        method,
        factors,
        labels,
        z,
        notes,
    }
}

fn factor_key(f: &Factor) -> (Vec<usize>, Edge) {
    match f {
        Factor::Loop { pair, .. } => (Vec::new(), *pair),
        Factor::DesignContrast { design, pair } => (design.clone(), *pair),
        Factor::Design { design } => (design.clone(), (0, 0)),
    }
}

/// Comparisons whose only evidence is a single multi-arm design; these are
/// consistent by construction and never receive a factor.
pub fn multi_arm_only_edges(graph: &ComparisonGraph) -> BTreeSet<Edge> {
    graph
        .edges
        .iter()
        .filter(|(_, info)| info.designs.len() == 1 && info.designs.iter().all(|d| d.len() > 2))
        .map(|(e, _)| *e)
        .collect()
}

/// Loop-inconsistency placement following the independent-loop algorithm:
/// drop comparisons only a single multi-arm design provides, drop bridges,
/// and give every independent loop one factor on its closing (non-tree)
/// comparison, falling back to the loop's other eligible comparisons in
/// canonical order when the closing one is excluded or collinear.
pub fn place_lu_ades(net: &EvidenceNetwork) -> Result<InconsistencySpec> {
    require_connected(net)?;
    let graph = ComparisonGraph::from_network(net);
    let excluded = multi_arm_only_edges(&graph);
    let bridges = find_bridges(&graph);
    let eligible = |e: &Edge| !excluded.contains(e) && !bridges.contains(e);
    let loops = independent_loops(&graph);
    let mut tracker = tracker_with_x(net)?;
    let mut used: BTreeSet<Edge> = BTreeSet::new();
    let mut cols = Vec::new();
    for lp in &loops.loops {
        let mut options = Vec::new();
        if eligible(&lp.distinguishing) {
            options.push(lp.distinguishing);
        }
        let mut rest: Vec<Edge> = lp
            .edges()
            .into_iter()
            .filter(|e| *e != lp.distinguishing && eligible(e))
            .collect();
        rest.sort_unstable();
        options.extend(rest);
        for e in options {
            if used.contains(&e) {
                continue;
            }
            let col = column_for(net, |_, pair| pair == e);
            if tracker.try_add(&col) {
                used.insert(e);
                let path: Vec<&str> = lp.nodes.iter().map(|t| net.treatment_id(*t)).collect();
                let label = format!("loop:{}@{}", path.join("-"), net.pair_label(e));
                cols.push((
                    Factor::Loop {
                        pair: e,
                        nodes: lp.nodes.clone(),
                    },
                    label,
                    col,
                ));
                break;
            }
        }
    }
    Ok(assemble(net, PlacementMethod::LuAdes, cols, Vec::new(), false))
}

/// Design-by-treatment placement. Every (design, contrast) pair is a
/// candidate; pairs whose comparison already appeared in an earlier design
/// are offered first, then first occurrences, each kept only if it raises
/// the rank of `[X | Z]`. The result has `Σ_d (T_d − 1) − (T − 1)` factors.
/// Networks without multi-arm studies get the loop placement unchanged.
pub fn place_design_by_treatment(net: &EvidenceNetwork) -> Result<InconsistencySpec> {
    require_connected(net)?;
    if !net.has_multi_arm() {
        let mut spec = place_lu_ades(net)?;
        spec.method = PlacementMethod::DesignByTreatment;
        spec.notes.push(
            "two-arm-only network: design-by-treatment factors coincide with the loop placement"
                .into(),
        );
        return Ok(spec);
    }
    let designs = net.designs();
    let mut seen: BTreeSet<Edge> = BTreeSet::new();
    let mut repeats = Vec::new();
    let mut firsts = Vec::new();
    for d in &designs {
        for &arm in &d[1..] {
            let pair = (d[0], arm);
            if seen.contains(&pair) {
                repeats.push((d.clone(), pair));
            } else {
                firsts.push((d.clone(), pair));
            }
        }
        for &arm in &d[1..] {
            seen.insert((d[0], arm));
        }
    }
    let mut tracker = tracker_with_x(net)?;
    let mut cols = Vec::new();
    for (design, pair) in repeats.into_iter().chain(firsts) {
        let col = column_for(net, |sd, p| sd == design.as_slice() && p == pair);
        if tracker.try_add(&col) {
            let label = format!(
                "design:{}@{}",
                net.design_label(&design),
                net.pair_label(pair)
            );
            cols.push((Factor::DesignContrast { design, pair }, label, col));
        }
    }
    Ok(assemble(
        net,
        PlacementMethod::DesignByTreatment,
        cols,
        Vec::new(),
        true,
    ))
}

/// Design-level placement: one factor per design after the first (canonical
/// order), shared by all rows of that design, subject to the rank guard.
pub fn place_jackson(net: &EvidenceNetwork) -> Result<InconsistencySpec> {
    require_connected(net)?;
    if !net.has_multi_arm() {
        return Err(Error::NotApplicable(
            "design-level placement needs a multi-arm study; for two-arm-only networks it \
             coincides with design-by-treatment (use method dbt)"
                .into(),
        ));
    }
    let designs = net.designs();
    let mut tracker = tracker_with_x(net)?;
    let mut cols = Vec::new();
    for design in designs.iter().skip(1) {
        let col = column_for(net, |sd, _| sd == design.as_slice());
        if tracker.try_add(&col) {
            let label = format!("design:{}", net.design_label(design));
            cols.push((
                Factor::Design {
                    design: design.clone(),
                },
                label,
                col,
            ));
        }
    }
    let notes = vec![
        "design-level factor columns are an interpretation; only the fixed-effect \
         parameterization by design is used"
            .into(),
    ];
    Ok(assemble(net, PlacementMethod::Jackson, cols, notes, false))
}
