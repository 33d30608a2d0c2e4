//! Contrast-level evidence networks.
//!
//! Input arrives as delimited records (one row per contrast, plus optional
//! covariance or arm-level companions for multi-arm studies). Loading
//! canonicalizes everything downstream code relies on:
//!
//! * treatments are ordered lexicographically with the reference forced to
//!   index 0;
//! * every study's contrasts are re-expressed against the study's first arm
//!   in canonical order, so a study with arms `a0 < a1 < ... < ak` carries
//!   rows `a0→a1, ..., a0→ak`, and its covariance block is transformed
//!   accordingly (`L Σ Lᵀ`);
//! * `y` always measures `t2 − t1` with `t1` preceding `t2`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Issue, Issues, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Treatment {
    pub id: String,
    pub index: usize,
}

/// One contrast in canonical orientation (`t1 < t2`, indices into the
/// network's treatment list). `y` is the effect of `t2` relative to `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastObservation {
    pub t1: usize,
    pub t2: usize,
    pub y: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub id: String,
    /// Arms in canonical order.
    pub design: Vec<usize>,
    /// `design.len() - 1` contrasts, first arm against each other arm.
    pub contrasts: Vec<ContrastObservation>,
}

impl Study {
    pub fn arms(&self) -> usize {
        self.design.len()
    }

    pub fn is_multi_arm(&self) -> bool {
        self.design.len() > 2
    }
}

/// Per-study blocks of the known sampling covariance Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingCovariance {
    pub blocks: Vec<DMatrix<f64>>,
}

impl SamplingCovariance {
    /// Dense N × N assembly; only for small networks and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(n, n);
        let mut at = 0;
        for b in &self.blocks {
            let m = b.nrows();
            out.view_mut((at, at), (m, m)).copy_from(b);
            at += m;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceNetwork {
    pub treatments: Vec<Treatment>,
    pub studies: Vec<Study>,
    pub sigma: SamplingCovariance,
}

/// One row of the contrast file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRecord {
    pub study: String,
    pub t1: String,
    pub t2: String,
    pub y: f64,
    pub se: f64,
}

/// Off-diagonal covariance entry for a multi-arm study. `row` and `col` are
/// 1-based positions of the study's contrasts in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovRecord {
    pub study: String,
    pub row: usize,
    pub col: usize,
    pub cov: f64,
}

/// Arm-level standard error, used to build multi-arm blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub study: String,
    pub treatment: String,
    pub se_arm: f64,
}

const CONTRAST_COLUMNS: [&str; 5] = ["study", "t1", "t2", "y", "se"];
const COV_COLUMNS: [&str; 4] = ["study", "row", "col", "cov"];
const ARM_COLUMNS: [&str; 3] = ["study", "treatment", "se_arm"];

fn parse_records<T, R>(reader: R, expected: &[&str]) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::single(
            None,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for (i, rec) in rdr.deserialize::<T>().enumerate() {
        match rec {
            Ok(r) => out.push(r),
            // line 1 is the header
            Err(e) => issues.push(Issue::new(None, format!("line {}: {e}", i + 2))),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(Issues(issues)))
    }
}

pub fn parse_contrasts(reader: impl Read) -> Result<Vec<ContrastRecord>> {
    parse_records(reader, &CONTRAST_COLUMNS)
}

pub fn parse_covariances(reader: impl Read) -> Result<Vec<CovRecord>> {
    parse_records(reader, &COV_COLUMNS)
}

pub fn parse_arms(reader: impl Read) -> Result<Vec<ArmRecord>> {
    parse_records(reader, &ARM_COLUMNS)
}

/// Convenience wrapper: parse the three delimited inputs and load.
pub fn load_network_from_str(
    contrasts: &str,
    covariances: Option<&str>,
    arms: Option<&str>,
    reference: Option<&str>,
) -> Result<EvidenceNetwork> {
    let c = parse_contrasts(contrasts.as_bytes())?;
    let v = covariances
        .map(|s| parse_covariances(s.as_bytes()))
        .transpose()?;
    let a = arms.map(|s| parse_arms(s.as_bytes())).transpose()?;
    load_network(&c, v.as_deref().unwrap_or(&[]), a.as_deref().unwrap_or(&[]), reference)
}

/// Shared-anchor covariance for a multi-arm study.
///
/// `arm_variances[i]` is the sampling variance of arm `i`; contrasts are taken
/// as `anchor` against every other arm in the given order. Each diagonal
/// entry is the sum of the two arm variances and every off-diagonal entry is
/// the anchor's variance.
pub fn multiarm_covariance(arm_variances: &[f64], anchor: usize) -> Result<DMatrix<f64>> {
    if arm_variances.len() < 3 {
        return Err(Error::domain(format!(
            "multi-arm covariance needs at least 3 arms, got {}",
            arm_variances.len()
        )));
    }
    if anchor >= arm_variances.len() {
        return Err(Error::domain(format!(
            "anchor arm {anchor} is not one of the study's {} arms",
            arm_variances.len()
        )));
    }
    if let Some(v) = arm_variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::domain(format!("arm variance must be positive, got {v}")));
    }
    let va = arm_variances[anchor];
    let others: Vec<f64> = arm_variances
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor)
        .map(|(_, v)| *v)
        .collect();
    let m = others.len();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            va + others[i]
        } else {
            va
        }
    }))
}

pub(crate) fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && m.clone().cholesky().is_some()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

struct RawStudy<'a> {
    id: &'a str,
    rows: Vec<&'a ContrastRecord>,
}

/// Validate and canonicalize contrast-level records.
///
/// Every problem found is collected and returned together in
/// [`Error::Validation`].
pub fn load_network(
    contrasts: &[ContrastRecord],
    covariances: &[CovRecord],
    arms: &[ArmRecord],
    reference: Option<&str>,
) -> Result<EvidenceNetwork> {
    let mut issues = Vec::new();

    // group rows by study, first-appearance order
    let mut order: Vec<RawStudy<'_>> = Vec::new();
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for rec in contrasts {
        let sid = rec.study.as_str();
        if sid.is_empty() || rec.t1.is_empty() || rec.t2.is_empty() {
            issues.push(Issue::new(Some(sid), "empty study or treatment identifier"));
        }
        if rec.t1 == rec.t2 {
            issues.push(Issue::new(
                Some(sid),
                format!("contrast compares {} with itself", rec.t1),
            ));
        }
        if !(rec.se.is_finite() && rec.se > 0.0) {
            issues.push(Issue::new(
                Some(sid),
                format!("non-positive standard error {} for {}-{}", rec.se, rec.t1, rec.t2),
            ));
        }
        if !rec.y.is_finite() {
            issues.push(Issue::new(
                Some(sid),
                format!("non-finite effect for {}-{}", rec.t1, rec.t2),
            ));
        }
        let slot = *by_id.entry(sid).or_insert_with(|| {
            order.push(RawStudy { id: sid, rows: Vec::new() });
            order.len() - 1
        });
        order[slot].rows.push(rec);
    }
    if order.is_empty() {
        issues.push(Issue::new(None, "no contrast records"));
    }

    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for rec in contrasts {
        ids.insert(&rec.t1);
        ids.insert(&rec.t2);
    }
    let mut names: Vec<&str> = ids.into_iter().collect();
    if let Some(r) = reference {
        match names.iter().position(|n| *n == r) {
            Some(pos) => {
                let r = names.remove(pos);
                names.insert(0, r);
            }
            None => issues.push(Issue::new(
                None,
                format!("reference treatment {r} does not appear in the data"),
            )),
        }
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    let mut cov_by_study: BTreeMap<&str, Vec<&CovRecord>> = BTreeMap::new();
    for c in covariances {
        cov_by_study.entry(c.study.as_str()).or_default().push(c);
    }
    let mut arms_by_study: BTreeMap<&str, Vec<&ArmRecord>> = BTreeMap::new();
    for a in arms {
        arms_by_study.entry(a.study.as_str()).or_default().push(a);
    }
    for sid in cov_by_study.keys() {
        if !by_id.contains_key(sid) {
            issues.push(Issue::new(Some(sid), "covariance entries for an unknown study"));
        }
    }
    for sid in arms_by_study.keys() {
        if !by_id.contains_key(sid) {
            issues.push(Issue::new(Some(sid), "arm-level entries for an unknown study"));
        }
    }

    let mut studies = Vec::with_capacity(order.len());
    let mut blocks = Vec::with_capacity(order.len());
    for raw in &order {
        match canonical_study(
            raw,
            &index,
            cov_by_study.get(raw.id).map(Vec::as_slice).unwrap_or(&[]),
            arms_by_study.get(raw.id).map(Vec::as_slice).unwrap_or(&[]),
        ) {
            Ok((study, block)) => {
                studies.push(study);
                blocks.push(block);
            }
            Err(mut errs) => issues.append(&mut errs),
        }
    }

    if !issues.is_empty() {
        return Err(Error::Validation(Issues(issues)));
    }

    let treatments = names
        .iter()
        .enumerate()
        .map(|(i, n)| Treatment {
            id: (*n).to_owned(),
            index: i,
        })
        .collect();
    Ok(EvidenceNetwork {
        treatments,
        studies,
        sigma: SamplingCovariance { blocks },
    })
}

fn canonical_study(
    raw: &RawStudy<'_>,
    index: &HashMap<&str, usize>,
    covs: &[&CovRecord],
    arms: &[&ArmRecord],
) -> std::result::Result<(Study, DMatrix<f64>), Vec<Issue>> {
    let sid = Some(raw.id);
    let mut issues = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw.rows.len());
    let mut design: BTreeSet<usize> = BTreeSet::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for r in &raw.rows {
        let (Some(&a), Some(&b)) = (index.get(r.t1.as_str()), index.get(r.t2.as_str())) else {
            // only reachable when the reference lookup already failed
            return Err(issues);
        };
        if a == b || !(r.se > 0.0) || !r.se.is_finite() || !r.y.is_finite() {
            // already reported at record level
            return Err(issues);
        }
        if !seen.insert((a.min(b), a.max(b))) {
            issues.push(Issue::new(
                sid,
                format!("duplicate contrast {}-{}", r.t1, r.t2),
            ));
        }
        design.insert(a);
        design.insert(b);
        edges.push((a, b));
    }
    let design: Vec<usize> = design.into_iter().collect();
    let ts = design.len();
    if raw.rows.len() != ts - 1 {
        issues.push(Issue::new(
            sid,
            format!(
                "{} arms require {} contrasts, found {}",
                ts,
                ts - 1,
                raw.rows.len()
            ),
        ));
    }
    if !issues.is_empty() {
        return Err(issues);
    }

    // Express each canonical contrast (baseline → arm) as a signed sum of
    // input rows by walking the tree the input rows form over the arms.
    let baseline = design[0];
    let m = ts - 1;
    let pos: HashMap<usize, usize> = design.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut coef: Vec<Option<Vec<f64>>> = vec![None; ts];
    coef[0] = Some(vec![0.0; m]);
    let mut queue = VecDeque::from([baseline]);
    while let Some(u) = queue.pop_front() {
        let cu = coef[pos[&u]].clone().expect("visited");
        for (row, &(a, b)) in edges.iter().enumerate() {
            // row measures theta[b] - theta[a]
            let (next, sign) = if a == u {
                (b, 1.0)
            } else if b == u {
                (a, -1.0)
            } else {
                continue;
            };
            let slot = pos[&next];
            if coef[slot].is_none() {
                let mut c = cu.clone();
                c[row] += sign;
                coef[slot] = Some(c);
                queue.push_back(next);
            }
        }
    }
    if coef.iter().any(Option::is_none) {
        issues.push(Issue::new(
            sid,
            "contrasts do not connect all arms of the study",
        ));
        return Err(issues);
    }
    let transform = DMatrix::from_fn(m, m, |i, j| coef[i + 1].as_ref().unwrap()[j]);

    let y_in = nalgebra::DVector::from_iterator(m, raw.rows.iter().map(|r| r.y));
    let mut sigma_in = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            raw.rows[i].se * raw.rows[i].se
        } else {
            0.0
        }
    });

    if m > 1 {
        if !covs.is_empty() {
            let mut filled = vec![vec![false; m]; m];
            for c in covs {
                if c.row == 0 || c.col == 0 || c.row > m || c.col > m {
                    issues.push(Issue::new(
                        sid,
                        format!("covariance position ({}, {}) outside 1..={m}", c.row, c.col),
                    ));
                    continue;
                }
                if c.row == c.col {
                    issues.push(Issue::new(
                        sid,
                        "diagonal covariance entries come from the se column",
                    ));
                    continue;
                }
                if !c.cov.is_finite() {
                    issues.push(Issue::new(sid, "non-finite covariance entry"));
                    continue;
                }
                let (i, j) = (c.row - 1, c.col - 1);
                if filled[i][j] && (sigma_in[(i, j)] - c.cov).abs() > 1e-12 * c.cov.abs().max(1.0) {
                    issues.push(Issue::new(
                        sid,
                        format!("conflicting covariance entries for ({}, {})", c.row, c.col),
                    ));
                }
                sigma_in[(i, j)] = c.cov;
                sigma_in[(j, i)] = c.cov;
                filled[i][j] = true;
                filled[j][i] = true;
            }
            for (i, row) in filled.iter().enumerate() {
                for (j, done) in row.iter().enumerate().take(i) {
                    if !done {
                        issues.push(Issue::new(
                            sid,
                            format!("missing covariance entry ({}, {})", j + 1, i + 1),
                        ));
                    }
                }
            }
        } else if !arms.is_empty() {
            let mut var: HashMap<usize, f64> = HashMap::new();
            for a in arms {
                match index.get(a.treatment.as_str()) {
                    Some(t) if pos.contains_key(t) => {
                        if !(a.se_arm.is_finite() && a.se_arm > 0.0) {
                            issues.push(Issue::new(
                                sid,
                                format!("non-positive arm standard error for {}", a.treatment),
                            ));
                        } else if var.insert(*t, a.se_arm * a.se_arm).is_some() {
                            issues.push(Issue::new(
                                sid,
                                format!("duplicate arm entry for {}", a.treatment),
                            ));
                        }
                    }
                    _ => issues.push(Issue::new(
                        sid,
                        format!("arm {} is not part of the study", a.treatment),
                    )),
                }
            }
            if issues.is_empty() {
                if var.len() != ts {
                    issues.push(Issue::new(
                        sid,
                        format!("arm-level errors given for {} of {} arms", var.len(), ts),
                    ));
                } else {
                    // cov(y_i, y_j) = Σ_arms v_a c_ia c_ja, with c the signed arm incidence
                    for i in 0..m {
                        for j in 0..m {
                            if i == j {
                                continue;
                            }
                            let (a1, b1) = edges[i];
                            let (a2, b2) = edges[j];
                            let mut s = 0.0;
                            for (&t, &v) in &var {
                                let ci = f64::from(t == b1) - f64::from(t == a1);
                                let cj = f64::from(t == b2) - f64::from(t == a2);
                                s += v * ci * cj;
                            }
                            sigma_in[(i, j)] = s;
                        }
                    }
                }
            }
        } else {
            issues.push(Issue::new(
                sid,
                "multi-arm study needs covariance entries or arm-level standard errors",
            ));
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    if !is_positive_definite(&sigma_in) {
        issues.push(Issue::new(sid, "covariance block is not positive definite"));
        return Err(issues);
    }

    let y = &transform * y_in;
    let mut block = &transform * sigma_in * transform.transpose();
    block = (&block + block.transpose()) * 0.5;
    // keep the diagonal equal to se² exactly so dumps reload bit-for-bit
    for i in 0..m {
        block[(i, i)] = block[(i, i)].sqrt().powi(2);
    }
    let contrasts = (0..m)
        .map(|i| ContrastObservation {
            t1: baseline,
            t2: design[i + 1],
            y: y[i],
            se: block[(i, i)].sqrt(),
        })
        .collect();
    Ok((
        Study {
            id: raw.id.to_owned(),
            design,
            contrasts,
        },
        block,
    ))
}

impl EvidenceNetwork {
    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    /// Total number of contrast rows, `Σ (T_s − 1)`.
    pub fn n_contrasts(&self) -> usize {
        self.studies.iter().map(|s| s.contrasts.len()).sum()
    }

    pub fn reference(&self) -> &Treatment {
        &self.treatments[0]
    }

    pub fn treatment_id(&self, index: usize) -> &str {
        &self.treatments[index].id
    }

    /// All contrast rows in row order, with the owning study index.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &ContrastObservation)> + '_ {
        self.studies
            .iter()
            .enumerate()
            .flat_map(|(s, st)| st.contrasts.iter().map(move |c| (s, c)))
    }

    pub fn y(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(self.n_contrasts(), self.rows().map(|(_, c)| c.y))
    }

    /// `(start, len)` of each study's rows.
    pub fn study_ranges(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.studies
            .iter()
            .map(|s| {
                let r = (at, s.contrasts.len());
                at += s.contrasts.len();
                r
            })
            .collect()
    }

    pub fn has_multi_arm(&self) -> bool {
        self.studies.iter().any(Study::is_multi_arm)
    }

    /// Distinct designs in canonical order (lexicographic on sorted arms).
    pub fn designs(&self) -> Vec<Vec<usize>> {
        let set: BTreeSet<Vec<usize>> = self.studies.iter().map(|s| s.design.clone()).collect();
        set.into_iter().collect()
    }

    pub fn design_label(&self, design: &[usize]) -> String {
        let ids: Vec<&str> = design.iter().map(|t| self.treatment_id(*t)).collect();
        if ids.iter().all(|s| s.chars().count() == 1) {
            ids.concat()
        } else {
            ids.join("+")
        }
    }

    pub fn pair_label(&self, pair: (usize, usize)) -> String {
        format!("{}-{}", self.treatment_id(pair.0), self.treatment_id(pair.1))
    }

    /// Whether every treatment is reachable from the reference.
    pub fn is_connected(&self) -> bool {
        reachable_from_reference(self).iter().all(|r| *r)
    }

    /// Records that reload into an identical network.
    pub fn to_records(&self) -> (Vec<ContrastRecord>, Vec<CovRecord>) {
        let mut rows = Vec::with_capacity(self.n_contrasts());
        let mut covs = Vec::new();
        for (study, block) in self.studies.iter().zip(&self.sigma.blocks) {
            for c in &study.contrasts {
                rows.push(ContrastRecord {
                    study: study.id.clone(),
                    t1: self.treatment_id(c.t1).to_owned(),
                    t2: self.treatment_id(c.t2).to_owned(),
                    y: c.y,
                    se: c.se,
                });
            }
            let m = block.nrows();
            for i in 0..m {
                for j in (i + 1)..m {
                    covs.push(CovRecord {
                        study: study.id.clone(),
                        row: i + 1,
                        col: j + 1,
                        cov: block[(i, j)],
                    });
                }
            }
        }
        (rows, covs)
    }

    /// Write the contrast and covariance files for this network.
    pub fn write_csv(&self) -> Result<(String, String)> {
        let (rows, covs) = self.to_records();
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)?;
        }
        let contrasts = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
            .expect("csv output is utf-8");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(COV_COLUMNS)?;
        for c in &covs {
            w.serialize(c)?;
        }
        let cov = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
            .expect("csv output is utf-8");
        Ok((contrasts, cov))
    }

    pub fn to_canonical(&self) -> CanonicalNetwork {
        CanonicalNetwork {
            reference: self.reference().id.clone(),
            treatments: self.treatments.iter().map(|t| t.id.clone()).collect(),
            studies: self
                .studies
                .iter()
                .zip(&self.sigma.blocks)
                .map(|(s, b)| CanonicalStudy {
                    id: s.id.clone(),
                    design: s.design.iter().map(|t| self.treatment_id(*t).to_owned()).collect(),
                    contrasts: s
                        .contrasts
                        .iter()
                        .map(|c| CanonicalContrast {
                            t1: self.treatment_id(c.t1).to_owned(),
                            t2: self.treatment_id(c.t2).to_owned(),
                            y: c.y,
                            se: c.se,
                        })
                        .collect(),
                    covariance: (0..b.nrows())
                        .map(|i| (0..b.ncols()).map(|j| b[(i, j)]).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    /// Deterministic structured-text dump used for golden files.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_canonical()).expect("plain data serializes")
    }

    pub fn from_canonical_json(text: &str) -> Result<Self> {
        let dump: CanonicalNetwork = serde_json::from_str(text)?;
        dump.into_network()
    }
}

/// Serialized form of a canonical network, fields in fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalNetwork {
    pub reference: String,
    pub treatments: Vec<String>,
    pub studies: Vec<CanonicalStudy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalStudy {
    pub id: String,
    pub design: Vec<String>,
    pub contrasts: Vec<CanonicalContrast>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalContrast {
    pub t1: String,
    pub t2: String,
    pub y: f64,
    pub se: f64,
}

impl CanonicalNetwork {
    fn into_network(self) -> Result<EvidenceNetwork> {
        let contrasts: Vec<ContrastRecord> = self
            .studies
            .iter()
            .flat_map(|s| {
                s.contrasts.iter().map(move |c| ContrastRecord {
                    study: s.id.clone(),
                    t1: c.t1.clone(),
                    t2: c.t2.clone(),
                    y: c.y,
                    se: c.se,
                })
            })
            .collect();
        let mut covs = Vec::new();
        for s in &self.studies {
            let m = s.contrasts.len();
            if s.covariance.len() != m || s.covariance.iter().any(|r| r.len() != m) {
                return Err(Error::single(Some(&s.id), "covariance block has the wrong shape"));
            }
            let block = DMatrix::from_fn(m, m, |i, j| s.covariance[i][j]);
            if !is_symmetric(&block) {
                return Err(Error::single(Some(&s.id), "covariance block is not symmetric"));
            }
            for i in 0..m {
                if (block[(i, i)] - s.contrasts[i].se.powi(2)).abs() > 1e-9 * block[(i, i)].abs() {
                    return Err(Error::single(Some(&s.id), "covariance diagonal differs from se²"));
                }
                for j in (i + 1)..m {
                    covs.push(CovRecord {
                        study: s.id.clone(),
                        row: i + 1,
                        col: j + 1,
                        cov: block[(i, j)],
                    });
                }
            }
        }
        let net = load_network(&contrasts, &covs, &[], Some(&self.reference))?;
        let listed: Vec<&str> = net.treatments.iter().map(|t| t.id.as_str()).collect();
        if listed != self.treatments.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::single(None, "treatment list does not match the studies"));
        }
        Ok(net)
    }
}

fn reachable_from_reference(net: &EvidenceNetwork) -> Vec<bool> {
    let t = net.n_treatments();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); t];
    for s in &net.studies {
        for &a in &s.design {
            for &b in &s.design {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut seen = vec![false; t];
    if t == 0 {
        return seen;
    }
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Keep only the connected component containing the reference treatment.
///
/// Returns the pruned network and the ids of removed treatments, in
/// canonical order.
pub fn prune_disconnected(net: &EvidenceNetwork) -> Result<(EvidenceNetwork, Vec<String>)> {
    if !net.studies.iter().any(|s| s.design.contains(&0)) {
        return Err(Error::single(
            None,
            format!("reference treatment {} has no comparisons", net.reference().id),
        ));
    }
    let keep = reachable_from_reference(net);
    let removed: Vec<String> = net
        .treatments
        .iter()
        .filter(|t| !keep[t.index])
        .map(|t| t.id.clone())
        .collect();
    if removed.is_empty() {
        return Ok((net.clone(), removed));
    }
    let mut remap = vec![usize::MAX; net.n_treatments()];
    let mut treatments = Vec::new();
    for t in &net.treatments {
        if keep[t.index] {
            remap[t.index] = treatments.len();
            treatments.push(Treatment {
                id: t.id.clone(),
                index: treatments.len(),
            });
        }
    }
    let mut studies = Vec::new();
    let mut blocks = Vec::new();
    for (s, b) in net.studies.iter().zip(&net.sigma.blocks) {
        if !keep[s.design[0]] {
            continue;
        }
        studies.push(Study {
            id: s.id.clone(),
            design: s.design.iter().map(|t| remap[*t]).collect(),
            contrasts: s
                .contrasts
                .iter()
                .map(|c| ContrastObservation {
                    t1: remap[c.t1],
                    t2: remap[c.t2],
                    ..*c
                })
                .collect(),
        });
        blocks.push(b.clone());
    }
    Ok((
        EvidenceNetwork {
            treatments,
            studies,
            sigma: SamplingCovariance { blocks },
        },
        removed,
    ))
}
