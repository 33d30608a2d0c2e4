//! Consistency design matrix `X` and the linear predictor `Xμ + Zb`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::EvidenceNetwork;

/// `N × (T − 1)` matrix over {−1, 0, 1}; column `j` is the basic contrast
/// reference → treatment `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrixX {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
}

/// Row of `X` for the comparison `t1 → t2` in a network of `n_treatments`
/// with the reference at index 0.
pub fn x_row(t1: usize, t2: usize, n_treatments: usize) -> Result<Vec<f64>> {
    if t1 >= n_treatments || t2 >= n_treatments {
        return Err(Error::domain(format!(
            "comparison {t1}-{t2} references a treatment outside 0..{n_treatments}"
        )));
    }
    if t1 == t2 {
        return Err(Error::domain(format!("comparison {t1}-{t2} is degenerate")));
    }
    let mut row = vec![0.0; n_treatments - 1];
    if t2 != 0 {
        row[t2 - 1] += 1.0;
    }
    if t1 != 0 {
        row[t1 - 1] -= 1.0;
    }
    Ok(row)
}

pub fn build_x(net: &EvidenceNetwork) -> Result<DesignMatrixX> {
    let t = net.n_treatments();
    if t < 2 {
        return Err(Error::domain("a network needs at least two treatments"));
    }
    let n = net.n_contrasts();
    let mut matrix = DMatrix::zeros(n, t - 1);
    for (i, (_, c)) in net.rows().enumerate() {
        for (j, v) in x_row(c.t1, c.t2, t)?.into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    let reference = &net.reference().id;
    let labels = net.treatments[1..]
        .iter()
        .map(|tr| format!("{reference}-{}", tr.id))
        .collect();
    Ok(DesignMatrixX { matrix, labels })
}

/// `Xμ + Zb`. Pass an `N × 0` matrix and an empty vector when there are no
/// inconsistency factors.
pub fn linear_predictor(
    x: &DMatrix<f64>,
    mu: &DVector<f64>,
    z: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x.ncols() != mu.len() {
        return Err(Error::dim(format!(
            "X has {} columns but mu has length {}",
            x.ncols(),
            mu.len()
        )));
    }
    if z.ncols() != b.len() {
        return Err(Error::dim(format!(
            "Z has {} columns but b has length {}",
            z.ncols(),
            b.len()
        )));
    }
    if z.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "X has {} rows but Z has {}",
            x.nrows(),
            z.nrows()
        )));
    }
    Ok(x * mu + z * b)
}

/// Row labels `study:t1-t2` for matrix dumps.
pub fn row_labels(net: &EvidenceNetwork) -> Vec<String> {
    net.rows()
        .map(|(s, c)| format!("{}:{}", net.studies[s].id, net.pair_label((c.t1, c.t2))))
        .collect()
}

/// Delimited dump with a `row` column followed by labeled matrix columns.
pub fn matrix_to_csv(matrix: &DMatrix<f64>, columns: &[String], rows: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_owned()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for i in 0..matrix.nrows() {
        let mut rec = vec![rows.get(i).cloned().unwrap_or_else(|| i.to_string())];
        rec.extend((0..matrix.ncols()).map(|j| format_entry(matrix[(i, j)])));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn format_entry(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
