//! Monte Carlo error and convergence statistics.

/// Split-chain potential scale reduction.
///
/// Each chain is cut into halves (the middle draw of an odd-length chain is
/// dropped). Returns `None` with fewer than two halves of at least two draws.
/// Constant input gives 1.0.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    let half = chains.iter().map(|c| c.len() / 2).min()?;
    if half < 2 {
        return None;
    }
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    let n = half as f64;
    let m = pieces.len() as f64;
    let means: Vec<f64> = pieces.iter().map(|s| mean(s)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return Some(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// Standard error of the mean by non-overlapping batch means. Trailing draws
/// that do not fill a batch are ignored; falls back to the iid formula when
/// there are fewer draws than batches.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    if batches < 2 || n < 2 * batches {
        let mu = mean(series);
        let var = series.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        return (var / n as f64).sqrt();
    }
    let size = n / batches;
    let bm: Vec<f64> = (0..batches)
        .map(|k| mean(&series[k * size..(k + 1) * size]))
        .collect();
    let mu = mean(&bm);
    let var = bm.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
