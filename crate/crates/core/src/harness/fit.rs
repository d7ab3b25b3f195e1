//! Error norms and least-squares fits used by the studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root mean square of `values - references`.
pub fn rmse(values: &[f64], references: &[f64]) -> Result<f64> {
    if values.len() != references.len() || values.is_empty() {
        return Err(Error::LengthMismatch {
            expected: references.len().max(1),
            actual: values.len(),
        });
    }
    let sum: f64 = values
        .iter()
        .zip(references)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares line through `(xs, ys)`. `None` with fewer than
/// two points or no spread in `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// OLS on `log10` pairs. Points where either coordinate is not positive and
/// finite are skipped.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .unzip();
    ols(&lx, &ly)
}

/// Log-log slope over the first `i + 1` points, for each `i`.
pub fn prefix_slopes(xs: &[f64], ys: &[f64]) -> Vec<Option<f64>> {
    (0..xs.len().min(ys.len()))
        .map(|i| loglog_fit(&xs[..=i], &ys[..=i]).map(|f| f.slope))
        .collect()
}

/// Number of leading points before an error series stalls: the run
/// continues while each step shrinks the error by at least `min_ratio`.
/// Never less than `min(2, len)`.
pub fn pre_floor_prefix(ys: &[f64], min_ratio: f64) -> usize {
    let mut n = ys.len().min(1);
    for w in ys.windows(2) {
        if w[1] > 0.0 && w[0] / w[1] >= min_ratio {
            n += 1;
        } else {
            break;
        }
    }
    n.max(ys.len().min(2))
}
