//! Small numeric helpers shared across modules.

/// Threshold used for every quantile cutoff in the crate.
///
/// Values are sorted ascending and the element at zero-based index
/// `min(floor(q * n), n - 1)` is returned; callers keep everything `>=` the
/// threshold, so ties are always kept and the kept set is never empty.
/// `q = 0.8` over rewards `0..=9` gives threshold 8.
pub fn quantile_threshold(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((q.clamp(0.0, 1.0) * n as f64 + 1e-9).floor() as usize).min(n - 1);
    Some(sorted[idx])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `1 - Var(y - y_hat) / Var(y)`; defined as 0 when `y` has no variance.
pub fn explained_variance(y: &[f64], y_hat: &[f64]) -> f64 {
    let var_y = variance(y);
    if !(var_y > 1e-12) {
        return 0.0;
    }
    let resid: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    1.0 - variance(&resid) / var_y
}

/// Percentile (linear interpolation between closest ranks), `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}
