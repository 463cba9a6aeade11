use crate::error::{Error, Result};

/// Smallest sample value whose empirical CDF reaches `1 - delta`.
///
/// Returns the `⌈(1 − δ)·N⌉`-th smallest value.
pub fn empirical_quantile(values: &[f64], delta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("empirical_quantile needs at least one value"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {delta}")));
    }
    let n = values.len();
    // guard against 0.7 * 10 = 7.000000000000001
    let raw = (1.0 - delta) * n as f64;
    let rank = ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}
