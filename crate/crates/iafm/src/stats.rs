//! Order-statistic helpers shared by the corpus and summary modules.
//!
//! All quantiles use linear interpolation between order statistics: the
//! p-quantile of n sorted values x_1..x_n is x_h' interpolated at
//! h = (n-1)p + 1 (1-based). This is the convention of most statistical
//! environments' default quantile, so medians and IQRs computed here line
//! up with values produced by those tools on the same inputs.

/// Interpolated p-quantile of an unsorted, nonempty slice.
///
/// Panics if `values` is empty or `p` is outside [0, 1].
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile p out of range");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_sorted(&sorted, p)
}

/// Interpolated p-quantile of an already-sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p; // 0-based position
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Interpolated median.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Interquartile range Q3 - Q1 under the interpolated-quantile convention.
pub fn iqr(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in iqr input"));
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}
