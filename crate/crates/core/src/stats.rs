//! Small descriptive-statistics helpers shared by the Monte Carlo and diagnostics code.
//! Variances use the 1/n convention throughout.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Pearson kurtosis `m4 / m2^2` (3 for a normal). NaN when the sample has no spread.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d2 = (x - m) * (x - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = xs.len() as f64;
    (m4 / n) / (m2 / n).powi(2)
}

/// Returns a sorted copy; NaNs are ordered last.
pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = (len - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            let frac = h - lo as f64;
            if frac == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}
