//! Small fits used to summarize sweeps.

/// Least-squares slope of `log y` against `log x`, skipping non-positive or
/// non-finite points. `None` with fewer than two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + a / m, sy + b / m));
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fits `t ≈ c · n log n` through the origin and returns `(c, R²)`, with R²
/// measured against the mean of `t`.
pub fn fit_n_log_n(n: &[f64], t: &[f64]) -> (f64, f64) {
    let basis: Vec<f64> = n.iter().map(|&v| v * v.ln()).collect();
    let c = basis.iter().zip(t).map(|(b, y)| b * y).sum::<f64>() / basis.iter().map(|b| b * b).sum::<f64>();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let ss_res: f64 = basis.iter().zip(t).map(|(b, y)| (y - c * b).powi(2)).sum();
    let ss_tot: f64 = t.iter().map(|y| (y - mean).powi(2)).sum();
    (c, 1.0 - ss_res / ss_tot)
}
