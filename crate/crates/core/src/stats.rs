//! Monte Carlo summaries and small regressions.

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical quantile of already sorted data (linear interpolation).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Sort a copy and return the requested quantiles.
pub fn quantiles(xs: &[f64], ps: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    ps.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

/// Ordinary least squares `y ≈ intercept + slope·x`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Decay rate `r` of `g(t) ≈ c·e^{-r t}` fitted on `t ≤ t_max` using only
/// samples with `g ≥ floor`. `None` with fewer than three usable points.
pub fn fit_decay_rate(times: &[f64], values: &[f64], t_max: f64, floor: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, &g)| t <= t_max && g >= floor && g > 0.0)
        .map(|(&t, &g)| (t, g.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    linear_fit(&x, &y).map(|(slope, _)| -slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.01).collect();
        let g: Vec<f64> = t.iter().map(|t| 3.0 * (-7.0 * t).exp()).collect();
        let r = fit_decay_rate(&t, &g, 0.3, 0.0).unwrap();
        assert!((r - 7.0).abs() < 1e-9);
        assert!(fit_decay_rate(&t, &g, 0.3, 10.0).is_none());
    }

    #[test]
    fn quantiles_interpolate() {
        let q = quantiles(&[3.0, 1.0, 2.0, 4.0], &[0.0, 0.5, 1.0]);
        assert_eq!(q, vec![1.0, 2.5, 4.0]);
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }
}
