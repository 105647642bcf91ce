//! Small statistics helpers shared by the comparison harness and the
//! convergence / counting tests: log-log slope fits, Kolmogorov-Smirnov
//! distances, and deterministic pairwise reduction.

/// Least-squares slope of `ln y` against `ln x`.
///
/// Used to fit convergence orders from dyadic refinement studies.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Kolmogorov-Smirnov statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = (f - i as f64 / n).abs();
        let hi = (f - (i as f64 + 1.0) / n).abs();
        d = d.max(lo).max(hi);
    }
    d
}

/// Asymptotic KS critical value at significance `alpha` for `n` samples.
///
/// `D > critical` rejects the hypothesis at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // c(alpha) = sqrt(-ln(alpha/2)/2); c(0.01) = 1.6276
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (var / xs.len() as f64).sqrt()
}

/// Pairwise (cascade) sum over a fixed partition.
///
/// The reduction tree depends only on the slice length, so ensemble
/// averages are bit-identical regardless of how many threads produced the
/// per-trajectory values.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}
