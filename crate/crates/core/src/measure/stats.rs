//! Weighted means with batch-means standard errors.

/// Number of contiguous batches used for standard errors.
pub const BATCHES: usize = 20;

/// Weighted mean of `v` and its standard error from `BATCHES` contiguous
/// batches (each a weighted ratio estimate). Contiguous batching absorbs the
/// serial correlation of Markov-chain samples.
pub fn batch_mean(v: &[f64], w: &[f64]) -> (f64, f64) {
    let n = v.len();
    let tw: f64 = w.iter().sum();
    let mean = v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / tw;
    let nb = BATCHES.min(n);
    if nb < 2 {
        return (mean, f64::INFINITY);
    }
    let mut bm = Vec::with_capacity(nb);
    let mut bw = Vec::with_capacity(nb);
    for b in 0..nb {
        let (lo, hi) = (b * n / nb, (b + 1) * n / nb);
        let sw: f64 = w[lo..hi].iter().sum();
        if sw > 0.0 {
            bm.push(v[lo..hi].iter().zip(&w[lo..hi]).map(|(a, c)| a * c).sum::<f64>() / sw);
            bw.push(sw);
        }
    }
    let k = bm.len() as f64;
    if k < 2.0 {
        return (mean, f64::INFINITY);
    }
    // weighted variance of batch estimates around the overall mean
    let sw: f64 = bw.iter().sum();
    let var = bm.iter().zip(&bw).map(|(m, c)| c / sw * (m - mean).powi(2)).sum::<f64>() * k / (k - 1.0);
    let eff = sw * sw / bw.iter().map(|c| c * c).sum::<f64>();
    (mean, (var / eff).sqrt())
}

/// Unweighted convenience form.
pub fn batch_mean_unweighted(v: &[f64]) -> (f64, f64) {
    batch_mean(v, &vec![1.0; v.len()])
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(b, a, se_b)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(p, q)| (q - a - b * p).powi(2)).sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (b, a, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn iid_standard_error_is_calibrated() {
        let mut r = crate::rng::seeded(1);
        let v: Vec<f64> = (0..20000).map(|_| r.random::<f64>()).collect();
        let (m, se) = batch_mean_unweighted(&v);
        let exact = (1.0f64 / 12.0 / 20000.0).sqrt();
        assert!((m - 0.5).abs() < 5.0 * exact);
        assert!(se > 0.5 * exact && se < 2.0 * exact, "{se} vs {exact}");
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|a| 2.0 * a - 1.0).collect();
        let (b, a, se) = ols(&x, &y);
        assert!((b - 2.0).abs() < 1e-12 && (a + 1.0).abs() < 1e-12 && se < 1e-10);
    }
}
