//! Small statistical helpers: moments, batch-means standard errors, the
//! zero-frequency spectral density, and the one-sample Kolmogorov-Smirnov test.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Standard error of the mean of a correlated sequence by non-overlapping
/// batch means (`batches` equal batches; leftovers at the start are dropped).
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = batches.max(2);
    let len = x.len() / b;
    if len == 0 {
        return sd(x) / (x.len() as f64).sqrt();
    }
    let off = x.len() - len * b;
    let means: Vec<f64> = (0..b).map(|k| mean(&x[off + k * len..off + (k + 1) * len])).collect();
    sd(&means) / (b as f64).sqrt()
}

/// Spectral density at frequency zero with a Bartlett lag window of
/// truncation `max_lag`: `γ₀ + 2 Σ_{h=1}^{M} (1 − h/(M+1)) γ_h`.
pub fn spectral_density_zero(x: &[f64], max_lag: usize) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov = |h: usize| c[..n - h].iter().zip(&c[h..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut s = acov(0);
    let lag = max_lag.min(n - 1);
    for h in 1..=lag {
        s += 2.0 * (1.0 - h as f64 / (lag as f64 + 1.0)) * acov(h);
    }
    s.max(0.0)
}

/// Asymptotic Kolmogorov survival function `Q(t) = 2 Σ (−1)^{k−1} e^{−2k²t²}`.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test against `cdf`. Returns `(D, p-value)`; the p-value uses
/// the small-sample corrected asymptotic law.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d = 0.0_f64;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Evenly spaced quantile `q ∈ [0, 1]` of a sample (linear interpolation).
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}
