//! Chain summaries and the distribution tests used by the test suites.

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linearly interpolated empirical quantile (the usual "type 7" rule).
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size from Geyer's initial monotone positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov = |lag: usize| -> f64 { c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let c0 = acov(0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = acov(2 * k) + acov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum / c0 - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// `Q_KS(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov–Smirnov test against the CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> KsResult {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, xi) in v.iter().enumerate() {
        let f = cdf(*xi);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: ks_p(d, n) }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    KsResult { statistic: d, p_value: ks_p(d, n1 * n2 / (n1 + n2)) }
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let s = sd(&v);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    0.9 * spread * (v.len() as f64).powf(-0.2)
}

/// Local maxima of a Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct KdeModes {
    pub bandwidth: f64,
    /// Mode locations, ascending.
    pub locations: Vec<f64>,
    /// Density at each mode relative to the highest one.
    pub heights: Vec<f64>,
}

impl KdeModes {
    pub fn count(&self) -> usize {
        self.locations.len()
    }
}

/// Counts KDE modes with a Silverman bandwidth. Modes lower than
/// `min_relative_height` times the tallest are ignored, and of two modes
/// closer than `min_separation` only the taller is kept.
pub fn kde_modes(x: &[f64], min_separation: f64, min_relative_height: f64) -> Result<KdeModes> {
    let finite: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: finite.len() });
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut h = silverman_bandwidth(&finite);
    if !(h > 0.0) {
        // all values equal
        return Ok(KdeModes { bandwidth: 0.0, locations: vec![lo], heights: vec![1.0] });
    }
    let bins = 1024usize;
    let (a, b) = (lo - 4.0 * h, hi + 4.0 * h);
    let w = (b - a) / (bins - 1) as f64;
    // linear binning, then a discrete Gaussian convolution
    let mut counts = vec![0.0; bins];
    for v in &finite {
        let t = (v - a) / w;
        let k = (t.floor() as usize).min(bins - 2);
        let f = t - k as f64;
        counts[k] += 1.0 - f;
        counts[k + 1] += f;
    }
    h = h.max(w);
    let reach = ((4.0 * h / w).ceil() as usize).min(bins);
    let kern: Vec<f64> = (0..=reach).map(|d| (-0.5 * (d as f64 * w / h).powi(2)).exp()).collect();
    let mut dens = vec![0.0; bins];
    for (i, c) in counts.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let start = i.saturating_sub(reach);
        let end = (i + reach).min(bins - 1);
        for (j, d) in dens.iter_mut().enumerate().take(end + 1).skip(start) {
            *d += c * kern[i.abs_diff(j)];
        }
    }
    let top = dens.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut i = 1;
    while i + 1 < bins {
        if dens[i] > dens[i - 1] {
            // walk across flat tops
            let mut j = i;
            while j + 1 < bins && dens[j + 1] == dens[i] {
                j += 1;
            }
            if j + 1 < bins && dens[j + 1] < dens[i] && dens[i] >= min_relative_height * top {
                let loc = a + w * 0.5 * (i + j) as f64;
                peaks.push((loc, dens[i] / top));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    // merge peaks that are too close, keeping the taller
    peaks.sort_by(|p, q| q.1.total_cmp(&p.1));
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| (k.0 - p.0).abs() >= min_separation) {
            kept.push(p);
        }
    }
    kept.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(KdeModes {
        bandwidth: h,
        locations: kept.iter().map(|k| k.0).collect(),
        heights: kept.iter().map(|k| k.1).collect(),
    })
}
