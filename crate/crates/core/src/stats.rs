//! Estimators and goodness-of-fit statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_cdf;

/// Sample mean with its i.i.d. standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Standard error of the mean of `xs` from `batches` contiguous batch
/// means.
pub fn batch_stderr(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(xs.len().max(2));
    let size = xs.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    MeanEstimate::of(&means).stderr
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Kolmogorov–Smirnov distance between the sample and a law on [0, ∞)
/// given by its CDF. The law may carry an atom at zero; ties are grouped so
/// both sides of every jump are compared.
pub fn ks_statistic<F: FnMut(f64) -> f64>(samples: &[f64], mut cdf: F) -> f64 {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        let f = cdf(v);
        let left = if v <= 0.0 { 0.0 } else { f };
        d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - left).abs());
        i = j;
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] == v {
            i += 1;
        }
        while j < xb.len() && xb[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Anderson–Darling test of normality with mean and variance estimated from
/// the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    /// Small-sample corrected statistic A*².
    pub statistic: f64,
    pub p_value: f64,
}

pub fn anderson_darling_normal(xs: &[f64]) -> Result<NormalityTest> {
    let n = xs.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "normality test needs ≥ 8 samples, got {n}"
        )));
    }
    let est = MeanEstimate::of(xs);
    let sd = est.stderr * (n as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InsufficientData("normality test on a constant sample".into()));
    }
    let z: Vec<f64> = sorted(xs).iter().map(|x| (x - est.mean) / sd).collect();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let lower = ln_normal_cdf(z[i]);
        let upper = ln_normal_cdf(-z[n - 1 - i]);
        s += (2 * i + 1) as f64 * (lower + upper);
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    // The last branch stops decreasing at its vertex, a ≈ 153.
    let p_value = if !(a < 153.0) {
        0.0
    } else if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Ok(NormalityTest {
        statistic: a,
        p_value: p_value.clamp(0.0, 1.0),
    })
}

/// ln Φ(z), finite far into the lower tail where Φ itself underflows.
fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        return normal_cdf(z).ln();
    }
    let z2 = z * z;
    -0.5 * z2 - (-z * (2.0 * std::f64::consts::PI).sqrt()).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientData(format!(
            "line fit needs ≥ 2 paired points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("line fit with no spread in x".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Wilson score interval for k successes in n trials at normal quantile z.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Percentile bootstrap interval of `stat` at two-sided level `1 − alpha`.
pub fn bootstrap_interval<R, S>(xs: &[f64], resamples: usize, alpha: f64, rng: &mut R, mut stat: S) -> (f64, f64)
where
    R: Rng + ?Sized,
    S: FnMut(&[f64]) -> f64,
{
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = xs[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let pick = |q: f64| {
        let idx = ((q * (resamples - 1) as f64).round() as usize).min(resamples - 1);
        values[idx]
    };
    (pick(alpha / 2.0), pick(1.0 - alpha / 2.0))
}

/// Continuous power-law tail fit p(x) ∝ x^(−α) for x ≥ x_min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub x_min: f64,
    pub n_tail: usize,
    pub ks_distance: f64,
}

/// Maximum-likelihood exponent α̂ = 1 + n/Σ ln(x/x_min) with x_min chosen to
/// minimize the KS distance between the tail and the fitted law, scanning
/// candidates that leave at least `min_tail` points.
pub fn fit_power_law(values: &[f64], min_tail: usize) -> Result<PowerLawFit> {
    let mut xs: Vec<f64> = values.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let min_tail = min_tail.max(10);
    if n < min_tail {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs ≥ {min_tail} positive values, got {n}"
        )));
    }
    // Suffix sums of ln x for O(1) estimates at each candidate.
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + xs[i].ln();
    }
    let mut candidates: Vec<usize> = Vec::new();
    let mut i = 0;
    while i + min_tail <= n {
        if i == 0 || xs[i] != xs[i - 1] {
            candidates.push(i);
        }
        i += 1;
    }
    let stride = (candidates.len() / 400).max(1);
    let mut best: Option<PowerLawFit> = None;
    for &start in candidates.iter().step_by(stride) {
        let x_min = xs[start];
        let m = n - start;
        let log_sum = suffix[start] - m as f64 * x_min.ln();
        if !(xs[n - 1] > x_min && log_sum > 0.0) {
            continue;
        }
        let alpha = 1.0 + m as f64 / log_sum;
        let mut d: f64 = 0.0;
        for (k, x) in xs[start..].iter().enumerate() {
            let model = 1.0 - (x / x_min).powf(1.0 - alpha);
            d = d
                .max((k as f64 / m as f64 - model).abs())
                .max(((k + 1) as f64 / m as f64 - model).abs());
        }
        if best.is_none_or(|b| d < b.ks_distance) {
            best = Some(PowerLawFit {
                exponent: alpha,
                stderr: (alpha - 1.0) / (m as f64).sqrt(),
                x_min,
                n_tail: m,
                ks_distance: d,
            });
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no tail with spread above any cutoff".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn lower_tail_log_cdf_is_continuous() {
        let below = ln_normal_cdf(-30.0 - 1e-9);
        let above = ln_normal_cdf(-30.0 + 1e-9);
        assert!((below - above).abs() < 1e-6, "{below} vs {above}");
        assert!(ln_normal_cdf(-1e3).is_finite());
    }

    #[test]
    fn extreme_outlier_rejects_normality() {
        let mut xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64).collect();
        xs.push(1e12);
        let t = anderson_darling_normal(&xs).unwrap();
        assert!(t.statistic.is_finite());
        assert_eq!(t.p_value, 0.0);
    }

    #[test]
    fn mean_and_batches() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let m = MeanEstimate::of(&xs);
        assert!((m.mean - 4.5).abs() < 1e-12);
        assert!(batch_stderr(&xs, 10) < 1e-12);
    }

    #[test]
    fn ks_against_uniform_and_atom() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
        // Half zeros, half uniform: matches the mixed law exactly.
        let mut mixed = vec![0.0; 1000];
        mixed.extend(xs.iter().copied());
        let d = ks_statistic(&mixed, |x| 0.5 + 0.5 * x.clamp(0.0, 1.0));
        assert!(d < 0.001);
        // Missing the atom is detected at its full weight.
        let d = ks_statistic(&mixed, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5).abs() < 1e-3);
    }

    #[test]
    fn ks_two_sample_basic() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0, 1.0, 2.0], &[0.0, 1.0, 1.0, 2.0]), 0.25);
    }

    #[test]
    fn anderson_darling_accepts_normal_rejects_exponential() {
        let mut rng = StreamKey::new(4).stream(0);
        let xs: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(anderson_darling_normal(&xs).unwrap().p_value > 0.01);
        let ys: Vec<f64> = (0..5000).map(|_| -rng.random::<f64>().ln()).collect();
        assert!(anderson_darling_normal(&ys).unwrap().p_value < 1e-6);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = least_squares(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-12);
        assert!(least_squares(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson_interval(50, 100, Z99);
        assert!(lo < 0.5 && hi > 0.5 && hi - lo < 0.3);
        assert_eq!(wilson_interval(0, 0, Z99), (0.0, 1.0));
    }

    #[test]
    fn power_law_recovers_pareto_exponent() {
        let mut rng = StreamKey::new(9).stream(0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / 1.2))
            .collect();
        let fit = fit_power_law(&xs, 100).unwrap();
        assert!((fit.exponent - 2.2).abs() < 0.1, "{fit:?}");
        assert!(fit_power_law(&vec![2.0; 5000], 100).is_err());
    }
}
