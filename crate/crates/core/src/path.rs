//! Path-level losses: Monte Carlo over quenched disorder and queue noise,
//! density estimation with an atom at zero, moments and tail fits.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::stationary_boundary_density;
use crate::error::{Error, Result};
use crate::model::{sample_path, BaseDesign, CriticalitySpread, LinkParams, LoadModel, PathSpec, WindowSpec};
use crate::queue::{Backend, LossSample};
use crate::rng::StreamKey;
use crate::stats::{bootstrap_interval, least_squares, MeanEstimate};

/// Anything that can produce one window's loss on one link.
pub trait LinkLossSource: Sync {
    fn sample_link(&self, link: &LinkParams, window: &WindowSpec, rng: &mut dyn rand::RngCore) -> Result<LossSample>;
}

impl LinkLossSource for Backend {
    fn sample_link(&self, link: &LinkParams, window: &WindowSpec, rng: &mut dyn rand::RngCore) -> Result<LossSample> {
        self.run(link, window, rng)
    }
}

/// Long-window limit: every link loses exactly its stationary drop fraction
/// η/(1 − e^(−ηc_i)), with no window-to-window noise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryLoss;

impl LinkLossSource for StationaryLoss {
    fn sample_link(&self, link: &LinkParams, window: &WindowSpec, _rng: &mut dyn rand::RngCore) -> Result<LossSample> {
        let phi = stationary_boundary_density(link.eta, link.c);
        Ok(LossSample::from_phi(phi, window.t, link.tau))
    }
}

/// Φ = Σ ℓ_i Φ_i over the links of `path`, one independent window each.
pub fn simulate_path_loss<S: LinkLossSource + ?Sized>(
    path: &PathSpec,
    source: &S,
    rng: &mut dyn rand::RngCore,
) -> Result<f64> {
    let mut total = 0.0;
    for link in &path.links {
        let s = source.sample_link(link, &path.window, rng)?;
        total += link.ell * s.phi;
    }
    Ok(total)
}

/// Path ensemble over fresh (ℓ, η) per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub a: usize,
    pub load: LoadModel,
    pub spread: CriticalitySpread,
    pub base: BaseDesign,
    pub window: WindowSpec,
    pub backend: Backend,
}

impl PathEnsemble {
    pub fn validate(&self) -> Result<()> {
        if self.a == 0 {
            return Err(Error::param("a", "a path needs at least one link"));
        }
        self.load.validate()?;
        self.spread.validate()?;
        self.base.validate()?;
        Ok(())
    }

    /// `n` path losses; sample `i` draws its disorder and noise from stream
    /// `i` of `key`.
    pub fn sample(&self, n: usize, key: StreamKey) -> Result<Vec<f64>> {
        self.sample_with(&self.backend, n, key)
    }

    /// As [`PathEnsemble::sample`] with link losses from `source` instead of
    /// the configured backend.
    pub fn sample_with<S: LinkLossSource>(&self, source: &S, n: usize, key: StreamKey) -> Result<Vec<f64>> {
        self.validate()?;
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = key.stream(i);
                let path = sample_path(self.a, &self.load, &self.spread, &self.base, self.window, &mut rng)?;
                simulate_path_loss(&path, source, &mut rng)
            })
            .collect()
    }

    /// `n` windows of one frozen path.
    pub fn sample_fixed(&self, path: &PathSpec, n: usize, key: StreamKey) -> Result<Vec<f64>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| simulate_path_loss(path, &self.backend, &mut key.stream(i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub bins_per_decade: u32,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig { bins_per_decade: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub density: f64,
}

impl Bin {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn centre(&self) -> f64 {
        (self.lo * self.hi).sqrt()
    }
}

/// Atom at zero plus a log-binned density of the positive part, normalized
/// so that the atom and the histogram mass add up to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub atom_zero: f64,
    pub bins: Vec<Bin>,
    pub n_samples: usize,
    pub phi_range: Option<(f64, f64)>,
}

impl PdfEstimate {
    pub fn histogram_mass(&self) -> f64 {
        self.bins.iter().map(|b| b.density * b.width()).sum()
    }
}

pub const MIN_PDF_SAMPLES: usize = 1000;

/// Bin edges are 10^(k/B) for integer k, so estimates from different runs
/// share their grid.
pub fn estimate_pdf(samples: &[f64], config: BinConfig) -> Result<PdfEstimate> {
    let n = samples.len();
    if n < MIN_PDF_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "density estimate needs ≥ {MIN_PDF_SAMPLES} samples, got {n}"
        )));
    }
    if config.bins_per_decade == 0 {
        return Err(Error::param("bins_per_decade", "must be positive"));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::param(
            "samples",
            "loss fractions must be finite and non-negative",
        ));
    }
    let per = config.bins_per_decade as f64;
    let edge = |k: i64| 10f64.powf(k as f64 / per);
    let index = |x: f64| {
        let mut k = (x.log10() * per).floor() as i64;
        if x < edge(k) {
            k -= 1;
        } else if x >= edge(k + 1) {
            k += 1;
        }
        k
    };
    let positives: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
    let zeros = n - positives.len();
    let atom_zero = zeros as f64 / n as f64;
    if positives.is_empty() {
        return Ok(PdfEstimate {
            atom_zero,
            bins: Vec::new(),
            n_samples: n,
            phi_range: None,
        });
    }
    let min = positives.iter().copied().fold(f64::INFINITY, f64::min);
    let max = positives.iter().copied().fold(0.0, f64::max);
    let (k0, k1) = (index(min), index(max));
    let mut counts = vec![0u64; (k1 - k0 + 1) as usize];
    for x in &positives {
        counts[(index(*x) - k0) as usize] += 1;
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(j, &count)| {
            let k = k0 + j as i64;
            let (lo, hi) = (edge(k), edge(k + 1));
            Bin {
                lo,
                hi,
                count,
                density: count as f64 / (n as f64 * (hi - lo)),
            }
        })
        .collect();
    Ok(PdfEstimate {
        atom_zero,
        bins,
        n_samples: n,
        phi_range: Some((min, max)),
    })
}

/// Raw moments of the loss, zeros included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// ⟨Φᵏ⟩ for k = 1, …, max order.
    pub raw: Vec<f64>,
    /// Batch-means standard errors of `raw`.
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

impl MomentReport {
    pub fn mean(&self) -> f64 {
        self.raw[0]
    }

    pub fn second(&self) -> f64 {
        self.raw[1]
    }

    pub fn third(&self) -> f64 {
        self.raw[2]
    }

    /// √⟨Φ²⟩/⟨Φ⟩.
    pub fn ratio2(&self) -> f64 {
        self.second().sqrt() / self.mean()
    }

    /// ⟨Φⁿ⟩/⟨Φ⟩ⁿ.
    pub fn ratio_n(&self, n: usize) -> Option<f64> {
        self.raw.get(n.checked_sub(1)?).map(|m| m / self.mean().powi(n as i32))
    }
}

pub const MIN_MOMENT_SAMPLES: usize = 1000;
const MOMENT_BATCHES: usize = 50;

pub fn moments(samples: &[f64], max_order: usize) -> Result<MomentReport> {
    let n = samples.len();
    if n < MIN_MOMENT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "moments need ≥ {MIN_MOMENT_SAMPLES} samples, got {n}"
        )));
    }
    let orders = max_order.max(3);
    let batch = n / MOMENT_BATCHES;
    let mut raw = vec![0.0; orders];
    let mut batch_means = vec![Vec::with_capacity(MOMENT_BATCHES); orders];
    for b in 0..MOMENT_BATCHES {
        let chunk = &samples[b * batch..(b + 1) * batch];
        for (k, means) in batch_means.iter_mut().enumerate() {
            means.push(chunk.iter().map(|x| x.powi(k as i32 + 1)).sum::<f64>() / batch as f64);
        }
    }
    for (k, slot) in raw.iter_mut().enumerate() {
        *slot = samples.iter().map(|x| x.powi(k as i32 + 1)).sum::<f64>() / n as f64;
    }
    let stderr = batch_means.iter().map(|m| MeanEstimate::of(m).stderr).collect();
    Ok(MomentReport {
        raw,
        stderr,
        n_samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub bins_used: usize,
}

pub const MIN_TAIL_BINS: usize = 5;
pub const MIN_TAIL_COUNT: u64 = 20;

/// Least-squares slope of ln density against ln Φ over bins lying wholly
/// inside `[lo, hi]` with at least 20 counts each.
pub fn fit_tail_exponent(pdf: &PdfEstimate, lo: f64, hi: f64) -> Result<TailFit> {
    let used: Vec<&Bin> = pdf
        .bins
        .iter()
        .filter(|b| b.lo >= lo && b.hi <= hi && b.count >= MIN_TAIL_COUNT)
        .collect();
    if used.len() < MIN_TAIL_BINS {
        return Err(Error::InsufficientData(format!(
            "tail window [{lo:e}, {hi:e}] holds {} usable bins, need {MIN_TAIL_BINS}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|b| b.centre().ln()).collect();
    let ys: Vec<f64> = used.iter().map(|b| b.density.ln()).collect();
    let fit = least_squares(&xs, &ys)?;
    Ok(TailFit {
        slope: fit.slope,
        stderr: fit.slope_stderr,
        bins_used: used.len(),
    })
}

/// ⟨Φⁿ⟩ with its bootstrap interval, and the ratio to ⟨Φ⟩ⁿ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiLossReport {
    pub n: u32,
    pub moment: f64,
    pub moment_ci: (f64, f64),
    pub ratio: f64,
    pub ratio_ci: (f64, f64),
    /// The bootstrap interval of the ratio spans more than a decade: a few
    /// tail samples dominate and the estimate is not trustworthy.
    pub unstable: bool,
}

pub const MIN_MULTI_LOSS_SAMPLES: usize = 10_000;
const BOOTSTRAP_RESAMPLES: usize = 200;

pub fn multi_loss_prob(samples: &[f64], n: u32, key: StreamKey) -> Result<MultiLossReport> {
    if n < 2 {
        return Err(Error::param("n", format!("multi-loss order must be ≥ 2, got {n}")));
    }
    if samples.len() < MIN_MULTI_LOSS_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "multi-loss statistics need ≥ {MIN_MULTI_LOSS_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let power = n as i32;
    let moment_of = |xs: &[f64]| xs.iter().map(|x| x.powi(power)).sum::<f64>() / xs.len() as f64;
    let ratio_of = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        moment_of(xs) / mean.powi(power)
    };
    let moment = moment_of(samples);
    let ratio = ratio_of(samples);
    let mut rng = key.stream(0);
    let moment_ci = bootstrap_interval(samples, BOOTSTRAP_RESAMPLES, 0.05, &mut rng, moment_of);
    let ratio_ci = bootstrap_interval(samples, BOOTSTRAP_RESAMPLES, 0.05, &mut rng, ratio_of);
    let unstable = !(ratio_ci.0 > 0.0 && ratio_ci.1 / ratio_ci.0 <= 10.0);
    Ok(MultiLossReport {
        n,
        moment,
        moment_ci,
        ratio,
        ratio_ci,
        unstable,
    })
}

/// Draws a frozen path for the fixed-disorder mode.
pub fn freeze_path<R: Rng + ?Sized>(ensemble: &PathEnsemble, rng: &mut R) -> Result<PathSpec> {
    ensemble.validate()?;
    sample_path(
        ensemble.a,
        &ensemble.load,
        &ensemble.spread,
        &ensemble.base,
        ensemble.window,
        rng,
    )
}
