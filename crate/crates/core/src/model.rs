//! Link parameters and the quenched-disorder samplers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Quenched parameters of one link.
///
/// Time is measured in the same units as `tau`; the queue length in
/// packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub ell: f64,
    pub eta: f64,
    pub tau: f64,
    pub c: f64,
}

impl LinkParams {
    pub fn new(ell: f64, eta: f64, tau: f64, c: f64) -> Result<Self> {
        let link = LinkParams { ell, eta, tau, c };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.c >= 2.0 && self.c.is_finite()) {
            return Err(Error::param(
                "c",
                format!("buffer must hold at least 2 packets, got {}", self.c),
            ));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::param("ell", format!("must be positive, got {}", self.ell)));
        }
        if !(self.eta.abs() < 1.0) {
            return Err(Error::param("eta", format!("must lie in (-1, 1), got {}", self.eta)));
        }
        Ok(())
    }

    /// Diffusion coefficient D = 1/τ.
    pub fn diffusion(&self) -> f64 {
        1.0 / self.tau
    }

    /// Drift V = η/τ.
    pub fn drift(&self) -> f64 {
        self.eta / self.tau
    }

    /// Service rate r = (1 − η)/τ.
    pub fn service_rate(&self) -> f64 {
        (1.0 - self.eta) / self.tau
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        LinkParams::new(self.ell, eta, self.tau, self.c)
    }
}

/// Power-law load distribution with density ∝ ℓ^(−2−δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub delta: f64,
    #[serde(default = "default_ell_min")]
    pub ell_min: f64,
    #[serde(default)]
    pub ell_max: Option<f64>,
}

fn default_ell_min() -> f64 {
    1.0
}

impl LoadModel {
    pub fn new(delta: f64) -> Result<Self> {
        let model = LoadModel {
            delta,
            ell_min: 1.0,
            ell_max: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_cutoff(mut self, ell_max: f64) -> Result<Self> {
        self.ell_max = Some(ell_max);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > -1.0 && self.delta.is_finite()) {
            return Err(Error::param(
                "delta",
                format!("load density is not normalizable for delta = {}", self.delta),
            ));
        }
        if !(self.ell_min > 0.0 && self.ell_min.is_finite()) {
            return Err(Error::param(
                "ell_min",
                format!("must be positive, got {}", self.ell_min),
            ));
        }
        if let Some(max) = self.ell_max {
            if !(max > self.ell_min) {
                return Err(Error::param(
                    "ell_max",
                    format!("must exceed ell_min = {}, got {max}", self.ell_min),
                ));
            }
        }
        Ok(())
    }

    /// Inverse survival function: maps u ∈ (0, 1] to a load, u = 1 giving
    /// `ell_min`.
    pub fn load_from_uniform(&self, u: f64) -> f64 {
        let alpha = 1.0 + self.delta;
        let floor = match self.ell_max {
            Some(max) => (max / self.ell_min).powf(-alpha),
            None => 0.0,
        };
        let s = floor + u * (1.0 - floor);
        let ell = self.ell_min * s.powf(-1.0 / alpha);
        match self.ell_max {
            Some(max) => ell.min(max),
            None => ell,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.load_from_uniform(open_unit(rng))
    }

    /// Mean load, infinite when δ ≤ 0 without cutoff.
    pub fn mean(&self) -> f64 {
        let alpha = 1.0 + self.delta;
        match self.ell_max {
            None if self.delta <= 0.0 => f64::INFINITY,
            None => self.ell_min * alpha / self.delta,
            Some(max) => {
                let r = max / self.ell_min;
                let norm = 1.0 - r.powf(-alpha);
                let first = if self.delta.abs() < 1e-12 {
                    alpha * r.ln()
                } else {
                    alpha / self.delta * (1.0 - r.powf(-self.delta))
                };
                self.ell_min * first / norm
            }
        }
    }
}

pub fn sample_load<R: Rng + ?Sized>(model: &LoadModel, rng: &mut R) -> Result<f64> {
    model.validate()?;
    Ok(model.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadShape {
    #[default]
    Uniform,
    Gaussian,
}

/// Symmetric distribution of the imbalance η across links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalitySpread {
    pub gamma: f64,
    #[serde(default)]
    pub shape: SpreadShape,
}

impl CriticalitySpread {
    pub fn uniform(gamma: f64) -> Result<Self> {
        let spread = CriticalitySpread {
            gamma,
            shape: SpreadShape::Uniform,
        };
        spread.validate()?;
        Ok(spread)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        let spread = CriticalitySpread {
            gamma,
            shape: SpreadShape::Gaussian,
        };
        spread.validate()?;
        Ok(spread)
    }

    /// γ = 0 is accepted as the degenerate spread with η ≡ 0.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", format!("must lie in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// Draws η. The Gaussian shape is truncated to |η| < 1 by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        match self.shape {
            SpreadShape::Uniform => self.gamma * (2.0 * rng.random::<f64>() - 1.0),
            SpreadShape::Gaussian => loop {
                let z: f64 = StandardNormal.sample(rng);
                let eta = self.gamma * z;
                if eta.abs() < 1.0 {
                    break eta;
                }
            },
        }
    }

    pub fn density(&self, eta: f64) -> f64 {
        let g = self.gamma;
        match self.shape {
            SpreadShape::Uniform => {
                if eta.abs() <= g {
                    0.5 / g
                } else {
                    0.0
                }
            }
            SpreadShape::Gaussian => (-0.5 * (eta / g).powi(2)).exp() / (g * (2.0 * std::f64::consts::PI).sqrt()),
        }
    }

    /// ⟨η θ(η)⟩, the mean of the positive part.
    pub fn positive_part_mean(&self) -> f64 {
        match self.shape {
            SpreadShape::Uniform => self.gamma / 4.0,
            SpreadShape::Gaussian => self.gamma / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

pub fn sample_eta<R: Rng + ?Sized>(spread: &CriticalitySpread, rng: &mut R) -> Result<f64> {
    spread.validate()?;
    Ok(spread.sample(rng))
}

/// Buffer and inter-arrival time of a link with unit relative load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDesign {
    pub c: f64,
    pub tau: f64,
}

impl BaseDesign {
    pub fn new(c: f64, tau: f64) -> Result<Self> {
        let base = BaseDesign { c, tau };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 2.0 && self.c.is_finite()) {
            return Err(Error::param(
                "c",
                format!("base buffer must be at least 2, got {}", self.c),
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", format!("must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Scales buffer and arrival rate with the load: c_i = round(cℓ),
/// τ_i = τ/ℓ.
pub fn realize_link(base: &BaseDesign, ell: f64, eta: f64) -> Result<LinkParams> {
    base.validate()?;
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::param("ell", format!("must be positive, got {ell}")));
    }
    let c = (base.c * ell).round();
    if c < 2.0 {
        return Err(Error::param(
            "c",
            format!("buffer {}·{ell} rounds to {c} packets, below the minimum of 2", base.c),
        ));
    }
    LinkParams::new(ell, eta, base.tau / ell, c)
}

/// Observation window of length `t` for base inter-arrival time `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub t: f64,
    pub tau: f64,
}

impl WindowSpec {
    pub fn new(t: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("must be positive, got {tau}")));
        }
        if !(t >= tau && t.is_finite()) {
            return Err(Error::param("T", format!("window {t} is shorter than tau = {tau}")));
        }
        Ok(WindowSpec { t, tau })
    }

    /// Window with T = τ/φ₀².
    pub fn from_phi0(phi0: f64, tau: f64) -> Result<Self> {
        if !(phi0 > 0.0 && phi0 <= 1.0) {
            return Err(Error::param("phi0", format!("must lie in (0, 1], got {phi0}")));
        }
        WindowSpec::new(tau / (phi0 * phi0), tau)
    }

    pub fn phi0(&self) -> f64 {
        (self.tau / self.t).sqrt()
    }

    pub fn phi0_sq(&self) -> f64 {
        self.tau / self.t
    }

    /// Window length in units of the base inter-arrival time.
    pub fn t_over_tau(&self) -> f64 {
        self.t / self.tau
    }
}

/// An a-link path observed over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub links: Vec<LinkParams>,
    pub window: WindowSpec,
}

impl PathSpec {
    pub fn new(links: Vec<LinkParams>, window: WindowSpec) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::param("a", "a path needs at least one link"));
        }
        for link in &links {
            link.validate()?;
        }
        Ok(PathSpec { links, window })
    }

    pub fn a(&self) -> usize {
        self.links.len()
    }
}

/// Draws `a` independent links, each with its own load and imbalance.
pub fn sample_path<R: Rng + ?Sized>(
    a: usize,
    model: &LoadModel,
    spread: &CriticalitySpread,
    base: &BaseDesign,
    window: WindowSpec,
    rng: &mut R,
) -> Result<PathSpec> {
    if a == 0 {
        return Err(Error::param("a", "a path needs at least one link"));
    }
    model.validate()?;
    spread.validate()?;
    let links = (0..a)
        .map(|_| {
            let ell = model.sample(rng);
            let eta = spread.sample(rng);
            realize_link(base, ell, eta)
        })
        .collect::<Result<Vec<_>>>()?;
    PathSpec::new(links, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn load_inverse_cdf_points() {
        let model = LoadModel::new(0.25).unwrap();
        assert_eq!(model.load_from_uniform(1.0), 1.0);
        let expected = 2f64.powf(0.8);
        assert!((model.load_from_uniform(0.5) - expected).abs() < 1e-12);
        assert!((expected - 1.7411).abs() < 1e-4);
    }

    #[test]
    fn truncated_load_respects_cutoff() {
        let model = LoadModel::new(0.25).unwrap().with_cutoff(100.0).unwrap();
        assert_eq!(model.load_from_uniform(1.0), 1.0);
        assert!((model.load_from_uniform(1e-300) - 100.0).abs() < 1e-9);
        // Median of the truncated law solves S(ℓ) = ½ by hand.
        let b = 100f64.powf(-1.25);
        let median = (b + 0.5 * (1.0 - b)).powf(-0.8);
        assert!((model.load_from_uniform(0.5) - median).abs() < 1e-12);
    }

    #[test]
    fn load_rejects_non_normalizable() {
        assert!(LoadModel::new(-1.0).is_err());
        assert!(LoadModel::new(-1.5).is_err());
        assert!(LoadModel::new(0.25).unwrap().with_cutoff(0.5).is_err());
    }

    #[test]
    fn load_empirical_cdf_and_mean() {
        let model = LoadModel::new(0.25).unwrap();
        let mut rng = StreamKey::new(11).stream(0);
        let n = 1_000_000;
        let mut below_median = 0usize;
        let mut logs = 0.0;
        for _ in 0..n {
            let ell = model.sample(&mut rng);
            assert!(ell >= 1.0);
            if ell < 2f64.powf(0.8) {
                below_median += 1;
            }
            logs += ell.ln();
        }
        let frac = below_median as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "frac {frac}");
        // ln ℓ is exponential with rate 1 + δ: a finite-variance proxy for
        // the mean, whose sample estimate converges too slowly at δ = 1/4.
        let mean_log = logs / n as f64;
        let sd = 1.0 / 1.25 / (n as f64).sqrt();
        assert!((mean_log - 0.8).abs() < 5.0 * sd, "mean log {mean_log}");
        assert!((model.mean() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn load_mean_with_cutoff_matches_quadrature() {
        let model = LoadModel::new(0.25).unwrap().with_cutoff(900.0).unwrap();
        // Midpoint rule on ln ℓ with density (1+δ)ℓ^(−1−δ)/(1 − 900^(−1−δ)).
        let n = 200_000;
        let h = 900f64.ln() / n as f64;
        let norm = 1.0 - 900f64.powf(-1.25);
        let mut acc = 0.0;
        for k in 0..n {
            let ell = ((k as f64 + 0.5) * h).exp();
            acc += ell * 1.25 * ell.powf(-2.25) * ell * h;
        }
        assert!((model.mean() - acc / norm).abs() < 1e-6 * acc);
    }

    #[test]
    fn eta_support_and_positive_mean() {
        let spread = CriticalitySpread::uniform(1e-4).unwrap();
        let mut rng = StreamKey::new(3).stream(0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut pos = 0.0;
        for _ in 0..n {
            let eta = spread.sample(&mut rng);
            assert!(eta.abs() <= 1e-4);
            sum += eta;
            pos += eta.max(0.0);
        }
        let sigma = 1e-4 / 3f64.sqrt();
        assert!((sum / n as f64).abs() < 4.0 * sigma / (n as f64).sqrt());
        let pos_mean = pos / n as f64;
        assert!((pos_mean - 2.5e-5).abs() < 1e-7, "{pos_mean}");
        assert_eq!(spread.positive_part_mean(), 2.5e-5);
    }

    #[test]
    fn degenerate_spread_is_zero() {
        let spread = CriticalitySpread::uniform(0.0).unwrap();
        let mut rng = StreamKey::new(3).stream(0);
        assert!((0..100).all(|_| spread.sample(&mut rng) == 0.0));
    }

    #[test]
    fn realize_link_examples() {
        let base = BaseDesign::new(1000.0, 1.0).unwrap();
        let l = realize_link(&base, 1.0, 0.0).unwrap();
        assert_eq!((l.c, l.tau, l.diffusion(), l.drift()), (1000.0, 1.0, 1.0, 0.0));
        let l = realize_link(&base, 4.0, 0.01).unwrap();
        assert_eq!(l.c, 4000.0);
        assert_eq!(l.tau, 0.25);
        assert_eq!(l.diffusion(), 4.0);
        assert!((l.drift() - 0.04).abs() < 1e-15);
        let l = realize_link(&base, 1e3, -0.01).unwrap();
        assert_eq!(l.c, 1e6);
        assert!((l.tau - 1e-3).abs() < 1e-18);
        assert!((l.service_rate() - 1010.0).abs() < 1e-9);
        assert!((1.0 - l.tau * l.service_rate() - l.eta).abs() < 1e-15);
    }

    #[test]
    fn realize_link_rejects_tiny_buffer() {
        let base = BaseDesign::new(10.0, 1.0).unwrap();
        assert!(realize_link(&base, 0.1, 0.0).is_err());
        assert!(realize_link(&base, 0.2, 0.0).is_ok());
    }

    #[test]
    fn window_phi0() {
        let w = WindowSpec::from_phi0(3e-3, 1.0).unwrap();
        assert!((w.phi0_sq() - 9e-6).abs() < 1e-20);
        assert!(WindowSpec::new(0.5, 1.0).is_err());
    }

    #[test]
    fn path_sampling() {
        let model = LoadModel::new(0.25).unwrap();
        let spread = CriticalitySpread::uniform(1e-4).unwrap();
        let base = BaseDesign::new(1e4, 1.0).unwrap();
        let window = WindowSpec::from_phi0(3e-3, 1.0).unwrap();
        let mut rng = StreamKey::new(5).stream(0);
        let p = sample_path(10, &model, &spread, &base, window, &mut rng).unwrap();
        assert_eq!(p.a(), 10);
        assert!(sample_path(0, &model, &spread, &base, window, &mut rng).is_err());
        let one = sample_path(1, &model, &spread, &base, window, &mut rng).unwrap();
        assert_eq!(one.a(), 1);
    }
}
