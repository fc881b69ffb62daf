//! Single-link queue simulation over one observation window.
//!
//! Three backends produce the loss fraction Φ of a window:
//!
//! * `Diffusion` integrates the bounded drift-diffusion queue and measures
//!   the time spent in the top packet slot.
//! * `Event` runs the birth–death packet queue and counts arrivals that find
//!   the buffer full.
//! * `LocalTime` samples Φ exactly in O(1) for deep buffers: the time spent
//!   against the top wall equals the overshoot of the free walk's running
//!   maximum over the starting distance from the wall.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkParams, WindowSpec};
use crate::rng::{RandomStream, StreamKey};

/// Loss observed on one link during one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub phi: f64,
    pub lambda: f64,
    pub window: f64,
    pub lossless: bool,
}

impl LossSample {
    pub fn from_phi(phi: f64, window: f64, tau: f64) -> Self {
        let phi = phi.clamp(0.0, 1.0);
        LossSample {
            phi,
            lambda: phi * window / tau,
            window,
            lossless: phi == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    /// Euler–Maruyama with step `dt_fraction`·τ_i near the walls.
    Diffusion {
        dt_fraction: f64,
    },
    Event,
    LocalTime,
}

impl Backend {
    pub fn diffusion() -> Self {
        Backend::Diffusion { dt_fraction: 0.05 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Diffusion { .. } => "diffusion",
            Backend::Event => "event",
            Backend::LocalTime => "local-time",
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, link: &LinkParams, window: &WindowSpec, rng: &mut R) -> Result<LossSample> {
        match *self {
            Backend::Diffusion { dt_fraction } => run_diffusion_window(link, window, dt_fraction * link.tau, rng),
            Backend::Event => run_event_window(link, window, rng),
            Backend::LocalTime => run_local_time_window(link, window, rng),
        }
    }
}

fn check_link_window(link: &LinkParams, window: &WindowSpec) -> Result<()> {
    link.validate()?;
    if window.t < 10.0 * link.tau {
        return Err(Error::param(
            "T",
            format!(
                "window {} is shorter than 10 inter-arrival times of the link ({})",
                window.t, link.tau
            ),
        ));
    }
    Ok(())
}

/// Draws v ∈ [0, len] with density ∝ e^(−rate·v), rate ≥ 0.
fn truncated_exponential(rate: f64, len: f64, u: f64) -> f64 {
    if rate * len < 1e-12 {
        return u * len;
    }
    let v = -(-u * (-(-rate * len).exp_m1())).ln_1p() / rate;
    v.clamp(0.0, len)
}

/// Stationary distance of the queue below its top wall, density ∝ e^(−ηy)
/// on [0, c].
pub fn stationary_depth<R: Rng + ?Sized>(eta: f64, c: f64, rng: &mut R) -> f64 {
    let u = rng.random::<f64>();
    if eta >= 0.0 {
        truncated_exponential(eta, c, u)
    } else {
        c - truncated_exponential(-eta, c, u)
    }
}

/// Draws k ∈ {0, …, n−1} with P(k) ∝ q^k, 0 < q ≤ 1.
fn truncated_geometric(q: f64, n: u64, u: f64) -> u64 {
    if q >= 1.0 || n <= 1 {
        return ((u * n as f64) as u64).min(n.saturating_sub(1));
    }
    let log_q = q.ln();
    let tail = (n as f64 * log_q).exp();
    let k = (-u * (1.0 - tail)).ln_1p() / log_q;
    (k.max(0.0) as u64).min(n - 1)
}

fn fold(mut x: f64, c: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > c {
            x = 2.0 * c - x;
        } else {
            return x;
        }
    }
}

/// Integrates dx = V dt + √(2D dt)·ξ on [0, c] with reflecting walls and
/// returns the fraction of the window spent in the top slot [c − 1, c].
///
/// `dt` is the step used near the top slot. Further down the walk advances
/// in exact Gaussian jumps short enough that reaching the slot within one
/// jump is a > 8σ event. Reflection at the floor is by folding, exact for
/// the driftless walk and accurate to O(ηΔ) otherwise; it never affects
/// the loss because the floor is far from the slot.
pub fn run_diffusion_window<R: Rng + ?Sized>(
    link: &LinkParams,
    window: &WindowSpec,
    dt: f64,
    rng: &mut R,
) -> Result<LossSample> {
    check_link_window(link, window)?;
    if !(dt > 0.0 && dt <= link.tau / 10.0) {
        return Err(Error::param(
            "dt",
            format!("step {dt} must be positive and at most tau_i/10 = {}", link.tau / 10.0),
        ));
    }
    // Time in units of τ_i: drift η, variance 2 per unit time.
    let eta = link.eta;
    let c = link.c;
    let layer = c - 1.0;
    let h = dt / link.tau;
    let total = window.t / link.tau;
    let mut x = c - stationary_depth(eta, c, rng);
    let mut elapsed = 0.0;
    let mut occupied = 0.0;
    const SIGMAS: f64 = 8.0;
    while elapsed < total {
        let remaining = total - elapsed;
        let room = layer - x;
        let mut step = h;
        if room > 0.0 {
            let diffusive = (room / (2.0 * SIGMAS)).powi(2) / 2.0;
            let advective = if eta == 0.0 {
                f64::INFINITY
            } else {
                room / (2.0 * eta.abs())
            };
            step = step.max(diffusive.min(advective));
        }
        step = step.min(remaining);
        if x >= layer {
            occupied += step;
        }
        let xi: f64 = StandardNormal.sample(rng);
        x = fold(x + eta * step + (2.0 * step).sqrt() * xi, c);
        elapsed += step;
    }
    Ok(LossSample::from_phi(occupied / total, window.t, link.tau))
}

/// Birth–death packet queue with Poisson arrivals (rate 1/τ_i) and
/// exponential service (rate r_i). Arrivals that find c − 1 packets queued
/// land in the top slot and are dropped; Φ is the dropped fraction of all
/// arrivals in the window.
///
/// The chain is simulated by uniformization at total rate λ + μ; runs of
/// events that cannot reach either wall are advanced in one binomial draw.
pub fn run_event_window<R: Rng + ?Sized>(link: &LinkParams, window: &WindowSpec, rng: &mut R) -> Result<LossSample> {
    check_link_window(link, window)?;
    let arrival = 1.0 / link.tau;
    let service = link.service_rate();
    let rate = arrival + service;
    let p_arrival = arrival / rate;
    let top = link.c as u64 - 1;
    // Stationary occupancy ∝ ρ^n with ρ = 1/(1 − η) on {0, …, c − 1}.
    let u = rng.random::<f64>();
    let mut n = if link.eta >= 0.0 {
        top - truncated_geometric(1.0 - link.eta, top + 1, u)
    } else {
        truncated_geometric(1.0 / (1.0 - link.eta), top + 1, u)
    };
    let events_mean = rate * window.t;
    let mut events = Poisson::new(events_mean)
        .map_err(|e| Error::Numerical(format!("event count: {e}")))?
        .sample(rng) as u64;
    let threshold = (p_arrival * 2f64.powi(64)).min(u64::MAX as f64) as u64;
    let mut arrivals: u64 = 0;
    let mut drops: u64 = 0;
    while events > 0 {
        let block = n.min(top - n).min(events);
        if block >= 16 {
            let ups = Binomial::new(block, p_arrival)
                .map_err(|e| Error::Numerical(format!("event block: {e}")))?
                .sample(rng);
            n = n + ups - (block - ups);
            arrivals += ups;
            events -= block;
            continue;
        }
        events -= 1;
        if rng.next_u64() < threshold {
            arrivals += 1;
            if n == top {
                drops += 1;
            } else {
                n += 1;
            }
        } else {
            n = n.saturating_sub(1);
        }
    }
    let phi = if arrivals == 0 {
        0.0
    } else {
        drops as f64 / arrivals as f64
    };
    Ok(LossSample::from_phi(phi, window.t, link.tau))
}

/// Exact loss sample of a deep-buffer link.
///
/// Over a window short against the time to cross the buffer, the queue
/// only feels its top wall. Started y below the wall, the reflected walk
/// spends local time (M − y)⁺ at the wall, where M is the running maximum
/// of the free walk. Given its endpoint X ~ N(ηt, 2t), M has the closed-form
/// law M = (X + √(X² + 4tE))/2 with E ~ Exp(1), so Λ is drawn from three
/// variates.
pub fn run_local_time_window<R: Rng + ?Sized>(
    link: &LinkParams,
    window: &WindowSpec,
    rng: &mut R,
) -> Result<LossSample> {
    check_link_window(link, window)?;
    let t = window.t / link.tau;
    let spread = (2.0 * t).sqrt();
    if link.c < 4.0 * spread {
        return Err(Error::param(
            "c",
            format!(
                "buffer {} is too shallow for the local-time backend over {t} steps (needs ≥ {})",
                link.c,
                4.0 * spread
            ),
        ));
    }
    let depth = stationary_depth(link.eta, link.c, rng);
    let z: f64 = StandardNormal.sample(rng);
    let end = link.eta * t + spread * z;
    let e: f64 = Exp1.sample(rng);
    let max = 0.5 * (end + (end * end + 4.0 * t * e).sqrt());
    let lambda = (max - depth).max(0.0);
    Ok(LossSample::from_phi(lambda / t, window.t, link.tau))
}

/// `n` independent windows, window `i` drawn from stream `i` of `seed`.
pub fn sample_ensemble(
    link: &LinkParams,
    window: &WindowSpec,
    n: usize,
    backend: Backend,
    seed: u64,
) -> Result<Vec<LossSample>> {
    if n == 0 {
        return Err(Error::param("n", "ensemble needs at least one window"));
    }
    let key = StreamKey::new(seed);
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng: RandomStream = key.stream(i);
            backend.run(link, window, &mut rng)
        })
        .collect()
}

/// Long-run occupancy histogram of the diffusion backend, for stationarity
/// checks: returns per-unit-bin time fractions over [0, c].
pub fn diffusion_occupancy<R: Rng + ?Sized>(
    link: &LinkParams,
    duration: f64,
    dt: f64,
    bins: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    link.validate()?;
    if bins == 0 || !(dt > 0.0 && dt <= link.tau / 10.0) {
        return Err(Error::param("dt", "step must be positive and at most tau_i/10"));
    }
    let h = dt / link.tau;
    let steps = (duration / dt).ceil() as u64;
    let mut x = link.c - stationary_depth(link.eta, link.c, rng);
    let mut hist = vec![0.0; bins];
    for _ in 0..steps {
        let b = ((x / link.c * bins as f64) as usize).min(bins - 1);
        hist[b] += 1.0;
        let xi: f64 = StandardNormal.sample(rng);
        x = fold(x + link.eta * h + (2.0 * h).sqrt() * xi, link.c);
        debug_assert!((0.0..=link.c).contains(&x));
    }
    for v in &mut hist {
        *v /= steps as f64;
    }
    Ok(hist)
}
