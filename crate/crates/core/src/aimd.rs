//! Idealized additive-increase/multiplicative-decrease sender driven by
//! per-cycle path losses.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::analytics::{classify, RegimeClass};
use crate::error::{Error, Result};
use crate::path::{multi_loss_prob, MultiLossReport};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdConfig {
    /// Cycle duration in seconds.
    pub t0: f64,
    pub w_init: u64,
    pub w_max: u64,
    pub additive_step: u64,
    pub md_factor: f64,
    pub n_cycles: usize,
}

impl Default for AimdConfig {
    fn default() -> Self {
        AimdConfig {
            t0: 0.25,
            w_init: 1,
            w_max: 100,
            additive_step: 1,
            md_factor: 0.5,
            n_cycles: 1000,
        }
    }
}

impl AimdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::param("t0", format!("must be positive, got {}", self.t0)));
        }
        if self.w_max == 0 || self.w_init == 0 || self.w_init > self.w_max {
            return Err(Error::param(
                "w_init",
                format!("need 1 ≤ w_init ≤ w_max, got {} and {}", self.w_init, self.w_max),
            ));
        }
        if !(self.md_factor > 0.0 && self.md_factor < 1.0) {
            return Err(Error::param(
                "md_factor",
                format!("must lie in (0, 1), got {}", self.md_factor),
            ));
        }
        Ok(())
    }

    fn decrease(&self, w: u64) -> u64 {
        ((w as f64 * self.md_factor).floor() as u64).max(1)
    }

    fn increase(&self, w: u64) -> u64 {
        (w + self.additive_step).min(self.w_max)
    }
}

/// Per-cycle loss fractions fed to the sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossSource {
    Constant {
        phi: f64,
    },
    /// Φ for cycle k is `values[k]`, and zero once the script runs out.
    Scripted {
        values: Vec<f64>,
    },
    /// Φ for cycle k is `values[k mod len]`, e.g. path-ensemble samples.
    Cycled {
        values: Vec<f64>,
    },
}

impl LossSource {
    pub fn phi(&self, cycle: usize) -> f64 {
        let phi = match self {
            LossSource::Constant { phi } => *phi,
            LossSource::Scripted { values } => values.get(cycle).copied().unwrap_or(0.0),
            LossSource::Cycled { values } => {
                if values.is_empty() {
                    0.0
                } else {
                    values[cycle % values.len()]
                }
            }
        };
        phi.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Window used for this cycle.
    pub w: u64,
    pub lost: u64,
}

impl CycleRecord {
    pub fn rate(&self, t0: f64) -> f64 {
        self.w as f64 / t0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimdSummary {
    pub loss_cycles: usize,
    pub min_w: u64,
    /// Seconds from the end of each loss episode until the window is back
    /// at its pre-episode size; episodes still recovering at the end of
    /// the run are omitted.
    pub recovery_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimdTrace {
    pub t0: f64,
    pub records: Vec<CycleRecord>,
    pub summary: AimdSummary,
}

impl AimdTrace {
    pub fn windows(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.w).collect()
    }
}

/// Runs the sender for `n_cycles`: each of the W packets of a cycle is lost
/// independently with that cycle's Φ; any loss halves the window (floor,
/// at least 1), a clean cycle adds one packet up to `w_max`.
pub fn run_aimd(config: &AimdConfig, source: &LossSource, seed: u64) -> Result<AimdTrace> {
    config.validate()?;
    let mut rng = StreamKey::new(seed).stream(0);
    let mut w = config.w_init;
    let mut records = Vec::with_capacity(config.n_cycles);
    for cycle in 0..config.n_cycles {
        let phi = source.phi(cycle);
        let lost = if phi <= 0.0 {
            0
        } else if phi >= 1.0 {
            w
        } else {
            Binomial::new(w, phi)
                .map_err(|e| Error::Numerical(format!("packet losses: {e}")))?
                .sample(&mut rng)
        };
        records.push(CycleRecord { cycle, w, lost });
        w = if lost > 0 {
            config.decrease(w)
        } else {
            config.increase(w)
        };
    }
    let summary = summarize(&records, config.t0);
    Ok(AimdTrace {
        t0: config.t0,
        records,
        summary,
    })
}

fn summarize(records: &[CycleRecord], t0: f64) -> AimdSummary {
    let loss_cycles = records.iter().filter(|r| r.lost > 0).count();
    let min_w = records.iter().map(|r| r.w).min().unwrap_or(0);
    let mut recovery_times = Vec::new();
    let mut k = 0;
    while k < records.len() {
        if records[k].lost == 0 {
            k += 1;
            continue;
        }
        let before = records[k].w;
        let mut end = k;
        while end < records.len() && records[end].lost > 0 {
            end += 1;
        }
        // `end` is the first clean cycle after the episode.
        if let Some(back) = (end..records.len()).find(|&j| records[j].w >= before) {
            if records[end..back].iter().all(|r| r.lost == 0) {
                recovery_times.push((back - end) as f64 * t0);
            }
        }
        k = end;
    }
    AimdSummary {
        loss_cycles,
        min_w,
        recovery_times,
    }
}

/// Operating band of the sender on the regime diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    /// The band γ⁻¹ ∈ (a·w_max, c).
    pub inv_gamma_lo: f64,
    pub inv_gamma_hi: f64,
    /// φ₀² at the cycle time, τ/t0.
    pub phi0_sq: f64,
    /// c·φ₀²(t0); equals τr for a buffer sized c = t0·r.
    pub c_phi0_sq: f64,
    pub intersects_mesoscopic: bool,
}

/// Band of criticality widths in which a sender with window `w_max` on an
/// a-link path sees intermittent losses: γ⁻¹ between a·w_max and c.
pub fn protocol_band(c: f64, a: f64, w_max: f64, t0: f64, tau: f64) -> Result<BandReport> {
    for (name, v) in [("c", c), ("a", a), ("w_max", w_max), ("t0", t0), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let lo = a * w_max;
    if lo >= c {
        return Err(Error::param(
            "c",
            format!("empty protocol band: a·w_max = {lo} is not below the buffer c = {c}"),
        ));
    }
    let phi0_sq = tau / t0;
    let steps = 64;
    let intersects_mesoscopic = (1..steps).any(|k| {
        let inv_gamma = lo * (c / lo).powf(k as f64 / steps as f64);
        t0 >= tau && classify(t0, tau, 1.0 / inv_gamma, a) == RegimeClass::Mesoscopic
    });
    Ok(BandReport {
        inv_gamma_lo: lo,
        inv_gamma_hi: c,
        phi0_sq,
        c_phi0_sq: c * phi0_sq,
        intersects_mesoscopic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverreactionReport {
    pub regime: RegimeClass,
    pub loss: MultiLossReport,
    /// Asymptotic top of the mesoscopic ratio, c^(1−δ)/a.
    pub predicted_ratio: f64,
}

/// Multi-loss ratio ⟨Φⁿ⟩/⟨Φ⟩ⁿ of path-loss samples, annotated with the
/// regime they came from and the asymptotic mesoscopic prediction.
pub fn overreaction_index(
    samples: &[f64],
    n: u32,
    regime: RegimeClass,
    c: f64,
    a: f64,
    delta: f64,
    key: StreamKey,
) -> Result<OverreactionReport> {
    if !(n == 2 || n == 3) {
        return Err(Error::param(
            "n",
            format!("overreaction index is defined for n ∈ {{2, 3}}, got {n}"),
        ));
    }
    let loss = multi_loss_prob(samples, n, key)?;
    Ok(OverreactionReport {
        regime,
        loss,
        predicted_ratio: c.powf(1.0 - delta) / a,
    })
}
