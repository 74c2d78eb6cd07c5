//! Two-party direction transfer over the quantum channel.
//!
//! The sender prepares `3m` qubits whose Bloch vector points along its
//! direction. The receiver measures `m` of them in each Pauli basis, turns the
//! `+1` frequencies into Bloch components `2p − 1` and normalizes. Outcome
//! counts are drawn from the exact binomial law, so small `m` behaves like the
//! physical experiment.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, random_frame, random_unit_vector, LocalFrame, UnitVector};
use crate::rng::{self, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("qubits per axis must be at least 1")]
    NoQubits,
    #[error("estimated Bloch vector has zero length")]
    ZeroLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub delta: f64,
    pub qubits_per_axis: u64,
    /// Deliver the exact direction instead of sampling (the δ → 0 limit).
    pub ideal_channel: bool,
}

impl EstimationConfig {
    pub fn new(delta: f64, qubits_per_axis: u64, ideal_channel: bool) -> Result<Self, EstimationError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(EstimationError::InvalidDelta(delta));
        }
        if qubits_per_axis == 0 {
            return Err(EstimationError::NoQubits);
        }
        Ok(EstimationConfig { delta, qubits_per_axis, ideal_channel })
    }
}

/// What physically travels over the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumPayload {
    /// Simulator ground truth; never shown to protocol code.
    pub true_direction_global: UnitVector,
    pub qubits_per_axis: u64,
    /// Set when a faulty sender chose the state.
    pub corrupted: bool,
}

/// Receiver-side result of one transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reception {
    /// Estimate in the receiver's local frame.
    pub direction: UnitVector,
    /// `+1` counts per axis of the accepted draw; `None` on the ideal channel.
    pub counts: Option<[u64; 3]>,
    /// Both draws had zero length and the receiver fell back to its +z axis.
    pub channel_failure: bool,
}

pub fn ted_send(u_local: &UnitVector, sender_frame: &LocalFrame, cfg: &EstimationConfig) -> QuantumPayload {
    QuantumPayload {
        true_direction_global: sender_frame.to_global(u_local),
        qubits_per_axis: cfg.qubits_per_axis,
        corrupted: false,
    }
}

pub fn ted_receive<R: Rng + ?Sized>(
    payload: &QuantumPayload,
    receiver_frame: &LocalFrame,
    rng: &mut R,
    cfg: &EstimationConfig,
) -> Reception {
    let c = receiver_frame.to_local(&payload.true_direction_global);
    if cfg.ideal_channel {
        return Reception { direction: c, counts: None, channel_failure: false };
    }
    let m = payload.qubits_per_axis.max(1);
    for _ in 0..2 {
        let counts = sample_counts(&c, m, rng);
        if let Ok(direction) = estimate_from_counts(counts, m) {
            return Reception { direction, counts: Some(counts), channel_failure: false };
        }
    }
    Reception { direction: UnitVector::Z, counts: None, channel_failure: true }
}

/// Number of `+1` outcomes in `m` measurements along each axis.
pub fn sample_counts<R: Rng + ?Sized>(c: &UnitVector, m: u64, rng: &mut R) -> [u64; 3] {
    c.to_array().map(|component| {
        let p = ((1.0 + component) / 2.0).clamp(0.0, 1.0);
        Binomial::new(m, p).expect("p is clamped to [0, 1]").sample(rng)
    })
}

pub fn estimate_from_counts(counts: [u64; 3], m: u64) -> Result<UnitVector, EstimationError> {
    let m = m as f64;
    let [x, y, z] = counts.map(|k| 2.0 * (k as f64 / m) - 1.0);
    let l = (x * x + y * y + z * z).sqrt();
    if l < 1e-12 {
        return Err(EstimationError::ZeroLength);
    }
    UnitVector::normalize(x / l, y / l, z / l).map_err(|_| EstimationError::ZeroLength)
}

/// Fraction of `trials` random transfers (random direction, random sender and
/// receiver frames) landing within `cfg.delta` in the global frame. Trial `i`
/// draws from stream `i` of `master_seed`.
pub fn measure_success_rate(cfg: &EstimationConfig, trials: u64, master_seed: u64) -> f64 {
    assert!(trials >= 1, "at least one trial is required");
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = rng::stream(master_seed, trial, Purpose::Estimation);
            let sender = random_frame(&mut rng);
            let receiver = random_frame(&mut rng);
            let u = random_unit_vector(&mut rng);
            let payload = ted_send(&u, &sender, cfg);
            let got = ted_receive(&payload, &receiver, &mut rng, cfg);
            distance(&payload.true_direction_global, &receiver.to_global(&got.direction)) <= cfg.delta
        })
        .count();
    hits as f64 / trials as f64
}

/// Exact probability that one transfer of `c` (receiver-local) with `m`
/// qubits per axis lands farther than `delta` from `c`, summed over all
/// outcome counts. A zero-length estimate counts as a failure.
pub fn exact_failure_probability(c: &UnitVector, m: u64, delta: f64) -> f64 {
    let pmf: Vec<Vec<f64>> = c.to_array().iter().map(|&ca| binomial_pmf(m, (1.0 + ca) / 2.0)).collect();
    let (px, py, pz) = (&pmf[0], &pmf[1], &pmf[2]);
    let n = m as usize + 1;

    // tail sums accumulated from each end keep small failure masses accurate
    let mut left = vec![0.0; n];
    let mut acc = 0.0;
    for k in 0..n {
        acc += pz[k];
        left[k] = acc;
    }
    let mut right = vec![0.0; n];
    acc = 0.0;
    for k in (0..n).rev() {
        acc += pz[k];
        right[k] = acc;
    }

    let [cx, cy, cz] = c.to_array();
    let cos_bound = 1.0 - delta * delta / 2.0;
    let coord = |k: usize| 2.0 * k as f64 / m as f64 - 1.0;
    let mut failure = 0.0;
    for (kx, &wx) in px.iter().enumerate() {
        if wx == 0.0 {
            continue;
        }
        let x = coord(kx);
        for (ky, &wy) in py.iter().enumerate() {
            let w = wx * wy;
            if w == 0.0 {
                continue;
            }
            let y = coord(ky);
            // margin(z) = e·c − cos_bound·|e| is concave in z, so success is an interval
            let margin = |kz: usize| {
                let z = coord(kz);
                let len = (x * x + y * y + z * z).sqrt();
                if len < 1e-12 {
                    return -1.0;
                }
                x * cx + y * cy + z * cz - cos_bound * len
            };
            let (mut lo, mut hi) = (0usize, n - 1);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if margin(mid) < margin(mid + 1) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            let peak = lo;
            if margin(peak) < 0.0 {
                failure += w;
                continue;
            }
            let (mut a, mut b) = (0usize, peak);
            while a < b {
                let mid = (a + b) / 2;
                if margin(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            let first = a;
            let (mut a, mut b) = (peak, n - 1);
            while a < b {
                let mid = (a + b).div_ceil(2);
                if margin(mid) >= 0.0 {
                    a = mid;
                } else {
                    b = mid - 1;
                }
            }
            let last = a;
            let below = if first > 0 { left[first - 1] } else { 0.0 };
            let above = if last + 1 < n { right[last + 1] } else { 0.0 };
            failure += w * (below + above);
        }
    }
    failure
}

fn binomial_pmf(m: u64, p: f64) -> Vec<f64> {
    let n = m as usize;
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 || p == 1.0 {
        let mut out = vec![0.0; n + 1];
        out[if p == 0.0 { 0 } else { n }] = 1.0;
        return out;
    }
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (0..=n)
        .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k] + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}
