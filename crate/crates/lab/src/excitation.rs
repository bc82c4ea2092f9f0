//! Input signals for data collection.

use deepc_core::datasets::is_persistently_exciting;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcitationKind {
    /// Random per-channel levels reached by linear ramps, then held.
    RampAndHold,
    /// Independent uniform samples every step.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    pub kind: ExcitationKind,
    /// Level range shared by all channels, actuation units.
    pub amplitude: (f64, f64),
    pub ramp_steps: usize,
    pub hold_steps: usize,
    pub total_steps: usize,
    /// Margin added to `T_ini + N` for the persistency-of-excitation order.
    pub n_est: usize,
    /// Extra attempts with fresh random streams when PE fails.
    pub retries: usize,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            kind: ExcitationKind::RampAndHold,
            amplitude: (0.0, 90.0),
            ramp_steps: 2,
            hold_steps: 3,
            total_steps: 1500,
            n_est: 10,
            retries: 10,
        }
    }
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 90.0) {
            return Err(LabError::Invalid(format!(
                "excitation amplitude [{lo}, {hi}] must lie within [0, 90]"
            )));
        }
        if self.kind == ExcitationKind::RampAndHold && self.ramp_steps == 0 {
            return Err(LabError::Invalid("ramp_steps must be at least 1".into()));
        }
        if self.total_steps == 0 {
            return Err(LabError::Invalid("samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Persistency-of-excitation order required for a `T_ini`/`N` pair.
    pub fn pe_order(&self, t_ini: usize, horizon: usize) -> usize {
        t_ini + horizon + self.n_est
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    /// `channels × T`.
    pub inputs: DMatrix<f64>,
    /// Zero-based attempt that passed the PE check.
    pub attempt: usize,
    pub pe_order: usize,
    pub pe_rank: usize,
}

/// Draws one candidate signal without checking excitation.
pub fn sample_signal(spec: &ExcitationSpec, channels: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (lo, hi) = spec.amplitude;
    let level = |rng: &mut ChaCha8Rng| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let t = spec.total_steps;
    let mut out = DMatrix::zeros(channels, t);
    match spec.kind {
        ExcitationKind::UniformRandom => {
            for k in 0..t {
                for c in 0..channels {
                    out[(c, k)] = level(rng);
                }
            }
        }
        ExcitationKind::RampAndHold => {
            let mut current = vec![lo; channels];
            let mut k = 0;
            while k < t {
                let targets: Vec<f64> = (0..channels).map(|_| level(rng)).collect();
                for j in 0..spec.ramp_steps {
                    if k == t {
                        break;
                    }
                    let frac = (j + 1) as f64 / spec.ramp_steps as f64;
                    for c in 0..channels {
                        out[(c, k)] = current[c] + frac * (targets[c] - current[c]);
                    }
                    k += 1;
                }
                for _ in 0..spec.hold_steps {
                    if k == t {
                        break;
                    }
                    for c in 0..channels {
                        out[(c, k)] = targets[c];
                    }
                    k += 1;
                }
                current = targets;
            }
        }
    }
    out
}

/// Generates a signal that is persistently exciting of order `pe_order`,
/// retrying on independent random streams of `seed`.
pub fn generate_excitation(
    spec: &ExcitationSpec,
    channels: usize,
    pe_order: usize,
    seed: u64,
) -> Result<Excitation> {
    spec.validate()?;
    let needed = (channels + 1) * pe_order;
    if spec.total_steps + 1 < needed {
        return Err(LabError::Invalid(format!(
            "{} samples cannot be persistently exciting of order {pe_order} with {channels} inputs; \
             use at least {} samples",
            spec.total_steps,
            needed - 1
        )));
    }
    let mut best_rank = 0;
    for attempt in 0..=spec.retries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let inputs = sample_signal(spec, channels, &mut rng);
        let (ok, rank) = is_persistently_exciting(&inputs, pe_order)?;
        if ok {
            return Ok(Excitation {
                inputs,
                attempt,
                pe_order,
                pe_rank: rank,
            });
        }
        best_rank = best_rank.max(rank);
    }
    Err(LabError::Invalid(format!(
        "excitation is not persistently exciting of order {pe_order} after {} attempts \
         (best rank {best_rank} of {}); use a longer T or a wider amplitude range",
        spec.retries + 1,
        channels * pe_order
    )))
}
