use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::RngExt;
use rayon::prelude::*;

use super::propagator::{norm_sq, SectorPropagator};
use super::{EmissionEvent, ExcitationBasis, ExcitationModel};
use crate::detection::{Detector, PhotonRecord, PhotonStream, StreamHeader, StreamStage};
use crate::ensemble::{collective_modes, CollectiveModes, CouplingMatrix, EmitterEnsemble};
use crate::rng::{unit_rng, DOMAIN_TRAJECTORY};
use crate::{Error, Result};

pub const TRAJECTORY_MAX_EMITTERS: usize = 16;
/// Absolute tolerance of the jump-time bisection, ns.
pub const JUMP_TIME_TOLERANCE_NS: f64 = 1e-4;
/// Residual excitation norm below which a trajectory is considered finished.
const RESIDUAL_NORM: f64 = 1e-6;
const PULSES_PER_BATCH: u64 = 1 << 16;

/// Events of one excitation pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    pub pulse_index: u64,
    /// Bitmask of emitters excited by the pulse.
    pub excited: u32,
    pub events: Vec<EmissionEvent>,
}

impl PulseRecord {
    pub fn n_excited(&self) -> u32 {
        self.excited.count_ones()
    }
}

/// Monte Carlo wave-function sampler with per-sector propagators built once.
#[derive(Debug, Clone)]
pub struct TrajectorySampler {
    n: usize,
    basis: ExcitationBasis,
    sectors: Vec<SectorPropagator>,
    rates: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl TrajectorySampler {
    pub fn new(c: &CouplingMatrix<f64>, m: &CollectiveModes<f64>) -> Result<Self> {
        let n = c.n();
        if n > TRAJECTORY_MAX_EMITTERS {
            return Err(Error::ScaleLimit {
                what: "quantum-jump trajectories",
                max: TRAJECTORY_MAX_EMITTERS,
                n,
            });
        }
        if m.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.n(),
            });
        }
        let basis = ExcitationBasis::new(n);
        let gamma = m.reconstruct();
        let exchange = c.has_exchange();
        let sectors = (1..=n)
            .map(|k| SectorPropagator::build(&basis, k, &gamma, c.j(), exchange))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            basis,
            sectors,
            rates: m.rates().to_vec(),
            vectors: m.vectors().clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// σ_i applied to a state of sector `k` for every emitter i.
    fn lowered(&self, k: usize, psi: &[Complex64]) -> Vec<Vec<Complex64>> {
        let below = self.basis.sector(k - 1).len();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); below]; self.n];
        for (amp, &mask) in psi.iter().zip(self.basis.sector(k)) {
            if *amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (i, slot) in out.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    slot[self.basis.position(mask ^ (1 << i))] = *amp;
                }
            }
        }
        out
    }

    /// Samples one pulse; depends only on `(seed, pulse_index)`.
    pub fn run_pulse(&self, x: &ExcitationModel, seed: u64, pulse_index: u64) -> PulseRecord {
        let mut rng = unit_rng(seed, DOMAIN_TRAJECTORY, pulse_index);
        let mut excited = 0u32;
        for i in 0..self.n {
            if rng.random::<f64>() < x.p_excite {
                excited |= 1 << i;
            }
        }
        let mut k = excited.count_ones() as usize;
        let mut events = Vec::with_capacity(k);
        if k == 0 {
            return PulseRecord {
                pulse_index,
                excited,
                events,
            };
        }
        let mut psi = vec![Complex64::new(0.0, 0.0); self.basis.sector(k).len()];
        psi[self.basis.position(excited)] = Complex64::new(1.0, 0.0);
        let mut t = 0.0;
        while k > 0 {
            let threshold = 1.0 - rng.random::<f64>();
            let horizon = x.period_ns - t;
            let Some((dt, phi)) =
                self.sectors[k - 1].evolve_until(&psi, threshold, horizon, JUMP_TIME_TOLERANCE_NS)
            else {
                break;
            };
            t += dt;
            let lowered = self.lowered(k, &phi);
            let mut candidates = Vec::with_capacity(self.n);
            let mut total = 0.0;
            for (nu, &rate) in self.rates.iter().enumerate() {
                if rate <= 0.0 {
                    continue;
                }
                let mut v = vec![Complex64::new(0.0, 0.0); lowered[0].len()];
                for (i, li) in lowered.iter().enumerate() {
                    let u = self.vectors[(nu, i)];
                    if u != 0.0 {
                        v.iter_mut().zip(li).for_each(|(a, b)| *a += b * u);
                    }
                }
                let w = rate * norm_sq(&v);
                if w > 0.0 {
                    total += w;
                    candidates.push((nu, w, v));
                }
            }
            if total <= RESIDUAL_NORM * RESIDUAL_NORM * norm_sq(&phi) || candidates.is_empty() {
                break;
            }
            let mut pick = rng.random::<f64>() * total;
            let chosen = candidates.iter().position(|(_, w, _)| {
                pick -= w;
                pick < 0.0
            });
            let (nu, _, v) = candidates.swap_remove(chosen.unwrap_or(candidates.len() - 1));
            let norm = norm_sq(&v).sqrt();
            psi = v.into_iter().map(|a| a / norm).collect();
            k -= 1;
            events.push(EmissionEvent {
                time_ns: t,
                channel: nu,
                pulse_index,
            });
        }
        PulseRecord {
            pulse_index,
            excited,
            events,
        }
    }

    /// Pulses `range` in parallel, returned in pulse order.
    pub fn run_range(
        &self,
        x: &ExcitationModel,
        seed: u64,
        range: std::ops::Range<u64>,
    ) -> Vec<PulseRecord> {
        range
            .into_par_iter()
            .map(|p| self.run_pulse(x, seed, p))
            .collect()
    }

    pub fn run(&self, x: &ExcitationModel, seed: u64) -> Vec<PulseRecord> {
        self.run_range(x, seed, 0..x.n_pulses)
    }
}

/// All emission events of `x.n_pulses` pulses, ordered by pulse then time.
pub fn quantum_jump_trajectory(
    c: &CouplingMatrix<f64>,
    m: &CollectiveModes<f64>,
    x: &ExcitationModel,
    seed: u64,
) -> Result<Vec<EmissionEvent>> {
    x.validate()?;
    let sampler = TrajectorySampler::new(c, m)?;
    Ok(sampler
        .run(x, seed)
        .into_iter()
        .flat_map(|p| p.events)
        .collect())
}

/// Pre-detector photon stream of a pulsed experiment.
pub fn simulate_pulsed_experiment(
    e: &EmitterEnsemble<f64>,
    c: &CouplingMatrix<f64>,
    x: &ExcitationModel,
    seed: u64,
) -> Result<PhotonStream> {
    x.validate()?;
    if e.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: e.n(),
            got: c.n(),
        });
    }
    let header = StreamHeader::new(x.period_ns, x.n_pulses, seed, StreamStage::PreDetector);
    let period_ps = header.period_ps();
    if period_ps == 0 || period_ps > u32::MAX as u64 {
        return Err(crate::error::invalid(
            "period must be between 1 ps and 4.29 ms",
        ));
    }
    let m = collective_modes(c)?;
    let sampler = TrajectorySampler::new(c, &m)?;
    let mut records = Vec::new();
    let mut start = 0;
    while start < x.n_pulses {
        let end = (start + PULSES_PER_BATCH).min(x.n_pulses);
        let batch: Vec<Vec<PhotonRecord>> = (start..end)
            .into_par_iter()
            .map(|p| {
                sampler
                    .run_pulse(x, seed, p)
                    .events
                    .iter()
                    .map(|ev| PhotonRecord {
                        pulse_index: p,
                        delay_ps: ((ev.time_ns * 1000.0).round() as u64).min(period_ps - 1) as u32,
                        detector: Detector::Pre,
                    })
                    .collect()
            })
            .collect();
        records.extend(batch.into_iter().flatten());
        start = end;
    }
    PhotonStream::new(header, records)
}
