//! Open-system dynamics of N two-level emitters: master-equation oracle,
//! quantum-jump trajectories and pulsed photon-stream generation.
//!
//! Basis convention: computational product states indexed by bitmask, bit i
//! set when emitter i is excited. The frame rotates at ω₀, so only the
//! exchange J and the collective dissipator act.

mod basis;
mod lindblad;
mod propagator;
mod state;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::ensemble::CollectiveModes;
use crate::error::invalid;
use crate::Result;

pub use basis::ExcitationBasis;
pub use lindblad::{emission_rate, lindblad_propagate, LINDBLAD_MAX_EMITTERS};
pub use state::QuantumState;
pub use trajectory::{
    quantum_jump_trajectory, simulate_pulsed_experiment, PulseRecord, TrajectorySampler,
    JUMP_TIME_TOLERANCE_NS, TRAJECTORY_MAX_EMITTERS,
};

/// One emitted photon: time since its excitation pulse and the collective
/// channel that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    pub time_ns: f64,
    pub channel: usize,
    pub pulse_index: u64,
}

/// Instantaneous incoherent pulsed excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationModel {
    pub period_ns: f64,
    /// Probability that a given emitter is excited by a given pulse.
    pub p_excite: f64,
    pub n_pulses: u64,
}

impl ExcitationModel {
    pub fn new(period_ns: f64, p_excite: f64, n_pulses: u64) -> Result<Self> {
        let x = Self {
            period_ns,
            p_excite,
            n_pulses,
        };
        x.validate()?;
        Ok(x)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_ns > 0.0) || !self.period_ns.is_finite() {
            return Err(invalid("period_ns must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_excite) {
            return Err(invalid("p_excite must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn period_ps(&self) -> u64 {
        (self.period_ns * 1000.0).round() as u64
    }

    /// Advisory messages, e.g. when the period is shorter than five lifetimes
    /// of the slowest radiating channel.
    pub fn warnings(&self, m: &CollectiveModes<f64>) -> Vec<String> {
        let slowest = m
            .rates()
            .iter()
            .copied()
            .filter(|r| *r > 1e-12)
            .fold(f64::INFINITY, f64::min);
        let mut out = Vec::new();
        if slowest.is_finite() && self.period_ns < 5.0 / slowest {
            out.push(format!(
                "period {} ns is shorter than 5/Γ_min = {:.1} ns; late photons will be truncated",
                self.period_ns,
                5.0 / slowest
            ));
        }
        out
    }
}
