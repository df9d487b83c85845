//! Photon statistics: closed-form g²(0) relations, the operator-algebra
//! oracle, stream estimators and TRPL decay fitting.

mod analytic;
mod estimators;
mod fit;
mod intensity;
mod oracle;

use serde::{Deserialize, Serialize};

pub use analytic::{
    g2_analytic_modes, g2_dominant_channel, g2_dominant_value, g2_full, g2_full_value,
    g2_modes_value, population_variance,
};
pub use estimators::{
    estimate_g2_area_ratio, estimate_g2_area_ratio_with, estimate_g2_instantaneous,
    InstantaneousOptions, DEFAULT_PEAK_WINDOW_FRACTION, DEFAULT_WINDOW_TAU_FRACTION,
    MIN_EXPECTED_PAIRS,
};
pub use fit::{fit_decay, synthetic_decay, DecayFit, DecayModel, MIN_NONZERO_BINS};
pub use intensity::{fit_power_law, peak_intensity, PeakIntensity, PowerLawFit};
pub use oracle::{g2_oracle_fully_excited, g2_oracle_value, ORACLE_MAX_EMITTERS};

/// How a g²(0) value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G2Method {
    AnalyticModes,
    AnalyticFull,
    DominantChannel,
    AreaRatio,
    Instantaneous,
    Oracle,
}

/// A g²(0) value with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub value: f64,
    pub std_error: f64,
    pub method: G2Method,
    /// Set when a negative analytic value was clamped to zero.
    #[serde(default)]
    pub clamped: bool,
}

impl G2Estimate {
    pub(crate) fn exact(value: f64, method: G2Method) -> Self {
        Self {
            value,
            std_error: 0.0,
            method,
            clamped: false,
        }
    }
}
