use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::DetectorConfig;
use crate::dynamics::ExcitationModel;
use crate::ensemble::{
    coupling_free_space, coupling_uniform, CouplingMatrix, DipoleRule, EmitterEnsemble,
    EnsembleSpec, Gamma0Rule, DEFAULT_MIN_DISTANCE_NM, DEFAULT_RADIUS_NM, DEFAULT_WAVELENGTH_NM,
};
use crate::error::invalid;
use crate::photstat::DecayModel;
use crate::resolver::ResolverOptions;
use crate::Result;

/// Emitter counts to simulate: one value, a list, or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmitterCounts {
    One(usize),
    List(Vec<usize>),
    Range { min: usize, max: usize },
}

impl EmitterCounts {
    pub fn values(&self) -> Vec<usize> {
        match self {
            EmitterCounts::One(n) => vec![*n],
            EmitterCounts::List(v) => v.clone(),
            EmitterCounts::Range { min, max } => (*min..=*max).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n: EmitterCounts,
    #[serde(default = "default_radius")]
    pub radius_nm: f64,
    #[serde(default = "default_min_distance")]
    pub min_distance_nm: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default)]
    pub gamma0: Gamma0Rule,
    #[serde(default)]
    pub dipoles: DipoleRule,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_NM
}
fn default_min_distance() -> f64 {
    DEFAULT_MIN_DISTANCE_NM
}
fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

/// How the coupling matrix of each ensemble is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    /// Green's-function couplings of the sampled geometry.
    FreeSpace {
        #[serde(default = "yes")]
        keep_exchange: bool,
    },
    /// Γ_ij = κ·Γ₀ between all pairs, no exchange.
    Uniform { kappa: f64 },
    /// Uniform κ chosen per N so that the bright rate (1 + (N−1)κ)Γ₀ equals
    /// 1/(b + a/N), clamped to κ ∈ [0, 1].
    Scaling { a_ns: f64, b_ns: f64 },
}

fn yes() -> bool {
    true
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig::FreeSpace {
            keep_exchange: true,
        }
    }
}

/// κ giving a bright-mode rate of r·Γ₀ for N emitters.
pub fn kappa_for_rate_ratio(n: usize, ratio: f64) -> f64 {
    if n <= 1 {
        0.0
    } else {
        ((ratio - 1.0) / (n as f64 - 1.0)).clamp(0.0, 1.0)
    }
}

impl CouplingConfig {
    pub fn build(&self, e: &EmitterEnsemble<f64>) -> Result<CouplingMatrix<f64>> {
        match self {
            CouplingConfig::FreeSpace { keep_exchange } => {
                let c = coupling_free_space(e)?;
                Ok(if *keep_exchange {
                    c
                } else {
                    c.without_exchange()
                })
            }
            CouplingConfig::Uniform { kappa } => uniform_for(e, *kappa),
            CouplingConfig::Scaling { a_ns, b_ns } => {
                let tau1 = b_ns + a_ns / e.n() as f64;
                if !(tau1 > 0.0) {
                    return Err(invalid("scaling coupling needs b + a/N > 0"));
                }
                uniform_for(e, kappa_for_rate_ratio(e.n(), e.tau0_mean() / tau1))
            }
        }
    }
}

fn uniform_for(e: &EmitterEnsemble<f64>, kappa: f64) -> Result<CouplingMatrix<f64>> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(invalid("kappa must lie in [0, 1]"));
    }
    let g0 = e.gamma0();
    if g0.iter().all(|g| *g == g0[0]) {
        return coupling_uniform(e.n(), g0[0], kappa);
    }
    // heterogeneous rates: Γ_ij = κ√(Γ₀ⁱΓ₀ʲ)
    let n = e.n();
    let gamma = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            g0[i]
        } else {
            kappa * (g0[i] * g0[j]).sqrt()
        }
    });
    CouplingMatrix::new(nalgebra::DMatrix::zeros(n, n), gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    #[default]
    Instantaneous,
    AreaRatio,
}

/// Which decay component is taken as the collective lifetime τ₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LifetimeComponent {
    /// γ₁, the slower bi-exponential rate.
    #[default]
    Slow,
    /// The component carrying most of the fitted photons.
    Dominant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub decay_bin_width_ps: u64,
    pub coincidence_bin_width_ps: u64,
    pub side_periods: u32,
    pub estimator: EstimatorChoice,
    /// Early window of the instantaneous estimator; default 5% of τ₁.
    pub window_ps: Option<u64>,
    pub decay_model: DecayModel,
    pub lifetime_component: LifetimeComponent,
    /// Reference single-emitter lifetime; defaults to the ensemble mean.
    pub tau0_ns: Option<f64>,
    /// Break ambiguous inversions with peak intensity relative to the N = 1 particle.
    pub use_brightness: bool,
    pub brightness_exponent: Option<f64>,
    pub resolver: ResolverOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            decay_bin_width_ps: 100,
            coincidence_bin_width_ps: 1000,
            side_periods: 3,
            estimator: EstimatorChoice::default(),
            window_ps: None,
            decay_model: DecayModel::Biexp,
            lifetime_component: LifetimeComponent::default(),
            tau0_ns: None,
            use_brightness: false,
            brightness_exponent: None,
            resolver: ResolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StreamFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for intermediate files and the report.
    pub dir: Option<String>,
    /// Also write the detected photon streams (large).
    pub write_streams: bool,
    pub stream_format: StreamFormat,
}

/// A full experiment: ensembles, coupling, excitation, detection and analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    pub excitation: ExcitationModel,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.ensemble.n.values();
        if ns.is_empty() || ns.contains(&0) {
            return Err(invalid("ensemble.n must list emitter counts ≥ 1"));
        }
        if let CouplingConfig::Uniform { kappa } = self.coupling {
            if !(0.0..=1.0).contains(&kappa) {
                return Err(invalid("coupling.kappa must lie in [0, 1]"));
            }
        }
        self.excitation.validate()?;
        self.detector.validate()?;
        if self.analysis.decay_bin_width_ps == 0 || self.analysis.coincidence_bin_width_ps == 0 {
            return Err(invalid("bin widths must be at least 1 ps"));
        }
        Ok(())
    }

    /// Ensemble recipe for `n` emitters with the given geometry seed.
    pub fn ensemble_spec(&self, n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n,
            radius_nm: self.ensemble.radius_nm,
            min_distance_nm: self.ensemble.min_distance_nm,
            wavelength_nm: self.ensemble.wavelength_nm,
            gamma0: self.ensemble.gamma0.clone(),
            dipoles: self.ensemble.dipoles.clone(),
            seed,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex. Output settings are
    /// excluded.
    pub fn hash(&self) -> String {
        let physics = Self {
            output: OutputConfig::default(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&physics).expect("config serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "ensemble": {"n": [1, 2, 3]},
        "coupling": {"mode": "uniform", "kappa": 0.3},
        "excitation": {"period_ns": 500.0, "p_excite": 1.0, "n_pulses": 1000}
    }"#;

    #[test]
    fn parses_and_hashes() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.ensemble.n.values(), vec![1, 2, 3]);
        assert_eq!(c.analysis.decay_bin_width_ps, 100);
        assert_eq!(
            c.hash(),
            ExperimentConfig::from_json(MINIMAL).unwrap().hash()
        );
        assert_eq!(c.hash().len(), 64);
        let mut other = c.clone();
        other.seed = 1;
        assert_ne!(c.hash(), other.hash());
        let mut moved = c.clone();
        moved.output.dir = Some("elsewhere".into());
        assert_eq!(c.hash(), moved.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"period_ns\"", "\"period\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let extra = MINIMAL.replace("\"ensemble\"", "\"colour\": 1, \"ensemble\"");
        assert!(ExperimentConfig::from_json(&extra).is_err());
        let bad_kappa = MINIMAL.replace("0.3", "1.3");
        assert!(ExperimentConfig::from_json(&bad_kappa).is_err());
    }

    #[test]
    fn count_forms() {
        let r: EmitterCounts = serde_json::from_str(r#"{"min": 2, "max": 4}"#).unwrap();
        assert_eq!(r.values(), vec![2, 3, 4]);
        let one: EmitterCounts = serde_json::from_str("5").unwrap();
        assert_eq!(one.values(), vec![5]);
    }

    #[test]
    fn scaling_coupling_matches_bright_rate() {
        let e: EmitterEnsemble<f64> =
            crate::ensemble::build_ensemble(&EnsembleSpec::new(5, 1)).unwrap();
        let c = CouplingConfig::Scaling {
            a_ns: 31.69,
            b_ns: 16.86,
        }
        .build(&e)
        .unwrap();
        let m = crate::ensemble::collective_modes(&c).unwrap();
        let want = 1.0 / (16.86 + 31.69 / 5.0);
        assert!((m.rates()[0] - want).abs() < 1e-12);
        assert_eq!(kappa_for_rate_ratio(1, 3.0), 0.0);
        assert_eq!(kappa_for_rate_ratio(3, 10.0), 1.0);
    }
}
