use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EstimatorChoice, ExperimentConfig, LifetimeComponent, StreamFormat};
use super::formats::{
    write_histogram_csv, write_json, write_stream_binary, write_stream_csv, Versioned,
};
use crate::detection::{
    apply_detector_chain, build_coincidence_histogram, build_decay_histogram, DecayHistogram,
    PhotonStream, SCHEMA_VERSION,
};
use crate::dynamics::simulate_pulsed_experiment;
use crate::ensemble::{build_ensemble, collective_modes};
use crate::photstat::{
    estimate_g2_area_ratio, estimate_g2_instantaneous, fit_decay, fit_power_law, peak_intensity,
    DecayFit, DecayModel, G2Estimate, InstantaneousOptions, PeakIntensity, PowerLawFit,
    DEFAULT_WINDOW_TAU_FRACTION,
};
use crate::resolver::{
    fit_lifetime_scaling, resolve_with_constraints, LifetimeScalingFit, NEstimate,
};
use crate::rng::{derive_seed, DOMAIN_PARTICLE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// Which fitted component was taken as the collective lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifetimeSource {
    Mono,
    /// The slower bi-exponential component.
    Slow,
    /// The faster bi-exponential component.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeChoice {
    pub tau_ns: f64,
    pub std_error_ns: f64,
    pub source: LifetimeSource,
    /// Fraction of the fitted decay photons in the chosen component.
    pub weight: f64,
}

fn slow_area_fraction(fit: &DecayFit) -> Option<(f64, f64)> {
    let (a2, g2) = (fit.a2?, fit.gamma2?);
    let slow_area = fit.a1 / fit.gamma1;
    let fast_area = a2 / g2;
    let total = slow_area + fast_area;
    (total > 0.0).then(|| (slow_area / total, fast_area / total))
}

/// τ₁ = 1/γ₁, the slower component.
pub fn slow_lifetime(fit: &DecayFit) -> LifetimeChoice {
    LifetimeChoice {
        tau_ns: fit.tau1_ns(),
        std_error_ns: fit.tau1_std_error(),
        source: if fit.model == DecayModel::Mono || fit.degenerate {
            LifetimeSource::Mono
        } else {
            LifetimeSource::Slow
        },
        weight: slow_area_fraction(fit).map_or(1.0, |w| w.0),
    }
}

/// The component carrying most of the fitted photons (amplitude × lifetime).
pub fn dominant_lifetime(fit: &DecayFit) -> LifetimeChoice {
    let slow = slow_lifetime(fit);
    let (Some(g2), Some((slow_weight, fast_weight))) = (fit.gamma2, slow_area_fraction(fit)) else {
        return slow;
    };
    if slow_weight >= fast_weight {
        return slow;
    }
    LifetimeChoice {
        tau_ns: 1.0 / g2,
        std_error_ns: fit.gamma2_std_error().unwrap_or(f64::NAN) / (g2 * g2),
        source: LifetimeSource::Fast,
        weight: fast_weight,
    }
}

/// Analysis of one simulated nanoparticle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub index: usize,
    pub n_configured: usize,
    /// Seed of this particle's geometry, trajectories and detector chain.
    pub seed: u64,
    pub config_hash: String,
    /// Ground truth of the simulated ensemble.
    pub true_tau0_mean_ns: f64,
    pub true_mode_rates_per_ns: Vec<f64>,
    pub photons_emitted: u64,
    pub photons_detected: u64,
    pub decay_fit: Option<DecayFit>,
    pub lifetime: Option<LifetimeChoice>,
    /// Every g² estimate that could be formed.
    pub g2_estimates: Vec<G2Estimate>,
    /// The estimate passed to the resolver.
    pub g2_used: Option<G2Estimate>,
    pub peak_intensity: Option<PeakIntensity>,
    pub relative_brightness: Option<f64>,
    pub tau0_reference_ns: Option<f64>,
    pub n_estimate: Option<NEstimate>,
    pub correct: Option<bool>,
    pub warnings: Vec<String>,
    pub errors: Vec<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<ParticleRecord>,
    /// τ₁ = b + a/N over the resolved particles.
    pub lifetime_scaling: Option<LifetimeScalingFit>,
    /// Peak intensity against configured N.
    pub intensity_power_law: Option<PowerLawFit>,
    pub n_correct: usize,
    pub n_particles: usize,
    /// Not covered by [`RunReport::content_hash`].
    pub wall_clock_s: f64,
}

impl RunReport {
    /// SHA-256 of the report with the wall-clock field zeroed.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_s = 0.0;
        super::config::hex_digest(&serde_json::to_vec(&copy).expect("report serializes"))
    }
}

/// Builds particle `index` with `n` emitters and returns its detected stream
/// together with a record holding the ground truth.
pub fn simulate_particle(
    cfg: &ExperimentConfig,
    index: usize,
    n: usize,
) -> Result<(ParticleRecord, PhotonStream)> {
    let config_hash = cfg.hash();
    let seed = derive_seed(cfg.seed, DOMAIN_PARTICLE, index as u64);
    let ensemble = build_ensemble::<f64>(&cfg.ensemble_spec(n, seed))?;
    let coupling = cfg.coupling.build(&ensemble)?;
    let modes = collective_modes(&coupling)?;
    let warnings = cfg.excitation.warnings(&modes);
    let mut emitted = simulate_pulsed_experiment(&ensemble, &coupling, &cfg.excitation, seed)?;
    emitted.set_config_hash(config_hash.clone());
    let photons_emitted = emitted.len() as u64;
    let mut detected = apply_detector_chain(&emitted, &cfg.detector, seed)?;
    detected.set_config_hash(config_hash.clone());
    let record = ParticleRecord {
        index,
        n_configured: n,
        seed,
        config_hash,
        true_tau0_mean_ns: ensemble.tau0_mean(),
        true_mode_rates_per_ns: modes.rates().to_vec(),
        photons_emitted,
        photons_detected: detected.len() as u64,
        decay_fit: None,
        lifetime: None,
        g2_estimates: Vec::new(),
        g2_used: None,
        peak_intensity: None,
        relative_brightness: None,
        tau0_reference_ns: None,
        n_estimate: None,
        correct: None,
        warnings,
        errors: Vec::new(),
    };
    Ok((record, detected))
}

/// Histogram, lifetime fit and g² estimates for one detected stream. Errors
/// of individual stages are recorded and the remaining stages still run.
pub fn analyze_particle(
    cfg: &ExperimentConfig,
    s: &PhotonStream,
    record: &mut ParticleRecord,
) -> Result<DecayHistogram> {
    let a = &cfg.analysis;
    let hist = build_decay_histogram(s, a.decay_bin_width_ps)?;
    let fit = fit_decay(&hist, a.decay_model).or_else(|e| {
        if a.decay_model == DecayModel::Biexp {
            record.errors.push((&e).into());
            fit_decay(&hist, DecayModel::Mono)
        } else {
            Err(e)
        }
    });
    match fit {
        Ok(f) => {
            record.lifetime = Some(match a.lifetime_component {
                LifetimeComponent::Slow => slow_lifetime(&f),
                LifetimeComponent::Dominant => dominant_lifetime(&f),
            });
            record.decay_fit = Some(f);
        }
        Err(e) => record.errors.push((&e).into()),
    }
    match peak_intensity(&hist) {
        Ok(p) => record.peak_intensity = Some(p),
        Err(e) => record.errors.push((&e).into()),
    }

    let area = build_coincidence_histogram(s, a.coincidence_bin_width_ps, a.side_periods)
        .and_then(|h| estimate_g2_area_ratio(&h));
    let area = match area {
        Ok(g) => {
            record.g2_estimates.push(g.clone());
            Some(g)
        }
        Err(e) => {
            record.errors.push((&e).into());
            None
        }
    };
    let used = match a.estimator {
        EstimatorChoice::AreaRatio => area,
        EstimatorChoice::Instantaneous => {
            let window_ps = a.window_ps.or_else(|| {
                record.lifetime.map(|l| {
                    ((DEFAULT_WINDOW_TAU_FRACTION * l.tau_ns * 1000.0).round() as u64).max(1)
                })
            });
            let opts = InstantaneousOptions {
                window_ps,
                ..Default::default()
            };
            match estimate_g2_instantaneous(s, &hist, &opts) {
                Ok(g) => {
                    record.g2_estimates.push(g.clone());
                    Some(g)
                }
                Err(e) => {
                    if area.is_some() {
                        record.warnings.push(format!(
                            "instantaneous estimator unavailable ({e}); using area ratio"
                        ));
                    } else {
                        record.errors.push((&e).into());
                    }
                    area
                }
            }
        }
    };
    record.g2_used = used;
    Ok(hist)
}

fn write_particle_files(
    dir: &Path,
    cfg: &ExperimentConfig,
    record: &ParticleRecord,
    hist: &DecayHistogram,
    s: &PhotonStream,
) -> Result<()> {
    let stem = format!("particle_{:03}_n{}", record.index, record.n_configured);
    write_histogram_csv(hist, File::create(dir.join(format!("{stem}_decay.csv")))?)?;
    if let Some(f) = &record.decay_fit {
        write_json(&Versioned::new(f), dir.join(format!("{stem}_fit.json")))?;
    }
    if let Some(g) = &record.g2_used {
        write_json(&Versioned::new(g), dir.join(format!("{stem}_g2.json")))?;
    }
    if cfg.output.write_streams {
        match cfg.output.stream_format {
            StreamFormat::Csv => {
                write_stream_csv(s, File::create(dir.join(format!("{stem}_stream.csv")))?)?
            }
            StreamFormat::Binary => {
                write_stream_binary(s, File::create(dir.join(format!("{stem}_stream.qdt")))?)?
            }
        }
    }
    Ok(())
}

fn resolve_record(
    cfg: &ExperimentConfig,
    record: &mut ParticleRecord,
    tau0: Option<f64>,
    single_peak: Option<f64>,
) {
    let a = &cfg.analysis;
    let (Some(g2), Some(life)) = (&record.g2_used, record.lifetime) else {
        return;
    };
    let Some(tau0) = tau0 else {
        return;
    };
    record.tau0_reference_ns = Some(tau0);
    let brightness = match (a.use_brightness, single_peak, record.peak_intensity) {
        (true, Some(one), Some(p)) if one > 0.0 => Some(p.counts / one),
        _ => None,
    };
    record.relative_brightness = brightness;
    let g = g2.value.clamp(0.0, 2.0 - 1e-12);
    match resolve_with_constraints(g, life.tau_ns, tau0, brightness, a.brightness_exponent) {
        Ok(est) => {
            record.correct = Some(est.n_int as usize == record.n_configured);
            record.n_estimate = Some(est);
        }
        Err(e) => {
            record.correct = Some(false);
            record.errors.push((&e).into());
        }
    }
}

/// Simulate → detect → histogram → fit → estimate g² → resolve N for every
/// configured particle. With `out_dir`, intermediate files and `report.json`
/// are written there.
pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(cfg, dir.join("config.json"))?;
    }
    let mut records = Vec::new();
    for (index, n) in cfg.ensemble.n.values().into_iter().enumerate() {
        let (mut record, detected) = simulate_particle(cfg, index, n)?;
        let hist = analyze_particle(cfg, &detected, &mut record)?;
        if let Some(dir) = out_dir {
            write_particle_files(dir, cfg, &record, &hist, &detected)?;
        }
        records.push(record);
    }

    let single = records.iter().find(|r| r.n_configured == 1);
    let tau0 = cfg
        .analysis
        .tau0_ns
        .or_else(|| single.and_then(|r| r.lifetime.map(|l| l.tau_ns)));
    let single_peak = single.and_then(|r| r.peak_intensity.map(|p| p.counts));
    for r in &mut records {
        let reference = tau0.or(Some(r.true_tau0_mean_ns));
        resolve_record(cfg, r, reference, single_peak);
        if let Some(dir) = out_dir {
            if let Some(est) = &r.n_estimate {
                let stem = format!("particle_{:03}_n{}", r.index, r.n_configured);
                write_json(
                    &Versioned::new(est),
                    dir.join(format!("{stem}_n_estimate.json")),
                )?;
            }
        }
    }

    let scaling_points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.n_estimate.as_ref()?.n_int as f64, r.lifetime?.tau_ns)))
        .collect();
    let lifetime_scaling = fit_lifetime_scaling(&scaling_points).ok();
    let intensity_points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.n_configured as f64, r.peak_intensity?.counts)))
        .collect();
    let intensity_power_law = fit_power_law(&intensity_points).ok();

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: crate::VERSION.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n_correct: records.iter().filter(|r| r.correct == Some(true)).count(),
        n_particles: records.len(),
        records,
        lifetime_scaling,
        intensity_power_law,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_json(&report, dir.join("report.json"))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> ExperimentConfig {
        let text = format!(
            r#"{{
                "ensemble": {{"n": [1, 3]}},
                "coupling": {{"mode": "uniform", "kappa": 0.0}},
                "excitation": {{"period_ns": 400.0, "p_excite": 1.0, "n_pulses": 4000}},
                "analysis": {{"estimator": "area_ratio", "decay_model": "mono"}},
                "seed": {seed}
            }}"#
        );
        ExperimentConfig::from_json(&text).unwrap()
    }

    #[test]
    fn report_is_reproducible_and_files_are_written() {
        let dir = std::env::temp_dir().join(format!("nresolve-run-{}", std::process::id()));
        let cfg = small_config(11);
        let a = run_pipeline(&cfg, Some(&dir)).unwrap();
        let b = run_pipeline(&cfg, None).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(a.records.len(), 2);
        assert_ne!(a.records[0].seed, a.records[1].seed);
        assert!(dir.join("report.json").exists());
        assert!(dir.join("particle_001_n3_decay.csv").exists());
        let c = run_pipeline(&small_config(12), None).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn uncoupled_particles_report_lifetime_and_antibunching() {
        let r = run_pipeline(&small_config(3), None).unwrap();
        let one = &r.records[0];
        let tau = one.lifetime.unwrap().tau_ns;
        assert!((tau - 48.95).abs() < 0.1 * 48.95, "tau {tau}");
        assert!(one.g2_used.as_ref().unwrap().value < 0.2);
        assert_eq!(one.n_estimate.as_ref().unwrap().n_int, 1);
        let three = r.records[1].g2_used.as_ref().unwrap().value;
        assert!((three - 2.0 / 3.0).abs() < 0.15, "g2 {three}");
    }

    #[test]
    fn dominant_component_is_selected_by_photon_weight() {
        let base = DecayFit {
            model: DecayModel::Biexp,
            gamma1: 0.02,
            gamma2: Some(0.2),
            a1: 100.0,
            a2: Some(50.0),
            background: 0.0,
            covariance: vec![vec![0.0; 5]; 5],
            goodness: 1.0,
            origin_ns: 0.0,
            degenerate: false,
        };
        assert_eq!(dominant_lifetime(&base).source, LifetimeSource::Slow);
        assert_eq!(slow_lifetime(&base), dominant_lifetime(&base));
        let fast = DecayFit {
            a2: Some(5000.0),
            ..base
        };
        let choice = dominant_lifetime(&fast);
        assert_eq!(choice.source, LifetimeSource::Fast);
        assert!((choice.tau_ns - 5.0).abs() < 1e-12);
        assert_eq!(slow_lifetime(&fast).tau_ns, 50.0);
    }
}
