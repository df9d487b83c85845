use rand::RngExt;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Detector, PhotonRecord, PhotonStream, StreamStage};
use crate::error::invalid;
use crate::rng::{unit_rng, DOMAIN_DETECTOR};
use crate::Result;

const PULSES_PER_CHUNK: u64 = 4096;

/// Beam splitter plus two single-photon detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dead_time_ns: f64,
    pub jitter_sigma_ps: f64,
    pub dark_rate_cps: f64,
    /// Fraction of photons routed to detector 0.
    pub splitter_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dead_time_ns: 0.0,
            jitter_sigma_ps: 0.0,
            dark_rate_cps: 0.0,
            splitter_ratio: 0.5,
        }
    }
}

impl DetectorConfig {
    /// Typical silicon SPAD figures.
    pub fn realistic() -> Self {
        Self {
            efficiency: 0.6,
            dead_time_ns: 50.0,
            jitter_sigma_ps: 350.0,
            dark_rate_cps: 100.0,
            splitter_ratio: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !unit(self.efficiency) {
            return Err(invalid("efficiency must lie in [0, 1]"));
        }
        if !unit(self.splitter_ratio) {
            return Err(invalid("splitter_ratio must lie in [0, 1]"));
        }
        if !nonneg(self.dead_time_ns)
            || !nonneg(self.jitter_sigma_ps)
            || !nonneg(self.dark_rate_cps)
        {
            return Err(invalid(
                "dead_time_ns, jitter_sigma_ps and dark_rate_cps must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Sends a pre-detector stream through the splitter, efficiency, jitter,
/// dark counts and dead time. Randomness is keyed by pulse index.
pub fn apply_detector_chain(
    s: &PhotonStream,
    d: &DetectorConfig,
    seed: u64,
) -> Result<PhotonStream> {
    d.validate()?;
    if s.header().stage != StreamStage::PreDetector {
        return Err(invalid("detector chain expects a pre-detector stream"));
    }
    let period_ps = s.period_ps();
    let n_pulses = s.n_pulses();
    let records = s.records();
    let jitter = (d.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, d.jitter_sigma_ps).expect("finite sigma"));
    let dark_mean = d.dark_rate_cps * period_ps as f64 * 1e-12;
    let dark = (dark_mean > 0.0).then(|| Poisson::new(dark_mean).expect("positive mean"));

    let n_chunks = n_pulses.div_ceil(PULSES_PER_CHUNK);
    let chunks: Vec<Vec<PhotonRecord>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let first = chunk * PULSES_PER_CHUNK;
            let last = (first + PULSES_PER_CHUNK).min(n_pulses);
            let mut idx = records.partition_point(|r| r.pulse_index < first);
            let mut out = Vec::new();
            for pulse in first..last {
                let start = idx;
                while idx < records.len() && records[idx].pulse_index == pulse {
                    idx += 1;
                }
                if start == idx && dark.is_none() {
                    continue;
                }
                let mut rng = unit_rng(seed, DOMAIN_DETECTOR, pulse);
                let base = (pulse * period_ps) as f64;
                for r in &records[start..idx] {
                    let detector = if rng.random::<f64>() < d.splitter_ratio {
                        Detector::D0
                    } else {
                        Detector::D1
                    };
                    let kept = rng.random::<f64>() < d.efficiency;
                    let shift = jitter.as_ref().map_or(0.0, |j| j.sample(&mut rng));
                    if !kept {
                        continue;
                    }
                    let t = (base + r.delay_ps as f64 + shift).round();
                    if t < 0.0 {
                        continue;
                    }
                    let t = t as u64;
                    let p = t / period_ps;
                    if p >= n_pulses {
                        continue;
                    }
                    out.push(PhotonRecord {
                        pulse_index: p,
                        delay_ps: (t % period_ps) as u32,
                        detector,
                    });
                }
                if let Some(dark) = &dark {
                    for detector in [Detector::D0, Detector::D1] {
                        let k = dark.sample(&mut rng) as u64;
                        for _ in 0..k {
                            let delay = rng.random_range(0..period_ps) as u32;
                            out.push(PhotonRecord {
                                pulse_index: pulse,
                                delay_ps: delay,
                                detector,
                            });
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut merged: Vec<PhotonRecord> = chunks.into_iter().flatten().collect();
    merged.sort_unstable();
    let dead_ps = (d.dead_time_ns * 1000.0).round() as u64;
    if dead_ps > 0 {
        let mut last: [Option<u64>; 2] = [None, None];
        merged.retain(|r| {
            let slot = &mut last[r.detector.code() as usize];
            let t = r.pulse_index * period_ps + r.delay_ps as u64;
            match *slot {
                Some(prev) if t - prev < dead_ps => false,
                _ => {
                    *slot = Some(t);
                    true
                }
            }
        });
    }
    let mut header = s.header().clone();
    header.stage = StreamStage::Detected;
    header.seed = seed;
    PhotonStream::new(header, merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::StreamHeader;

    fn one_photon_per_pulse(n: u64, delay_ps: u32) -> PhotonStream {
        let records = (0..n)
            .map(|p| PhotonRecord {
                pulse_index: p,
                delay_ps,
                detector: Detector::Pre,
            })
            .collect();
        PhotonStream::new(
            StreamHeader::new(100.0, n, 0, StreamStage::PreDetector),
            records,
        )
        .unwrap()
    }

    #[test]
    fn lossless_chain_keeps_everything() {
        let s = one_photon_per_pulse(20_000, 1234);
        let out = apply_detector_chain(&s, &DetectorConfig::default(), 7).unwrap();
        assert_eq!(out.len(), s.len());
        let [_, d0, d1] = out.counts();
        let total = (d0 + d1) as f64;
        assert!((d0 as f64 - d1 as f64).abs() < 4.0 * total.sqrt());
        assert!(out
            .records()
            .iter()
            .zip(s.records())
            .all(|(a, b)| a.pulse_index == b.pulse_index && a.delay_ps == b.delay_ps));
    }

    #[test]
    fn zero_efficiency_leaves_dark_counts_only() {
        let s = one_photon_per_pulse(10_000, 500);
        let cfg = DetectorConfig {
            efficiency: 0.0,
            dark_rate_cps: 1e6,
            ..Default::default()
        };
        let out = apply_detector_chain(&s, &cfg, 3).unwrap();
        // 1e6 c/s × 100 ns × 2 detectors × 1e4 pulses = 2000 expected
        let n = out.len() as f64;
        assert!((n - 2000.0).abs() < 5.0 * 2000f64.sqrt(), "{n}");
        let clean = DetectorConfig {
            efficiency: 0.0,
            ..Default::default()
        };
        assert!(apply_detector_chain(&s, &clean, 3).unwrap().is_empty());
    }

    #[test]
    fn dead_time_is_monotone() {
        let s = one_photon_per_pulse(5_000, 10);
        let mut prev = usize::MAX;
        for dead in [0.0, 50.0, 100.0, 150.0, 250.0] {
            let cfg = DetectorConfig {
                dead_time_ns: dead,
                jitter_sigma_ps: 30_000.0,
                ..Default::default()
            };
            let kept = apply_detector_chain(&s, &cfg, 11).unwrap().len();
            assert!(kept <= prev);
            prev = kept;
        }
        assert!(prev < 5_000);
    }

    #[test]
    fn chain_is_deterministic_and_rejects_detected_input() {
        let s = one_photon_per_pulse(1_000, 10);
        let cfg = DetectorConfig::realistic();
        let a = apply_detector_chain(&s, &cfg, 5).unwrap();
        let b = apply_detector_chain(&s, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert!(apply_detector_chain(&a, &cfg, 5).is_err());
        assert!(DetectorConfig {
            efficiency: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
