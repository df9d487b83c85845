use serde::{Deserialize, Serialize};

use super::fit::{fit_decay, DecayModel};
use super::{G2Estimate, G2Method};
use crate::detection::{CoincidenceHistogram, DecayHistogram, Detector, PhotonStream};
use crate::error::invalid;
use crate::{Error, Result};

/// Half-width of a coincidence peak window, as a fraction of the period.
pub const DEFAULT_PEAK_WINDOW_FRACTION: f64 = 0.25;
/// Default early window as a fraction of the fitted slow lifetime.
pub const DEFAULT_WINDOW_TAU_FRACTION: f64 = 0.05;
/// Minimum accidental-equivalent pair count for the instantaneous estimator.
pub const MIN_EXPECTED_PAIRS: f64 = 100.0;

/// Pulsed peak-area ratio: zero-delay peak over the mean side peak.
pub fn estimate_g2_area_ratio(h: &CoincidenceHistogram) -> Result<G2Estimate> {
    estimate_g2_area_ratio_with(h, DEFAULT_PEAK_WINDOW_FRACTION)
}

pub fn estimate_g2_area_ratio_with(
    h: &CoincidenceHistogram,
    window_fraction: f64,
) -> Result<G2Estimate> {
    if !(window_fraction > 0.0 && window_fraction <= 0.5) {
        return Err(invalid("peak window fraction must lie in (0, 0.5]"));
    }
    let half = window_fraction * h.period_ps() as f64;
    let k = h.side_periods() as i64;
    let centre = h.peak_area(0, half) as f64;
    let sides: f64 = (1..=k)
        .flat_map(|j| [j, -j])
        .map(|j| h.peak_area(j, half) as f64)
        .sum();
    if sides == 0.0 {
        return Err(Error::InsufficientPairs {
            count: 0.0,
            required: 1.0,
        });
    }
    let mean_side = sides / (2 * k) as f64;
    let value = centre / mean_side;
    let std_error = if centre > 0.0 {
        value * (1.0 / centre + 1.0 / sides).sqrt()
    } else {
        1.0 / mean_side
    };
    Ok(G2Estimate {
        value,
        std_error,
        method: G2Method::AreaRatio,
        clamped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstantaneousOptions {
    /// Early window after the pulse, ps. Defaults to 5% of the fitted lifetime.
    pub window_ps: Option<u64>,
    /// Remove the leading finite-window bias using a second window of twice the width.
    pub extrapolate: bool,
}

impl Default for InstantaneousOptions {
    fn default() -> Self {
        Self {
            window_ps: None,
            extrapolate: true,
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct WindowCounts {
    singles: [f64; 2],
    pairs: f64,
}

impl WindowCounts {
    fn ratio(&self, n_pulses: f64) -> f64 {
        self.pairs * n_pulses / (self.singles[0] * self.singles[1])
    }

    fn expected_pairs(&self, n_pulses: f64) -> f64 {
        self.singles[0] * self.singles[1] / n_pulses
    }
}

fn window_counts(s: &PhotonStream, window_ps: u64) -> WindowCounts {
    let mut out = WindowCounts::default();
    let records = s.records();
    let mut i = 0;
    while i < records.len() {
        let pulse = records[i].pulse_index;
        let mut c = [0u64; 2];
        while i < records.len() && records[i].pulse_index == pulse {
            let r = &records[i];
            if (r.delay_ps as u64) < window_ps {
                match r.detector {
                    Detector::D0 => c[0] += 1,
                    Detector::D1 => c[1] += 1,
                    Detector::Pre => {}
                }
            }
            i += 1;
        }
        out.singles[0] += c[0] as f64;
        out.singles[1] += c[1] as f64;
        out.pairs += (c[0] * c[1]) as f64;
    }
    out
}

/// Zero-delay g²(0) from same-pulse cross-detector pairs whose photons both
/// arrive within an early window after the pulse, normalised by the product
/// of the window singles rates. With `extrapolate`, the ratio is evaluated at
/// windows T and 2T and extrapolated linearly to zero width.
pub fn estimate_g2_instantaneous(
    s: &PhotonStream,
    h: &DecayHistogram,
    opts: &InstantaneousOptions,
) -> Result<G2Estimate> {
    let window_ps = match opts.window_ps {
        Some(w) if w > 0 => w,
        Some(_) => return Err(invalid("window must be positive")),
        None => {
            let fit = fit_decay(h, DecayModel::Mono)?;
            ((DEFAULT_WINDOW_TAU_FRACTION * fit.tau1_ns() * 1000.0).round() as u64).max(1)
        }
    };
    let n = s.n_pulses() as f64;
    let near = window_counts(s, window_ps);
    let expected = near.expected_pairs(n);
    if !(expected >= MIN_EXPECTED_PAIRS) {
        return Err(Error::InsufficientPairs {
            count: expected,
            required: MIN_EXPECTED_PAIRS,
        });
    }
    let g_near = near.ratio(n);
    let unit_near = 1.0 / expected;
    if !opts.extrapolate {
        let std_error = if near.pairs > 0.0 {
            g_near / near.pairs.sqrt()
        } else {
            unit_near
        };
        return Ok(G2Estimate {
            value: g_near,
            std_error,
            method: G2Method::Instantaneous,
            clamped: false,
        });
    }
    let far = window_counts(s, 2 * window_ps);
    let g_far = far.ratio(n);
    let raw = 2.0 * g_near - g_far;
    // Pairs inside T are a subset of those inside 2T.
    let var = if near.pairs > 0.0 {
        4.0 * g_near * g_near / near.pairs + g_far * g_far / far.pairs
            - 4.0 * g_near * g_far / far.pairs
    } else {
        4.0 * unit_near * unit_near
    };
    let clamped = raw < 0.0;
    Ok(G2Estimate {
        value: raw.max(0.0),
        std_error: var.max(0.0).sqrt(),
        method: G2Method::Instantaneous,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{build_coincidence_histogram, PhotonRecord, StreamHeader, StreamStage};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn detected(n_pulses: u64, mut records: Vec<PhotonRecord>) -> PhotonStream {
        records.sort();
        PhotonStream::new(
            StreamHeader::new(100.0, n_pulses, 0, StreamStage::Detected),
            records,
        )
        .unwrap()
    }

    /// Poisson number of photons per detector per pulse, uniform delays.
    fn poissonian(n_pulses: u64, mean: f64, seed: u64) -> PhotonStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pois = Poisson::new(mean).unwrap();
        let mut records = Vec::new();
        for p in 0..n_pulses {
            for detector in [Detector::D0, Detector::D1] {
                for _ in 0..pois.sample(&mut rng) as u64 {
                    records.push(PhotonRecord {
                        pulse_index: p,
                        delay_ps: rng.random_range(0..100_000),
                        detector,
                    });
                }
            }
        }
        detected(n_pulses, records)
    }

    #[test]
    fn poissonian_light_gives_unity() {
        let s = poissonian(50_000, 0.3, 1);
        let h = build_coincidence_histogram(&s, 1000, 3).unwrap();
        let g = estimate_g2_area_ratio(&h).unwrap();
        assert!((g.value - 1.0).abs() < 3.0 * g.std_error, "{g:?}");
        let sides: Vec<u64> = (1..=3)
            .flat_map(|k| [k, -k])
            .map(|k| h.peak_area(k, 25_000.0))
            .collect();
        let mean = sides.iter().sum::<u64>() as f64 / 6.0;
        for a in sides {
            assert!((a as f64 - mean).abs() < 3.5 * mean.sqrt());
        }
        let d = crate::detection::build_decay_histogram(&s, 1000).unwrap();
        let opts = InstantaneousOptions {
            window_ps: Some(20_000),
            extrapolate: true,
        };
        let gi = estimate_g2_instantaneous(&s, &d, &opts).unwrap();
        assert!((gi.value - 1.0).abs() < 3.0 * gi.std_error, "{gi:?}");
    }

    #[test]
    fn single_photons_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records = (0..20_000u64)
            .map(|p| PhotonRecord {
                pulse_index: p,
                delay_ps: rng.random_range(0..40_000),
                detector: if rng.random::<bool>() {
                    Detector::D0
                } else {
                    Detector::D1
                },
            })
            .collect();
        let s = detected(20_000, records);
        let g = estimate_g2_area_ratio(&build_coincidence_histogram(&s, 1000, 3).unwrap()).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.std_error > 0.0);
        let d = crate::detection::build_decay_histogram(&s, 1000).unwrap();
        let gi = estimate_g2_instantaneous(
            &s,
            &d,
            &InstantaneousOptions {
                window_ps: Some(20_000),
                extrapolate: true,
            },
        )
        .unwrap();
        assert_eq!(gi.value, 0.0);
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let s = poissonian(100, 0.1, 2);
        let d = crate::detection::build_decay_histogram(&s, 1000).unwrap();
        let err = estimate_g2_instantaneous(
            &s,
            &d,
            &InstantaneousOptions {
                window_ps: Some(1000),
                extrapolate: true,
            },
        );
        assert!(matches!(err, Err(Error::InsufficientPairs { .. })));
    }
}
