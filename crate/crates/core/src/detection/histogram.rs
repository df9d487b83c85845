use serde::{Deserialize, Serialize};

use super::{Detector, PhotonStream};
use crate::error::invalid;
use crate::Result;

/// Smallest number of side peaks on each side of zero delay.
pub const MIN_SIDE_PERIODS: u32 = 3;

/// TCSPC histogram of photon delays after the excitation pulse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecayHistogram {
    bin_width_ps: u64,
    counts: Vec<u64>,
    n_pulses: u64,
}

impl DecayHistogram {
    pub fn new(bin_width_ps: u64, counts: Vec<u64>, n_pulses: u64) -> Result<Self> {
        if bin_width_ps == 0 {
            return Err(invalid("bin width must be at least 1 ps"));
        }
        Ok(Self {
            bin_width_ps,
            counts,
            n_pulses,
        })
    }

    pub fn bin_width_ps(&self) -> u64 {
        self.bin_width_ps
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps as f64 * 1e-3
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_pulses(&self) -> u64 {
        self.n_pulses
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start_ps(&self, i: usize) -> u64 {
        i as u64 * self.bin_width_ps
    }

    pub fn bin_center_ns(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_ns()
    }

    /// Adds a histogram over a disjoint set of pulses.
    pub fn merge(&mut self, other: &DecayHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps || other.counts.len() != self.counts.len() {
            return Err(invalid("cannot merge histograms with different binning"));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        self.n_pulses += other.n_pulses;
        Ok(())
    }
}

/// Streaming accumulator for [`DecayHistogram`]; memory is one counter per bin.
#[derive(Debug, Clone)]
pub struct DecayHistogramBuilder {
    hist: DecayHistogram,
}

impl DecayHistogramBuilder {
    pub fn new(bin_width_ps: u64, period_ps: u64) -> Result<Self> {
        if bin_width_ps == 0 {
            return Err(invalid("bin width must be at least 1 ps"));
        }
        let n_bins = period_ps.div_ceil(bin_width_ps).max(1) as usize;
        Ok(Self {
            hist: DecayHistogram {
                bin_width_ps,
                counts: vec![0; n_bins],
                n_pulses: 0,
            },
        })
    }

    pub fn push(&mut self, delay_ps: u32) {
        let i = (delay_ps as u64 / self.hist.bin_width_ps) as usize;
        if let Some(c) = self.hist.counts.get_mut(i) {
            *c += 1;
        }
    }

    pub fn add_pulses(&mut self, n: u64) {
        self.hist.n_pulses += n;
    }

    pub fn merge(&mut self, other: &DecayHistogramBuilder) -> Result<()> {
        self.hist.merge(&other.hist)
    }

    pub fn finish(self) -> DecayHistogram {
        self.hist
    }
}

/// Delays of all records, all detectors pooled.
pub fn build_decay_histogram(s: &PhotonStream, bin_width_ps: u64) -> Result<DecayHistogram> {
    let mut b = DecayHistogramBuilder::new(bin_width_ps, s.period_ps())?;
    s.records().iter().for_each(|r| b.push(r.delay_ps));
    b.add_pulses(s.n_pulses());
    Ok(b.finish())
}

/// Histogram of t(detector 1) − t(detector 0) over ±(K + ½) periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    bin_width_ps: u64,
    period_ps: u64,
    side_periods: u32,
    counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn new(bin_width_ps: u64, period_ps: u64, side_periods: u32) -> Result<Self> {
        if bin_width_ps == 0 || period_ps == 0 {
            return Err(invalid("bin width and period must be positive"));
        }
        if side_periods < MIN_SIDE_PERIODS {
            return Err(invalid(format!(
                "coincidence axis needs at least {MIN_SIDE_PERIODS} periods per side"
            )));
        }
        let half = Self::half_bins_for(bin_width_ps, period_ps, side_periods);
        Ok(Self {
            bin_width_ps,
            period_ps,
            side_periods,
            counts: vec![0; 2 * half],
        })
    }

    fn half_bins_for(bin_width_ps: u64, period_ps: u64, side_periods: u32) -> usize {
        ((2 * side_periods as u64 + 1) * period_ps).div_ceil(2 * bin_width_ps) as usize
    }

    fn half_bins(&self) -> usize {
        self.counts.len() / 2
    }

    pub fn bin_width_ps(&self) -> u64 {
        self.bin_width_ps
    }

    pub fn period_ps(&self) -> u64 {
        self.period_ps
    }

    pub fn side_periods(&self) -> u32 {
        self.side_periods
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Axis half-width in ps; bins cover [−range, range).
    pub fn range_ps(&self) -> i64 {
        (self.half_bins() as u64 * self.bin_width_ps) as i64
    }

    pub fn bin_start_ps(&self, i: usize) -> i64 {
        (i as i64 - self.half_bins() as i64) * self.bin_width_ps as i64
    }

    pub fn bin_center_ps(&self, i: usize) -> f64 {
        self.bin_start_ps(i) as f64 + 0.5 * self.bin_width_ps as f64
    }

    pub(crate) fn add(&mut self, delta_ps: i64) {
        let shifted = delta_ps + self.range_ps();
        if shifted >= 0 {
            if let Some(c) = self
                .counts
                .get_mut((shifted as u64 / self.bin_width_ps) as usize)
            {
                *c += 1;
            }
        }
    }

    /// Counts in bins whose centres lie within `half_window_ps` of peak `k`.
    pub fn peak_area(&self, k: i64, half_window_ps: f64) -> u64 {
        let centre = (k * self.period_ps as i64) as f64;
        (0..self.counts.len())
            .filter(|&i| (self.bin_center_ps(i) - centre).abs() <= half_window_ps)
            .map(|i| self.counts[i])
            .sum()
    }

    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps
            || other.period_ps != self.period_ps
            || other.side_periods != self.side_periods
        {
            return Err(invalid(
                "cannot merge coincidence histograms with different axes",
            ));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Correlates every detector-0 photon with every detector-1 photon inside
/// the axis range.
pub fn build_coincidence_histogram(
    s: &PhotonStream,
    bin_width_ps: u64,
    side_periods: u32,
) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::new(bin_width_ps, s.period_ps(), side_periods)?;
    let times = |d: Detector| -> Vec<i64> {
        s.records()
            .iter()
            .filter(|r| r.detector == d)
            .map(|r| s.absolute_ps(r) as i64)
            .collect()
    };
    let (t0, t1) = (times(Detector::D0), times(Detector::D1));
    let range = h.range_ps();
    let mut lo = 0;
    for &a in &t0 {
        while lo < t1.len() && t1[lo] < a - range {
            lo += 1;
        }
        for &b in t1[lo..].iter().take_while(|&&b| b < a + range) {
            h.add(b - a);
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{PhotonRecord, StreamHeader, StreamStage};

    fn detected(n_pulses: u64, records: Vec<PhotonRecord>) -> PhotonStream {
        PhotonStream::new(
            StreamHeader::new(100.0, n_pulses, 0, StreamStage::Detected),
            records,
        )
        .unwrap()
    }

    #[test]
    fn empty_stream_gives_zero_histogram() {
        let s = detected(10, vec![]);
        let h = build_decay_histogram(&s, 100).unwrap();
        assert_eq!(h.counts().len(), 1000);
        assert_eq!(h.total(), 0);
        assert!(build_decay_histogram(&s, 0).is_err());
    }

    #[test]
    fn alternating_single_photons_have_no_zero_delay_pairs() {
        let records = (0..1000u64)
            .map(|p| PhotonRecord {
                pulse_index: p,
                delay_ps: 2000,
                detector: if p % 2 == 0 {
                    Detector::D0
                } else {
                    Detector::D1
                },
            })
            .collect();
        let h = build_coincidence_histogram(&detected(1000, records), 500, 3).unwrap();
        assert_eq!(h.peak_area(0, 25_000.0), 0);
        assert!(h.peak_area(1, 25_000.0) > 0);
        assert_eq!(h.bin_start_ps(0), -h.range_ps());
        assert!(build_coincidence_histogram(&detected(1, vec![]), 500, 2).is_err());
    }

    #[test]
    fn histograms_merge_over_disjoint_pulses() {
        let records: Vec<PhotonRecord> = (0..400u64)
            .map(|i| PhotonRecord {
                pulse_index: i / 2,
                delay_ps: ((i * 7919) % 90_000) as u32,
                detector: Detector::D0,
            })
            .collect::<Vec<_>>();
        let mut sorted = records.clone();
        sorted.sort();
        let all = detected(200, sorted.clone());
        let (a, b): (Vec<_>, Vec<_>) = sorted.into_iter().partition(|r| r.pulse_index < 120);
        let mut ha = build_decay_histogram(&detected(200, a), 250).unwrap();
        let hb = build_decay_histogram(&detected(200, b), 250).unwrap();
        ha.merge(&hb).unwrap();
        assert_eq!(
            ha.counts(),
            build_decay_histogram(&all, 250).unwrap().counts()
        );
    }
}
