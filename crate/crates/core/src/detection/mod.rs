//! Hanbury Brown–Twiss detection chain and TCSPC histograms.

mod chain;
mod histogram;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

pub use chain::{apply_detector_chain, DetectorConfig};
pub use histogram::{
    build_coincidence_histogram, build_decay_histogram, CoincidenceHistogram, DecayHistogram,
    DecayHistogramBuilder, MIN_SIDE_PERIODS,
};

/// Version of the stream header and result documents.
pub const SCHEMA_VERSION: u32 = 1;

/// Which output a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    /// Emitted photon before the beam splitter.
    Pre,
    D0,
    D1,
}

impl Detector {
    pub fn code(self) -> i16 {
        match self {
            Detector::Pre => -1,
            Detector::D0 => 0,
            Detector::D1 => 1,
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            -1 => Ok(Detector::Pre),
            0 => Ok(Detector::D0),
            1 => Ok(Detector::D1),
            other => Err(invalid(format!("unknown detector code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamStage {
    PreDetector,
    Detected,
}

/// One time tag: pulse number plus delay after that pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhotonRecord {
    pub pulse_index: u64,
    pub delay_ps: u32,
    pub detector: Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub schema_version: u32,
    pub period_ns: f64,
    pub n_pulses: u64,
    pub seed: u64,
    #[serde(default)]
    pub config_hash: String,
    pub stage: StreamStage,
}

impl StreamHeader {
    pub fn new(period_ns: f64, n_pulses: u64, seed: u64, stage: StreamStage) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            period_ns,
            n_pulses,
            seed,
            config_hash: String::new(),
            stage,
        }
    }

    pub fn period_ps(&self) -> u64 {
        (self.period_ns * 1000.0).round() as u64
    }
}

/// Time-tagged photon records sorted by absolute arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonStream {
    header: StreamHeader,
    records: Vec<PhotonRecord>,
}

impl PhotonStream {
    /// Validates ordering, delay range and pulse range.
    pub fn new(header: StreamHeader, records: Vec<PhotonRecord>) -> Result<Self> {
        let period_ps = header.period_ps();
        if period_ps == 0 || period_ps > u32::MAX as u64 {
            return Err(invalid(format!("period of {period_ps} ps is out of range")));
        }
        for (i, r) in records.iter().enumerate() {
            if r.delay_ps as u64 >= period_ps {
                return Err(invalid(format!(
                    "record {i}: delay {} ps not below period {period_ps} ps",
                    r.delay_ps
                )));
            }
            if r.pulse_index >= header.n_pulses {
                return Err(invalid(format!(
                    "record {i}: pulse {} beyond n_pulses",
                    r.pulse_index
                )));
            }
            let detected = r.detector != Detector::Pre;
            if detected != (header.stage == StreamStage::Detected) {
                return Err(invalid(format!(
                    "record {i}: detector label does not match stream stage"
                )));
            }
        }
        if records.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("records are not sorted by arrival time"));
        }
        Ok(Self { header, records })
    }

    pub fn empty(header: StreamHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn set_config_hash(&mut self, hash: impl Into<String>) {
        self.header.config_hash = hash.into();
    }

    pub fn records(&self) -> &[PhotonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn period_ps(&self) -> u64 {
        self.header.period_ps()
    }

    pub fn n_pulses(&self) -> u64 {
        self.header.n_pulses
    }

    pub fn absolute_ps(&self, r: &PhotonRecord) -> u64 {
        r.pulse_index * self.period_ps() + r.delay_ps as u64
    }

    /// Counts on (pre, detector 0, detector 1).
    pub fn counts(&self) -> [u64; 3] {
        let mut c = [0u64; 3];
        for r in &self.records {
            c[(r.detector.code() + 1) as usize] += 1;
        }
        c
    }

    pub fn into_parts(self) -> (StreamHeader, Vec<PhotonRecord>) {
        (self.header, self.records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(stage: StreamStage) -> StreamHeader {
        StreamHeader::new(100.0, 10, 1, stage)
    }

    #[test]
    fn stream_validation() {
        let rec = |p, d, det| PhotonRecord {
            pulse_index: p,
            delay_ps: d,
            detector: det,
        };
        assert!(PhotonStream::new(
            header(StreamStage::Detected),
            vec![rec(0, 5, Detector::D0), rec(1, 0, Detector::D1)]
        )
        .is_ok());
        // unsorted
        assert!(PhotonStream::new(
            header(StreamStage::Detected),
            vec![rec(1, 0, Detector::D0), rec(0, 5, Detector::D1)]
        )
        .is_err());
        // delay beyond period
        assert!(PhotonStream::new(
            header(StreamStage::Detected),
            vec![rec(0, 100_000, Detector::D0)]
        )
        .is_err());
        // pulse beyond range
        assert!(PhotonStream::new(
            header(StreamStage::Detected),
            vec![rec(10, 0, Detector::D0)]
        )
        .is_err());
        // stage mismatch
        assert!(PhotonStream::new(
            header(StreamStage::PreDetector),
            vec![rec(0, 0, Detector::D0)]
        )
        .is_err());
    }

    #[test]
    fn detector_codes_round_trip() {
        for d in [Detector::Pre, Detector::D0, Detector::D1] {
            assert_eq!(Detector::from_code(d.code() as i64).unwrap(), d);
        }
        assert!(Detector::from_code(2).is_err());
    }
}
