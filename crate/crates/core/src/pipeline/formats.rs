//! On-disk formats: photon streams (CSV and compact binary), histogram CSV
//! and versioned JSON documents.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detection::{
    DecayHistogram, DecayHistogramBuilder, Detector, PhotonRecord, PhotonStream, StreamHeader,
    SCHEMA_VERSION,
};
use crate::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"QDT1";
const BINARY_RECORD_BYTES: usize = 12;

fn format_error(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_stream_csv<W: Write>(s: &PhotonStream, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# {}", serde_json::to_string(s.header())?)?;
    writeln!(w, "pulse_index,detector,delay_ps")?;
    for r in s.records() {
        writeln!(w, "{},{},{}", r.pulse_index, r.detector.code(), r.delay_ps)?;
    }
    w.flush()?;
    Ok(())
}

/// Line-by-line reader over a stream CSV; yields records without loading
/// the whole file.
pub struct StreamCsvReader<R: BufRead> {
    header: StreamHeader,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> StreamCsvReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut header = None;
        let mut line_no = 0;
        loop {
            let line = lines
                .next()
                .ok_or_else(|| format_error("stream file ends before the column header"))??;
            line_no += 1;
            if let Some(meta) = line.strip_prefix('#') {
                if header.is_none() {
                    header = Some(serde_json::from_str::<StreamHeader>(meta.trim())?);
                }
                continue;
            }
            if line.trim() != "pulse_index,detector,delay_ps" {
                return Err(format_error(format!(
                    "line {line_no}: expected column header, got {line:?}"
                )));
            }
            break;
        }
        let header = header.ok_or_else(|| format_error("missing '#' metadata line"))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(format_error(format!(
                "unsupported schema_version {}",
                header.schema_version
            )));
        }
        Ok(Self {
            header,
            lines,
            line_no,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }
}

impl<R: BufRead> Iterator for StreamCsvReader<R> {
    type Item = Result<PhotonRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(
                parse_record(&line)
                    .map_err(|m| format_error(format!("line {}: {m}", self.line_no))),
            );
        }
    }
}

fn parse_record(line: &str) -> std::result::Result<PhotonRecord, String> {
    let mut fields = line.trim().split(',');
    let mut next = |name: &str| fields.next().ok_or_else(|| format!("missing {name}"));
    let pulse_index = next("pulse_index")?
        .parse::<u64>()
        .map_err(|e| format!("pulse_index: {e}"))?;
    let code = next("detector")?
        .parse::<i64>()
        .map_err(|e| format!("detector: {e}"))?;
    let delay_ps = next("delay_ps")?
        .parse::<u32>()
        .map_err(|e| format!("delay_ps: {e}"))?;
    if fields.next().is_some() {
        return Err("too many fields".into());
    }
    let detector = Detector::from_code(code).map_err(|e| e.to_string())?;
    Ok(PhotonRecord {
        pulse_index,
        delay_ps,
        detector,
    })
}

pub fn read_stream_csv<R: Read>(r: R) -> Result<PhotonStream> {
    let reader = StreamCsvReader::new(BufReader::new(r))?;
    let header = reader.header().clone();
    let records = reader.collect::<Result<Vec<_>>>()?;
    PhotonStream::new(header, records)
}

/// Decay histogram straight from a stream CSV in memory proportional to the
/// number of bins.
pub fn histogram_stream_csv<R: Read>(r: R, bin_width_ps: u64) -> Result<DecayHistogram> {
    let reader = StreamCsvReader::new(BufReader::new(r))?;
    let header = reader.header().clone();
    let mut builder = DecayHistogramBuilder::new(bin_width_ps, header.period_ps())?;
    for rec in reader {
        builder.push(rec?.delay_ps);
    }
    builder.add_pulses(header.n_pulses);
    Ok(builder.finish())
}

/// `QDT1`, u32 LE header length, JSON header, then 12-byte LE records:
/// u32 pulse_index, i16 detector, u16 reserved, u32 delay_ps.
pub fn write_stream_binary<W: Write>(s: &PhotonStream, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = serde_json::to_vec(s.header())?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for r in s.records() {
        let pulse = u32::try_from(r.pulse_index).map_err(|_| {
            format_error(format!(
                "pulse index {} does not fit the binary format",
                r.pulse_index
            ))
        })?;
        w.write_all(&pulse.to_le_bytes())?;
        w.write_all(&r.detector.code().to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        w.write_all(&r.delay_ps.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stream_binary<R: Read>(r: R) -> Result<PhotonStream> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(format_error("not a QDT1 stream"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: StreamHeader = serde_json::from_slice(&header)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % BINARY_RECORD_BYTES != 0 {
        return Err(format_error("truncated binary record"));
    }
    let records = body
        .chunks_exact(BINARY_RECORD_BYTES)
        .map(|c| {
            let pulse = u32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
            let code = i16::from_le_bytes(c[4..6].try_into().expect("2 bytes"));
            let delay = u32::from_le_bytes(c[8..12].try_into().expect("4 bytes"));
            Ok(PhotonRecord {
                pulse_index: pulse as u64,
                delay_ps: delay,
                detector: Detector::from_code(code as i64)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PhotonStream::new(header, records)
}

/// Reads either format, sniffing the magic bytes.
pub fn read_stream_file(path: impl AsRef<Path>) -> Result<PhotonStream> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_stream_binary(&bytes[..])
    } else {
        read_stream_csv(&bytes[..])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramMeta {
    schema_version: u32,
    bin_width_ps: u64,
    n_pulses: u64,
}

pub fn write_histogram_csv<W: Write>(h: &DecayHistogram, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let meta = HistogramMeta {
        schema_version: SCHEMA_VERSION,
        bin_width_ps: h.bin_width_ps(),
        n_pulses: h.n_pulses(),
    };
    writeln!(w, "# {}", serde_json::to_string(&meta)?)?;
    writeln!(w, "bin_start_ps,count")?;
    for (i, c) in h.counts().iter().enumerate() {
        writeln!(w, "{},{}", h.bin_start_ps(i), c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(r: R) -> Result<DecayHistogram> {
    let mut meta: Option<HistogramMeta> = None;
    let mut starts = Vec::new();
    let mut counts = Vec::new();
    let mut seen_header = false;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if let Some(m) = t.strip_prefix('#') {
            if meta.is_none() {
                meta = serde_json::from_str(m.trim()).ok();
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        if !seen_header {
            if t != "bin_start_ps,count" {
                return Err(format_error(format!(
                    "line {}: expected 'bin_start_ps,count'",
                    i + 1
                )));
            }
            seen_header = true;
            continue;
        }
        let (a, b) = t
            .split_once(',')
            .ok_or_else(|| format_error(format!("line {}: expected two fields", i + 1)))?;
        starts.push(
            a.parse::<u64>()
                .map_err(|e| format_error(format!("line {}: {e}", i + 1)))?,
        );
        counts.push(
            b.parse::<u64>()
                .map_err(|e| format_error(format!("line {}: {e}", i + 1)))?,
        );
    }
    let width = match &meta {
        Some(m) => m.bin_width_ps,
        None if starts.len() >= 2 => starts[1] - starts[0],
        None => return Err(format_error("cannot infer bin width")),
    };
    if starts
        .iter()
        .enumerate()
        .any(|(i, s)| *s != i as u64 * width)
    {
        return Err(format_error("bins must start at 0 and be contiguous"));
    }
    DecayHistogram::new(width, counts, meta.map_or(0, |m| m.n_pulses))
}

/// A result document tagged with the schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::StreamStage;

    fn sample() -> PhotonStream {
        let records = vec![
            PhotonRecord {
                pulse_index: 0,
                delay_ps: 15,
                detector: Detector::D0,
            },
            PhotonRecord {
                pulse_index: 0,
                delay_ps: 15,
                detector: Detector::D1,
            },
            PhotonRecord {
                pulse_index: 3,
                delay_ps: 99_999,
                detector: Detector::D1,
            },
        ];
        let mut h = StreamHeader::new(100.0, 5, 42, StreamStage::Detected);
        h.config_hash = "abc".into();
        PhotonStream::new(h, records).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        write_stream_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# {"));
        assert!(text.contains("\npulse_index,detector,delay_ps\n0,0,15\n0,1,15\n3,1,99999\n"));
        assert_eq!(read_stream_csv(&buf[..]).unwrap(), s);
        let h = histogram_stream_csv(&buf[..], 1000).unwrap();
        assert_eq!(h.total(), 3);
        assert_eq!(h.n_pulses(), 5);
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        write_stream_binary(&s, &mut buf).unwrap();
        assert_eq!(&buf[..4], BINARY_MAGIC);
        assert_eq!(read_stream_binary(&buf[..]).unwrap(), s);
        buf.pop();
        assert!(read_stream_binary(&buf[..]).is_err());
    }

    #[test]
    fn histogram_round_trip() {
        let h = DecayHistogram::new(250, vec![3, 0, 7, 1], 9).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        assert_eq!(read_histogram_csv(&buf[..]).unwrap(), h);
        let bare = "bin_start_ps,count\n0,1\n10,2\n20,3\n";
        assert_eq!(
            read_histogram_csv(bare.as_bytes()).unwrap().counts(),
            &[1, 2, 3]
        );
        assert!(read_histogram_csv("bin_start_ps,count\n0,1\n20,2\n10,3\n".as_bytes()).is_err());
    }

    #[test]
    fn malformed_stream_lines_are_reported() {
        let text = "# {\"schema_version\":1,\"period_ns\":100.0,\"n_pulses\":2,\"seed\":0,\"stage\":\"detected\"}\npulse_index,detector,delay_ps\n0,7,5\n";
        let err = read_stream_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(read_stream_csv("pulse_index,detector,delay_ps\n".as_bytes()).is_err());
    }
}
