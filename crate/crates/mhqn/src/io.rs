//! File formats: JSON documents, tomography dataset CSV, timestamp dumps and
//! JSON-lines event logs.

use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mhqn_core::timetag::TimestampStream;
use mhqn_core::tomography::{DatasetEntry, MeasurementSetting, Polarization, PosteriorSummary, TomographyDataset};

/// Magic bytes opening a binary timestamp dump.
pub const STREAM_MAGIC: [u8; 8] = *b"MHQNTT01";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    setting_a: String,
    setting_b: String,
    counts: u64,
    duration_s: f64,
    #[serde(default)]
    efficiency: Option<f64>,
}

/// Reads `setting_a, setting_b, counts, duration_s[, efficiency]`; a missing
/// efficiency column means 1.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<TomographyDataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<DatasetRow>().enumerate() {
        let row = row.with_context(|| format!("dataset row {}", i + 1))?;
        let a: Polarization = row
            .setting_a
            .parse()
            .with_context(|| format!("dataset row {}: setting_a", i + 1))?;
        let b: Polarization = row
            .setting_b
            .parse()
            .with_context(|| format!("dataset row {}: setting_b", i + 1))?;
        entries.push(DatasetEntry {
            setting: MeasurementSetting::new(a, b),
            counts: row.counts,
            duration_s: row.duration_s,
            efficiency: row.efficiency.unwrap_or(1.0),
        });
    }
    let dataset = TomographyDataset { entries };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_dataset_csv<W: Write>(writer: W, dataset: &TomographyDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in &dataset.entries {
        w.serialize(DatasetRow {
            setting_a: e.setting.a.to_string(),
            setting_b: e.setting.b.to_string(),
            counts: e.counts,
            duration_s: e.duration_s,
            efficiency: Some(e.efficiency),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Posterior summary in its file form; the mean state is row-major with
/// each entry written as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub mean: Vec<[f64; 2]>,
    pub fidelity_mean: f64,
    pub fidelity_sd: f64,
    pub log_negativity_mean: f64,
    pub log_negativity_sd: f64,
    pub samples: usize,
    pub rhat: f64,
    pub converged: bool,
    pub acceptance: f64,
}

impl From<&PosteriorSummary> for PosteriorFile {
    fn from(s: &PosteriorSummary) -> Self {
        Self {
            mean: s.mean.to_row_major_pairs(),
            fidelity_mean: s.fidelity_mean,
            fidelity_sd: s.fidelity_sd,
            log_negativity_mean: s.log_negativity_mean,
            log_negativity_sd: s.log_negativity_sd,
            samples: s.samples,
            rhat: s.rhat,
            converged: s.converged,
            acceptance: s.acceptance,
        }
    }
}

/// Binary dump: 16-byte header (magic, little-endian u64 resolution in ps)
/// followed by little-endian u64 ticks.
pub fn write_stream<W: Write>(writer: W, stream: &TimestampStream) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(&STREAM_MAGIC)?;
    w.write_all(&u64::from(stream.resolution_ps()).to_le_bytes())?;
    for t in stream.ticks() {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_stream<R: Read>(mut reader: R) -> Result<TimestampStream> {
    let mut header = [0u8; 16];
    reader.read_exact(&mut header).context("stream header")?;
    if header[..8] != STREAM_MAGIC {
        bail!("not a timestamp dump (bad magic)");
    }
    let res = u64::from_le_bytes(header[8..].try_into().expect("8 bytes"));
    let res = u32::try_from(res).context("resolution out of range")?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() % 8 != 0 {
        bail!("truncated timestamp dump");
    }
    let ticks = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(TimestampStream::new(ticks, res)?)
}

/// Debug form: a `resolution_ps` comment line, then one tick per line.
pub fn write_stream_csv<W: Write>(writer: W, stream: &TimestampStream) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "# resolution_ps={}", stream.resolution_ps())?;
    writeln!(w, "tick")?;
    for t in stream.ticks() {
        writeln!(w, "{t}")?;
    }
    w.flush()
}

pub fn read_stream_csv<R: BufRead>(reader: R) -> Result<TimestampStream> {
    let mut resolution = None;
    let mut ticks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# resolution_ps=") {
            resolution = Some(rest.parse::<u32>().context("resolution")?);
        } else if line.is_empty() || line == "tick" || line.starts_with('#') {
            continue;
        } else {
            ticks.push(line.parse::<u64>().with_context(|| format!("line {}", i + 1))?);
        }
    }
    let resolution = resolution.context("missing resolution_ps header")?;
    Ok(TimestampStream::new(ticks, resolution)?)
}

/// One JSON object per line.
pub fn write_json_lines<W: Write, T: Serialize>(writer: W, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json_lines<R: BufRead>(reader: R) -> Result<Vec<serde_json::Value>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .enumerate()
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).with_context(|| format!("line {}", i + 1))
        })
        .collect()
}
