//! Configuration, persistence of batches and histograms, and run manifests.

mod config;
mod manifest;

pub use config::{
    AxisConfig, MeterSpec, OverlayConfig, Preselection, RunConfig, SweepConfig, DEFAULT_M, DEFAULT_N, DEFAULT_SEED,
    DEFAULT_SIGMA,
};
pub use manifest::{sha256_hex, FileDigest, RunManifest, MANIFEST_FILE};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{MeterConfig, PpsConfig};
use crate::error::{DsaError, Result};
use crate::sampler::{Histogram, SampleBatch};

pub const BATCH_FORMAT: &str = "dsa-batch";
pub const BATCH_VERSION: u32 = 1;

pub fn io_error(path: &Path, e: impl std::fmt::Display) -> DsaError {
    DsaError::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

#[derive(Serialize, Deserialize)]
struct BatchFile {
    format: String,
    version: u32,
    artifact: String,
    batch: SampleBatch,
}

/// JSON text holding the batch's sufficient statistics and optional histograms.
pub fn batch_to_json(batch: &SampleBatch) -> String {
    let file = BatchFile {
        format: BATCH_FORMAT.into(),
        version: BATCH_VERSION,
        artifact: crate::ARTIFACT_VERSION.into(),
        batch: batch.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("batch serializes");
    text.push('\n');
    text
}

pub fn batch_from_json(text: &str) -> Result<SampleBatch> {
    let file: BatchFile = serde_json::from_str(text).map_err(|e| DsaError::Parse(format!("batch file: {e}")))?;
    if file.format != BATCH_FORMAT || file.version != BATCH_VERSION {
        return Err(DsaError::Parse(format!(
            "batch file: expected format {BATCH_FORMAT} version {BATCH_VERSION}, found {} version {}",
            file.format, file.version
        )));
    }
    check_batch(&file.batch)?;
    Ok(file.batch)
}

/// Rejects batch files whose stored configuration is not self-consistent.
fn check_batch(b: &SampleBatch) -> Result<()> {
    let pps = &b.pps;
    let rebuilt_b = PpsConfig::new(pps.imbalance(), pps.theta())?;
    let rebuilt_a = PpsConfig::from_alpha2(pps.alpha2(), pps.theta())?;
    if *pps != rebuilt_b && *pps != rebuilt_a {
        return Err(DsaError::Parse("batch file: inconsistent pre/post-selection fields".into()));
    }
    let m = &b.meter;
    if *m != MeterConfig::new(m.d(), m.sigma())? && *m != MeterConfig::from_strength(m.g(), m.sigma())? {
        return Err(DsaError::Parse("batch file: inconsistent meter fields".into()));
    }
    if b.hist_psa.is_some() != b.hist_psr.is_some() {
        return Err(DsaError::Parse("batch file: histograms must be present for both channels or neither".into()));
    }
    Ok(())
}

pub fn write_batch(path: &Path, batch: &SampleBatch) -> Result<()> {
    write_text(path, &batch_to_json(batch))
}

pub fn read_batch(path: &Path) -> Result<SampleBatch> {
    batch_from_json(&read_text(path)?)
}

/// Histogram as CSV rows `lo,hi,count`; under/overflow go into `#` lines.
pub fn histogram_to_csv(h: &Histogram) -> String {
    let mut out = String::new();
    out.push_str(&format!("# underflow: {}\n# overflow: {}\nlo,hi,count\n", h.underflow(), h.overflow()));
    let edges = h.edges();
    for (w, c) in edges.windows(2).zip(h.counts()) {
        out.push_str(&format!("{},{},{}\n", w[0], w[1], c));
    }
    out
}

/// Reads `lo,hi,count` rows (contiguous bins, optional header, `#` comments).
pub fn histogram_from_csv(text: &str) -> Result<Histogram> {
    let mut edges: Vec<f64> = Vec::new();
    let mut counts = Vec::new();
    let (mut underflow, mut overflow) = (0, 0);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        let err = |msg: String| DsaError::Parse(format!("histogram line {lineno}: {msg}"));
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let slot = match key.trim() {
                    "underflow" => &mut underflow,
                    "overflow" => &mut overflow,
                    _ => continue,
                };
                *slot = value.trim().parse().map_err(|_| err(format!("bad {} count", key.trim())))?;
            }
            continue;
        }
        if line.is_empty() || (edges.is_empty() && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [lo, hi, count] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let lo: f64 = lo.parse().map_err(|_| err(format!("bad bin edge `{lo}`")))?;
        let hi: f64 = hi.parse().map_err(|_| err(format!("bad bin edge `{hi}`")))?;
        let count: u64 = count.parse().map_err(|_| err(format!("bad count `{count}`")))?;
        match edges.last() {
            None => edges.push(lo),
            Some(&prev) if prev != lo => return Err(err(format!("bin starts at {lo} but the previous one ends at {prev}"))),
            Some(_) => {}
        }
        edges.push(hi);
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(DsaError::Parse("histogram: no bins".into()));
    }
    Histogram::from_counts(edges, counts, underflow, overflow)
}
