//! CSV and JSON emitters.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never sees a half-written table. JSON objects are emitted with
//! sorted keys; CSV tables carry a schema suffix (`*.v1.csv`) and a fixed
//! header per schema version.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub experiment: String,
    /// SHA-256 of the canonical JSON of every input.
    pub input_digest: String,
    pub seed: u64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub summary: Value,
    pub wall_clock_s: f64,
}

/// Canonical JSON: object keys sorted, no whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // `Value` keeps objects in a BTreeMap, which sorts the keys.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let text = canonical_json(value)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV table with a fixed header, buffered in memory until [`Table::save`].
pub struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

impl Table {
    /// `stem` becomes `<stem>.v<SCHEMA_VERSION>.csv`.
    pub fn new(stem: &str, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { name: format!("{stem}.v{SCHEMA_VERSION}.csv"), writer, width: header.len() })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let rec: csv::ByteRecord = fields.into_iter().collect();
        anyhow::ensure!(rec.len() == self.width, "row has {} fields, header has {}", rec.len(), self.width);
        self.writer.write_byte_record(&rec)?;
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Writes the table under `dir` and returns its file name.
    pub fn save(self, dir: &Path) -> Result<String> {
        let bytes = self.writer.into_inner().map_err(|e| anyhow::anyhow!("csv flush: {}", e.error()))?;
        write_atomic(&dir.join(&self.name), &bytes)?;
        Ok(self.name)
    }
}

/// Shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn opt_id(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
