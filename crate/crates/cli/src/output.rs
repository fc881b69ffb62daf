//! Run directories: `data/*.csv` (or `.json`), `summary.json` and a
//! checksummed `manifest.json` written last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

pub const ARTIFACT: &str = "onset";
/// Version of the run-directory layout and manifest format.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large or
/// very small magnitudes.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let m = v.abs();
    if m == 0.0 || (1e-4..1e15).contains(&m) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }
}

/// Long-format table with a versioned column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub schema: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, schema: u32, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            schema,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text)).expect("writing to memory");
        }
        w.into_inner().expect("flushing to memory")
    }

    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = serde_json::json!({
            "table": self.name,
            "schema": self.schema,
            "columns": self.columns,
            "rows": rows,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializing a JSON value");
        bytes.push(b'\n');
        bytes
    }
}

/// Everything an experiment produces, before it touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the run directory.
    pub path: String,
    pub schema: u32,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub layout_version: u32,
    pub kind: String,
    pub seed: u64,
    pub workers: usize,
    pub config: Value,
    pub started_at: String,
    pub duration_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

/// Fields of the manifest known before the outputs are written.
#[derive(Debug, Clone)]
pub struct RunInfo {
    pub kind: String,
    pub seed: u64,
    pub workers: usize,
    pub config: Value,
    pub started_at: String,
    pub duration: Duration,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".into(),
    });
    let ctx = |what: &str| format!("{what} {}", path.display());
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(ctx("creating"), e))?;
    f.write_all(bytes).map_err(|e| CliError::io(ctx("writing"), e))?;
    f.sync_all().map_err(|e| CliError::io(ctx("syncing"), e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(ctx("renaming into"), e))
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializing a JSON value");
    bytes.push(b'\n');
    bytes
}

/// Writes the data files and the summary, then the manifest.
pub fn write_run(dir: &Path, output: &RunOutput, format: OutputFormat, info: RunInfo) -> CliResult<RunManifest> {
    let data = dir.join("data");
    fs::create_dir_all(&data).map_err(|e| CliError::io(format!("creating {}", data.display()), e))?;
    let mut outputs = Vec::new();
    let mut emit = |rel: String, schema: u32, bytes: Vec<u8>| -> CliResult<()> {
        write_atomic(&dir.join(&rel), &bytes)?;
        outputs.push(OutputRecord {
            path: rel,
            schema,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    };
    for table in &output.tables {
        let (ext, bytes) = match format {
            OutputFormat::Csv => ("csv", table.to_csv()),
            OutputFormat::Json => ("json", table.to_json()),
        };
        emit(format!("data/{}.{ext}", table.name), table.schema, bytes)?;
    }
    emit("summary.json".into(), LAYOUT_VERSION, json_bytes(&output.summary))?;
    let manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        layout_version: LAYOUT_VERSION,
        kind: info.kind,
        seed: info.seed,
        workers: info.workers,
        config: info.config,
        started_at: info.started_at,
        duration_seconds: info.duration.as_secs_f64(),
        outputs,
    };
    write_atomic(&dir.join("manifest.json"), &json_bytes(&manifest))?;
    Ok(manifest)
}

/// Re-reads a run directory and checks every output against its checksum.
pub fn verify_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    for out in &manifest.outputs {
        let file: PathBuf = dir.join(&out.path);
        let bytes = fs::read(&file).map_err(|e| CliError::io(format!("reading {}", file.display()), e))?;
        if bytes.len() as u64 != out.bytes || sha256_hex(&bytes) != out.sha256 {
            return Err(CliError::config(format!(
                "{} does not match its manifest checksum",
                out.path
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_output() -> RunOutput {
        let mut t = Table::new("demo", 1, &["k", "x", "label", "ok"]);
        t.push(vec![1usize.into(), 0.5.into(), "a,b".into(), true.into()]);
        t.push(vec![2usize.into(), 1e-9.into(), "c".into(), false.into()]);
        RunOutput {
            tables: vec![t],
            summary: serde_json::json!({"n": 2}),
        }
    }

    fn info() -> RunInfo {
        RunInfo {
            kind: "demo".into(),
            seed: 1,
            workers: 1,
            config: serde_json::json!({}),
            started_at: "2026-01-01T00:00:00Z".into(),
            duration: Duration::from_millis(5),
        }
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(1e-9), "1e-9");
        assert_eq!(format_float(2.5e20), "2.5e20");
        assert_eq!(format_float(f64::NAN), "NaN");
        assert_eq!(format_float(-3.0), "-3");
    }

    #[test]
    fn csv_quotes_and_headers() {
        let text = String::from_utf8(sample_output().tables[0].to_csv()).unwrap();
        assert_eq!(text, "k,x,label,ok\n1,0.5,\"a,b\",true\n2,1e-9,c,false\n");
    }

    #[test]
    fn manifest_round_trip_and_tamper_detection() {
        let dir = std::env::temp_dir().join(format!("onset-output-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let m = write_run(&dir, &sample_output(), OutputFormat::Csv, info()).unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(verify_manifest(&dir).unwrap(), m);
        fs::write(dir.join("data/demo.csv"), "tampered\n").unwrap();
        assert!(verify_manifest(&dir).is_err());
        let m = write_run(&dir, &sample_output(), OutputFormat::Json, info()).unwrap();
        assert!(m.outputs[0].path.ends_with(".json"));
        let doc: Value = serde_json::from_slice(&fs::read(dir.join("data/demo.json")).unwrap()).unwrap();
        assert_eq!(doc["columns"][2], "label");
        fs::remove_dir_all(&dir).unwrap();
    }
}
