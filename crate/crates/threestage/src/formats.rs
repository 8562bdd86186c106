//! On-disk formats: JSONL transcripts, timing CSV, flat TOML run configs and
//! attack reports.
//!
//! Every document starts with a [`Metadata`] record naming the tool version,
//! subcommand, fully resolved config and seed.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use threestage_core::adversary::AttackReport;
use threestage_core::bench::TimingReport;

pub const TOOL: &str = "threestage";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config key `{0}` must be a plain value; the config file is flat")]
    NestedKey(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing metadata record")]
    MissingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Value,
    pub seed: u64,
}

impl Metadata {
    pub fn new<C: Serialize>(subcommand: &str, config: &C, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            subcommand: subcommand.into(),
            config: serde_json::to_value(config).expect("configs serialize to JSON"),
            seed,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MetadataLine {
    metadata: Metadata,
}

/// Metadata line, then one JSON object per record.
pub fn write_jsonl<W: Write, T: Serialize>(
    mut w: W,
    meta: &Metadata,
    records: impl IntoIterator<Item = T>,
) -> Result<(), FormatError> {
    serde_json::to_writer(&mut w, &MetadataLine { metadata: meta.clone() })?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<(Metadata, Vec<Value>), FormatError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(FormatError::MissingMetadata)??;
    let meta: MetadataLine = serde_json::from_str(&first)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok((meta.metadata, records))
}

fn write_comment_header<W: Write>(w: &mut W, meta: &Metadata) -> Result<(), FormatError> {
    writeln!(w, "# tool: {} {}", meta.tool, meta.version)?;
    writeln!(w, "# subcommand: {}", meta.subcommand)?;
    writeln!(w, "# seed: {}", meta.seed)?;
    writeln!(w, "# config: {}", serde_json::to_string(&meta.config)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub event_type: String,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    pub detail: String,
}

/// `#` metadata lines, then `event_type,t_start_ms,t_end_ms,detail`.
pub fn write_timing_csv<W: Write>(mut w: W, meta: &Metadata, report: &TimingReport) -> Result<(), FormatError> {
    write_comment_header(&mut w, meta)?;
    let mut csv = csv::Writer::from_writer(w);
    for e in &report.events {
        csv.serialize(TimingRow {
            event_type: e.event_type().into(),
            t_start_ms: e.t_start_ms,
            t_end_ms: e.t_end_ms,
            detail: e.detail(),
        })?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_timing_csv<R: io::Read>(r: R) -> Result<Vec<TimingRow>, FormatError> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(csv.deserialize().collect::<Result<_, _>>()?)
}

/// An [`AttackReport`] flattened to one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub strategy: String,
    pub mode: String,
    pub photons_per_pulse: u32,
    pub seed: u64,
    pub trials: u64,
    pub bits: u64,
    pub eve_correct: u64,
    pub bob_errors: u64,
    pub erasures: u64,
    pub eve_bit_accuracy: f64,
    pub eve_ci_low: f64,
    pub eve_ci_high: f64,
    pub eve_p_value: f64,
    pub bob_error_rate: f64,
    pub bob_ci_low: f64,
    pub bob_ci_high: f64,
    pub erasure_rate: f64,
    pub erasure_ci_low: f64,
    pub erasure_ci_high: f64,
    pub mutual_information: f64,
}

impl From<&AttackReport> for AttackRow {
    fn from(r: &AttackReport) -> Self {
        Self {
            strategy: r.strategy.clone(),
            mode: r.mode.clone(),
            photons_per_pulse: r.photons_per_pulse,
            seed: r.seed,
            trials: r.counts.trials,
            bits: r.counts.bits,
            eve_correct: r.counts.eve_correct,
            bob_errors: r.counts.bob_errors,
            erasures: r.counts.erasures,
            eve_bit_accuracy: r.eve_bit_accuracy,
            eve_ci_low: r.eve_accuracy_interval.low,
            eve_ci_high: r.eve_accuracy_interval.high,
            eve_p_value: r.eve_p_value,
            bob_error_rate: r.bob_error_rate,
            bob_ci_low: r.bob_error_interval.low,
            bob_ci_high: r.bob_error_interval.high,
            erasure_rate: r.erasure_rate,
            erasure_ci_low: r.erasure_interval.low,
            erasure_ci_high: r.erasure_interval.high,
            mutual_information: r.mutual_information,
        }
    }
}

pub fn write_attack_csv<W: Write>(mut w: W, meta: &Metadata, reports: &[AttackReport]) -> Result<(), FormatError> {
    write_comment_header(&mut w, meta)?;
    let mut csv = csv::Writer::from_writer(w);
    for r in reports {
        csv.serialize(AttackRow::from(r))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_attack_csv<R: io::Read>(r: R) -> Result<Vec<AttackRow>, FormatError> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(csv.deserialize().collect::<Result<_, _>>()?)
}

/// Parses a flat `key = value` TOML file. Tables and arrays are rejected.
pub fn parse_config(text: &str) -> Result<Map<String, Value>, FormatError> {
    let table: toml::Table = text.parse()?;
    let mut out = Map::new();
    for (k, v) in table {
        let v = match v {
            toml::Value::String(s) => Value::String(s),
            toml::Value::Integer(i) => Value::from(i),
            toml::Value::Float(f) => Value::from(f),
            toml::Value::Boolean(b) => Value::Bool(b),
            toml::Value::Datetime(d) => Value::String(d.to_string()),
            toml::Value::Array(_) | toml::Value::Table(_) => return Err(FormatError::NestedKey(k)),
        };
        out.insert(k, v);
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Map<String, Value>, FormatError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Overlays the flags that were given on top of the file's values. `T`
/// should reject unknown fields so that typos in the file are reported.
pub fn merge_config<T: Serialize + DeserializeOwned>(flags: &T, file: Option<Map<String, Value>>) -> Result<T, FormatError> {
    let Value::Object(given) = serde_json::to_value(flags)? else {
        return Err(FormatError::Config("flags must form a key/value table".into()));
    };
    let mut merged = file.unwrap_or_default();
    for (k, v) in given {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| FormatError::Config(e.to_string()))
}
