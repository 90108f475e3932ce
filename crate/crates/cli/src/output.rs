//! Artifact writing: provenance, number formatting and atomic file replacement.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use esml_core::rng::STREAM_DERIVATION;
use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::config::Command;

pub const TOOL: &str = "esml";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub stream_derivation: &'static str,
}

impl Provenance {
    pub fn new(command: Command, config_sha256: &str, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            subcommand: command.name(),
            config_sha256: config_sha256.to_owned(),
            seed,
            stream_derivation: STREAM_DERIVATION,
        }
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Rewrites every non-integer JSON number to 17 significant digits.
fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => match n.as_f64() {
            Some(x) if x.is_finite() => Value::Number(fmt_f64(x).parse::<Number>().expect("valid JSON number")),
            _ => Value::Null,
        },
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// `{"provenance": …, "result": …}` rendered with fixed precision.
pub fn render_json<T: Serialize>(provenance: Option<&Provenance>, result: &T) -> serde_json::Result<String> {
    let mut root = Map::new();
    if let Some(p) = provenance {
        root.insert("provenance".into(), serde_json::to_value(p)?);
    }
    root.insert("result".into(), normalize(serde_json::to_value(result)?));
    let mut s = serde_json::to_string_pretty(&Value::Object(root))?;
    s.push('\n');
    Ok(s)
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Provenance as `# key: value` lines, then the header and the rows.
    pub fn render(&self, provenance: &Provenance, extra: &[(&str, String)]) -> String {
        let mut s = String::new();
        let p = provenance;
        let _ = writeln!(s, "# tool: {} {}", p.tool, p.version);
        let _ = writeln!(s, "# subcommand: {}", p.subcommand);
        let _ = writeln!(s, "# config_sha256: {}", p.config_sha256);
        let _ = writeln!(s, "# seed: {}", p.seed);
        let _ = writeln!(s, "# stream_derivation: {}", p.stream_derivation);
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".esml-").suffix(".tmp").tempfile_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}
