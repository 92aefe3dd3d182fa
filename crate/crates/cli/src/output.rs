//! CSV tables, the run manifest and the single writer that puts them on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::SeedSource;
use crate::error::CliError;

/// Version of every CSV layout written by the tool.
pub const CSV_SCHEMA: u32 = 1;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_numbers(&mut self, row: impl IntoIterator<Item = f64>) {
        self.push(row.into_iter().map(fmt_num).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Body with the versioned header comment first.
    pub fn render(&self, manifest_hash: &str) -> String {
        let mut s = format!("# lfms-csv schema={CSV_SCHEMA} manifest={manifest_hash}\n");
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Long-format record shared by the sweep and validate outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub replica: Option<u64>,
    pub eps: f64,
    pub t: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub mc_stderr: Option<f64>,
}

pub const RESULT_COLUMNS: [&str; 7] = ["experiment", "replica", "eps", "t", "metric", "value", "mc_stderr"];

pub fn result_table(rows: &[ResultRow]) -> CsvTable {
    let mut t = CsvTable::new(RESULT_COLUMNS);
    for r in rows {
        t.push(vec![
            r.experiment.clone(),
            r.replica.map(|x| x.to_string()).unwrap_or_default(),
            fmt_num(r.eps),
            r.t.map(fmt_num).unwrap_or_default(),
            r.metric.clone(),
            fmt_num(r.value),
            r.mc_stderr.map(fmt_num).unwrap_or_default(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Csv(CsvTable),
    Svg(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub body: Body,
}

impl Artifact {
    pub fn csv(path: PathBuf, table: CsvTable) -> Self {
        Self { path, body: Body::Csv(table) }
    }

    pub fn svg(path: PathBuf, svg: String) -> Self {
        Self { path, body: Body::Svg(svg) }
    }

    pub fn render(&self, hash: &str) -> String {
        match &self.body {
            Body::Csv(t) => t.render(hash),
            Body::Svg(s) => s.replacen("<svg ", &format!("<!-- lfms manifest={hash} -->\n<svg "), 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub source: SeedSource,
    /// How replica streams are derived from the master seed.
    pub derivation: &'static str,
}

/// Everything needed to reproduce a run. The hash covers all fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub tool: String,
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    pub config: String,
    pub resolved: BTreeMap<String, String>,
    pub seeds: Seeds,
    pub workers: usize,
    pub outputs: Vec<String>,
}

impl Manifest {
    /// SHA-256 over `manifest <len>\0<json>`, in the manner of git object ids.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        let mut h = Sha256::new();
        h.update(format!("manifest {}\0", json.len()).as_bytes());
        h.update(json.as_bytes());
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Serialize)]
struct Stamped<'a> {
    hash: String,
    #[serde(flatten)]
    manifest: &'a Manifest,
}

/// Manifest path next to a primary output: `dir/stem.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    primary.with_file_name(format!("{stem}.manifest.json"))
}

/// Write all artifacts and the manifest; returns the manifest hash.
pub fn write_all(mut manifest: Manifest, artifacts: &[Artifact], manifest_file: &Path) -> Result<String, CliError> {
    manifest.outputs = artifacts
        .iter()
        .map(|a| a.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let hash = manifest.hash();
    for a in artifacts {
        write_file(&a.path, &a.render(&hash))?;
    }
    let stamped = Stamped { hash: hash.clone(), manifest: &manifest };
    let json = serde_json::to_string_pretty(&stamped).expect("manifest serializes") + "\n";
    write_file(manifest_file, &json)?;
    Ok(hash)
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

/// Parse a CSV written by [`CsvTable::render`]: `(manifest hash, table)`.
pub fn read_csv(text: &str) -> Option<(String, CsvTable)> {
    let mut lines = text.lines();
    let hash = lines.next()?.split("manifest=").nth(1)?.to_string();
    let columns = lines.next()?.split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Some((hash, CsvTable { columns, rows }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest {
            schema: 1,
            tool: "lfms test".into(),
            command: "reduce".into(),
            arguments: BTreeMap::from([("eps".into(), "0.1".into())]),
            config: "[model]\n".into(),
            resolved: BTreeMap::new(),
            seeds: Seeds { master: 1, source: SeedSource::Config, derivation: "x" },
            workers: 1,
            outputs: vec![],
        }
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-300, -2.5, 1.0 / 3.0, 12345.678] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn table_render_and_read() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push_numbers([1.0, 0.25]);
        let text = t.render("abc");
        assert!(text.starts_with("# lfms-csv schema=1 manifest=abc\na,b\n"));
        let (h, back) = read_csv(&text).unwrap();
        assert_eq!(h, "abc");
        assert_eq!(back, t);
    }

    #[test]
    fn hash_tracks_every_field() {
        let m = manifest();
        assert_eq!(m.hash(), manifest().hash());
        assert_eq!(m.hash().len(), 64);
        let mut other = manifest();
        other.workers = 2;
        assert_ne!(m.hash(), other.hash());
    }

    #[test]
    fn result_rows_leave_missing_fields_empty() {
        let row = ResultRow {
            experiment: "sweep".into(),
            replica: None,
            eps: 0.1,
            t: None,
            metric: "rate".into(),
            value: 9.5,
            mc_stderr: Some(0.5),
        };
        let t = result_table(&[row]);
        assert_eq!(t.rows[0], vec!["sweep", "", "0.1", "", "rate", "9.5", "0.5"]);
    }

    #[test]
    fn manifest_sits_next_to_the_primary_output() {
        assert_eq!(manifest_path(Path::new("out/gap.csv")), PathBuf::from("out/gap.manifest.json"));
    }
}
