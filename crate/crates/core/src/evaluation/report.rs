use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::removal::{MisclassificationTable, PerturbationCurve};
use super::words::WeightScheme;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One cell of the downstream-classifier comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamEntry {
    pub classifier: String,
    pub scheme: WeightScheme,
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub downstream: Vec<DownstreamEntry>,
    #[serde(default)]
    pub curves: Vec<PerturbationCurve>,
    #[serde(default)]
    pub tables: Vec<MisclassificationTable>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Default for Report {
    fn default() -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            metadata: BTreeMap::new(),
            downstream: Vec::new(),
            curves: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Writes `report.json` plus one CSV per curve and per steering metric into
/// `dir`, returning the written paths in order.
pub fn emit_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    let mut names = BTreeSet::new();
    let mut claim = |name: String| -> Result<PathBuf> {
        if !names.insert(name.clone()) {
            return Err(Error::Evaluation(format!(
                "two report entries would both write {name}"
            )));
        }
        Ok(dir.join(name))
    };
    let mut files = Vec::new();
    let mut csvs: Vec<(PathBuf, Vec<u8>)> = Vec::new();

    if !report.downstream.is_empty() {
        let path = claim("downstream.csv".into())?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["classifier", "scheme", "accuracy", "train_size", "test_size"])?;
        for e in &report.downstream {
            w.write_record([
                e.classifier.clone(),
                e.scheme.as_str().to_string(),
                e.accuracy.to_string(),
                e.train_size.to_string(),
                e.test_size.to_string(),
            ])?;
        }
        csvs.push((path, into_bytes(w)?));
    }
    for curve in &report.curves {
        let path = claim(curve.file_name())?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["removal_count", "accuracy", "seed"])?;
        for (s, seed) in curve.per_seed.iter().zip(&curve.seeds) {
            for (m, acc) in curve.removal_counts.iter().zip(s) {
                w.write_record([m.to_string(), acc.to_string(), seed.to_string()])?;
            }
        }
        let mean_tag = if curve.per_seed.is_empty() { "" } else { "mean" };
        for (m, acc) in curve.removal_counts.iter().zip(&curve.accuracy_at) {
            w.write_record([m.to_string(), acc.to_string(), mean_tag.to_string()])?;
        }
        csvs.push((path, into_bytes(w)?));
    }
    for table in &report.tables {
        for metric in &table.metrics {
            let path = claim(table.file_name(metric))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["predicted_class", "removal_count", "method", "count"])?;
            for row in table.rows.iter().filter(|r| &r.metric == metric) {
                w.write_record([
                    row.predicted_class.to_string(),
                    row.removal_count.to_string(),
                    row.method.to_string(),
                    row.count.to_string(),
                ])?;
            }
            csvs.push((path, into_bytes(w)?));
        }
    }

    fs::create_dir_all(dir)?;
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    fs::write(&json_path, json)?;
    files.push(json_path);
    for (path, bytes) in csvs {
        fs::write(&path, bytes)?;
        files.push(path);
    }
    Ok(files)
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Reads `report.json` from a report directory (or the file itself).
pub fn read_report(path: &Path) -> Result<Report> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let report: Report = serde_json::from_slice(&fs::read(&file)?)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Version {
            found: report.schema_version,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(report)
}
