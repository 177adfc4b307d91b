//! CSV/JSON emission of pair results and federated trajectories.
//!
//! CSV files round percentages and gains to 2 decimals; the JSON file keeps
//! full precision. Output order is canonical so repeated runs are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TransferOrigin;
use crate::error::{KdError, Result};
use crate::fed::{FedTrajectory, InitTag};
use crate::metrics::cumulative_gain;
use crate::orchestrator::PairResult;

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_CSV: &str = "results.csv";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const CUMULATIVE_CSV: &str = "cumulative.csv";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const REPORT_JSON: &str = "report.json";

const RESULTS_HEADER: [&str; 12] = [
    "scenario",
    "method",
    "transfer_option",
    "teacher_id",
    "student_id",
    "T",
    "alpha",
    "pre_acc",
    "post_acc",
    "gain_points",
    "teacher_acc",
    "strength_delta",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    // avoid "-0.00"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One results-CSV row as written: accuracies in percent, 2 decimals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub transfer_option: TransferOrigin,
    pub teacher_id: usize,
    pub student_id: usize,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    pub pre_acc: f64,
    pub post_acc: f64,
    pub gain_points: f64,
    pub teacher_acc: f64,
    pub strength_delta: f64,
}

impl From<&PairResult> for ResultRow {
    fn from(r: &PairResult) -> Self {
        Self {
            scenario: r.scenario.clone(),
            method: r.method.clone(),
            transfer_option: r.transfer_option,
            teacher_id: r.teacher_id,
            student_id: r.student_id,
            temperature: r.temperature,
            alpha: r.alpha,
            pre_acc: round2(r.pre.overall_accuracy * 100.0),
            post_acc: round2(r.post.overall_accuracy * 100.0),
            gain_points: round2(r.gain_points),
            teacher_acc: round2(r.teacher.overall_accuracy * 100.0),
            strength_delta: round2(r.strength_delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: usize,
    pub accuracy: f64,
    pub init_tag: InitTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub results: Vec<PairResult>,
    pub trajectories: Vec<FedTrajectory>,
}

fn canonical(results: &[PairResult]) -> Vec<&PairResult> {
    let mut sorted: Vec<&PairResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scenario, a.sort_key())
            .cmp(&(&b.scenario, b.sort_key()))
            .then_with(|| a.temperature.partial_cmp(&b.temperature).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| a.alpha.partial_cmp(&b.alpha).unwrap_or(std::cmp::Ordering::Equal))
    });
    sorted
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 output")
}

pub fn results_csv(results: &[PairResult]) -> String {
    let mut w = csv_writer();
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for r in canonical(results) {
        let row = ResultRow::from(r);
        w.write_record([
            row.scenario,
            row.method,
            row.transfer_option.name().to_string(),
            row.teacher_id.to_string(),
            row.student_id.to_string(),
            fmt_opt(row.temperature),
            fmt_opt(row.alpha),
            fmt2(row.pre_acc),
            fmt2(row.post_acc),
            fmt2(row.gain_points),
            fmt2(row.teacher_acc),
            fmt2(row.strength_delta),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Gain against teacher-minus-student accuracy, one point per pair.
pub fn scatter_csv(results: &[PairResult]) -> String {
    let mut w = csv_writer();
    w.write_record(["method", "transfer_option", "teacher_id", "student_id", "strength_delta", "gain_points"])
        .expect("in-memory write");
    for r in canonical(results) {
        w.write_record([
            r.method.clone(),
            r.transfer_option.name().to_string(),
            r.teacher_id.to_string(),
            r.student_id.to_string(),
            fmt2(r.strength_delta),
            fmt2(r.gain_points),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Summed gain per (scenario, method, transfer option).
pub fn cumulative_csv(results: &[PairResult]) -> String {
    let mut groups: BTreeMap<(String, TransferOrigin), Vec<PairResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.scenario.clone(), r.transfer_option))
            .or_default()
            .push(r.clone());
    }
    let mut w = csv_writer();
    w.write_record(["scenario", "method", "transfer_option", "pairs", "cumulative_gain"])
        .expect("in-memory write");
    for ((scenario, option), rs) in &groups {
        for (method, total) in cumulative_gain(rs) {
            let pairs = rs.iter().filter(|r| r.method == method).count();
            w.write_record([
                scenario.clone(),
                method,
                option.name().to_string(),
                pairs.to_string(),
                fmt2(total),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// Round 0 holds the initial model's accuracy.
pub fn trajectories_csv(trajectories: &[FedTrajectory]) -> String {
    let mut w = csv_writer();
    w.write_record(["round", "accuracy", "init_tag"]).expect("in-memory write");
    for t in trajectories {
        let all = std::iter::once(t.initial_accuracy).chain(t.accuracies.iter().copied());
        for (round, acc) in all.enumerate() {
            w.write_record([round.to_string(), fmt2(acc * 100.0), t.init_tag.name().to_string()])
                .expect("in-memory write");
        }
    }
    finish(w)
}

pub fn report_json(results: &[PairResult], trajectories: &[FedTrajectory]) -> String {
    let doc = ReportDocument {
        schema_version: SCHEMA_VERSION,
        results: canonical(results).into_iter().cloned().collect(),
        trajectories: trajectories.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| KdError::io(&path, e))?;
    Ok(path)
}

/// Write the report files for each requested format into `out_dir`.
pub fn emit_report(
    results: &[PairResult],
    trajectories: &[FedTrajectory],
    formats: &[ReportFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| KdError::io(out_dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        written.push(write(out_dir, RESULTS_CSV, &results_csv(results))?);
        written.push(write(out_dir, SCATTER_CSV, &scatter_csv(results))?);
        written.push(write(out_dir, CUMULATIVE_CSV, &cumulative_csv(results))?);
        written.push(write(out_dir, TRAJECTORIES_CSV, &trajectories_csv(trajectories))?);
    }
    if formats.contains(&ReportFormat::Json) {
        written.push(write(out_dir, REPORT_JSON, &report_json(results, trajectories))?);
    }
    Ok(written)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| KdError::io(path, e))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| KdError::Parse { line: 1, message: e.to_string() })?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(KdError::Parse {
            line: 1,
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| KdError::Parse { line: i + 2, message: e.to_string() }))
        .collect()
}

pub fn parse_trajectories_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| KdError::Parse { line: i + 2, message: e.to_string() }))
        .collect()
}

pub fn load_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    parse_results_csv(&read(path)?).map_err(|e| KdError::format(path, e.to_string()))
}

pub fn parse_report_json(text: &str) -> Result<ReportDocument> {
    let doc: ReportDocument =
        serde_json::from_str(text).map_err(|e| KdError::Parse { line: e.line(), message: e.to_string() })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(KdError::Parse {
            line: 1,
            message: format!("schema_version {} is not supported", doc.schema_version),
        });
    }
    Ok(doc)
}

pub fn load_report_json(path: &Path) -> Result<ReportDocument> {
    parse_report_json(&read(path)?).map_err(|e| KdError::format(path, e.to_string()))
}
