//! Benchmark harness: JSONL datasets, answer metrics, and per-variant reports.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::KnowledgeGraph;
use crate::llm::ProviderSpec;
use crate::reasoning::{answer_question, AnswerStatus, PipelineConfig, Variant};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub question: String,
    /// Gold answer strings; never empty.
    pub answers: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record `{id}` has no answers")]
    EmptyAnswers { line: usize, id: String },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads one JSON record per line; blank lines are skipped.
pub fn load_dataset<R: BufRead>(source: R) -> Result<Vec<EvalRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.answers.is_empty() {
            return Err(DatasetError::EmptyAnswers { line: line_no, id: record.id });
        }
        if !ids.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

fn normalized_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items.iter().map(|s| normalize(s.as_ref())).collect()
}

/// 1 iff the top prediction is a gold answer (case and whitespace folded).
pub fn hits_at_1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    match predicted.first() {
        Some(top) if normalized_set(gold).contains(&normalize(top.as_ref())) => 1.0,
        _ => 0.0,
    }
}

/// 1 iff the predicted set equals the gold set exactly.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    let p = normalized_set(predicted);
    if !p.is_empty() && p == normalized_set(gold) {
        1.0
    } else {
        0.0
    }
}

/// Set-overlap F1; 1 when both sets are empty, 0 when exactly one is.
pub fn f1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    let p = normalized_set(predicted);
    let g = normalized_set(gold);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let overlap = p.intersection(&g).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / p.len() as f64;
    let recall = overlap / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub provider: ProviderSpec,
    /// `pipeline.variant` selects the ablation.
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn new(provider: ProviderSpec, pipeline: PipelineConfig) -> Self {
        Self {
            label: pipeline.variant.to_string(),
            provider,
            pipeline,
        }
    }

    pub fn variant(&self) -> Variant {
        self.pipeline.variant
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionResult {
    pub id: String,
    pub question: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    pub status: AnswerStatus,
    pub failure_stage: Option<String>,
    pub hits_at_1: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub variant: Variant,
    pub dataset: String,
    pub questions: usize,
    pub hits_at_1: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub outcomes: Vec<QuestionResult>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Rows are ordered by config, then dataset. Timings are kept in memory only
/// so that report files are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs each config over each dataset with a freshly built provider, so
/// scripted runs never share queue state.
pub fn run_benchmark(kg: &KnowledgeGraph, datasets: &[Dataset], configs: &[RunConfig]) -> Report {
    let started = Instant::now();
    let mut report = Report::default();
    for config in configs {
        for dataset in datasets {
            let row_started = Instant::now();
            let provider = config.provider.build();
            let outcomes: Vec<QuestionResult> = dataset
                .records
                .iter()
                .map(|record| {
                    let outcome = answer_question(&record.question, kg, provider.as_ref(), &config.pipeline);
                    let predicted: Vec<String> =
                        outcome.answer.names(kg).into_iter().map(str::to_string).collect();
                    QuestionResult {
                        id: record.id.clone(),
                        question: record.question.clone(),
                        hits_at_1: hits_at_1(&predicted, &record.answers),
                        accuracy: accuracy(&predicted, &record.answers),
                        f1: f1(&predicted, &record.answers),
                        predicted,
                        gold: record.answers.clone(),
                        status: outcome.answer.status,
                        failure_stage: outcome.trace["failure_stage"].as_str().map(str::to_string),
                    }
                })
                .collect();
            report.rows.push(ReportRow {
                label: config.label.clone(),
                variant: config.variant(),
                dataset: dataset.name.clone(),
                questions: outcomes.len(),
                hits_at_1: mean(outcomes.iter().map(|o| o.hits_at_1)),
                accuracy: mean(outcomes.iter().map(|o| o.accuracy)),
                f1: mean(outcomes.iter().map(|o| o.f1)),
                outcomes,
                wall_clock: row_started.elapsed(),
            });
        }
    }
    report.wall_clock = started.elapsed();
    report
}

impl Report {
    pub fn row(&self, label: &str, dataset: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label && r.dataset == dataset)
    }

    /// One line per config, with Hits@1 and Acc columns for each dataset.
    pub fn to_markdown(&self) -> String {
        let mut datasets: Vec<&str> = Vec::new();
        let mut labels: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !datasets.contains(&row.dataset.as_str()) {
                datasets.push(&row.dataset);
            }
            if !labels.contains(&row.label.as_str()) {
                labels.push(&row.label);
            }
        }
        let mut out = String::from("| Method |");
        let mut rule = String::from("|---|");
        for d in &datasets {
            out.push_str(&format!(" {d} Hits@1 | {d} Acc |"));
            rule.push_str("---:|---:|");
        }
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for label in labels {
            out.push_str(&format!("| {label} |"));
            for d in &datasets {
                match self.row(label, d) {
                    Some(r) => out.push_str(&format!(" {:.3} | {:.3} |", r.hits_at_1, r.accuracy)),
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes `report.md` and `report.json` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let md = dir.join("report.md");
        let json = dir.join("report.json");
        std::fs::write(&md, self.to_markdown())?;
        std::fs::write(&json, self.to_json())?;
        Ok((md, json))
    }
}
