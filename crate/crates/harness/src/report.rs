//! Run artifacts: summary JSON, per-question CSV, reliability-bin CSV and raw
//! draw JSONL. Timing goes to its own file so the rest stays deterministic.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use reconf_core::{AnswerRecord, CalibrationReport64};
use serde::{Deserialize, Serialize};

use crate::runner::{Evaluation, FailureTally, RunConfig, RunRecord};

pub const SUMMARY_FILE: &str = "summary.json";
pub const QUESTIONS_FILE: &str = "questions.csv";
pub const BINS_FILE: &str = "bins.csv";
pub const RAW_FILE: &str = "raw.jsonl";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub num_questions: usize,
    pub num_scored: usize,
    pub num_draws: usize,
    pub failures: FailureTally,
    pub report: CalibrationReport64,
}

impl RunSummary {
    pub fn new(config: Option<RunConfig>, evaluation: &Evaluation) -> Self {
        RunSummary {
            config,
            num_questions: evaluation.questions.len(),
            num_scored: evaluation.questions.iter().filter(|q| q.gold.is_some()).count(),
            num_draws: evaluation.num_draws,
            failures: evaluation.failures,
            report: evaluation.report.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub questions: PathBuf,
    pub bins: PathBuf,
    pub raw: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ReportPaths {
            summary: dir.join(SUMMARY_FILE),
            questions: dir.join(QUESTIONS_FILE),
            bins: dir.join(BINS_FILE),
            raw: dir.join(RAW_FILE),
        }
    }
}

pub fn write_raw_jsonl(path: &Path, records: &[AnswerRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_jsonl(path: &Path) -> Result<Vec<AnswerRecord>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(records)
}

pub fn write_questions_csv(path: &Path, evaluation: &Evaluation) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "question_id",
        "num_choices",
        "valid_draws",
        "predicted",
        "confidence",
        "gold",
        "correct",
    ])?;
    for q in &evaluation.questions {
        let s = &q.summary;
        w.write_record([
            s.question_id.clone(),
            s.num_choices.to_string(),
            s.valid_draws.to_string(),
            s.predicted.to_string(),
            s.confidence.to_string(),
            q.gold.map(|g| g.to_string()).unwrap_or_default(),
            q.correct().map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bins_csv(path: &Path, report: &CalibrationReport64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["lower", "upper", "count", "mean_confidence", "mean_accuracy"])?;
    for b in &report.bins {
        w.write_record([
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            b.mean_confidence.to_string(),
            b.mean_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all artifacts of a run into `dir`, creating it if needed.
pub fn emit_report(record: &RunRecord, dir: &Path) -> Result<ReportPaths> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = ReportPaths::in_dir(dir);
    let summary = RunSummary::new(Some(record.config.clone()), &record.evaluation);
    fs::write(&paths.summary, summary.to_json()).with_context(|| format!("writing {}", paths.summary.display()))?;
    write_questions_csv(&paths.questions, &record.evaluation)?;
    write_bins_csv(&paths.bins, &record.evaluation.report)?;
    write_raw_jsonl(&paths.raw, &record.records)?;
    let timing = serde_json::json!({ "elapsed_seconds": record.elapsed.as_secs_f64() });
    fs::write(dir.join(TIMING_FILE), timing.to_string())?;
    Ok(paths)
}

/// Recomputes a summary from persisted draws, carrying over `config`.
pub fn replay(raw: &Path, config: Option<RunConfig>) -> Result<RunSummary> {
    let records = read_raw_jsonl(raw)?;
    let evaluation = crate::runner::evaluate_records(&records)?;
    Ok(RunSummary::new(config, &evaluation))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
