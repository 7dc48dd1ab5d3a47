//! Run orchestration: rephrase, query, extract, aggregate, score.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use reconf_client::{CompletionBackend, CompletionRequest, Purpose, RequestContext};
use reconf_core::infer::{aggregate, extract_answer};
use reconf_core::metrics::{calibration_report, MetricsError, DEFAULT_BINS, DEFAULT_TACE_THRESHOLD};
use reconf_core::rephrase::{assemble_rephrased_question, question_text, PromptError, TemplateSet};
use reconf_core::{
    AnswerRecord, CalibrationReport64, ChoiceLabel, DecodeConfig, DomainError, Extracted, PredictionSummary, Question,
    ScoredItem64, Strategy, StrategyKind,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{derive_seed, STREAM_ANSWER, STREAM_HINT, STREAM_REPHRASE};
use crate::world::ToyWorld;

pub const DEFAULT_NUM_DRAWS: u32 = 10;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
/// A run aborts when more than this fraction of draws hit a backend failure.
pub const MAX_FAILED_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("num_draws must be at least 1")]
    NoDraws,
    #[error("max_in_flight must be at least 1")]
    NoConcurrency,
    #[error("dataset has no questions")]
    NoQuestions,
    #[error("{failed} of {total} draws failed at the backend; aborting")]
    TooManyFailures { failed: usize, total: usize },
    #[error("no question has a gold label, nothing to score")]
    NothingToScore,
    #[error("draw count {0} is outside 1..={1}")]
    BadDrawCount(u32, u32),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Everything that determines a run's output. Concurrency and the output
/// directory are left out of the serialized form since they do not change it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub strategy: Strategy,
    pub decode: DecodeConfig,
    pub num_draws: u32,
    pub rephraser: String,
    pub answerer: String,
    pub seed: u64,
    #[serde(skip, default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl RunConfig {
    pub fn new(strategy: Strategy, decode: DecodeConfig, num_draws: u32, seed: u64) -> Self {
        RunConfig {
            dataset: String::new(),
            strategy,
            decode,
            num_draws,
            rephraser: String::new(),
            answerer: String::new(),
            seed,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.num_draws < 1 {
            return Err(RunError::NoDraws);
        }
        if self.max_in_flight < 1 {
            return Err(RunError::NoConcurrency);
        }
        self.decode.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTally {
    pub parse_failures: usize,
    pub backend_failures: usize,
}

/// Per-question outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub summary: PredictionSummary,
    pub gold: Option<ChoiceLabel>,
}

impl QuestionResult {
    pub fn correct(&self) -> Option<bool> {
        self.gold.map(|g| self.summary.is_correct(g))
    }
}

/// Scores of a set of draws, recomputable from the draws alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub questions: Vec<QuestionResult>,
    pub report: CalibrationReport64,
    pub failures: FailureTally,
    pub num_draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Ordered by question, then draw index.
    pub records: Vec<AnswerRecord>,
    pub evaluation: Evaluation,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub draws: u32,
    pub report: CalibrationReport64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsComparison {
    pub rephrase_report: CalibrationReport64,
    pub logits_report: CalibrationReport64,
    pub ece_difference: f64,
    pub auroc_difference: Option<f64>,
}

/// The query shown to the answering model for one draw, before the answer
/// template is applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawQuery {
    pub question_id: String,
    pub draw_index: u32,
    pub text: String,
}

/// Builds the query for draw `draw` of question number `q_idx`.
pub fn build_query(
    cfg: &RunConfig,
    templates: &TemplateSet,
    rephraser: &dyn CompletionBackend,
    q_idx: usize,
    q: &Question,
    draw: u32,
) -> Result<String, reconf_client::ClientError> {
    let kind = cfg.strategy.kind;
    match kind {
        StrategyKind::Identity => Ok(question_text(q)),
        StrategyKind::Hint => {
            let seed = cfg.strategy.hint_seed.unwrap_or(cfg.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_HINT, q_idx, draw));
            Ok(templates.build_hint_query(q, &mut rng).text)
        }
        _ => {
            let prompt = templates
                .build_rephrase_prompt(kind, &q.stem)
                .map_err(|e| reconf_client::ClientError::Config(e.to_string()))?;
            let temperature = cfg.strategy.rephrase_temperature;
            let decode = if temperature > 0.0 {
                DecodeConfig::Temperature { temperature }
            } else {
                DecodeConfig::Top1
            };
            let req = CompletionRequest::new(prompt, decode)
                .with_max_tokens(256)
                .with_seed(derive_seed(cfg.seed, STREAM_REPHRASE, q_idx, draw))
                .with_context(RequestContext {
                    purpose: Purpose::Rephrase,
                    question_id: Some(q.id.clone()),
                    draw_index: draw,
                    rephrased: false,
                });
            let stem = rephraser.complete(&req)?;
            let stem = stem.trim();
            if stem.is_empty() {
                debug!("{} draw {draw}: empty rephrasing, keeping the original stem", q.id);
                Ok(question_text(q))
            } else {
                Ok(assemble_rephrased_question(stem, q))
            }
        }
    }
}

fn run_draw(
    cfg: &RunConfig,
    templates: &TemplateSet,
    rephraser: &dyn CompletionBackend,
    answerer: &dyn CompletionBackend,
    q_idx: usize,
    q: &Question,
    draw: u32,
) -> Result<AnswerRecord, RunError> {
    let mut record = AnswerRecord {
        question_id: q.id.clone(),
        draw_index: draw,
        num_choices: q.num_choices(),
        gold: q.gold,
        rephrased_prompt: String::new(),
        raw_completion: String::new(),
        extracted: Extracted::ParseFailure,
        backend_error: None,
    };
    let query = match build_query(cfg, templates, rephraser, q_idx, q, draw) {
        Ok(text) => text,
        Err(e) => {
            warn!("{} draw {draw}: rephraser failed: {e}", q.id);
            record.backend_error = Some(format!("rephraser: {e}"));
            return Ok(record);
        }
    };
    record.rephrased_prompt = templates.build_answer_prompt(&query)?;
    let req = CompletionRequest::new(record.rephrased_prompt.clone(), cfg.decode)
        .with_seed(derive_seed(cfg.seed, STREAM_ANSWER, q_idx, draw))
        .with_context(RequestContext {
            purpose: Purpose::Answer,
            question_id: Some(q.id.clone()),
            draw_index: draw,
            rephrased: cfg.strategy.kind.transforms_query(),
        });
    match answerer.complete(&req) {
        Ok(text) => {
            record.extracted = extract_answer(&text, q.num_choices());
            record.raw_completion = text;
        }
        Err(e) => {
            warn!("{} draw {draw}: answerer failed: {e}", q.id);
            record.backend_error = Some(format!("answerer: {e}"));
        }
    }
    Ok(record)
}

fn pool(max_in_flight: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))
}

/// Runs every (question, draw) pair with at most `cfg.max_in_flight` requests
/// in flight. Seeds depend only on (run seed, question position, draw index),
/// so the first `m` draws are the same whatever `num_draws` is.
pub fn run_evaluation(
    cfg: &RunConfig,
    questions: &[Question],
    templates: &TemplateSet,
    rephraser: &dyn CompletionBackend,
    answerer: &dyn CompletionBackend,
) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    if questions.is_empty() {
        return Err(RunError::NoQuestions);
    }
    let started = Instant::now();
    info!(
        "running {} questions x {} draws, strategy {}, decode {}, answerer {}",
        questions.len(),
        cfg.num_draws,
        cfg.strategy.kind,
        cfg.decode.mode_name(),
        answerer.describe()
    );
    let tasks: Vec<(usize, u32)> = (0..questions.len())
        .flat_map(|q| (0..cfg.num_draws).map(move |d| (q, d)))
        .collect();
    let records = pool(cfg.max_in_flight)?.install(|| {
        tasks
            .par_iter()
            .map(|&(q_idx, draw)| run_draw(cfg, templates, rephraser, answerer, q_idx, &questions[q_idx], draw))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let failed = records.iter().filter(|r| r.backend_error.is_some()).count();
    if failed as f64 > MAX_FAILED_FRACTION * records.len() as f64 {
        return Err(RunError::TooManyFailures {
            failed,
            total: records.len(),
        });
    }
    let evaluation = evaluate_records(&records)?;
    Ok(RunRecord {
        config: cfg.clone(),
        records,
        evaluation,
        elapsed: started.elapsed(),
    })
}

/// Groups draws by question (first-appearance order), aggregates and scores.
/// This is the whole path from persisted draws to metrics, used by runs and
/// by replay alike.
pub fn evaluate_records(records: &[AnswerRecord]) -> Result<Evaluation, RunError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<AnswerRecord>> = HashMap::new();
    for r in records {
        let group = groups.entry(r.question_id.as_str()).or_insert_with(|| {
            order.push(r.question_id.as_str());
            Vec::new()
        });
        group.push(r.clone());
    }
    if order.is_empty() {
        return Err(RunError::NoQuestions);
    }
    let mut questions = Vec::with_capacity(order.len());
    for id in &order {
        let mut group = groups.remove(id).expect("grouped above");
        group.sort_by_key(|r| r.draw_index);
        questions.push(QuestionResult {
            summary: aggregate(&group)?,
            gold: group[0].gold,
        });
    }
    let items: Vec<ScoredItem64> = questions.iter().filter_map(|q| q.summary.to_scored(q.gold)).collect();
    if items.is_empty() {
        return Err(RunError::NothingToScore);
    }
    let report = calibration_report(&items, DEFAULT_BINS, DEFAULT_BINS, DEFAULT_TACE_THRESHOLD)?;
    let failures = FailureTally {
        parse_failures: records
            .iter()
            .filter(|r| r.backend_error.is_none() && r.extracted == Extracted::ParseFailure)
            .count(),
        backend_failures: records.iter().filter(|r| r.backend_error.is_some()).count(),
    };
    Ok(Evaluation {
        questions,
        report,
        failures,
        num_draws: records.len(),
    })
}

/// Reports for each draw count, reusing the first `m` draws of every question.
pub fn sweep_draws(record: &RunRecord, draw_counts: &[u32]) -> Result<Vec<SweepRow>, RunError> {
    let max = record.config.num_draws;
    draw_counts
        .iter()
        .map(|&m| {
            if m < 1 || m > max {
                return Err(RunError::BadDrawCount(m, max));
            }
            let prefix: Vec<AnswerRecord> = record.records.iter().filter(|r| r.draw_index < m).cloned().collect();
            Ok(SweepRow {
                draws: m,
                report: evaluate_records(&prefix)?.report,
            })
        })
        .collect()
}

/// Scores the rephrase pipeline and the toy logits side by side on the same
/// questions. The toy world serves as both rephraser and answerer.
pub fn compare_logits_oracle(cfg: &RunConfig, world: &ToyWorld) -> Result<(RunRecord, LogitsComparison), RunError> {
    let backend = world.backend();
    let run = run_evaluation(cfg, &world.dataset(), &TemplateSet::default(), &backend, &backend)?;
    let logits_report = calibration_report(
        &world.logits_items(),
        DEFAULT_BINS,
        DEFAULT_BINS,
        DEFAULT_TACE_THRESHOLD,
    )?;
    let rephrase_report = run.evaluation.report.clone();
    let comparison = LogitsComparison {
        ece_difference: (rephrase_report.ece - logits_report.ece).abs(),
        auroc_difference: rephrase_report
            .auroc
            .zip(logits_report.auroc)
            .map(|(a, b)| (a - b).abs()),
        rephrase_report,
        logits_report,
    };
    Ok((run, comparison))
}

/// Rephrasings only, without querying the answering model.
pub fn generate_rephrasings(
    cfg: &RunConfig,
    questions: &[Question],
    templates: &TemplateSet,
    rephraser: &dyn CompletionBackend,
) -> Result<Vec<DrawQuery>, RunError> {
    cfg.validate()?;
    let tasks: Vec<(usize, u32)> = (0..questions.len())
        .flat_map(|q| (0..cfg.num_draws).map(move |d| (q, d)))
        .collect();
    pool(cfg.max_in_flight)?.install(|| {
        tasks
            .par_iter()
            .map(|&(q_idx, draw)| {
                let q = &questions[q_idx];
                let text = build_query(cfg, templates, rephraser, q_idx, q, draw).unwrap_or_else(|e| {
                    warn!("{} draw {draw}: rephraser failed: {e}", q.id);
                    String::new()
                });
                Ok(DrawQuery {
                    question_id: q.id.clone(),
                    draw_index: draw,
                    text,
                })
            })
            .collect()
    })
}
