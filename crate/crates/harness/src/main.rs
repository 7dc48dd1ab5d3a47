use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reconf::backend::{resolve_spec, BackendSpec, ENV_ANSWERER_URL, ENV_REPHRASER_URL};
use reconf::report::{emit_report, read_summary, replay};
use reconf::runner::{generate_rephrasings, DEFAULT_MAX_IN_FLIGHT};
use reconf::{compare_logits_oracle, load_arc_jsonl, run_evaluation, sweep_draws, RunConfig, ToyWorld};
use reconf_core::rephrase::TemplateSet;
use reconf_core::stats::{logistic_fit_check, logistic_quantile, sample_logistic};
use reconf_core::verify::{verify_prop1, verify_prop2};
use reconf_core::{DecodeConfig, LatentToyModel64, LogisticParams64, Strategy, StrategyKind};

#[derive(Parser)]
#[command(
    name = "reconf",
    version,
    about = "Confidence from rephrased multiple-choice queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a dataset and write reports.
    Run(RunArgs),
    /// Emit rephrased queries only, as JSONL.
    Rephrase(RephraseArgs),
    /// Recompute the summary from a raw draw JSONL.
    Metrics(MetricsArgs),
    /// One run at the largest draw count, reports for every prefix.
    Sweep(SweepArgs),
    /// Toy-model checks.
    Simulate(SimulateArgs),
    /// Rephrase ensemble vs. softmax of the toy logits.
    CompareLogits(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeMode {
    Top1,
    Topk,
    Temperature,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// ARC-format JSONL.
    #[arg(long)]
    dataset: PathBuf,
    /// reword, rephrase, paraphrase, expansion, hint or identity.
    #[arg(long, default_value = "rephrase")]
    strategy: StrategyKind,
    /// Rephraser sampling temperature.
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 10)]
    draws: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// toy:<world.json>, mock:<fixtures.jsonl> or an http(s) base URL.
    #[arg(long)]
    rephraser_url: Option<String>,
    #[arg(long)]
    answerer_url: Option<String>,
    /// Model name sent to remote endpoints.
    #[arg(long, env = "RECONF_MODEL")]
    model: Option<String>,
    /// Directory with template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value = "top1")]
    decode: DecodeMode,
    #[arg(long, default_value_t = 40)]
    k: u32,
    /// Answerer temperature for `--decode temperature`.
    #[arg(long, default_value_t = 1.0)]
    answer_temp: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RephraseArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output JSONL; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    raw: PathBuf,
    /// Summary whose config is carried over.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated draw counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    draws_list: Vec<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(subcommand)]
    what: Simulation,
}

#[derive(Subcommand)]
enum Simulation {
    /// Majority frequency vs. softmax under unit rephrasing noise.
    Prop1 {
        #[arg(long, default_value_t = 3f64.ln())]
        gap: f64,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tempering under combined decoding and rephrasing noise.
    Prop2 {
        /// Softmax probability of A.
        #[arg(long, default_value_t = 0.6)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        s_topk: f64,
        #[arg(long, default_value_t = 1.0)]
        s_rephrase: f64,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// KS check of logistic(shift, 1) samples against logistic(0, 1).
    Ks {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a toy world and its ARC-format dataset.
    World(WorldArgs),
}

#[derive(Args, Clone)]
struct WorldArgs {
    #[arg(long, default_value_t = 500)]
    questions: usize,
    /// Gaps are uniform on [-gap_range, gap_range].
    #[arg(long, default_value_t = 4.0)]
    gap_range: f64,
    #[arg(long, default_value_t = 1.0)]
    s_rephrase: f64,
    #[arg(long, default_value_t = 0.0)]
    s_topk: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes world.json and dataset.jsonl here.
    #[arg(long, default_value = "toy")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Existing toy world; generated from the flags below when absent.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    questions: usize,
    #[arg(long, default_value_t = 4.0)]
    gap_range: f64,
    #[arg(long, default_value_t = 1.0)]
    s_rephrase: f64,
    #[arg(long, default_value = "reword")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 1000)]
    draws: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn decode_config(args: &RunArgs) -> DecodeConfig {
    match args.decode {
        DecodeMode::Top1 => DecodeConfig::Top1,
        DecodeMode::Topk => DecodeConfig::TopK { k: args.k },
        DecodeMode::Temperature => DecodeConfig::Temperature {
            temperature: args.answer_temp,
        },
    }
}

struct Prepared {
    cfg: RunConfig,
    questions: Vec<reconf_core::Question>,
    templates: TemplateSet,
    rephraser: std::sync::Arc<dyn reconf_client::CompletionBackend>,
    answerer: std::sync::Arc<dyn reconf_client::CompletionBackend>,
}

fn prepare(p: &PipelineArgs, decode: DecodeConfig) -> Result<Prepared> {
    let dataset = load_arc_jsonl(&p.dataset)?;
    if dataset.skipped > 0 {
        log::warn!("skipped {} invalid lines in {}", dataset.skipped, p.dataset.display());
    }
    let templates = match &p.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::default(),
    };
    let answerer_spec = resolve_spec(p.answerer_url.as_deref(), ENV_ANSWERER_URL)?;
    // the rephraser defaults to another handle on the answering endpoint
    let rephraser_spec = resolve_spec(p.rephraser_url.as_deref(), ENV_REPHRASER_URL).unwrap_or(answerer_spec.clone());
    let mut cfg = RunConfig::new(Strategy::new(p.strategy, p.temp), decode, p.draws, p.seed);
    cfg.dataset = p.dataset.display().to_string();
    cfg.rephraser = rephraser_spec.clone();
    cfg.answerer = answerer_spec.clone();
    cfg.max_in_flight = p.max_in_flight;
    Ok(Prepared {
        rephraser: BackendSpec::parse(&rephraser_spec)?.build(p.model.as_deref())?,
        answerer: BackendSpec::parse(&answerer_spec)?.build(p.model.as_deref())?,
        cfg,
        questions: dataset.questions,
        templates,
    })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut prep = prepare(&args.pipeline, decode_config(args))?;
    prep.cfg.out_dir = Some(args.out.clone());
    let record = run_evaluation(
        &prep.cfg,
        &prep.questions,
        &prep.templates,
        &*prep.rephraser,
        &*prep.answerer,
    )?;
    let paths = emit_report(&record, &args.out)?;
    info!("wrote {}", paths.summary.display());
    print_json(&record.evaluation.report)
}

fn cmd_rephrase(args: &RephraseArgs) -> Result<()> {
    let prep = prepare(&args.pipeline, DecodeConfig::Top1)?;
    let queries = generate_rephrasings(&prep.cfg, &prep.questions, &prep.templates, &*prep.rephraser)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for q in &queries {
        serde_json::to_writer(&mut out, q)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let config = match &args.summary {
        Some(path) => read_summary(path)?.config,
        None => None,
    };
    let summary = replay(&args.raw, config)?;
    match &args.out {
        Some(path) => fs::write(path, summary.to_json()).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", summary.to_json()),
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let Some(&max) = args.draws_list.iter().max() else {
        bail!("--draws-list is empty");
    };
    let mut prep = prepare(&args.run.pipeline, decode_config(&args.run))?;
    prep.cfg.num_draws = max;
    let record = run_evaluation(
        &prep.cfg,
        &prep.questions,
        &prep.templates,
        &*prep.rephraser,
        &*prep.answerer,
    )?;
    emit_report(&record, &args.run.out)?;
    let rows = sweep_draws(&record, &args.draws_list)?;
    fs::write(args.run.out.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
    print_json(&rows)
}

fn world_from(args: &WorldArgs) -> ToyWorld {
    ToyWorld::generate(args.questions, args.gap_range, args.s_rephrase, args.s_topk, args.seed)
}

fn write_world(world: &ToyWorld, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    world.save(&dir.join("world.json"))?;
    let lines: Vec<String> = world.dataset().iter().map(reconf::dataset::to_arc_line).collect();
    fs::write(dir.join("dataset.jsonl"), lines.join("\n") + "\n")?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    match &args.what {
        Simulation::Prop1 { gap, draws, seed } => print_json(&verify_prop1(
            &LatentToyModel64::with_gap(*gap, 1.0, 0.0),
            *draws,
            *seed,
        )?),
        Simulation::Prop2 {
            p,
            s_topk,
            s_rephrase,
            draws,
            seed,
        } => {
            let gap = logistic_quantile(*p, LogisticParams64::standard())?;
            let model = LatentToyModel64::with_gap(gap, *s_rephrase, *s_topk);
            print_json(&verify_prop2(&model, *draws, *seed)?)
        }
        Simulation::Ks { n, shift, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let params = LogisticParams64::new(*shift, 1.0)?;
            let samples: Vec<f64> = (0..*n).map(|_| sample_logistic(&mut rng, params)).collect();
            print_json(&logistic_fit_check(&samples)?)
        }
        Simulation::World(w) => {
            let world = world_from(w);
            write_world(&world, &w.out)?;
            println!("wrote {} questions to {}", world.questions.len(), w.out.display());
            Ok(())
        }
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let world = match &args.world {
        Some(path) => ToyWorld::load(path)?,
        None => ToyWorld::generate(args.questions, args.gap_range, args.s_rephrase, 0.0, args.seed),
    };
    let mut cfg = RunConfig::new(
        Strategy::new(args.strategy, 1.0),
        DecodeConfig::Top1,
        args.draws,
        args.seed,
    );
    cfg.max_in_flight = args.max_in_flight;
    let (_, comparison) = compare_logits_oracle(&cfg, &world)?;
    print_json(&comparison)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Rephrase(args) => cmd_rephrase(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::CompareLogits(args) => cmd_compare(args),
    }
}
