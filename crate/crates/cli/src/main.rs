use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forge_core::filter::FilterConfig;
use forge_core::overlay::OverlayConfig;
use forge_core::pipeline::{self, BucketQuantiles, PipelineConfig, SourceSpec, Stage, StageReport, TaskSource};
use forge_core::resolution::{Mode, ResolutionPolicy};
use forge_core::rlvr::sim::SimConfig;
use forge_core::rlvr::CurriculumConfig;
use forge_core::schema::read_manifest;
use forge_core::{EntropyConfig, Error, Result};

/// GUI grounding dataset toolkit.
#[derive(Parser)]
#[command(name = "forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw annotation files into a JSONL manifest.
    Ingest(IngestArgs),
    /// Drop samples whose target is not covered by detected elements.
    Filter(FilterArgs),
    /// Score layout entropy and tag difficulty buckets.
    Entropy(EntropyArgs),
    /// Composite window assets onto backgrounds.
    Synth(SynthArgs),
    /// Apply a resolution cap to every sample.
    Resize(ResizeArgs),
    /// Run the GRPO simulator and write a training log.
    RlSim(RlSimArgs),
    /// Score point predictions against a benchmark.
    Eval(EvalArgs),
    /// Run configured stages in order.
    Pipeline(PipelineArgs),
    /// Summarize a manifest.
    Stats(StatsArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Adapter per input, in order; a single adapter applies to all inputs.
    #[arg(long, required = true)]
    adapter: Vec<String>,
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    reject: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    detections_dir: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0.04)]
    side_l: f64,
    #[arg(long, default_value = "filtered.jsonl")]
    out: PathBuf,
    #[arg(long, default_value = "filter_dropped.jsonl")]
    dropped: PathBuf,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Detection-format files whose boxes supply element centers.
    #[arg(long)]
    elements_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 16)]
    b: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    wn: f64,
    #[arg(long, default_value_t = 0.5)]
    w1d: f64,
    #[arg(long, default_value_t = 0.5)]
    w2d: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    q_easy: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    q_hard: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "entropy.jsonl")]
    reports: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    assets_dir: PathBuf,
    #[arg(long)]
    backgrounds_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "composites")]
    out_dir: PathBuf,
    #[arg(long, default_value = "synth.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ResizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    mode: Mode,
    /// Overrides the mode's default cap width.
    #[arg(long)]
    cap_w: Option<u32>,
    #[arg(long)]
    cap_h: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RlSimArgs {
    /// Task JSONL file, or a number of synthetic tasks.
    #[arg(long, default_value = "10")]
    tasks: String,
    #[arg(long, default_value_t = 8)]
    g: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Total steps; the curriculum is truncated or its last stage stretched.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "easy:50,medium:50,hard:100")]
    curriculum: String,
    #[arg(long, default_value = "training_log.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated subset of ingest,filter,entropy,synth,resize,rl-sim,eval.
    #[arg(long, default_value = "")]
    stages: String,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    json: bool,
}

fn ingest(a: IngestArgs) -> Result<StageReport> {
    let adapters = match a.adapter.len() {
        1 => vec![a.adapter[0].clone(); a.input.len()],
        n if n == a.input.len() => a.adapter,
        n => {
            return Err(Error::Validation(format!(
                "{n} adapters for {} inputs; give one adapter or one per input",
                a.input.len()
            )))
        }
    };
    let sources: Vec<SourceSpec> = adapters
        .into_iter()
        .zip(a.input)
        .map(|(adapter, path)| SourceSpec { adapter, path })
        .collect();
    pipeline::run_ingest(&sources, &a.out, &a.reject)
}

fn entropy(a: EntropyArgs) -> Result<StageReport> {
    let cfg = EntropyConfig {
        directions: a.d,
        bins: a.b,
        grid: a.m,
        w_n: a.wn,
        w_1d: a.w1d,
        w_2d: a.w2d,
    };
    let q = BucketQuantiles {
        q_easy: a.q_easy,
        q_hard: a.q_hard,
    };
    pipeline::run_entropy(&a.manifest, a.elements_dir.as_deref(), &cfg, &q, &a.out, &a.reports)
}

fn synth(a: SynthArgs) -> Result<StageReport> {
    let cfg = OverlayConfig {
        k_windows: a.k,
        ..OverlayConfig::default()
    };
    pipeline::run_synth(&a.assets_dir, &a.backgrounds_dir, &cfg, a.count, a.seed, &a.out_dir, &a.out)
}

fn resize(a: ResizeArgs) -> Result<StageReport> {
    let mut policy = ResolutionPolicy::default();
    let cap = match a.mode {
        Mode::Train => &mut policy.train_cap,
        Mode::Infer => &mut policy.infer_cap,
    };
    if let Some(w) = a.cap_w {
        cap.0 = w;
    }
    if let Some(h) = a.cap_h {
        cap.1 = h;
    }
    pipeline::run_resize(&a.manifest, a.mode, &policy, &a.out)
}

fn rl_sim(a: RlSimArgs) -> Result<StageReport> {
    let tasks = match a.tasks.parse::<usize>() {
        Ok(n) => TaskSource::Synthetic(n),
        Err(_) => TaskSource::File(PathBuf::from(&a.tasks)),
    };
    let mut curriculum = CurriculumConfig::parse(&a.curriculum)?;
    if let Some(steps) = a.steps {
        curriculum = curriculum.with_total_steps(steps);
    }
    let cfg = SimConfig {
        group_size: a.g,
        epsilon: a.epsilon,
        seed: a.seed,
        ..SimConfig::default()
    };
    pipeline::run_rl_sim(&tasks, &curriculum, &cfg, &a.out)
}

fn run(cli: Cli) -> Result<()> {
    let report = match cli.command {
        Command::Ingest(a) => ingest(a)?,
        Command::Filter(a) => {
            let cfg = FilterConfig {
                tau: a.tau,
                side_l: a.side_l,
            };
            pipeline::run_filter(&a.manifest, &a.detections_dir, &cfg, &a.out, &a.dropped)?
        }
        Command::Entropy(a) => entropy(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Resize(a) => resize(a)?,
        Command::RlSim(a) => rl_sim(a)?,
        Command::Eval(a) => {
            let r = pipeline::run_eval(&a.bench, &a.preds, &a.report, &a.csv)?;
            print!("{}", std::fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?);
            r
        }
        Command::Pipeline(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let stages = Stage::parse_list(&a.stages)?;
            for r in pipeline::run_pipeline(&cfg, &stages)? {
                println!("{r}");
            }
            return Ok(());
        }
        Command::Stats(a) => {
            let summary = pipeline::stats(&read_manifest(&a.manifest)?);
            if a.json {
                println!("{}", summary.to_json());
            } else {
                print!("{}", summary.to_text());
            }
            return Ok(());
        }
    };
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
