//! Stage runners, the shared TOML configuration and manifest statistics.
//!
//! Every stage reads and writes files; outputs go through [`write_atomic`] so
//! a failed or interrupted stage never leaves a half-written file under its
//! final name. `run_pipeline` chains stages inside one work directory and
//! appends a JSON line per stage to `pipeline.log.jsonl`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::entropy::{bucket_dataset, layout_entropy, priority_order};
use crate::eval::{read_bench, read_predictions, render_table, score, Prediction};
use crate::filter::{filter_dataset, load_detections_dir, DropReason, FilterConfig};
use crate::ingest::{AdapterRegistry, IngestOutcome};
use crate::overlay::{load_assets_dir, load_backgrounds_dir, synthesize, OverlayConfig};
use crate::resolution::{apply_policy, Mode, ResolutionPolicy};
use crate::rlvr::sim::{read_tasks, simulate_training, synthetic_tasks, SimConfig};
use crate::rlvr::{CurriculumConfig, PassRateWindow};
use crate::schema::{read_manifest, write_manifest, DatasetManifest, Difficulty, TaskKind};
use crate::{DetectionSet, EntropyConfig, Error, Point, Result};

/// Writes `bytes` to a temp file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = String::new();
    for r in rows {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Counts and output files of one stage run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub counts: BTreeMap<String, usize>,
    pub outputs: Vec<PathBuf>,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    fn count(mut self, key: &str, n: usize) -> Self {
        self.counts.insert(key.to_string(), n);
        self
    }

    fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }
}

impl std::fmt::Display for StageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:", self.stage)?;
        for (k, v) in &self.counts {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub adapter: String,
    pub path: PathBuf,
}

/// Ingests each source in order into one manifest.
pub fn run_ingest(sources: &[SourceSpec], out: &Path, reject_out: &Path) -> Result<StageReport> {
    let registry = AdapterRegistry::builtin();
    let mut outcome = IngestOutcome::new();
    for src in sources {
        let adapter = registry.get(&src.adapter)?;
        let mut f = std::fs::File::open(&src.path).map_err(|e| Error::io(&src.path, e))?;
        outcome.ingest(adapter, &mut f)?;
    }
    write_manifest(&outcome.manifest, out)?;
    write_jsonl(reject_out, &outcome.rejections)?;
    Ok(StageReport::new("ingest")
        .count("samples", outcome.manifest.len())
        .count("rejected", outcome.rejections.len())
        .output(out)
        .output(reject_out))
}

#[derive(Serialize)]
struct DropLine<'a> {
    id: &'a str,
    reason: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

pub fn run_filter(
    manifest: &Path,
    detections_dir: &Path,
    cfg: &FilterConfig,
    out: &Path,
    dropped_out: &Path,
) -> Result<StageReport> {
    cfg.validate()?;
    let input = read_manifest(manifest)?;
    let dets = load_detections_dir(detections_dir)?;
    let outcome = filter_dataset(&input, &dets, cfg)?;
    let mut lines: Vec<DropLine> = outcome
        .dropped
        .iter()
        .map(|d| DropLine {
            id: &d.sample.id,
            reason: match d.reason {
                DropReason::LowCoverage(_) => "low_coverage",
                DropReason::Degenerate => "degenerate",
            },
            score: d.score(),
        })
        .collect();
    lines.extend(outcome.missing.samples().iter().map(|s| DropLine {
        id: &s.id,
        reason: "no_detections",
        score: None,
    }));
    write_manifest(&outcome.kept, out)?;
    write_jsonl(dropped_out, &lines)?;
    Ok(StageReport::new("filter")
        .count("input", input.len())
        .count("kept", outcome.kept.len())
        .count("dropped", outcome.dropped.len())
        .count("missing_detections", outcome.missing.len())
        .output(out)
        .output(dropped_out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BucketQuantiles {
    pub q_easy: f64,
    pub q_hard: f64,
}

impl Default for BucketQuantiles {
    fn default() -> Self {
        Self {
            q_easy: 1.0 / 3.0,
            q_hard: 2.0 / 3.0,
        }
    }
}

impl BucketQuantiles {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.q_easy && self.q_easy < self.q_hard && self.q_hard < 1.0) {
            return Err(Error::Config {
                path: "buckets.q_easy".into(),
                msg: format!("need 0 < q_easy < q_hard < 1, got ({}, {})", self.q_easy, self.q_hard),
            });
        }
        Ok(())
    }
}

/// Scores each image's layout, buckets images by entropy quantiles and tags
/// every sample with its image's bucket.
///
/// Centers come from the element boxes in `elements_dir` (detection JSON
/// files) when given, otherwise from the manifest's own annotations. The
/// report file lists images hardest first, then by pixel count.
pub fn run_entropy(
    manifest: &Path,
    elements_dir: Option<&Path>,
    cfg: &EntropyConfig,
    quantiles: &BucketQuantiles,
    out: &Path,
    report_out: &Path,
) -> Result<StageReport> {
    cfg.validate()?;
    quantiles.validate()?;
    let input = read_manifest(manifest)?;
    let elements: Option<HashMap<String, DetectionSet>> = elements_dir.map(load_detections_dir).transpose()?;

    let mut images: BTreeMap<String, ((u32, u32), Vec<Point>)> = BTreeMap::new();
    for s in input.samples() {
        let entry = images.entry(s.image_id()).or_insert((s.image_size, Vec::new()));
        if elements.is_none() {
            entry.1.push(s.annotation.center());
        }
    }
    if let Some(el) = &elements {
        for (id, entry) in images.iter_mut() {
            if let Some(d) = el.get(id) {
                entry.1 = d.boxes.iter().map(|b| b.center()).collect();
            }
        }
    }
    let mut reports = images
        .iter()
        .map(|(id, (size, centers))| layout_entropy(centers, id, *size, cfg))
        .collect::<Result<Vec<_>>>()?;
    bucket_dataset(&mut reports, (quantiles.q_easy, quantiles.q_hard))?;
    let bucket_of: HashMap<&str, Difficulty> = reports
        .iter()
        .filter_map(|r| r.bucket.map(|b| (r.image_id.as_str(), b)))
        .collect();

    let mut tagged = DatasetManifest::new();
    for s in input.samples() {
        let mut s = s.clone();
        s.stage_tags.retain(|t| !t.starts_with("bucket:"));
        if let Some(b) = bucket_of.get(s.image_id().as_str()) {
            s.stage_tags.insert(b.tag());
            s.stage_tags.insert("bucketed".into());
        }
        tagged.push(s)?;
    }
    let ordered: Vec<_> = priority_order(&reports).into_iter().map(|i| &reports[i]).collect();
    write_manifest(&tagged, out)?;
    write_jsonl(report_out, &ordered)?;
    let mut report = StageReport::new("entropy")
        .count("input", input.len())
        .count("samples", tagged.len())
        .count("images", reports.len())
        .count("degenerate", reports.iter().filter(|r| r.degenerate).count());
    for b in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let n = reports.iter().filter(|r| r.bucket == Some(b)).count();
        report = report.count(&format!("images_{}", b.as_str()), n);
    }
    Ok(report.output(out).output(report_out))
}

#[allow(clippy::too_many_arguments)]
pub fn run_synth(
    assets_dir: &Path,
    backgrounds_dir: &Path,
    cfg: &OverlayConfig,
    count: usize,
    seed: u64,
    out_dir: &Path,
    out: &Path,
) -> Result<StageReport> {
    cfg.validate()?;
    let assets = load_assets_dir(assets_dir)?;
    let backgrounds = load_backgrounds_dir(backgrounds_dir)?;
    let outcome = synthesize(&assets, &backgrounds, count, seed, cfg, out_dir)?;
    write_manifest(&outcome.manifest, out)?;
    Ok(StageReport::new("synth")
        .count("compositions", count)
        .count("samples", outcome.manifest.len())
        .count("empty_yield", outcome.empty_yield.len())
        .count("dropped_annotations", outcome.dropped)
        .output(out_dir)
        .output(out))
}

pub fn run_resize(manifest: &Path, mode: Mode, policy: &ResolutionPolicy, out: &Path) -> Result<StageReport> {
    policy.validate()?;
    let input = read_manifest(manifest)?;
    let mut resized = DatasetManifest::new();
    let mut changed = 0;
    for s in input.samples() {
        let r = apply_policy(s, mode, policy);
        if r.sample.image_size != s.image_size {
            changed += 1;
        }
        resized.push(r.sample)?;
    }
    write_manifest(&resized, out)?;
    Ok(StageReport::new("resize")
        .count("samples", resized.len())
        .count("downscaled", changed)
        .output(out))
}

/// Where the simulator's tasks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSource {
    File(PathBuf),
    Synthetic(usize),
}

pub fn run_rl_sim(
    tasks: &TaskSource,
    curriculum: &CurriculumConfig,
    cfg: &SimConfig,
    out_csv: &Path,
) -> Result<StageReport> {
    cfg.validate()?;
    curriculum.validate()?;
    let tasks = match tasks {
        TaskSource::File(p) => read_tasks(&read_text(p)?)?,
        TaskSource::Synthetic(n) => synthetic_tasks(*n, cfg.seed),
    };
    let log = simulate_training(&tasks, curriculum, cfg)?;
    write_atomic(out_csv, log.to_csv().as_bytes())?;
    let n = log.rows.len();
    let w = n.min(20);
    let pct = |v: f64| (v * 1000.0).round() as usize;
    Ok(StageReport::new("rl-sim")
        .count("tasks", tasks.len())
        .count("steps", n)
        .count("first20_reward_permille", pct(log.mean_reward(0..w)))
        .count("last20_reward_permille", pct(log.mean_reward(n - w..n)))
        .output(out_csv))
}

pub fn run_eval(bench: &Path, preds: &Path, report_out: &Path, csv_out: &Path) -> Result<StageReport> {
    let records = read_bench(&read_text(bench)?)?;
    let owned = read_predictions(&read_text(preds)?)?;
    let preds: Vec<Prediction> = owned
        .iter()
        .map(|p| Prediction {
            id: &p.id,
            point: p.point,
        })
        .collect();
    let table = score(&records, &preds)?;
    let rendered = render_table(&table)?;
    write_atomic(report_out, rendered.text.as_bytes())?;
    write_atomic(csv_out, rendered.csv.as_bytes())?;
    Ok(StageReport::new("eval")
        .count("records", table.total)
        .count("hits", table.hits)
        .count("predictions", preds.len())
        .output(report_out)
        .output(csv_out))
}

/// External inputs; stage outputs live under `work_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub work_dir: PathBuf,
    pub sources: Vec<SourceSpec>,
    pub detections_dir: Option<PathBuf>,
    pub elements_dir: Option<PathBuf>,
    pub assets_dir: Option<PathBuf>,
    pub backgrounds_dir: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub bench: Option<PathBuf>,
    pub preds: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub count: usize,
    pub overlay: OverlayConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            count: 100,
            overlay: OverlayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResizeSection {
    pub mode: Mode,
}

impl Default for ResizeSection {
    fn default() -> Self {
        Self { mode: Mode::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    /// Stage list such as `easy:50,medium:50,hard:100`.
    pub schedule: String,
    pub pass_rate: PassRateWindow,
    /// Synthetic task count when `paths.tasks` is unset.
    pub synthetic_tasks: usize,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        Self {
            schedule: "easy:50,medium:50,hard:100".into(),
            pass_rate: PassRateWindow::default(),
            synthetic_tasks: 10,
        }
    }
}

impl CurriculumSection {
    pub fn to_config(&self) -> Result<CurriculumConfig> {
        let mut c = CurriculumConfig::parse(&self.schedule).map_err(|e| Error::Config {
            path: "curriculum.schedule".into(),
            msg: e.to_string(),
        })?;
        c.pass_rate = self.pass_rate;
        c.validate()?;
        Ok(c)
    }
}

/// The `forge.toml` file. Unknown keys are rejected; every section is
/// optional and falls back to the module defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Threads for intra-stage parallel maps; 0 uses all cores.
    pub worker_count: usize,
    pub paths: PathsConfig,
    pub filter: FilterConfig,
    pub entropy: EntropyConfig,
    pub buckets: BucketQuantiles,
    pub resolution: ResolutionPolicy,
    pub resize: ResizeSection,
    pub synth: SynthSection,
    pub curriculum: CurriculumSection,
    /// Simulator settings; its `seed` is replaced by the top-level seed.
    pub rl: SimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            worker_count: 0,
            paths: PathsConfig {
                work_dir: PathBuf::from("work"),
                ..PathsConfig::default()
            },
            filter: FilterConfig::default(),
            entropy: EntropyConfig::default(),
            buckets: BucketQuantiles::default(),
            resolution: ResolutionPolicy::default(),
            resize: ResizeSection::default(),
            synth: SynthSection::default(),
            curriculum: CurriculumSection::default(),
            rl: SimConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML and validates every section. Relative paths are resolved
    /// against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "<config>".into()),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        let p = &mut cfg.paths;
        let rebase = |x: &mut PathBuf| {
            if x.is_relative() {
                *x = base_dir.join(&*x);
            }
        };
        rebase(&mut p.work_dir);
        for s in &mut p.sources {
            rebase(&mut s.path);
        }
        for x in [
            &mut p.detections_dir,
            &mut p.elements_dir,
            &mut p.assets_dir,
            &mut p.backgrounds_dir,
            &mut p.tasks,
            &mut p.bench,
            &mut p.preds,
        ]
        .into_iter()
        .flatten()
        {
            rebase(x);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.entropy.validate()?;
        self.buckets.validate()?;
        self.resolution.validate()?;
        self.synth.overlay.validate()?;
        self.curriculum.to_config()?;
        self.rl.validate()?;
        if self.paths.work_dir.as_os_str().is_empty() {
            return Err(Error::Config {
                path: "paths.work_dir".into(),
                msg: "must not be empty".into(),
            });
        }
        Ok(())
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.rl
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Filter,
    Entropy,
    Synth,
    Resize,
    RlSim,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Entropy,
        Stage::Synth,
        Stage::Resize,
        Stage::RlSim,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Entropy => "entropy",
            Stage::Synth => "synth",
            Stage::Resize => "resize",
            Stage::RlSim => "rl-sim",
            Stage::Eval => "eval",
        }
    }

    /// Parses a comma-separated stage list, keeping the given order.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse())
            .collect()
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown stage `{s}`")))
    }
}

/// Artifact file names inside the work directory.
pub mod artifacts {
    pub const INGESTED: &str = "ingested.jsonl";
    pub const REJECTED: &str = "ingest_rejected.jsonl";
    pub const FILTERED: &str = "filtered.jsonl";
    pub const FILTER_DROPPED: &str = "filter_dropped.jsonl";
    pub const BUCKETED: &str = "bucketed.jsonl";
    pub const ENTROPY_REPORTS: &str = "entropy.jsonl";
    pub const SYNTH: &str = "synth.jsonl";
    pub const COMPOSITES: &str = "composites";
    pub const RESIZED: &str = "resized.jsonl";
    pub const TRAINING_LOG: &str = "training_log.csv";
    pub const EVAL_REPORT: &str = "eval_report.txt";
    pub const EVAL_CSV: &str = "eval.csv";
    pub const LOG: &str = "pipeline.log.jsonl";
}

fn need_file(stage: Stage, path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Dependency {
            stage: stage.name().into(),
            artifact: path.display().to_string(),
            producer: producer.into(),
        })
    }
}

fn need_opt<'a>(stage: Stage, p: &'a Option<PathBuf>, key: &str, producer: &str) -> Result<&'a Path> {
    match p {
        Some(p) => {
            need_file(stage, p, producer)?;
            Ok(p)
        }
        None => Err(Error::Dependency {
            stage: stage.name().into(),
            artifact: format!("`paths.{key}`"),
            producer: producer.into(),
        }),
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    stage: &'a str,
    status: &'a str,
    elapsed_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn append_log(path: &Path, line: &LogLine) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", serde_json::to_string(line)?).map_err(|e| Error::io(path, e))
}

fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageReport> {
    use artifacts::*;
    let work = &cfg.paths.work_dir;
    let w = |name: &str| work.join(name);
    match stage {
        Stage::Ingest => {
            if cfg.paths.sources.is_empty() {
                return Err(Error::Dependency {
                    stage: stage.name().into(),
                    artifact: "`paths.sources`".into(),
                    producer: "an external annotation source".into(),
                });
            }
            for s in &cfg.paths.sources {
                need_file(stage, &s.path, "an external annotation source")?;
            }
            run_ingest(&cfg.paths.sources, &w(INGESTED), &w(REJECTED))
        }
        Stage::Filter => {
            need_file(stage, &w(INGESTED), "stage `ingest`")?;
            let dets = need_opt(stage, &cfg.paths.detections_dir, "detections_dir", "an external UI detector")?;
            run_filter(&w(INGESTED), dets, &cfg.filter, &w(FILTERED), &w(FILTER_DROPPED))
        }
        Stage::Entropy => {
            need_file(stage, &w(FILTERED), "stage `filter`")?;
            if let Some(el) = &cfg.paths.elements_dir {
                need_file(stage, el, "an external UI detector")?;
            }
            run_entropy(
                &w(FILTERED),
                cfg.paths.elements_dir.as_deref(),
                &cfg.entropy,
                &cfg.buckets,
                &w(BUCKETED),
                &w(ENTROPY_REPORTS),
            )
        }
        Stage::Synth => {
            let assets = need_opt(stage, &cfg.paths.assets_dir, "assets_dir", "external window assets")?;
            let bgs = need_opt(stage, &cfg.paths.backgrounds_dir, "backgrounds_dir", "external backgrounds")?;
            run_synth(
                assets,
                bgs,
                &cfg.synth.overlay,
                cfg.synth.count,
                cfg.seed,
                &w(COMPOSITES),
                &w(SYNTH),
            )
        }
        Stage::Resize => {
            let input = [BUCKETED, FILTERED, INGESTED]
                .into_iter()
                .map(w)
                .find(|p| p.exists())
                .ok_or_else(|| Error::Dependency {
                    stage: stage.name().into(),
                    artifact: w(INGESTED).display().to_string(),
                    producer: "stage `ingest`".into(),
                })?;
            run_resize(&input, cfg.resize.mode, &cfg.resolution, &w(RESIZED))
        }
        Stage::RlSim => {
            let tasks = match &cfg.paths.tasks {
                Some(p) => {
                    need_file(stage, p, "an external task list")?;
                    TaskSource::File(p.clone())
                }
                None => TaskSource::Synthetic(cfg.curriculum.synthetic_tasks),
            };
            run_rl_sim(&tasks, &cfg.curriculum.to_config()?, &cfg.sim_config(), &w(TRAINING_LOG))
        }
        Stage::Eval => {
            let bench = need_opt(stage, &cfg.paths.bench, "bench", "an external benchmark")?;
            let preds = need_opt(stage, &cfg.paths.preds, "preds", "an external model")?;
            run_eval(bench, preds, &w(EVAL_REPORT), &w(EVAL_CSV))
        }
    }
}

/// Runs `stages` in the given order, halting at the first failure.
///
/// Outputs of stages that finished before a failure stay in place.
pub fn run_pipeline(cfg: &PipelineConfig, stages: &[Stage]) -> Result<Vec<StageReport>> {
    cfg.validate()?;
    if stages.is_empty() {
        return Ok(Vec::new());
    }
    let work = &cfg.paths.work_dir;
    std::fs::create_dir_all(work).map_err(|e| Error::io(work, e))?;
    let log_path = work.join(artifacts::LOG);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;

    let mut reports = Vec::with_capacity(stages.len());
    for &stage in stages {
        let start = Instant::now();
        let res = pool.install(|| run_stage(cfg, stage));
        let elapsed_ms = start.elapsed().as_millis();
        match res {
            Ok(report) => {
                append_log(
                    &log_path,
                    &LogLine {
                        stage: stage.name(),
                        status: "ok",
                        elapsed_ms,
                        report: Some(&report),
                        error: None,
                    },
                )?;
                reports.push(report);
            }
            Err(e) => {
                append_log(
                    &log_path,
                    &LogLine {
                        stage: stage.name(),
                        status: "failed",
                        elapsed_ms,
                        report: None,
                        error: Some(e.to_string()),
                    },
                )?;
                return Err(e);
            }
        }
    }
    Ok(reports)
}

/// Upper edges of the aspect-ratio (width / height) bins; the last bin is open.
pub const ASPECT_EDGES: [f64; 6] = [0.75, 1.0, 1.34, 1.6, 1.8, 2.2];
/// Upper edges of the total-pixel bins, in megapixels.
pub const MEGAPIXEL_EDGES: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

fn bin_labels(edges: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(edges.len() + 1);
    labels.push(format!("<{}", edges[0]));
    for w in edges.windows(2) {
        labels.push(format!("[{}, {})", w[0], w[1]));
    }
    labels.push(format!(">={}", edges[edges.len() - 1]));
    labels
}

/// Index of the half-open bin `[e_{i-1}, e_i)` containing `v`.
fn bin_of(v: f64, edges: &[f64]) -> usize {
    edges.iter().position(|&e| v < e).unwrap_or(edges.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Share {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
}

/// Composition and shape distribution of a manifest, counted per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub per_source: BTreeMap<String, Share>,
    pub per_task: BTreeMap<String, Share>,
    pub per_bucket: BTreeMap<String, Share>,
    pub aspect: Histogram,
    pub megapixels: Histogram,
}

pub fn stats(manifest: &DatasetManifest) -> Summary {
    let st = manifest.stats();
    let total = manifest.len();
    let share = |count: usize| Share {
        count,
        percent: if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 },
    };
    let mut aspect = vec![0; ASPECT_EDGES.len() + 1];
    let mut mp = vec![0; MEGAPIXEL_EDGES.len() + 1];
    for s in manifest.samples() {
        let (w, h) = (s.image_size.0 as f64, s.image_size.1 as f64);
        aspect[bin_of(w / h, &ASPECT_EDGES)] += 1;
        mp[bin_of(w * h / 1e6, &MEGAPIXEL_EDGES)] += 1;
    }
    let mut per_task: BTreeMap<String, Share> = [TaskKind::BoxPrediction, TaskKind::CenterPointLocalization]
        .into_iter()
        .map(|t| (t.as_str().to_string(), share(0)))
        .collect();
    for (t, n) in &st.per_task {
        per_task.insert(t.as_str().to_string(), share(*n));
    }
    Summary {
        total,
        per_source: st.per_source.iter().map(|(k, &n)| (k.clone(), share(n))).collect(),
        per_task,
        per_bucket: st
            .per_bucket
            .iter()
            .map(|(b, &n)| (b.as_str().to_string(), share(n)))
            .collect(),
        aspect: Histogram {
            labels: bin_labels(&ASPECT_EDGES),
            counts: aspect,
        },
        megapixels: Histogram {
            labels: bin_labels(&MEGAPIXEL_EDGES),
            counts: mp,
        },
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples: {}", self.total);
        for (title, map) in [
            ("source", &self.per_source),
            ("task", &self.per_task),
            ("bucket", &self.per_bucket),
        ] {
            let _ = writeln!(s, "\nper {title}:");
            for (k, v) in map {
                let _ = writeln!(s, "  {k:<24} {:>8} {:>6.1}%", v.count, v.percent);
            }
        }
        for (title, h) in [("aspect ratio (w/h)", &self.aspect), ("megapixels", &self.megapixels)] {
            let _ = writeln!(s, "\n{title}:");
            for (l, c) in h.labels.iter().zip(&h.counts) {
                let _ = writeln!(s, "  {l:<24} {c:>8}");
            }
        }
        s
    }
}
