use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use acoustic_sim::dataset::{
    read_manifest, write_dataset, DatasetConfig, HttpGenerator, LlmClientConfig, OpenForm, DEFAULT_OPEN_PER_TASK,
};
use acoustic_sim::features::{extract_features, write_tensor};
use acoustic_sim::scenario::{render, sample_scenario, SnrPolicy, Task};
use acoustic_sim::sources::{ingest_sources, SourcePool};
use acoustic_sim::verify::{read_predictions, score_predictions, verify_manifest};
use acoustic_sim::wav::{read_wav, write_wav};

/// Clips in the built-in synthetic pool used when no source directory is given.
const SYNTHETIC_POOL_CLIPS: usize = 32;
const SYNTHETIC_POOL_SECONDS: f64 = 5.0;

#[derive(Parser)]
#[command(name = "acoustic-sim", version, about = "Acoustic channel simulator and audio QA dataset generator")]
struct Cli {
    /// More log output on stderr (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset.
    Gen(GenArgs),
    /// Re-estimate every label of a dataset with the classical oracles.
    Verify(VerifyArgs),
    /// Extract spectral features from a WAV file.
    Features(FeaturesArgs),
    /// Score predictions against a manifest.
    Score(ScoreArgs),
    /// Render a single scene with its response and parameters.
    RenderOne(RenderOneArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Closed-form datapoints per task.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated task tags, or `all`.
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of WAV/FLAC source clips; a synthetic pool otherwise.
    #[arg(long)]
    source_dir: Option<PathBuf>,
    /// `noiseless`, a fixed dB value, or `MIN:MAX` dB.
    #[arg(long)]
    snr: Option<String>,
    /// Open-form datapoints per task (needs the LLM endpoint variable).
    #[arg(long)]
    open_n: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Print the run summary as JSON on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Manifest file, or the dataset directory holding it.
    manifest: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    input: PathBuf,
    output: PathBuf,
    /// Channel of a multi-channel file.
    #[arg(long, default_value_t = 0)]
    channel: usize,
}

#[derive(Args)]
struct ScoreArgs {
    manifest: PathBuf,
    predictions: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RenderOneArgs {
    #[arg(long)]
    task: Task,
    /// Master seed, as given to `gen`.
    #[arg(long)]
    seed: u64,
    /// Datapoint index under that seed.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, default_value = "render")]
    out: PathBuf,
    #[arg(long)]
    source_dir: Option<PathBuf>,
    #[arg(long, default_value = "noiseless")]
    snr: String,
}

/// Keys accepted in a `gen` configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenConfigFile {
    master_seed: Option<u64>,
    out_dir: Option<PathBuf>,
    source_dir: Option<PathBuf>,
    tasks: Option<Vec<Task>>,
    n: Option<usize>,
    counts: Option<BTreeMap<Task, usize>>,
    open_per_task: Option<usize>,
    snr: Option<SnrPolicy>,
    workers: Option<usize>,
}

#[derive(Serialize)]
struct GenSummary {
    master_seed: u64,
    out_dir: PathBuf,
    counts: BTreeMap<Task, usize>,
    written: usize,
    resumed: usize,
    open_form_failed: Vec<String>,
    open_form_skipped: bool,
    elapsed_s: f64,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<acoustic_sim::Error> for Failure {
    fn from(e: acoustic_sim::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<ExitCode, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Features(a) => cmd_features(a),
        Command::Score(a) => cmd_score(a),
        Command::RenderOne(a) => cmd_render_one(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn set_workers(n: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    Ok(())
}

fn parse_snr(s: &str) -> Result<SnrPolicy, Failure> {
    let bad = || usage(format!("cannot read SNR {s:?}; use noiseless, a dB value or MIN:MAX"));
    let policy = if s.eq_ignore_ascii_case("noiseless") {
        SnrPolicy::Noiseless
    } else if let Some((lo, hi)) = s.split_once(':') {
        SnrPolicy::Uniform {
            min_db: lo.trim().parse().map_err(|_| bad())?,
            max_db: hi.trim().parse().map_err(|_| bad())?,
        }
    } else {
        SnrPolicy::Fixed {
            db: s.trim().parse().map_err(|_| bad())?,
        }
    };
    policy.validate().map_err(|e| usage(e.to_string()))?;
    Ok(policy)
}

fn parse_tasks(s: &str) -> Result<Vec<Task>, Failure> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Task::ALL.to_vec());
    }
    let mut tasks = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let t: Task = part.parse().map_err(|e: acoustic_sim::Error| usage(e.to_string()))?;
        if !tasks.contains(&t) {
            tasks.push(t);
        }
    }
    if tasks.is_empty() {
        return Err(usage("no tasks selected"));
    }
    Ok(tasks)
}

fn load_pool(source_dir: Option<&Path>, master_seed: u64) -> anyhow::Result<SourcePool> {
    match source_dir {
        Some(dir) => {
            let pool = ingest_sources(dir)?;
            info!(
                "ingested {} clips from {} ({} skipped)",
                pool.len(),
                dir.display(),
                pool.report.skipped.len()
            );
            Ok(pool)
        }
        None => Ok(SourcePool::synthetic(master_seed, SYNTHETIC_POOL_CLIPS, SYNTHETIC_POOL_SECONDS)?),
    }
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let file = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<GenConfigFile>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => GenConfigFile::default(),
    };
    let seed = a
        .seed
        .or(file.master_seed)
        .ok_or_else(|| usage("gen needs a master seed (--seed or master_seed in the config)"))?;
    let tasks = match &a.tasks {
        Some(s) => parse_tasks(s)?,
        None => file.tasks.clone().unwrap_or_else(|| Task::ALL.to_vec()),
    };
    let counts: BTreeMap<Task, usize> = match (a.n, file.n, &file.counts) {
        (Some(n), _, _) | (None, Some(n), _) => tasks.iter().map(|t| (*t, n)).collect(),
        (None, None, Some(c)) => tasks.iter().filter_map(|t| c.get(t).map(|n| (*t, *n))).collect(),
        (None, None, None) => return Err(usage("gen needs datapoint counts (--n, or n/counts in the config)")),
    };
    let snr = match &a.snr {
        Some(s) => parse_snr(s)?,
        None => file.snr.unwrap_or_default(),
    };
    snr.validate().map_err(|e| usage(e.to_string()))?;
    let out = a.out.or(file.out_dir).unwrap_or_else(|| PathBuf::from("dataset"));
    let source_dir = a.source_dir.or(file.source_dir);
    if let Some(d) = &source_dir {
        if !d.is_dir() {
            return Err(usage(format!("source directory {} does not exist", d.display())));
        }
    }
    set_workers(a.workers.or(file.workers))?;

    let config = DatasetConfig {
        master_seed: seed,
        closed_per_task: counts,
        open_per_task: a.open_n.or(file.open_per_task).unwrap_or(DEFAULT_OPEN_PER_TASK),
        snr,
        ..DatasetConfig::default()
    };
    let started = Instant::now();
    let pool = load_pool(source_dir.as_deref(), seed)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("sources.json"), serde_json::to_vec_pretty(&pool.report).map_err(anyhow::Error::from)?)
        .with_context(|| format!("writing {}", out.join("sources.json").display()))?;

    let llm = LlmClientConfig::from_env();
    let generator = llm.clone().map(HttpGenerator::new);
    let open = match (&generator, llm) {
        (Some(g), Some(cfg)) if config.open_per_task > 0 => Some(OpenForm {
            generator: g,
            config: cfg,
        }),
        _ => {
            if config.open_per_task > 0 && a.open_n.is_some() {
                warn!("no LLM endpoint configured; open-form datapoints skipped");
            }
            None
        }
    };
    info!("generating into {}", out.display());
    let s = write_dataset(&config, &pool, &out, open.as_ref())?;
    let summary = GenSummary {
        master_seed: seed,
        out_dir: out,
        counts: s.counts,
        written: s.written,
        resumed: s.resumed,
        open_form_failed: s.open_form_failed,
        open_form_skipped: s.open_form_skipped,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    info!(
        "wrote {} datapoints ({} already present) in {:.1} s",
        summary.written, summary.resumed, summary.elapsed_s
    );
    for (task, n) in &summary.counts {
        info!("  {:<10} {n}", task.tag());
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn manifest_location(p: &Path) -> (PathBuf, PathBuf) {
    if p.is_dir() {
        (p.join("manifest.jsonl"), p.to_path_buf())
    } else {
        let root = p.parent().map(Path::to_path_buf).unwrap_or_default();
        (p.to_path_buf(), root)
    }
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    set_workers(a.workers)?;
    let (manifest, root) = manifest_location(&a.manifest);
    if !manifest.is_file() {
        return Err(usage(format!("no manifest at {}", manifest.display())));
    }
    let entries = read_manifest(&manifest)?;
    let report = verify_manifest(&root, &entries);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    } else {
        print!("{}", report.to_table());
    }
    if report.ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed");
        Ok(ExitCode::from(1))
    }
}

fn cmd_features(a: FeaturesArgs) -> Outcome {
    let channels = read_wav(&a.input)?;
    let x = channels
        .get(a.channel)
        .ok_or_else(|| usage(format!("{} has {} channel(s)", a.input.display(), channels.len())))?;
    let f = extract_features(x)?;
    write_tensor(&a.output, &f)?;
    info!("wrote 3 x {} x {} features to {}", f.frames, f.bins(), a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_score(a: ScoreArgs) -> Outcome {
    let (manifest, _) = manifest_location(&a.manifest);
    let entries = read_manifest(&manifest)?;
    let preds = read_predictions(&a.predictions)?;
    let report = score_predictions(&entries, &preds)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render_one(a: RenderOneArgs) -> Outcome {
    let snr = parse_snr(&a.snr)?;
    let pool = load_pool(a.source_dir.as_deref(), a.seed)?;
    let inst = sample_scenario(a.task, a.seed, a.index, &pool, snr)?;
    let out = render(&inst, &pool)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let stem = format!("{}-{}-{}", a.task.tag(), a.seed, a.index);
    let audio = a.out.join(format!("{stem}.wav"));
    write_wav(&audio, &out.channels)?;
    if a.task == Task::DopplerEstimation {
        write_wav(&a.out.join(format!("{stem}-source.wav")), &[out.source.clone()])?;
    }
    let cir_len = out.cirs.iter().map(|h| h.len()).max().unwrap_or(0);
    let cir: Vec<_> = out.cirs.iter().map(|h| h.samples().fit_to(cir_len)).collect();
    write_wav(&a.out.join(format!("{stem}-cir.wav")), &cir)?;
    let params = serde_json::json!({
        "scenario": inst,
        "ground_truth": out.ground_truth,
        "components": out.cirs.iter().map(|h| h.component_log()).collect::<Vec<_>>(),
    });
    let params_path = a.out.join(format!("{stem}-params.json"));
    fs::write(&params_path, serde_json::to_vec_pretty(&params).map_err(anyhow::Error::from)?)
        .with_context(|| format!("writing {}", params_path.display()))?;
    info!("wrote {} and its response/parameters", audio.display());
    Ok(ExitCode::SUCCESS)
}
