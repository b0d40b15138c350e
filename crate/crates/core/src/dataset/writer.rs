//! Dataset generation: render, package and index every datapoint.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::llm::{request_open_qa, LlmClientConfig, QaGenerator};
use super::manifest::{read_manifest, Datapoint, ManifestEntry};
use super::qa::make_closed_qa;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scenario::{render, sample_from_seed, scenario_seed, SnrPolicy, Task};
use crate::sources::SourcePool;
use crate::wav::encode_wav;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const AUDIO_DIR: &str = "audio";
pub const DEFAULT_CLOSED_PER_TASK: usize = 1000;
pub const DEFAULT_OPEN_PER_TASK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub master_seed: u64,
    /// Closed-form datapoints per task; tasks absent here are skipped.
    pub closed_per_task: BTreeMap<Task, usize>,
    /// Open-form datapoints per task, produced only with a generator.
    pub open_per_task: usize,
    pub snr: SnrPolicy,
    /// Items rendered between manifest flushes.
    pub batch_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            closed_per_task: Task::ALL.iter().map(|t| (*t, DEFAULT_CLOSED_PER_TASK)).collect(),
            open_per_task: DEFAULT_OPEN_PER_TASK,
            snr: SnrPolicy::default(),
            batch_size: 64,
        }
    }
}

impl DatasetConfig {
    pub fn uniform(master_seed: u64, tasks: &[Task], per_task: usize) -> Self {
        Self {
            master_seed,
            closed_per_task: tasks.iter().map(|t| (*t, per_task)).collect(),
            ..Self::default()
        }
    }
}

/// Open-form generation wiring.
pub struct OpenForm<'a> {
    pub generator: &'a dyn QaGenerator,
    pub config: LlmClientConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub master_seed: u64,
    pub manifest: PathBuf,
    /// Manifest lines per task after the run.
    pub counts: BTreeMap<Task, usize>,
    pub written: usize,
    pub resumed: usize,
    pub open_form_failed: Vec<String>,
    pub open_form_skipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Job {
    task: Task,
    index: u64,
    open: bool,
}

impl Job {
    fn id(&self) -> String {
        if self.open {
            format!("{}-open-{:06}", self.task.tag(), self.index)
        } else {
            format!("{}-{:06}", self.task.tag(), self.index)
        }
    }

    fn seed(&self, master: u64) -> u64 {
        if self.open {
            derive_seed(master, &format!("{}-open", self.task.tag()), self.index)
        } else {
            scenario_seed(self.task, master, self.index)
        }
    }
}

fn plan(config: &DatasetConfig, with_open: bool) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (&task, &n) in &config.closed_per_task {
        jobs.extend((0..n as u64).map(|index| Job { task, index, open: false }));
        if with_open {
            jobs.extend((0..config.open_per_task as u64).map(|index| Job { task, index, open: true }));
        }
    }
    jobs
}

struct Rendered {
    entry: ManifestEntry,
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn build(job: Job, config: &DatasetConfig, pool: &SourcePool, open: Option<&OpenForm>) -> Result<Option<Rendered>> {
    let seed = job.seed(config.master_seed);
    let inst = sample_from_seed(job.task, seed, pool, config.snr)?;
    let out = render(&inst, pool)?;
    let id = job.id();
    let (paths, files): (Vec<PathBuf>, Vec<Vec<u8>>) = if job.task == Task::DopplerEstimation {
        vec![
            (PathBuf::from(format!("{AUDIO_DIR}/{id}-source.wav")), encode_wav(&[out.source.clone()])?),
            (PathBuf::from(format!("{AUDIO_DIR}/{id}-received.wav")), encode_wav(&out.channels)?),
        ]
        .into_iter()
        .unzip()
    } else {
        (vec![PathBuf::from(format!("{AUDIO_DIR}/{id}.wav"))], vec![encode_wav(&out.channels)?])
    };
    let mut dp = Datapoint {
        id,
        audio_paths: paths.clone(),
        task: job.task,
        qa: make_closed_qa(job.task, &out.ground_truth, seed)?,
        ground_truth: out.ground_truth,
        scenario_seed: seed,
        snr_db: inst.snr_db,
    };
    if job.open {
        let Some(open) = open else { return Ok(None) };
        match request_open_qa(&dp, open.generator, &open.config) {
            Ok(qa) => dp.qa = qa,
            Err(e) => {
                warn!("{e}");
                return Ok(None);
            }
        }
    }
    Ok(Some(Rendered {
        entry: dp.to_entry(),
        files: paths.into_iter().zip(files).collect(),
    }))
}

/// Existing manifest lines that match the planned sequence; a torn last
/// line is dropped.
fn resume_point(path: &Path, jobs: &[Job]) -> Result<(usize, usize, Vec<ManifestEntry>)> {
    if !path.exists() {
        return Ok((0, 0, Vec::new()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = Vec::new();
    let mut bytes = 0;
    let mut next = 0;
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') {
            break;
        }
        let Ok(entry) = serde_json::from_str::<ManifestEntry>(line.trim_end()) else {
            break;
        };
        let Some(pos) = jobs[next..].iter().position(|j| j.id() == entry.id) else {
            return Err(Error::Parameter(format!(
                "{}: entry {} does not belong to this configuration",
                path.display(),
                entry.id
            )));
        };
        next += pos + 1;
        bytes += line.len();
        kept.push(entry);
    }
    if bytes < text.len() {
        warn!("{}: dropping a partial trailing record", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        f.set_len(bytes as u64).map_err(|e| Error::io(path, e))?;
    }
    Ok((next, kept.len(), kept))
}

/// Writes WAVs under `out_dir/audio/` and one manifest line per datapoint,
/// in a fixed order. Rerunning continues from the manifest's last complete
/// line; the same seed always yields the same bytes.
pub fn write_dataset(
    config: &DatasetConfig,
    pool: &SourcePool,
    out_dir: &Path,
    open: Option<&OpenForm>,
) -> Result<DatasetSummary> {
    config.snr.validate()?;
    let audio_dir = out_dir.join(AUDIO_DIR);
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);

    let jobs = plan(config, open.is_some());
    let (start, resumed, existing) = resume_point(&manifest_path, &jobs)?;
    if resumed > 0 {
        info!("resuming after {resumed} existing datapoints");
    }
    let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
    for e in &existing {
        *counts.entry(e.task).or_default() += 1;
    }
    let mut manifest = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&manifest_path)
        .map_err(|e| Error::io(&manifest_path, e))?;

    let mut summary = DatasetSummary {
        master_seed: config.master_seed,
        manifest: manifest_path.clone(),
        resumed,
        open_form_skipped: open.is_none() && config.open_per_task > 0,
        ..Default::default()
    };
    // Chunks that call the generator run on a pool capped at its request limit.
    let request_pool = match open {
        Some(o) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(o.config.max_in_flight.max(1))
                .build()
                .map_err(|e| Error::Client(format!("cannot start request workers: {e}")))?,
        ),
        None => None,
    };
    let batch = config.batch_size.max(1);
    for (b, chunk) in jobs[start..].chunks(batch).enumerate() {
        let work = || -> Vec<Result<Option<Rendered>>> {
            chunk
                .par_iter()
                .enumerate()
                .map(|(k, job)| {
                    let index = start + b * batch + k;
                    build(*job, config, pool, open).map_err(|e| Error::Datapoint {
                        index: index as u64,
                        source: Box::new(e),
                    })
                })
                .collect()
        };
        let results = match &request_pool {
            Some(rp) if chunk.iter().any(|j| j.open) => rp.install(work),
            _ => work(),
        };
        for (job, result) in chunk.iter().zip(results) {
            let Some(item) = result? else {
                if job.open {
                    summary.open_form_failed.push(job.id());
                }
                continue;
            };
            for (rel, bytes) in &item.files {
                let path = out_dir.join(rel);
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
            writeln!(manifest, "{}", item.entry.to_line()?).map_err(|e| Error::io(&manifest_path, e))?;
            *counts.entry(item.entry.task).or_default() += 1;
            summary.written += 1;
        }
        manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    }
    summary.counts = counts;
    Ok(summary)
}

/// Reads a dataset's manifest.
pub fn load_manifest(out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    read_manifest(&out_dir.join(MANIFEST_FILE))
}
