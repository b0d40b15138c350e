//! Oracle closure over a written dataset: every label is recovered again,
//! from the audio where the phenomenon is audible and from the regenerated
//! channel otherwise.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::{
    detect_los, estimate_doppler_pct, estimate_rt60_late, estimate_tdoa_xcorr, estimate_tof_matched, MIN_TDOA_SEARCH,
};
use crate::dataset::ManifestEntry;
use crate::dsp::Signal;
use crate::error::{Error, Result};
use crate::scenario::{sample_channel, GroundTruth, MultipathClass, SnrPolicy, Task};
use crate::wav::read_wav;

/// Items below this SNR are checked and reported but do not gate.
pub const CLOSURE_MIN_SNR_DB: f64 = 30.0;
pub const DOPPLER_TOLERANCE_PCT: f64 = 0.5;
pub const TOF_TOLERANCE_SAMPLES: usize = 1;

/// Pass-rate floor per task; Doppler is gated on its mean error instead.
pub fn pass_threshold(task: Task) -> f64 {
    match task {
        Task::LosDetection | Task::DoaEstimation | Task::RangeEstimation => 0.99,
        Task::MultipathAnalysis => 0.95,
        Task::DopplerEstimation => 0.0,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskClosure {
    /// Items counted toward the gate.
    pub gated: usize,
    pub passed: usize,
    /// Noisy items checked for information only.
    pub ungated: usize,
    pub ungated_passed: usize,
    /// Gated items on which the estimator found nothing.
    pub no_estimate: usize,
    pub pass_rate: Option<f64>,
    /// Mean absolute estimation error over gated items, where numeric.
    pub mean_error: Option<f64>,
    pub threshold: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub tasks: BTreeMap<Task, TaskClosure>,
    /// Unreadable items, inconsistent labels and gated misses.
    pub failures: Vec<ItemFailure>,
    /// Items whose files or labels could not be checked at all; any one
    /// fails the run.
    pub unreadable: usize,
    pub ok: bool,
}

struct Check {
    passed: bool,
    error: Option<f64>,
    note: String,
}

fn load(root: &Path, entry: &ManifestEntry) -> Result<Vec<Vec<Signal>>> {
    entry.audio_paths(root).iter().map(|p| read_wav(p)).collect()
}

fn check_entry(root: &Path, entry: &ManifestEntry) -> Result<Check> {
    let audio = load(root, entry)?;
    let scene = sample_channel(entry.task, entry.scenario_seed, SnrPolicy::Noiseless)?;
    let regenerated = scene.ground_truth()?;
    if regenerated != entry.ground_truth {
        return Err(Error::Contract(format!(
            "label differs from the scene regenerated from seed {}",
            entry.scenario_seed
        )));
    }
    let channels = |n: usize| -> Result<&Vec<Signal>> {
        audio
            .iter()
            .find(|a| a.len() == n)
            .ok_or_else(|| Error::Contract(format!("expected a {n}-channel file")))
    };
    Ok(match &entry.ground_truth {
        GroundTruth::Los { los_present } => {
            let got = detect_los(&scene.cir()?)?;
            Check {
                passed: got == *los_present,
                error: None,
                note: format!("oracle says LOS {got}"),
            }
        }
        GroundTruth::Doppler { shift_pct } => {
            let [source, received] = audio.as_slice() else {
                return Err(Error::Contract("expected source and received files".into()));
            };
            let est = estimate_doppler_pct(&source[0], &received[0])?;
            let err = (est - shift_pct).abs();
            Check {
                passed: err <= DOPPLER_TOLERANCE_PCT,
                error: Some(err),
                note: format!("estimated {est:.3}%"),
            }
        }
        GroundTruth::Doa { tdoa_quantized, .. } => {
            let lr = channels(2)?;
            let lag = estimate_tdoa_xcorr(&lr[0], &lr[1], MIN_TDOA_SEARCH)?;
            Check {
                passed: lag == *tdoa_quantized,
                error: Some((lag - tdoa_quantized).abs() as f64),
                note: format!("estimated lag {lag}"),
            }
        }
        GroundTruth::Multipath { class, .. } => {
            let rt60 = estimate_rt60_late(&scene.cir()?)?;
            let got = MultipathClass::from_rt60(rt60);
            Check {
                passed: got == *class,
                error: None,
                note: format!("RT60 {rt60:.3} s reads as {}", got.as_str()),
            }
        }
        GroundTruth::Range { tof_samples, .. } => {
            let mono = channels(1)?;
            let est = estimate_tof_matched(&mono[0], &scene.reference_pulse()?)?;
            let err = est.abs_diff(*tof_samples);
            Check {
                passed: err <= TOF_TOLERANCE_SAMPLES,
                error: Some(err as f64),
                note: format!("estimated {est} samples"),
            }
        }
    })
}

fn gated(entry: &ManifestEntry) -> bool {
    // LOS and multipath are judged on the noiseless channel.
    match entry.task {
        Task::LosDetection | Task::MultipathAnalysis => true,
        _ => entry.snr_db.is_none_or(|s| s >= CLOSURE_MIN_SNR_DB),
    }
}

/// Runs the matching oracle on every entry of a dataset rooted at `root`.
pub fn verify_manifest(root: &Path, entries: &[ManifestEntry]) -> ClosureReport {
    if entries.is_empty() {
        warn!("manifest is empty; nothing to verify");
    }
    let results: Vec<Result<Check>> = entries.par_iter().map(|e| check_entry(root, e)).collect();

    let mut report = ClosureReport::default();
    let mut errors: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
    for (entry, result) in entries.iter().zip(results) {
        let t = report.tasks.entry(entry.task).or_default();
        let check = match result {
            Ok(c) => c,
            Err(Error::Estimator(msg)) => {
                if gated(entry) {
                    t.no_estimate += 1;
                }
                Check {
                    passed: false,
                    error: None,
                    note: format!("no estimate: {msg}"),
                }
            }
            Err(e) => {
                report.unreadable += 1;
                report.failures.push(ItemFailure {
                    id: entry.id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !gated(entry) {
            t.ungated += 1;
            t.ungated_passed += usize::from(check.passed);
            continue;
        }
        t.gated += 1;
        t.passed += usize::from(check.passed);
        if let Some(err) = check.error {
            let s = errors.entry(entry.task).or_default();
            s.0 += err;
            s.1 += 1;
        }
        if !check.passed {
            report.failures.push(ItemFailure {
                id: entry.id.clone(),
                reason: check.note,
            });
        }
    }
    for (task, t) in report.tasks.iter_mut() {
        t.threshold = pass_threshold(*task);
        t.pass_rate = (t.gated > 0).then(|| t.passed as f64 / t.gated as f64);
        t.mean_error = errors.get(task).map(|(s, n)| s / *n as f64);
        t.ok = match task {
            Task::DopplerEstimation => {
                t.no_estimate == 0 && t.mean_error.is_none_or(|m| m <= DOPPLER_TOLERANCE_PCT)
            }
            _ => t.pass_rate.is_none_or(|r| r >= t.threshold),
        };
    }
    report.ok = report.tasks.values().all(|t| t.ok) && report.unreadable == 0;
    report
}

impl ClosureReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>6} {:>6} {:>9} {:>10} {:>9} {:>8} {:>4}\n",
            "task", "gated", "passed", "rate", "mean err", "threshold", "ungated", "ok"
        );
        for (task, t) in &self.tasks {
            let rate = t.pass_rate.map_or("-".into(), |r| format!("{r:.4}"));
            let err = t.mean_error.map_or("-".into(), |e| format!("{e:.4}"));
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>9} {:>10} {:>9} {:>8} {:>4}\n",
                task.tag(),
                t.gated,
                t.passed,
                rate,
                err,
                t.threshold,
                t.ungated,
                if t.ok { "yes" } else { "NO" }
            ));
        }
        for f in &self.failures {
            out.push_str(&format!("FAIL {}: {}\n", f.id, f.reason));
        }
        out
    }
}
