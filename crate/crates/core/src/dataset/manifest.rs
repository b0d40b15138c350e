//! Datapoints and the JSONL manifest that indexes them.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prompt::render_prompt;
use super::qa::{QaForm, QaPair};
use crate::error::{Error, Result};
use crate::scenario::{GroundTruth, Task};

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub task: Task,
    /// Paths relative to the dataset root, in prompt order.
    pub audio: Vec<String>,
    pub form: QaForm,
    pub question: String,
    pub answer: String,
    pub ground_truth: GroundTruth,
    pub scenario_seed: u64,
    pub snr_db: Option<f64>,
}

/// A packaged example.
#[derive(Debug, Clone, PartialEq)]
pub struct Datapoint {
    pub id: String,
    pub audio_paths: Vec<PathBuf>,
    pub task: Task,
    pub qa: QaPair,
    pub ground_truth: GroundTruth,
    pub scenario_seed: u64,
    pub snr_db: Option<f64>,
}

impl Datapoint {
    pub fn to_entry(&self) -> ManifestEntry {
        ManifestEntry {
            id: self.id.clone(),
            task: self.task,
            audio: self
                .audio_paths
                .iter()
                .map(|p| p.to_string_lossy().replace('\\', "/"))
                .collect(),
            form: self.qa.form,
            question: self.qa.question.clone(),
            answer: self.qa.answer.clone(),
            ground_truth: self.ground_truth.clone(),
            scenario_seed: self.scenario_seed,
            snr_db: self.snr_db,
        }
    }
}

impl ManifestEntry {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn audio_paths(&self, root: &Path) -> Vec<PathBuf> {
        self.audio.iter().map(|a| root.join(a)).collect()
    }

    pub fn prompt_text(&self) -> Result<String> {
        render_prompt(self.audio.len(), &self.question, &self.answer)
    }
}

/// The chat prompt for a datapoint.
pub fn format_prompt(dp: &Datapoint) -> Result<String> {
    render_prompt(dp.audio_paths.len(), &dp.qa.question, &dp.qa.answer)
}

/// Parses every line of a manifest; blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::Parameter(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::scenario::MultipathClass;

    fn entry() -> ManifestEntry {
        ManifestEntry {
            id: "multipath-000003".into(),
            task: Task::MultipathAnalysis,
            audio: vec!["audio/multipath-000003.wav".into()],
            form: QaForm::Closed,
            question: "How severe is the multipath effect in this audio?".into(),
            answer: "Rich.".into(),
            ground_truth: GroundTruth::Multipath {
                class: MultipathClass::Rich,
                mean_decay: 2.5,
            },
            scenario_seed: u64::MAX - 3,
            snr_db: None,
        }
    }

    #[test]
    fn field_names() {
        let v: serde_json::Value = serde_json::from_str(&entry().to_line().unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["answer", "audio", "form", "ground_truth", "id", "question", "scenario_seed", "snr_db", "task"]
        );
        assert_eq!(v["task"], "multipath_analysis");
        assert_eq!(v["form"], "closed");
        assert_eq!(v["ground_truth"]["kind"], "multipath");
    }

    #[test]
    fn round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut e2 = entry();
        e2.snr_db = Some(12.5);
        fs::write(&path, format!("{}\n\n{}\n", entry().to_line().unwrap(), e2.to_line().unwrap())).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), vec![entry(), e2]);
        fs::write(&path, "{\"id\": 3}\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Parameter(_))));
    }

    #[test]
    fn prompt_has_one_placeholder_per_audio() {
        let mut e = entry();
        assert_eq!(e.prompt_text().unwrap().matches("<|AUDIO|>").count(), 1);
        e.audio.push("audio/x.wav".into());
        assert_eq!(e.prompt_text().unwrap().matches("<|AUDIO|>").count(), 2);
    }
}
