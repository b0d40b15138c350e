//! Task metrics for scoring answer text against a manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_answer, render_answer, AnswerKind, ManifestEntry, ParsedAnswer, QaForm};
use crate::doppler::SPEED_RANGE;
use crate::dsp::SPEED_OF_SOUND;
use crate::error::{Error, Result};
use crate::scenario::Task;

/// Largest Doppler shift magnitude in the generated range, percent.
pub fn max_shift_pct() -> f64 {
    100.0 * SPEED_RANGE.end() / SPEED_OF_SOUND
}

/// Mean |U - V| for independent uniforms on [-a, a] is 2a/3.
pub fn doppler_baseline_error() -> f64 {
    2.0 * max_shift_pct() / 3.0
}

/// Random lags within +/-100 samples.
pub const DOA_BASELINE_ERROR: f64 = 200.0 / 3.0;
/// Uniform relative errors on [0, 100] percent.
pub const RANGE_BASELINE_ERROR: f64 = 100.0 / 3.0;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer_text: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Scoring(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCount {
    pub scored: usize,
    pub unparseable: usize,
}

/// Scores per task. A metric is `None` when no prediction fed it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// LOS binary accuracy.
    pub bca: Option<f64>,
    /// Multipath three-class accuracy.
    pub tca: Option<f64>,
    /// Doppler shift error, percentage points.
    pub mae_f: Option<f64>,
    /// DoA lag error, samples.
    pub mae_t: Option<f64>,
    /// Range relative error, percent.
    pub rep: Option<f64>,
    /// Approaching/receding accuracy.
    pub direction_accuracy: Option<f64>,
    /// Left/right/front accuracy.
    pub side_accuracy: Option<f64>,
    pub counts: BTreeMap<AnswerKind, KindCount>,
    /// Manifest entries with no prediction.
    pub unanswered: usize,
}

/// Per-item outcome: a loss (error magnitude or 0/1 miss) and whether the
/// answer could be read.
struct Outcome {
    kind: AnswerKind,
    loss: f64,
    parsed: bool,
}

/// The kind an entry is scored under: closed answers by their wording,
/// open answers by the task's numeric or categorical label.
pub fn scoring_kind(entry: &ManifestEntry) -> AnswerKind {
    match entry.form {
        QaForm::Closed => AnswerKind::of_reference(entry.task, &entry.answer),
        QaForm::Open => match entry.task {
            Task::LosDetection => AnswerKind::LosPresence,
            Task::DopplerEstimation => AnswerKind::ShiftPercent,
            Task::DoaEstimation => AnswerKind::TdoaSamples,
            Task::MultipathAnalysis => AnswerKind::MultipathSeverity,
            Task::RangeEstimation => AnswerKind::TimeOfFlight,
        },
    }
}

fn baseline_loss(kind: AnswerKind) -> f64 {
    match kind {
        AnswerKind::ShiftPercent => doppler_baseline_error(),
        AnswerKind::TdoaSamples => DOA_BASELINE_ERROR,
        AnswerKind::TimeOfFlight => RANGE_BASELINE_ERROR,
        _ => 1.0,
    }
}

fn score_one(entry: &ManifestEntry, answer: &str) -> Result<Outcome> {
    let kind = scoring_kind(entry);
    let truth_text = render_answer(kind, &entry.ground_truth)?;
    let truth = parse_answer(kind, &truth_text)
        .ok_or_else(|| Error::Scoring(format!("{}: reference answer {truth_text:?} unreadable", entry.id)))?;
    let Some(pred) = parse_answer(kind, answer) else {
        return Ok(Outcome {
            kind,
            loss: baseline_loss(kind),
            parsed: false,
        });
    };
    let loss = match (kind, truth, pred) {
        (AnswerKind::TimeOfFlight, ParsedAnswer::Number(t), ParsedAnswer::Number(p)) => {
            // Distance is proportional to ToF, so the ratio is the same.
            if t > 0.0 {
                100.0 * (p - t).abs() / t
            } else {
                return Err(Error::Scoring(format!("{}: non-positive reference ToF", entry.id)));
            }
        }
        (_, ParsedAnswer::Number(t), ParsedAnswer::Number(p)) => (p - t).abs(),
        (_, t, p) => f64::from(u8::from(t != p)),
    };
    Ok(Outcome {
        kind,
        loss,
        parsed: true,
    })
}

/// Scores answer text against the manifest. Unreadable answers count as
/// misclassified, or carry the task's random-guess error.
pub fn score_predictions(manifest: &[ManifestEntry], predictions: &[Prediction]) -> Result<MetricReport> {
    let by_id: HashMap<&str, &ManifestEntry> = manifest.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut seen = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !by_id.contains_key(p.id.as_str()) {
            return Err(Error::Scoring(format!("prediction for unknown id {}", p.id)));
        }
        if seen.insert(p.id.as_str(), ()).is_some() {
            return Err(Error::Scoring(format!("duplicate prediction for {}", p.id)));
        }
    }
    let outcomes = predictions
        .par_iter()
        .map(|p| score_one(by_id[p.id.as_str()], &p.answer_text))
        .collect::<Result<Vec<_>>>()?;

    let mut sums: BTreeMap<AnswerKind, f64> = BTreeMap::new();
    let mut report = MetricReport {
        unanswered: manifest.len() - predictions.len(),
        ..Default::default()
    };
    for o in &outcomes {
        *sums.entry(o.kind).or_default() += o.loss;
        let c = report.counts.entry(o.kind).or_default();
        c.scored += 1;
        c.unparseable += usize::from(!o.parsed);
    }
    let mean = |k: AnswerKind| report.counts.get(&k).map(|c| sums[&k] / c.scored as f64);
    let accuracy = |k: AnswerKind| mean(k).map(|m| 1.0 - m);
    report.bca = accuracy(AnswerKind::LosPresence);
    report.tca = accuracy(AnswerKind::MultipathSeverity);
    report.direction_accuracy = accuracy(AnswerKind::MotionDirection);
    report.side_accuracy = accuracy(AnswerKind::FirstMicrophone);
    report.mae_f = mean(AnswerKind::ShiftPercent);
    report.mae_t = mean(AnswerKind::TdoaSamples);
    report.rep = mean(AnswerKind::TimeOfFlight);
    Ok(report)
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let rows = [
            ("LOS", "BCA", self.bca, AnswerKind::LosPresence),
            ("Doppler", "MAE_f (%)", self.mae_f, AnswerKind::ShiftPercent),
            ("Doppler", "direction acc", self.direction_accuracy, AnswerKind::MotionDirection),
            ("DoA", "MAE_t (samples)", self.mae_t, AnswerKind::TdoaSamples),
            ("DoA", "side acc", self.side_accuracy, AnswerKind::FirstMicrophone),
            ("Multipath", "TCA", self.tca, AnswerKind::MultipathSeverity),
            ("Range", "REP (%)", self.rep, AnswerKind::TimeOfFlight),
        ];
        let mut out = format!("{:<10} {:<16} {:>10} {:>7} {:>11}\n", "task", "metric", "value", "n", "unparseable");
        for (task, metric, value, kind) in rows {
            let c = self.counts.get(&kind).copied().unwrap_or_default();
            let v = value.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{task:<10} {metric:<16} {v:>10} {:>7} {:>11}", c.scored, c.unparseable);
        }
        if self.unanswered > 0 {
            let _ = writeln!(out, "{} manifest entries had no prediction", self.unanswered);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{GroundTruth, MultipathClass};

    fn entry(id: &str, task: Task, answer: &str, gt: GroundTruth) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            task,
            audio: vec![format!("audio/{id}.wav")],
            form: QaForm::Closed,
            question: "q".into(),
            answer: answer.into(),
            ground_truth: gt,
            scenario_seed: 0,
            snr_db: None,
        }
    }

    fn manifest() -> Vec<ManifestEntry> {
        vec![
            entry("a", Task::LosDetection, "Yes.", GroundTruth::Los { los_present: true }),
            entry("b", Task::DopplerEstimation, "10.00%.", GroundTruth::Doppler { shift_pct: 10.0 }),
            entry("c", Task::DopplerEstimation, "Receding.", GroundTruth::Doppler { shift_pct: -3.0 }),
            entry(
                "d",
                Task::DoaEstimation,
                "-4 samples.",
                GroundTruth::Doa {
                    tdoa_samples: -4.2,
                    tdoa_quantized: -4,
                    theta_deg: 120.0,
                    mic_distance_m: 0.1,
                },
            ),
            entry(
                "e",
                Task::MultipathAnalysis,
                "Rich.",
                GroundTruth::Multipath {
                    class: MultipathClass::Rich,
                    mean_decay: 3.0,
                },
            ),
            entry(
                "f",
                Task::RangeEstimation,
                "59.0 ms.",
                GroundTruth::Range {
                    tof_ms: 59.0,
                    tof_samples: 944,
                    distance_m: 10.1185,
                },
            ),
        ]
    }

    fn answers(pairs: &[(&str, &str)]) -> Vec<Prediction> {
        pairs
            .iter()
            .map(|(id, a)| Prediction {
                id: id.to_string(),
                answer_text: a.to_string(),
            })
            .collect()
    }

    #[test]
    fn reference_answers_score_perfectly() {
        let m = manifest();
        let preds: Vec<_> = m
            .iter()
            .map(|e| Prediction {
                id: e.id.clone(),
                answer_text: e.answer.clone(),
            })
            .collect();
        let r = score_predictions(&m, &preds).unwrap();
        assert_eq!(r.bca, Some(1.0));
        assert_eq!(r.tca, Some(1.0));
        assert_eq!(r.mae_f, Some(0.0));
        assert_eq!(r.mae_t, Some(0.0));
        assert_eq!(r.rep, Some(0.0));
        assert_eq!(r.direction_accuracy, Some(1.0));
        assert!(r.counts.values().all(|c| c.unparseable == 0));
    }

    #[test]
    fn errors_and_unparseable() {
        let r = score_predictions(
            &manifest(),
            &answers(&[
                ("a", "No, it is blocked."),
                ("b", "about 12.5 percent"),
                ("d", "I cannot tell"),
                ("e", "moderate"),
                ("f", "64.9 ms"),
            ]),
        )
        .unwrap();
        assert_eq!(r.bca, Some(0.0));
        assert!((r.mae_f.unwrap() - 2.5).abs() < 1e-12);
        assert!((r.mae_t.unwrap() - DOA_BASELINE_ERROR).abs() < 1e-12);
        assert_eq!(r.counts[&AnswerKind::TdoaSamples].unparseable, 1);
        assert_eq!(r.tca, Some(0.0));
        assert!((r.rep.unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(r.direction_accuracy, None);
        assert_eq!(r.unanswered, 1);
    }

    #[test]
    fn unknown_and_duplicate_ids() {
        assert!(matches!(
            score_predictions(&manifest(), &answers(&[("zz", "Yes.")])),
            Err(Error::Scoring(_))
        ));
        assert!(matches!(
            score_predictions(&manifest(), &answers(&[("a", "Yes."), ("a", "No.")])),
            Err(Error::Scoring(_))
        ));
    }

    #[test]
    fn baselines() {
        assert!((max_shift_pct() - 14.577).abs() < 1e-3);
        assert!((doppler_baseline_error() - 9.718).abs() < 1e-3);
        assert!((DOA_BASELINE_ERROR - 66.667).abs() < 1e-3);
        assert!((RANGE_BASELINE_ERROR - 33.333).abs() < 1e-3);
    }

    #[test]
    fn table_lists_every_metric() {
        let t = score_predictions(&manifest(), &[]).unwrap().to_table();
        for m in ["BCA", "MAE_f", "MAE_t", "TCA", "REP"] {
            assert!(t.contains(m));
        }
    }

    #[test]
    fn predictions_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        fs::write(&p, "{\"id\":\"a\",\"answer_text\":\"Yes.\"}\n\n").unwrap();
        assert_eq!(read_predictions(&p).unwrap().len(), 1);
        fs::write(&p, "{\"id\":1}\n").unwrap();
        assert!(matches!(read_predictions(&p), Err(Error::Scoring(_))));
    }
}
