//! Closed-form question templates and the answer grammar.

use std::sync::OnceLock;

use rand::Rng as _;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::{GroundTruth, MultipathClass, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaForm {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub form: QaForm,
    pub template_id: String,
}

/// What a closed-form answer states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    /// `Yes.` / `No.`
    LosPresence,
    /// `Approaching.` / `Receding.`
    MotionDirection,
    /// `12.34%.`
    ShiftPercent,
    /// `Left.` / `Right.` / `Front.`
    FirstMicrophone,
    /// `-4 samples.`
    TdoaSamples,
    /// `Rich.` / `Moderate.` / `Negligible.`
    MultipathSeverity,
    /// `59.0 ms.`
    TimeOfFlight,
}

pub struct Template {
    pub id: &'static str,
    pub kind: AnswerKind,
    pub question: &'static str,
}

macro_rules! t {
    ($id:literal, $kind:ident, $q:expr) => {
        Template {
            id: $id,
            kind: AnswerKind::$kind,
            question: $q,
        }
    };
}

static LOS: [Template; 4] = [
    t!("los-0", LosPresence, "Does the audio contain a line-of-sight path?"),
    t!("los-1", LosPresence, "Is there a direct line-of-sight path between the source and the receiver in this audio?"),
    t!("los-2", LosPresence, "Does the sound reach the microphone along an unobstructed direct path?"),
    t!("los-3", LosPresence, "Can a line-of-sight component be heard in this recording?"),
];

static DOPPLER: [Template; 6] = [
    t!("doppler-dir-0", MotionDirection, DOPPLER_DIR),
    t!("doppler-dir-1", MotionDirection, "The first audio is the emitted sound and the second is what the receiver captured. Is the source moving toward or away from the receiver? Answer approaching or receding."),
    t!("doppler-dir-2", MotionDirection, "Compare the original sound in the first audio with the received sound in the second. Is the source approaching or receding?"),
    t!("doppler-pct-0", ShiftPercent, DOPPLER_PCT),
    t!("doppler-pct-1", ShiftPercent, "The first audio is the emitted sound and the second is what the receiver captured. By what percentage has the frequency been shifted?"),
    t!("doppler-pct-2", ShiftPercent, "Compare the original sound in the first audio with the received sound in the second and estimate the Doppler shift in percent."),
];

static DOA: [Template; 6] = [
    t!("doa-side-0", FirstMicrophone, DOA_SIDE),
    t!("doa-side-1", FirstMicrophone, "The first audio comes from the left microphone and the second from the right microphone. Which one hears the sound first, or do both hear it at the same time?"),
    t!("doa-side-2", FirstMicrophone, "Two microphones recorded this sound, left in the first audio and right in the second. Which side does the sound reach first?"),
    t!("doa-samples-0", TdoaSamples, DOA_SAMPLES),
    t!("doa-samples-1", TdoaSamples, "The first audio comes from the left microphone and the second from the right microphone. How many samples later does the right microphone receive the sound?"),
    t!("doa-samples-2", TdoaSamples, "Two microphones recorded this sound, left in the first audio and right in the second. Estimate the time difference of arrival in samples."),
];

static MULTIPATH: [Template; 3] = [
    t!("multipath-0", MultipathSeverity, "How severe is the multipath effect in this audio?"),
    t!("multipath-1", MultipathSeverity, "Rate the reverberation in this recording as rich, moderate or negligible."),
    t!("multipath-2", MultipathSeverity, "How strongly do reflections and reverberation affect this audio?"),
];

static RANGE: [Template; 3] = [
    t!("range-0", TimeOfFlight, "You are given audio data containing both the transmitted pulse and the echo. Please estimate the time of flight."),
    t!("range-1", TimeOfFlight, "This recording holds a transmitted sound pulse followed by its echo. How long after the pulse does the echo arrive?"),
    t!("range-2", TimeOfFlight, "Estimate the delay in milliseconds between the direct pulse and its reflection in this audio."),
];

const DOPPLER_DIR: &str = "You are provided with a two-channel audio recording. The first channel is the origin the sound. The second channel is the received audio. Please determine whether the sound source is approaching or receding.";
const DOPPLER_PCT: &str = "You are provided with a two-channel audio recording. The first channel is the origin the sound. The second channel is the received audio. Please estimate the Doppler shift percentage.";
const DOA_SIDE: &str = "Given a two-channel audio recording, where the first channel is from the left microphone and the second from the right, which microphone receives the sound first?";
const DOA_SAMPLES: &str = "Given a two-channel audio recording, where the first channel is from the left microphone and the second from the right. Please estimate the time difference of arrival.";

/// The closed-form templates of a task.
pub fn templates(task: Task) -> &'static [Template] {
    match task {
        Task::LosDetection => &LOS,
        Task::DopplerEstimation => &DOPPLER,
        Task::DoaEstimation => &DOA,
        Task::MultipathAnalysis => &MULTIPATH,
        Task::RangeEstimation => &RANGE,
    }
}

pub fn template(id: &str) -> Option<&'static Template> {
    Task::ALL
        .iter()
        .flat_map(|t| templates(*t))
        .find(|t| t.id == id)
}

impl AnswerKind {
    pub fn task(self) -> Task {
        match self {
            AnswerKind::LosPresence => Task::LosDetection,
            AnswerKind::MotionDirection | AnswerKind::ShiftPercent => Task::DopplerEstimation,
            AnswerKind::FirstMicrophone | AnswerKind::TdoaSamples => Task::DoaEstimation,
            AnswerKind::MultipathSeverity => Task::MultipathAnalysis,
            AnswerKind::TimeOfFlight => Task::RangeEstimation,
        }
    }

    /// Recognises the kind of a closed-form reference answer.
    pub fn of_reference(task: Task, answer: &str) -> Self {
        match task {
            Task::LosDetection => AnswerKind::LosPresence,
            Task::DopplerEstimation if answer.ends_with("%.") => AnswerKind::ShiftPercent,
            Task::DopplerEstimation => AnswerKind::MotionDirection,
            Task::DoaEstimation if answer.ends_with("samples.") => AnswerKind::TdoaSamples,
            Task::DoaEstimation => AnswerKind::FirstMicrophone,
            Task::MultipathAnalysis => AnswerKind::MultipathSeverity,
            Task::RangeEstimation => AnswerKind::TimeOfFlight,
        }
    }
}

/// The exact closed-form answer for a label.
pub fn render_answer(kind: AnswerKind, gt: &GroundTruth) -> Result<String> {
    let mismatch = || Error::Contract(format!("{kind:?} answer cannot be rendered from a {} label", gt.task()));
    Ok(match (kind, gt) {
        (AnswerKind::LosPresence, GroundTruth::Los { los_present }) => {
            if *los_present { "Yes." } else { "No." }.to_string()
        }
        (AnswerKind::MotionDirection, GroundTruth::Doppler { shift_pct }) => {
            if *shift_pct > 0.0 { "Approaching." } else { "Receding." }.to_string()
        }
        (AnswerKind::ShiftPercent, GroundTruth::Doppler { shift_pct }) => format!("{}%.", fixed(*shift_pct, 2)),
        (AnswerKind::FirstMicrophone, GroundTruth::Doa { tdoa_quantized, .. }) => {
            // A positive lag means the right microphone hears it later.
            match tdoa_quantized.signum() {
                1 => "Left.",
                -1 => "Right.",
                _ => "Front.",
            }
            .to_string()
        }
        (AnswerKind::TdoaSamples, GroundTruth::Doa { tdoa_quantized, .. }) => format!("{tdoa_quantized} samples."),
        (AnswerKind::MultipathSeverity, GroundTruth::Multipath { class, .. }) => format!("{}.", class.as_str()),
        (AnswerKind::TimeOfFlight, GroundTruth::Range { tof_ms, .. }) => format!("{} ms.", fixed(*tof_ms, 1)),
        _ => return Err(mismatch()),
    })
}

/// Fixed-point formatting without a negative zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// A closed-form pair: template drawn from the task's set by `seed`.
pub fn make_closed_qa(task: Task, gt: &GroundTruth, seed: u64) -> Result<QaPair> {
    if gt.task() != task {
        return Err(Error::Contract(format!("{} label supplied for task {task}", gt.task())));
    }
    let set = templates(task);
    let tpl = &set[rng::stream(seed, "template", 0).gen_range(0..set.len())];
    closed_qa_from_template(tpl, gt)
}

pub fn closed_qa_from_template(tpl: &Template, gt: &GroundTruth) -> Result<QaPair> {
    Ok(QaPair {
        question: tpl.question.to_string(),
        answer: render_answer(tpl.kind, gt)?,
        form: QaForm::Closed,
        template_id: tpl.id.to_string(),
    })
}

/// A value read back out of free or closed-form answer text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedAnswer {
    Yes(bool),
    Approaching(bool),
    Number(f64),
    Side(i64),
    Class(MultipathClass),
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)").unwrap())
}

fn first_word<'a>(text: &str, words: &[&'a str]) -> Option<&'a str> {
    let lower = text.to_ascii_lowercase();
    words
        .iter()
        .filter_map(|w| {
            Regex::new(&format!(r"\b{w}\b"))
                .unwrap()
                .find(&lower)
                .map(|m| (m.start(), *w))
        })
        .min()
        .map(|(_, w)| w)
}

/// Reads an answer of the given kind; `None` when nothing usable is found.
pub fn parse_answer(kind: AnswerKind, text: &str) -> Option<ParsedAnswer> {
    match kind {
        AnswerKind::LosPresence => first_word(text, &["yes", "no"]).map(|w| ParsedAnswer::Yes(w == "yes")),
        AnswerKind::MotionDirection => {
            first_word(text, &["approaching", "receding"]).map(|w| ParsedAnswer::Approaching(w == "approaching"))
        }
        AnswerKind::FirstMicrophone => first_word(text, &["left", "right", "front"]).map(|w| {
            ParsedAnswer::Side(match w {
                "left" => 1,
                "right" => -1,
                _ => 0,
            })
        }),
        AnswerKind::MultipathSeverity => first_word(text, &["rich", "moderate", "negligible"]).map(|w| {
            ParsedAnswer::Class(match w {
                "rich" => MultipathClass::Rich,
                "moderate" => MultipathClass::Moderate,
                _ => MultipathClass::Negligible,
            })
        }),
        AnswerKind::ShiftPercent | AnswerKind::TdoaSamples | AnswerKind::TimeOfFlight => number_re()
            .find(text)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .map(ParsedAnswer::Number),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doa(lag: i64) -> GroundTruth {
        GroundTruth::Doa {
            tdoa_samples: lag as f64,
            tdoa_quantized: lag,
            theta_deg: 90.0,
            mic_distance_m: 0.1,
        }
    }

    #[test]
    fn at_least_three_templates_per_kind() {
        for task in Task::ALL {
            let set = templates(task);
            let mut kinds: Vec<_> = set.iter().map(|t| t.kind).collect();
            kinds.dedup();
            for k in kinds {
                assert!(set.iter().filter(|t| t.kind == k).count() >= 3, "{task} {k:?}");
                assert_eq!(k.task(), task);
            }
        }
    }

    #[test]
    fn first_template_of_each_kind_is_the_reference_wording() {
        assert_eq!(LOS[0].question, "Does the audio contain a line-of-sight path?");
        assert!(DOPPLER[0].question.ends_with("approaching or receding."));
        assert!(DOPPLER[3].question.ends_with("Doppler shift percentage."));
        assert!(DOA[0].question.ends_with("which microphone receives the sound first?"));
        assert!(DOA[3].question.ends_with("time difference of arrival."));
        assert_eq!(MULTIPATH[0].question, "How severe is the multipath effect in this audio?");
        assert!(RANGE[0].question.ends_with("Please estimate the time of flight."));
    }

    #[test]
    fn grammar() {
        let r = |k, gt: &GroundTruth| render_answer(k, gt).unwrap();
        assert_eq!(r(AnswerKind::LosPresence, &GroundTruth::Los { los_present: true }), "Yes.");
        assert_eq!(r(AnswerKind::LosPresence, &GroundTruth::Los { los_present: false }), "No.");
        let range = GroundTruth::Range {
            tof_ms: 59.0,
            tof_samples: 944,
            distance_m: 10.1185,
        };
        assert_eq!(r(AnswerKind::TimeOfFlight, &range), "59.0 ms.");
        assert_eq!(r(AnswerKind::TdoaSamples, &doa(-4)), "-4 samples.");
        assert_eq!(r(AnswerKind::FirstMicrophone, &doa(-4)), "Right.");
        assert_eq!(r(AnswerKind::FirstMicrophone, &doa(3)), "Left.");
        assert_eq!(r(AnswerKind::FirstMicrophone, &doa(0)), "Front.");
        let dop = GroundTruth::Doppler { shift_pct: 10.0 };
        assert_eq!(r(AnswerKind::ShiftPercent, &dop), "10.00%.");
        assert_eq!(r(AnswerKind::MotionDirection, &dop), "Approaching.");
        let dop = GroundTruth::Doppler { shift_pct: -14.577 };
        assert_eq!(r(AnswerKind::ShiftPercent, &dop), "-14.58%.");
        assert_eq!(r(AnswerKind::MotionDirection, &dop), "Receding.");
        assert_eq!(r(AnswerKind::ShiftPercent, &GroundTruth::Doppler { shift_pct: -0.001 }), "0.00%.");
        let mp = GroundTruth::Multipath {
            class: MultipathClass::Moderate,
            mean_decay: 9.0,
        };
        assert_eq!(r(AnswerKind::MultipathSeverity, &mp), "Moderate.");
    }

    #[test]
    fn mismatched_label_is_a_contract_error() {
        let gt = GroundTruth::Los { los_present: true };
        assert!(matches!(make_closed_qa(Task::RangeEstimation, &gt, 1), Err(Error::Contract(_))));
        assert!(matches!(render_answer(AnswerKind::TimeOfFlight, &gt), Err(Error::Contract(_))));
    }

    #[test]
    fn template_choice_is_seeded() {
        let gt = doa(2);
        let a = make_closed_qa(Task::DoaEstimation, &gt, 5).unwrap();
        assert_eq!(a, make_closed_qa(Task::DoaEstimation, &gt, 5).unwrap());
        let ids: std::collections::BTreeSet<_> =
            (0..200).map(|s| make_closed_qa(Task::DoaEstimation, &gt, s).unwrap().template_id).collect();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn reference_answers_parse_back() {
        let cases = [
            (Task::LosDetection, "Yes.", ParsedAnswer::Yes(true)),
            (Task::DopplerEstimation, "Receding.", ParsedAnswer::Approaching(false)),
            (Task::DopplerEstimation, "-3.21%.", ParsedAnswer::Number(-3.21)),
            (Task::DoaEstimation, "Front.", ParsedAnswer::Side(0)),
            (Task::DoaEstimation, "-4 samples.", ParsedAnswer::Number(-4.0)),
            (Task::MultipathAnalysis, "Negligible.", ParsedAnswer::Class(MultipathClass::Negligible)),
            (Task::RangeEstimation, "59.0 ms.", ParsedAnswer::Number(59.0)),
        ];
        for (task, text, want) in cases {
            let kind = AnswerKind::of_reference(task, text);
            assert_eq!(parse_answer(kind, text), Some(want), "{text}");
        }
    }

    #[test]
    fn free_text_parsing() {
        assert_eq!(
            parse_answer(AnswerKind::LosPresence, "No, the audio doesn't have a clear LOS path."),
            Some(ParsedAnswer::Yes(false))
        );
        assert_eq!(
            parse_answer(AnswerKind::ShiftPercent, "The estimated Doppler shift is approximately 2.5%."),
            Some(ParsedAnswer::Number(2.5))
        );
        assert_eq!(parse_answer(AnswerKind::TimeOfFlight, "no idea"), None);
        assert_eq!(parse_answer(AnswerKind::MultipathSeverity, "hard to say"), None);
        assert_eq!(
            parse_answer(AnswerKind::MultipathSeverity, "The multipath effect is very rich in this audio"),
            Some(ParsedAnswer::Class(MultipathClass::Rich))
        );
    }
}
