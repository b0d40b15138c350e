//! Open-form QA through an external chat-completion service.

use std::thread;
use std::time::Duration;

use log::warn;
use serde::Deserialize;
use serde_json::json;

use super::manifest::Datapoint;
use super::qa::{QaForm, QaPair};
use crate::error::{Error, Result};
use crate::scenario::{GroundTruth, MultipathClass, Task};

pub const ENV_ENDPOINT: &str = "ACOUSTIC_SIM_LLM_ENDPOINT";
pub const ENV_TOKEN: &str = "ACOUSTIC_SIM_LLM_TOKEN";
pub const ENV_MODEL: &str = "ACOUSTIC_SIM_LLM_MODEL";
/// Relative tolerance for the label value quoted in a generated answer.
pub const NUMERIC_TOLERANCE: f64 = 0.01;

/// Anything that turns a prompt into a completion.
pub trait QaGenerator: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmClientConfig {
    pub endpoint: String,
    /// Read from the environment, never from config files.
    pub token: Option<String>,
    pub timeout: Duration,
    pub model: String,
    pub max_retries: u32,
    pub backoff: Duration,
    /// Concurrent requests allowed.
    pub max_in_flight: usize,
}

impl LlmClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(60),
            model: "default".into(),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// `None` when no endpoint is configured.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.is_empty())?;
        let mut cfg = Self::new(endpoint);
        cfg.token = std::env::var(ENV_TOKEN).ok().filter(|s| !s.is_empty());
        if let Ok(model) = std::env::var(ENV_MODEL) {
            cfg.model = model;
        }
        Some(cfg)
    }
}

/// Chat-completion client over HTTP JSON.
pub struct HttpGenerator {
    config: LlmClientConfig,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(config: LlmClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl QaGenerator for HttpGenerator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp: ChatResponse = req
            .send_json(body)
            .map_err(|e| Error::Client(format!("request failed: {e}")))?
            .into_json()
            .map_err(|e| Error::Client(format!("malformed response: {e}")))?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .or(resp.content)
            .ok_or_else(|| Error::Client("response has no content".into()))
    }
}

/// Facts and instructions sent to the generator.
pub fn open_qa_prompt(dp: &Datapoint) -> String {
    let task = match dp.task {
        Task::LosDetection => "whether a line-of-sight path is present",
        Task::DopplerEstimation => "the Doppler shift between the original (audio 1) and received (audio 2) sound",
        Task::DoaEstimation => "the direction of arrival from a left (audio 1) and right (audio 2) microphone pair",
        Task::MultipathAnalysis => "how severe the multipath effect is",
        Task::RangeEstimation => "the distance to a reflector from a pulse and its echo",
    };
    let facts = serde_json::to_string(&dp.ground_truth).unwrap_or_default();
    format!(
        "Write one question and one answer about {task} for an audio clip.\n\
         Ground truth (JSON, sample rate 16000 Hz, speed of sound 343 m/s): {facts}\n\
         The answer must state the ground-truth value. Reply with JSON only: \
         {{\"question\": \"...\", \"answer\": \"...\"}}"
    )
}

#[derive(Deserialize)]
struct OpenReply {
    question: String,
    answer: String,
}

fn parse_reply(text: &str) -> Option<OpenReply> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    serde_json::from_str(text.get(start..=end)?).ok()
}

/// The value an open answer must quote, or the word it must use.
enum Expect {
    Number(f64),
    Word(&'static str),
}

fn expectation(gt: &GroundTruth) -> Expect {
    match gt {
        GroundTruth::Los { los_present } => Expect::Word(if *los_present { "yes" } else { "no" }),
        GroundTruth::Doppler { shift_pct } => Expect::Number(*shift_pct),
        GroundTruth::Doa { tdoa_quantized, .. } => Expect::Number(*tdoa_quantized as f64),
        GroundTruth::Multipath { class, .. } => Expect::Word(match class {
            MultipathClass::Rich => "rich",
            MultipathClass::Moderate => "moderate",
            MultipathClass::Negligible => "negligible",
        }),
        GroundTruth::Range { tof_ms, .. } => Expect::Number(*tof_ms),
    }
}

/// Whether `answer` carries the label: a number within 1% (sign ignored,
/// since prose often states direction in words) or the class word.
pub fn answer_matches_truth(gt: &GroundTruth, answer: &str) -> bool {
    match expectation(gt) {
        Expect::Number(want) => regex::Regex::new(r"[-+]?\d+(?:\.\d+)?")
            .unwrap()
            .find_iter(answer)
            .filter_map(|m| m.as_str().parse::<f64>().ok())
            .any(|v| {
                let (v, w) = (v.abs(), want.abs());
                if w == 0.0 {
                    v <= NUMERIC_TOLERANCE
                } else {
                    (v - w).abs() / w <= NUMERIC_TOLERANCE
                }
            }),
        Expect::Word(w) => regex::Regex::new(&format!(r"(?i)\b{w}\b")).unwrap().is_match(answer),
    }
}

/// Asks the generator for an open-form pair, retrying with exponential
/// backoff until one passes validation.
pub fn request_open_qa(dp: &Datapoint, generator: &dyn QaGenerator, config: &LlmClientConfig) -> Result<QaPair> {
    let prompt = open_qa_prompt(dp);
    let mut delay = config.backoff;
    let mut last = String::new();
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            thread::sleep(delay);
            delay *= 2;
        }
        match generator.complete(&prompt) {
            Ok(text) => match parse_reply(&text) {
                Some(r) if answer_matches_truth(&dp.ground_truth, &r.answer) => {
                    return Ok(QaPair {
                        question: r.question,
                        answer: r.answer,
                        form: QaForm::Open,
                        template_id: "open".into(),
                    })
                }
                Some(_) => last = "answer does not state the ground truth".into(),
                None => last = "reply is not a question/answer object".into(),
            },
            Err(e) => last = e.to_string(),
        }
        warn!("{}: open-form attempt {} failed: {last}", dp.id, attempt + 1);
    }
    Err(Error::Client(format!("open_form_failed for {}: {last}", dp.id)))
}
