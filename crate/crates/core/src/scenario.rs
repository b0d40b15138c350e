//! Task scenarios: which channel components are on, their sampled
//! parameters, and the rendering pipeline that turns them into audio.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::array::{binaural_cirs, tdoa_quantized, tdoa_samples, ArraySpec, MIC_DISTANCE_RANGE, THETA_RANGE};
use crate::channel::{
    compose_cir, ComponentKind, ImpulseResponse, PathKind, PathSpec, ReverbSpec, LOS_AMPLITUDE,
    REFLECTION_AMPLITUDE, REFLECTION_DECAY_FACTOR, REFLECTION_FREQ_FACTOR, REVERB_BANDS,
};
use crate::doppler::{apply_doppler, doppler_shift_pct, DopplerSpec, DISTANCE_RANGE, SPEED_RANGE};
use crate::dsp::{fft_convolve, gaussian_noise, Signal, FS, SPEED_OF_SOUND};
use crate::error::{ensure, Error, Result};
use crate::rng::{self, derive_seed, Rng};
use crate::sources::{chirp_clip, gen_chirp, ChirpSpec, SourcePool, SOURCE_PEAK};

/// Peak level of every rendered item.
pub const OUTPUT_PEAK: f64 = SOURCE_PEAK;
/// Latest LOS arrival, seconds.
pub const LOS_DELAY_MAX_S: f64 = 0.005;
/// Early reflections arrive in `(LOS + 1 ms, LOS + 50 ms]`.
pub const REFLECTION_WINDOW_S: (f64, f64) = (0.001, 0.05);
pub const MAX_REFLECTIONS: usize = 5;
/// Reflector distance for the ranging echo, metres.
pub const RANGE_DISTANCE: (f64, f64) = (0.5, 25.0);
pub const RANGE_ECHO_AMPLITUDE: (f64, f64) = (0.3, 0.5);
/// Other reflections in a ranging scene stay well under the echo.
pub const RANGE_CLUTTER_AMPLITUDE: (f64, f64) = (0.1, 0.15);
/// Minimum spacing between clutter and the echo, seconds.
pub const RANGE_CLUTTER_GAP_S: f64 = 0.002;
/// Per-band spread of decay rates around the scene's mean.
pub const REVERB_JITTER: f64 = 0.1;
/// Mean-decay intervals drawn for each multipath class, leaving a gap
/// around the class boundaries at 6 and 20.
pub const RICH_DECAY: (f64, f64) = (1.9, 5.4);
pub const MODERATE_DECAY: (f64, f64) = (6.6, 18.0);
pub const NEGLIGIBLE_DECAY: (f64, f64) = (22.0, 49.0);
pub const DEFAULT_SNR_DB: (f64, f64) = (0.0, 40.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    LosDetection,
    DopplerEstimation,
    DoaEstimation,
    MultipathAnalysis,
    RangeEstimation,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::LosDetection,
        Task::DopplerEstimation,
        Task::DoaEstimation,
        Task::MultipathAnalysis,
        Task::RangeEstimation,
    ];

    /// Short name used in ids, file names and seed tags.
    pub fn tag(self) -> &'static str {
        match self {
            Task::LosDetection => "los",
            Task::DopplerEstimation => "doppler",
            Task::DoaEstimation => "doa",
            Task::MultipathAnalysis => "multipath",
            Task::RangeEstimation => "range",
        }
    }

    pub fn uses_pool(self) -> bool {
        self != Task::RangeEstimation
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match norm.as_str() {
            "los" | "los_detection" | "losdetection" => Task::LosDetection,
            "doppler" | "doppler_estimation" | "dopplerestimation" => Task::DopplerEstimation,
            "doa" | "doa_estimation" | "doaestimation" => Task::DoaEstimation,
            "multipath" | "multipath_analysis" | "multipathanalysis" => Task::MultipathAnalysis,
            "range" | "range_estimation" | "rangeestimation" => Task::RangeEstimation,
            _ => return Err(Error::Parameter(format!("unknown task {s:?}"))),
        })
    }
}

/// How a scene's noise level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrPolicy {
    Noiseless,
    Fixed { db: f64 },
    Uniform { min_db: f64, max_db: f64 },
}

impl Default for SnrPolicy {
    fn default() -> Self {
        SnrPolicy::Uniform {
            min_db: DEFAULT_SNR_DB.0,
            max_db: DEFAULT_SNR_DB.1,
        }
    }
}

impl SnrPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SnrPolicy::Noiseless => Ok(()),
            SnrPolicy::Fixed { db } => {
                ensure!(db.is_finite(), Parameter, "fixed SNR must be finite");
                Ok(())
            }
            SnrPolicy::Uniform { min_db, max_db } => {
                ensure!(
                    min_db.is_finite() && max_db.is_finite() && min_db <= max_db,
                    Parameter,
                    "SNR range [{min_db}, {max_db}] is invalid"
                );
                Ok(())
            }
        }
    }

    fn draw(&self, rng: &mut Rng) -> Option<f64> {
        match *self {
            SnrPolicy::Noiseless => None,
            SnrPolicy::Fixed { db } => Some(db),
            SnrPolicy::Uniform { min_db, max_db } if min_db == max_db => Some(min_db),
            SnrPolicy::Uniform { min_db, max_db } => Some(rng.gen_range(min_db..max_db)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultipathClass {
    Rich,
    Moderate,
    Negligible,
}

impl MultipathClass {
    pub const ALL: [MultipathClass; 3] = [MultipathClass::Rich, MultipathClass::Moderate, MultipathClass::Negligible];

    /// Class of a mean decay rate: below 6 rich, below 20 moderate.
    pub fn from_decay(lambda: f64) -> Self {
        if lambda < 6.0 {
            MultipathClass::Rich
        } else if lambda < 20.0 {
            MultipathClass::Moderate
        } else {
            MultipathClass::Negligible
        }
    }

    /// Class of a reverberation time, through `RT60 = 3 ln 10 / (2 lambda)`.
    pub fn from_rt60(rt60_s: f64) -> Self {
        Self::from_decay(3.0 * std::f64::consts::LN_10 / (2.0 * rt60_s))
    }

    fn decay_interval(self) -> (f64, f64) {
        match self {
            MultipathClass::Rich => RICH_DECAY,
            MultipathClass::Moderate => MODERATE_DECAY,
            MultipathClass::Negligible => NEGLIGIBLE_DECAY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MultipathClass::Rich => "Rich",
            MultipathClass::Moderate => "Moderate",
            MultipathClass::Negligible => "Negligible",
        }
    }
}

pub fn classify_multipath(reverb: &ReverbSpec) -> MultipathClass {
    MultipathClass::from_decay(reverb.mean_decay())
}

/// Where the dry sound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRef {
    Pool { index: usize },
    Chirp(ChirpSpec),
}

/// One fully specified scene. Everything needed to render it is here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub task: Task,
    pub seed: u64,
    pub source: SourceRef,
    pub los: Option<PathSpec>,
    /// Empty when early reflections are off.
    pub reflections: Vec<PathSpec>,
    pub reverb: Option<ReverbSpec>,
    pub doppler: Option<DopplerSpec>,
    pub array: Option<ArraySpec>,
    /// `None` renders without noise.
    pub snr_db: Option<f64>,
}

/// The label of one scene; the variant always matches the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Los {
        los_present: bool,
    },
    Doppler {
        shift_pct: f64,
    },
    Doa {
        tdoa_samples: f64,
        tdoa_quantized: i64,
        theta_deg: f64,
        mic_distance_m: f64,
    },
    Multipath {
        class: MultipathClass,
        mean_decay: f64,
    },
    Range {
        tof_ms: f64,
        tof_samples: usize,
        distance_m: f64,
    },
}

impl GroundTruth {
    pub fn task(&self) -> Task {
        match self {
            GroundTruth::Los { .. } => Task::LosDetection,
            GroundTruth::Doppler { .. } => Task::DopplerEstimation,
            GroundTruth::Doa { .. } => Task::DoaEstimation,
            GroundTruth::Multipath { .. } => Task::MultipathAnalysis,
            GroundTruth::Range { .. } => Task::RangeEstimation,
        }
    }
}

/// Seed of item `index` of `task` under `master_seed`.
pub fn scenario_seed(task: Task, master_seed: u64, index: u64) -> u64 {
    derive_seed(master_seed, task.tag(), index)
}

/// Draws scene `index` of `task`; fully determined by the arguments.
pub fn sample_scenario(
    task: Task,
    master_seed: u64,
    index: u64,
    pool: &SourcePool,
    snr: SnrPolicy,
) -> Result<ScenarioInstance> {
    sample_from_seed(task, scenario_seed(task, master_seed, index), pool, snr)
}

/// Same as [`sample_scenario`] for an already derived scene seed.
pub fn sample_from_seed(task: Task, seed: u64, pool: &SourcePool, snr: SnrPolicy) -> Result<ScenarioInstance> {
    ensure!(
        !task.uses_pool() || !pool.is_empty(),
        Parameter,
        "task {task} needs a non-empty source pool"
    );
    let mut inst = sample_channel(task, seed, snr)?;
    if let SourceRef::Pool { index } = &mut inst.source {
        *index = rng::stream(seed, "source", 0).gen_range(0..pool.len());
    }
    Ok(inst)
}

/// The scene for `seed` without choosing a pool clip (the pool index is
/// left at 0). Channel parameters and SNR match [`sample_from_seed`].
pub fn sample_channel(task: Task, seed: u64, snr: SnrPolicy) -> Result<ScenarioInstance> {
    snr.validate()?;
    let mut rng = rng::stream(seed, "scenario", 0);
    let toggle = |rng: &mut Rng| rng.gen_bool(0.5);

    let source = if task.uses_pool() {
        SourceRef::Pool { index: 0 }
    } else {
        SourceRef::Chirp(ChirpSpec::sample(&mut rng))
    };

    let los_delay_n = rng.gen_range(0..=(LOS_DELAY_MAX_S * FS) as usize);
    let los_delay = los_delay_n as f64 / FS;
    let los_spec = PathSpec::los(los_delay, rng.gen_range(LOS_AMPLITUDE));

    let mut inst = ScenarioInstance {
        task,
        seed,
        source,
        los: None,
        reflections: Vec::new(),
        reverb: None,
        doppler: None,
        array: None,
        snr_db: None,
    };

    match task {
        Task::LosDetection => {
            let present = toggle(&mut rng);
            inst.los = present.then_some(los_spec);
            // A negative still needs a channel: force at least one reflection.
            if !present || toggle(&mut rng) {
                inst.reflections = sample_reflections(&mut rng, los_delay, REFLECTION_AMPLITUDE.into_inner());
            }
            inst.reverb = toggle(&mut rng).then(|| sample_reverb(&mut rng, None));
            inst.doppler = toggle(&mut rng).then(|| sample_doppler(&mut rng));
        }
        Task::DopplerEstimation => {
            inst.los = toggle(&mut rng).then_some(los_spec);
            if toggle(&mut rng) {
                inst.reflections = sample_reflections(&mut rng, los_delay, REFLECTION_AMPLITUDE.into_inner());
            }
            inst.reverb = toggle(&mut rng).then(|| sample_reverb(&mut rng, None));
            inst.doppler = Some(sample_doppler(&mut rng));
            if inst.los.is_none() && inst.reflections.is_empty() && inst.reverb.is_none() {
                inst.los = Some(los_spec);
            }
        }
        Task::DoaEstimation => {
            inst.los = Some(los_spec);
            if toggle(&mut rng) {
                inst.reflections = sample_reflections(&mut rng, los_delay, REFLECTION_AMPLITUDE.into_inner());
            }
            inst.reverb = toggle(&mut rng).then(|| sample_reverb(&mut rng, None));
            inst.doppler = toggle(&mut rng).then(|| sample_doppler(&mut rng));
            inst.array = Some(ArraySpec {
                mic_distance_m: rng.gen_range(MIC_DISTANCE_RANGE),
                theta_deg: rng.gen_range(THETA_RANGE),
            });
        }
        Task::MultipathAnalysis => {
            inst.los = toggle(&mut rng).then_some(los_spec);
            if toggle(&mut rng) {
                inst.reflections = sample_reflections(&mut rng, los_delay, REFLECTION_AMPLITUDE.into_inner());
            }
            let class = MultipathClass::ALL[rng.gen_range(0..3)];
            inst.reverb = Some(sample_reverb(&mut rng, Some(class)));
            inst.doppler = toggle(&mut rng).then(|| sample_doppler(&mut rng));
        }
        Task::RangeEstimation => {
            inst.los = Some(los_spec);
            let distance = rng.gen_range(RANGE_DISTANCE.0..=RANGE_DISTANCE.1);
            let tof_n = (2.0 * distance / SPEED_OF_SOUND * FS).round() as usize;
            let mut echo = PathSpec::reflection(
                (los_delay_n + tof_n) as f64 / FS,
                rng.gen_range(RANGE_ECHO_AMPLITUDE.0..=RANGE_ECHO_AMPLITUDE.1),
                1.0,
                1.0,
            );
            echo.target = true;
            if toggle(&mut rng) {
                inst.reflections = sample_reflections(&mut rng, los_delay, RANGE_CLUTTER_AMPLITUDE);
                // Clutter that overlaps the echo would make it unresolvable.
                for r in inst.reflections.iter_mut() {
                    while (r.delay_s - echo.delay_s).abs() < RANGE_CLUTTER_GAP_S {
                        r.delay_s = los_delay + rng.gen_range(REFLECTION_WINDOW_S.0..=REFLECTION_WINDOW_S.1);
                    }
                }
            }
            inst.reflections.push(echo);
            inst.reverb = toggle(&mut rng).then(|| sample_reverb(&mut rng, None));
            inst.doppler = toggle(&mut rng).then(|| sample_doppler(&mut rng));
        }
    }

    if let Some(reverb) = inst.reverb.as_mut() {
        reverb.onset_s = inst
            .los
            .iter()
            .chain(&inst.reflections)
            .map(|p| p.delay_s)
            .fold(f64::INFINITY, f64::min);
        if !reverb.onset_s.is_finite() {
            reverb.onset_s = los_delay;
        }
    }
    inst.snr_db = snr.draw(&mut rng);
    inst.check_legality()?;
    Ok(inst)
}

fn sample_reflections(rng: &mut Rng, los_delay: f64, amplitude: (f64, f64)) -> Vec<PathSpec> {
    let count = rng.gen_range(1..=MAX_REFLECTIONS);
    let mut out: Vec<PathSpec> = (0..count)
        .map(|_| {
            let lag = REFLECTION_WINDOW_S.0 + (REFLECTION_WINDOW_S.1 - REFLECTION_WINDOW_S.0) * (1.0 - rng.gen::<f64>());
            PathSpec::reflection(
                los_delay + lag,
                rng.gen_range(amplitude.0..=amplitude.1),
                rng.gen_range(REFLECTION_FREQ_FACTOR),
                rng.gen_range(REFLECTION_DECAY_FACTOR),
            )
        })
        .collect();
    out.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    out
}

/// Six per-band decay rates with mean drawn log-uniformly, either from one
/// class interval or from the whole span.
fn sample_reverb(rng: &mut Rng, class: Option<MultipathClass>) -> ReverbSpec {
    let (lo, hi) = class.map_or((RICH_DECAY.0, NEGLIGIBLE_DECAY.1), MultipathClass::decay_interval);
    let mean = (rng.gen_range(lo.ln()..=hi.ln())).exp();
    let jitter: Vec<f64> = (0..REVERB_BANDS)
        .map(|_| rng.gen_range(1.0 - REVERB_JITTER..=1.0 + REVERB_JITTER))
        .collect();
    let jitter_mean = jitter.iter().sum::<f64>() / REVERB_BANDS as f64;
    ReverbSpec::new(jitter.iter().map(|j| mean * j / jitter_mean).collect(), 0.0)
}

fn sample_doppler(rng: &mut Rng) -> DopplerSpec {
    DopplerSpec {
        speed_mps: rng.gen_range(SPEED_RANGE),
        initial_distance_m: rng.gen_range(DISTANCE_RANGE),
    }
}

impl ScenarioInstance {
    /// Checks the component pattern against the task's configuration row
    /// and every parameter against its range.
    pub fn check_legality(&self) -> Result<()> {
        let illegal = |what: &str| Err(Error::Scenario(format!("{}: {what}", self.task)));
        if self.array.is_some() != (self.task == Task::DoaEstimation) {
            return illegal("microphone array must be on exactly for DoA scenes");
        }
        let targets = self.reflections.iter().filter(|r| r.target).count();
        match self.task {
            Task::DoaEstimation | Task::RangeEstimation if self.los.is_none() => return illegal("LOS must be on"),
            Task::DopplerEstimation if self.doppler.is_none() => return illegal("Doppler must be on"),
            Task::MultipathAnalysis if self.reverb.is_none() => return illegal("reverberation must be on"),
            Task::LosDetection if self.los.is_none() && self.reflections.is_empty() => {
                return illegal("a LOS-free scene needs a reflection")
            }
            Task::RangeEstimation if targets != 1 => return illegal("exactly one ranging echo required"),
            _ => {}
        }
        if self.task != Task::RangeEstimation && targets != 0 {
            return illegal("only ranging scenes carry a target echo");
        }
        if matches!(self.source, SourceRef::Chirp(_)) != (self.task == Task::RangeEstimation) {
            return illegal("chirp sources are used exactly for ranging");
        }
        if self.los.is_none() && self.reflections.is_empty() && self.reverb.is_none() {
            return illegal("channel has no components");
        }
        if let Some(los) = &self.los {
            ensure!(los.kind == PathKind::Los, Scenario, "LOS slot holds a reflection");
            los.validate()?;
        }
        for r in &self.reflections {
            ensure!(r.kind == PathKind::EarlyReflection, Scenario, "reflection slot holds a LOS path");
            r.validate()?;
        }
        if let Some(rv) = &self.reverb {
            rv.validate()?;
        }
        if let Some(d) = &self.doppler {
            d.validate()?;
        }
        if let Some(a) = &self.array {
            a.validate()?;
        }
        if let SourceRef::Chirp(c) = &self.source {
            c.validate()?;
        }
        if let Some(snr) = self.snr_db {
            ensure!(snr.is_finite(), Scenario, "SNR must be finite");
        }
        Ok(())
    }

    /// All discrete paths, LOS first.
    pub fn paths(&self) -> Vec<PathSpec> {
        self.los.iter().chain(&self.reflections).copied().collect()
    }

    /// Base (single-microphone) channel response.
    pub fn cir(&self) -> Result<ImpulseResponse> {
        compose_cir(&self.paths(), self.reverb.as_ref(), derive_seed(self.seed, "reverb", 0))
    }

    /// Label implied by the sampled parameters.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        Ok(match self.task {
            Task::LosDetection => GroundTruth::Los {
                los_present: self.los.is_some(),
            },
            Task::DopplerEstimation => GroundTruth::Doppler {
                shift_pct: doppler_shift_pct(self.doppler.as_ref().ok_or_else(|| missing("doppler"))?),
            },
            Task::DoaEstimation => {
                let a = self.array.as_ref().ok_or_else(|| missing("array"))?;
                GroundTruth::Doa {
                    tdoa_samples: tdoa_samples(a),
                    tdoa_quantized: tdoa_quantized(a),
                    theta_deg: a.theta_deg,
                    mic_distance_m: a.mic_distance_m,
                }
            }
            Task::MultipathAnalysis => {
                let r = self.reverb.as_ref().ok_or_else(|| missing("reverb"))?;
                GroundTruth::Multipath {
                    class: classify_multipath(r),
                    mean_decay: r.mean_decay(),
                }
            }
            Task::RangeEstimation => {
                let los = self.los.as_ref().ok_or_else(|| missing("los"))?;
                let echo = self.reflections.iter().find(|r| r.target).ok_or_else(|| missing("echo"))?;
                let tof_samples = echo.delay_samples() - los.delay_samples();
                let tof_ms = tof_samples as f64 * 1000.0 / FS;
                GroundTruth::Range {
                    tof_ms,
                    tof_samples,
                    distance_m: SPEED_OF_SOUND * tof_ms / 1000.0 / 2.0,
                }
            }
        })
    }

    /// The dry source clip.
    pub fn source_signal(&self, pool: &SourcePool) -> Result<Signal> {
        match &self.source {
            SourceRef::Pool { index } => pool
                .get(*index)
                .map(|e| e.signal.clone())
                .ok_or_else(|| Error::Render(format!("source index {index} outside pool of {}", pool.len()))),
            SourceRef::Chirp(spec) => chirp_clip(spec),
        }
    }

    /// The transmitted pulse as it reaches the channel (time-scaled when the
    /// scene moves), for matched filtering a ranging scene.
    pub fn reference_pulse(&self) -> Result<Signal> {
        let SourceRef::Chirp(spec) = &self.source else {
            return Err(Error::Scenario("not a ranging scene".into()));
        };
        let Some(d) = &self.doppler else {
            return gen_chirp(spec);
        };
        // Same time map as the rendered clip, so interpolation effects match.
        let moved = apply_doppler(&chirp_clip(spec)?, d)?;
        let s = moved.samples();
        let first = s.iter().position(|v| *v != 0.0).unwrap_or(0);
        let last = s.iter().rposition(|v| *v != 0.0).unwrap_or(0);
        Signal::new(s[first..=last].to_vec())
    }
}

fn missing(what: &str) -> Error {
    Error::Scenario(format!("scene lacks its {what} component"))
}

/// Re-derives a label from rendered channel responses alone.
pub fn label_from_cirs(task: Task, cirs: &[ImpulseResponse]) -> Option<GroundTruthLabel> {
    let first = cirs.first()?;
    match task {
        Task::LosDetection => Some(GroundTruthLabel::LosPresent(first.has_los())),
        Task::DoaEstimation => {
            let (l, r) = (first.first_arrival()? as i64, cirs.get(1)?.first_arrival()? as i64);
            Some(GroundTruthLabel::TdoaSamples(r - l))
        }
        Task::RangeEstimation => {
            let los = first.los()?.delay_samples;
            let echo = first
                .component_log()
                .iter()
                .find(|c| c.target && c.kind == ComponentKind::EarlyReflection)?
                .delay_samples;
            Some(GroundTruthLabel::TofSamples(echo - los))
        }
        Task::DopplerEstimation | Task::MultipathAnalysis => None,
    }
}

/// Discrete labels recoverable from a component log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruthLabel {
    LosPresent(bool),
    TdoaSamples(i64),
    TofSamples(usize),
}

/// A rendered scene.
#[derive(Debug, Clone)]
pub struct Rendered {
    /// One channel, or left/right for DoA scenes.
    pub channels: Vec<Signal>,
    /// The dry source, peak-normalised.
    pub source: Signal,
    /// The response per channel.
    pub cirs: Vec<ImpulseResponse>,
    pub ground_truth: GroundTruth,
}

/// Source, then Doppler, then the channel (per microphone), then noise,
/// then a joint peak normalisation. Output length equals the source clip.
pub fn render(inst: &ScenarioInstance, pool: &SourcePool) -> Result<Rendered> {
    inst.check_legality()?;
    let source = inst.source_signal(pool)?;
    let clip_len = source.len();
    let moved = match &inst.doppler {
        Some(d) => apply_doppler(&source, d)?,
        None => source.clone(),
    };
    let base = inst.cir()?;
    let cirs = match &inst.array {
        Some(a) => {
            let (l, r) = binaural_cirs(&base, a)?;
            vec![l, r]
        }
        None => vec![base],
    };
    let mut channels = cirs
        .iter()
        .enumerate()
        .map(|(ch, h)| {
            let wet = fft_convolve(&moved, h.samples())?.fit_to(clip_len);
            match inst.snr_db {
                Some(snr) => add_noise_at_snr(&wet, snr, derive_seed(inst.seed, "noise", ch as u64)),
                None => Ok(wet),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let peak = channels.iter().map(Signal::peak).fold(0.0, f64::max);
    ensure!(peak > 0.0, Render, "rendered {} scene {} is silent", inst.task, inst.seed);
    channels = channels.iter().map(|c| c.scaled(OUTPUT_PEAK / peak)).collect();
    Ok(Rendered {
        channels,
        source,
        cirs,
        ground_truth: inst.ground_truth()?,
    })
}

/// Adds white Gaussian noise at `snr_db` relative to the signal power over
/// its active span (first to last sample above -60 dB of peak). An infinite
/// SNR returns the input unchanged.
pub fn add_noise_at_snr(x: &Signal, snr_db: f64, seed: u64) -> Result<Signal> {
    ensure!(!snr_db.is_nan(), Parameter, "SNR is NaN");
    ensure!(!x.is_silent(), Parameter, "cannot set an SNR on a silent signal");
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    let s = x.samples();
    let floor = 1e-3 * x.peak();
    let first = s.iter().position(|v| v.abs() >= floor).unwrap();
    let last = s.iter().rposition(|v| v.abs() >= floor).unwrap();
    let active = &s[first..=last];
    let power = active.iter().map(|v| v * v).sum::<f64>() / active.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = gaussian_noise(s.len(), seed)?;
    Ok(Signal::from_vec(
        s.iter().zip(noise.samples()).map(|(v, n)| v + sigma * n).collect(),
    ))
}
