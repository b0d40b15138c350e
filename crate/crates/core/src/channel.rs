//! Channel impulse response synthesis.
//!
//! A CIR is the sum of discrete paths (the line-of-sight arrival and early
//! reflections), each a short damped sinusoid placed at an integer-sample
//! delay, plus an optional reverberation tail built from band-filtered,
//! exponentially decaying Gaussian noise.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dsp::{design_bandpass, filter_apply, gaussian_noise, Signal, FS};
use crate::error::{ensure, Result};

/// Centre frequency of every path kernel before modification, Hz.
pub const BASE_FREQ_HZ: f64 = 2000.0;
/// Decay rate of every path kernel before modification, 1/s.
pub const BASE_DECAY_HZ: f64 = 8000.0;
/// Length of a path kernel, seconds.
pub const PATH_DURATION_S: f64 = 0.01;

pub const LOS_AMPLITUDE: RangeInclusive<f64> = 5.0..=20.0;
pub const REFLECTION_AMPLITUDE: RangeInclusive<f64> = 0.1..=0.5;
pub const REFLECTION_FREQ_FACTOR: RangeInclusive<f64> = 0.8..=1.2;
pub const REFLECTION_DECAY_FACTOR: RangeInclusive<f64> = 1.0..=1.5;

/// Number of reverberation subbands.
pub const REVERB_BANDS: usize = 6;
/// Subband edges in Hz. The top edge sits just under Nyquist so the
/// bandpass design stays well posed.
pub const REVERB_BAND_EDGES: [(f64, f64); REVERB_BANDS] = [
    (50.0, 200.0),
    (200.0, 500.0),
    (500.0, 1000.0),
    (1000.0, 2000.0),
    (2000.0, 4000.0),
    (4000.0, 0.999 * FS / 2.0),
];
pub const REVERB_DECAY: RangeInclusive<f64> = 1.5..=60.0;
pub const REVERB_DURATION_S: f64 = 2.0;
pub const REVERB_FILTER_ORDER: usize = 4;
/// Default tail level relative to unit-variance noise.
pub const REVERB_LEVEL: f64 = 0.02;

/// Amplitude envelope of a subband with decay rate `lambda` at time `t`.
///
/// The energy falls as `exp(-4 lambda t)`, so RT60 = `3 ln(10) / (2 lambda)`:
/// 2.3 s at 1.5 and 58 ms at 60.
pub fn decay_envelope(lambda: f64, t: f64) -> f64 {
    (-2.0 * lambda * t).exp()
}

/// RT60 implied by a uniform subband decay rate.
pub fn rt60_for_decay(lambda: f64) -> f64 {
    3.0 * std::f64::consts::LN_10 / (2.0 * lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Los,
    EarlyReflection,
}

/// One discrete arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub kind: PathKind,
    pub delay_s: f64,
    pub amplitude: f64,
    pub freq_factor: f64,
    pub decay_factor: f64,
    /// Marks the reflection whose delay is a controlled label (range echo).
    #[serde(default)]
    pub target: bool,
}

impl PathSpec {
    pub fn los(delay_s: f64, amplitude: f64) -> Self {
        Self {
            kind: PathKind::Los,
            delay_s,
            amplitude,
            freq_factor: 1.0,
            decay_factor: 1.0,
            target: false,
        }
    }

    pub fn reflection(delay_s: f64, amplitude: f64, freq_factor: f64, decay_factor: f64) -> Self {
        Self {
            kind: PathKind::EarlyReflection,
            delay_s,
            amplitude,
            freq_factor,
            decay_factor,
            target: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.delay_s.is_finite() && self.delay_s >= 0.0,
            Spec,
            "path delay {} s must be finite and non-negative",
            self.delay_s
        );
        match self.kind {
            PathKind::Los => {
                ensure!(
                    LOS_AMPLITUDE.contains(&self.amplitude),
                    Spec,
                    "LOS amplitude {} outside {:?}",
                    self.amplitude,
                    LOS_AMPLITUDE
                );
                ensure!(
                    self.freq_factor == 1.0 && self.decay_factor == 1.0,
                    Spec,
                    "LOS path must use unmodified frequency and decay"
                );
            }
            PathKind::EarlyReflection => {
                ensure!(
                    REFLECTION_AMPLITUDE.contains(&self.amplitude),
                    Spec,
                    "reflection amplitude {} outside {:?}",
                    self.amplitude,
                    REFLECTION_AMPLITUDE
                );
                ensure!(
                    REFLECTION_FREQ_FACTOR.contains(&self.freq_factor),
                    Spec,
                    "reflection frequency factor {} outside {:?}",
                    self.freq_factor,
                    REFLECTION_FREQ_FACTOR
                );
                ensure!(
                    REFLECTION_DECAY_FACTOR.contains(&self.decay_factor),
                    Spec,
                    "reflection decay factor {} outside {:?}",
                    self.decay_factor,
                    REFLECTION_DECAY_FACTOR
                );
            }
        }
        Ok(())
    }

    pub fn delay_samples(&self) -> usize {
        (self.delay_s * FS).round() as usize
    }
}

/// Parameters of the reverberation tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverbSpec {
    pub decay_rates: Vec<f64>,
    pub band_edges: Vec<(f64, f64)>,
    pub duration_s: f64,
    pub onset_s: f64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    REVERB_LEVEL
}

impl ReverbSpec {
    pub fn new(decay_rates: Vec<f64>, onset_s: f64) -> Self {
        Self {
            decay_rates,
            band_edges: REVERB_BAND_EDGES.to_vec(),
            duration_s: REVERB_DURATION_S,
            onset_s,
            level: REVERB_LEVEL,
        }
    }

    /// All six subbands share `lambda`.
    pub fn uniform(lambda: f64, onset_s: f64) -> Self {
        Self::new(vec![lambda; REVERB_BANDS], onset_s)
    }

    pub fn mean_decay(&self) -> f64 {
        self.decay_rates.iter().sum::<f64>() / self.decay_rates.len().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.decay_rates.len() == REVERB_BANDS,
            Spec,
            "expected {REVERB_BANDS} decay rates, got {}",
            self.decay_rates.len()
        );
        ensure!(
            self.decay_rates.iter().all(|l| REVERB_DECAY.contains(l)),
            Spec,
            "decay rates {:?} outside {:?}",
            self.decay_rates,
            REVERB_DECAY
        );
        ensure!(
            self.band_edges == REVERB_BAND_EDGES,
            Spec,
            "band edges must be the six standard subbands"
        );
        ensure!(
            self.duration_s == REVERB_DURATION_S,
            Spec,
            "reverb duration must be {REVERB_DURATION_S} s"
        );
        ensure!(
            self.onset_s.is_finite() && self.onset_s >= 0.0,
            Spec,
            "reverb onset must be non-negative"
        );
        ensure!(
            self.level.is_finite() && self.level > 0.0,
            Spec,
            "reverb level must be positive"
        );
        Ok(())
    }

    pub fn len_samples(&self) -> usize {
        (self.duration_s * FS).round() as usize
    }

    pub fn onset_samples(&self) -> usize {
        (self.onset_s * FS).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Los,
    EarlyReflection,
    ReverbTail,
    /// Whole-response shift applied when deriving one channel of a mic pair.
    ArrayDelay,
}

impl From<PathKind> for ComponentKind {
    fn from(k: PathKind) -> Self {
        match k {
            PathKind::Los => ComponentKind::Los,
            PathKind::EarlyReflection => ComponentKind::EarlyReflection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub kind: ComponentKind,
    pub delay_samples: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub target: bool,
}

/// A sampled CIR plus a record of what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    samples: Signal,
    component_log: Vec<ComponentEntry>,
}

impl ImpulseResponse {
    pub fn samples(&self) -> &Signal {
        &self.samples
    }

    pub fn component_log(&self) -> &[ComponentEntry] {
        &self.component_log
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Earliest delay of any path or tail component.
    pub fn first_arrival(&self) -> Option<usize> {
        self.component_log
            .iter()
            .filter(|c| c.kind != ComponentKind::ArrayDelay)
            .map(|c| c.delay_samples)
            .min()
    }

    pub fn los(&self) -> Option<&ComponentEntry> {
        self.component_log.iter().find(|c| c.kind == ComponentKind::Los)
    }

    pub fn has_los(&self) -> bool {
        self.los().is_some()
    }

    /// The same response `shift` samples later, with the shift logged.
    pub fn delayed(&self, shift: usize) -> Self {
        let mut log: Vec<ComponentEntry> = self
            .component_log
            .iter()
            .map(|c| ComponentEntry {
                delay_samples: c.delay_samples + shift,
                ..*c
            })
            .collect();
        if shift > 0 {
            log.push(ComponentEntry {
                kind: ComponentKind::ArrayDelay,
                delay_samples: shift,
                amplitude: 1.0,
                target: false,
            });
        }
        Self {
            samples: self.samples.delayed(shift),
            component_log: log,
        }
    }
}

/// `cos(2 pi f n / fs) * exp(-decay n / fs)` over `round(duration * fs)` samples.
pub fn damped_sinusoid(freq_hz: f64, decay_hz: f64, duration_s: f64, fs: f64) -> Result<Signal> {
    ensure!(freq_hz > 0.0 && freq_hz < fs / 2.0, Parameter, "kernel frequency {freq_hz} Hz out of range");
    ensure!(decay_hz > 0.0 && decay_hz.is_finite(), Parameter, "kernel decay must be positive");
    ensure!(duration_s > 0.0 && duration_s.is_finite(), Parameter, "kernel duration must be positive");
    let n = (duration_s * fs).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * freq_hz * t).cos() * (-decay_hz * t).exp()
        })
        .collect();
    Ok(Signal::from_vec(samples))
}

/// The placed kernel for one path: `(delay_samples, amplitude * z)`.
pub fn synth_path(spec: &PathSpec) -> Result<(usize, Signal)> {
    spec.validate()?;
    let z = damped_sinusoid(
        BASE_FREQ_HZ * spec.freq_factor,
        BASE_DECAY_HZ * spec.decay_factor,
        PATH_DURATION_S,
        FS,
    )?;
    Ok((spec.delay_samples(), z.scaled(spec.amplitude)))
}

/// Unit-level reverberation: six bandpassed copies of one Gaussian noise
/// draw, each under its own decay envelope, summed.
pub fn synth_reverb(spec: &ReverbSpec, seed: u64) -> Result<Signal> {
    spec.validate()?;
    let n = spec.len_samples();
    let noise = gaussian_noise(n, seed)?;
    let mut out = vec![0.0; n];
    for (&lambda, &(lo, hi)) in spec.decay_rates.iter().zip(&spec.band_edges) {
        let band = filter_apply(&design_bandpass(REVERB_FILTER_ORDER, lo, hi, FS)?, &noise);
        for (i, (acc, s)) in out.iter_mut().zip(band.samples()).enumerate() {
            *acc += s * decay_envelope(lambda, i as f64 / FS);
        }
    }
    Ok(Signal::from_vec(out))
}

/// Sums path kernels and the optional tail into one response.
pub fn compose_cir(paths: &[PathSpec], reverb: Option<&ReverbSpec>, seed: u64) -> Result<ImpulseResponse> {
    ensure!(
        !paths.is_empty() || reverb.is_some(),
        Spec,
        "channel has neither paths nor a reverberation tail"
    );
    let mut samples = Signal::default();
    let mut log = Vec::with_capacity(paths.len() + 1);
    for p in paths {
        let (delay, kernel) = synth_path(p)?;
        samples.mix_at(kernel.samples(), delay);
        log.push(ComponentEntry {
            kind: p.kind.into(),
            delay_samples: delay,
            amplitude: p.amplitude,
            target: p.target,
        });
    }
    if let Some(spec) = reverb {
        let tail = synth_reverb(spec, seed)?.scaled(spec.level);
        let onset = spec.onset_samples();
        samples.mix_at(tail.samples(), onset);
        log.push(ComponentEntry {
            kind: ComponentKind::ReverbTail,
            delay_samples: onset,
            amplitude: spec.level,
            target: false,
        });
    }
    Ok(ImpulseResponse {
        samples,
        component_log: log,
    })
}
