//! Sound sources: ingested real-world clips and synthetic FMCW chirps.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dsp::{design_bandpass, filter_apply, gaussian_noise, resample_time_map, Signal, FS, SAMPLE_RATE};
use crate::error::{ensure, Error, Result};
use crate::rng;

/// Peak level every ingested clip is normalised to.
pub const SOURCE_PEAK: f64 = 0.89;
/// Longest clip kept, seconds.
pub const MAX_CLIP_S: f64 = 10.0;

pub const CHIRP_AMPLITUDE: f64 = 0.5;
/// Silence ahead of the chirp in a ranging clip.
pub const CHIRP_LEAD_S: f64 = 0.1;
/// Total length of a ranging clip.
pub const RANGE_CLIP_S: f64 = 1.0;
pub const CHIRP_DURATION: RangeInclusive<f64> = 0.005..=0.05;
pub const CHIRP_START: RangeInclusive<f64> = 1000.0..=4000.0;
pub const CHIRP_MIN_SWEEP_HZ: f64 = 2000.0;
pub const CHIRP_MAX_END_HZ: f64 = 7900.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEntry {
    pub path: PathBuf,
    pub duration_s: f64,
    pub labels: Vec<String>,
    pub original_rate: u32,
    pub original_channels: u16,
    pub truncated: bool,
    pub signal: Signal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Summary written next to a dataset describing what ingestion did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub accepted: usize,
    pub skipped: Vec<SkippedFile>,
    pub truncated: usize,
    /// Clips shorter than the cap are kept at their own length.
    pub padding: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourcePool {
    pub entries: Vec<SourceEntry>,
    pub report: PoolReport,
}

impl SourcePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&SourceEntry> {
        self.entries.get(index)
    }

    /// A seeded pool of broadband synthetic clips, for running without a
    /// source corpus.
    pub fn synthetic(seed: u64, count: usize, duration_s: f64) -> Result<Self> {
        ensure!(count > 0, Parameter, "synthetic pool needs at least one clip");
        let entries = (0..count)
            .map(|i| {
                let signal = synthetic_clip(seed, i as u64, duration_s)?;
                Ok(SourceEntry {
                    path: PathBuf::from(format!("synthetic://{seed}/{i}")),
                    duration_s: signal.duration_s(),
                    labels: vec!["synthetic".to_string()],
                    original_rate: SAMPLE_RATE,
                    original_channels: 1,
                    truncated: false,
                    signal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            report: PoolReport {
                accepted: entries.len(),
                padding: "none".into(),
                ..Default::default()
            },
            entries,
        })
    }
}

/// Harmonic complex plus band-limited noise bursts, peak-normalised.
fn synthetic_clip(seed: u64, index: u64, duration_s: f64) -> Result<Signal> {
    let n = (duration_s * FS).round() as usize;
    ensure!(n > 0, Parameter, "synthetic clip duration must be positive");
    let mut rng = rng::stream(seed, "synthetic-source", index);
    let f0: f64 = rng.gen_range(100.0..400.0);
    let vibrato: f64 = rng.gen_range(0.5..6.0);
    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / FS;
        let f = f0 * (1.0 + 0.02 * (2.0 * PI * vibrato * t).sin());
        phase += 2.0 * PI * f / FS;
        *v = (1..=12)
            .filter(|h| f0 * *h as f64 * 1.05 < FS / 2.0)
            .map(|h| (h as f64 * phase).sin() / h as f64)
            .sum::<f64>()
            * 0.3;
    }
    let lo: f64 = rng.gen_range(150.0..800.0);
    let hi: f64 = rng.gen_range(3000.0..7500.0);
    let noise = gaussian_noise(n, rng.gen())?;
    let band = filter_apply(&design_bandpass(2, lo, hi, FS)?, &noise);
    let burst_rate: f64 = rng.gen_range(1.0..4.0);
    for (i, (v, b)) in out.iter_mut().zip(band.samples()).enumerate() {
        let t = i as f64 / FS;
        let gate = 0.5 + 0.5 * (2.0 * PI * burst_rate * t).sin();
        *v += 0.6 * gate * b;
    }
    Ok(normalize_peak(Signal::from_vec(out), SOURCE_PEAK))
}

pub(crate) fn normalize_peak(x: Signal, target: f64) -> Signal {
    let peak = x.peak();
    if peak == 0.0 {
        x
    } else {
        x.scaled(target / peak)
    }
}

fn decode_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    ensure!(channels > 0, Ingestion, "{} has no channels", path.display());
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok((deinterleave(&interleaved, channels), spec.sample_rate))
}

fn decode_flac(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut reader = claxon::FlacReader::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let info = reader.streaminfo();
    let channels = info.channels as usize;
    let scale = 1.0 / (1u64 << (info.bits_per_sample - 1)) as f64;
    let interleaved: Vec<f64> = reader
        .samples()
        .map(|s| s.map(|v| v as f64 * scale))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    Ok((deinterleave(&interleaved, channels), info.sample_rate))
}

fn deinterleave(interleaved: &[f64], channels: usize) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|c| interleaved.iter().skip(c).step_by(channels).copied().collect())
        .collect()
}

/// Mono mixdown, 16 kHz, capped at ten seconds, peak-normalised.
fn normalize_clip(channels: Vec<Vec<f64>>, rate: u32) -> Result<(Signal, bool)> {
    ensure!(rate > 0, Ingestion, "sample rate is zero");
    let n = channels.iter().map(Vec::len).min().unwrap_or(0);
    ensure!(n > 0, Ingestion, "clip has no samples");
    let k = channels.len() as f64;
    let mono: Vec<f64> = (0..n).map(|i| channels.iter().map(|c| c[i]).sum::<f64>() / k).collect();
    let mono = Signal::new(mono)?;
    let resampled = if rate == SAMPLE_RATE {
        mono
    } else {
        let out_len = (n as u64 * u64::from(SAMPLE_RATE)).div_ceil(u64::from(rate)) as usize;
        resample_time_map(&mono, f64::from(rate) / FS, 0.0)?.fit_to(out_len)
    };
    let cap = (MAX_CLIP_S * FS) as usize;
    let truncated = resampled.len() > cap;
    let clipped = if truncated { resampled.fit_to(cap) } else { resampled };
    ensure!(!clipped.is_silent(), Ingestion, "clip is silent");
    Ok((normalize_peak(clipped, SOURCE_PEAK), truncated))
}

fn collect_audio_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_audio_files(&path, out)?;
        } else if matches!(extension(&path).as_deref(), Some("wav" | "flac")) {
            out.push(path);
        }
    }
    Ok(())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Optional `labels.json` at the pool root: `{"relative/path.wav": ["tag", ...]}`.
fn read_labels(dir: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let path = dir.join("labels.json");
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every WAV/FLAC file under `dir`, in path order.
pub fn ingest_sources(dir: &Path) -> Result<SourcePool> {
    ensure!(dir.is_dir(), Ingestion, "{} is not a directory", dir.display());
    let labels = read_labels(dir)?;
    let mut files = Vec::new();
    collect_audio_files(dir, &mut files)?;
    let mut pool = SourcePool {
        report: PoolReport {
            padding: "none".into(),
            ..Default::default()
        },
        ..Default::default()
    };
    for path in files {
        let decoded = match extension(&path).as_deref() {
            Some("flac") => decode_flac(&path),
            _ => decode_wav(&path),
        };
        let outcome = decoded.and_then(|(chans, rate)| {
            let n_ch = chans.len() as u16;
            normalize_clip(chans, rate).map(|(sig, trunc)| (sig, trunc, rate, n_ch))
        });
        match outcome {
            Ok((signal, truncated, rate, n_ch)) => {
                let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
                pool.report.truncated += usize::from(truncated);
                pool.entries.push(SourceEntry {
                    labels: labels.get(&rel).cloned().unwrap_or_default(),
                    duration_s: signal.duration_s(),
                    path,
                    original_rate: rate,
                    original_channels: n_ch,
                    truncated,
                    signal,
                });
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                pool.report.skipped.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
            }
        }
    }
    pool.report.accepted = pool.entries.len();
    ensure!(
        !pool.entries.is_empty(),
        Ingestion,
        "no decodable audio under {} ({} skipped)",
        dir.display(),
        pool.report.skipped.len()
    );
    Ok(pool)
}

/// Linear frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub duration_s: f64,
    pub amplitude: f64,
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.f0_hz > 0.0 && self.f0_hz < self.f1_hz && self.f1_hz < FS / 2.0,
            Spec,
            "chirp band ({}, {}) Hz must satisfy 0 < f0 < f1 < {}",
            self.f0_hz,
            self.f1_hz,
            FS / 2.0
        );
        ensure!(
            CHIRP_DURATION.contains(&self.duration_s),
            Spec,
            "chirp duration {} s outside {:?}",
            self.duration_s,
            CHIRP_DURATION
        );
        ensure!(self.amplitude > 0.0 && self.amplitude.is_finite(), Spec, "chirp amplitude must be positive");
        Ok(())
    }

    pub fn sweep_rate(&self) -> f64 {
        (self.f1_hz - self.f0_hz) / self.duration_s
    }

    /// Draws start/end frequency and duration from the ranging ranges.
    pub fn sample(rng: &mut impl rand::Rng) -> Self {
        let f0 = rng.gen_range(CHIRP_START);
        let f1 = rng.gen_range(f0 + CHIRP_MIN_SWEEP_HZ..=CHIRP_MAX_END_HZ);
        Self {
            f0_hz: f0,
            f1_hz: f1,
            duration_s: rng.gen_range(CHIRP_DURATION),
            amplitude: CHIRP_AMPLITUDE,
        }
    }
}

/// `A sin(2 pi (f0 t + (f1 - f0) t^2 / (2T)))` over `round(T fs)` samples.
pub fn gen_chirp(spec: &ChirpSpec) -> Result<Signal> {
    spec.validate()?;
    let n = (spec.duration_s * FS).round() as usize;
    let k = spec.sweep_rate();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            spec.amplitude * (2.0 * PI * (spec.f0_hz * t + 0.5 * k * t * t)).sin()
        })
        .collect();
    Ok(Signal::from_vec(samples))
}

/// The chirp placed after the lead-in silence inside a one-second clip.
pub fn chirp_clip(spec: &ChirpSpec) -> Result<Signal> {
    let pulse = gen_chirp(spec)?;
    let mut clip = Signal::zeros((RANGE_CLIP_S * FS) as usize);
    clip.mix_at(pulse.samples(), (CHIRP_LEAD_S * FS) as usize);
    Ok(clip)
}
