//! Deterministic DSP primitives shared by every other module.
//!
//! All signals run at a fixed 16 kHz. Functions here are pure: same input and
//! seed, same output bits.

mod convolve;
mod filter;
mod noise;
mod resample;
mod stft;

pub use convolve::{cross_correlate, fft_convolve};
pub use filter::{design_bandpass, filter_apply, Biquad, FilterCoefficients};
pub use noise::gaussian_noise;
pub use resample::resample_time_map;
pub use stft::{stft, stft_window, ComplexSpectrogram, STFT_BINS, STFT_HOP, STFT_WINDOW};

use crate::error::{ensure, Result};

/// The only sample rate the toolkit runs at, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// `SAMPLE_RATE` as a float.
pub const FS: f64 = SAMPLE_RATE as f64;

/// Speed of sound in air, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// A mono block of finite samples at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signal {
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        ensure!(
            samples.iter().all(|s| s.is_finite()),
            Parameter,
            "signal contains non-finite samples"
        );
        Ok(Self { samples })
    }

    /// Wraps samples produced by code that cannot emit non-finite values.
    pub(crate) fn from_vec(samples: Vec<f64>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / FS
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.energy() / self.samples.len() as f64).sqrt()
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::from_vec(self.samples.iter().map(|s| s * gain).collect())
    }

    /// Prepends `delay` zeros.
    pub fn delayed(&self, delay: usize) -> Self {
        let mut out = vec![0.0; delay + self.samples.len()];
        out[delay..].copy_from_slice(&self.samples);
        Self::from_vec(out)
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut out = self.samples.clone();
        out.resize(len, 0.0);
        Self::from_vec(out)
    }

    /// Adds `other` into `self` starting at `offset`, growing as needed.
    pub fn mix_at(&mut self, other: &[f64], offset: usize) {
        let end = offset + other.len();
        if self.samples.len() < end {
            self.samples.resize(end, 0.0);
        }
        for (dst, src) in self.samples[offset..end].iter_mut().zip(other) {
            *dst += src;
        }
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.samples
    }
}
