use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Signal, FS};
use crate::error::{ensure, Result};

/// Analysis window length in samples.
pub const STFT_WINDOW: usize = 254;
/// Hop between frames: 10 ms at 16 kHz.
pub const STFT_HOP: usize = 160;
/// One-sided bins for a 254-point transform.
pub const STFT_BINS: usize = STFT_WINDOW / 2 + 1;

/// Frames x bins complex grid, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    frames: usize,
    bins: usize,
    pub bin_hz: f64,
    pub hop_samples: usize,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Periodic Hann window.
pub fn stft_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time Fourier transform with a 254-point Hann window and 160-sample hop.
///
/// The input is reflect-padded by half a window on both sides and frame `t`
/// is centred on sample `t * hop`, giving `ceil(len / hop)` frames.
pub fn stft(x: &Signal) -> Result<ComplexSpectrogram> {
    let len = x.len();
    ensure!(
        len >= STFT_WINDOW,
        EmptyInput,
        "stft needs at least {STFT_WINDOW} samples, got {len}"
    );
    let half = STFT_WINDOW / 2;
    let src = x.samples();
    let mut padded = Vec::with_capacity(len + 2 * half);
    padded.extend((1..=half).rev().map(|i| src[i]));
    padded.extend_from_slice(src);
    padded.extend((1..=half).map(|i| src[len - 1 - i]));

    let frames = len.div_ceil(STFT_HOP);
    let window = stft_window(STFT_WINDOW);
    let fft = FftPlanner::new().plan_fft_forward(STFT_WINDOW);
    let mut data = Vec::with_capacity(frames * STFT_BINS);
    let mut buf = vec![Complex64::new(0.0, 0.0); STFT_WINDOW];
    for t in 0..frames {
        let start = t * STFT_HOP;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..STFT_BINS]);
    }
    Ok(ComplexSpectrogram {
        data,
        frames,
        bins: STFT_BINS,
        bin_hz: FS / STFT_WINDOW as f64,
        hop_samples: STFT_HOP,
    })
}
