//! Three-channel spectral features: log magnitude plus the sine and cosine
//! of the phase, on the linear STFT grid.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{stft, Signal, SAMPLE_RATE, STFT_BINS, STFT_HOP, STFT_WINDOW};
use crate::error::{ensure, Error, Result};

/// Magnitude floor before the logarithm.
pub const LOG_EPSILON: f64 = 1e-10;
pub const CHANNEL_ORDER: [&str; 3] = ["log_magnitude", "phase_sin", "phase_cos"];

/// Frames x bins per channel, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub frames: usize,
    pub log_magnitude: Vec<f64>,
    pub phase_sin: Vec<f64>,
    pub phase_cos: Vec<f64>,
}

impl SpectralFeatures {
    pub fn bins(&self) -> usize {
        STFT_BINS
    }

    /// `(channel, frame, bin)` view of the three stacked planes.
    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> f64 {
        let plane = match channel {
            0 => &self.log_magnitude,
            1 => &self.phase_sin,
            2 => &self.phase_cos,
            _ => panic!("feature channel {channel} out of range"),
        };
        plane[frame * STFT_BINS + bin]
    }

    /// Centre frequency of bin `f`, Hz.
    pub fn bin_hz(bin: usize) -> f64 {
        bin as f64 * SAMPLE_RATE as f64 / STFT_WINDOW as f64
    }
}

pub fn extract_features(x: &Signal) -> Result<SpectralFeatures> {
    let spec = stft(x)?;
    let n = spec.data().len();
    let mut out = SpectralFeatures {
        frames: spec.frames(),
        log_magnitude: Vec::with_capacity(n),
        phase_sin: Vec::with_capacity(n),
        phase_cos: Vec::with_capacity(n),
    };
    for c in spec.data() {
        out.log_magnitude.push((c.norm() + LOG_EPSILON).ln());
        let theta = c.im.atan2(c.re);
        out.phase_sin.push(theta.sin());
        out.phase_cos.push(theta.cos());
    }
    Ok(out)
}

/// JSON header preceding the raw tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub shape: [usize; 3],
    pub dtype: String,
    pub channels: Vec<String>,
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub epsilon: f64,
}

/// Layout: little-endian `u32` header length, JSON header, then the
/// `3 x frames x bins` tensor as little-endian `f32`, channel-major.
pub fn encode_tensor(f: &SpectralFeatures) -> Result<Vec<u8>> {
    let header = TensorHeader {
        shape: [3, f.frames, STFT_BINS],
        dtype: "f32".into(),
        channels: CHANNEL_ORDER.iter().map(|s| s.to_string()).collect(),
        sample_rate: SAMPLE_RATE,
        window: STFT_WINDOW,
        hop: STFT_HOP,
        epsilon: LOG_EPSILON,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(4 + json.len() + 12 * f.log_magnitude.len());
    out.write_all(&(json.len() as u32).to_le_bytes()).unwrap();
    out.extend_from_slice(&json);
    for plane in [&f.log_magnitude, &f.phase_sin, &f.phase_cos] {
        for v in plane {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_tensor(path: &Path, f: &SpectralFeatures) -> Result<()> {
    fs::write(path, encode_tensor(f)?).map_err(|e| Error::io(path, e))
}

/// Reads a tensor file back into its header and flat `f32` data.
pub fn read_tensor(path: &Path) -> Result<(TensorHeader, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ensure!(bytes.len() >= 4, Parameter, "{}: truncated tensor file", path.display());
    let hlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    ensure!(bytes.len() >= 4 + hlen, Parameter, "{}: truncated header", path.display());
    let header: TensorHeader = serde_json::from_slice(&bytes[4..4 + hlen])?;
    let body = &bytes[4 + hlen..];
    let expected = header.shape.iter().product::<usize>() * 4;
    ensure!(
        body.len() == expected,
        Parameter,
        "{}: tensor body has {} bytes, header implies {expected}",
        path.display(),
        body.len()
    );
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((header, data))
}
