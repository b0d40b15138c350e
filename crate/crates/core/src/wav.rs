//! 32-bit float WAV files at the fixed sample rate.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::{Signal, SAMPLE_RATE};
use crate::error::{ensure, Error, Result};

fn spec(channels: u16) -> WavSpec {
    WavSpec {
        channels,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    }
}

/// Encodes one or two equal-length channels, interleaved, as WAV bytes.
pub fn encode_wav(channels: &[Signal]) -> Result<Vec<u8>> {
    ensure!(
        (1..=2).contains(&channels.len()),
        Parameter,
        "WAV output takes one or two channels, got {}",
        channels.len()
    );
    let len = channels[0].len();
    ensure!(
        channels.iter().all(|c| c.len() == len),
        Parameter,
        "channels differ in length"
    );
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec(channels.len() as u16))?;
        for i in 0..len {
            for c in channels {
                w.write_sample(c.samples()[i] as f32)?;
            }
        }
        w.finalize()?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: &Path, channels: &[Signal]) -> Result<()> {
    let bytes = encode_wav(channels)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads every channel of a 16 kHz WAV (float or integer PCM).
pub fn read_wav(path: &Path) -> Result<Vec<Signal>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = WavReader::new(BufReader::new(file))?;
    let s = reader.spec();
    ensure!(
        s.sample_rate == SAMPLE_RATE,
        Parameter,
        "{}: sample rate {} Hz, expected {SAMPLE_RATE}",
        path.display(),
        s.sample_rate
    );
    let interleaved: Vec<f64> = match s.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|v| v.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (s.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|v| v.map(|x| x as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let n = s.channels as usize;
    ensure!(n > 0, Parameter, "{}: no channels", path.display());
    (0..n)
        .map(|c| {
            Signal::new(interleaved.iter().skip(c).step_by(n).copied().collect())
                .map_err(|_| Error::Parameter(format!("{}: non-finite samples", path.display())))
        })
        .collect()
}
