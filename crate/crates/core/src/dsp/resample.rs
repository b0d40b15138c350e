use super::{Signal, FS};
use crate::error::{ensure, Result};

/// Time-axis remapping by linear interpolation.
///
/// `out[n] = x(scale * n / fs - offset)`, zero outside the support of `x`.
/// A tone at `f` comes out at `f * scale`. The output holds
/// `ceil(len / scale) + ceil(offset * fs)` samples.
pub fn resample_time_map(x: &Signal, scale: f64, offset_s: f64) -> Result<Signal> {
    ensure!(scale > 0.0 && scale.is_finite(), Parameter, "scale must be positive, got {scale}");
    ensure!(offset_s.is_finite(), Parameter, "offset must be finite");
    let mut shift = offset_s * FS;
    // Snap round-off so integer delays stay exact copies.
    if (shift - shift.round()).abs() < 1e-9 {
        shift = shift.round();
    }
    let len = x.len();
    let out_len = (len as f64 / scale).ceil() as usize + shift.max(0.0).ceil() as usize;
    let src = x.samples();
    let last = len as f64 - 1.0;
    let out = (0..out_len)
        .map(|n| {
            let pos = scale * n as f64 - shift;
            if len == 0 || pos < 0.0 || pos > last {
                return 0.0;
            }
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 || i + 1 >= len {
                src[i]
            } else {
                src[i] * (1.0 - frac) + src[i + 1] * frac
            }
        })
        .collect();
    Ok(Signal::from_vec(out))
}
