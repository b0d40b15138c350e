//! Far-field two-microphone geometry.
//!
//! `tdoa = d cos(theta) / c`. A positive TDoA means the right microphone
//! hears the wavefront later than the left; `theta = 0` lies along the pair
//! axis on the left-microphone side.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::channel::ImpulseResponse;
use crate::dsp::{FS, SPEED_OF_SOUND};
use crate::error::{ensure, Result};

pub const MIC_DISTANCE_RANGE: RangeInclusive<f64> = 0.08..=0.15;
pub const THETA_RANGE: RangeInclusive<f64> = 0.0..=180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub mic_distance_m: f64,
    pub theta_deg: f64,
}

impl ArraySpec {
    pub fn new(mic_distance_m: f64, theta_deg: f64) -> Result<Self> {
        let spec = Self {
            mic_distance_m,
            theta_deg,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            MIC_DISTANCE_RANGE.contains(&self.mic_distance_m),
            Spec,
            "mic distance {} m outside {:?}",
            self.mic_distance_m,
            MIC_DISTANCE_RANGE
        );
        ensure!(
            THETA_RANGE.contains(&self.theta_deg),
            Spec,
            "direction {} deg outside {:?}",
            self.theta_deg,
            THETA_RANGE
        );
        Ok(())
    }
}

/// Signed TDoA in seconds.
pub fn tdoa_from_doa(spec: &ArraySpec) -> f64 {
    spec.mic_distance_m * spec.theta_deg.to_radians().cos() / SPEED_OF_SOUND
}

/// TDoA in (fractional) samples.
pub fn tdoa_samples(spec: &ArraySpec) -> f64 {
    tdoa_from_doa(spec) * FS
}

/// TDoA rounded to the nearest whole sample.
pub fn tdoa_quantized(spec: &ArraySpec) -> i64 {
    tdoa_samples(spec).round() as i64
}

/// Left/right responses: the later microphone gets the base response
/// shifted by the quantized TDoA.
pub fn binaural_cirs(base: &ImpulseResponse, spec: &ArraySpec) -> Result<(ImpulseResponse, ImpulseResponse)> {
    spec.validate()?;
    ensure!(base.has_los(), Scenario, "microphone-array channel needs a LOS path");
    let lag = tdoa_quantized(spec);
    let shift = lag.unsigned_abs() as usize;
    Ok(if lag >= 0 {
        (base.clone(), base.delayed(shift))
    } else {
        (base.delayed(shift), base.clone())
    })
}
