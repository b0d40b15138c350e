//! Constant-velocity Doppler channel.
//!
//! With distance `d(t) = d0 + v t` the received signal is
//! `y(t) = x((1 - v/c) t - d0/c)`, which is a resampling of the source.
//! Positive `v` means the source is receding.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dsp::{resample_time_map, Signal, SPEED_OF_SOUND};
use crate::error::{ensure, Result};

pub const SPEED_RANGE: RangeInclusive<f64> = -50.0..=50.0;
pub const DISTANCE_RANGE: RangeInclusive<f64> = 0.5..=100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpec {
    /// Relative speed in m/s; negative is approaching.
    pub speed_mps: f64,
    /// Initial separation in metres.
    pub initial_distance_m: f64,
}

impl DopplerSpec {
    pub fn new(speed_mps: f64, initial_distance_m: f64) -> Result<Self> {
        let spec = Self {
            speed_mps,
            initial_distance_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            SPEED_RANGE.contains(&self.speed_mps),
            Spec,
            "speed {} m/s outside {:?}",
            self.speed_mps,
            SPEED_RANGE
        );
        ensure!(
            DISTANCE_RANGE.contains(&self.initial_distance_m),
            Spec,
            "initial distance {} m outside {:?}",
            self.initial_distance_m,
            DISTANCE_RANGE
        );
        Ok(())
    }

    /// Time-axis scale `1 - v/c`; also the observed/emitted frequency ratio.
    pub fn time_scale(&self) -> f64 {
        1.0 - self.speed_mps / SPEED_OF_SOUND
    }

    pub fn initial_delay_s(&self) -> f64 {
        self.initial_distance_m / SPEED_OF_SOUND
    }
}

pub fn apply_doppler(x: &Signal, spec: &DopplerSpec) -> Result<Signal> {
    spec.validate()?;
    resample_time_map(x, spec.time_scale(), spec.initial_delay_s())
}

/// Relative frequency change in percent, `-100 v / c`. Positive when approaching.
pub fn doppler_shift_pct(spec: &DopplerSpec) -> f64 {
    -100.0 * spec.speed_mps / SPEED_OF_SOUND
}
