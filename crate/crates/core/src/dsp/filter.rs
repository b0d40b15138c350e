//! Butterworth bandpass design as cascaded second-order sections.
//!
//! The analog lowpass prototype of order `N` is mapped to a bandpass of order
//! `2N` (`s -> (s^2 + w0^2) / (s * bw)`) and then to the z-plane with a
//! prewarped bilinear transform. Every section has the numerator
//! `1 - z^-2`: the `N` zeros at `s = 0` land on `z = 1`, the `N` zeros at
//! infinity on `z = -1`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::Signal;
use crate::error::{ensure, Result};

/// One biquad, `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Poles inside the unit circle (Jury conditions for a quadratic).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    sections: Vec<Biquad>,
}

impl FilterCoefficients {
    pub fn new(sections: Vec<Biquad>) -> Result<Self> {
        ensure!(!sections.is_empty(), Parameter, "filter needs at least one section");
        ensure!(
            sections.iter().all(Biquad::is_stable),
            Parameter,
            "filter section has a pole on or outside the unit circle"
        );
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain_at(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }
}

/// Designs an order-`order` Butterworth bandpass (`2 * order` poles).
pub fn design_bandpass(order: usize, f_low: f64, f_high: f64, fs: f64) -> Result<FilterCoefficients> {
    ensure!((1..=8).contains(&order), Parameter, "butterworth order {order} outside 1..=8");
    ensure!(
        f_low > 0.0 && f_low < f_high && f_high < fs / 2.0,
        Parameter,
        "band edges ({f_low}, {f_high}) Hz must satisfy 0 < low < high < {}",
        fs / 2.0
    );

    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (wl, wh) = (warp(f_low), warp(f_high));
    let w0_sq = wl * wh;
    let bw = wh - wl;
    let k = 2.0 * fs;
    let bilinear = |s: Complex64| (k + s) / (k - s);

    let mut sections = Vec::with_capacity(order);
    let mut push_pair = |p1: Complex64, p2: Complex64| {
        // p2 is either conj(p1) or both are real.
        let a1 = -(p1 + p2).re;
        let a2 = (p1 * p2).re;
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1,
            a2,
        });
    };

    for i in 0..order {
        let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        if proto.im < -1e-12 {
            // The conjugate prototype pole produces the conjugate sections.
            continue;
        }
        let pb = proto * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        let s1 = (pb + disc) / 2.0;
        let s2 = (pb - disc) / 2.0;
        let (z1, z2) = (bilinear(s1), bilinear(s2));
        if proto.im > 1e-12 {
            push_pair(z1, z1.conj());
            push_pair(z2, z2.conj());
        } else if z1.im.abs() > 1e-12 {
            push_pair(z1, z1.conj());
        } else {
            push_pair(Complex64::new(z1.re, 0.0), Complex64::new(z2.re, 0.0));
        }
    }

    // Unity gain at the (digital) geometric band centre, spread evenly.
    let f_center = fs / PI * (w0_sq.sqrt() / k).atan();
    let raw = FilterCoefficients::new(sections.clone())?;
    let g = raw.gain_at(f_center, fs);
    let per_section = g.powf(-1.0 / sections.len() as f64);
    for s in &mut sections {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    FilterCoefficients::new(sections)
}

/// Causal forward filtering from a zero state (transposed direct form II).
pub fn filter_apply(coeffs: &FilterCoefficients, x: &Signal) -> Signal {
    let mut y = x.samples().to_vec();
    for s in coeffs.sections() {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let input = *v;
            let out = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * out + z2;
            z2 = s.b2 * input - s.a2 * out;
            *v = out;
        }
    }
    Signal::from_vec(y)
}
