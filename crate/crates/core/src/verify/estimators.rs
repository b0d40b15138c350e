//! Classical estimators that recover planted channel parameters from audio
//! or from a synthesized response, independently of how it was generated.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::channel::ImpulseResponse;
use crate::dsp::{cross_correlate, resample_time_map, Signal, FS};
use crate::error::{ensure, Error, Result};

/// Largest geometric TDoA for the widest array, in samples (0.15 m / 343 m/s).
pub const MIN_TDOA_SEARCH: usize = 7;

/// Lag `L` maximising the normalised cross-correlation, with
/// `right[n] ~ left[n - L]` (positive: right hears it later).
pub fn estimate_tdoa_xcorr(left: &Signal, right: &Signal, max_lag: usize) -> Result<i64> {
    ensure!(
        left.len() == right.len(),
        Parameter,
        "channel lengths differ ({} vs {})",
        left.len(),
        right.len()
    );
    ensure!(
        max_lag >= MIN_TDOA_SEARCH,
        Parameter,
        "max_lag {max_lag} below the geometric bound {MIN_TDOA_SEARCH}"
    );
    let norm = (left.energy() * right.energy()).sqrt();
    ensure!(norm > 0.0, Estimator, "silent channel");
    let (r, offset) = cross_correlate(right.samples(), left.samples())?;
    let max_lag = max_lag.min(left.len().saturating_sub(1)) as i64;
    let best = (-max_lag..=max_lag)
        .map(|lag| (lag, r[(offset as i64 + lag) as usize] / norm))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    Ok(best.0)
}

pub const DOPPLER_SCALE_MIN: f64 = 0.85;
pub const DOPPLER_SCALE_MAX: f64 = 1.15;
pub const DOPPLER_GRID_POINTS: usize = 2001;
/// Longest propagation delay the Doppler search allows, samples (100 m).
const DOPPLER_MAX_DELAY: usize = 4668;
/// Source excerpt correlated against the received signal.
const DOPPLER_SEGMENT: usize = 4000;
/// Unrelated noise peaks near 0.1 over the search; diffuse-only channels can
/// bring a true match down to about 0.2.
const DOPPLER_MIN_CORRELATION: f64 = 0.15;

struct DopplerSearch<'a> {
    segment: &'a [f64],
    window: &'a [f64],
    window_fft: Vec<Complex64>,
    prefix_energy: Vec<f64>,
    nfft: usize,
}

impl DopplerSearch<'_> {
    /// Best normalised correlation of the source excerpt read at `scale`.
    fn score(&self, scale: f64, planner: &mut FftPlanner<f64>) -> f64 {
        let template = resample_time_map(&Signal::from_vec(self.segment.to_vec()), scale, 0.0)
            .expect("scale within search range");
        let t = template.samples();
        let t_norm = template.energy().sqrt();
        if t_norm == 0.0 || t.len() > self.window.len() {
            return 0.0;
        }
        let mut buf: Vec<Complex64> = t.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.nfft, Complex64::new(0.0, 0.0));
        planner.plan_fft_forward(self.nfft).process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.window_fft) {
            *b = w * b.conj();
        }
        planner.plan_fft_inverse(self.nfft).process(&mut buf);
        let scale_inv = 1.0 / self.nfft as f64;
        (0..=self.window.len() - t.len())
            .map(|lag| {
                let e = self.prefix_energy[lag + t.len()] - self.prefix_energy[lag];
                if e <= 0.0 {
                    0.0
                } else {
                    buf[lag].re * scale_inv / (t_norm * e.sqrt())
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Doppler shift in percent (positive when approaching) between a clean
/// source and its received version.
///
/// Grid search over the time scale `s` in `[0.85, 1.15]`, correlating a
/// source excerpt read at `s` against the received signal at every lag, then
/// parabolic refinement around the best grid point. Returns `100 (s - 1)`.
pub fn estimate_doppler_pct(source: &Signal, received: &Signal) -> Result<f64> {
    ensure!(!source.is_silent(), Estimator, "source is silent");
    ensure!(!received.is_silent(), Estimator, "received signal is silent");

    let src = source.samples();
    let seg_len = DOPPLER_SEGMENT.min(src.len());
    // Loudest excerpt in the first half second.
    let search_end = src.len().saturating_sub(seg_len).min(8000);
    let u0 = (0..=search_end)
        .step_by(200)
        .max_by(|&a, &b| {
            let e = |s: usize| src[s..s + seg_len].iter().map(|v| v * v).sum::<f64>();
            e(a).partial_cmp(&e(b)).unwrap()
        })
        .unwrap_or(0);
    let segment = &src[u0..u0 + seg_len];

    let rx = received.samples();
    let lo = ((u0 as f64 / DOPPLER_SCALE_MAX).floor() as usize).min(rx.len());
    let hi = ((((u0 + seg_len) as f64) / DOPPLER_SCALE_MIN).ceil() as usize + DOPPLER_MAX_DELAY).min(rx.len());
    let window = &rx[lo..hi];
    ensure!(!window.is_empty(), Estimator, "received signal too short");

    let max_template = (seg_len as f64 / DOPPLER_SCALE_MIN).ceil() as usize;
    let nfft = (window.len() + max_template).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut window_fft: Vec<Complex64> = window.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    window_fft.resize(nfft, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(nfft).process(&mut window_fft);
    let mut prefix_energy = Vec::with_capacity(window.len() + 1);
    prefix_energy.push(0.0);
    for v in window {
        prefix_energy.push(prefix_energy.last().unwrap() + v * v);
    }
    let search = DopplerSearch {
        segment,
        window,
        window_fft,
        prefix_energy,
        nfft,
    };

    let step = (DOPPLER_SCALE_MAX - DOPPLER_SCALE_MIN) / (DOPPLER_GRID_POINTS - 1) as f64;
    let scores: Vec<f64> = (0..DOPPLER_GRID_POINTS)
        .into_par_iter()
        .map_init(FftPlanner::new, |planner, i| {
            search.score(DOPPLER_SCALE_MIN + i as f64 * step, planner)
        })
        .collect();
    let (best, &peak) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or_else(|| Error::Estimator("empty search grid".into()))?;
    ensure!(
        peak >= DOPPLER_MIN_CORRELATION,
        Estimator,
        "no correlation peak above {DOPPLER_MIN_CORRELATION} (best {peak:.3})"
    );
    let mut scale = DOPPLER_SCALE_MIN + best as f64 * step;
    if best > 0 && best + 1 < scores.len() {
        let (a, b, c) = (scores[best - 1], scores[best], scores[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            scale += 0.5 * (a - c) / denom * step;
        }
    }
    Ok(100.0 * (scale - 1.0))
}

/// Reverberation time from Schroeder backward integration.
///
/// The energy decay curve is fitted by least squares between -5 and -25 dB
/// and the slope extrapolated to -60 dB.
pub fn estimate_rt60(ir: &ImpulseResponse) -> Result<f64> {
    let h = ir.samples().samples();
    let start = ir
        .first_arrival()
        .or_else(|| h.iter().position(|v| *v != 0.0))
        .ok_or_else(|| Error::Estimator("impulse response is silent".into()))?;
    rt60_schroeder(&h[start.min(h.len())..])
}

/// Early part of a response left out of the late-decay fit: the latest
/// direct arrival, the reflection window and one path kernel.
pub const LATE_REVERB_SKIP_S: f64 = 0.065;

/// [`estimate_rt60`] on the late tail only, starting `LATE_REVERB_SKIP_S`
/// after the first arrival so discrete paths do not dominate the fit.
pub fn estimate_rt60_late(ir: &ImpulseResponse) -> Result<f64> {
    let h = ir.samples().samples();
    let first = ir
        .first_arrival()
        .ok_or_else(|| Error::Estimator("impulse response is silent".into()))?;
    let start = first + (LATE_REVERB_SKIP_S * FS).round() as usize;
    ensure!(start < h.len(), Estimator, "response ends before the late tail");
    rt60_schroeder(&h[start..])
}

pub(crate) fn rt60_schroeder(h: &[f64]) -> Result<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (i, v) in h.iter().enumerate().rev() {
        acc += v * v;
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    ensure!(total > 0.0, Estimator, "impulse response is silent");
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let begin = db
        .iter()
        .position(|&d| d <= -5.0)
        .ok_or_else(|| Error::Estimator("decay never reaches -5 dB".into()))?;
    let end = db
        .iter()
        .position(|&d| d <= -25.0)
        .ok_or_else(|| Error::Estimator("decay never reaches -25 dB".into()))?;
    ensure!(end > begin + 1, Estimator, "decay range too short to fit");
    let n = (end - begin) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in db[begin..end].iter().enumerate() {
        let x = (begin + i) as f64 / FS;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ensure!(slope < 0.0, Estimator, "energy decay curve is not decaying");
    Ok(-60.0 / slope)
}

/// Smallest echo-to-direct envelope ratio treated as a real arrival.
const TOF_MIN_PEAK_RATIO: f64 = 3e-3;

/// Round-trip time of flight in samples: separation between the direct
/// arrival of `pulse` in `received` and its strongest echo.
///
/// The received signal is passed through a regularised inverse of the pulse
/// spectrum restricted to the pulse band under a Blackman-Harris taper; the
/// envelope of the result shows each arrival as a narrow, low-sidelobe peak.
pub fn estimate_tof_matched(received: &Signal, pulse: &Signal) -> Result<usize> {
    ensure!(!pulse.is_silent(), Estimator, "pulse is silent");
    ensure!(!received.is_silent(), Estimator, "received signal is silent");
    let n = (received.len() + pulse.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let spectrum = |x: &[f64], planner: &mut FftPlanner<f64>| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        planner.plan_fft_forward(n).process(&mut buf);
        buf
    };
    let y = spectrum(received.samples(), &mut planner);
    let p = spectrum(pulse.samples(), &mut planner);

    let half = n / 2;
    let power: Vec<f64> = p[..=half].iter().map(|c| c.norm_sqr()).collect();
    let p_max = power.iter().cloned().fold(0.0, f64::max);
    let in_band: Vec<usize> = (0..=half).filter(|&k| power[k] >= 0.1 * p_max).collect();
    let (k_lo, k_hi) = (in_band[0], *in_band.last().unwrap());
    ensure!(k_hi > k_lo, Estimator, "pulse has no usable bandwidth");
    let bandwidth_hz = (k_hi - k_lo) as f64 * FS / n as f64;

    let eps = 1e-3 * p_max;
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for k in k_lo..=k_hi {
        let u = (k - k_lo) as f64 / (k_hi - k_lo) as f64;
        let w = blackman_harris(u);
        // Positive frequencies only, doubled: the inverse is analytic.
        h[k] = 2.0 * w * y[k] * p[k].conj() / (power[k] + eps);
    }
    planner.plan_fft_inverse(n).process(&mut h);
    let env: Vec<f64> = h[..received.len()].iter().map(|c| c.norm()).collect();

    let first = env
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let guard = (4.0 * FS / bandwidth_hz).ceil() as usize + 2;
    let floor = TOF_MIN_PEAK_RATIO * env[first];
    let second = (1..env.len() - 1)
        .filter(|&j| j.abs_diff(first) > guard)
        .filter(|&j| env[j] >= env[j - 1] && env[j] >= env[j + 1] && env[j] >= floor)
        .max_by(|&a, &b| env[a].partial_cmp(&env[b]).unwrap())
        .ok_or_else(|| Error::Estimator("only one arrival above threshold".into()))?;
    Ok(refine_separation(&h[..received.len()], first, second, guard))
}

/// Sharpens a coarse peak pair by correlating the response around the
/// stronger arrival with the region around the weaker one. The real part
/// keeps the carrier phase, which resolves far finer than the envelope.
fn refine_separation(h: &[Complex64], a: usize, b: usize, half: usize) -> usize {
    let coarse = b as i64 - a as i64;
    let template = a.saturating_sub(half)..(a + half + 1).min(h.len());
    let score = |lag: i64| {
        template
            .clone()
            .filter_map(|i| {
                let j = i as i64 + lag;
                (0..h.len() as i64).contains(&j).then(|| h[i].conj() * h[j as usize])
            })
            .sum::<Complex64>()
            .re
    };
    let best = (coarse - half as i64..=coarse + half as i64)
        .filter(|lag| lag.unsigned_abs() as usize > half)
        .max_by(|&x, &y| score(x).total_cmp(&score(y)))
        .unwrap_or(coarse);
    best.unsigned_abs() as usize
}

fn blackman_harris(u: f64) -> f64 {
    use std::f64::consts::PI;
    0.35875 - 0.48829 * (2.0 * PI * u).cos() + 0.14128 * (4.0 * PI * u).cos() - 0.01168 * (6.0 * PI * u).cos()
}

/// Direction of arrival in degrees from a signed TDoA: `acos(tau c / d)`.
pub fn doa_from_tdoa(tdoa_s: f64, mic_distance_m: f64, c: f64) -> Result<f64> {
    ensure!(mic_distance_m > 0.0 && c > 0.0, Domain, "distance and sound speed must be positive");
    let ratio = tdoa_s * c / mic_distance_m;
    let ratio = if (ratio.abs() - 1.0).abs() < 1e-9 { ratio.signum() } else { ratio };
    ensure!((-1.0..=1.0).contains(&ratio), Domain, "|tau c / d| = {} exceeds 1", ratio.abs());
    Ok(ratio.acos().to_degrees())
}

/// One-way distance in metres for a round-trip time of flight in ms.
pub fn distance_from_tof(tof_ms: f64, c: f64) -> Result<f64> {
    ensure!(tof_ms > 0.0 && tof_ms.is_finite(), Parameter, "time of flight must be positive, got {tof_ms}");
    Ok(c * tof_ms / 1000.0 / 2.0)
}

/// Direct-path window after the first arrival (2 ms).
pub const LOS_EARLY_WINDOW: usize = 32;
/// Comparison window that follows it (50 ms).
pub const LOS_LATE_WINDOW: usize = 800;
pub const LOS_RATIO_THRESHOLD: f64 = 10.0;
/// A LOS kernel peaks at no less than 5.0, a reflection at no more than 0.5.
pub const LOS_MIN_PEAK: f64 = 1.0;

/// Energy in the 2 ms after the first arrival over the following 50 ms.
pub fn los_energy_ratio(ir: &ImpulseResponse) -> Result<f64> {
    let h = ir.samples().samples();
    let first = first_significant(h)?;
    let early_end = (first + LOS_EARLY_WINDOW).min(h.len());
    let late_end = (early_end + LOS_LATE_WINDOW).min(h.len());
    let e = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let late = e(&h[early_end..late_end]);
    Ok(if late == 0.0 { f64::INFINITY } else { e(&h[first..early_end]) / late })
}

/// Whether the response starts with a dominant direct arrival.
pub fn detect_los(ir: &ImpulseResponse) -> Result<bool> {
    let h = ir.samples().samples();
    let first = first_significant(h)?;
    let end = (first + LOS_EARLY_WINDOW).min(h.len());
    let peak = h[first..end].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(peak >= LOS_MIN_PEAK && los_energy_ratio(ir)? >= LOS_RATIO_THRESHOLD)
}

fn first_significant(h: &[f64]) -> Result<usize> {
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(peak > 0.0, Estimator, "impulse response is silent");
    Ok(h.iter().position(|v| v.abs() >= 1e-3 * peak).unwrap())
}
