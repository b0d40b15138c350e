use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Signal;
use crate::error::{ensure, Result};

fn fft_len(n: usize) -> usize {
    n.next_power_of_two()
}

fn forward(x: &[f64], n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

fn inverse(mut buf: Vec<Complex64>, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = buf.len();
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution, `len(x) + len(h) - 1` samples.
pub fn fft_convolve(x: &Signal, h: &Signal) -> Result<Signal> {
    ensure!(!x.is_empty() && !h.is_empty(), EmptyInput, "convolution operand is empty");
    let out_len = x.len() + h.len() - 1;
    let n = fft_len(out_len);
    let mut planner = FftPlanner::new();
    let xf = forward(x.samples(), n, &mut planner);
    let hf = forward(h.samples(), n, &mut planner);
    let prod = xf.iter().zip(&hf).map(|(a, b)| a * b).collect();
    let mut y = inverse(prod, &mut planner);
    y.truncate(out_len);
    Ok(Signal::from_vec(y))
}

/// Cross-correlation `r[k] = sum_n a[n + k] * b[n]` for `k` in
/// `-(len(b) - 1) ..= len(a) - 1`. Returns `(r, offset)` where `r[i]` holds
/// lag `i - offset`.
pub fn cross_correlate(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, usize)> {
    ensure!(!a.is_empty() && !b.is_empty(), EmptyInput, "correlation operand is empty");
    let out_len = a.len() + b.len() - 1;
    let n = fft_len(out_len);
    let mut planner = FftPlanner::new();
    let af = forward(a, n, &mut planner);
    let bf = forward(b, n, &mut planner);
    let prod = af.iter().zip(&bf).map(|(x, y)| x * y.conj()).collect();
    let circ = inverse(prod, &mut planner);
    // Negative lags wrap to the end of the circular buffer.
    let offset = b.len() - 1;
    let mut r = Vec::with_capacity(out_len);
    r.extend_from_slice(&circ[n - offset..]);
    r.extend_from_slice(&circ[..a.len()]);
    Ok((r, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                y[i + j] += a * b;
            }
        }
        y
    }

    #[test]
    fn identity_and_shift() {
        let x = Signal::from_vec(vec![0.3, -1.0, 2.5, 0.25]);
        let delta = Signal::from_vec(vec![1.0]);
        let y = fft_convolve(&x, &delta).unwrap();
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut shifted = vec![0.0; 6];
        shifted[5] = 1.0;
        let y = fft_convolve(&x, &Signal::from_vec(shifted)).unwrap();
        assert_eq!(y.len(), 9);
        assert!(y.samples()[..5].iter().all(|v| v.abs() < 1e-12));
        for (a, b) in y.samples()[5..].iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_operand() {
        assert!(fft_convolve(&Signal::default(), &Signal::from_vec(vec![1.0])).is_err());
        assert!(cross_correlate(&[1.0], &[]).is_err());
    }

    #[test]
    fn correlation_lag_convention() {
        let a = [0.0, 0.0, 1.0, 0.5];
        let b = [1.0, 0.5];
        let (r, off) = cross_correlate(&a, &b).unwrap();
        let best = r
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0 as isize
            - off as isize;
        assert_eq!(best, 2);
    }

    proptest! {
        #[test]
        fn matches_direct_convolution(
            x in prop::collection::vec(-1.0f64..1.0, 1..=64),
            h in prop::collection::vec(-1.0f64..1.0, 1..=64),
        ) {
            let want = direct(&x, &h);
            let got = fft_convolve(&Signal::from_vec(x), &Signal::from_vec(h)).unwrap();
            prop_assert_eq!(got.len(), want.len());
            let peak = want.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (g, w) in got.samples().iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-9 * peak.max(1.0));
            }
        }
    }
}
