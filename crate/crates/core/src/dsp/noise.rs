use rand_distr::{Distribution, StandardNormal};

use super::Signal;
use crate::error::{ensure, Result};
use crate::rng::Rng;
use rand::SeedableRng;

/// `n` i.i.d. standard-normal samples from a ChaCha stream seeded by `seed`.
pub fn gaussian_noise(n: usize, seed: u64) -> Result<Signal> {
    ensure!(n > 0, EmptyInput, "gaussian_noise needs at least one sample");
    let mut rng = Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(Signal::from_vec(samples))
}
