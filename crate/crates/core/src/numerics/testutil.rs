use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::tensor::Tensor4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

/// `Σ t ⊙ probe`, a scalar whose gradient with respect to `t` is `probe`.
pub fn weighted_sum(t: &Tensor4<f64>, probe: &Tensor4<f64>) -> f64 {
    t.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
}
