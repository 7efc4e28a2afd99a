//! Seeded generators for random joints and channels used by the verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::prob::{Alphabet, Channel, JointDistribution};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `index` of a run seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

/// A draw from the symmetric Dirichlet(`concentration`) distribution on `n` points.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration must be positive");
    loop {
        let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 && total.is_finite() {
            w.iter_mut().for_each(|x| *x /= total);
            return w;
        }
    }
}

/// Random joint over index alphabets `{0..nx} x {0..ny}` with Dirichlet weights.
pub fn random_joint<R: Rng + ?Sized>(
    rng: &mut R,
    nx: usize,
    ny: usize,
    concentration: f64,
) -> JointDistribution {
    let p = dirichlet(rng, nx * ny, concentration);
    JointDistribution::from_flat(Alphabet::indices(nx), Alphabet::indices(ny), p)
        .expect("Dirichlet draw is a valid pmf")
}

/// Random channel with Dirichlet(`concentration`) rows and an index output alphabet.
pub fn random_channel<R: Rng + ?Sized>(
    rng: &mut R,
    input: &Alphabet,
    n_out: usize,
    concentration: f64,
) -> Channel {
    let k: Vec<f64> = (0..input.len())
        .flat_map(|_| dirichlet(rng, n_out, concentration))
        .collect();
    Channel::from_flat(input.clone(), Alphabet::indices(n_out), k)
        .expect("Dirichlet rows are stochastic")
}

/// Random real-valued function on `n` points, uniform in `[-1, 1]`.
pub fn random_function<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}
