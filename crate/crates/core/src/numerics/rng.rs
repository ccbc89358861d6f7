//! Seeded random generation.
//!
//! Output format, version 1: ChaCha8 (`rand_chacha` 0.9) seeded through
//! `SeedableRng::seed_from_u64`. Child streams are keyed by folding a path of
//! indices into the seed with the SplitMix64 finalizer, so a worker's stream
//! depends only on `(master seed, path)` and never on scheduling. Gaussian
//! draws use `rand_distr::StandardNormal`. Changing any of these is a fixture
//! break and must bump [`RNG_FORMAT_VERSION`].

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::ComplexVector;
use crate::error::{invalid, Result};

pub const RNG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `seed`; distinct paths give unrelated seeds.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator for the child stream at `path`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(seed, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bit(&mut self) -> u8 {
        (self.inner.next_u32() & 1) as u8
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. circularly-symmetric complex Gaussian samples `CN(0, variance)`.
pub fn cgauss(rng: &mut SimRng, n: usize, variance: f64) -> Result<ComplexVector> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(invalid(format!(
            "variance must be finite and non-negative, got {variance}"
        )));
    }
    if n == 0 {
        return Err(invalid("cgauss needs n >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    fill_cgauss(rng, variance, &mut out, n);
    Ok(ComplexVector::from_vec_unchecked(out))
}

/// Appends `n` samples of `CN(0, variance)` to `out`.
pub(crate) fn fill_cgauss(rng: &mut SimRng, variance: f64, out: &mut Vec<Complex64>, n: usize) {
    let s = (variance / 2.0).sqrt();
    for _ in 0..n {
        let re = rng.standard_normal();
        let im = rng.standard_normal();
        out.push(Complex64::new(re * s, im * s));
    }
}
