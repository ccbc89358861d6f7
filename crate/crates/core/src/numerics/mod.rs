//! Complex linear algebra, the unitary DFT and seeded random generation.

mod dft;
pub mod linalg;
mod matrix;
mod rng;

pub use dft::{circulant, dft_matrix, fft, frequency_response, ifft};
pub use matrix::{ComplexMatrix, ComplexVector};
pub use rng::{cgauss, derive_seed, SimRng, RNG_FORMAT_VERSION};

pub(crate) use rng::fill_cgauss;

pub use num_complex::Complex64;
