//! Counter-based random streams.
//!
//! Every consumer of randomness asks for a stream keyed by
//! `(master seed, domain, index)`. The stream seed is a SHA-256 digest of the
//! key, so draws never depend on the order in which slots or modules are
//! evaluated.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, domain: &str, index: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(index.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derives a child seed, used where a whole sub-simulation needs its own
/// master seed (for example training traces for pre-loaded models).
pub fn derive_seed(seed: u64, domain: &str) -> u64 {
    let mut r = stream(seed, domain, u64::MAX);
    r.random()
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    Complex64::from_polar(1.0, theta)
}
