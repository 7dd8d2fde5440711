//! Counter-based 64-bit generator with a Box–Muller normal transform.
//!
//! Sample `i` of a stream is `splitmix64(key + i·γ)` where `key` is derived
//! from the seed, so a stream is a pure function of `(seed, i)`. Normal
//! deviates are produced in pairs by the polar-free Box–Muller transform; the
//! sine branch is cached and returned by the next call.

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    seed: u64,
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            key: splitmix64(seed ^ 0x6A09_E667_F3BC_C909),
            counter: 0,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal deviate.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 − u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }

    /// Matrix of i.i.d. `Normal(0, stddev²)` entries, filled row-major.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, stddev: f64) -> Result<Matrix> {
        if !(stddev > 0.0 && stddev.is_finite()) {
            return Err(invalid(format!(
                "gaussian stddev must be positive and finite, got {stddev}"
            )));
        }
        let data = (0..rows * cols)
            .map(|_| stddev * self.standard_normal())
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

/// Free-function form of [`Rng::gaussian_matrix`].
pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize, stddev: f64) -> Result<Matrix> {
    rng.gaussian_matrix(rows, cols, stddev)
}
