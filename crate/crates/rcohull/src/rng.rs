//! Seeded randomness. Everything random in the crate flows from a single
//! `u64` seed through a counter-based ChaCha stream.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matcore::Matrix;

/// The generator type used throughout.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a labelled sub-task.
pub fn substream(seed: u64, label: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(label);
    r
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform point on the unit sphere of `R^dim`, written into `out`.
pub fn unit_vector(rng: &mut SeededRng, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = normal(rng);
            s += *v * *v;
        }
        if s > 1e-24 {
            let r = s.sqrt();
            for v in out.iter_mut() {
                *v /= r;
            }
            return;
        }
    }
}

/// Haar-distributed rotation in SO(n), n = 2 or 3.
pub fn rotation(rng: &mut SeededRng, n: usize) -> Matrix {
    if n == 2 {
        let t: f64 = rng.random_range(0.0..core::f64::consts::TAU);
        let (s, c) = t.sin_cos();
        Matrix::new2([[c, -s], [s, c]])
    } else {
        let mut q = [0.0; 4];
        unit_vector(rng, &mut q);
        let [w, x, y, z] = q;
        Matrix::new3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }
}

/// Uniform matrix on the Frobenius sphere of the given radius.
pub fn sphere_matrix(rng: &mut SeededRng, n: usize, radius: f64) -> Matrix {
    let mut v = [0.0; 9];
    unit_vector(rng, &mut v[..n * n]);
    for x in v[..n * n].iter_mut() {
        *x *= radius;
    }
    Matrix::from_slice(n, &v[..n * n]).expect("finite entries")
}

/// Matrix with i.i.d. entries uniform in `[lo, hi)`.
pub fn uniform_matrix(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Matrix {
    let mut v = [0.0; 9];
    for x in v[..n * n].iter_mut() {
        *x = rng.random_range(lo..hi);
    }
    Matrix::from_slice(n, &v[..n * n]).expect("finite entries")
}
