//! Harness behind the `tno` binary: the invariant runner, timing sweeps and
//! figure CSVs.

pub mod bench;
pub mod figures;
pub mod verify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tno_core::rpe::{Activation, MlpRpe};
use tno_core::Matrix;

/// Process exit status: success.
pub const EXIT_OK: i32 = 0;
/// Process exit status: at least one invariant failed.
pub const EXIT_FAILURE: i32 = 1;
/// Process exit status: bad arguments or configuration.
pub const EXIT_USAGE: i32 = 2;

/// Independent stream for one named consumer of a run seed.
pub fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Hidden width and depth shared by the timed and plotted encoders.
pub const RPE_HIDDEN: usize = 64;
pub const RPE_DEPTH: usize = 3;

/// Seeded encoder with the standard hidden shape and `out` outputs.
pub fn seeded_rpe(out: usize, act: Activation, layer_norm: bool, seed: u64) -> MlpRpe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MlpRpe::with_hidden(RPE_HIDDEN, RPE_DEPTH, out, act, layer_norm, &mut rng).expect("standard rpe shape is valid")
}

/// Encoder behind the decay and response figures. ReLU nets skip layer norm
/// so their responses stay piecewise linear in the network input.
pub fn figure_rpe(act: Activation, seed: u64) -> MlpRpe {
    seeded_rpe(1, act, act != Activation::Relu, seed)
}
