//! Dense tensors, a reverse-mode tape, an adaptive-moment optimizer and a
//! finite-difference gradient checker.

mod gradcheck;
mod linear;
mod optim;
mod params;
mod serial;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use linear::Linear;
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{Tape, Var, NORM_FLOOR};
pub use tensor::Tensor;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Independent sub-seed for `stream` (a named subsystem) of a root seed.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("optimizer state error: {0}")]
    State(String),
}

/// `c = op(a) · op(b)` where `op` optionally transposes; `a` is stored as m×k
/// (or k×m when transposed), `b` as k×n (or n×k). `c` is overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
