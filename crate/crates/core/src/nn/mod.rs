//! A small differentiable CNN stack: strided conv stages with optional
//! residual blocks and batch normalization, global pooling, a linear head,
//! soft-target losses, Nesterov SGD and a 1cycle schedule.
//!
//! Everything is generic over [`Real`] so gradients can be checked in double
//! precision while training runs in single precision.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod optim;
mod regularize;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    input_gradient, loss_and_gradients, loss_value, smooth_targets, softmax_rows, validate_targets, LossConfig, LossKind,
    LossOutput,
};
pub use model::{BatchStats, ForwardMode, Gradients, Model, ModelConfig, StageConfig, Tape};
pub use optim::{sgd_step, OneCycleSchedule};
pub use regularize::{add_gaussian_noise, mix_with_lambdas, mixup_batch};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type of the network.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    /// `C ← α·op(A)·op(B) + β·C` on strided row-major storage.
    ///
    /// # Safety
    /// The strides must describe in-bounds views of the pointed-to buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// The adjacent representable value in the direction of `target`.
    fn step_toward(self, target: Self) -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Real for f32 {
    fn step_toward(self, target: f32) -> f32 {
        if target > self {
            self.next_up()
        } else if target < self {
            self.next_down()
        } else {
            self
        }
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn step_toward(self, target: f64) -> f64 {
        if target > self {
            self.next_up()
        } else if target < self {
            self.next_down()
        } else {
            self
        }
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `C(m×n) ← op(A)·op(B) + β·C`. `A` is stored `m×k` (or `k×m` when
/// `trans_a`), `B` is stored `k×n` (or `n×k` when `trans_b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the length checks above bound every strided access.
    unsafe {
        T::gemm_raw(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}
