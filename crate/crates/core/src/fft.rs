//! Two-dimensional FFTs on square row-major buffers.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::{lit, Real};

/// Planned forward/inverse 2-D transforms for an `n × n` buffer.
///
/// The inverse transform is normalized by `1/n²`, so `inverse(forward(x)) = x`.
#[derive(Clone)]
pub struct Fft2<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.inverse);
        let s = T::one() / lit((self.n * self.n) as f64);
        for v in data.iter_mut() {
            *v = v.scale(s);
        }
    }

    /// Unnormalized inverse transform `Σ_k X_k e^{+2πi k·x/n}`.
    pub fn inverse_unnormalized(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        assert_eq!(data.len(), self.n * self.n, "buffer is not n × n");
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
    }
}

fn transpose_square<C: Copy>(data: &mut [C], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}
