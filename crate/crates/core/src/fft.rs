//! Unitary square 2-D DFT on row-major buffers.
//!
//! Arrays keep the origin at index 0 in both domains. Signed frequency `f`
//! of an `n`-point axis lives at position `f mod n`; the signed range is
//! `[-(n/2), n - n/2 - 1]`, so odd and even sizes both work.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Fft2 {
            n,
            fwd,
            inv,
            scratch_len,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unitary forward transform of an `n x n` row-major buffer.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// In-place unitary inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "Fft2 buffer must be {n}x{n}");
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Signed frequency index of array position `pos` on an `n`-point axis.
#[inline]
pub fn signed_freq(pos: usize, n: usize) -> i64 {
    let half = (n / 2) as i64;
    let p = pos as i64;
    if p < n as i64 - half {
        p
    } else {
        p - n as i64
    }
}

/// Array position of signed frequency `f`, if it is representable.
#[inline]
pub fn freq_pos(f: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    let hi = n as i64 - half - 1;
    if f < -half || f > hi {
        None
    } else {
        Some(f.rem_euclid(n as i64) as usize)
    }
}
