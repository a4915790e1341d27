//! Multi-dimensional complex FFT over a row-major periodic grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const TILE: usize = 16;

#[derive(Clone)]
pub struct FftNd {
    len: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("len", &self.len).field("dims", &self.dims).finish()
    }
}

impl FftNd {
    pub fn new(len: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            len,
            dims,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn total(&self) -> usize {
        self.len.pow(self.dims as u32)
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, normalized so that `inverse∘forward = id`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / self.total() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.total());
        let n = self.len;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut block = vec![Complex64::new(0.0, 0.0); n * TILE];
        for axis in 0..self.dims {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            // Gather TILE lines along `axis` at a time into contiguous rows.
            let slab = n * stride;
            for chunk in data.chunks_mut(slab) {
                let mut j0 = 0;
                while j0 < stride {
                    let w = TILE.min(stride - j0);
                    for i in 0..n {
                        let row = &chunk[i * stride + j0..i * stride + j0 + w];
                        for (j, &v) in row.iter().enumerate() {
                            block[j * n + i] = v;
                        }
                    }
                    plan.process_with_scratch(&mut block[..w * n], &mut scratch);
                    for i in 0..n {
                        let row = &mut chunk[i * stride + j0..i * stride + j0 + w];
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = block[j * n + i];
                        }
                    }
                    j0 += w;
                }
            }
        }
    }
}

/// Signed wavenumber of DFT index `i` on a grid of `n` points.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
