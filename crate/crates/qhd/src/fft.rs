//! Unitary d-dimensional FFT on N^d row-major grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    n: usize,
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

/// Signed frequency of FFT bin j: {0,…,N/2−1, −N/2,…,−1}.
pub fn signed_frequency(j: usize, n: usize) -> f64 {
    if j < n / 2 || (n % 2 == 1 && j == n / 2) {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

impl FftNd {
    pub fn new(n: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            n,
            d,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / (n.pow(d as u32) as f64).sqrt(),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n.pow(self.d as u32));
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        for k in 0..self.d {
            let stride = n.pow((self.d - 1 - k) as u32);
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let block = n * stride;
            for (b, chunk) in data.chunks_mut(block).enumerate() {
                let out = &mut lines[b * block..(b + 1) * block];
                for o in 0..stride {
                    for j in 0..n {
                        out[o * n + j] = chunk[j * stride + o];
                    }
                }
            }
            plan.process(&mut lines);
            for (b, chunk) in data.chunks_mut(block).enumerate() {
                let inp = &lines[b * block..(b + 1) * block];
                for o in 0..stride {
                    for j in 0..n {
                        chunk[j * stride + o] = inp[o * n + j];
                    }
                }
            }
        }
        data.iter_mut().for_each(|c| *c *= self.scale);
    }
}
