use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Unitary DFT pair of a fixed length: `X[ν] = N^{-1/2} Σ_n x[n] e^{−j2πνn/N}`.
#[derive(Clone)]
pub(crate) struct UnitaryDft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn forward(&self, buf: &mut [C64]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Unnormalized forward transform `Σ_n x[n] e^{−j2πνn/N}`.
    pub fn forward_raw(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform `Σ_ν X[ν] e^{+j2πνn/N}`.
    pub fn inverse_raw(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
    }
}
