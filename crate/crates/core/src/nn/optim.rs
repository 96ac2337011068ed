use serde::{Deserialize, Serialize};

use super::network::{GradientSet, NetworkWeights};
use crate::error::{ensure, Result};
use crate::tensor::Scalar;

/// Step decay: the rate is divided by `factor` every `period` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 0.001,
            factor: 10.0,
            period: 100_000,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        let steps = if self.period == 0 { 0 } else { iteration / self.period };
        self.base / self.factor.powi(steps as i32)
    }
}

/// Plain `w <- w - lr * g` on every tensor.
pub fn sgd_step<T: Scalar>(weights: &mut NetworkWeights<T>, grads: &GradientSet<T>, lr: f64) -> Result<()> {
    ensure!(lr >= 0.0 && lr.is_finite(), InvalidArgument, "learning rate must be a finite non-negative number, got {lr}");
    let lr = T::from_f64_lossy(-lr);
    for (w, g) in weights.layers_mut().into_iter().zip(grads.layers()) {
        w.kernels.axpy(lr, &g.kernels)?;
        w.bias.axpy(lr, &g.bias)?;
    }
    Ok(())
}

/// SGD with classic momentum and L2 weight decay:
/// `v <- momentum * v + lr * (g + decay * w)`, `w <- w - v`.
#[derive(Clone, Debug)]
pub struct Sgd<T = f32> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<GradientSet<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: None,
        }
    }

    /// Momentum buffer, absent until the first momentum step.
    pub fn velocity(&self) -> Option<&GradientSet<T>> {
        self.velocity.as_ref()
    }

    /// Restore a momentum buffer saved from an earlier run.
    pub fn set_velocity(&mut self, velocity: Option<GradientSet<T>>) {
        self.velocity = velocity;
    }

    pub fn step(&mut self, weights: &mut NetworkWeights<T>, grads: &GradientSet<T>, lr: f64) -> Result<()> {
        ensure!(lr >= 0.0 && lr.is_finite(), InvalidArgument, "learning rate must be a finite non-negative number, got {lr}");
        if self.momentum == 0.0 && self.weight_decay == 0.0 {
            return sgd_step(weights, grads, lr);
        }
        let velocity = self.velocity.get_or_insert_with(|| GradientSet::zeros_like(weights));
        let mu = T::from_f64_lossy(self.momentum);
        let lr_t = T::from_f64_lossy(lr);
        let wd = T::from_f64_lossy(self.weight_decay);
        for ((w, g), v) in weights
            .layers_mut()
            .into_iter()
            .zip(grads.layers())
            .zip(velocity.layers_mut())
        {
            for (wt, gt, vt) in [
                (&mut w.kernels, &g.kernels, &mut v.kernels),
                (&mut w.bias, &g.bias, &mut v.bias),
            ] {
                for ((wi, &gi), vi) in wt.data_mut().iter_mut().zip(gt.data()).zip(vt.data_mut()) {
                    *vi = mu * *vi + lr_t * (gi + wd * *wi);
                    *wi -= *vi;
                }
            }
        }
        Ok(())
    }
}
