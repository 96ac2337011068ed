use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BatchSource, PatchSample};
use crate::error::{ensure, Error, Result};
use crate::nn::{Example, LrSchedule, NetworkWeights, Sgd};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub iterations: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Iterations per loss-curve point.
    pub log_every: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            iterations: 5000,
            batch_size: 64,
            base_lr: 0.001,
            decay_factor: 10.0,
            decay_period: 3000,
            momentum: 0.9,
            weight_decay: 0.0,
            log_every: 100,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.batch_size >= 2 && self.batch_size % 2 == 0,
            InvalidArgument,
            "batch size must be even and positive, got {}",
            self.batch_size
        );
        ensure!(
            self.base_lr > 0.0 && self.base_lr.is_finite(),
            InvalidArgument,
            "base learning rate must be positive"
        );
        ensure!(self.decay_factor >= 1.0, InvalidArgument, "decay factor must be at least 1");
        ensure!(self.decay_period >= 1, InvalidArgument, "decay period must be positive");
        ensure!((0.0..1.0).contains(&self.momentum), InvalidArgument, "momentum must be in [0, 1)");
        ensure!(self.weight_decay >= 0.0, InvalidArgument, "weight decay must be non-negative");
        ensure!(self.log_every >= 1, InvalidArgument, "log_every must be positive");
        Ok(())
    }

    pub fn lr(&self) -> LrSchedule {
        LrSchedule {
            base: self.base_lr,
            factor: self.decay_factor,
            period: self.decay_period,
        }
    }
}

/// One loss-curve point: mean batch loss over the preceding window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Iterations completed.
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Optimizer state carried between runs.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub iteration: usize,
    pub optimizer: Sgd<f32>,
}

impl TrainState {
    pub fn new(schedule: &TrainSchedule) -> Self {
        TrainState {
            iteration: 0,
            optimizer: Sgd::new(schedule.momentum, schedule.weight_decay),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Batch loss of every iteration run.
    pub losses: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

/// Run SGD from `state.iteration` up to `schedule.iterations`.
///
/// Every batch must be exactly half positive. A non-finite loss or weight
/// aborts with [`Error::Divergence`].
pub fn train(
    weights: &mut NetworkWeights<f32>,
    source: &mut dyn BatchSource,
    schedule: &TrainSchedule,
    state: &mut TrainState,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<TrainReport> {
    schedule.validate()?;
    let lr = schedule.lr();
    let mut report = TrainReport::default();
    let mut window = Vec::with_capacity(schedule.log_every);
    while state.iteration < schedule.iterations {
        let it = state.iteration;
        let batch = source.batch(it, schedule.batch_size)?;
        let positives = batch.iter().filter(|s| s.label == 1).count();
        ensure!(
            batch.len() == schedule.batch_size && 2 * positives == batch.len(),
            InvalidArgument,
            "batch {it} is not balanced: {positives} positives of {}",
            batch.len()
        );
        let (loss, grads) = match weights.backward(&batch) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => return Err(Error::Divergence { iteration: it, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        let rate = lr.at(it);
        state.optimizer.step(weights, &grads, rate)?;
        if !weights.layers().iter().all(|l| l.kernels.all_finite() && l.bias.all_finite()) {
            return Err(Error::Divergence { iteration: it, loss: f64::NAN });
        }
        state.iteration += 1;
        report.losses.push(loss);
        window.push(loss);
        if state.iteration % schedule.log_every == 0 || state.iteration == schedule.iterations {
            let point = CurvePoint {
                iteration: state.iteration,
                loss: window.iter().sum::<f64>() / window.len() as f64,
                lr: rate,
            };
            on_point(&point);
            report.curve.push(point);
            window.clear();
        }
    }
    Ok(report)
}

/// Fraction of samples whose thresholded score (> 0.5 means match) equals the label.
pub fn classification_accuracy(weights: &NetworkWeights<f32>, samples: &[PatchSample]) -> Result<f64> {
    ensure!(!samples.is_empty(), InvalidArgument, "no samples to evaluate");
    let correct = samples
        .par_iter()
        .map(|s| {
            let score = weights.similarity_forward(s.patches())?;
            let predicted = (score.data()[0] > 0.5) as u8;
            Ok((predicted == s.label()) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / samples.len() as f64)
}

/// Means of consecutive non-overlapping windows of `size` losses.
pub fn block_means(losses: &[f64], size: usize) -> Vec<f64> {
    losses
        .chunks_exact(size.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
