use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{accumulate, Gradients, Workspace};
use super::network::{MlpNetwork, Stage};
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the measurand term `MSE(x, x~)`.
    pub alpha: f64,
    /// Weight of the reading term `MSE(y, y~)`.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Windows per mini-batch.
    pub batch_size: usize,
    pub window_length: usize,
    pub optimizer: OptimizerKind,
    /// Physical amplitude mapped to one network unit.
    pub signal_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            window_length: 128,
            optimizer: OptimizerKind::ADAM,
            signal_scale: 1.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Validation("loss weights must be finite and >= 0".into()));
        }
        if !(self.alpha + self.beta > 0.0) {
            return Err(Error::Validation("alpha + beta must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return Err(Error::Validation("signal_scale must be positive".into()));
        }
        if self.window_length == 0 {
            return Err(Error::Validation("window_length must be positive".into()));
        }
        Ok(())
    }
}

/// Set of layers whose parameters must not change during training.
pub type FrozenLayers = BTreeSet<Stage>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub loss_x: Option<f64>,
    pub loss_y: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Shuffled mini-batch training over aligned windows.
///
/// Each reported epoch loss is the mean per-window loss seen while the epoch
/// ran. Layers in `frozen` are marked non-trainable on `net` and are left
/// bit-identical; every other layer is marked trainable.
pub fn train(
    net: &mut MlpNetwork,
    y_windows: &[Vec<f64>],
    x_windows: Option<&[Vec<f64>]>,
    cfg: &TrainConfig,
    frozen: &FrozenLayers,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if y_windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = net.width();
    if cfg.window_length != w {
        return Err(Error::ShapeMismatch {
            expected: w,
            actual: cfg.window_length,
        });
    }
    if let Some(xs) = x_windows {
        if xs.len() != y_windows.len() {
            return Err(Error::LengthMismatch {
                left: y_windows.len(),
                right: xs.len(),
            });
        }
    }
    for win in y_windows.iter().chain(x_windows.into_iter().flatten()) {
        if win.len() != w {
            return Err(Error::ShapeMismatch {
                expected: w,
                actual: win.len(),
            });
        }
    }

    for stage in Stage::ALL {
        net.set_trainable(stage, !frozen.contains(&stage));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..y_windows.len()).collect();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, net);
    let mut grads = Gradients::zeros_like(net);
    let mut ws = Workspace::new(w);
    let any_trainable = net.layers().iter().any(|l| l.trainable);
    let mut trace = TrainTrace::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_x, mut sum_y, mut sum_total) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            for &i in batch {
                let x = x_windows.map(|xs| xs[i].as_slice());
                let loss = accumulate(net, &y_windows[i], x, cfg, &mut grads, &mut ws, true);
                sum_x += loss.loss_x.unwrap_or(0.0);
                sum_y += loss.loss_y;
                sum_total += loss.total;
            }
            if !sum_total.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if any_trainable {
                grads.scale(1.0 / batch.len() as f64);
                optimizer.apply(net, &grads);
            }
        }
        let n = y_windows.len() as f64;
        let record = EpochRecord {
            epoch,
            loss_x: x_windows.map(|_| sum_x / n),
            loss_y: sum_y / n,
            total: sum_total / n,
        };
        if !record.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.records.push(record);
    }
    Ok(trace)
}
