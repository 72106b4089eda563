//! Epoch loop shared by the metric encoder and the softmax classifier.

use log::info;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, PlateauAction, PlateauScheduler};
use super::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub learning_rate: f32,
    pub lr_patience: usize,
    pub lr_factor: f32,
    pub patience: usize,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Validation loss of the untrained weights.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 means the initial weights were never improved upon.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Runs epochs until the validation loss stops improving for `patience`
/// epochs or `max_epochs` is reached, then restores the best weights.
pub fn run_training<T, V>(
    net: &mut Network,
    cfg: &LoopConfig,
    mut train_epoch: T,
    mut validate: V,
) -> Result<TrainingHistory>
where
    T: FnMut(&mut Network, &mut Adam, usize) -> Result<f64>,
    V: FnMut(&Network) -> Result<f64>,
{
    let mut adam = Adam::new(net.num_params(), cfg.learning_rate);
    let mut sched = PlateauScheduler::new(cfg.patience, cfg.lr_patience, cfg.lr_factor);
    let initial = validate(net)?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss(format!("initial validation loss is {initial}")));
    }
    sched.observe(0, initial);
    let mut best_params = net.params().to_vec();
    let mut history = TrainingHistory {
        initial_val_loss: initial,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: initial,
        stopped_early: false,
    };

    for epoch in 1..=cfg.max_epochs {
        let train_loss = train_epoch(net, &mut adam, epoch)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "training loss {train_loss} at epoch {epoch} (lr {})",
                adam.lr
            )));
        }
        let val_loss = validate(net)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "validation loss {val_loss} at epoch {epoch} (lr {})",
                adam.lr
            )));
        }
        info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {:.2e}", adam.lr);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: adam.lr,
        });
        match sched.observe(epoch, val_loss) {
            PlateauAction::Improved => {
                best_params.copy_from_slice(net.params());
                history.best_epoch = epoch;
                history.best_val_loss = val_loss;
            }
            PlateauAction::ReduceLr => adam.lr = sched.reduced(adam.lr),
            PlateauAction::Stop => {
                history.stopped_early = true;
                break;
            }
            PlateauAction::Continue => {}
        }
    }
    net.params_mut().copy_from_slice(&best_params);
    Ok(history)
}
