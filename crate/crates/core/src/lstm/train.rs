use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    accumulate_gradients, forward_inner, mse_loss, predict, LstmError, LstmWeights, Result,
};
use crate::rng;
use crate::signal_io::WindowPair;

const TRAIN_STREAM: u64 = 0x0074_7261_696e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub early_stop_patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            early_stop_patience: 5,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(LstmError::InvalidConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.early_stop_patience == 0 {
            return fail("early_stop_patience must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            ));
        }
        Ok(())
    }
}

/// SGD with classical momentum: `v = mu * v - lr * g; w += v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(param_count: usize, learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: vec![0.0; param_count],
        }
    }

    pub fn for_config(weights: &LstmWeights, cfg: &TrainConfig) -> Self {
        Self::new(weights.as_flat().len(), cfg.learning_rate, cfg.momentum)
    }

    pub fn step(&mut self, weights: &mut LstmWeights, grads: &LstmWeights) {
        for ((w, v), g) in weights
            .as_flat_mut()
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grads.as_flat())
        {
            *v = self.momentum * *v - self.learning_rate * g;
            *w += *v;
        }
    }

    /// One pass over `pairs` in an order shuffled by `rng`, one update per
    /// minibatch of averaged gradients.
    pub fn run_epoch(
        &mut self,
        weights: &mut LstmWeights,
        pairs: &[WindowPair],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if pairs.is_empty() {
            return Err(LstmError::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(rng);
        let mut grads = LstmWeights::zeros(weights.dims());
        for batch in order.chunks(batch_size.max(1)) {
            grads.as_flat_mut().fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let pair = &pairs[idx];
                let cache = forward_inner(weights, &pair.features)?;
                accumulate_gradients(weights, &pair.target, &cache, scale, &mut grads)?;
            }
            self.step(weights, &grads);
        }
        if !weights.is_finite() {
            return Err(LstmError::NonFinite("weights"));
        }
        Ok(())
    }
}

/// One epoch from fresh optimizer state.
pub fn train_epoch(
    weights: &LstmWeights,
    pairs: &[WindowPair],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LstmWeights> {
    let mut out = weights.clone();
    Sgd::for_config(weights, cfg).run_epoch(&mut out, pairs, cfg.batch_size, rng)?;
    Ok(out)
}

/// Mean MSE of the model over `pairs`.
pub fn dataset_mse(weights: &LstmWeights, pairs: &[WindowPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    let mut total = 0.0;
    for pair in pairs {
        total += mse_loss(&predict(weights, &pair.features)?, &pair.target)?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Train with a time-ordered validation holdout and early stopping.
///
/// The last `ceil(val_fraction * n)` pairs are held out. Training stops once
/// validation MSE has not improved for `early_stop_patience` epochs, and the
/// weights of the best validation epoch are returned.
pub fn train(
    weights: &LstmWeights,
    pairs: &[WindowPair],
    cfg: &TrainConfig,
) -> Result<(LstmWeights, TrainHistory)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    if pairs.len() < 2 {
        return Err(LstmError::InvalidConfig(
            "training with a validation split needs at least 2 pairs".into(),
        ));
    }
    let n_val = ((cfg.val_fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len() - 1);
    let (fit, val) = pairs.split_at(pairs.len() - n_val);

    let mut rng = rng::stream(cfg.seed, TRAIN_STREAM);
    let mut sgd = Sgd::for_config(weights, cfg);
    let mut current = weights.clone();
    let mut best: Option<(f64, LstmWeights)> = None;
    let mut history = TrainHistory::default();
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        sgd.run_epoch(&mut current, fit, cfg.batch_size, &mut rng)?;
        let record = EpochRecord {
            epoch,
            train_mse: dataset_mse(&current, fit)?,
            val_mse: dataset_mse(&current, val)?,
        };
        history.epochs.push(record);
        match &best {
            Some((best_val, _)) if record.val_mse >= *best_val => {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((record.val_mse, current.clone()));
                history.best_epoch = epoch;
                stale = 0;
            }
        }
    }
    let (_, best_weights) = best.expect("at least one epoch ran");
    Ok((best_weights, history))
}
