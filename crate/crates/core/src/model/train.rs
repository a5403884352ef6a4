use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{save_params, Model, PreparedScenario};
use crate::error::{Error, Result};
use crate::numcore::{clip_grad_norm, AdamConfig, AdamState, SeededRng, Tape};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Joint gradient-norm cap; off when `None`.
    pub clip_norm: Option<f64>,
    /// Weight of the control-matching term (X-TRACK only).
    pub aux_weight: f64,
    /// Where the best-on-validation parameters are written, if anywhere.
    pub checkpoint: Option<PathBuf>,
    /// Shuffling seed.
    pub seed: u64,
    /// Worker count; `XTRACK_THREADS` or all cores when `None`.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            learning_rate: 1e-3,
            clip_norm: None,
            aux_weight: 0.0,
            checkpoint: None,
            seed: 0,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return Err(Error::Config("aux_weight must be non-negative".into()));
        }
        Ok(())
    }

    /// Applies one config-file key. Returns `false` for keys that are not
    /// training keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "clip_norm" => {
                self.clip_norm = match value {
                    "" | "none" | "off" => None,
                    v => Some(num(key, v)?),
                }
            }
            "aux_weight" => self.aux_weight = num(key, value)?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "train_seed" => self.seed = num(key, value)?,
            "threads" => self.threads = Some(num(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, before each update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch (validation loss, or training loss
    /// without a validation set).
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Adam updates applied, one per batch.
    pub optimizer_steps: u64,
}

fn prepare_all(model: &Model, set: &[Scenario]) -> Result<Vec<PreparedScenario>> {
    set.par_iter().map(|s| model.prepare(s)).collect()
}

/// Mean loss over `set` without gradients.
pub fn evaluate_loss(model: &Model, set: &[PreparedScenario], aux_weight: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let losses: Vec<f64> = set
        .par_iter()
        .map(|s| {
            let tape = Tape::new();
            Ok(model.loss_var(&tape, &model.store, s, aux_weight)?.scalar())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mini-batch Adam. Each batch runs its scenarios on the worker pool and
/// sums their gradients in batch order, so the run is bit-reproducible for
/// any worker count.
pub fn train(mut model: Model, train_set: &[Scenario], val_set: &[Scenario], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let pool = crate::parallel::pool(cfg.threads)?;
    pool.install(|| {
        let train_p = prepare_all(&model, train_set)?;
        let val_p = prepare_all(&model, val_set)?;
        let mut adam = AdamState::new(
            &model.store,
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            },
        );
        let mut rng = SeededRng::new(cfg.seed);
        let mut order: Vec<usize> = (0..train_p.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(f64, usize, crate::numcore::ParamStore)> = None;

        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut epoch_loss = 0.0;
            let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
            for (b, batch) in batches.iter().enumerate() {
                let results: Vec<(f64, Vec<f64>)> = batch
                    .par_iter()
                    .map(|&i| {
                        let tape = Tape::new();
                        let l = model.loss_var(&tape, &model.store, &train_p[i], cfg.aux_weight)?;
                        let g = tape.backward(l)?.flat_param_grads(&model.store);
                        Ok((l.scalar(), g))
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| match e {
                        Error::Propagation { .. } | Error::NonFinite(_) => Error::Diverged {
                            epoch,
                            batch: b,
                            loss: f64::NAN,
                        },
                        e => e,
                    })?;
                let scale = 1.0 / batch.len() as f64;
                let mut grad = vec![0.0; model.store.num_scalars()];
                let mut loss = 0.0;
                for (l, g) in &results {
                    loss += l;
                    for (acc, v) in grad.iter_mut().zip(g) {
                        *acc += v;
                    }
                }
                loss *= scale;
                grad.iter_mut().for_each(|g| *g *= scale);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged { epoch, batch: b, loss });
                }
                model.store.set_flat_grads(&grad)?;
                if let Some(c) = cfg.clip_norm {
                    clip_grad_norm(&mut model.store, c);
                }
                adam.step(&mut model.store)?;
                epoch_loss += loss;
            }
            let train_loss = epoch_loss / batches.len() as f64;
            let val_loss = if val_p.is_empty() {
                None
            } else {
                Some(evaluate_loss(&model, &val_p, cfg.aux_weight)?)
            };
            history.push(EpochStats {
                epoch,
                train_loss,
                val_loss,
            });
            let score = val_loss.unwrap_or(train_loss);
            if score.is_finite() && best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, epoch, model.store.clone()));
                if let Some(path) = &cfg.checkpoint {
                    save_params(&model, path)?;
                }
            }
        }
        let best_epoch = match best {
            Some((_, epoch, store)) => {
                model.store = store;
                epoch
            }
            None => 0,
        };
        Ok(TrainOutcome {
            model,
            history,
            best_epoch,
            optimizer_steps: adam.step_count(),
        })
    })
}
