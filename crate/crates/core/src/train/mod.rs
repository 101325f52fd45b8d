//! Adam optimisation with warmup, plateau-triggered step decay and early
//! stopping on validation macro-F1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{macro_f1, predict};
use crate::modality::{batch_plan, Batch, Dataset, Split};
use crate::model::{Model, Parameters};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay_factor: f64,
    pub max_decays: u32,
    /// Consecutive non-improving epochs that count as one plateau.
    pub plateau_epochs: usize,
    pub batch: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            decay_factor: 0.5,
            max_decays: 3,
            plateau_epochs: 2,
            batch: 32,
            max_epochs: 20,
            early_stop_patience: 5,
            warmup_epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(format!("train: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return fail("decay_factor must be in (0, 1)");
        }
        if self.batch == 0 || self.max_epochs == 0 || self.plateau_epochs == 0 {
            return fail("batch, max_epochs and plateau_epochs must be >= 1");
        }
        Ok(())
    }
}

/// Learning rate for a 1-based `epoch` after `plateaus` validation plateaus.
pub fn lr_at(epoch: usize, cfg: &TrainConfig, plateaus: u32) -> f64 {
    if epoch <= cfg.warmup_epochs {
        return cfg.lr * epoch as f64 / cfg.warmup_epochs as f64;
    }
    cfg.lr * cfg.decay_factor.powi(plateaus.min(cfg.max_decays) as i32)
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Parameters,
    v: Parameters,
    pub steps: u64,
}

impl Adam {
    pub fn new(params: &Parameters) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64) -> Result<()> {
        self.steps += 1;
        let c1 = 1.0 - BETA1.powi(self.steps as i32);
        let c2 = 1.0 - BETA2.powi(self.steps as i32);
        let names: Vec<String> = grads.named().into_iter().map(|(n, _)| n).collect();
        let gs = grads.named();
        for ((((p, m), v), (_, g)), name) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(gs)
            .zip(&names)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * gi;
                v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * gi * gi;
                let step = lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + ADAM_EPS);
                p.data[i] -= step;
            }
            if !p.is_finite() {
                return Err(Error::numerical(format!("non-finite update in {name}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_f1\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_f1));
    }
    s
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Train on the `Train` split, select on `Val` (or on `Train` when no
/// validation samples exist). `on_epoch` sees every record as it is made.
pub fn fit(
    mut model: Model,
    ds: &Dataset,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    let n_classes = model.config.n_classes;
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    let mut val = ds.indices(Split::Val);
    if val.is_empty() {
        val = train.clone();
    }
    let mut adam = Adam::new(&model.params);
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let (mut since_best, mut streak, mut plateaus) = (0usize, 0usize, 0u32);
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = lr_at(epoch, cfg, plateaus);
        let seed = epoch_seed(cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for idx in batch_plan(&train, cfg.batch, Some(seed))? {
            let batch = Batch::gather(&ds.samples, &ds.events, &idx, n_classes);
            let (loss, grads) = model
                .loss_and_grad(&batch, Some(seed), exec)
                .map_err(|e| Error::numerical(format!("epoch {epoch}: {e}")))?;
            loss_sum += loss * idx.len() as f64;
            adam.step(&mut model.params, &grads, lr)
                .map_err(|e| Error::numerical(format!("epoch {epoch}: {e}")))?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::numerical(format!("epoch {epoch}: loss diverged")));
        }
        let p = predict(&model, ds, &val, cfg.batch, exec)?;
        let val_f1 = macro_f1(&p.truth, &p.predicted, n_classes);
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_f1,
        };
        on_epoch(&record);
        history.push(record);
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
            streak = 0;
        } else {
            since_best += 1;
            streak += 1;
            if streak == cfg.plateau_epochs {
                plateaus += 1;
                streak = 0;
            }
            if since_best >= cfg.early_stop_patience && epoch < cfg.max_epochs {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(FitResult {
        best,
        best_epoch,
        best_val_f1: best_f1,
        history,
        stopped_early,
    })
}
