use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::checkpoint::save_checkpoint;
use super::loss::bce_loss;
use super::model::{BackwardScratch, ForwardCache, Model};
use super::tensor::Tensor;
use crate::datagen::{FrameStore, LabelSet};
use crate::error::{Error, IoContext, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 512,
            epochs: 2,
            lr: 1e-3,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Seed for weight initialization under this config.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init", &[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss of the very first mini-batch, before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.mean_loss)
    }
}

pub const LOSS_LOG: &str = "loss_log.csv";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

fn write_loss_log(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush().context(|| format!("writing {}", path.display()))
}

/// Reads a `loss_log.csv` written by [`train`].
pub fn read_loss_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<EpochLog>, _>>()?)
}

/// Mini-batch Adam on binary cross-entropy. With `out_dir` set, writes a
/// checkpoint and the loss log after every epoch.
pub fn train(model: &mut Model, data: &FrameStore, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = &model.spec;
    if (data.mics, data.bands, data.classes) != (spec.mics, spec.bands, spec.classes) {
        return Err(Error::Shape(format!(
            "dataset is M={} K={} I={}, model is M={} K={} I={}",
            data.mics, data.bands, data.classes, spec.mics, spec.bands, spec.classes
        )));
    }
    let classes = spec.classes;
    let frame_len = data.frame_len();
    let hyper = AdamHyper {
        lr: config.lr,
        ..AdamHyper::default()
    };
    let mut adam = AdamState::new(&model.params, hyper);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout", &[]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut input = Vec::with_capacity(config.batch * frame_len);
    let mut cache = ForwardCache::default();
    let mut grads: Vec<Tensor> = model.spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
    let mut scratch = BackwardScratch::default();
    let mut labels = Vec::with_capacity(config.batch);
    let mut report = TrainReport {
        initial_loss: f64::NAN,
        epochs: Vec::new(),
    };

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle", &[epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            input.clear();
            labels.clear();
            for &i in chunk {
                input.extend(data.input(i).iter().map(|&v| v as f64));
                labels.push(LabelSet(data.labels[i]));
            }
            model.forward_train_into(&input, chunk.len(), config.dropout, &mut dropout_rng, &mut cache)?;
            let (loss, dprobs) = bce_loss(&cache.probs, &labels, classes);
            if !loss.is_finite() {
                return Err(Error::Shape(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            if epoch == 1 && b == 0 {
                report.initial_loss = loss;
            }
            loss_sum += loss * chunk.len() as f64;
            model.backward_into(&cache, &dprobs, &mut grads, &mut scratch)?;
            adam_step(model.params_mut(), &grads, &mut adam);
            if b % 100 == 99 {
                log::debug!("epoch {epoch} batch {} loss {loss:.4}", b + 1);
            }
        }
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: mean loss {:.5} ({:.1} s)", log.mean_loss, log.wall_seconds);
        report.epochs.push(log);
        if let Some(dir) = out_dir {
            save_checkpoint(model, &dir.join(checkpoint_name(epoch)))?;
            write_loss_log(&dir.join(LOSS_LOG), &report.epochs)?;
        }
    }
    Ok(report)
}
