//! Mini-batch training: seeded shuffle, batched forward/backward, MSE
//! against membership targets, Adam updates, per-epoch validation loss.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{normalize_contrasts, IntensityNormalization};
use crate::network::{Network, NetworkConfig, NetworkGrads};
use crate::numerics::{mse_loss, AdamConfig, AdamState, Tensor4};
use crate::volume::Volume;
use crate::targets::{extract_patches, make_membership_target, split_train_validation, PatchSet, DEFAULT_PATCH, DEFAULT_VALIDATION_FRACTION};

/// Items per work unit inside a batch. Chunk gradients are summed in chunk
/// order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_EVAL_BATCH_SIZE: usize = 64;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Square patch side used when patches are extracted for this run.
    pub patch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            eval_batch_size: DEFAULT_EVAL_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            seed: 0,
            patch: DEFAULT_PATCH,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.patch % 2 == 0 {
            return Err(Error::invalid(format!("patch size {} must be odd", self.patch)));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Wall time; the only field that differs between identical runs.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Bitwise equality of the loss history, ignoring wall time.
    pub fn same_losses(&self, other: &TrainingLog) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
            })
    }

    /// Losses are written in shortest round-trip form, so identical runs
    /// differ only in the `seconds` column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:e},{:e},{:.3}", r.epoch, r.train_loss, r.val_loss, r.seconds);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn check_patches(net: &Network<f32>, data: &PatchSet) -> Result<()> {
    if data.num_contrasts() != net.config().num_contrasts {
        return Err(Error::shape(format!(
            "patches carry {} contrasts, network expects {}",
            data.num_contrasts(),
            net.config().num_contrasts
        )));
    }
    Ok(())
}

/// Mean per-patch MSE over `indices` and its gradient with respect to every
/// parameter.
pub fn batch_loss_and_gradient(
    net: &Network<f32>,
    data: &PatchSet,
    indices: &[usize],
) -> Result<(f64, NetworkGrads<f32>)> {
    check_patches(net, data)?;
    if indices.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let batch = indices.len() as f64;
    let parts = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| -> Result<(f64, NetworkGrads<f32>)> {
            let inputs: Vec<Tensor4<f32>> = data.contrasts.iter().map(|c| c.select(chunk)).collect();
            let target = data.target.select(chunk);
            let cache = net.forward_training(&inputs)?;
            let (loss, grad) = mse_loss(cache.prediction(), &target)?;
            let weight = chunk.len() as f64 / batch;
            let w32 = weight as f32;
            let grad = grad.map(|g| g * w32);
            Ok((loss * weight, net.backward(&cache, &grad)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("at least one chunk");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Mean per-patch MSE of the unclamped prediction.
pub fn evaluate_loss(net: &Network<f32>, data: &PatchSet, batch_size: usize) -> Result<f64> {
    check_patches(net, data)?;
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty patch set"));
    }
    let pred = net.forward_chunked(&data.contrasts, batch_size)?;
    let (loss, _) = mse_loss(&pred, &data.target)?;
    Ok(loss)
}

/// [`train_with_progress`] without a progress callback.
pub fn train(net: Network<f32>, data: &PatchSet, config: &TrainingConfig) -> Result<(Network<f32>, TrainingLog)> {
    train_with_progress(net, data, config, |_| {})
}

/// Splits `data` into training and validation patches, runs
/// `config.epochs` full passes over the training split and returns the
/// final-epoch model with its loss history.
pub fn train_with_progress(
    mut net: Network<f32>,
    data: &PatchSet,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network<f32>, TrainingLog)> {
    config.validate()?;
    let mut log = TrainingLog::default();
    if config.epochs == 0 {
        return Ok((net, log));
    }
    if data.is_empty() {
        return Err(Error::NoLesionVoxels);
    }
    check_patches(&net, data)?;
    let (train_set, val_set) = split_train_validation(data, config.validation_fraction, config.seed)?;
    if val_set.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    if train_set.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }

    let mut adam = AdamState::<f32>::new(config.adam(), &net.parameter_block_lens());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, grads) = batch_loss_and_gradient(&net, &train_set, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            adam.step(&mut net.parameter_blocks_mut(), &grads.blocks())
                .map_err(|e| match e {
                    Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {b}")),
                    other => other,
                })?;
            loss_sum += loss * batch.len() as f64;
        }
        let val_loss = evaluate_loss(&net, &val_set, config.eval_batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok((net, log))
}

/// Normalizes the contrasts, smooths `mask` into a membership target and
/// extracts square `patch` patches around every lesion voxel.
pub fn prepare_case(
    contrasts: &[&Volume],
    mask: &Volume,
    patch: usize,
    sigma: f64,
    norm: &IntensityNormalization,
) -> Result<PatchSet> {
    let normalized = normalize_contrasts(contrasts, norm)?;
    let refs: Vec<&Volume> = normalized.iter().collect();
    let target = make_membership_target(mask, sigma)?;
    extract_patches(&refs, mask, (patch, patch), &target)
}

/// A trained network with its loss history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub log: TrainingLog,
}

/// Trains one model per rater's mask set. Each seed drives both the weight
/// initialization and the training shuffle of its model.
pub fn train_two_raters(
    net_config: &NetworkConfig,
    seeds: [u64; 2],
    rater1: &PatchSet,
    rater2: &PatchSet,
    config: &TrainingConfig,
) -> Result<(TrainedModel, TrainedModel)> {
    let run = |seed: u64, data: &PatchSet| -> Result<TrainedModel> {
        let net = Network::build(net_config.clone(), seed)?;
        let cfg = TrainingConfig { seed, ..config.clone() };
        let (network, log) = train(net, data, &cfg)?;
        Ok(TrainedModel { network, log })
    };
    Ok((run(seeds[0], rater1)?, run(seeds[1], rater2)?))
}
