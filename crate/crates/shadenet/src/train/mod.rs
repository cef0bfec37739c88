//! Mini-batch training loop: seeded shuffling and cropping, adaptive
//! parameter updates, periodic validation, curve emission and
//! checkpointing.
//!
//! All randomness is derived functionally from `(seed, iteration)` and
//! `(seed, epoch)`, so a run can be resumed from any checkpoint and
//! reproduce the uninterrupted run bitwise.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::ConvGrads;
use crate::loss::{loss_backward, LossKind};
use crate::optim::{adadelta_step, AdadeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
use crate::runtime::{evaluate, Evaluation};
use crate::unet::{NetConfig, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub loss: LossKind,
    pub iterations: usize,
    pub batch_size: usize,
    /// Square crop edge taken from stored images each iteration; must be
    /// divisible by `2^(levels-1)` and by 8.
    pub crop_size: usize,
    /// Validation (and checkpoint) cadence in iterations.
    pub validation_every: usize,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.attributes.is_empty() {
            return Err(Error::invalid(
                "training needs a non-empty attribute list to assemble inputs",
            ));
        }
        if self.iterations == 0 || self.batch_size == 0 || self.validation_every == 0 {
            return Err(Error::invalid(
                "iterations, batch_size and validation_every must be >= 1",
            ));
        }
        let d = self.net.resolution_divisor();
        if self.crop_size % d != 0 || self.crop_size % 8 != 0 {
            return Err(Error::invalid(format!(
                "crop_size {} must be divisible by {d} (pooling) and 8 (loss tiling)",
                self.crop_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    pub train_loss: f64,
    pub val_dssim: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub network: Network,
    pub states: Vec<AdadeltaState>,
    pub curve: Vec<CurvePoint>,
    pub final_validation: Evaluation,
}

/// CSV with columns `iteration,train_loss,val_dssim` (empty when absent).
pub fn write_curves_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("iteration,train_loss,val_dssim\n");
    for p in curve {
        match p.val_dssim {
            Some(v) => out.push_str(&format!("{},{},{}\n", p.iteration, p.train_loss, v)),
            None => out.push_str(&format!("{},{},\n", p.iteration, p.train_loss)),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

const SALT_EPOCH: u64 = 0x45504f43; // "EPOC"
const SALT_ITER: u64 = 0x49544552; // "ITER"

/// Per-epoch full permutation, rebuilt lazily as iteration positions
/// advance through epochs.
struct EpochShuffler {
    seed: u64,
    n: usize,
    epoch: Option<u64>,
    perm: Vec<usize>,
}

impl EpochShuffler {
    fn new(seed: u64, n: usize) -> Self {
        EpochShuffler { seed, n, epoch: None, perm: Vec::new() }
    }

    fn index_at(&mut self, pos: u64) -> usize {
        let e = pos / self.n as u64;
        if self.epoch != Some(e) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, SALT_EPOCH ^ e));
            perm.shuffle(&mut rng);
            self.perm = perm;
            self.epoch = Some(e);
        }
        self.perm[(pos % self.n as u64) as usize]
    }
}

/// Trains a freshly initialized network (weights seeded from
/// `config.seed`).
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutput> {
    config.validate()?;
    let net = Network::build(config.net.clone(), config.seed)?;
    let states = net
        .param_blocks()
        .iter()
        .map(|b| AdadeltaState::new(b.len(), DEFAULT_RHO, DEFAULT_EPSILON))
        .collect::<Result<Vec<_>>>()?;
    train_loop(config, dataset, net, states, 0)
}

/// Continues training from a checkpoint up to its config's iteration
/// count; bitwise identical to the uninterrupted run.
pub fn resume(checkpoint_path: &Path, dataset: &Dataset) -> Result<TrainOutput> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    ckpt.config.validate()?;
    let (net, states) = ckpt.restore()?;
    train_loop(&ckpt.config, dataset, net, states, ckpt.iteration)
}

fn train_loop(
    config: &TrainConfig,
    dataset: &Dataset,
    mut net: Network,
    mut states: Vec<AdadeltaState>,
    start_iteration: u64,
) -> Result<TrainOutput> {
    let train_idx = dataset.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::invalid("train split is empty"));
    }
    if dataset.indices_of(Split::Validation).is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    for &i in &train_idx {
        let record = dataset.record(i);
        let (h, w) = record.resolution();
        if h < config.crop_size || w < config.crop_size {
            return Err(Error::invalid(format!(
                "record `{}` is {h}x{w}, smaller than crop_size {}",
                record.meta.id, config.crop_size
            )));
        }
    }
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let attrs = &config.net.attributes;
    let mode = config.net.mode;
    let crop = config.crop_size;
    let batch = config.batch_size;
    let iterations = config.iterations as u64;

    let mut shuffler = EpochShuffler::new(config.seed, train_idx.len());
    let mut curve = Vec::new();

    for iter in start_iteration..iterations {
        // Batch membership and crop origins for this iteration, all from
        // functionally derived RNG streams.
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, SALT_ITER ^ iter));
        let mut items = Vec::with_capacity(batch);
        for k in 0..batch as u64 {
            let pos = iter * batch as u64 + k;
            let idx = train_idx[shuffler.index_at(pos)];
            let (h, w) = dataset.record(idx).resolution();
            let top = if h > crop { rng.gen_range(0..=h - crop) } else { 0 };
            let left = if w > crop { rng.gen_range(0..=w - crop) } else { 0 };
            items.push((idx, top, left));
        }

        let results: Vec<(f64, Vec<ConvGrads>)> = items
            .par_iter()
            .map(|&(idx, top, left)| -> Result<(f64, Vec<ConvGrads>)> {
                let record = dataset.record(idx);
                let input = record.input_tensor(attrs, mode)?.crop(top, left, crop)?;
                let target = record.target_for(mode)?.crop(top, left, crop)?;
                let (out, cache) = net.forward_cached(&input)?;
                if out.channels() != target.channels() {
                    return Err(Error::ConfigMismatch(format!(
                        "network outputs {} channels but target `{}` has {}",
                        out.channels(),
                        record.meta.id,
                        target.channels()
                    )));
                }
                let (value, grad) = loss_backward(config.loss, &out, &target)?;
                let grads = net.backward(&cache, &grad)?;
                Ok((value, grads))
            })
            .collect::<Result<Vec<_>>>()?;

        // Fixed-order reduction keeps training deterministic.
        let mean_loss = results.iter().map(|r| r.0).sum::<f64>() / batch as f64;
        let mut iter_results = results.into_iter();
        let mut total = iter_results.next().expect("batch >= 1").1;
        for (_, grads) in iter_results {
            for (acc, g) in total.iter_mut().zip(&grads) {
                acc.add_assign(g);
            }
        }
        let scale = 1.0 / batch as f32;
        for g in &mut total {
            g.scale(scale);
        }

        {
            let blocks = net.param_blocks_mut();
            let grad_blocks: Vec<&[f32]> = total
                .iter()
                .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
                .collect();
            for ((params, grads), state) in
                blocks.into_iter().zip(grad_blocks).zip(states.iter_mut())
            {
                adadelta_step(params, grads, state)?;
            }
        }

        let done = iter + 1;
        let at_cadence = done % config.validation_every as u64 == 0 || done == iterations;
        let val_dssim = if at_cadence {
            Some(evaluate(&net, dataset, Split::Validation)?.mean_dssim)
        } else {
            None
        };
        curve.push(CurvePoint { iteration: done, train_loss: mean_loss, val_dssim });

        if at_cadence {
            if let Some(dir) = &config.checkpoint_dir {
                let ckpt = Checkpoint::capture(config, &net, &states, done);
                ckpt.save(&dir.join(format!("checkpoint_{done:06}.dshd")))?;
            }
        }
    }

    let final_validation = evaluate(&net, dataset, Split::Validation)?;
    Ok(TrainOutput { network: net, states, curve, final_validation })
}
