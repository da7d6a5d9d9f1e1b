//! Training loop with the LR-plateau schedule, raw/grouped evaluation and
//! the single-resolution ensemble.

mod eval;
pub mod experiment;
mod samples;

pub use eval::{
    ensemble_grouped_single, evaluate_grouped, evaluate_raw, predict_all, GroupedEvaluation,
    RawEvaluation,
};
pub use samples::{build_samples, SampleSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::apply_noise;
use crate::model::{ModelError, MultiResCache, MultiResModel};
use crate::nn::{nadam_step, softmax_xent, Mode, NadamHyper, Param, Tensor};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}, layer `{layer}`")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        layer: String,
    },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("samples missing resolutions: {0}")]
    IncompleteTuples(String),
    #[error("ensemble models evaluate different file sets")]
    FoldMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Training hyperparameters. Defaults follow the reference protocol:
/// Nadam at 1e-5 with 10% plateau decay down to 5e-6, batches of 32.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub lr_decay: f64,
    pub plateau_epochs: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// stop once the lr sits at the floor with no improvement this long
    pub early_stop_stagnant: usize,
    /// training-time Gaussian noise on standardized cells
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-5,
            lr_min: 5e-6,
            lr_decay: 0.9,
            plateau_epochs: 3,
            batch_size: 32,
            max_epochs: 60,
            early_stop_stagnant: 12,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) {
        assert!(self.lr_min <= self.lr0, "lr_min must not exceed lr0");
        assert!(self.lr_decay > 0.0 && self.lr_decay < 1.0);
        assert!(self.batch_size >= 1 && self.plateau_epochs >= 1);
    }
}

/// One epoch's record in the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// learning rate used during this epoch
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,lr` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:e}\n",
                e.epoch, e.train_loss, e.val_loss, e.lr
            ));
        }
        out
    }
}

/// Next learning rate under the plateau rule: if the best validation loss
/// of the last `plateau_epochs` epochs does not improve (tolerance 1e-8)
/// on the best seen before them, multiply by `lr_decay`, floored at
/// `lr_min`. A window that saw an improvement or an lr change keeps the
/// current rate, which is exactly the "patience resets on reduction and
/// on improvement" behavior.
pub fn reduce_lr(history: &TrainHistory, cfg: &TrainConfig) -> f64 {
    let epochs = &history.epochs;
    assert!(!epochs.is_empty(), "reduce_lr needs at least one epoch");
    let cur = epochs.last().unwrap().lr;
    if cur <= cfg.lr_min {
        return cfg.lr_min;
    }
    let p = cfg.plateau_epochs;
    if epochs.len() < p + 1 {
        return cur;
    }
    let window = &epochs[epochs.len() - p..];
    if window.iter().any(|e| e.lr != cur) {
        return cur;
    }
    let best_before = epochs[..epochs.len() - p]
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    let min_window = window
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    if min_window >= best_before - 1e-8 {
        (cur * cfg.lr_decay).max(cfg.lr_min)
    } else {
        cur
    }
}

/// Gradient accumulation splits each batch into this many fixed chunks;
/// chunk sums are reduced in index order, so results do not depend on how
/// many worker threads happen to run.
const REDUCE_CHUNKS: usize = 8;

struct ChunkOutcome {
    loss_sum: f64,
    grads: Vec<Vec<f32>>,
    nonfinite_sample: Option<usize>,
}

/// Run forward/backward for a span of batch samples on a worker replica.
fn process_chunk(
    worker: &mut MultiResModel<f32>,
    set: &SampleSet,
    batch: &[usize],
    chunk: std::ops::Range<usize>,
    batch_scale: f32,
    epoch: usize,
    batch_idx: usize,
    cfg: &TrainConfig,
    cache: &mut MultiResCache<f32>,
    noisy: &mut Vec<Tensor<f32>>,
) -> ChunkOutcome {
    worker.zero_grads();
    let mut loss_sum = 0.0f64;
    let mut nonfinite_sample = None;
    for pos in chunk {
        let sample = batch[pos];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[
                "sample",
                &epoch.to_string(),
                &batch_idx.to_string(),
                &pos.to_string(),
            ],
        ));
        noisy.clear();
        noisy.extend(set.inputs[sample].iter().cloned());
        for tensor in noisy.iter_mut() {
            apply_noise(tensor.data_mut(), cfg.noise_sigma, Mode::Train, &mut rng);
        }
        let logits = worker
            .forward(noisy, Mode::Train, &mut rng, cache)
            .expect("sample arity fixed by SampleSet");
        let (loss, _, mut dlogits) =
            softmax_xent(&logits, set.labels[sample]).expect("labels validated");
        if !loss.is_finite() {
            nonfinite_sample = Some(sample);
            break;
        }
        loss_sum += f64::from(loss);
        for d in &mut dlogits {
            *d *= batch_scale;
        }
        worker.backward(&dlogits, cache);
    }
    let mut grads = Vec::new();
    worker.visit_params(&mut |_, p: &mut Param<f32>| grads.push(p.grad.data().to_vec()));
    ChunkOutcome {
        loss_sum,
        grads,
        nonfinite_sample,
    }
}

/// Train a model. Epochs iterate seeded shuffled mini-batches with Nadam
/// updates and mean-loss reduction; after each epoch the validation loss
/// runs with all stochastic layers disabled and the plateau rule updates
/// the learning rate. The parameters of the best-validation epoch are
/// restored into the model before returning.
pub fn train(
    model: &mut MultiResModel<f32>,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate();
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let hyper = NadamHyper::default();
    let workers = crate::util::worker_count().min(REDUCE_CHUNKS);
    let mut history = TrainHistory::default();
    let mut lr = cfg.lr0;
    let mut best: Option<(f64, Vec<(String, Param<f32>)>)> = None;
    let mut stagnant_at_floor = 0usize;

    // worker replicas; values refresh from the master each batch
    let mut replicas: Vec<MultiResModel<f32>> = (0..workers).map(|_| model.clone()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &["shuffle", &epoch.to_string()],
        ));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let batch_scale = 1.0 / batch.len() as f32;
            // fixed chunk boundaries keep the reduction order stable
            let per = batch.len().div_ceil(REDUCE_CHUNKS);
            let chunks: Vec<std::ops::Range<usize>> = (0..REDUCE_CHUNKS)
                .map(|c| (c * per).min(batch.len())..((c + 1) * per).min(batch.len()))
                .collect();

            for replica in &mut replicas {
                replica.copy_values_from(model);
            }

            let mut outcomes: Vec<Option<ChunkOutcome>> = Vec::new();
            outcomes.resize_with(REDUCE_CHUNKS, || None);
            let next = std::sync::atomic::AtomicUsize::new(0);
            let slots: Vec<std::sync::Mutex<&mut Option<ChunkOutcome>>> =
                outcomes.iter_mut().map(std::sync::Mutex::new).collect();
            std::thread::scope(|scope| {
                for replica in replicas.iter_mut() {
                    scope.spawn(|| {
                        let mut cache = MultiResCache::default();
                        let mut noisy = Vec::new();
                        loop {
                            let c = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            if c >= REDUCE_CHUNKS {
                                break;
                            }
                            if chunks[c].is_empty() {
                                continue;
                            }
                            let outcome = process_chunk(
                                replica,
                                train_set,
                                batch,
                                chunks[c].clone(),
                                batch_scale,
                                epoch,
                                batch_idx,
                                cfg,
                                &mut cache,
                                &mut noisy,
                            );
                            **slots[c].lock().unwrap() = Some(outcome);
                        }
                    });
                }
            });
            drop(slots);

            model.zero_grads();
            let mut batch_loss = 0.0f64;
            for outcome in outcomes.into_iter().flatten() {
                if let Some(sample) = outcome.nonfinite_sample {
                    let layer = model
                        .first_nonfinite_layer(
                            &train_set.inputs[sample],
                            &mut MultiResCache::default(),
                        )
                        .unwrap_or_else(|| "loss".to_string());
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        layer,
                    });
                }
                batch_loss += outcome.loss_sum;
                let mut i = 0;
                model.visit_params(&mut |_, p| {
                    for (g, o) in p.grad.data_mut().iter_mut().zip(&outcome.grads[i]) {
                        *g += *o;
                    }
                    i += 1;
                });
            }
            epoch_loss += batch_loss;
            model.visit_params(&mut |_, p| nadam_step(p, lr, &hyper));
        }

        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = validation_loss(model, val_set, &mut replicas);
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                layer: "validation".to_string(),
            });
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });

        let improved = best.as_ref().map_or(true, |(b, _)| val_loss < *b - 1e-8);
        if improved {
            best = Some((val_loss, model.checkpoint_entries()));
            stagnant_at_floor = 0;
        } else if lr <= cfg.lr_min {
            stagnant_at_floor += 1;
            if stagnant_at_floor >= cfg.early_stop_stagnant {
                break;
            }
        }
        lr = reduce_lr(&history, cfg);
    }

    if let Some((_, entries)) = best {
        let named: Vec<(String, &Param<f32>)> =
            entries.iter().map(|(n, p)| (n.clone(), p)).collect();
        let mut by_name: std::collections::HashMap<&str, &Param<f32>> =
            named.iter().map(|(n, p)| (n.as_str(), *p)).collect();
        model.visit_params(&mut |name, p| {
            if let Some(saved) = by_name.remove(name.as_str()) {
                *p = saved.clone();
            }
        });
    }
    Ok(history)
}

/// Mean cross-entropy over a sample set with stochastic layers disabled.
fn validation_loss(
    model: &mut MultiResModel<f32>,
    set: &SampleSet,
    replicas: &mut [MultiResModel<f32>],
) -> f64 {
    for replica in replicas.iter_mut() {
        replica.copy_values_from(model);
    }
    let n = set.len();
    let per = n.div_ceil(REDUCE_CHUNKS);
    let chunks: Vec<std::ops::Range<usize>> = (0..REDUCE_CHUNKS)
        .map(|c| (c * per).min(n)..((c + 1) * per).min(n))
        .collect();
    let mut sums = vec![0.0f64; REDUCE_CHUNKS];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut f64>> = sums.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for replica in replicas.iter_mut() {
            scope.spawn(|| {
                let mut cache = MultiResCache::default();
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                loop {
                    let c = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if c >= REDUCE_CHUNKS {
                        break;
                    }
                    let mut acc = 0.0f64;
                    for i in chunks[c].clone() {
                        let logits = replica
                            .forward(&set.inputs[i], Mode::Eval, &mut rng, &mut cache)
                            .expect("sample arity fixed");
                        let (loss, _, _) = softmax_xent(&logits, set.labels[i]).unwrap();
                        acc += f64::from(loss);
                    }
                    **slots[c].lock().unwrap() = acc;
                }
            });
        }
    });
    drop(slots);
    sums.iter().sum::<f64>() / n as f64
}
