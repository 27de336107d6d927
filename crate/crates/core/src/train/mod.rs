//! Training loop and evaluation.

mod config;
mod evaluate;
mod schedule;

pub use config::TrainConfig;
pub use evaluate::{evaluate, Enhance, Passthrough};
pub use schedule::{EpochDecision, PlateauSchedule, IMPROVEMENT_TOL};

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{read_wav, DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::metrics::neg_snr_loss_with_grad;
use crate::model::{
    backward, build_model, forward_sequence, forward_train, save_weights, ModelParams, TopologySpec,
};
use crate::nn::{clip_grad_norm, Adam, GradientSet};

pub const CHECKPOINT_FILE: &str = "best.dtln";
pub const LOG_FILE: &str = "train_log.csv";

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean loss on the validation split; `None` without validation data.
    pub val_loss: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Manifest entries skipped because their audio could not be read.
    pub skipped_files: usize,
}

const LOG_HEADER: &str = "epoch,train_loss,val_loss,lr,wall_seconds";

impl EpochRecord {
    fn csv_row(&self) -> String {
        let val = self.val_loss.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.train_loss, val, self.lr, self.wall_seconds
        )
    }
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }
}

/// A loaded mixture/reference pair.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
}

fn load_pairs<'a>(
    entries: impl Iterator<Item = &'a ManifestEntry>,
    skipped: &mut usize,
) -> Vec<TrainPair> {
    let mut pairs = Vec::new();
    for e in entries {
        match (read_wav(&e.mixture), read_wav(&e.reference)) {
            (Ok(n), Ok(c)) => {
                let (mut noisy, mut clean) = (n.into_samples(), c.into_samples());
                let len = noisy.len().min(clean.len());
                noisy.truncate(len);
                clean.truncate(len);
                pairs.push(TrainPair { noisy, clean });
            }
            (Err(err), _) | (_, Err(err)) => {
                log::warn!("skipping {}: {err}", e.mixture.display());
                *skipped += 1;
            }
        }
    }
    pairs
}

/// Loss on `clean` trimmed to the estimate's length.
fn trimmed<'a>(estimate: &[f64], clean: &'a [f64]) -> (usize, &'a [f64]) {
    let n = estimate.len().min(clean.len());
    (n, &clean[..n])
}

/// Loss and gradient of one pair with dropout active. `None` for a silent
/// reference.
fn pair_gradient(
    params: &ModelParams,
    pair: &TrainPair,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(f64, GradientSet)>> {
    let (estimate, cache) = forward_train(params, &pair.noisy, Some(rng))?;
    let (n, reference) = trimmed(&estimate, &pair.clean);
    let (loss, grad) = match neg_snr_loss_with_grad(&estimate[..n], reference) {
        Ok(v) => v,
        Err(Error::SilentTarget { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut d_output = grad;
    d_output.resize(estimate.len(), 0.0);
    Ok(Some((loss, backward(params, &cache, &d_output)?)))
}

/// Mean loss without dropout over pairs with a non-silent reference.
pub fn mean_loss(params: &ModelParams, pairs: &[TrainPair]) -> Result<Option<f64>> {
    let losses: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|p| -> Result<Option<f64>> {
            let estimate = forward_sequence(params, &p.noisy)?;
            let (n, reference) = trimmed(&estimate, &p.clean);
            match crate::metrics::neg_snr_loss(&estimate[..n], reference) {
                Ok(l) => Ok(Some(l)),
                Err(Error::SilentTarget { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let valid: Vec<f64> = losses.into_iter().flatten().collect();
    Ok((!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64))
}

fn dropout_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + ((epoch as u64) << 32) + position as u64);
    rng
}

struct LogFile(PathBuf);

impl LogFile {
    fn create(dir: &Path) -> Result<Self> {
        let path = dir.join(LOG_FILE);
        fs::write(&path, format!("{LOG_HEADER}\n")).map_err(|e| Error::io(&path, e))?;
        Ok(Self(path))
    }

    fn append(&self, record: &EpochRecord) -> Result<()> {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.0)
            .map_err(|e| Error::io(&self.0, e))?;
        writeln!(f, "{}", record.csv_row()).map_err(|e| Error::io(&self.0, e))
    }
}

/// Trains the configured topology from a fresh initialization seeded with
/// `config.seed`.
pub fn train(config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    let params = build_model(&TopologySpec::named(&config.topology)?, config.seed)?;
    train_model(config, params)
}

/// Trains `params` on the pairs of `config.manifest`. See [`train_pairs`].
pub fn train_model(config: &TrainConfig, params: ModelParams) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    let manifest = DatasetManifest::read(&config.manifest)?;
    let mut skipped = 0;
    let train_set = load_pairs(manifest.split(Split::Train), &mut skipped);
    let val_set = load_pairs(manifest.split(Split::Val), &mut skipped);
    if skipped > 0 {
        log::warn!("{skipped} manifest entries could not be read");
    }
    let (best, mut log) = train_pairs(config, params, &train_set, &val_set)?;
    log.skipped_files = skipped;
    Ok((best, log))
}

/// The training loop.
///
/// Each epoch visits the training pairs in a seeded random order, in
/// batches of `batch_size`. A batch's gradient is the mean of its per-pair
/// gradients, reduced in batch order; it is clipped to `clip_norm` and
/// applied with Adam. After each epoch the validation loss (no dropout)
/// drives a [`PlateauSchedule`]; with no validation pairs the epoch's mean
/// training loss is monitored instead. The best parameters are written to
/// `checkpoint_dir/best.dtln` and returned as stored (rounded to `f32`).
pub fn train_pairs(
    config: &TrainConfig,
    mut params: ModelParams,
    train_set: &[TrainPair],
    val_set: &[TrainPair],
) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let dir = &config.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let log_file = LogFile::create(dir)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);

    let mut adam = Adam::new(&params.tensors, config.lr);
    let mut schedule = PlateauSchedule::new(
        config.lr,
        config.lr_halve_patience,
        config.early_stop_patience,
    );
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(u64::MAX);
    let mut log = TrainLog::default();
    let mut best: Option<ModelParams> = None;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        adam.lr = schedule.lr;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<Option<(f64, GradientSet)>>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mut rng = dropout_rng(config.seed, epoch, b * config.batch_size + k);
                    pair_gradient(&params, &train_set[i], &mut rng)
                })
                .collect();
            let mut total = params.zero_grads();
            let mut used = 0usize;
            for r in results {
                if let Some((loss, grads)) = r? {
                    if !loss.is_finite() || !grads.is_finite() {
                        return Err(Error::NanLoss {
                            epoch,
                            batch: b + 1,
                        });
                    }
                    loss_sum += loss;
                    total.add_assign(&grads);
                    used += 1;
                }
            }
            if used == 0 {
                continue;
            }
            total.scale(1.0 / used as f64);
            loss_count += used;
            clip_grad_norm(&mut total, config.clip_norm)?;
            adam.step(&mut params.tensors, &total);
        }
        if loss_count == 0 {
            return Err(Error::InvalidArgument(
                "every training reference is silent".into(),
            ));
        }
        let train_loss = loss_sum / loss_count as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            mean_loss(&params, val_set)?
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::NanLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: adam.lr,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.4} dB, val {} dB, lr {:e}",
            val_loss.map_or("-".to_string(), |v| format!("{v:.4}")),
            adam.lr
        );
        log_file.append(&record)?;
        log.epochs.push(record);

        let decision = schedule.observe(monitored);
        if decision.improved {
            let mut stored = params.clone();
            stored.quantize_f32();
            save_weights(&stored, &checkpoint)?;
            best = Some(stored);
            log.best_epoch = Some(epoch);
        }
        if decision.stop {
            log.stopped_early = true;
            break;
        }
    }
    let best = best.expect("the first finite epoch always improves");
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_wav;
    use crate::model::{load_weights_for, Basis, CoreSpec};
    use crate::transforms::AudioBuffer;
    use rand::Rng;

    pub(crate) fn tiny_topology() -> TopologySpec {
        TopologySpec {
            name: "DTLN".into(),
            cores: vec![
                CoreSpec {
                    basis: Basis::Stft,
                    lstm_layers: 2,
                },
                CoreSpec {
                    basis: Basis::Learned,
                    lstm_layers: 2,
                },
            ],
            lstm_units: 4,
            feature_size: 8,
            frame_len: 16,
            hop: 4,
            dropout: 0.25,
        }
    }

    fn tiny_pairs(n: usize, seed: u64) -> Vec<TrainPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let clean: Vec<f64> = (0..200)
                    .map(|i| 0.3 * (i as f64 * 0.3).sin() * rng.random_range(0.8..1.0))
                    .collect();
                let noisy = clean
                    .iter()
                    .map(|c| c + rng.random_range(-0.05..0.05))
                    .collect();
                TrainPair { noisy, clean }
            })
            .collect()
    }

    fn config(dir: &Path) -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            lr: 1e-2,
            max_epochs: 6,
            seed: 5,
            checkpoint_dir: dir.to_path_buf(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_and_checkpointed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let params = build_model(&tiny_topology(), 1).unwrap();
        let (train_set, val_set) = (tiny_pairs(5, 1), tiny_pairs(2, 2));
        let (a, log_a) = train_pairs(&cfg, params.clone(), &train_set, &val_set).unwrap();
        let saved = load_weights_for(dir.path().join(CHECKPOINT_FILE), &tiny_topology()).unwrap();
        assert_eq!(saved, a);
        let csv = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(csv.lines().count(), log_a.epochs.len() + 1);

        let (b, mut log_b) = train_pairs(&cfg, params, &train_set, &val_set).unwrap();
        assert_eq!(a, b);
        for (x, y) in log_a.epochs.iter().zip(&mut log_b.epochs) {
            y.wall_seconds = x.wall_seconds;
        }
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.epochs.len(), 6);
        assert!(log_a
            .epochs
            .windows(2)
            .all(|w| w[1].lr <= w[0].lr && w[1].epoch == w[0].epoch + 1));
    }

    #[test]
    fn validation_is_repeatable_and_training_helps() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.max_epochs = 30;
        let params = build_model(&tiny_topology(), 3).unwrap();
        let pairs = tiny_pairs(4, 7);
        let before = mean_loss(&params, &pairs).unwrap().unwrap();
        assert_eq!(before, mean_loss(&params, &pairs).unwrap().unwrap());
        let (best, log) = train_pairs(&cfg, params, &pairs, &[]).unwrap();
        assert!(log.epochs.iter().all(|e| e.val_loss.is_none()));
        let after = mean_loss(&best, &pairs).unwrap().unwrap();
        assert!(after < before - 1.0, "{before} -> {after}");
    }

    #[test]
    fn silent_references_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let params = build_model(&tiny_topology(), 1).unwrap();
        let mut pairs = tiny_pairs(3, 4);
        pairs[1].clean.iter_mut().for_each(|v| *v = 0.0);
        train_pairs(&cfg, params.clone(), &pairs, &[]).unwrap();
        pairs
            .iter_mut()
            .for_each(|p| p.clean.iter_mut().for_each(|v| *v = 0.0));
        assert!(train_pairs(&cfg, params, &pairs, &[]).is_err());
    }

    #[test]
    fn manifest_training_counts_unreadable_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for (i, pair) in tiny_pairs(3, 9).into_iter().enumerate() {
            let noisy = dir.path().join(format!("n{i}.wav"));
            let clean = dir.path().join(format!("c{i}.wav"));
            write_wav(&noisy, &AudioBuffer::from_samples(pair.noisy).unwrap()).unwrap();
            write_wav(&clean, &AudioBuffer::from_samples(pair.clean).unwrap()).unwrap();
            entries.push(ManifestEntry {
                split: if i == 2 { Split::Val } else { Split::Train },
                mixture: noisy,
                reference: clean,
                snr_db: 0.0,
            });
        }
        entries.push(ManifestEntry {
            split: Split::Train,
            mixture: dir.path().join("gone.wav"),
            reference: dir.path().join("gone.wav"),
            snr_db: 0.0,
        });
        let manifest = dir.path().join("manifest.tsv");
        DatasetManifest { entries }.write(&manifest).unwrap();
        let mut cfg = config(&dir.path().join("ckpt"));
        cfg.manifest = manifest;
        cfg.max_epochs = 2;
        let (_, log) = train_model(&cfg, build_model(&tiny_topology(), 1).unwrap()).unwrap();
        assert_eq!(log.skipped_files, 1);
        assert_eq!(log.epochs.len(), 2);
        assert!(log.epochs.iter().all(|e| e.val_loss.is_some()));
    }
}
