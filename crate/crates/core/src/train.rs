//! Alternating reconstruction / classification training.
//!
//! Each batch gets two optimizer steps: the autoencoder is updated on the
//! reconstruction loss, then the classifier head (and, in [`UpdateMode::Joint`],
//! the encoder) on the classification loss. The two steps use separate Adam
//! instances, each with its own step counter and moment buffers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{categorical_crossentropy, mse_loss};
use crate::metrics::MetricsReport;
use crate::model::CsaeModel;
use crate::nn::{softmax_rows, ParamGrads};
use crate::optim::{adam_step, adam_update, AdamMoments, AdamState, LrSchedule};
use crate::tensor::Tensor;

/// Batch size used for inference-only passes.
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Classification step updates the head and the encoder.
    #[default]
    Joint,
    /// Classification step updates the head only.
    HeadOnly,
}

impl fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateMode::Joint => "joint",
            UpdateMode::HeadOnly => "head_only",
        })
    }
}

impl FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(UpdateMode::Joint),
            "head_only" => Ok(UpdateMode::HeadOnly),
            other => Err(Error::invalid(format!(
                "unknown update mode {other:?} (expected joint or head_only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Must equal the model's latent width.
    pub lambda: usize,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
    pub update_mode: UpdateMode,
    pub val_fraction: f64,
}

impl TrainConfig {
    pub fn new(lambda: usize) -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            lambda,
            seed: 0,
            lr_schedule: LrSchedule::default(),
            update_mode: UpdateMode::Joint,
            val_fraction: 0.10,
        }
    }

    fn validate(&self, model: &CsaeModel) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.lambda != model.lambda() {
            return Err(Error::invalid(format!(
                "config lambda {} does not match model lambda {}",
                self.lambda,
                model.lambda()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Zero-based.
    pub epoch: usize,
    /// Sample-weighted means over the epoch's batches.
    pub recon_loss: f64,
    pub cls_loss: f64,
    /// Accuracy of the classification step's own predictions during the epoch.
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Earliest epoch with the highest validation accuracy.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub wall_time: Duration,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,recon_loss,cls_loss,train_acc,val_acc,lr";

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch, e.recon_loss, e.cls_loss, e.train_acc, e.val_acc, e.lr
            )?;
        }
        Ok(())
    }
}

/// Holds the optimizer state for one training run over a borrowed model.
pub struct Trainer<'a> {
    model: &'a mut CsaeModel,
    mode: UpdateMode,
    ae_state: AdamState,
    cls_state: AdamState,
    /// Encoder moments for the classification optimizer (joint mode only).
    enc_cls_moments: Vec<Option<AdamMoments>>,
}

fn apply_grads<'p>(
    params: impl Iterator<Item = Option<&'p mut crate::nn::LayerParams>>,
    grads: Vec<Option<ParamGrads>>,
    state: &AdamState,
) -> Result<()> {
    for (p, g) in params.zip(grads) {
        if let (Some(p), Some(g)) = (p, g) {
            adam_step(p, &g, state)?;
        }
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut CsaeModel, mode: UpdateMode) -> Self {
        let enc_cls_moments = model
            .encoder
            .layers
            .iter()
            .map(|l| {
                l.params()
                    .map(|p| AdamMoments::zeros_for(&p.weights, p.bias.as_ref()))
            })
            .collect();
        Trainer {
            model,
            mode,
            ae_state: AdamState::new(LrSchedule::default().base),
            cls_state: AdamState::new(LrSchedule::default().base),
            enc_cls_moments,
        }
    }

    pub fn model(&self) -> &CsaeModel {
        self.model
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.ae_state.alpha = lr;
        self.cls_state.alpha = lr;
    }

    /// One Adam step of encoder + decoder on the reconstruction loss.
    pub fn reconstruction_step(&mut self, x: &Tensor) -> Result<f32> {
        self.model.check_images(x)?;
        let enc_trace = self.model.encoder.forward_trace(x.clone())?;
        let dec_trace = self
            .model
            .decoder
            .forward_trace(enc_trace.output().clone())?;
        let (loss, grad) = mse_loss(dec_trace.output(), x)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("reconstruction loss {loss}")));
        }
        let (gz, dec_grads) = self.model.decoder.backward(&dec_trace, grad, true)?;
        let gz = gz.expect("input gradient requested");
        let (_, enc_grads) = self.model.encoder.backward(&enc_trace, gz, false)?;

        self.ae_state.begin_step();
        let state = &self.ae_state;
        apply_grads(
            self.model.encoder.layers.iter_mut().map(|l| l.params_mut()),
            enc_grads,
            state,
        )?;
        apply_grads(
            self.model.decoder.layers.iter_mut().map(|l| l.params_mut()),
            dec_grads,
            state,
        )?;
        Ok(loss)
    }

    /// One Adam step on the classification loss. Returns the loss and the
    /// number of correct predictions in the batch (made before the update).
    pub fn classification_step(&mut self, x: &Tensor, labels: &[usize]) -> Result<(f32, usize)> {
        self.model.check_images(x)?;
        let joint = self.mode == UpdateMode::Joint;
        let enc_trace = if joint {
            Some(self.model.encoder.forward_trace(x.clone())?)
        } else {
            None
        };
        let z = match &enc_trace {
            Some(t) => t.output().clone(),
            None => self.model.encoder.forward(x)?,
        };
        let cls_trace = self.model.classifier.forward_trace(z)?;
        let probs = softmax_rows(cls_trace.output())?;
        let (loss, grad) = categorical_crossentropy(&probs, labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("classification loss {loss}")));
        }
        let correct = probs
            .argmax_rows()?
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        let (gz, cls_grads) = self.model.classifier.backward(&cls_trace, grad, joint)?;

        self.cls_state.begin_step();
        let state = &self.cls_state;
        apply_grads(
            self.model
                .classifier
                .layers
                .iter_mut()
                .map(|l| l.params_mut()),
            cls_grads,
            state,
        )?;
        if let (Some(trace), Some(gz)) = (enc_trace, gz) {
            let (_, enc_grads) = self.model.encoder.backward(&trace, gz, false)?;
            let layers = self.model.encoder.layers.iter_mut();
            for ((layer, moments), g) in layers.zip(&mut self.enc_cls_moments).zip(enc_grads) {
                if let (Some(p), Some(m), Some(g)) = (layer.params_mut(), moments.as_mut(), g) {
                    adam_update(p, m, &g, state)?;
                }
            }
        }
        Ok((loss, correct))
    }
}

/// Index batches over a fresh Fisher-Yates permutation of `0..n`; the final
/// batch may be partial.
pub fn batch_indices<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Shuffled `(images, labels)` batches for one epoch.
pub fn batch_iterator<'d, R: Rng + ?Sized>(
    dataset: &'d LabeledDataset,
    batch_size: usize,
    rng: &mut R,
) -> impl Iterator<Item = Result<(Tensor, Vec<usize>)>> + 'd {
    batch_indices(dataset.len(), batch_size, rng)
        .into_iter()
        .map(move |idx| {
            let x = dataset.images.gather(&idx)?;
            let y = idx.iter().map(|&i| dataset.labels[i]).collect();
            Ok((x, y))
        })
}

fn annotate(e: Error, epoch: usize, batch: usize, step: &str) -> Error {
    match e {
        Error::NonFinite(msg) => {
            Error::NonFinite(format!("epoch {epoch}, batch {batch}, {step} step: {msg}"))
        }
        other => other,
    }
}

/// Trains on `dataset` after holding out a validation split, and returns the
/// weights from the epoch with the best validation accuracy.
pub fn train(
    model: &CsaeModel,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(CsaeModel, TrainReport)> {
    train_with_progress(model, dataset, config, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    model: &CsaeModel,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(CsaeModel, TrainReport)> {
    config.validate(model)?;
    if dataset.num_classes != model.num_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model has {}",
            dataset.num_classes,
            model.num_classes()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_val = (dataset.len() as f64 * config.val_fraction).floor() as usize;
    if n_val == 0 || n_val >= dataset.len() {
        return Err(Error::EmptyDataset(format!(
            "cannot hold out {} of {} samples for validation",
            config.val_fraction,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let val_idx = order.split_off(dataset.len() - n_val);
    let train_set = dataset.gather(&order)?;
    let val_set = dataset.gather(&val_idx)?;

    let mut working = model.clone();
    let mut best: Option<(usize, f64, CsaeModel)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    {
        let mut trainer = Trainer::new(&mut working, config.update_mode);
        for epoch in 0..config.epochs {
            let lr = config.lr_schedule.lr_at_epoch(epoch);
            trainer.set_learning_rate(lr);
            let (mut recon_sum, mut cls_sum, mut correct) = (0.0f64, 0.0f64, 0usize);
            for (b, batch) in batch_iterator(&train_set, config.batch_size, &mut rng).enumerate() {
                let (x, y) = batch?;
                let recon = trainer
                    .reconstruction_step(&x)
                    .map_err(|e| annotate(e, epoch, b, "reconstruction"))?;
                let (ce, hits) = trainer
                    .classification_step(&x, &y)
                    .map_err(|e| annotate(e, epoch, b, "classification"))?;
                recon_sum += recon as f64 * y.len() as f64;
                cls_sum += ce as f64 * y.len() as f64;
                correct += hits;
            }
            let n = train_set.len() as f64;
            let predictions = trainer.model().predict(&val_set.images, EVAL_BATCH)?;
            let val_acc = crate::metrics::accuracy(&val_set.labels, &predictions)?;
            let stats = EpochStats {
                epoch,
                recon_loss: recon_sum / n,
                cls_loss: cls_sum / n,
                train_acc: correct as f64 / n,
                val_acc,
                lr,
            };
            if best.as_ref().is_none_or(|(_, acc, _)| val_acc > *acc) {
                best = Some((epoch, val_acc, trainer.model().clone()));
            }
            progress(&stats);
            epochs.push(stats);
        }
    }
    let (best_epoch, best_val_acc, best_model) = best.unwrap_or((0, 0.0, working));
    Ok((
        best_model,
        TrainReport {
            epochs,
            best_epoch,
            best_val_acc,
            wall_time: start.elapsed(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub predictions: Vec<usize>,
    pub recon_loss: f64,
    pub cls_loss: f64,
}

/// Metrics and sample-weighted mean losses; the model is not modified.
pub fn evaluate(model: &CsaeModel, dataset: &LabeledDataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    model.check_images(&dataset.images)?;
    let n = dataset.len();
    let (mut recon_sum, mut cls_sum) = (0.0f64, 0.0f64);
    let mut predictions = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let x = dataset.images.slice_batch(start, end)?;
        let y = &dataset.labels[start..end];
        let z = model.encode(&x)?;
        let (recon, _) = mse_loss(&model.decode(&z)?, &x)?;
        let probs = model.classify_latent(&z)?;
        let (ce, _) = categorical_crossentropy(&probs, y)?;
        recon_sum += recon as f64 * y.len() as f64;
        cls_sum += ce as f64 * y.len() as f64;
        predictions.extend(probs.argmax_rows()?);
        start = end;
    }
    Ok(Evaluation {
        metrics: MetricsReport::compute(&dataset.labels, &predictions)?,
        predictions,
        recon_loss: recon_sum / n as f64,
        cls_loss: cls_sum / n as f64,
    })
}
