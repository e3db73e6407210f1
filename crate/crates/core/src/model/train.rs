use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use volcore::{add_l2_grad, bce_l2_loss, LayerParams, Tape, Volume};

use super::{init_params, lr_at_epoch, predict, CnnConfig, CnnParams, ProbabilityModel, TrainProgress};
use crate::metrics::auc_from_scores;
use crate::{Error, Group, Result, Sample3D};

/// Samples per gradient work unit. Chunks are reduced in order, so the
/// result does not depend on how many threads ran them.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean BCE plus the L2 penalty, before the update.
    pub loss: f64,
    /// Samples classified correctly at threshold 0.5, before the update.
    pub correct: usize,
    pub len: usize,
}

/// Fills the layers' gradient buffers with the gradient of the mean-BCE + L2
/// objective over `batch`.
pub fn compute_gradients(params: &mut CnnParams, batch: &[&Sample3D], lambda: f64) -> Result<BatchStats> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty training batch".into()));
    }
    params.zero_grad();
    let weight = 1.0 / batch.len() as f64;
    let model = &*params;
    let chunks: Vec<(Vec<LayerParams>, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut layers = model.layers.clone();
            let mut probs = Vec::with_capacity(chunk.len());
            for s in chunk {
                let mut tape = Tape::new();
                let x = tape.leaf(model.prepare_input(&s.voxels)?, false);
                let p = model.record(&mut tape, &layers, x)?;
                probs.push(tape.value(p)?.data()[0]);
                let loss = tape.bce(p, s.label.as_f64(), weight)?;
                tape.backward(loss, &mut layers)?;
            }
            Ok((layers, probs))
        })
        .collect::<Result<_>>()?;

    let mut probs = Vec::with_capacity(batch.len());
    for (layers, p) in chunks {
        for (dst, src) in params.layers.iter_mut().zip(&layers) {
            dst.grad_weights.axpy(1.0, &src.grad_weights)?;
            dst.grad_bias.axpy(1.0, &src.grad_bias)?;
        }
        probs.extend(p);
    }
    let labels: Vec<f64> = batch.iter().map(|s| s.label.as_f64()).collect();
    let loss = bce_l2_loss(&probs, &labels, &params.layers, lambda)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite batch loss {loss}; the learning rate may be too high or the data degenerate"
        )));
    }
    add_l2_grad(&mut params.layers, lambda);
    let correct = probs
        .iter()
        .zip(batch)
        .filter(|(&p, s)| (p >= 0.5) == (s.label == Group::Older))
        .count();
    Ok(BatchStats {
        loss,
        correct,
        len: batch.len(),
    })
}

/// Classic momentum: `v <- momentum * v + g`, then `theta <- theta - lr * v`.
pub fn momentum_update(
    layers: &mut [LayerParams],
    velocity: &mut [(Volume, Volume)],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if layers.len() != velocity.len() {
        return Err(Error::Invalid(format!(
            "{} layers but {} velocity buffers",
            layers.len(),
            velocity.len()
        )));
    }
    let step = |theta: &mut Volume, v: &mut Volume, g: &Volume| -> Result<()> {
        if !theta.same_shape(v) || !theta.same_shape(g) {
            return Err(Error::Invalid("velocity shape does not match its parameter".into()));
        }
        for ((t, v), g) in theta.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *v = momentum * *v + g;
            *t -= lr * *v;
        }
        Ok(())
    };
    for (l, (vw, vb)) in layers.iter_mut().zip(velocity) {
        step(&mut l.weights, vw, &l.grad_weights)?;
        step(&mut l.bias, vb, &l.grad_bias)?;
    }
    Ok(())
}

/// One SGD-with-momentum step on `batch`. Returns the pre-update statistics.
pub fn train_step(params: &mut CnnParams, batch: &[&Sample3D], lr: f64, config: &CnnConfig) -> Result<BatchStats> {
    let stats = compute_gradients(params, batch, config.lambda)?;
    let CnnParams {
        layers, velocity, ..
    } = params;
    momentum_update(layers, velocity, lr, config.momentum)?;
    if !params.is_finite() {
        return Err(Error::Numerical(format!(
            "parameters became non-finite at lr {lr} (pre-update loss {})",
            stats.loss
        )));
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Fraction of training samples classified correctly by the parameters in
    /// effect when their batch was processed.
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(StopReason::EarlyStop),
            2 => Some(StopReason::MaxEpochs),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            StopReason::EarlyStop => 1,
            StopReason::MaxEpochs => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_accuracy,val_loss,val_auc";

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.get(e))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.lr, r.train_loss, r.train_accuracy, r.val_loss, r.val_auc
            );
        }
        s
    }
}

/// Subject ids shared by the two sample sets are a hard error.
pub fn check_disjoint(train: &[Sample3D], val: &[Sample3D]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|s| s.subject_id.as_str()).collect();
    let shared: BTreeSet<&str> = val
        .iter()
        .map(|s| s.subject_id.as_str())
        .filter(|id| ids.contains(id))
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(format!(
            "subjects in both training and validation sets: {}",
            shared.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

/// Epoch-by-epoch training with early stopping on validation AUC.
///
/// An epoch counts as an improvement when its validation AUC is higher than
/// the best so far, or equal to it with a lower validation loss.
///
/// Each epoch visits the training samples in an order drawn from a ChaCha8
/// stream keyed by `(seed, epoch)`, so a resumed trainer replays exactly.
pub struct Trainer<'a> {
    config: CnnConfig,
    train: &'a [Sample3D],
    val: &'a [Sample3D],
    params: CnnParams,
    best: CnnParams,
    history: TrainHistory,
    epochs_since_best: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(config: CnnConfig, params: CnnParams, train: &'a [Sample3D], val: &'a [Sample3D]) -> Result<Self> {
        let best = params.clone();
        Self::resume(
            config,
            params,
            TrainProgress {
                best,
                history: TrainHistory::default(),
                epochs_since_best: 0,
            },
            train,
            val,
        )
    }

    pub fn resume(
        config: CnnConfig,
        params: CnnParams,
        progress: TrainProgress,
        train: &'a [Sample3D],
        val: &'a [Sample3D],
    ) -> Result<Self> {
        config.validate()?;
        params.check_matches(&config)?;
        progress.best.check_matches(&config)?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Invalid(format!(
                "need training and validation samples (got {} and {})",
                train.len(),
                val.len()
            )));
        }
        check_disjoint(train, val)?;
        Ok(Trainer {
            config,
            train,
            val,
            params,
            best: progress.best,
            history: progress.history,
            epochs_since_best: progress.epochs_since_best,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.history.stop_reason.is_some()
    }

    pub fn params(&self) -> &CnnParams {
        &self.params
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    /// Snapshot sufficient to continue training with [`Trainer::resume`].
    pub fn progress(&self) -> TrainProgress {
        TrainProgress {
            best: self.best.clone(),
            history: self.history.clone(),
            epochs_since_best: self.epochs_since_best,
        }
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::Invalid("training has already stopped".into()));
        }
        let epoch = self.history.epochs.len();
        let lr = lr_at_epoch(epoch, &self.config);
        let order = self.epoch_order(epoch);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for idx in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample3D> = idx.iter().map(|&i| &self.train[i]).collect();
            let stats = train_step(&mut self.params, &batch, lr, &self.config)?;
            loss_sum += stats.loss * stats.len as f64;
            correct += stats.correct;
        }
        let n = self.train.len() as f64;

        let probs = predict(&self.params, self.val)?;
        let labels: Vec<f64> = self.val.iter().map(|s| s.label.as_f64()).collect();
        let groups: Vec<Group> = self.val.iter().map(|s| s.label).collect();
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss: bce_l2_loss(&probs, &labels, &self.params.layers, self.config.lambda)?,
            val_auc: auc_from_scores(&probs, &groups)?,
        };
        self.history.epochs.push(record);

        let improved = self.history.best().is_none_or(|b| {
            record.val_auc > b.val_auc || (record.val_auc == b.val_auc && record.val_loss < b.val_loss)
        });
        if improved {
            self.history.best_epoch = Some(epoch);
            self.best = self.params.clone();
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        if self.epochs_since_best >= self.config.early_stop_patience {
            self.history.stop_reason = Some(StopReason::EarlyStop);
        } else if epoch + 1 >= self.config.max_epochs {
            self.history.stop_reason = Some(StopReason::MaxEpochs);
        }
        Ok(record)
    }

    /// Runs until a stop condition and returns the best-epoch parameters.
    pub fn run(mut self) -> Result<(CnnParams, TrainHistory)> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> (CnnParams, TrainHistory) {
        (self.best, self.history)
    }
}

/// Initializes from `config.seed` and trains to completion.
pub fn train(config: &CnnConfig, train: &[Sample3D], val: &[Sample3D]) -> Result<(CnnParams, TrainHistory)> {
    let params = init_params(config, config.seed)?;
    Trainer::new(config.clone(), params, train, val)?.run()
}
