use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adadelta::adadelta_step;
use super::layers::bce_loss;
use super::network::{Gradients, Network};
use super::{NetworkConfig, TrainConfig};
use crate::augment::{balance_training_set, random_translate, AugmentPolicy, Label, LabeledSample, Origin};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss in training mode.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_synthetic: usize,
    pub n_validation: usize,
}

pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub network: Network,
    pub history: History,
}

/// Stratified hold-out of real samples. Returns `(train, validation)` indices.
fn split_validation(dataset: &[LabeledSample], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut val = Vec::new();
    for label in [Label::Good, Label::Artefact] {
        let mut idx: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label && s.origin == Origin::Real)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(rng);
        let n = idx.len();
        let n_val = if frac > 0.0 && n >= 2 { ((frac * n as f64).round() as usize).clamp(1, n - 1) } else { 0 };
        val.extend_from_slice(&idx[..n_val]);
    }
    val.sort_unstable();
    let train = (0..dataset.len()).filter(|i| val.binary_search(i).is_err()).collect();
    (train, val)
}

/// Accuracy and mean loss with dropout disabled.
fn evaluate(net: &Network, samples: &[&LabeledSample]) -> Result<(f64, f64)> {
    let results: Vec<(bool, f64)> = samples
        .par_iter()
        .map(|s| {
            let probs = net.probabilities(&net.input_tensor(&s.seq)?)?;
            let predicted = if probs[1] >= 0.5 { Label::Artefact } else { Label::Good };
            Ok((predicted == s.label, bce_loss(&probs, s.label.index()).0))
        })
        .collect::<Result<_>>()?;
    let n = results.len().max(1) as f64;
    let correct = results.iter().filter(|r| r.0).count() as f64;
    Ok((correct / n, results.iter().map(|r| r.1).sum::<f64>() / n))
}

/// Trains a network with early stopping on validation accuracy.
///
/// A stratified fraction of the real samples is held out for validation,
/// the remainder is class-balanced with k-space corruption (when the policy
/// asks for it) and every mini-batch sample is randomly translated on the
/// fly. Per-sample randomness is pre-drawn in order, so the result is
/// independent of thread count.
pub fn train(
    dataset: &[LabeledSample],
    net_cfg: &NetworkConfig,
    tc: &TrainConfig,
    policy: &AugmentPolicy,
) -> Result<TrainOutcome> {
    net_cfg.validate()?;
    tc.validate()?;
    policy.validate()?;
    for label in [Label::Good, Label::Artefact] {
        if !dataset.iter().any(|s| s.label == label) {
            return Err(Error::EmptyClass(label.name()));
        }
    }
    let [t, h, w] = net_cfg.input_dims;
    if let Some(s) = dataset.iter().find(|s| s.seq.dims() != (t, h, w)) {
        return Err(Error::ShapeMismatch(format!("sample {:?} for network input {:?}", s.seq.dims(), net_cfg.input_dims)));
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    epoch_rng.set_stream(1);

    let (train_idx, val_idx) = split_validation(dataset, tc.validation_frac, &mut split_rng);
    let mut training: Vec<LabeledSample> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    if policy.balance {
        training = balance_training_set(training, policy)?;
    }
    let validation: Vec<&LabeledSample> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let monitor: Vec<&LabeledSample> =
        if validation.is_empty() { training.iter().filter(|s| s.origin == Origin::Real).collect() } else { validation.clone() };

    let mut net = Network::new(net_cfg.clone())?;
    let mut best = net.clone();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NAN,
        stopped_early: false,
        n_train: training.len(),
        n_synthetic: training.iter().filter(|s| s.origin != Origin::Real).count(),
        n_validation: validation.len(),
    };
    let mut since_improvement = 0;
    let mut best_val_loss = f64::INFINITY;
    let mut order: Vec<usize> = (0..training.len()).collect();

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut epoch_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| epoch_rng.next_u64()).collect();
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(&seeds)
                .map(|(&i, &seed)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let sample = &training[i];
                    let x = if policy.translate {
                        net.input_tensor(&random_translate(&sample.seq, policy, &mut rng))?
                    } else {
                        net.input_tensor(&sample.seq)?
                    };
                    let trace = net.forward(&x, Some((tc.dropout_p, &mut rng)))?;
                    let (loss, grad_logits) = bce_loss(&trace.probs, sample.label.index());
                    let (grads, _) = net.backward(&trace, &grad_logits)?;
                    Ok((loss, grads))
                })
                .collect::<Result<_>>()?;
            // fixed-order reduction keeps parallel and serial runs bit-identical
            let mut total = Gradients::zeros_like(&net.params);
            for (loss, g) in &per_sample {
                loss_sum += loss;
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            adadelta_step(&mut net.params, &total, tc)?;
        }

        let (val_accuracy, val_loss) = evaluate(&net, &monitor)?;
        history.epochs.push(EpochRecord { epoch, train_loss: loss_sum / training.len() as f64, val_accuracy, val_loss });

        let improved = if history.best_val_accuracy.is_nan() {
            true
        } else if history.best_val_accuracy == 0.0 {
            val_accuracy > 0.0
        } else {
            (val_accuracy - history.best_val_accuracy) / history.best_val_accuracy >= tc.min_rel_improvement
        };
        if improved {
            history.best_val_accuracy = val_accuracy;
            history.best_epoch = epoch;
            best_val_loss = val_loss;
            best = net.clone();
            since_improvement = 0;
        } else {
            // equal accuracy at lower loss replaces the snapshot without resetting patience
            if val_accuracy >= history.best_val_accuracy && val_loss < best_val_loss {
                history.best_val_accuracy = val_accuracy;
                history.best_epoch = epoch;
                best_val_loss = val_loss;
                best = net.clone();
            }
            since_improvement += 1;
            if since_improvement >= tc.patience_epochs {
                history.stopped_early = true;
                break;
            }
        }
    }
    log::debug!(
        "trained {} epochs, best epoch {} (validation accuracy {:.3})",
        history.epochs.len(),
        history.best_epoch,
        history.best_val_accuracy
    );
    Ok(TrainOutcome { network: best, history })
}
