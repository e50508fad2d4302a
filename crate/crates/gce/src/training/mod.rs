//! Training loops: self-supervised pretraining on corrupted graphs,
//! checkpointing, weight transfer, and supervised fine-tuning.
//!
//! Reproducibility runs on keyed random streams: epoch `e` shuffles
//! with `(seed, SHUFFLE, e)` and corrupts graph `i` with
//! `(seed, CORRUPT, e, i)`. No draw depends on visiting order, so a
//! run resumed from a checkpoint replays the exact stream of an
//! uninterrupted run.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, AdamError, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT_VERSION};

use crate::graph::{batch_graphs, Batch, FeatureCodec, Graph};
use crate::masking::{corrupt, reconstruction_loss, MaskSettings};
use crate::model::{is_encoder_param, GceConfig, GceModel};
use crate::rng::{self, tag};
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("graph {index} has no label")]
    MissingLabel { index: usize },
    #[error("graph {index} has label {label}, but the classifier has {classes} classes")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("model has no classifier head")]
    MissingHead,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("optimizer abort at epoch {epoch}, batch {batch}: {source}")]
    Optimizer {
        epoch: usize,
        batch: usize,
        #[source]
        source: AdamError,
    },
    #[error("transfer failed for tensor {tensor}: {reason}")]
    Transfer { tensor: String, reason: String },
}

/// Optimization hyperparameters. Defaults: lr 1e-2, 100 epochs,
/// batches of 32, loss weight lambda 2, Adam betas (0.9, 0.999) with
/// eps 1e-8, 10% node and edge masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask: MaskSettings,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl TrainConfig {
    pub fn defaults(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            seed,
            mask: MaskSettings::default(),
            lambda: 2.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be at least 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(TrainError::BadConfig(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Per-epoch fine-tuning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Which tensors a transfer copied and which stayed at their fresh
/// initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub loaded: Vec<String>,
    pub initialized: Vec<String>,
}

#[derive(Debug)]
pub struct FinetuneResult {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    /// Set when the training labels contain a single class.
    pub single_class_warning: bool,
}

fn collect_grads(
    tape: &Tape,
    loss: Var,
    params: &[(String, Var)],
) -> HashMap<String, Tensor> {
    let grads = tape.backward(loss);
    params
        .iter()
        .filter_map(|(name, var)| grads.get(*var).map(|g| (name.clone(), g.clone())))
        .collect()
}

fn pretrain_epochs(
    model: &mut GceModel,
    adam: &mut AdamState,
    dataset: &[Graph],
    codec: &FeatureCodec,
    tc: &TrainConfig,
    epochs: std::ops::RangeInclusive<usize>,
    history: &mut Vec<f64>,
) -> Result<(), TrainError> {
    for epoch in epochs {
        let mut shuffle_rng = rng::stream(tc.seed, &[tag::SHUFFLE, epoch as u64]);
        let order = rng::shuffled_indices(&mut shuffle_rng, dataset.len());
        let mut batch_losses = Vec::new();
        for (batch_no, chunk) in order.chunks(tc.batch_size).enumerate() {
            let pairs: Vec<_> = chunk
                .iter()
                .map(|&idx| {
                    let seed = rng::derive(tc.seed, &[tag::CORRUPT, epoch as u64, idx as u64]);
                    corrupt(&dataset[idx], codec, &tc.mask, seed)
                })
                .collect();
            let masked_batch = batch_graphs(pairs.iter().map(|p| &p.masked));
            let truth_batch = batch_graphs(pairs.iter().map(|p| &p.ground_truth));
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &masked_batch);
            let loss = reconstruction_loss(
                &mut tape,
                out.node_recon,
                out.edge_recon,
                truth_batch.merged(),
                tc.lambda,
            );
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            let grads = collect_grads(&tape, loss, &out.params);
            adam.step(&tc.adam(), &grads, |f| model.visit_params_mut(f))
                .map_err(|source| TrainError::Optimizer { epoch, batch: batch_no, source })?;
            batch_losses.push(loss_val);
        }
        history.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }
    Ok(())
}

/// Pretrains a fresh model by masked reconstruction. The loss history
/// holds one mean batch loss per epoch.
pub fn pretrain(
    dataset: &[Graph],
    codec: &FeatureCodec,
    gc: &GceConfig,
    tc: &TrainConfig,
) -> Result<Checkpoint, TrainError> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model =
        GceModel::new(gc.clone(), tc.seed).map_err(|e| TrainError::BadConfig(e.to_string()))?;
    let mut adam = AdamState::new();
    let mut history = Vec::new();
    pretrain_epochs(&mut model, &mut adam, dataset, codec, tc, 1..=tc.epochs, &mut history)?;
    Ok(Checkpoint::from_model(&model, codec, tc.epochs, history, vec![], adam))
}

/// Continues pretraining from a checkpoint, through epoch `tc.epochs`.
/// With stream-keyed shuffling and corruption this reproduces an
/// uninterrupted run exactly.
pub fn pretrain_resume(
    ckpt: &Checkpoint,
    dataset: &[Graph],
    codec: &FeatureCodec,
    tc: &TrainConfig,
) -> Result<Checkpoint, TrainError> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if ckpt.codec != *codec {
        return Err(TrainError::BadConfig("checkpoint codec differs from dataset codec".into()));
    }
    if ckpt.epoch >= tc.epochs {
        return Err(TrainError::BadConfig(format!(
            "checkpoint already covers epoch {}, nothing to do up to {}",
            ckpt.epoch, tc.epochs
        )));
    }
    let mut model = ckpt.instantiate()?;
    let mut adam = ckpt.adam.clone();
    let mut history = ckpt.loss_history.clone();
    pretrain_epochs(
        &mut model,
        &mut adam,
        dataset,
        codec,
        tc,
        (ckpt.epoch + 1)..=tc.epochs,
        &mut history,
    )?;
    Ok(Checkpoint::from_model(&model, codec, tc.epochs, history, vec![], adam))
}

/// Builds a classifier from a pretrained checkpoint: encoder-path
/// tensors are copied bitwise, everything else (decoder, output
/// projections, the fresh head) keeps its seeded initialization.
pub fn transfer_weights(
    ckpt: &Checkpoint,
    classifier_config: &GceConfig,
    num_classes: usize,
    seed: u64,
) -> Result<(GceModel, TransferReport), TrainError> {
    let mut model = GceModel::new(classifier_config.clone(), seed)
        .map_err(|e| TrainError::BadConfig(e.to_string()))?;
    model.attach_head(num_classes, seed);
    let mut report = TransferReport { loaded: vec![], initialized: vec![] };
    let mut failure = None;
    model.visit_params_mut(&mut |name, t| {
        if failure.is_some() {
            return;
        }
        if !is_encoder_param(&name) {
            report.initialized.push(name);
            return;
        }
        match ckpt.params.get(&name) {
            None => {
                failure = Some(TrainError::Transfer {
                    tensor: name,
                    reason: "missing from checkpoint".into(),
                })
            }
            Some(src) if src.rows() != t.rows() || src.cols() != t.cols() => {
                failure = Some(TrainError::Transfer {
                    tensor: name,
                    reason: format!(
                        "checkpoint shape {}x{}, classifier wants {}x{}",
                        src.rows(),
                        src.cols(),
                        t.rows(),
                        t.cols()
                    ),
                });
            }
            Some(src) => {
                t.data_mut().copy_from_slice(src.data());
                report.loaded.push(name);
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((model, report)),
    }
}

/// Numerically stable softmax cross-entropy, averaged over rows. The
/// row maximum is detached, which leaves the exact softmax gradient.
fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Var {
    let (g, c) = (tape.value(logits).rows(), tape.value(logits).cols());
    assert_eq!(g, labels.len(), "one label per logit row");
    let maxes: Vec<f64> = (0..g)
        .map(|i| tape.value(logits).row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let maxes = tape.constant(Tensor::matrix(g, 1, maxes));
    let max_rep = tape.repeat_col(maxes, c);
    let shifted = tape.sub(logits, max_rep);
    let ex = tape.exp(shifted);
    let sums = tape.row_sums(ex);
    let ln = tape.ln(sums);
    let lse = tape.add(ln, maxes);
    let mut mask = vec![0.0; g * c];
    for (i, &l) in labels.iter().enumerate() {
        mask[i * c + l] = 1.0;
    }
    let mask = tape.constant(Tensor::matrix(g, c, mask));
    let picked_full = tape.mul(logits, mask);
    let picked = tape.row_sums(picked_full);
    let per_row = tape.sub(lse, picked);
    let total = tape.sum_all(per_row);
    tape.scale(total, 1.0 / g as f64)
}

fn labels_of(data: &[Graph], classes: usize) -> Result<Vec<usize>, TrainError> {
    data.iter()
        .enumerate()
        .map(|(index, g)| match g.label() {
            None => Err(TrainError::MissingLabel { index }),
            Some(label) if label >= classes => {
                Err(TrainError::LabelOutOfRange { index, label, classes })
            }
            Some(label) => Ok(label),
        })
        .collect()
}

/// Fraction of graphs whose argmax logit matches the label.
pub fn classification_accuracy(
    model: &GceModel,
    data: &[Graph],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let classes = model.num_classes().ok_or(TrainError::MissingHead)?;
    let labels = labels_of(data, classes)?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (chunk, chunk_labels) in
        data.chunks(batch_size).zip(labels.chunks(batch_size))
    {
        let batch: Batch = batch_graphs(chunk.iter());
        let mut tape = Tape::new();
        let out = model.classifier_forward(&mut tape, &batch).map_err(|_| TrainError::MissingHead)?;
        let logits = tape.value(out.logits);
        for (i, &want) in chunk_labels.iter().enumerate() {
            if logits.row_argmax(i) == want {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Supervised fine-tuning with softmax cross-entropy. Every epoch
/// records mean batch loss, train accuracy, and validation accuracy
/// when a validation set is given.
pub fn train_classifier(
    model: &mut GceModel,
    train: &[Graph],
    val: &[Graph],
    codec: &FeatureCodec,
    tc: &TrainConfig,
) -> Result<FinetuneResult, TrainError> {
    tc.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let classes = model.num_classes().ok_or(TrainError::MissingHead)?;
    let train_labels = labels_of(train, classes)?;
    labels_of(val, classes)?;
    let single_class_warning =
        train_labels.iter().all(|&l| l == train_labels[0]);

    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut losses = Vec::new();
    for epoch in 1..=tc.epochs {
        let mut shuffle_rng = rng::stream(tc.seed, &[tag::SHUFFLE, epoch as u64]);
        let order = rng::shuffled_indices(&mut shuffle_rng, train.len());
        let mut batch_losses = Vec::new();
        for (batch_no, chunk) in order.chunks(tc.batch_size).enumerate() {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let batch = batch_graphs(graphs);
            let mut tape = Tape::new();
            let out = model
                .classifier_forward(&mut tape, &batch)
                .map_err(|_| TrainError::MissingHead)?;
            let loss = cross_entropy(&mut tape, out.logits, &labels);
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            let grads = collect_grads(&tape, loss, &out.params);
            adam.step(&tc.adam(), &grads, |f| model.visit_params_mut(f))
                .map_err(|source| TrainError::Optimizer { epoch, batch: batch_no, source })?;
            batch_losses.push(loss_val);
        }
        let loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let train_accuracy = classification_accuracy(model, train, tc.batch_size)?;
        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(classification_accuracy(model, val, tc.batch_size)?)
        };
        losses.push(loss);
        history.push(EpochStats { epoch, loss, train_accuracy, val_accuracy });
    }
    let checkpoint =
        Checkpoint::from_model(model, codec, tc.epochs, losses, history.clone(), adam);
    Ok(FinetuneResult { checkpoint, history, single_class_warning })
}

/// `epoch,loss` rows for a pretraining history.
pub fn pretrain_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    s
}

/// `epoch,loss,train_acc,val_acc` rows; the last column stays empty
/// without a validation set.
pub fn finetune_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,train_acc,val_acc\n");
    for e in history {
        let val = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.train_accuracy, val));
    }
    s
}

/// Classifier setups used in the property-prediction comparisons,
/// recorded for reference. They describe plain convolution stacks with
/// dropout and a linear readout, so they do not map onto [`GceConfig`]
/// directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePreset {
    pub name: &'static str,
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub dropout: f64,
}

pub const REFERENCE_PRESETS: [ReferencePreset; 5] = [
    ReferencePreset { name: "muv", num_layers: 3, hidden_channels: 300, dropout: 0.185 },
    ReferencePreset { name: "tox21", num_layers: 8, hidden_channels: 256, dropout: 0.5 },
    ReferencePreset { name: "toxcast", num_layers: 3, hidden_channels: 100, dropout: 0.5 },
    ReferencePreset { name: "hiv", num_layers: 8, hidden_channels: 256, dropout: 0.5 },
    ReferencePreset { name: "pcba", num_layers: 3, hidden_channels: 300, dropout: 0.185 },
];

pub fn reference_preset(name: &str) -> Option<&'static ReferencePreset> {
    REFERENCE_PRESETS.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_dataset, SynthKind};

    fn toy_dataset() -> (Vec<Graph>, FeatureCodec) {
        let codec = FeatureCodec::molecule();
        let graphs = vec![
            Graph::from_categories(&codec, &[0, 0, 2], &[(0, 1, 0), (1, 2, 0)], None).unwrap(),
            Graph::from_categories(&codec, &[0, 1, 0, 2], &[(0, 1, 0), (1, 2, 1), (2, 3, 0)], None)
                .unwrap(),
            Graph::from_categories(&codec, &[0, 0, 0, 0], &[(0, 1, 0), (1, 2, 0), (2, 3, 2)], None)
                .unwrap(),
        ];
        (graphs, codec)
    }

    fn tiny_model_config() -> GceConfig {
        GceConfig {
            num_layers: 2,
            hidden_channels: 6,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: 8,
            edge_in_dim: 5,
        }
    }

    fn tiny_train_config(epochs: usize, seed: u64) -> TrainConfig {
        let mut tc = TrainConfig::defaults(seed);
        tc.epochs = epochs;
        tc.batch_size = 2;
        tc
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let tc = TrainConfig::defaults(0);
        assert_eq!(tc.learning_rate, 1e-2);
        assert_eq!(tc.epochs, 100);
        assert_eq!(tc.batch_size, 32);
        assert_eq!(tc.lambda, 2.0);
        assert_eq!((tc.beta1, tc.beta2), (0.9, 0.999));
        assert_eq!(tc.adam_eps, 1e-8);
        assert_eq!(tc.mask.node_rate, 0.1);
        assert_eq!(tc.mask.edge_rate, 0.1);
        assert_eq!(tc.mask.pseudo_per_node, 5);
        assert!(tc.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut tc = TrainConfig::defaults(0);
        tc.epochs = 0;
        assert!(tc.validate().is_err());
        let mut tc = TrainConfig::defaults(0);
        tc.learning_rate = 0.0;
        assert!(tc.validate().is_err());
        let mut tc = TrainConfig::defaults(0);
        tc.batch_size = 0;
        assert!(tc.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let tc = tiny_train_config(1, 0);
        let err = pretrain(&[], &FeatureCodec::molecule(), &tiny_model_config(), &tc).unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }

    #[test]
    fn one_epoch_one_graph_is_one_step() {
        let (graphs, codec) = toy_dataset();
        let tc = tiny_train_config(1, 3);
        let ckpt = pretrain(&graphs[..1], &codec, &tiny_model_config(), &tc).unwrap();
        assert_eq!(ckpt.loss_history.len(), 1);
        assert_eq!(ckpt.adam.step_count(), 1);
        assert_eq!(ckpt.epoch, 1);
    }

    #[test]
    fn pretraining_is_deterministic() {
        let (graphs, codec) = toy_dataset();
        let tc = tiny_train_config(3, 7);
        let a = pretrain(&graphs, &codec, &tiny_model_config(), &tc).unwrap();
        let b = pretrain(&graphs, &codec, &tiny_model_config(), &tc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn a_small_step_descends_on_a_frozen_batch() {
        let (graphs, codec) = toy_dataset();
        let mut model = GceModel::new(tiny_model_config(), 5).unwrap();
        let pair = corrupt(&graphs[0], &codec, &MaskSettings::default(), 11);
        let masked = batch_graphs([&pair.masked]);
        let truth = batch_graphs([&pair.ground_truth]);
        let eval_and_grads = |model: &GceModel| {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &masked);
            let loss = reconstruction_loss(
                &mut tape,
                out.node_recon,
                out.edge_recon,
                truth.merged(),
                2.0,
            );
            let v = tape.value(loss).item();
            (v, collect_grads(&tape, loss, &out.params))
        };
        let (before, grads) = eval_and_grads(&model);
        let mut adam = AdamState::new();
        let cfg = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
        adam.step(&cfg, &grads, |f| model.visit_params_mut(f)).unwrap();
        let (after, _) = eval_and_grads(&model);
        assert!(after < before, "loss went {before} -> {after}");
    }

    #[test]
    fn resume_equals_uninterrupted_run() {
        let (graphs, codec) = toy_dataset();
        let gc = tiny_model_config();
        let full = pretrain(&graphs, &codec, &gc, &tiny_train_config(4, 9)).unwrap();

        let half = pretrain(&graphs, &codec, &gc, &tiny_train_config(2, 9)).unwrap();
        let bytes = half.to_bytes().unwrap();
        let reloaded = Checkpoint::from_bytes(&bytes).unwrap();
        let resumed = pretrain_resume(&reloaded, &graphs, &codec, &tiny_train_config(4, 9)).unwrap();

        assert_eq!(full, resumed);
    }

    #[test]
    fn resume_past_the_end_is_an_error() {
        let (graphs, codec) = toy_dataset();
        let ckpt = pretrain(&graphs, &codec, &tiny_model_config(), &tiny_train_config(2, 9)).unwrap();
        let err = pretrain_resume(&ckpt, &graphs, &codec, &tiny_train_config(2, 9)).unwrap_err();
        assert!(matches!(err, TrainError::BadConfig(_)));
    }

    #[test]
    fn transfer_copies_encoder_tensors_bitwise() {
        let (graphs, codec) = toy_dataset();
        let gc = tiny_model_config();
        let ckpt = pretrain(&graphs, &codec, &gc, &tiny_train_config(2, 13)).unwrap();
        let (model, report) = transfer_weights(&ckpt, &gc, 2, 99).unwrap();
        model.visit_params(&mut |name, t| {
            if is_encoder_param(&name) {
                assert_eq!(t.data(), ckpt.params[&name].data(), "{name} copied bitwise");
                assert!(report.loaded.contains(&name));
            } else {
                assert!(report.initialized.contains(&name));
            }
        });
        assert!(report.initialized.iter().any(|n| n.starts_with("head.")));
        // The fresh head cannot equal any checkpoint tensor.
        let head_w1 = {
            let mut found = None;
            model.visit_params(&mut |name, t| {
                if name == "head.w1" {
                    found = Some(t.clone());
                }
            });
            found.unwrap()
        };
        assert!(ckpt.params.values().all(|t| t.data() != head_w1.data()));
    }

    #[test]
    fn transfer_into_a_wider_model_fails_naming_the_tensor() {
        let (graphs, codec) = toy_dataset();
        let gc = tiny_model_config();
        let ckpt = pretrain(&graphs, &codec, &gc, &tiny_train_config(1, 13)).unwrap();
        let mut wider = gc.clone();
        wider.hidden_channels = 12;
        let err = transfer_weights(&ckpt, &wider, 2, 99).unwrap_err();
        match err {
            TrainError::Transfer { tensor, .. } => assert!(!tensor.is_empty()),
            other => panic!("expected Transfer, got {other}"),
        }
    }

    #[test]
    fn classifier_learns_cycles_vs_paths() {
        let (graphs, codec) = synth_dataset(SynthKind::CyclesVsPaths, 24, (4, 7), 17);
        let gc = GceConfig {
            num_layers: 2,
            hidden_channels: 8,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: codec.num_node_categories(),
            edge_in_dim: codec.num_edge_categories(),
        };
        let mut model = GceModel::new(gc, 23).unwrap();
        model.attach_head(2, 24);
        let mut tc = tiny_train_config(40, 29);
        tc.batch_size = 8;
        let result = train_classifier(&mut model, &graphs, &[], &codec, &tc).unwrap();
        let last = result.history.last().unwrap();
        assert!(
            last.train_accuracy >= 0.9,
            "train accuracy only reached {}",
            last.train_accuracy
        );
        assert!(!result.single_class_warning);
        assert_eq!(result.history.len(), 40);
        assert!(last.val_accuracy.is_none());
    }

    #[test]
    fn finetuning_is_deterministic() {
        let (graphs, codec) = synth_dataset(SynthKind::CyclesVsPaths, 10, (4, 6), 31);
        let gc = GceConfig {
            num_layers: 2,
            hidden_channels: 6,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: codec.num_node_categories(),
            edge_in_dim: codec.num_edge_categories(),
        };
        let run = || {
            let mut model = GceModel::new(gc.clone(), 37).unwrap();
            model.attach_head(2, 38);
            let tc = tiny_train_config(3, 41);
            train_classifier(&mut model, &graphs[..8], &graphs[8..], &codec, &tc)
                .unwrap()
                .history
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|e| e.val_accuracy.is_some()));
    }

    #[test]
    fn single_class_data_is_degenerate_but_works() {
        let (graphs, codec) = synth_dataset(SynthKind::CyclesVsPaths, 8, (4, 6), 43);
        let only_zero: Vec<Graph> =
            graphs.into_iter().map(|g| g.with_label(Some(0))).collect();
        let gc = GceConfig {
            num_layers: 2,
            hidden_channels: 6,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: codec.num_node_categories(),
            edge_in_dim: codec.num_edge_categories(),
        };
        let mut model = GceModel::new(gc, 47).unwrap();
        model.attach_head(2, 48);
        let tc = tiny_train_config(10, 49);
        let result = train_classifier(&mut model, &only_zero, &[], &codec, &tc).unwrap();
        assert!(result.single_class_warning);
        assert_eq!(result.history.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn label_errors_are_reported() {
        let (graphs, codec) = synth_dataset(SynthKind::CyclesVsPaths, 4, (4, 5), 51);
        let gc = GceConfig {
            num_layers: 2,
            hidden_channels: 4,
            pooling_rate: 1.0,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: codec.num_node_categories(),
            edge_in_dim: codec.num_edge_categories(),
        };
        let tc = tiny_train_config(1, 53);

        let mut model = GceModel::new(gc.clone(), 55).unwrap();
        let err = train_classifier(&mut model, &graphs, &[], &codec, &tc).unwrap_err();
        assert!(matches!(err, TrainError::MissingHead));

        model.attach_head(2, 56);
        let unlabeled: Vec<Graph> = graphs.iter().map(|g| g.clone().with_label(None)).collect();
        let err = train_classifier(&mut model, &unlabeled, &[], &codec, &tc).unwrap_err();
        assert!(matches!(err, TrainError::MissingLabel { index: 0 }));

        let wild: Vec<Graph> = graphs.iter().map(|g| g.clone().with_label(Some(5))).collect();
        let err = train_classifier(&mut model, &wild, &[], &codec, &tc).unwrap_err();
        assert!(matches!(err, TrainError::LabelOutOfRange { label: 5, classes: 2, .. }));
    }

    #[test]
    fn csv_formats_are_stable() {
        assert_eq!(pretrain_csv(&[0.5, 0.25]), "epoch,loss\n1,0.5\n2,0.25\n");
        let history = vec![
            EpochStats { epoch: 1, loss: 0.7, train_accuracy: 0.5, val_accuracy: None },
            EpochStats { epoch: 2, loss: 0.6, train_accuracy: 0.75, val_accuracy: Some(0.5) },
        ];
        assert_eq!(
            finetune_csv(&history),
            "epoch,loss,train_acc,val_acc\n1,0.7,0.5,\n2,0.6,0.75,0.5\n"
        );
    }

    #[test]
    fn presets_are_recorded() {
        assert_eq!(REFERENCE_PRESETS.len(), 5);
        let tox21 = reference_preset("tox21").unwrap();
        assert_eq!((tox21.num_layers, tox21.hidden_channels), (8, 256));
        assert_eq!(tox21.dropout, 0.5);
        assert!(reference_preset("nope").is_none());
    }

    #[test]
    fn cross_entropy_matches_hand_computation() {
        // Two rows, two classes, labels [0, 1].
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::matrix(2, 2, vec![2.0, 0.0, 1.0, 3.0]));
        let loss = cross_entropy(&mut tape, logits, &[0, 1]);
        let want = ((1.0 + (-2.0_f64).exp()).ln() + (1.0 + (-2.0_f64).exp()).ln()) / 2.0;
        assert!((tape.value(loss).item() - want).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let logits = Tensor::matrix(2, 3, vec![0.3, -0.2, 0.9, 1.4, 0.1, -0.6]).with_grad();
        let worst = crate::tensor::finite_difference_check(&[logits], 1e-6, |tape, vars| {
            cross_entropy(tape, vars[0], &[2, 0])
        });
        assert!(worst < 1e-7, "worst relative gradient error {worst}");
    }
}
