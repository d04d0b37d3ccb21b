//! Full-graph transductive training, evaluation and multi-seed experiments.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_split_with, NodeSplit, SplitError};
use crate::graph::{shortest_path_lengths, Graph};
use crate::model::{
    build_attention_structure, forward, forward_on_tape, init_params, AttentionRecord, AttentionStructure,
    AttentionVariant, Checkpoint, DropoutMasks, ModelConfig, ModelError,
};
use crate::rng;
use crate::tensor::{Adam, AdamConfig, Scalar, Tape, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub stratified_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            stratified_split: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience > self.max_epochs {
            return bad("patience may not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || !(self.eps > 0.0) {
            return bad("weight_decay must be non-negative and eps positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("evaluation over an empty id set")]
    EmptyIds,
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("saving run output failed: {0}")]
    Output(String),
    #[error("seed {seed} failed: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<TrainError>,
    },
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub train_accuracy: f64,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_curve: Vec<f64>,
    pub loss_curve: Vec<f64>,
    pub split: NodeSplit,
    /// Attention of the kept parameters on the full graph.
    pub record: AttentionRecord,
    pub checkpoint: Checkpoint,
}

/// Summary fields of a [`RunResult`], for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub train_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_curve: Vec<f64>,
    pub loss_curve: Vec<f64>,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.seed,
            test_accuracy: self.test_accuracy,
            best_val_accuracy: self.best_val_accuracy,
            train_accuracy: self.train_accuracy,
            best_epoch: self.best_epoch,
            epochs_run: self.epochs_run,
            val_curve: self.val_curve.clone(),
            loss_curve: self.loss_curve.clone(),
        }
    }
}

/// Fraction of `ids` whose row argmax equals the label. Ties go to the
/// lowest class id.
pub fn evaluate<T: Scalar>(logits: &Array2<T>, labels: &[u32], ids: &[usize]) -> Result<f64, TrainError> {
    if ids.is_empty() {
        return Err(TrainError::EmptyIds);
    }
    let hits = ids.iter().filter(|&&i| argmax(logits.row(i).iter().copied()) == labels[i] as usize).count();
    Ok(hits as f64 / ids.len() as f64)
}

fn argmax<T: Scalar>(row: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (c, v) in row.enumerate() {
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// Builds the attention structure for `cfg` on `g`, computing hop distances
/// only when the variant needs them.
pub fn prepare_structure<T: Scalar>(cfg: &ModelConfig, g: &Graph) -> Result<AttentionStructure<T>, ModelError> {
    match cfg.variant {
        AttentionVariant::DLB => build_attention_structure(cfg, g, Some(&shortest_path_lengths(g))),
        AttentionVariant::DL => Ok(AttentionStructure::dense_unbiased(g.n())),
        _ => build_attention_structure(cfg, g, None),
    }
}

pub fn train(model_cfg: &ModelConfig, train_cfg: &TrainConfig, g: &Graph, split: &NodeSplit) -> Result<RunResult, TrainError> {
    let structure = prepare_structure::<f32>(model_cfg, g)?;
    train_with_structure(model_cfg, train_cfg, g, &structure, split)
}

/// Trains in `f32`, keeping the parameters of the first epoch that reached
/// the best validation accuracy.
pub fn train_with_structure(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    g: &Graph,
    structure: &AttentionStructure<f32>,
    split: &NodeSplit,
) -> Result<RunResult, TrainError> {
    train_cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.input_dim != g.feature_dim() || model_cfg.n_classes != g.n_classes() {
        return Err(ModelError::Mismatch(format!(
            "model expects d = {}, K = {}; graph has d = {}, K = {}",
            model_cfg.input_dim,
            model_cfg.n_classes,
            g.feature_dim(),
            g.n_classes()
        ))
        .into());
    }
    let seed = split.seed;
    let mut params = init_params::<f32>(model_cfg, seed)?;
    let mut opt = Adam::<f32>::new(train_cfg.adam());
    let mut drop_rng = rng::stream(seed, "dropout");
    let targets: Vec<usize> = g.labels().iter().map(|&y| y as usize).collect();
    let features = Arc::new(g.features().clone());

    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut val_curve = Vec::new();
    let mut loss_curve = Vec::new();
    for epoch in 0..train_cfg.max_epochs {
        let mut tape = Tape::<f32>::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant((*features).clone());
        let masks = (model_cfg.dropout > 0.0).then(|| DropoutMasks::new(&mut drop_rng, model_cfg.dropout));
        let out = forward_on_tape(&mut tape, &bound, model_cfg, structure, x, masks)?;
        let loss = tape.cross_entropy(out.logits, &targets, &split.train)?;
        let loss_value = tape.value(loss)[[0, 0]] as f64;
        if !loss_value.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        loss_curve.push(loss_value);

        let val = if model_cfg.dropout > 0.0 {
            let (logits, _) = forward(&params, model_cfg, structure, &features)?;
            evaluate(&logits, g.labels(), &split.val)?
        } else {
            evaluate(tape.value(out.logits), g.labels(), &split.val)?
        };
        val_curve.push(val);
        if val > best.0 {
            best = (val, epoch, params.clone());
        }

        let grads = bound.collect(&tape.backward(loss)?);
        drop(tape);
        opt.step(&mut params, &grads).map_err(|e| match e {
            TensorError::NonFiniteGradient(_) => TrainError::Divergence { epoch },
            other => other.into(),
        })?;
        if epoch - best.1 >= train_cfg.patience {
            break;
        }
    }

    let (best_val, best_epoch, best_params) = best;
    let (logits, record) = forward(&best_params, model_cfg, structure, &features)?;
    Ok(RunResult {
        seed,
        test_accuracy: evaluate(&logits, g.labels(), &split.test)?,
        best_val_accuracy: best_val,
        train_accuracy: evaluate(&logits, g.labels(), &split.train)?,
        best_epoch,
        epochs_run: val_curve.len(),
        val_curve,
        loss_curve,
        split: split.clone(),
        record: record.with_seed(seed),
        checkpoint: Checkpoint { config: model_cfg.clone(), seed, epoch: best_epoch, params: best_params },
    })
}

/// Split and train for one seed; the seed drives both.
pub fn run_seed(model_cfg: &ModelConfig, train_cfg: &TrainConfig, g: &Graph, seed: u64) -> Result<RunResult, TrainError> {
    let split = generate_split_with(g, seed, train_cfg.stratified_split)?;
    train(model_cfg, train_cfg, g, &split)
}

#[derive(Debug, Clone)]
pub struct Experiment<R = RunResult> {
    pub mean: f64,
    /// Population standard deviation of test accuracy.
    pub std: f64,
    /// Ordered as the seed list.
    pub runs: Vec<R>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every seed (in parallel on the current rayon pool) and aggregates.
/// A failing seed aborts with its id.
pub fn multi_seed_experiment(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    g: &Graph,
    seeds: &[u64],
) -> Result<Experiment, TrainError> {
    multi_seed_experiment_map(model_cfg, train_cfg, g, seeds, |run| Ok(run))
}

/// As [`multi_seed_experiment`], handing each finished run to `map` right
/// away so large attention records need not be held for every seed.
pub fn multi_seed_experiment_map<R, F>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    g: &Graph,
    seeds: &[u64],
    map: F,
) -> Result<Experiment<R>, TrainError>
where
    R: Send,
    F: Fn(RunResult) -> Result<R, TrainError> + Sync,
{
    if seeds.len() < 2 {
        return Err(TrainError::Config("a multi-seed experiment needs at least 2 seeds".into()));
    }
    let structure = prepare_structure::<f32>(model_cfg, g)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            generate_split_with(g, seed, train_cfg.stratified_split)
                .map_err(TrainError::from)
                .and_then(|split| train_with_structure(model_cfg, train_cfg, g, &structure, &split))
                .and_then(|run| {
                    let acc = run.test_accuracy;
                    map(run).map(|r| (acc, r))
                })
                .map_err(|e| TrainError::Seed { seed, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let acc: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (mean, std) = mean_std(&acc);
    Ok(Experiment { mean, std, runs: runs.into_iter().map(|r| r.1).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn evaluate_contract() {
        let labels = [0, 2, 1];
        let one_hot = array![[1.0f32, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        assert_eq!(evaluate(&one_hot, &labels, &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(evaluate(&one_hot.mapv(|v| -v), &labels, &[0, 1, 2]).unwrap(), 0.0);
        let tied = array![[0.5f64, 0.5, 0.5]];
        assert_eq!(evaluate(&tied, &[0], &[0]).unwrap(), 1.0);
        assert_eq!(evaluate(&tied, &[1], &[0]).unwrap(), 0.0);
        assert!(matches!(evaluate(&tied, &[0], &[]), Err(TrainError::EmptyIds)));
    }

    #[test]
    fn random_logits_hit_one_in_k() {
        let mut r = rng::seeded(12);
        let n = 10_000;
        let logits = Array2::from_shape_simple_fn((n, 5), || rng::unit_f64(&mut r));
        let labels: Vec<u32> = (0..n).map(|_| rng::below(&mut r, 5) as u32).collect();
        let ids: Vec<usize> = (0..n).collect();
        let acc = evaluate(&logits, &labels, &ids).unwrap();
        assert!((acc - 0.2).abs() < 0.02, "{acc}");
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { patience: 600, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
