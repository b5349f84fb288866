use serde::{Deserialize, Serialize};

use crate::autodiff::GateMode;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::model::{Classifier, ModelConfig};
use crate::rng::derive_seed;

/// Training recipe and seeds. Absent keys take their defaults; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub channels: usize,
    pub num_classes: usize,
    pub classifier: Classifier,
    pub gate_mode: GateMode,
    pub freeze_graph: bool,
    pub init_seed: u64,
    pub data_seed: u64,
    pub dag_seed: u64,
    /// Free-form dataset name recorded with results.
    pub dataset: String,
    /// Graph module wiring; absent for the graph-free baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    /// Train on the first `n` training examples only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_subset: Option<usize>,
    /// Fill the `wall_seconds` metrics column with measured time. Off by
    /// default so metrics files are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            base_lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            channels: 16,
            num_classes: 10,
            classifier: Classifier::Flatten,
            gate_mode: GateMode::Sigmoid,
            freeze_graph: false,
            init_seed: 0,
            data_seed: 0,
            dag_seed: 0,
            dataset: "mnist".into(),
            graph: None,
            train_subset: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Schema(msg));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.channels < 1 || self.num_classes < 1 {
            return bad("channels and num_classes must be at least 1".into());
        }
        if self.train_subset == Some(0) {
            return bad("train_subset must be at least 1".into());
        }
        if let Some(g) = &self.graph {
            g.validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            num_classes: self.num_classes,
            classifier: self.classifier,
            gate_mode: self.gate_mode,
            image_size: 28,
        }
    }

    /// Configuration of trial `i`: trial 0 keeps the base seeds, later
    /// trials derive fresh init and data seeds. The wiring seed is shared so
    /// every trial of an experiment uses one DAG.
    pub fn for_trial(&self, i: usize) -> TrainConfig {
        let mut c = self.clone();
        if i > 0 {
            c.init_seed = derive_seed(self.init_seed, i as u64);
            c.data_seed = derive_seed(self.data_seed, i as u64);
        }
        c
    }
}
