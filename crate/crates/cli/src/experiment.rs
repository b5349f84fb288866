use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dcn_core::graph::GraphSpec;
use dcn_core::{Classifier, DatasetPaths, Error, GateMode, TrainConfig};
use serde::{Deserialize, Serialize};

/// Experiment file: the training recipe, where the data lives, where
/// results go and how many trials to run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
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
    pub dataset: String,
    pub graph: Option<GraphSpec>,
    pub train_subset: Option<usize>,
    pub record_wall_time: bool,
    /// Directory holding the four IDX files under their distribution names.
    pub data_dir: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_train(TrainConfig::default())
    }
}

impl ExperimentConfig {
    pub fn from_train(t: TrainConfig) -> Self {
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            channels: t.channels,
            num_classes: t.num_classes,
            classifier: t.classifier,
            gate_mode: t.gate_mode,
            freeze_graph: t.freeze_graph,
            init_seed: t.init_seed,
            data_seed: t.data_seed,
            dag_seed: t.dag_seed,
            dataset: t.dataset,
            graph: t.graph,
            train_subset: t.train_subset,
            record_wall_time: t.record_wall_time,
            data_dir: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            out_dir: PathBuf::from("runs"),
            trials: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(e.to_string()))
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            channels: self.channels,
            num_classes: self.num_classes,
            classifier: self.classifier,
            gate_mode: self.gate_mode,
            freeze_graph: self.freeze_graph,
            init_seed: self.init_seed,
            data_seed: self.data_seed,
            dag_seed: self.dag_seed,
            dataset: self.dataset.clone(),
            graph: self.graph.clone(),
            train_subset: self.train_subset,
            record_wall_time: self.record_wall_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.trials < 1 {
            return Err(Error::Schema("trials must be at least 1".into()).into());
        }
        self.dataset_paths()?;
        Ok(())
    }

    /// Explicit file paths win over `data_dir`.
    pub fn dataset_paths(&self) -> Result<DatasetPaths> {
        let base = self.data_dir.as_ref().map(DatasetPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, key: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| Error::Schema(format!("`{key}` or `data_dir` is required")))
        };
        Ok(DatasetPaths {
            train_images: pick(&self.train_images, base.as_ref().map(|b| &b.train_images), "train_images")?,
            train_labels: pick(&self.train_labels, base.as_ref().map(|b| &b.train_labels), "train_labels")?,
            test_images: pick(&self.test_images, base.as_ref().map(|b| &b.test_images), "test_images")?,
            test_labels: pick(&self.test_labels, base.as_ref().map(|b| &b.test_labels), "test_labels")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_training_recipe() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"data_dir": "d"}"#).unwrap();
        assert_eq!(c.train_config(), TrainConfig::default());
        assert_eq!(c.trials, 1);
        c.validate().unwrap();
        assert_eq!(c.dataset_paths().unwrap(), DatasetPaths::in_dir("d"));
    }

    #[test]
    fn unknown_keys_and_missing_data_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epoch": 3}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"graph": {"ws": {"n": 8, "k": 2, "q": 1}}}"#).is_err());
        let c = ExperimentConfig::default();
        assert!(c.validate().is_err());
    }

    #[test]
    fn explicit_paths_override_the_directory() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"data_dir": "d", "test_images": "other/images", "graph": {"ws": {"n": 8, "k": 2, "p": 0.5}}}"#,
        )
        .unwrap();
        let p = c.dataset_paths().unwrap();
        assert_eq!(p.test_images, PathBuf::from("other/images"));
        assert_eq!(p.train_images, PathBuf::from("d/train-images-idx3-ubyte"));
        assert_eq!(c.graph, Some(GraphSpec::ws(8, 2, 0.5, 0)));
    }
}
