//! Convolutional stem, optional graph-wired module, and classifier.
//!
//! The stem maps `B x 1 x H x W` images to `B x C x H/2 x W/2`. When a DAG is
//! present its source hands the stem output to every input node, each
//! interior node aggregates its predecessors with a gated sum and applies
//! ReLU, a 3x3 separable convolution and batch norm, and the sink averages
//! the output nodes. The classifier maps the result to logits.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::autodiff::{update_running_stats, BatchStats, Conv2dSpec, GateMode, Tape, Tensor, Var};
use crate::dag::ArchitectureDag;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stable_hash, Rng};
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
/// Prefix shared by every parameter of the graph module.
pub const GRAPH_PREFIX: &str = "node.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    /// Flatten the `C x H x W` feature map into a fully connected layer.
    #[default]
    Flatten,
    /// Average each channel, then a fully connected layer.
    Gap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running estimates are returned for update.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub classifier: Classifier,
    #[serde(default)]
    pub gate_mode: GateMode,
    /// Side length of the square input images.
    #[serde(default = "default_image_size")]
    pub image_size: usize,
}

fn default_image_size() -> usize {
    28
}

impl ModelConfig {
    pub fn new(channels: usize, num_classes: usize) -> Self {
        Self {
            channels,
            num_classes,
            classifier: Classifier::Flatten,
            gate_mode: GateMode::Sigmoid,
            image_size: default_image_size(),
        }
    }

    /// Side length after the stride-2 stem.
    pub fn feature_size(&self) -> usize {
        self.image_size.div_ceil(2)
    }

    fn classifier_inputs(&self) -> usize {
        match self.classifier {
            Classifier::Flatten => self.channels * self.feature_size() * self.feature_size(),
            Classifier::Gap => self.channels,
        }
    }
}

/// Variables and side results of one forward pass.
pub struct Forward {
    pub logits: Var,
    /// One variable per registry entry, in registry order.
    pub params: Vec<Var>,
    /// Batch statistics per normalization layer (train mode only), keyed by
    /// layer prefix.
    pub batch_stats: Vec<(String, BatchStats)>,
    /// Interior nodes in the order they were computed.
    pub schedule: Vec<usize>,
}

/// A classifier with an optional graph-wired module. Without a DAG it is the
/// graph-free baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct DcnModel<T> {
    config: ModelConfig,
    dag: Option<ArchitectureDag>,
    schedule: Vec<usize>,
    predecessors: Vec<Vec<usize>>,
    params: IndexMap<String, Tensor<T>>,
    buffers: IndexMap<String, Tensor<T>>,
    frozen: BTreeSet<String>,
}

fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor<T> {
    let mut rng = Rng::new(derive_seed(seed, stable_hash(name)));
    Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), &mut rng)
}

fn node_prefix(i: usize) -> String {
    format!("{GRAPH_PREFIX}{i}")
}

/// Registry shapes of a model, in registry order.
fn layout(config: &ModelConfig, dag: Option<&ArchitectureDag>) -> Vec<(String, Vec<usize>)> {
    let c = config.channels;
    let mut out = vec![
        ("stem.conv.weight".to_string(), vec![c, 1, 3, 3]),
        ("stem.conv.bias".to_string(), vec![c]),
        ("stem.bn.gamma".to_string(), vec![c]),
        ("stem.bn.beta".to_string(), vec![c]),
    ];
    if let Some(dag) = dag {
        for (i, preds) in dag.predecessors().iter().enumerate() {
            let p = node_prefix(i);
            out.push((format!("{p}.gates"), vec![preds.len()]));
            out.push((format!("{p}.depthwise"), vec![c, 1, 3, 3]));
            out.push((format!("{p}.pointwise"), vec![c, c, 1, 1]));
            out.push((format!("{p}.bias"), vec![c]));
            out.push((format!("{p}.bn.gamma"), vec![c]));
            out.push((format!("{p}.bn.beta"), vec![c]));
        }
    }
    out.push((
        "classifier.weight".to_string(),
        vec![config.num_classes, config.classifier_inputs()],
    ));
    out.push(("classifier.bias".to_string(), vec![config.num_classes]));
    out
}

fn buffer_layout(config: &ModelConfig, dag: Option<&ArchitectureDag>) -> Vec<(String, Vec<usize>)> {
    let mut prefixes = vec!["stem.bn".to_string()];
    if let Some(dag) = dag {
        prefixes.extend((0..dag.interior_node_count()).map(|i| format!("{}.bn", node_prefix(i))));
    }
    prefixes
        .into_iter()
        .flat_map(|p| {
            [
                (format!("{p}.running_mean"), vec![config.channels]),
                (format!("{p}.running_var"), vec![config.channels]),
            ]
        })
        .collect()
}

fn init_param<T: Scalar>(name: &str, shape: &[usize], seed: u64) -> Tensor<T> {
    let last = name.rsplit('.').next().unwrap_or(name);
    match last {
        "weight" | "depthwise" | "pointwise" => {
            let fan_in = shape[1..].iter().product();
            he_normal(shape, fan_in, seed, name)
        }
        "gamma" => Tensor::full(shape, T::one()),
        _ => Tensor::zeros(shape),
    }
}

fn init_buffer<T: Scalar>(name: &str, shape: &[usize]) -> Tensor<T> {
    if name.ends_with("running_var") {
        Tensor::full(shape, T::one())
    } else {
        Tensor::zeros(shape)
    }
}

impl<T: Scalar> DcnModel<T> {
    /// Model with a graph module wired by `dag`. Weights are drawn from
    /// per-name streams of `seed`, so shared layers initialize identically
    /// across architectures.
    pub fn build_dcn(dag: &ArchitectureDag, config: ModelConfig, seed: u64) -> Result<Self> {
        dag.validate()?;
        Self::build(Some(dag.clone()), config, seed)
    }

    /// Stem and classifier only.
    pub fn build_baseline(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(None, config, seed)
    }

    fn build(dag: Option<ArchitectureDag>, config: ModelConfig, seed: u64) -> Result<Self> {
        if config.channels == 0 || config.num_classes == 0 || config.image_size == 0 {
            return Err(Error::InvalidParameter(
                "channels, classes and image size must be positive".into(),
            ));
        }
        let params = layout(&config, dag.as_ref())
            .into_iter()
            .map(|(name, shape)| {
                let t = init_param(&name, &shape, seed);
                (name, t)
            })
            .collect();
        let buffers = buffer_layout(&config, dag.as_ref())
            .into_iter()
            .map(|(name, shape)| {
                let t = init_buffer(&name, &shape);
                (name, t)
            })
            .collect();
        Self::assemble(dag, config, params, buffers)
    }

    fn assemble(
        dag: Option<ArchitectureDag>,
        config: ModelConfig,
        params: IndexMap<String, Tensor<T>>,
        buffers: IndexMap<String, Tensor<T>>,
    ) -> Result<Self> {
        let (schedule, predecessors) = match &dag {
            Some(d) => {
                let n = d.interior_node_count();
                let order = d.topological_order()?;
                (order.into_iter().filter(|&u| u < n).collect(), d.predecessors())
            }
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            config,
            dag,
            schedule,
            predecessors,
            params,
            buffers,
            frozen: BTreeSet::new(),
        })
    }

    /// Rebuild from stored tensors, checking names and shapes against the
    /// layout implied by `config` and `dag`.
    pub fn from_parts(
        config: ModelConfig,
        dag: Option<ArchitectureDag>,
        params: Vec<(String, Tensor<T>)>,
        buffers: Vec<(String, Tensor<T>)>,
    ) -> Result<Self> {
        if let Some(d) = &dag {
            d.validate()?;
        }
        let check = |kind: &str,
                     expected: Vec<(String, Vec<usize>)>,
                     got: Vec<(String, Tensor<T>)>|
         -> Result<IndexMap<String, Tensor<T>>> {
            if expected.len() != got.len() {
                return Err(Error::Checkpoint(format!(
                    "expected {} {kind} tensors, found {}",
                    expected.len(),
                    got.len()
                )));
            }
            for ((en, es), (gn, gt)) in expected.iter().zip(&got) {
                if en != gn || es.as_slice() != gt.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{kind} `{gn}` {:?} does not match expected `{en}` {es:?}",
                        gt.shape()
                    )));
                }
            }
            Ok(got.into_iter().collect())
        };
        let params = check("parameter", layout(&config, dag.as_ref()), params)?;
        let buffers = check("buffer", buffer_layout(&config, dag.as_ref()), buffers)?;
        Self::assemble(dag, config, params, buffers)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dag(&self) -> Option<&ArchitectureDag> {
        self.dag.as_ref()
    }

    /// Interior nodes in execution order.
    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    pub fn params(&self) -> &IndexMap<String, Tensor<T>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut IndexMap<String, Tensor<T>> {
        &mut self.params
    }

    pub fn buffers(&self) -> &IndexMap<String, Tensor<T>> {
        &self.buffers
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    /// Freeze or unfreeze every graph-module parameter. The stem and
    /// classifier always stay trainable.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = if frozen {
            self.params
                .keys()
                .filter(|k| k.starts_with(GRAPH_PREFIX))
                .cloned()
                .collect()
        } else {
            BTreeSet::new()
        };
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    pub fn param_count(&self, trainable_only: bool) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| !trainable_only || !self.is_frozen(k))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Record a forward pass on `tape`. Frozen parameters are recorded
    /// without gradient tracking.
    pub fn forward(&self, tape: &mut Tape<T>, images: &Tensor<T>, mode: Mode) -> Result<Forward> {
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|(k, t)| tape.leaf(t.clone(), !self.is_frozen(k)))
            .collect();
        self.forward_with(tape, &vars, images, mode)
    }

    /// Forward pass reading parameters from `vars`, one per registry entry
    /// in registry order.
    pub fn forward_with(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        images: &Tensor<T>,
        mode: Mode,
    ) -> Result<Forward> {
        let (_, cin, h, w) = images.dims4()?;
        let expected = self.config.image_size;
        if cin != 1 || h != expected || w != expected {
            return Err(Error::shape(format!(
                "expected B x 1 x {expected} x {expected} images, got {:?}",
                images.shape()
            )));
        }
        if vars.len() != self.params.len() {
            return Err(Error::shape(format!(
                "{} parameter variables for {} registry entries",
                vars.len(),
                self.params.len()
            )));
        }
        for ((name, t), &v) in self.params.iter().zip(vars) {
            if tape.value(v).shape() != t.shape() {
                return Err(Error::shape(format!("parameter `{name}` has the wrong shape")));
            }
        }
        let p = |name: &str| -> Var { vars[self.params.get_index_of(name).expect("registry name")] };
        let mut stats = Vec::new();
        let x = tape.constant(images.clone());

        let stem = tape.conv2d(x, p("stem.conv.weight"), p("stem.conv.bias"), Conv2dSpec::STEM)?;
        let stem = self.batch_norm(tape, stem, "stem.bn", &p, mode, &mut stats)?;
        let stem = tape.relu(stem);

        let mut schedule = Vec::with_capacity(self.schedule.len());
        let features = match &self.dag {
            None => stem,
            Some(dag) => {
                let n = dag.interior_node_count();
                let mut out: Vec<Option<Var>> = vec![None; n];
                for &v in &self.schedule {
                    let inputs = self.predecessors[v]
                        .iter()
                        .map(|&u| {
                            if u == dag.source_id() {
                                Ok(stem)
                            } else {
                                out[u].ok_or_else(|| {
                                    Error::Structure(format!(
                                        "node {v} reads node {u} before it is computed"
                                    ))
                                })
                            }
                        })
                        .collect::<Result<Vec<Var>>>()?;
                    let pre = node_prefix(v);
                    let agg = tape.gated_sum(&inputs, p(&format!("{pre}.gates")), self.config.gate_mode)?;
                    let act = tape.relu(agg);
                    let conv = tape.separable_conv3x3(
                        act,
                        p(&format!("{pre}.depthwise")),
                        p(&format!("{pre}.pointwise")),
                        p(&format!("{pre}.bias")),
                    )?;
                    let y = self.batch_norm(tape, conv, &format!("{pre}.bn"), &p, mode, &mut stats)?;
                    out[v] = Some(y);
                    schedule.push(v);
                }
                let outputs = dag
                    .output_nodes()
                    .iter()
                    .map(|&u| out[u].expect("every node is scheduled"))
                    .collect::<Vec<_>>();
                tape.mean(&outputs)?
            }
        };

        let flat = match self.config.classifier {
            Classifier::Flatten => tape.flatten(features)?,
            Classifier::Gap => tape.global_avg_pool(features)?,
        };
        let logits = tape.linear(flat, p("classifier.weight"), p("classifier.bias"))?;
        Ok(Forward {
            logits,
            params: vars.to_vec(),
            batch_stats: stats,
            schedule,
        })
    }

    fn batch_norm(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        prefix: &str,
        p: &impl Fn(&str) -> Var,
        mode: Mode,
        stats: &mut Vec<(String, BatchStats)>,
    ) -> Result<Var> {
        let gamma = p(&format!("{prefix}.gamma"));
        let beta = p(&format!("{prefix}.beta"));
        match mode {
            Mode::Train => {
                let (y, s) = tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                stats.push((prefix.to_string(), s));
                Ok(y)
            }
            Mode::Eval => {
                let mean = &self.buffers[&format!("{prefix}.running_mean")];
                let var = &self.buffers[&format!("{prefix}.running_var")];
                tape.batch_norm_eval(x, gamma, beta, mean.data(), var.data(), BN_EPS)
            }
        }
    }

    /// Fold train-mode batch statistics into the running estimates. Applies
    /// to frozen layers as well.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats)]) {
        for (prefix, s) in stats {
            let mean_key = format!("{prefix}.running_mean");
            let var_key = format!("{prefix}.running_var");
            let mut mean = self.buffers[&mean_key].clone();
            let mut var = self.buffers[&var_key].clone();
            update_running_stats(mean.data_mut(), var.data_mut(), s, BN_MOMENTUM);
            self.buffers[&mean_key] = mean;
            self.buffers[&var_key] = var;
        }
    }

    pub fn cast<U: Scalar>(&self) -> DcnModel<U> {
        DcnModel {
            config: self.config.clone(),
            dag: self.dag.clone(),
            schedule: self.schedule.clone(),
            predecessors: self.predecessors.clone(),
            params: self.params.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
            buffers: self.buffers.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
            frozen: self.frozen.clone(),
        }
    }

    /// Eval-mode logits as a plain tensor.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, images, Mode::Eval)?;
        Ok(tape.value(f.logits).clone())
    }
}
