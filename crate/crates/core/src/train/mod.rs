//! Adam with half-period cosine decay, per-epoch validation, multi-trial
//! runs and resumable checkpoints.

mod checkpoint;
mod config;
mod metrics;
mod optim;

use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use metrics::{parse_metrics_csv, EpochMetrics, RunMetrics, METRICS_HEADER};
pub use optim::{adam_step, cosine_lr, AdamHyper, AdamState};

use crate::autodiff::{Tape, Tensor};
use crate::dag::compile;
use crate::data::{BatchPlan, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::model::{DcnModel, Mode};
use crate::scalar::Scalar;

/// Highest validation accuracy seen so far, first epoch on ties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub val_acc: f64,
    pub val_loss: f64,
}

/// Everything needed to continue a run: model, optimizer moments and the
/// history so far.
#[derive(Clone, Debug, PartialEq)]
pub struct Session<T> {
    pub config: TrainConfig,
    pub model: DcnModel<T>,
    pub adam: AdamState<T>,
    pub metrics: RunMetrics,
    pub best: Option<BestEpoch>,
    /// Input normalization the model was trained with.
    pub normalization: Option<Normalization>,
}

/// Loss and accuracy of a labelled set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Compile the configured graph (if any) with the DAG seed and initialize a
/// model with the init seed.
pub fn build_model<T: Scalar>(config: &TrainConfig) -> Result<DcnModel<T>> {
    config.validate()?;
    let mc = config.model_config();
    let mut model = match &config.graph {
        Some(spec) => {
            let g = spec.load()?;
            let dag = compile(&g, config.dag_seed, spec.label())?;
            DcnModel::build_dcn(&dag, mc, config.init_seed)?
        }
        None => DcnModel::build_baseline(mc, config.init_seed)?,
    };
    model.set_frozen(config.freeze_graph);
    Ok(model)
}

/// Normalize both splits with the pixel statistics of the full training
/// split, then cut the training split to `train_subset` examples.
pub fn prepare_datasets<T: Scalar>(
    train: Dataset<T>,
    test: Dataset<T>,
    train_subset: Option<usize>,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let norm = train.pixel_statistics()?;
    let train = train.normalize(norm)?;
    let test = test.normalize(norm)?;
    let train = match train_subset {
        Some(n) => train.subset(n),
        None => train,
    };
    Ok((train, test))
}

/// Summed cross-entropy and correct count of a batch of logits. Ties in
/// the argmax go to the lowest class index.
pub fn score_logits<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, usize)> {
    let &[b, m] = logits.shape() else {
        return Err(Error::shape(format!("logits must be rank 2, got {:?}", logits.shape())));
    };
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for batch of {b}", labels.len())));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &label) in logits.data().chunks(m).zip(labels) {
        if label >= m {
            return Err(Error::Range(format!("label {label} outside [0, {m})")));
        }
        let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let mut arg = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[arg] {
                arg = k;
            }
        }
        let max = row[arg];
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        correct += usize::from(arg == label);
    }
    Ok((loss, correct))
}

/// Eval-mode loss and accuracy over `dataset`, in batches of `batch_size`.
pub fn evaluate<T: Scalar>(model: &DcnModel<T>, dataset: &Dataset<T>, batch_size: usize) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Length("cannot evaluate an empty dataset".into()));
    }
    let classes = model.config().num_classes;
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::Range(format!(
            "label {bad} outside the model's {classes} classes"
        )));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for (images, labels) in dataset.sequential_batches(batch_size) {
        let logits = model.predict(&images)?;
        let (l, c) = score_logits(&logits, &labels)?;
        loss += l;
        correct += c;
    }
    let n = dataset.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

impl<T: Scalar> Session<T> {
    /// Fresh run. The model's freezing is set from the config.
    pub fn new(config: TrainConfig, mut model: DcnModel<T>) -> Result<Self> {
        config.validate()?;
        let mc = model.config();
        if mc.channels != config.channels || mc.num_classes != config.num_classes {
            return Err(Error::InvalidParameter(format!(
                "model has {} channels and {} classes, config asks for {} and {}",
                mc.channels, mc.num_classes, config.channels, config.num_classes
            )));
        }
        model.set_frozen(config.freeze_graph);
        Ok(Self {
            config,
            model,
            adam: AdamState::default(),
            metrics: RunMetrics::default(),
            best: None,
            normalization: None,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.metrics.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done() >= self.config.epochs
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            eps: self.config.adam_eps,
        }
    }

    /// Run the next epoch and validate. Returns its metrics and whether it
    /// set a new best validation accuracy.
    pub fn train_epoch(&mut self, train: &Dataset<T>, val: &Dataset<T>) -> Result<(EpochMetrics, bool)> {
        if self.is_finished() {
            return Err(Error::InvalidParameter(format!(
                "all {} epochs already completed",
                self.config.epochs
            )));
        }
        if train.is_empty() {
            return Err(Error::Length("empty training set".into()));
        }
        if self.normalization.is_none() {
            self.normalization = train.normalization();
        }
        let started = Instant::now();
        let epoch = self.epochs_done() + 1;
        let plan = BatchPlan::new(train.len(), self.config.batch_size, self.config.data_seed, epoch)?;
        let total_steps = (self.config.epochs * plan.batch_count()) as u64;
        let hyper = self.hyper();
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut lr = self.config.base_lr;
        for indices in plan.batches() {
            let (images, labels) = train.gather(indices);
            let step = self.adam.step;
            let mut tape = Tape::new();
            let fwd = self.model.forward(&mut tape, &images, Mode::Train)?;
            let (loss, _) = tape.softmax_cross_entropy(fwd.logits, &labels)?;
            let loss_value = tape.value(loss).data()[0].as_f64();
            if !loss_value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step: step + 1,
                    loss: loss_value,
                });
            }
            let (_, c) = score_logits(tape.value(fwd.logits), &labels)?;
            loss_sum += loss_value * labels.len() as f64;
            correct += c;
            let grads = tape.backward(loss)?;
            let mut named = IndexMap::new();
            for ((name, value), &var) in self.model.params().iter().zip(&fwd.params) {
                if !self.model.is_frozen(name) {
                    named.insert(name.clone(), grads.get_or_zeros(var, value));
                }
            }
            lr = cosine_lr(step, total_steps, self.config.base_lr);
            adam_step(self.model.params_mut(), &named, &mut self.adam, lr, hyper)?;
            self.model.update_running_stats(&fwd.batch_stats);
        }
        let eval = evaluate(&self.model, val, self.config.batch_size)?;
        let n = train.len() as f64;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: eval.loss,
            val_acc: eval.accuracy,
            lr,
            wall_seconds: if self.config.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        let improved = self.best.is_none_or(|b| eval.accuracy > b.val_acc);
        if improved {
            self.best = Some(BestEpoch {
                epoch,
                val_acc: eval.accuracy,
                val_loss: eval.loss,
            });
        }
        self.metrics.epochs.push(metrics.clone());
        Ok((metrics, improved))
    }

    /// Train the remaining epochs. `observer` sees the session after every
    /// epoch together with that epoch's metrics and whether it is the new
    /// best. Observer errors stop the run and are returned as is.
    pub fn run<F, E>(&mut self, train: &Dataset<T>, val: &Dataset<T>, mut observer: F) -> Result<(), E>
    where
        F: FnMut(&Session<T>, &EpochMetrics, bool) -> Result<(), E>,
        E: From<Error>,
    {
        while !self.is_finished() {
            let (m, improved) = self.train_epoch(train, val)?;
            observer(self, &m, improved)?;
        }
        Ok(())
    }
}

/// Build the configured model and train it to completion.
pub fn train<T: Scalar>(config: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<Session<T>> {
    let mut session = Session::new(config.clone(), build_model(config)?)?;
    session.run(train, val, |_, _, _| Ok::<_, Error>(()))?;
    Ok(session)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub init_seed: u64,
    pub data_seed: u64,
    pub final_val_acc: f64,
    pub best_val_acc: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: Vec<TrialResult>,
    /// Statistics of the final-epoch accuracies.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub const TRIALS_HEADER: &str = "trial,init_seed,data_seed,final_val_acc,best_val_acc,best_epoch";

impl TrialSummary {
    pub fn from_trials(trials: Vec<TrialResult>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidParameter("no trials".into()));
        }
        let accs: Vec<f64> = trials.iter().map(|t| t.final_val_acc).collect();
        Ok(Self {
            mean: accs.iter().sum::<f64>() / accs.len() as f64,
            min: accs.iter().copied().fold(f64::INFINITY, f64::min),
            max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trials,
        })
    }

    pub fn final_accuracies(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.final_val_acc).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRIALS_HEADER}\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                t.trial, t.init_seed, t.data_seed, t.final_val_acc, t.best_val_acc, t.best_epoch
            ));
        }
        out
    }
}

/// `n` independent runs of `config`, trial `i` using
/// [`TrainConfig::for_trial`]. `observer` receives the trial index and
/// every epoch as in [`Session::run`].
pub fn run_trials<T, F, E>(
    config: &TrainConfig,
    n: usize,
    train: &Dataset<T>,
    val: &Dataset<T>,
    mut observer: F,
) -> Result<TrialSummary, E>
where
    T: Scalar,
    F: FnMut(usize, &Session<T>, &EpochMetrics, bool) -> Result<(), E>,
    E: From<Error>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()).into());
    }
    let mut results = Vec::with_capacity(n);
    for i in 0..n {
        let cfg = config.for_trial(i);
        let mut session = Session::new(cfg.clone(), build_model(&cfg)?)?;
        session.run(train, val, |s, m, b| observer(i, s, m, b))?;
        let last = session.metrics.last().expect("at least one epoch");
        let best = session.best.expect("at least one epoch");
        results.push(TrialResult {
            trial: i,
            init_seed: cfg.init_seed,
            data_seed: cfg.data_seed,
            final_val_acc: last.val_acc,
            best_val_acc: best.val_acc,
            best_epoch: best.epoch,
        });
    }
    Ok(TrialSummary::from_trials(results)?)
}
