use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use dcn_core::dag::compile as compile_dag;
use dcn_core::graph::{stats, GraphStats};
use dcn_core::train::{
    build_model, evaluate, prepare_datasets, run_trials, write_checkpoint, read_checkpoint, EpochMetrics,
    TrialSummary,
};
use dcn_core::{Dataset, DatasetPaths, Error, Session, Split};
use serde::Serialize;

use crate::experiment::ExperimentConfig;
use crate::report::{self, RunSummary, Seeds};
use crate::{AnalyzeArgs, CompileArgs, EvalArgs, ReportArgs, TrainArgs};

/// Mistakes in how the command was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for usage errors, 3 for numerical aborts, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<Error>().is_some_and(Error::is_numerical) {
            return 3;
        }
    }
    2
}

/// Size the intra-op pool from `DCN_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DCN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("DCN_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot size the thread pool")?;
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn stats_table(label: &str, s: &GraphStats) -> String {
    let rows = [
        ("Graph", label.to_string()),
        ("Nodes", s.node_count.to_string()),
        ("Edges", s.edge_count.to_string()),
        ("Average path length", format!("{:.3}", s.average_path_length)),
        ("Clustering coefficient", format!("{:.3}", s.average_clustering)),
        ("Connected components", s.connected_components.to_string()),
        ("Diameter", s.diameter.to_string()),
        ("Average degree", format!("{:.3}", s.average_degree)),
        ("Modularity", format!("{:.3}", s.modularity)),
    ];
    rows.iter().map(|(k, v)| format!("{k:<24}{v}\n")).collect()
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let spec = args.graph.spec()?;
    let g = spec
        .load()
        .with_context(|| format!("cannot load graph {}", spec.label()))?;
    let s = stats(&g, args.seed)?;
    print!("{}", stats_table(&spec.label(), &s));
    if let Some(out) = args.out {
        write(&out, serde_json::to_string_pretty(&s)? + "\n")?;
    }
    Ok(())
}

pub fn compile(args: CompileArgs) -> Result<()> {
    let spec = args.graph.spec()?;
    let g = spec
        .load()
        .with_context(|| format!("cannot load graph {}", spec.label()))?;
    let dag = compile_dag(&g, args.seed, spec.label())?;
    dag.validate().context("compiled DAG failed validation")?;
    write(&args.out, dag.to_json())?;
    println!(
        "nodes {}, edges {}, inputs {}, outputs {}",
        dag.interior_node_count(),
        dag.edges().len(),
        dag.input_nodes().len(),
        dag.output_nodes().len()
    );
    Ok(())
}

fn load_split(images: &Path, labels: &Path, split: Split) -> Result<Dataset<f32>> {
    Dataset::load(images, labels, split)
        .with_context(|| format!("cannot load {} / {}", images.display(), labels.display()))
}

fn architecture(session: &Session<f32>) -> String {
    match session.model.dag() {
        Some(d) => d.source_graph().to_string(),
        None => "baseline".into(),
    }
}

fn run_summary(session: &Session<f32>, trial: usize) -> RunSummary {
    let last = session.metrics.last().expect("finished run");
    let best = session.best.expect("finished run");
    let c = &session.config;
    RunSummary {
        architecture: architecture(session),
        dataset: c.dataset.clone(),
        trial,
        freeze_graph: c.freeze_graph,
        epochs: session.epochs_done(),
        final_val_acc: last.val_acc,
        final_val_loss: last.val_loss,
        best_val_acc: best.val_acc,
        best_epoch: best.epoch,
        trainable_params: session.model.param_count(true),
        total_params: session.model.param_count(false),
        seeds: Seeds {
            init: c.init_seed,
            data: c.data_seed,
            dag: c.dag_seed,
        },
        config: c.clone(),
    }
}

#[derive(Serialize)]
struct TrialsFile<'a> {
    architecture: &'a str,
    dataset: &'a str,
    freeze_graph: bool,
    trials: &'a TrialSummary,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut exp = ExperimentConfig::load(&args.config)?;
    exp.freeze_graph |= args.freeze_graph;
    if let Some(e) = args.epochs {
        exp.epochs = e;
    }
    if let Some(c) = args.channels {
        exp.channels = c;
    }
    if let Some(t) = args.trials {
        exp.trials = t;
    }
    if let Some(d) = args.out_dir {
        exp.out_dir = d;
    }
    exp.validate()
        .with_context(|| format!("invalid config {}", args.config.display()))?;
    let config = exp.train_config();
    let paths = exp.dataset_paths()?;
    let train = load_split(&paths.train_images, &paths.train_labels, Split::Train)?;
    let test = load_split(&paths.test_images, &paths.test_labels, Split::Test)?;
    let (train, test) = prepare_datasets(train, test, config.train_subset)?;
    eprintln!(
        "training on {} examples, validating on {}",
        train.len(),
        test.len()
    );

    let out = exp.out_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let probe = build_model::<f32>(&config)?;
    if let Some(dag) = probe.dag() {
        write(&out.join("dag.json"), dag.to_json())?;
    }
    let arch = probe
        .dag()
        .map_or_else(|| "baseline".to_string(), |d| d.source_graph().to_string());
    eprintln!(
        "{arch}: {} parameters, {} trainable",
        probe.param_count(false),
        probe.param_count(true)
    );
    drop(probe);

    let trials = exp.trials;
    let run_dir = |i: usize| {
        if trials == 1 {
            out.clone()
        } else {
            out.join(format!("trial_{i:03}"))
        }
    };
    let mut clock = Instant::now();
    let summary = run_trials(&config, trials, &train, &test, |i, session, m: &EpochMetrics, improved| {
        let dir = run_dir(i);
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        eprintln!(
            "trial {i} epoch {}/{}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}, lr {:.6} ({:.1} s)",
            m.epoch,
            session.config.epochs,
            m.train_loss,
            m.train_acc,
            m.val_loss,
            m.val_acc,
            m.lr,
            clock.elapsed().as_secs_f64()
        );
        clock = Instant::now();
        if improved {
            write_checkpoint(&dir.join("best.ckpt"), session)?;
        }
        write(&dir.join("metrics.csv"), session.metrics.to_csv())?;
        if session.is_finished() {
            write_checkpoint(&dir.join("final.ckpt"), session)?;
            let s = run_summary(session, i);
            write(&dir.join("summary.json"), serde_json::to_string_pretty(&s)? + "\n")?;
        }
        Ok::<_, anyhow::Error>(())
    })?;
    if trials > 1 {
        write(&out.join("trials.csv"), summary.to_csv())?;
        let file = TrialsFile {
            architecture: &arch,
            dataset: &config.dataset,
            freeze_graph: config.freeze_graph,
            trials: &summary,
        };
        write(&out.join("summary.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    }
    println!(
        "final accuracy mean {:.4} min {:.4} max {:.4} over {trials} trial(s)",
        summary.mean, summary.min, summary.max
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    examples: usize,
    loss: f64,
    accuracy: f64,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let session = read_checkpoint::<f32>(&args.checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", args.checkpoint.display()))?;
    let base = args.data_dir.as_ref().map(DatasetPaths::in_dir);
    let images = args
        .test_images
        .or_else(|| base.as_ref().map(|b| b.test_images.clone()))
        .ok_or_else(|| UsageError("give --test-images or --data-dir".into()))?;
    let labels = args
        .test_labels
        .or_else(|| base.as_ref().map(|b| b.test_labels.clone()))
        .ok_or_else(|| UsageError("give --test-labels or --data-dir".into()))?;
    let mut test = load_split(&images, &labels, Split::Test)?;
    if let Some(norm) = session.normalization {
        test = test.normalize(norm)?;
    }
    let batch = args.batch_size.unwrap_or(session.config.batch_size);
    if batch == 0 {
        return Err(UsageError("--batch-size must be at least 1".into()).into());
    }
    let e = evaluate(&session.model, &test, batch)?;
    let out = EvalOutput {
        examples: test.len(),
        loss: e.loss,
        accuracy: e.accuracy,
    };
    println!("{}", serde_json::to_string(&out)?);
    eprintln!("loss {:.6}, accuracy {:.4}", e.loss, e.accuracy);
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let runs = report::discover(&args.runs)?;
    write(&args.out_dir.join("report.csv"), report::report_csv(&runs))?;
    write(&args.out_dir.join("report.svg"), report::report_svg(&runs))?;
    println!("{} runs", runs.len());
    Ok(())
}
