//! Subcommand implementations.

use std::path::PathBuf;

use clap::{Args, Subcommand};

use met_core::backbone::Model;
use met_core::baselines::{met_r_checkpoint, RandomFeatureMap};
use met_core::data::{project_2d, TabularDataset};
use met_core::downstream::{
    accuracy_from_logits, export_representations_csv, label_fraction_subsample,
    mean_interclass_distance, representation_dim, representation_matrix, train_head,
    RepresentationMode,
};
use met_core::error::{Error, Result};
use met_core::tensor::Tensor;
use met_core::trainer::{pretrain, PretrainOptions, PretrainOutput};

use crate::config::{resolve, Baseline, CommonArgs, DatasetSpec, ExperimentConfig, SweepAxis};
use crate::runs::RunDir;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-supervised pretraining: checkpoint + per-epoch metrics log.
    Pretrain(PretrainArgs),
    /// Extract representations with a frozen encoder, train the MLP head,
    /// report train/test accuracy.
    FinetuneEval(FinetuneArgs),
    /// Two-circles study: raw and representation 2-D projections plus the
    /// inter-class distance trace.
    ToyStudy(ToyArgs),
    /// Grid one axis over a seed list and aggregate accuracies.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pretrained checkpoint (optional for rfg / raw-mlp baselines).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Export the evaluated representations as CSV.
    #[arg(long)]
    pub export_reps: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// mask-pct | head-depth | label-fraction | epsilon
    #[arg(long)]
    pub axis: SweepAxis,
    /// Axis values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::FinetuneEval(a) => cmd_finetune_eval(a),
        Command::ToyStudy(a) => cmd_toy_study(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

// ── pretrain ────────────────────────────────────────────────────────────

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let resume = args.common.resume;
    let cfg = resolve(args.common)?;
    let ds = cfg.build_dataset()?;
    let run = RunDir::create(&args.out, &cfg, "pretrain")?;
    let output = run_pretrain(&cfg, &ds, &run, resume)?;
    let last = output.metrics.last();
    println!(
        "pretrained {} epochs on {} rows (d={}); final loss_std = {}",
        cfg.epochs,
        ds.train_indices().len(),
        ds.n_cols(),
        last.map_or_else(|| "n/a".into(), |m| format!("{:.6}", m.loss_std)),
    );
    println!("checkpoint: {}", run.file("checkpoint_latest.json").display());
    Ok(())
}

fn run_pretrain(
    cfg: &ExperimentConfig,
    ds: &TabularDataset,
    run: &RunDir,
    resume: bool,
) -> Result<PretrainOutput> {
    let opts = PretrainOptions {
        checkpoint_dir: Some(run.path.clone()),
        checkpoint_interval: cfg.checkpoint_interval,
        monitor_interclass: ds.labels().is_some(),
        resume,
    };
    let resuming = resume && run.file("metrics.csv").exists();
    let output = pretrain(ds, &cfg.model_config(ds.n_cols()), &cfg.train_config(), &opts)?;
    run.write_epoch_metrics(&output.metrics, resuming)?;
    Ok(output)
}

// ── finetune / evaluate ─────────────────────────────────────────────────

/// Which featurizer feeds the head.
enum Featurizer {
    Encoder(Model),
    Random(RandomFeatureMap),
    Identity,
}

impl Featurizer {
    fn name(&self) -> &'static str {
        match self {
            Featurizer::Encoder(_) => "encoder",
            Featurizer::Random(_) => "rfg",
            Featurizer::Identity => "raw",
        }
    }

    fn features(&self, xs: &Tensor, mode: RepresentationMode) -> Result<Tensor> {
        match self {
            Featurizer::Encoder(model) => representation_matrix(model, xs, mode),
            Featurizer::Random(map) => map.features_matrix(xs),
            Featurizer::Identity => Ok(xs.clone()),
        }
    }
}

struct EvalReport {
    featurizer: &'static str,
    train_rows: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    interclass_distance: f64,
}

/// Shared downstream protocol: stratified label-fraction subsample of the
/// train split, head training on frozen features, test-set evaluation.
fn eval_featurizer(
    feat: &Featurizer,
    ds: &TabularDataset,
    cfg: &ExperimentConfig,
    head_depth: usize,
    label_fraction: f64,
) -> Result<EvalReport> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::Data("finetuning needs a labeled dataset".into()))?;
    let train_rows = ds.train_indices();
    let test_rows = ds.test_indices();
    if test_rows.is_empty() {
        return Err(Error::Data("evaluation needs a test split".into()));
    }
    let subset = label_fraction_subsample(&train_rows, labels, label_fraction, cfg.seed)?;
    let ys: Vec<usize> = subset.iter().map(|&r| labels[r]).collect();
    let yt: Vec<usize> = test_rows.iter().map(|&r| labels[r]).collect();

    let reps_train = feat.features(&ds.gather_rows(&subset)?, cfg.mode)?;
    let reps_test = feat.features(&ds.gather_rows(&test_rows)?, cfg.mode)?;

    let mut head_cfg = cfg.head_config(ds.n_classes());
    head_cfg.hidden_layers = head_depth;
    let (head, trace) = train_head(&reps_train, &ys, &head_cfg)?;
    let train_accuracy = *trace.last().expect("at least one epoch");
    let test_accuracy = accuracy_from_logits(&head.logits(&reps_test)?, &yt)?;
    let interclass_distance = mean_interclass_distance(&reps_test, &yt)?;
    Ok(EvalReport {
        featurizer: feat.name(),
        train_rows: subset.len(),
        train_accuracy,
        test_accuracy,
        interclass_distance,
    })
}

fn build_featurizer(
    cfg: &ExperimentConfig,
    checkpoint: Option<&PathBuf>,
    d: usize,
) -> Result<Featurizer> {
    let loaded = checkpoint.map(|p| Model::load(p)).transpose()?;
    if let Some(model) = &loaded {
        if model.config.d != d {
            return Err(Error::InvalidConfig(format!(
                "checkpoint expects d={}, dataset has {d} columns",
                model.config.d
            )));
        }
    }
    match cfg.baseline {
        None => loaded.map(Featurizer::Encoder).ok_or_else(|| {
            Error::InvalidConfig("finetune-eval needs --checkpoint (or --baseline)".into())
        }),
        Some(Baseline::MetR) => {
            let model_cfg =
                loaded.map(|m| m.config).unwrap_or_else(|| cfg.model_config(d));
            Ok(Featurizer::Encoder(met_r_checkpoint(model_cfg, cfg.seed)?))
        }
        Some(Baseline::Rfg) => {
            let model_cfg =
                loaded.map(|m| m.config).unwrap_or_else(|| cfg.model_config(d));
            let probe = Model::init(model_cfg, cfg.seed)?;
            let m = representation_dim(&probe, cfg.mode);
            Ok(Featurizer::Random(RandomFeatureMap::new(m, d, cfg.seed)?))
        }
        Some(Baseline::RawMlp) => Ok(Featurizer::Identity),
    }
}

fn cmd_finetune_eval(args: FinetuneArgs) -> Result<()> {
    let cfg = resolve(args.common)?;
    let ds = cfg.build_dataset()?;
    let run = RunDir::create(&args.out, &cfg, "finetune-eval")?;
    let feat = build_featurizer(&cfg, args.checkpoint.as_ref(), ds.n_cols())?;
    let report = eval_featurizer(&feat, &ds, &cfg, cfg.head_depth, cfg.label_fraction)?;

    run.write_csv(
        "report.csv",
        "featurizer,mode,label_fraction,head_depth,train_rows,train_accuracy,test_accuracy,interclass_distance",
        &[format!(
            "{},{},{},{},{},{},{},{}",
            report.featurizer,
            cfg.mode,
            cfg.label_fraction,
            cfg.head_depth,
            report.train_rows,
            report.train_accuracy,
            report.test_accuracy,
            report.interclass_distance
        )],
    )?;
    let summary = format!(
        "featurizer            {}\nrepresentation mode   {}\nlabel fraction        {}\nhead hidden layers    {}\ntrain rows            {}\ntrain accuracy        {:.4}\ntest accuracy         {:.4}\ninter-class distance  {:.4}\n",
        report.featurizer,
        cfg.mode,
        cfg.label_fraction,
        cfg.head_depth,
        report.train_rows,
        report.train_accuracy,
        report.test_accuracy,
        report.interclass_distance
    );
    std::fs::write(run.file("report.txt"), &summary)?;
    print!("{summary}");

    if let Some(path) = &args.export_reps {
        let all: Vec<usize> = (0..ds.n_rows()).collect();
        let reps = feat.features(&ds.gather_rows(&all)?, cfg.mode)?;
        export_representations_csv(path, &reps, ds.labels())?;
        println!("representations exported to {}", path.display());
    }
    Ok(())
}

// ── toy study ───────────────────────────────────────────────────────────

fn cmd_toy_study(args: ToyArgs) -> Result<()> {
    let mut common = args.common;
    if common.preset.is_none() && common.dataset.is_none() {
        common.preset = Some("toy".into());
    }
    let cfg = resolve(common)?;
    if !matches!(cfg.dataset, DatasetSpec::Toy { .. }) {
        return Err(Error::InvalidConfig("toy-study runs on the toy dataset only".into()));
    }
    let ds = cfg.build_dataset()?;
    let run = RunDir::create(&args.out, &cfg, "toy-study")?;
    let output = run_pretrain(&cfg, &ds, &run, false)?;

    // Raw 2-D projection, one row per example.
    let labels = ds.labels().expect("toy data is labeled");
    let mut raw_rows = Vec::with_capacity(ds.n_rows());
    for i in 0..ds.n_rows() {
        let (px, py) = project_2d(ds.row(i))?;
        raw_rows.push(format!("{px},{py},{}", labels[i]));
    }
    run.write_csv("raw_2d.csv", "px,py,label", &raw_rows)?;

    // Learned-representation 2-D projection by the same alternate-mean rule.
    let all: Vec<usize> = (0..ds.n_rows()).collect();
    let reps =
        representation_matrix(&output.model, &ds.gather_rows(&all)?, RepresentationMode::Concat)?;
    let mut rep_rows = Vec::with_capacity(ds.n_rows());
    for i in 0..ds.n_rows() {
        let (px, py) = project_2d(reps.row(i))?;
        rep_rows.push(format!("{px},{py},{}", labels[i]));
    }
    run.write_csv("representations_2d.csv", "px,py,label", &rep_rows)?;

    // Distance trace: entry k is the state after k epochs (0 = init).
    let trace = output.distance_trace.as_ref().expect("toy study monitors distance");
    let dist_rows: Vec<String> =
        trace.iter().enumerate().map(|(e, d)| format!("{e},{d}")).collect();
    run.write_csv("distance_vs_epoch.csv", "epoch,distance", &dist_rows)?;

    println!(
        "toy study complete: distance {:.4} -> {:.4} over {} epochs",
        trace.first().unwrap(),
        trace.last().unwrap(),
        cfg.epochs
    );
    Ok(())
}

// ── sweep ───────────────────────────────────────────────────────────────

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if args.values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one --values entry".into()));
    }
    let cfg = resolve(args.common)?;
    let ds = cfg.build_dataset()?;
    let run = RunDir::create(&args.out, &cfg, &format!("sweep --axis {}", args.axis))?;

    // head-depth and label-fraction do not enter pretraining, so those axes
    // reuse one checkpoint per seed.
    let finetune_only = matches!(args.axis, SweepAxis::HeadDepth | SweepAxis::LabelFraction);

    let mut cells: Vec<String> = Vec::new();
    let mut by_value: Vec<(f64, Vec<f64>)> = args.values.iter().map(|&v| (v, Vec::new())).collect();

    for &seed in &cfg.seeds {
        let mut seed_cfg = cfg.clone();
        seed_cfg.seed = seed;
        let shared_model = if finetune_only {
            let cell = run.path.join("cells").join(format!("pretrain-seed-{seed}"));
            let cell_run = RunDir::create(&cell, &seed_cfg, "sweep-pretrain")?;
            Some(run_pretrain(&seed_cfg, &ds, &cell_run, false)?.model)
        } else {
            None
        };

        for (vi, &value) in args.values.iter().enumerate() {
            let mut cell_cfg = seed_cfg.clone();
            let mut head_depth = cell_cfg.head_depth;
            let mut label_fraction = cell_cfg.label_fraction;
            match args.axis {
                SweepAxis::MaskPct => cell_cfg.mask_pct = value,
                SweepAxis::Epsilon => cell_cfg.epsilon = value,
                SweepAxis::HeadDepth => {
                    if value.fract() != 0.0 || value < 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "head-depth values must be non-negative integers, got {value}"
                        )));
                    }
                    head_depth = value as usize;
                    cell_cfg.head_depth = head_depth;
                }
                SweepAxis::LabelFraction => {
                    label_fraction = value;
                    cell_cfg.label_fraction = value;
                }
            }
            cell_cfg.train_config().validate()?;

            let model = match &shared_model {
                Some(m) => m.clone(),
                None => {
                    let cell =
                        run.path.join("cells").join(format!("{}-{value}-seed-{seed}", args.axis));
                    let cell_run = RunDir::create(&cell, &cell_cfg, "sweep-pretrain")?;
                    run_pretrain(&cell_cfg, &ds, &cell_run, false)?.model
                }
            };
            let report = eval_featurizer(
                &Featurizer::Encoder(model),
                &ds,
                &cell_cfg,
                head_depth,
                label_fraction,
            )?;
            cells.push(format!(
                "{},{value},{seed},{},{}",
                args.axis, report.train_accuracy, report.test_accuracy
            ));
            by_value[vi].1.push(report.test_accuracy);
            println!(
                "sweep cell {}={value} seed={seed}: test accuracy {:.4}",
                args.axis, report.test_accuracy
            );
        }
    }

    run.write_csv("sweep_cells.csv", "axis,value,seed,train_accuracy,test_accuracy", &cells)?;
    let summary: Vec<String> = by_value
        .iter()
        .map(|(value, accs)| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            format!("{},{value},{mean},{}", args.axis, var.sqrt())
        })
        .collect();
    run.write_csv("sweep_summary.csv", "axis,value,mean_test_accuracy,std_test_accuracy", &summary)?;
    println!("sweep table: {}", run.file("sweep_summary.csv").display());
    Ok(())
}
