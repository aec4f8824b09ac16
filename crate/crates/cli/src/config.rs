//! Experiment configuration: presets, config files and flag resolution.
//!
//! Precedence, lowest to highest: built-in defaults, preset, config file,
//! command-line flags. The fully resolved configuration serializes back to
//! the same key-value format (`key = value`, one per line) that config
//! files use, with every key explicit, so a stored `resolved_config.txt`
//! reproduces the run without the preset or the original flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use met_core::backbone::{MaskTokenMode, ModelConfig};
use met_core::data::{
    generate_two_circles_with, load_csv, normalize_fit_apply, split, split_from_index_file,
    CsvSchema, TabularDataset, TwoCirclesOptions,
};
use met_core::downstream::{HeadConfig, RepresentationMode};
use met_core::error::{Error, Result};
use met_core::trainer::{OptimizerKind, TrainConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    MetR,
    Rfg,
    RawMlp,
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Baseline::MetR => "met-r",
            Baseline::Rfg => "rfg",
            Baseline::RawMlp => "raw-mlp",
        })
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "met-r" => Ok(Baseline::MetR),
            "rfg" => Ok(Baseline::Rfg),
            "raw-mlp" => Ok(Baseline::RawMlp),
            other => Err(Error::InvalidConfig(format!("unknown baseline '{other}'"))),
        }
    }
}

/// Sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    MaskPct,
    HeadDepth,
    LabelFraction,
    Epsilon,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::MaskPct => "mask-pct",
            SweepAxis::HeadDepth => "head-depth",
            SweepAxis::LabelFraction => "label-fraction",
            SweepAxis::Epsilon => "epsilon",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask-pct" => Ok(SweepAxis::MaskPct),
            "head-depth" => Ok(SweepAxis::HeadDepth),
            "label-fraction" => Ok(SweepAxis::LabelFraction),
            "epsilon" => Ok(SweepAxis::Epsilon),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis '{other}'"))),
        }
    }
}

// ── flags ───────────────────────────────────────────────────────────────

/// Flags shared by every subcommand. Each maps to one config-file key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Named preset: toy, fmnist, cifar10, mnist, covtype, income.
    #[arg(long)]
    pub preset: Option<String>,
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset: `toy` or a CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Schema file for CSV datasets (label/categorical/one-hot groups).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Toy generator: examples per class.
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Seed for dataset generation/shuffling/splitting (defaults to 0 so
    /// sweeps over training seeds share one dataset).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Toy generator geometry.
    #[arg(long)]
    pub circle_offset: Option<f64>,
    #[arg(long)]
    pub circle_radius: Option<f64>,
    #[arg(long)]
    pub circle_noise_std: Option<f64>,
    #[arg(long)]
    pub circle_disk: Option<bool>,
    /// Z-score features with train-split statistics.
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Explicit split: file with one test-row index per line.
    #[arg(long)]
    pub split_file: Option<PathBuf>,

    /// Positional-encoding width (token width is e+1).
    #[arg(long)]
    pub e: Option<usize>,
    /// Feed-forward hidden width.
    #[arg(long)]
    pub fw: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub enc_depth: Option<usize>,
    #[arg(long)]
    pub dec_depth: Option<usize>,
    /// shared | per-coordinate | through-encoder
    #[arg(long)]
    pub mask_token_mode: Option<MaskTokenMode>,

    /// Masking percentage m.
    #[arg(long)]
    pub mask_pct: Option<f64>,
    /// L2 projection radius for the adversarial perturbation.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weight of the adversarial loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub adv_steps: Option<usize>,
    #[arg(long)]
    pub ascent_lr: Option<f64>,
    #[arg(long)]
    pub descent_lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// sgd | adam
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// met | met-s
    #[arg(long)]
    pub variant: Option<Variant>,

    /// Downstream head hidden layers.
    #[arg(long)]
    pub head_depth: Option<usize>,
    /// Head hidden width (0 = min(256, input dim)).
    #[arg(long)]
    pub head_width: Option<usize>,
    #[arg(long)]
    pub head_lr: Option<f64>,
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long)]
    pub head_batch: Option<usize>,

    /// Representation mode: concat | average.
    #[arg(long)]
    pub mode: Option<RepresentationMode>,
    /// Fraction of labeled train rows for head training, in (0, 1].
    #[arg(long)]
    pub label_fraction: Option<f64>,
    /// Baseline featurizer: met-r | rfg | raw-mlp.
    #[arg(long)]
    pub baseline: Option<Baseline>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed list for sweeps (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Write a checkpoint every N epochs (0 = final only).
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Continue a pretraining run from its checkpoint directory.
    #[arg(long, default_value_t = false)]
    pub resume: bool,
}

// ── resolved configuration ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Toy { n_per_class: usize, opts: TwoCirclesOptions },
    Csv { path: PathBuf, schema: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub data_seed: u64,
    pub normalize: bool,
    pub test_fraction: f64,
    pub split_file: Option<PathBuf>,

    pub e: usize,
    pub fw: usize,
    pub heads: usize,
    pub enc_depth: usize,
    pub dec_depth: usize,
    pub mask_token_mode: MaskTokenMode,

    pub mask_pct: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub adv_steps: usize,
    pub ascent_lr: f64,
    pub descent_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub variant: Variant,

    pub head_depth: usize,
    pub head_width: usize,
    pub head_lr: f64,
    pub head_epochs: usize,
    pub head_batch: usize,

    pub mode: RepresentationMode,
    pub label_fraction: f64,
    pub baseline: Option<Baseline>,

    pub seed: u64,
    pub seeds: Vec<u64>,
    pub checkpoint_interval: usize,
}

impl ExperimentConfig {
    pub fn model_config(&self, d: usize) -> ModelConfig {
        ModelConfig {
            d,
            e: self.e,
            fw: self.fw,
            heads: self.heads,
            enc_depth: self.enc_depth,
            dec_depth: self.dec_depth,
            mask_token_mode: self.mask_token_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mask_pct: self.mask_pct,
            epsilon: self.epsilon,
            lambda: self.lambda,
            adv_steps: self.adv_steps,
            ascent_lr: self.ascent_lr,
            descent_lr: self.descent_lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: self.optimizer,
            variant: self.variant,
        }
    }

    pub fn head_config(&self, classes: usize) -> HeadConfig {
        HeadConfig {
            hidden_layers: self.head_depth,
            hidden_width: self.head_width,
            classes,
            lr: self.head_lr,
            epochs: self.head_epochs,
            batch_size: self.head_batch,
            seed: self.seed,
        }
    }

    /// Build the dataset: generate or load, split, optionally normalize.
    pub fn build_dataset(&self) -> Result<TabularDataset> {
        let ds = match &self.dataset {
            DatasetSpec::Toy { n_per_class, opts } => {
                generate_two_circles_with(*n_per_class, self.data_seed, opts)?
            }
            DatasetSpec::Csv { path, schema } => {
                let schema = match schema {
                    Some(p) => CsvSchema::load(p)?,
                    None => CsvSchema::default(),
                };
                let (ds, report) = load_csv(path, &schema, Some(self.data_seed))?;
                if report.rows_rejected > 0 {
                    eprintln!(
                        "note: rejected {} rows with missing/unparseable fields ({} kept)",
                        report.rows_rejected, report.rows_kept
                    );
                }
                if report.argmax_ties > 0 {
                    eprintln!("note: {} one-hot argmax ties resolved to lowest index", report.argmax_ties);
                }
                ds
            }
        };
        let ds = match &self.split_file {
            Some(path) => split_from_index_file(ds, path)?,
            None => split(ds, self.test_fraction, self.data_seed)?,
        };
        if self.normalize {
            normalize_fit_apply(ds)
        } else {
            Ok(ds)
        }
    }

    /// Serialize every resolved key in config-file format.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        match &self.dataset {
            DatasetSpec::Toy { n_per_class, opts } => {
                kv("dataset", "toy".into());
                kv("n-per-class", n_per_class.to_string());
                kv("circle-offset", opts.center_offset.to_string());
                kv("circle-radius", opts.radius.to_string());
                kv("circle-noise-std", opts.radial_noise_std.to_string());
                kv("circle-disk", opts.disk_sampling.to_string());
            }
            DatasetSpec::Csv { path, schema } => {
                kv("dataset", path.display().to_string());
                if let Some(s) = schema {
                    kv("schema", s.display().to_string());
                }
            }
        }
        kv("data-seed", self.data_seed.to_string());
        kv("normalize", self.normalize.to_string());
        kv("test-fraction", self.test_fraction.to_string());
        if let Some(p) = &self.split_file {
            kv("split-file", p.display().to_string());
        }
        kv("e", self.e.to_string());
        kv("fw", self.fw.to_string());
        kv("heads", self.heads.to_string());
        kv("enc-depth", self.enc_depth.to_string());
        kv("dec-depth", self.dec_depth.to_string());
        kv("mask-token-mode", self.mask_token_mode.to_string());
        kv("mask-pct", self.mask_pct.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("lambda", self.lambda.to_string());
        kv("adv-steps", self.adv_steps.to_string());
        kv("ascent-lr", self.ascent_lr.to_string());
        kv("descent-lr", self.descent_lr.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch-size", self.batch_size.to_string());
        kv("optimizer", self.optimizer.to_string());
        kv("variant", self.variant.to_string());
        kv("head-depth", self.head_depth.to_string());
        kv("head-width", self.head_width.to_string());
        kv("head-lr", self.head_lr.to_string());
        kv("head-epochs", self.head_epochs.to_string());
        kv("head-batch", self.head_batch.to_string());
        kv("mode", self.mode.to_string());
        kv("label-fraction", self.label_fraction.to_string());
        if let Some(b) = &self.baseline {
            kv("baseline", b.to_string());
        }
        kv("seed", self.seed.to_string());
        kv(
            "seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("checkpoint-interval", self.checkpoint_interval.to_string());
        out
    }
}

// ── presets ─────────────────────────────────────────────────────────────

/// Preset hyperparameters as (key, value) overrides in config-file syntax.
///
/// fmnist/cifar10/mnist/covtype/income carry the published per-dataset
/// values (model sizes, masking percentage, adversarial steps/radius and
/// the two learning rates). The toy preset is a small configuration sized
/// for the bundled two-circles generator, not a published setting.
///
/// The cifar10 row pairs e=100 with 2 heads, but the token width e+1 = 101
/// is prime, so an integral head width forces heads = 1 here.
fn preset_entries(name: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let rows: Vec<(&str, &str)> = match name {
        "toy" => vec![
            ("dataset", "toy"),
            ("n-per-class", "5000"),
            ("normalize", "false"),
            ("e", "8"),
            ("fw", "16"),
            ("heads", "1"),
            ("enc-depth", "2"),
            ("dec-depth", "1"),
            ("mask-pct", "50"),
            ("adv-steps", "2"),
            ("epsilon", "2"),
            ("ascent-lr", "1e-2"),
            ("descent-lr", "1e-3"),
            ("epochs", "100"),
        ],
        "fmnist" => vec![
            ("e", "64"),
            ("fw", "64"),
            ("heads", "1"),
            ("enc-depth", "6"),
            ("dec-depth", "1"),
            ("mask-pct", "70"),
            ("adv-steps", "2"),
            ("epsilon", "2"),
            ("ascent-lr", "1e-2"),
            ("descent-lr", "1e-5"),
        ],
        "cifar10" => vec![
            ("e", "100"),
            ("fw", "64"),
            ("heads", "1"),
            ("enc-depth", "3"),
            ("dec-depth", "3"),
            ("mask-pct", "70"),
            ("adv-steps", "3"),
            ("epsilon", "14"),
            ("ascent-lr", "1e-2"),
            ("descent-lr", "1e-4"),
        ],
        "mnist" => vec![
            ("e", "64"),
            ("fw", "64"),
            ("heads", "1"),
            ("enc-depth", "6"),
            ("dec-depth", "1"),
            ("mask-pct", "70"),
            ("adv-steps", "2"),
            ("epsilon", "12"),
            ("ascent-lr", "1e-2"),
            ("descent-lr", "1e-4"),
        ],
        "covtype" => vec![
            ("e", "100"),
            ("fw", "64"),
            ("heads", "1"),
            ("enc-depth", "1"),
            ("dec-depth", "1"),
            ("mask-pct", "50"),
            ("adv-steps", "5"),
            ("epsilon", "4"),
            ("ascent-lr", "1e-1"),
            ("descent-lr", "1e-4"),
        ],
        "income" => vec![
            ("e", "64"),
            ("fw", "64"),
            ("heads", "1"),
            ("enc-depth", "3"),
            ("dec-depth", "6"),
            ("mask-pct", "80"),
            ("adv-steps", "1"),
            ("epsilon", "6"),
            ("ascent-lr", "1e-1"),
            ("descent-lr", "1e-3"),
        ],
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected toy, fmnist, cifar10, mnist, covtype, income)"
            )))
        }
    };
    Ok(rows)
}

// ── resolution ──────────────────────────────────────────────────────────

/// Apply one config-file key to the flag set (file keys never override
/// flags that were given explicitly).
fn apply_key(args: &mut CommonArgs, key: &str, value: &str) -> Result<()> {
    fn set<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if slot.is_none() {
            let parsed = value
                .parse::<T>()
                .map_err(|e| Error::InvalidConfig(format!("bad value for '{key}': {e}")))?;
            *slot = Some(parsed);
        }
        Ok(())
    }
    match key {
        "preset" => set(&mut args.preset, key, value),
        "dataset" => set(&mut args.dataset, key, value),
        "schema" => set(&mut args.schema, key, value),
        "n-per-class" => set(&mut args.n_per_class, key, value),
        "data-seed" => set(&mut args.data_seed, key, value),
        "circle-offset" => set(&mut args.circle_offset, key, value),
        "circle-radius" => set(&mut args.circle_radius, key, value),
        "circle-noise-std" => set(&mut args.circle_noise_std, key, value),
        "circle-disk" => set(&mut args.circle_disk, key, value),
        "normalize" => set(&mut args.normalize, key, value),
        "test-fraction" => set(&mut args.test_fraction, key, value),
        "split-file" => set(&mut args.split_file, key, value),
        "e" => set(&mut args.e, key, value),
        "fw" => set(&mut args.fw, key, value),
        "heads" => set(&mut args.heads, key, value),
        "enc-depth" => set(&mut args.enc_depth, key, value),
        "dec-depth" => set(&mut args.dec_depth, key, value),
        "mask-token-mode" => set(&mut args.mask_token_mode, key, value),
        "mask-pct" => set(&mut args.mask_pct, key, value),
        "epsilon" => set(&mut args.epsilon, key, value),
        "lambda" => set(&mut args.lambda, key, value),
        "adv-steps" => set(&mut args.adv_steps, key, value),
        "ascent-lr" => set(&mut args.ascent_lr, key, value),
        "descent-lr" => set(&mut args.descent_lr, key, value),
        "epochs" => set(&mut args.epochs, key, value),
        "batch-size" => set(&mut args.batch_size, key, value),
        "optimizer" => set(&mut args.optimizer, key, value),
        "variant" => set(&mut args.variant, key, value),
        "head-depth" => set(&mut args.head_depth, key, value),
        "head-width" => set(&mut args.head_width, key, value),
        "head-lr" => set(&mut args.head_lr, key, value),
        "head-epochs" => set(&mut args.head_epochs, key, value),
        "head-batch" => set(&mut args.head_batch, key, value),
        "mode" => set(&mut args.mode, key, value),
        "label-fraction" => set(&mut args.label_fraction, key, value),
        "baseline" => set(&mut args.baseline, key, value),
        "seed" => set(&mut args.seed, key, value),
        "seeds" => {
            if args.seeds.is_none() {
                let parsed: std::result::Result<Vec<u64>, _> =
                    value.split(',').map(|s| s.trim().parse()).collect();
                args.seeds = Some(parsed.map_err(|e| {
                    Error::InvalidConfig(format!("bad value for 'seeds': {e}"))
                })?);
            }
            Ok(())
        }
        "checkpoint-interval" => set(&mut args.checkpoint_interval, key, value),
        other => Err(Error::InvalidConfig(format!("unknown config key '{other}'"))),
    }
}

fn apply_file(args: &mut CommonArgs, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{}: line {}: expected 'key = value'",
                path.display(),
                lineno + 1
            ))
        })?;
        apply_key(args, key.trim(), value.trim())?;
    }
    Ok(())
}

/// Resolve flags + config file + preset + defaults into a concrete config.
pub fn resolve(mut args: CommonArgs) -> Result<ExperimentConfig> {
    if let Some(path) = args.config.clone() {
        apply_file(&mut args, &path)?;
    }
    if let Some(preset) = args.preset.clone() {
        for (k, v) in preset_entries(&preset)? {
            apply_key(&mut args, k, v)?;
        }
    }

    let dataset = match args.dataset.as_deref() {
        Some("toy") => DatasetSpec::Toy {
            n_per_class: args.n_per_class.unwrap_or(5000),
            opts: TwoCirclesOptions {
                center_offset: args.circle_offset.unwrap_or(0.5),
                radius: args.circle_radius.unwrap_or(1.0),
                radial_noise_std: args.circle_noise_std.unwrap_or(0.0),
                disk_sampling: args.circle_disk.unwrap_or(false),
            },
        },
        Some(path) => DatasetSpec::Csv { path: PathBuf::from(path), schema: args.schema.clone() },
        None => {
            return Err(Error::InvalidConfig(
                "no dataset: pass --preset, --dataset toy, or --dataset <csv>".into(),
            ))
        }
    };
    // CSV datasets are normalized by default; the toy generator is already
    // scale-balanced by construction.
    let default_normalize = matches!(dataset, DatasetSpec::Csv { .. });

    let cfg = ExperimentConfig {
        dataset,
        data_seed: args.data_seed.unwrap_or(0),
        normalize: args.normalize.unwrap_or(default_normalize),
        test_fraction: args.test_fraction.unwrap_or(0.2),
        split_file: args.split_file.clone(),
        e: args.e.unwrap_or(64),
        fw: args.fw.unwrap_or(64),
        heads: args.heads.unwrap_or(1),
        enc_depth: args.enc_depth.unwrap_or(1),
        dec_depth: args.dec_depth.unwrap_or(1),
        mask_token_mode: args.mask_token_mode.unwrap_or(MaskTokenMode::Shared),
        mask_pct: args.mask_pct.unwrap_or(70.0),
        epsilon: args.epsilon.unwrap_or(2.0),
        lambda: args.lambda.unwrap_or(1.0),
        adv_steps: args.adv_steps.unwrap_or(2),
        ascent_lr: args.ascent_lr.unwrap_or(1e-2),
        descent_lr: args.descent_lr.unwrap_or(1e-4),
        epochs: args.epochs.unwrap_or(50),
        batch_size: args.batch_size.unwrap_or(64),
        optimizer: args.optimizer.unwrap_or(OptimizerKind::Adam),
        variant: args.variant.unwrap_or(Variant::Met),
        head_depth: args.head_depth.unwrap_or(2),
        head_width: args.head_width.unwrap_or(0),
        head_lr: args.head_lr.unwrap_or(1e-3),
        head_epochs: args.head_epochs.unwrap_or(100),
        head_batch: args.head_batch.unwrap_or(128),
        mode: args.mode.unwrap_or(RepresentationMode::Concat),
        label_fraction: args.label_fraction.unwrap_or(1.0),
        baseline: args.baseline,
        seed: args.seed.unwrap_or(0),
        seeds: args.seeds.clone().unwrap_or_else(|| vec![args.seed.unwrap_or(0)]),
        checkpoint_interval: args.checkpoint_interval.unwrap_or(0),
    };
    cfg.train_config().validate()?;
    if !(0.0 < cfg.test_fraction && cfg.test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test-fraction must be in (0, 1)".into()));
    }
    if !(0.0 < cfg.label_fraction && cfg.label_fraction <= 1.0) {
        return Err(Error::InvalidConfig("label-fraction must be in (0, 1]".into()));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_resolution_and_flag_precedence() {
        let mut args = CommonArgs { preset: Some("toy".into()), ..Default::default() };
        args.epochs = Some(7); // flag beats preset
        let cfg = resolve(args).unwrap();
        assert_eq!(cfg.e, 8);
        assert_eq!(cfg.fw, 16);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.mask_pct, 50.0);
        assert!(!cfg.normalize);
        assert!(matches!(cfg.dataset, DatasetSpec::Toy { n_per_class: 5000, .. }));
    }

    #[test]
    fn covtype_preset_matches_published_row() {
        let args = CommonArgs {
            preset: Some("covtype".into()),
            dataset: Some("data.csv".into()),
            ..Default::default()
        };
        let cfg = resolve(args).unwrap();
        assert_eq!((cfg.e, cfg.fw, cfg.heads), (100, 64, 1));
        assert_eq!((cfg.enc_depth, cfg.dec_depth), (1, 1));
        assert_eq!(cfg.mask_pct, 50.0);
        assert_eq!(cfg.adv_steps, 5);
        assert_eq!(cfg.epsilon, 4.0);
        assert_eq!(cfg.ascent_lr, 1e-1);
        assert_eq!(cfg.descent_lr, 1e-4);
        assert!(cfg.normalize, "csv datasets normalize by default");
    }

    #[test]
    fn resolved_roundtrip_is_stable() {
        let args = CommonArgs { preset: Some("toy".into()), seed: Some(9), ..Default::default() };
        let cfg = resolve(args).unwrap();
        let text = cfg.to_key_value();
        // Feed the resolved text back through a config file.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resolved.txt");
        std::fs::write(&path, &text).unwrap();
        let again = resolve(CommonArgs { config: Some(path), ..Default::default() }).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_key_value());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "bogus = 1\n").unwrap();
        let err = resolve(CommonArgs {
            config: Some(path),
            dataset: Some("toy".into()),
            ..Default::default()
        });
        assert!(err.is_err());
        assert!(resolve(CommonArgs::default()).is_err(), "dataset required");
    }
}
