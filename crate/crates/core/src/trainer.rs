//! Masked-reconstruction pretraining with an adversarial branch.
//!
//! Per example and step: sample a fresh mask plan, reconstruct the clean
//! input from its unmasked coordinates (standard loss), then search a
//! perturbation `h` inside an L2 ball of radius `epsilon` that maximizes the
//! reconstruction loss of the perturbed input (adversarial loss), and
//! descend on `standard + lambda * adversarial`. The reconstruction target
//! is always the clean input; model parameters are frozen while `h` is
//! found.
//!
//! The ascent initializes `h` from a standard Gaussian divided by `sqrt(d)`
//! and takes normalized gradient steps of size `ascent_lr`, projecting back
//! onto the ball after every step. Only unmasked coordinates of `h` enter
//! the model, so masked coordinates keep their initial values (their
//! gradient is identically zero).

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::backbone::{Model, ModelConfig};
use crate::data::TabularDataset;
use crate::downstream::{mean_interclass_distance, representation_matrix, RepresentationMode};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{stream, Stream};
use crate::tensor::{l2_norm, Tensor};

/// Gradient norms under this threshold skip the normalized ascent step.
pub const DEGENERATE_GRAD_THRESHOLD: f64 = 1e-12;

// ── mask plans ──────────────────────────────────────────────────────────

/// The set of masked coordinate indices for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    d: usize,
    masked: Vec<usize>, // sorted, unique, all < d, len < d
}

impl MaskPlan {
    pub fn new(d: usize, mut masked: Vec<usize>) -> Result<Self> {
        masked.sort_unstable();
        if masked.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("mask plan has duplicate indices".into()));
        }
        if masked.last().is_some_and(|&m| m >= d) {
            return Err(Error::InvalidInput("mask index out of range".into()));
        }
        if masked.len() >= d {
            return Err(Error::InvalidInput("mask plan may not mask every coordinate".into()));
        }
        Ok(MaskPlan { d, masked })
    }

    /// No coordinates masked (inference mode).
    pub fn empty(d: usize) -> Self {
        MaskPlan { d, masked: Vec::new() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    pub fn unmasked(&self) -> Vec<usize> {
        let mut is_masked = vec![false; self.d];
        for &j in &self.masked {
            is_masked[j] = true;
        }
        (0..self.d).filter(|&j| !is_masked[j]).collect()
    }
}

/// Uniform draw of `round(mask_pct/100 * d)` coordinates without
/// replacement. Errors when the rounded count is 0 or `d`.
pub fn sample_mask_plan(d: usize, mask_pct: f64, rng: &mut impl Rng) -> Result<MaskPlan> {
    if !(0.0 < mask_pct && mask_pct < 100.0) {
        return Err(Error::InvalidConfig(format!("mask_pct must be in (0, 100), got {mask_pct}")));
    }
    let count = (mask_pct / 100.0 * d as f64).round() as usize;
    if count == 0 || count == d {
        return Err(Error::InvalidInput(format!(
            "mask_pct {mask_pct}% of d={d} rounds to {count} masked coordinates"
        )));
    }
    let picked = rand::seq::index::sample(rng, d, count).into_vec();
    MaskPlan::new(d, picked)
}

// ── losses & projection ─────────────────────────────────────────────────

/// Sum of squared errors over all coordinates, masked and unmasked alike.
pub fn reconstruction_loss(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::shape(
            "reconstruction-loss",
            format!("{} vs {}", x.len(), xhat.len()),
        ));
    }
    let loss: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    if !loss.is_finite() {
        return Err(Error::non_finite("reconstruction-loss"));
    }
    Ok(loss)
}

/// Project onto the L2 ball of radius `eps`: vectors inside are returned
/// untouched, larger ones are rescaled onto the sphere. Exactly idempotent:
/// the output always satisfies `norm <= eps`, so a second call is the
/// identity bit for bit.
pub fn project_l2(h: &mut [f64], eps: f64) {
    assert!(eps > 0.0, "projection radius must be positive");
    loop {
        let norm = l2_norm(h);
        if norm <= eps || norm == 0.0 {
            return;
        }
        let s = eps / norm;
        for v in h.iter_mut() {
            *v *= s;
        }
        // Rescaling can land a hair above eps in floating point; repeat
        // until the invariant holds so idempotence is exact.
    }
}

// ── configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Training variant: full method or masking-only ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Met,
    MetS,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Met => "met",
            Variant::MetS => "met-s",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "met" => Ok(Variant::Met),
            "met-s" => Ok(Variant::MetS),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Masking percentage m; each example masks `round(m/100 * d)` coords.
    pub mask_pct: f64,
    /// L2 projection radius for the adversarial perturbation.
    pub epsilon: f64,
    /// Weight of the adversarial reconstruction loss.
    pub lambda: f64,
    /// Ascent iterations per example.
    pub adv_steps: usize,
    /// Normalized-gradient ascent step size.
    pub ascent_lr: f64,
    /// Descent learning rate for the model parameters.
    pub descent_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub variant: Variant,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.mask_pct && self.mask_pct < 100.0) {
            return Err(Error::InvalidConfig("mask_pct must be in (0, 100)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.ascent_lr <= 0.0 || self.descent_lr <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        Ok(())
    }
}

// ── optimizer ───────────────────────────────────────────────────────────

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// SGD or Adam over the canonical flat parameter list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn apply(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.numel()]).collect();
                    self.v = grads.iter().map(|g| vec![0.0; g.numel()]).collect();
                }
                self.step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (ms, vs) = (&mut self.m[i], &mut self.v[i]);
                    for ((pv, gv), (mv, vv)) in
                        p.data_mut().iter_mut().zip(g.data()).zip(ms.iter_mut().zip(vs.iter_mut()))
                    {
                        *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
                        *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

// ── adversarial ascent ──────────────────────────────────────────────────

/// An adversarial perturbation for one example.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub h: Vec<f64>,
    /// Ascent iterations skipped because the gradient norm was degenerate.
    pub degenerate_events: usize,
}

/// Loss subgraph: reconstruct `input` under `plans` and compare against the
/// clean `target`. Returns the scalar total plus the per-element squared
/// errors (for per-example readouts).
fn masked_sse(
    g: &mut Graph,
    fp: &crate::backbone::ForwardPass<'_>,
    input: NodeId,
    target: NodeId,
    plans: &[MaskPlan],
) -> Result<(NodeId, NodeId)> {
    let xhat = fp.reconstruct(g, input, plans)?;
    let diff = g.sub(xhat, target)?;
    let sq = g.square(diff)?;
    let total = g.sum(sq)?;
    Ok((total, sq))
}

/// Batched ascent. `xs` is `[batch, d]`; one plan per example. Model
/// parameters are read-only here. Gaussian init draws happen per example in
/// batch order (d draws each) on the supplied rng.
pub fn adversarial_perturbation_batch(
    model: &Model,
    xs: &Tensor,
    plans: &[MaskPlan],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(Tensor, usize)> {
    let b = plans.len();
    let d = model.config.d;
    if cfg.adv_steps == 0 {
        return Err(Error::InvalidInput("adversarial ascent needs adv_steps >= 1".into()));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut h: Vec<f64> = (0..b * d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut degenerate = 0usize;

    for _ in 0..cfg.adv_steps {
        let mut g = Graph::new();
        let fp = model.forward_pass(&mut g, false)?;
        let x = g.constant(xs.clone())?;
        let hid = g.leaf(Tensor::new(vec![b, d], h.clone())?, true)?;
        let perturbed = g.add(x, hid)?;
        let (total, _) = masked_sse(&mut g, &fp, perturbed, x, plans)?;
        let grads = g.backward(total)?;
        let gh = grads.get(hid).expect("h is a requires-grad leaf");

        for bi in 0..b {
            let grow = &gh.data()[bi * d..(bi + 1) * d];
            let hrow = &mut h[bi * d..(bi + 1) * d];
            let gnorm = l2_norm(grow);
            if gnorm < DEGENERATE_GRAD_THRESHOLD {
                degenerate += 1;
            } else {
                let step = cfg.ascent_lr / gnorm;
                for (hv, gv) in hrow.iter_mut().zip(grow) {
                    *hv += step * gv;
                }
            }
            project_l2(hrow, cfg.epsilon);
        }
    }
    Ok((Tensor::new(vec![b, d], h)?, degenerate))
}

/// Single-example ascent.
pub fn adversarial_perturbation(
    model: &Model,
    x: &[f64],
    plan: &MaskPlan,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Perturbation> {
    let xs = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let (h, degenerate_events) =
        adversarial_perturbation_batch(model, &xs, std::slice::from_ref(plan), cfg, rng)?;
    Ok(Perturbation { h: h.into_data(), degenerate_events })
}

/// Per-example reconstruction losses of `xs` under `plans` (forward only).
pub fn per_example_losses(model: &Model, xs: &Tensor, plans: &[MaskPlan]) -> Result<Vec<f64>> {
    per_example_losses_with_input(model, xs, xs, plans)
}

/// Per-example losses where the model sees `input` but the target is the
/// clean `xs` (adversarial evaluation).
pub fn per_example_losses_with_input(
    model: &Model,
    input: &Tensor,
    xs: &Tensor,
    plans: &[MaskPlan],
) -> Result<Vec<f64>> {
    let xhat = model.reconstruct_values(input, plans)?;
    let mut out = Vec::with_capacity(plans.len());
    for i in 0..plans.len() {
        out.push(reconstruction_loss(xs.row(i), xhat.row(i))?);
    }
    Ok(out)
}

// ── training steps ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default)]
pub struct StepMetrics {
    /// Mean standard reconstruction loss over the batch.
    pub loss_std: f64,
    /// Mean adversarial reconstruction loss (0 for the masking-only variant).
    pub loss_adv: f64,
    /// Mean total loss: `loss_std + lambda * loss_adv`.
    pub loss_total: f64,
    /// Global L2 norm of the parameter gradient.
    pub grad_norm: f64,
    pub degenerate_events: usize,
}

/// One optimizer update on a batch: sample fresh masks, compute the standard
/// loss, run the ascent (full variant only), descend on the mean total loss.
pub fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    xs: &Tensor,
    cfg: &TrainConfig,
    mask_rng: &mut ChaCha8Rng,
    adv_rng: &mut ChaCha8Rng,
) -> Result<StepMetrics> {
    let b = xs.shape()[0];
    if b == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let d = model.config.d;
    let plans: Vec<MaskPlan> =
        (0..b).map(|_| sample_mask_plan(d, cfg.mask_pct, mask_rng)).collect::<Result<_>>()?;

    let run_adv = cfg.variant == Variant::Met && cfg.adv_steps > 0;
    let h = if run_adv {
        Some(adversarial_perturbation_batch(model, xs, &plans, cfg, adv_rng)?)
    } else {
        None
    };

    // Final graph: both branches share one parameter binding so gradients
    // accumulate across them.
    let mut g = Graph::new();
    let fp = model.forward_pass(&mut g, true)?;
    let x = g.constant(xs.clone())?;
    let (sum_std, _) = masked_sse(&mut g, &fp, x, x, &plans)?;

    let (root, loss_std, loss_adv, degenerate) = if let Some((h, degenerate)) = &h {
        let mut perturbed = xs.clone();
        for (pv, hv) in perturbed.data_mut().iter_mut().zip(h.data()) {
            *pv += hv;
        }
        let adv_in = g.constant(perturbed)?;
        let (sum_adv, _) = masked_sse(&mut g, &fp, adv_in, x, &plans)?;
        let weighted = g.scale(sum_adv, cfg.lambda)?;
        let total = g.add(sum_std, weighted)?;
        let root = g.scale(total, 1.0 / b as f64)?;
        let ls = g.value(sum_std).item()? / b as f64;
        let la = g.value(sum_adv).item()? / b as f64;
        (root, ls, la, *degenerate)
    } else {
        let root = g.scale(sum_std, 1.0 / b as f64)?;
        let ls = g.value(sum_std).item()? / b as f64;
        (root, ls, 0.0, 0)
    };

    let mut grads = g.backward(root)?;
    let ids = fp.bound.ids().to_vec();
    drop(fp);
    let collected: Vec<Tensor> = ids
        .iter()
        .map(|&id| grads.take(id).expect("bound parameters require gradients"))
        .collect();
    let grad_norm =
        collected.iter().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    opt.apply(model.params.tensors_mut(), &collected);

    let loss_total = if run_adv { loss_std + cfg.lambda * loss_adv } else { loss_std };
    Ok(StepMetrics { loss_std, loss_adv, loss_total, grad_norm, degenerate_events: degenerate })
}

// ── pretraining loop ────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_std: f64,
    pub loss_adv: f64,
    pub loss_total: f64,
    /// Not written into deterministic metrics files.
    pub wall_secs: f64,
    pub interclass_distance: Option<f64>,
    pub degenerate_events: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PretrainOptions {
    /// Directory for periodic checkpoints and resume state; none = in-memory only.
    pub checkpoint_dir: Option<PathBuf>,
    /// Write a checkpoint every this many epochs (0 = final only).
    pub checkpoint_interval: usize,
    /// Track mean inter-class representation distance per epoch (needs labels).
    pub monitor_interclass: bool,
    /// Continue from `checkpoint_dir` state if present.
    pub resume: bool,
}

pub struct PretrainOutput {
    pub model: Model,
    /// One entry per trained epoch (resumed runs report only new epochs).
    pub metrics: Vec<EpochMetrics>,
    /// Distance at initialization followed by one value per epoch, when
    /// monitoring is on: `trace[k]` is the state after k epochs.
    pub distance_trace: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TrainState {
    epochs_done: usize,
    optimizer: Optimizer,
    mask_pos: u128,
    adv_pos: u128,
    data_pos: u128,
    distance_trace: Option<Vec<f64>>,
}

const LATEST_CHECKPOINT: &str = "checkpoint_latest.json";
const TRAIN_STATE: &str = "train_state.json";

/// N epochs of shuffled mini-batch training over the train split (all rows
/// when the dataset has no split). Labels, when present and requested, are
/// used only for distance monitoring — never for training.
pub fn pretrain(
    ds: &TabularDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<PretrainOutput> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.d != ds.n_cols() {
        return Err(Error::InvalidConfig(format!(
            "model expects d={} coordinates, dataset has {}",
            model_cfg.d,
            ds.n_cols()
        )));
    }

    let rows = ds.train_indices();
    if rows.is_empty() {
        return Err(Error::Data("no training rows".into()));
    }
    let labels = ds.labels();
    let monitor = opts.monitor_interclass && labels.is_some();

    let mut mask_rng = stream(cfg.seed, Stream::Mask);
    let mut adv_rng = stream(cfg.seed, Stream::Adversarial);
    let mut data_rng = stream(cfg.seed, Stream::Data);

    let mut model;
    let mut opt;
    let mut start_epoch = 0usize;
    let mut distance_trace: Option<Vec<f64>> = None;

    let resume_paths = opts.checkpoint_dir.as_ref().map(|d| (d.join(LATEST_CHECKPOINT), d.join(TRAIN_STATE)));
    if opts.resume && resume_paths.as_ref().is_some_and(|(c, s)| c.exists() && s.exists()) {
        let (ckpt, state_path) = resume_paths.as_ref().unwrap();
        model = Model::load(ckpt)?;
        let state: TrainState = serde_json::from_str(&std::fs::read_to_string(state_path)?)?;
        opt = state.optimizer;
        start_epoch = state.epochs_done;
        mask_rng.set_word_pos(state.mask_pos);
        adv_rng.set_word_pos(state.adv_pos);
        data_rng.set_word_pos(state.data_pos);
        distance_trace = state.distance_trace;
    } else {
        model = Model::init(model_cfg.clone(), cfg.seed)?;
        opt = Optimizer::new(cfg.optimizer, cfg.descent_lr);
        if monitor {
            distance_trace = Some(vec![measure_distance(&model, ds, &rows)?]);
        }
    }

    let mut metrics = Vec::new();
    for epoch in start_epoch + 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut data_rng);

        let mut sums = (0.0, 0.0, 0.0); // std, adv, total (example-weighted)
        let mut degenerate = 0usize;
        for (step_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_rows: Vec<usize> = chunk.iter().map(|&i| rows[i]).collect();
            let xs = ds.gather_rows(&batch_rows)?;
            let step = train_step(&mut model, &mut opt, &xs, cfg, &mut mask_rng, &mut adv_rng)
                .map_err(|e| annotate_step_error(e, epoch, step_idx))?;
            let w = chunk.len() as f64;
            sums.0 += step.loss_std * w;
            sums.1 += step.loss_adv * w;
            sums.2 += step.loss_total * w;
            degenerate += step.degenerate_events;
        }
        let n = rows.len() as f64;
        let dist = if monitor {
            let v = measure_distance(&model, ds, &rows)?;
            distance_trace.as_mut().expect("trace initialized with monitoring").push(v);
            Some(v)
        } else {
            None
        };
        metrics.push(EpochMetrics {
            epoch,
            loss_std: sums.0 / n,
            loss_adv: sums.1 / n,
            loss_total: sums.2 / n,
            wall_secs: t0.elapsed().as_secs_f64(),
            interclass_distance: dist,
            degenerate_events: degenerate,
        });

        if let Some(dir) = &opts.checkpoint_dir {
            let due = opts.checkpoint_interval > 0 && epoch % opts.checkpoint_interval == 0;
            if due || epoch == cfg.epochs {
                write_state(dir, &model, &opt, epoch, &mask_rng, &adv_rng, &data_rng, &distance_trace)?;
            }
        }
    }

    // epochs = 0 (or an already-complete resume): persist the untouched model.
    if let Some(dir) = &opts.checkpoint_dir {
        if cfg.epochs == 0 || start_epoch >= cfg.epochs {
            write_state(dir, &model, &opt, start_epoch, &mask_rng, &adv_rng, &data_rng, &distance_trace)?;
        }
    }

    Ok(PretrainOutput { model, metrics, distance_trace })
}

#[allow(clippy::too_many_arguments)]
fn write_state(
    dir: &Path,
    model: &Model,
    opt: &Optimizer,
    epochs_done: usize,
    mask_rng: &ChaCha8Rng,
    adv_rng: &ChaCha8Rng,
    data_rng: &ChaCha8Rng,
    distance_trace: &Option<Vec<f64>>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    model.save(&dir.join(LATEST_CHECKPOINT))?;
    let state = TrainState {
        epochs_done,
        optimizer: opt.clone(),
        mask_pos: mask_rng.get_word_pos(),
        adv_pos: adv_rng.get_word_pos(),
        data_pos: data_rng.get_word_pos(),
        distance_trace: distance_trace.clone(),
    };
    std::fs::write(dir.join(TRAIN_STATE), serde_json::to_string(&state)?)?;
    Ok(())
}

fn annotate_step_error(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite { op, context } => {
            Error::NonFinite { op, context: format!("{context} (epoch {epoch}, step {step})") }
        }
        other => other,
    }
}

fn measure_distance(model: &Model, ds: &TabularDataset, rows: &[usize]) -> Result<f64> {
    let labels = ds.labels().expect("distance monitoring requires labels");
    let xs = ds.gather_rows(rows)?;
    let reps = representation_matrix(model, &xs, RepresentationMode::Concat)?;
    let ys: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    mean_interclass_distance(&reps, &ys)
}
