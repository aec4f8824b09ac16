//! Downstream evaluation of pretrained representations.
//!
//! Inference never masks: the encoder sees all `d` tokens and yields one
//! `e+1`-wide vector per coordinate. The tabular-level representation is
//! either the concatenation of all per-coordinate vectors (`d*(e+1)` dims)
//! or their average (`e+1` dims). A small MLP head is trained on frozen
//! representations with cross-entropy; accuracy on a held-out split scores
//! the representation quality.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::Model;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;
use crate::trainer::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationMode {
    /// Concatenate all d per-coordinate vectors: `d * (e+1)` dims.
    Concat,
    /// Average them: `e+1` dims.
    Average,
}

impl std::fmt::Display for RepresentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RepresentationMode::Concat => "concat",
            RepresentationMode::Average => "average",
        })
    }
}

impl std::str::FromStr for RepresentationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(RepresentationMode::Concat),
            "average" => Ok(RepresentationMode::Average),
            other => Err(Error::InvalidConfig(format!("unknown representation mode '{other}'"))),
        }
    }
}

/// Representation width for a model under a mode.
pub fn representation_dim(model: &Model, mode: RepresentationMode) -> usize {
    match mode {
        RepresentationMode::Concat => model.config.d * model.config.width(),
        RepresentationMode::Average => model.config.width(),
    }
}

/// Extract representations for a batch `[n, d]` -> `[n, m]`. Runs in chunks
/// so arbitrarily many rows fit in memory.
pub fn representation_matrix(
    model: &Model,
    xs: &Tensor,
    mode: RepresentationMode,
) -> Result<Tensor> {
    if xs.rank() != 2 || xs.shape()[1] != model.config.d {
        return Err(Error::shape(
            "represent",
            format!("expected [n, {}], got {:?}", model.config.d, xs.shape()),
        ));
    }
    let n = xs.shape()[0];
    let d = model.config.d;
    let w = model.config.width();
    let m = representation_dim(model, mode);
    let mut out = Vec::with_capacity(n * m);
    const CHUNK: usize = 512;
    for start in (0..n).step_by(CHUNK) {
        let rows = CHUNK.min(n - start);
        let block = Tensor::new(
            vec![rows, d],
            xs.data()[start * d..(start + rows) * d].to_vec(),
        )?;
        let enc = model.representations(&block)?; // [rows, d, w]
        match mode {
            RepresentationMode::Concat => out.extend_from_slice(enc.data()),
            RepresentationMode::Average => {
                for b in 0..rows {
                    let base = b * d * w;
                    for col in 0..w {
                        let mut acc = 0.0;
                        for j in 0..d {
                            acc += enc.data()[base + j * w + col];
                        }
                        out.push(acc / d as f64);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Single-example representation.
pub fn represent(model: &Model, x: &[f64], mode: RepresentationMode) -> Result<Vec<f64>> {
    let xs = Tensor::new(vec![1, x.len()], x.to_vec())?;
    Ok(representation_matrix(model, &xs, mode)?.into_data())
}

// ── MLP head ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Hidden-layer count; 0 is multinomial logistic regression.
    pub hidden_layers: usize,
    /// 0 selects `min(256, input_dim)`.
    pub hidden_width: usize,
    pub classes: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl HeadConfig {
    pub fn new(classes: usize) -> Self {
        HeadConfig {
            hidden_layers: 2,
            hidden_width: 0,
            classes,
            lr: 1e-3,
            epochs: 100,
            batch_size: 128,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig("head needs at least 2 classes".into()));
        }
        if self.batch_size == 0 || self.lr <= 0.0 {
            return Err(Error::InvalidConfig("bad head training hyperparameters".into()));
        }
        Ok(())
    }

    fn width_for(&self, input_dim: usize) -> usize {
        if self.hidden_width > 0 {
            self.hidden_width
        } else {
            input_dim.min(256).max(1)
        }
    }
}

/// ReLU MLP: `hidden_layers` hidden layers plus a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub layers: Vec<(Tensor, Tensor)>, // (weight [in, out], bias [out])
}

impl HeadParams {
    pub fn init(input_dim: usize, cfg: &HeadConfig) -> Result<HeadParams> {
        let mut rng = stream(cfg.seed, Stream::Head);
        Self::init_with_rng(input_dim, cfg, &mut rng)
    }

    fn init_with_rng(input_dim: usize, cfg: &HeadConfig, rng: &mut impl Rng) -> Result<HeadParams> {
        cfg.validate()?;
        let width = cfg.width_for(input_dim);
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(width).take(cfg.hidden_layers));
        dims.push(cfg.classes);
        let mut layers = Vec::new();
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let std = (1.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            layers.push((Tensor::new(vec![fan_in, fan_out], w)?, Tensor::zeros(vec![fan_out])));
        }
        Ok(HeadParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("head has layers").0.shape()[1]
    }

    /// Forward logits without gradient tracking.
    pub fn logits(&self, reps: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let mut x = g.constant(reps.clone())?;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wid = g.constant(w.clone())?;
            let bid = g.constant(b.clone())?;
            x = g.matmul(x, wid)?;
            x = g.add(x, bid)?;
            if i + 1 < self.layers.len() {
                x = g.relu(x)?;
            }
        }
        Ok(g.value(x).clone())
    }
}

/// Train the head on frozen representations by minibatch Adam on mean
/// cross-entropy. Returns the trained head with a per-epoch train-accuracy
/// trace.
pub fn train_head(
    reps: &Tensor,
    labels: &[usize],
    cfg: &HeadConfig,
) -> Result<(HeadParams, Vec<f64>)> {
    cfg.validate()?;
    if reps.rank() != 2 || reps.shape()[0] != labels.len() {
        return Err(Error::shape(
            "train-head",
            format!("{:?} representations vs {} labels", reps.shape(), labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= cfg.classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {} classes",
            cfg.classes
        )));
    }
    let n = labels.len();
    let m = reps.shape()[1];
    // One stream serves init then shuffling, consumed sequentially.
    let mut shuffle_rng = stream(cfg.seed, Stream::Head);
    let mut head = HeadParams::init_with_rng(m, cfg, &mut shuffle_rng)?;
    let mut opt = Optimizer::new(OptimizerKind::Adam, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut bx = Vec::with_capacity(chunk.len() * m);
            let mut onehot = vec![0.0; chunk.len() * cfg.classes];
            for (bi, &i) in chunk.iter().enumerate() {
                bx.extend_from_slice(reps.row(i));
                onehot[bi * cfg.classes + labels[i]] = 1.0;
            }
            let mut g = Graph::new();
            let x = g.constant(Tensor::new(vec![chunk.len(), m], bx)?)?;
            let t = g.constant(Tensor::new(vec![chunk.len(), cfg.classes], onehot)?)?;
            let mut ids = Vec::new();
            let mut cur = x;
            let depth = head.layers.len();
            for (i, (w, b)) in head.layers.iter().enumerate() {
                let wid = g.leaf(w.clone(), true)?;
                let bid = g.leaf(b.clone(), true)?;
                ids.push(wid);
                ids.push(bid);
                cur = g.matmul(cur, wid)?;
                cur = g.add(cur, bid)?;
                if i + 1 < depth {
                    cur = g.relu(cur)?;
                }
            }
            let loss = g.cross_entropy_mean(cur, t)?;
            let mut grads = g.backward(loss)?;
            let collected: Vec<Tensor> =
                ids.iter().map(|&id| grads.take(id).expect("head params need grads")).collect();
            let mut tensors: Vec<&mut Tensor> = Vec::with_capacity(collected.len());
            for (w, b) in head.layers.iter_mut() {
                tensors.push(w);
                tensors.push(b);
            }
            opt.apply(tensors, &collected);
        }
        let logits = head.logits(reps)?;
        trace.push(accuracy_from_logits(&logits, labels)?);
    }
    Ok((head, trace))
}

/// Fraction of argmax-correct predictions; ties go to the lowest class.
pub fn accuracy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape("accuracy", "logit/label mismatch"));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    let k = logits.shape()[1];
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Evaluate a trained head on raw inputs through a frozen encoder.
pub fn evaluate(
    model: &Model,
    head: &HeadParams,
    xs: &Tensor,
    labels: &[usize],
    mode: RepresentationMode,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let reps = representation_matrix(model, xs, mode)?;
    if reps.shape()[1] != head.input_dim() {
        return Err(Error::shape(
            "evaluate",
            format!("representation dim {} vs head input {}", reps.shape()[1], head.input_dim()),
        ));
    }
    let logits = head.logits(&reps)?;
    accuracy_from_logits(&logits, labels)
}

// ── label-fraction subsampling ──────────────────────────────────────────

/// Class-stratified subset of `round(fraction * n)` training rows,
/// deterministic per seed and nested across fractions (a smaller fraction's
/// subset is contained in a larger one's for the same seed).
///
/// Per-class quotas follow a highest-averages allocation, which never
/// removes an earlier pick as the total grows; each class contributes its
/// first quota rows in a seeded per-class order.
pub fn label_fraction_subsample(
    train_rows: &[usize],
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(0.0 < fraction && fraction <= 1.0) {
        return Err(Error::InvalidConfig("label fraction must be in (0, 1]".into()));
    }
    if train_rows.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if fraction == 1.0 {
        return Ok(train_rows.to_vec());
    }
    let k = train_rows.iter().map(|&r| labels[r] + 1).max().unwrap_or(1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &r in train_rows {
        per_class[labels[r]].push(r);
    }
    let mut rng = stream(seed, Stream::Data);
    for members in per_class.iter_mut() {
        members.shuffle(&mut rng);
    }

    let total = (fraction * train_rows.len() as f64).round() as usize;
    let total = total.max(1);
    // Sainte-Laguë style quotas: repeatedly give the next slot to the class
    // with the largest n_c / (2 a_c + 1), lowest class on ties.
    let mut alloc = vec![0usize; k];
    for _ in 0..total {
        let mut best: Option<usize> = None;
        let mut best_score = f64::NEG_INFINITY;
        for (c, members) in per_class.iter().enumerate() {
            if members.is_empty() || alloc[c] >= members.len() {
                continue;
            }
            let score = members.len() as f64 / (2 * alloc[c] + 1) as f64;
            if score > best_score {
                best_score = score;
                best = Some(c);
            }
        }
        match best {
            Some(c) => alloc[c] += 1,
            None => break,
        }
    }
    for (c, members) in per_class.iter().enumerate() {
        if !members.is_empty() && alloc[c] == 0 {
            return Err(Error::InvalidInput(format!(
                "label fraction {fraction} leaves class {c} without examples"
            )));
        }
    }
    let mut out = Vec::with_capacity(total);
    for (c, members) in per_class.iter().enumerate() {
        out.extend_from_slice(&members[..alloc[c]]);
    }
    out.sort_unstable();
    Ok(out)
}

// ── representation geometry ─────────────────────────────────────────────

/// Euclidean distance between per-class mean representations; the mean over
/// all class pairs when more than two classes are present.
pub fn mean_interclass_distance(reps: &Tensor, labels: &[usize]) -> Result<f64> {
    if reps.rank() != 2 || reps.shape()[0] != labels.len() {
        return Err(Error::shape("interclass-distance", "rep/label mismatch"));
    }
    let m = reps.shape()[1];
    let k = labels.iter().map(|&y| y + 1).max().unwrap_or(0);
    let mut sums = vec![vec![0.0f64; m]; k];
    let mut counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (acc, v) in sums[y].iter_mut().zip(reps.row(i)) {
            *acc += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    if means.len() < 2 {
        return Err(Error::InvalidInput("inter-class distance needs at least 2 classes".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let d2: f64 =
                means[i].iter().zip(&means[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Export representations as CSV: header `rep_0..rep_{m-1}` plus an optional
/// label column.
pub fn export_representations_csv(
    path: &Path,
    reps: &Tensor,
    labels: Option<&[usize]>,
) -> Result<()> {
    let m = reps.shape()[1];
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (0..m).map(|i| format!("rep_{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..reps.shape()[0] {
        let mut line =
            reps.row(i).iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",");
        if let Some(ys) = labels {
            line.push_str(&format!(",{}", ys[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
