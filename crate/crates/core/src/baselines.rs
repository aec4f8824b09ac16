//! Data-independent reference featurizers.
//!
//! - Random Gaussian featurization: a fixed linear map `phi(x) = R x` with
//!   i.i.d. `N(0, 1/d)` entries, the classic random-features embedding.
//!   Linear as specified; an optional cosine variant is available behind a
//!   constructor flag.
//! - A randomly initialized, frozen encoder: identical initialization to a
//!   trained model, identical downstream flow, zero pretraining.
//! - A raw-input MLP: the downstream head trained directly on the features.
//!
//! None of these ever receive gradient updates to their featurizers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::backbone::{Model, ModelConfig};
use crate::data::TabularDataset;
use crate::downstream::{accuracy_from_logits, train_head, HeadConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

/// Fixed random linear featurizer `phi(x) = R x`, `R: [m, d]`.
#[derive(Debug, Clone)]
pub struct RandomFeatureMap {
    r: Tensor,
    /// Cosine variant: `sqrt(2/m) * cos(Rx + b)` with `b ~ U[0, 2pi)`.
    bias: Option<Vec<f64>>,
}

impl RandomFeatureMap {
    /// Entries i.i.d. `N(0, 1/d)` so feature magnitudes are input-scale
    /// invariant: `E[|phi(x)|^2] = (m/d) |x|^2`.
    pub fn new(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidConfig("feature map needs m, d >= 1".into()));
        }
        let mut rng = stream(seed, Stream::Baseline);
        let std = (1.0 / d as f64).sqrt();
        let data: Vec<f64> =
            (0..m * d).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(RandomFeatureMap { r: Tensor::new(vec![m, d], data)?, bias: None })
    }

    /// Cosine variant (off by default in every experiment path).
    pub fn new_cosine(m: usize, d: usize, seed: u64) -> Result<Self> {
        let mut map = Self::new(m, d, seed)?;
        let mut rng = stream(seed, Stream::Baseline);
        // Separate draw sequence from the matrix: skip the matrix draws.
        for _ in 0..m * d {
            let _: f64 = rng.sample(StandardNormal);
        }
        map.bias = Some((0..m).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect());
        Ok(map)
    }

    /// Test fixture: use an explicit matrix.
    pub fn from_matrix(r: Tensor) -> Result<Self> {
        if r.rank() != 2 {
            return Err(Error::shape("random-feature-map", "R must be 2-D"));
        }
        Ok(RandomFeatureMap { r, bias: None })
    }

    pub fn output_dim(&self) -> usize {
        self.r.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.r.shape()[1]
    }

    /// `phi(x)`: exact matrix-vector product (cosine applied only in the
    /// cosine variant).
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, d) = (self.output_dim(), self.input_dim());
        if x.len() != d {
            return Err(Error::shape("rfg-features", format!("{} vs d={d}", x.len())));
        }
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            out.push(self.r.row(i).iter().zip(x).map(|(r, v)| r * v).sum::<f64>());
        }
        if let Some(bias) = &self.bias {
            let scale = (2.0 / m as f64).sqrt();
            for (o, b) in out.iter_mut().zip(bias) {
                *o = scale * (*o + b).cos();
            }
        }
        Ok(out)
    }

    /// Row-wise featurization of a matrix `[n, d] -> [n, m]`.
    pub fn features_matrix(&self, xs: &Tensor) -> Result<Tensor> {
        if xs.rank() != 2 {
            return Err(Error::shape("rfg-features", "expected [n, d]"));
        }
        let n = xs.shape()[0];
        let mut out = Vec::with_capacity(n * self.output_dim());
        for i in 0..n {
            out.extend(self.features(xs.row(i))?);
        }
        Tensor::new(vec![n, self.output_dim()], out)
    }
}

/// A randomly initialized, never-trained model. Initialization is identical
/// to the trained path, so representation shapes match exactly; downstream
/// code treats it like any other checkpoint and never updates it.
pub fn met_r_checkpoint(config: ModelConfig, seed: u64) -> Result<Model> {
    Model::init(config, seed)
}

/// Train the downstream head directly on raw features (identity
/// representations) and return (train_accuracy, test_accuracy).
pub fn raw_mlp_baseline(ds: &TabularDataset, head_cfg: &HeadConfig) -> Result<(f64, f64)> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::InvalidInput("raw MLP baseline needs labels".into()))?;
    let train_rows = ds.train_indices();
    let test_rows = ds.test_indices();
    if test_rows.is_empty() {
        return Err(Error::InvalidInput("raw MLP baseline needs a test split".into()));
    }
    let xs = ds.gather_rows(&train_rows)?;
    let ys: Vec<usize> = train_rows.iter().map(|&r| labels[r]).collect();
    let (head, trace) = train_head(&xs, &ys, head_cfg)?;
    let train_acc = *trace.last().expect("at least one epoch");
    let xt = ds.gather_rows(&test_rows)?;
    let yt: Vec<usize> = test_rows.iter().map(|&r| labels[r]).collect();
    let test_acc = accuracy_from_logits(&head.logits(&xt)?, &yt)?;
    Ok((train_acc, test_acc))
}
