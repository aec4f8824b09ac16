//! Transformer autoencoder over per-coordinate tokens.
//!
//! Each coordinate `j` of a d-dimensional example becomes one token
//! `concat(pe_j, x_j)` of width `e+1`, where `pe_j` is a learnable
//! positional encoding row. Masked coordinates contribute no encoder token;
//! the decoder sees all `d` positions, with masked ones filled by
//! `concat(pe_j, u)` for a learnable mask value `u`.
//!
//! Forward passes run on shapes `[batch, tokens, width]`; a batch of one is
//! the single-example case. Attention never crosses the batch dimension
//! (scores are batched matmuls), so per-example results are independent of
//! the rest of the batch.

use serde::{Deserialize, Serialize};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;
use crate::trainer::MaskPlan;

/// Std of Gaussian weight initialization (positional table included).
pub const WEIGHT_INIT_STD: f64 = 0.02;

/// Checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// How masked coordinates are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskTokenMode {
    /// One scalar mask value shared by all coordinates, fed to the decoder.
    Shared,
    /// One mask value per coordinate, fed to the decoder.
    PerCoordinate,
    /// Mask tokens are appended to the encoder input instead of entering at
    /// the decoder.
    ThroughEncoder,
}

impl std::fmt::Display for MaskTokenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MaskTokenMode::Shared => "shared",
            MaskTokenMode::PerCoordinate => "per-coordinate",
            MaskTokenMode::ThroughEncoder => "through-encoder",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MaskTokenMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(MaskTokenMode::Shared),
            "per-coordinate" => Ok(MaskTokenMode::PerCoordinate),
            "through-encoder" => Ok(MaskTokenMode::ThroughEncoder),
            other => Err(Error::InvalidConfig(format!("unknown mask-token mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input dimension (coordinate count).
    pub d: usize,
    /// Positional-encoding width; token width is `e + 1`.
    pub e: usize,
    /// Feed-forward hidden width.
    pub fw: usize,
    /// Attention head count.
    pub heads: usize,
    pub enc_depth: usize,
    pub dec_depth: usize,
    pub mask_token_mode: MaskTokenMode,
}

impl ModelConfig {
    /// Token width `e + 1`.
    pub fn width(&self) -> usize {
        self.e + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidConfig("d must be >= 2".into()));
        }
        if self.e < 1 || self.fw < 1 || self.heads < 1 {
            return Err(Error::InvalidConfig("e, fw and heads must be >= 1".into()));
        }
        if self.width() % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "token width e+1 = {} must be divisible by heads = {}",
                self.width(),
                self.heads
            )));
        }
        Ok(())
    }

    /// Total learnable scalar count; a pure function of the config.
    pub fn param_count(&self) -> usize {
        let w = self.width();
        let per_layer = 4 * w * w + 4 * w   // q/k/v/o projections + biases
            + 2 * (w * self.fw) + self.fw + w // feed-forward
            + 4 * w; // two layer norms, gain + offset each
        let mask_len = match self.mask_token_mode {
            MaskTokenMode::PerCoordinate => self.d,
            _ => 1,
        };
        self.d * self.e
            + mask_len
            + (self.enc_depth + self.dec_depth) * per_layer
            + w // output head weight
            + 1 // output head bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl LayerParams {
    fn init(w: usize, fw: usize, rng: &mut impl Rng) -> Self {
        LayerParams {
            ln1_gain: Tensor::ones(vec![w]),
            ln1_bias: Tensor::zeros(vec![w]),
            wq: gaussian(vec![w, w], rng),
            bq: Tensor::zeros(vec![w]),
            wk: gaussian(vec![w, w], rng),
            bk: Tensor::zeros(vec![w]),
            wv: gaussian(vec![w, w], rng),
            bv: Tensor::zeros(vec![w]),
            wo: gaussian(vec![w, w], rng),
            bo: Tensor::zeros(vec![w]),
            ln2_gain: Tensor::ones(vec![w]),
            ln2_bias: Tensor::zeros(vec![w]),
            w1: gaussian(vec![w, fw], rng),
            b1: Tensor::zeros(vec![fw]),
            w2: gaussian(vec![fw, w], rng),
            b2: Tensor::zeros(vec![w]),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.ln1_gain, &self.ln1_bias, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv,
            &self.bv, &self.wo, &self.bo, &self.ln2_gain, &self.ln2_bias, &self.w1, &self.b1,
            &self.w2, &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.ln1_gain, &mut self.ln1_bias, &mut self.wq, &mut self.bq, &mut self.wk,
            &mut self.bk, &mut self.wv, &mut self.bv, &mut self.wo, &mut self.bo,
            &mut self.ln2_gain, &mut self.ln2_bias, &mut self.w1, &mut self.b1, &mut self.w2,
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `[d, e]`; row j is the learnable encoding of coordinate j.
    pub positional_table: Tensor,
    /// `[1]` in shared / through-encoder modes, `[d, 1]` per-coordinate.
    pub mask_value: Tensor,
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
    /// `[e+1, 1]` shared linear output head applied per decoder token.
    pub out_w: Tensor,
    /// `[1]`.
    pub out_b: Tensor,
}

impl ModelParams {
    /// Canonical flat order of all learnable tensors. Binding, gradient
    /// collection and optimizer state all use this order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.positional_table, &self.mask_value];
        for l in &self.encoder {
            out.extend(l.tensors());
        }
        for l in &self.decoder {
            out.extend(l.tensors());
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.positional_table, &mut self.mask_value];
        for l in &mut self.encoder {
            out.extend(l.tensors_mut());
        }
        for l in &mut self.decoder {
            out.extend(l.tensors_mut());
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}

fn gaussian(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> =
        (0..n).map(|_| WEIGHT_INIT_STD * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("shape/data constructed together")
}

/// A transformer autoencoder: configuration plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Initialize from the parameter-init stream of `seed`: Gaussian
    /// (std 0.02) weight matrices and positional table, zero biases and
    /// layer-norm offsets, unit layer-norm gains, zero mask value.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = stream(seed, Stream::ParamInit);
        let w = config.width();
        let positional_table = gaussian(vec![config.d, config.e], &mut rng);
        let mask_value = match config.mask_token_mode {
            MaskTokenMode::PerCoordinate => Tensor::zeros(vec![config.d, 1]),
            _ => Tensor::zeros(vec![1]),
        };
        let encoder = (0..config.enc_depth).map(|_| LayerParams::init(w, config.fw, &mut rng)).collect();
        let decoder = (0..config.dec_depth).map(|_| LayerParams::init(w, config.fw, &mut rng)).collect();
        let out_w = gaussian(vec![w, 1], &mut rng);
        let out_b = Tensor::zeros(vec![1]);
        Ok(Model {
            config,
            params: ModelParams { positional_table, mask_value, encoder, decoder, out_w, out_b },
        })
    }

    /// Register every parameter tensor in `graph`; when `trainable`, the
    /// returned ids receive gradients from `backward`.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Result<BoundParams> {
        let mut ids = Vec::new();
        for t in self.params.tensors() {
            ids.push(graph.leaf((*t).clone(), trainable)?);
        }
        Ok(BoundParams { ids })
    }

    // ── checkpointing ───────────────────────────────────────────────────

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params: self.params.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "checkpoint version {} unsupported (expected {})",
                file.version, CHECKPOINT_VERSION
            )));
        }
        file.config.validate()?;
        let model = Model { config: file.config, params: file.params };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        if self.params.positional_table.shape() != [c.d, c.e] {
            return Err(Error::InvalidConfig("positional table shape mismatch".into()));
        }
        let expect_mask: &[usize] = match c.mask_token_mode {
            MaskTokenMode::PerCoordinate => &[c.d, 1],
            _ => &[1],
        };
        if self.params.mask_value.shape() != expect_mask {
            return Err(Error::InvalidConfig("mask value shape mismatch".into()));
        }
        if self.params.encoder.len() != c.enc_depth || self.params.decoder.len() != c.dec_depth {
            return Err(Error::InvalidConfig("layer count mismatch".into()));
        }
        if self.params.scalar_count() != c.param_count() {
            return Err(Error::InvalidConfig("parameter count mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    params: ModelParams,
}

/// Node ids of one model binding, in [`ModelParams::tensors`] order.
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn positional_table(&self) -> NodeId {
        self.ids[0]
    }

    fn mask_value(&self) -> NodeId {
        self.ids[1]
    }

    fn layer(&self, base: usize) -> BoundLayer<'_> {
        BoundLayer { ids: &self.ids[base..base + TENSORS_PER_LAYER] }
    }

    fn out_w(&self) -> NodeId {
        self.ids[self.ids.len() - 2]
    }

    fn out_b(&self) -> NodeId {
        self.ids[self.ids.len() - 1]
    }
}

const TENSORS_PER_LAYER: usize = 16;

struct BoundLayer<'a> {
    ids: &'a [NodeId],
}

impl BoundLayer<'_> {
    fn ln1(&self) -> (NodeId, NodeId) {
        (self.ids[0], self.ids[1])
    }
    fn qkv(&self) -> [(NodeId, NodeId); 3] {
        [(self.ids[2], self.ids[3]), (self.ids[4], self.ids[5]), (self.ids[6], self.ids[7])]
    }
    fn proj(&self) -> (NodeId, NodeId) {
        (self.ids[8], self.ids[9])
    }
    fn ln2(&self) -> (NodeId, NodeId) {
        (self.ids[10], self.ids[11])
    }
    fn ff(&self) -> [(NodeId, NodeId); 2] {
        [(self.ids[12], self.ids[13]), (self.ids[14], self.ids[15])]
    }
}

/// Encoder input for a batch: tokens `[batch, n_tokens, e+1]` plus, per
/// example, which coordinate each token represents.
pub struct TokenBatch {
    pub node: NodeId,
    pub coordinate_ids: Vec<Vec<usize>>,
    pub plans: Vec<MaskPlan>,
}

impl TokenBatch {
    pub fn tokens_per_example(&self) -> usize {
        self.coordinate_ids[0].len()
    }
}

/// Forward-pass methods for one binding of a model inside one graph.
pub struct ForwardPass<'m> {
    pub config: &'m ModelConfig,
    pub bound: BoundParams,
}

impl Model {
    pub fn forward_pass<'m>(&'m self, graph: &mut Graph, trainable: bool) -> Result<ForwardPass<'m>> {
        Ok(ForwardPass { config: &self.config, bound: self.bind(graph, trainable)? })
    }
}

impl ForwardPass<'_> {
    /// One encoder token per unmasked coordinate (ascending coordinate
    /// order), each `concat(pe_j, x_j)`. In through-encoder mode the masked
    /// coordinates are appended as `concat(pe_j, u)` tokens instead of being
    /// dropped.
    ///
    /// `xs` is `[batch, d]`; one mask plan per example, all with the same
    /// masked count so token counts agree across the batch.
    pub fn build_token_batch(
        &self,
        g: &mut Graph,
        xs: NodeId,
        plans: &[MaskPlan],
    ) -> Result<TokenBatch> {
        let d = self.config.d;
        let b = plans.len();
        let xshape = g.shape(xs).to_vec();
        if xshape != [b, d] {
            return Err(Error::shape(
                "build-token-batch",
                format!("expected [{b}, {d}] inputs, got {xshape:?}"),
            ));
        }
        let masked_count = plans[0].masked().len();
        for plan in plans {
            if plan.d() != d {
                return Err(Error::InvalidInput(format!(
                    "mask plan covers {} coordinates, model expects {d}",
                    plan.d()
                )));
            }
            if plan.masked().len() == d {
                return Err(Error::InvalidInput("mask plan masks every coordinate".into()));
            }
            if plan.masked().len() != masked_count {
                return Err(Error::InvalidInput(
                    "all plans in a batch must mask the same number of coordinates".into(),
                ));
            }
        }

        let through = self.config.mask_token_mode == MaskTokenMode::ThroughEncoder;
        let coordinate_ids: Vec<Vec<usize>> = plans
            .iter()
            .map(|p| {
                let mut ids = p.unmasked();
                if through {
                    ids.extend_from_slice(p.masked());
                }
                ids
            })
            .collect();
        let n = coordinate_ids[0].len();

        // Positional part: gather pe rows with a 0/1 selection tensor.
        let mut sel = vec![0.0; b * n * d];
        for (bi, ids) in coordinate_ids.iter().enumerate() {
            for (t, &j) in ids.iter().enumerate() {
                sel[bi * n * d + t * d + j] = 1.0;
            }
        }
        let sel = g.constant(Tensor::new(vec![b, n, d], sel)?)?;
        let pe = g.matmul(sel, self.bound.positional_table())?; // [b, n, e]

        // Value part: unmasked token rows take x values; in through-encoder
        // mode the appended rows take the mask value instead.
        let x3 = g.reshape(xs, vec![b, d, 1])?;
        let values = if through {
            let mut sel_x = vec![0.0; b * n * d];
            let mut indicator = vec![0.0; b * n];
            for (bi, plan) in plans.iter().enumerate() {
                for (t, &j) in plan.unmasked().iter().enumerate() {
                    sel_x[bi * n * d + t * d + j] = 1.0;
                }
                for t in (d - plan.masked().len())..n {
                    indicator[bi * n + t] = 1.0;
                }
            }
            let sel_x = g.constant(Tensor::new(vec![b, n, d], sel_x)?)?;
            let from_x = g.bmm(sel_x, x3)?;
            let ind = g.constant(Tensor::new(vec![b, n, 1], indicator)?)?;
            let mask_flat = self.mask_value_flat(g)?;
            let from_u = g.mul(ind, mask_flat)?;
            g.add(from_x, from_u)?
        } else {
            g.bmm(sel, x3)?
        };

        let node = g.concat_last(&[pe, values])?;
        Ok(TokenBatch { node, coordinate_ids, plans: plans.to_vec() })
    }

    /// Mask value broadcastable over `[b, n, 1]` rows: `[1]` shared,
    /// `[d, 1]` per coordinate.
    fn mask_value_flat(&self, g: &mut Graph) -> Result<NodeId> {
        let u = self.bound.mask_value();
        match self.config.mask_token_mode {
            MaskTokenMode::PerCoordinate => Ok(u),
            _ => g.reshape(u, vec![1]),
        }
    }

    /// Encoder stack; output rows stay in token order, one `e+1` wide
    /// representation per input token. Depth 0 is the identity.
    pub fn encode(&self, g: &mut Graph, batch: &TokenBatch) -> Result<NodeId> {
        let mut x = batch.node;
        for i in 0..self.config.enc_depth {
            let base = 2 + i * TENSORS_PER_LAYER;
            x = self.transformer_layer(g, x, base)?;
        }
        Ok(x)
    }

    /// Pre-norm residual block: attention then feed-forward.
    fn transformer_layer(&self, g: &mut Graph, x: NodeId, base: usize) -> Result<NodeId> {
        let layer = self.bound.layer(base);
        let w = self.config.width();
        let heads = self.config.heads;
        let hw = w / heads;
        let scale = 1.0 / (hw as f64).sqrt();

        let (g1, b1) = layer.ln1();
        let normed = g.layernorm_rows(x)?;
        let normed = g.mul(normed, g1)?;
        let normed = g.add(normed, b1)?;

        let [(wq, bq), (wk, bk), (wv, bv)] = layer.qkv();
        let q = g.matmul(normed, wq)?;
        let q = g.add(q, bq)?;
        let k = g.matmul(normed, wk)?;
        let k = g.add(k, bk)?;
        let v = g.matmul(normed, wv)?;
        let v = g.add(v, bv)?;

        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_last(q, h * hw, hw)?;
            let kh = g.slice_last(k, h * hw, hw)?;
            let vh = g.slice_last(v, h * hw, hw)?;
            let kt = g.transpose(kh)?;
            let scores = g.bmm(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let attn = g.softmax_rows(scores)?;
            head_outs.push(g.bmm(attn, vh)?);
        }
        let cat = g.concat_last(&head_outs)?;
        let (wo, bo) = layer.proj();
        let proj = g.matmul(cat, wo)?;
        let proj = g.add(proj, bo)?;
        let x = g.add(x, proj)?;

        let (g2, b2) = layer.ln2();
        let normed = g.layernorm_rows(x)?;
        let normed = g.mul(normed, g2)?;
        let normed = g.add(normed, b2)?;
        let [(w1, bf1), (w2, bf2)] = layer.ff();
        let hidden = g.matmul(normed, w1)?;
        let hidden = g.add(hidden, bf1)?;
        let hidden = g.gelu(hidden)?;
        let ff = g.matmul(hidden, w2)?;
        let ff = g.add(ff, bf2)?;
        g.add(x, ff)
    }

    /// Decoder input `[batch, d, e+1]` in coordinate order: encoder output
    /// rows for unmasked coordinates, `concat(pe_j, u)` for masked ones. In
    /// through-encoder mode this only reorders encoder output rows.
    pub fn assemble_decoder_input(
        &self,
        g: &mut Graph,
        enc_out: NodeId,
        batch: &TokenBatch,
    ) -> Result<NodeId> {
        let d = self.config.d;
        let b = batch.plans.len();
        let n = batch.tokens_per_example();
        let got = g.shape(enc_out).to_vec();
        if got != [b, n, self.config.width()] {
            return Err(Error::shape(
                "assemble-decoder-input",
                format!("encoder output {got:?} does not match {} tokens per example", n),
            ));
        }

        // Scatter encoder rows to their coordinate positions.
        let mut scatter = vec![0.0; b * d * n];
        for (bi, ids) in batch.coordinate_ids.iter().enumerate() {
            for (t, &j) in ids.iter().enumerate() {
                scatter[bi * d * n + j * n + t] = 1.0;
            }
        }
        let scatter = g.constant(Tensor::new(vec![b, d, n], scatter)?)?;
        let placed = g.bmm(scatter, enc_out)?; // [b, d, w]

        if self.config.mask_token_mode == MaskTokenMode::ThroughEncoder {
            // Every coordinate already has an encoder row; nothing to fill.
            return Ok(placed);
        }

        // Mask rows: concat(pe_j, u) at masked coordinates, zero elsewhere,
        // added onto the scattered encoder rows (which are zero there).
        let mut mask_sel = vec![0.0; b * d * d];
        let mut indicator = vec![0.0; b * d];
        for (bi, plan) in batch.plans.iter().enumerate() {
            for &j in plan.masked() {
                mask_sel[bi * d * d + j * d + j] = 1.0;
                indicator[bi * d + j] = 1.0;
            }
        }
        let mask_sel = g.constant(Tensor::new(vec![b, d, d], mask_sel)?)?;
        let pe_masked = g.matmul(mask_sel, self.bound.positional_table())?; // [b, d, e]
        let ind = g.constant(Tensor::new(vec![b, d, 1], indicator)?)?;
        let mask_flat = self.mask_value_flat(g)?;
        let u_col = g.mul(ind, mask_flat)?; // [b, d, 1]
        let mask_rows = g.concat_last(&[pe_masked, u_col])?;
        g.add(placed, mask_rows)
    }

    /// Decoder stack plus the shared linear output head, producing one
    /// scalar reconstruction per coordinate: `[batch, d]`.
    pub fn decode(&self, g: &mut Graph, dec_in: NodeId) -> Result<NodeId> {
        let shape = g.shape(dec_in).to_vec();
        if shape.len() != 3 || shape[1] != self.config.d || shape[2] != self.config.width() {
            return Err(Error::shape(
                "decode",
                format!("expected [batch, {}, {}], got {shape:?}", self.config.d, self.config.width()),
            ));
        }
        let mut x = dec_in;
        for i in 0..self.config.dec_depth {
            let base = 2 + (self.config.enc_depth + i) * TENSORS_PER_LAYER;
            x = self.transformer_layer(g, x, base)?;
        }
        let out = g.matmul(x, self.bound.out_w())?;
        let out = g.add(out, self.bound.out_b())?;
        g.reshape(out, vec![shape[0], self.config.d])
    }

    /// Full masked autoencoder pass: `[batch, d]` reconstructions.
    pub fn reconstruct(&self, g: &mut Graph, xs: NodeId, plans: &[MaskPlan]) -> Result<NodeId> {
        let batch = self.build_token_batch(g, xs, plans)?;
        let enc = self.encode(g, &batch)?;
        let dec_in = self.assemble_decoder_input(g, enc, &batch)?;
        self.decode(g, dec_in)
    }

    /// Encoder output over all `d` coordinates (no masking): `[batch, d, e+1]`.
    pub fn encode_unmasked(&self, g: &mut Graph, xs: NodeId) -> Result<NodeId> {
        let b = g.shape(xs)[0];
        let plans = vec![MaskPlan::empty(self.config.d); b];
        let batch = self.build_token_batch(g, xs, &plans)?;
        self.encode(g, &batch)
    }
}

impl Model {
    /// Inference helper: per-coordinate representations `[batch, d, e+1]`
    /// with no masking and no gradient tracking.
    pub fn representations(&self, xs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(xs.clone())?;
        let fp = self.forward_pass(&mut g, false)?;
        let enc = fp.encode_unmasked(&mut g, x)?;
        Ok(g.value(enc).clone())
    }

    /// Inference helper: reconstructions for given plans, values only.
    pub fn reconstruct_values(&self, xs: &Tensor, plans: &[MaskPlan]) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(xs.clone())?;
        let fp = self.forward_pass(&mut g, false)?;
        let out = fp.reconstruct(&mut g, x, plans)?;
        Ok(g.value(out).clone())
    }
}
