//! Gradient checks: every primitive against central finite differences on
//! randomized shapes and values, plus the full reconstruction loss of a
//! small model with respect to every parameter tensor and the input
//! perturbation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use met_core::backbone::{MaskTokenMode, Model, ModelConfig};
use met_core::graph::{finite_difference_check, Graph, NodeId};
use met_core::trainer::MaskPlan;
use met_core::Tensor;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const CASES: usize = 20;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random tensor bounded away from zero (for kinked/singular ops).
fn random_tensor_offset(shape: &[usize], min_abs: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v.signum() * (v.abs() + min_abs)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn random_positive(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> =
        (0..n).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal).abs()).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Weighted readout so gradients are non-uniform across entries.
fn weighted_sum(g: &mut Graph, x: NodeId, weights: &Tensor) -> NodeId {
    let w = g.constant(weights.clone()).unwrap();
    let prod = g.mul(x, w).unwrap();
    g.sum(prod).unwrap()
}

fn check<F>(name: &str, x: &Tensor, f: F)
where
    F: Fn(&mut Graph, NodeId) -> met_core::Result<NodeId>,
{
    let report = finite_difference_check(&f, x, STEP, TOL).unwrap();
    assert!(
        report.pass,
        "{name}: max rel err {} at coord {} (abs {})",
        report.max_rel_error, report.worst_index, report.max_abs_error
    );
}

fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

#[test]
fn matmul_gradients() {
    let mut rng = rng_for(1);
    for _ in 0..CASES {
        let (n, k, m) = random_dims(&mut rng);
        let a = random_tensor(&[n, k], &mut rng);
        let b = random_tensor(&[k, m], &mut rng);
        let w = random_tensor(&[n, m], &mut rng);
        let (bc, wc) = (b.clone(), w.clone());
        check("matmul lhs", &a, move |g, x| {
            let bid = g.constant(bc.clone())?;
            let y = g.matmul(x, bid)?;
            Ok(weighted_sum(g, y, &wc))
        });
        let (ac, wc) = (a.clone(), w.clone());
        check("matmul rhs", &b, move |g, x| {
            let aid = g.constant(ac.clone())?;
            let y = g.matmul(aid, x)?;
            Ok(weighted_sum(g, y, &wc))
        });
        // Folded 3-D lhs.
        let batch = rng.gen_range(1..4);
        let a3 = random_tensor(&[batch, n, k], &mut rng);
        let w3 = random_tensor(&[batch, n, m], &mut rng);
        let bc = b.clone();
        check("matmul folded lhs", &a3, move |g, x| {
            let bid = g.constant(bc.clone())?;
            let y = g.matmul(x, bid)?;
            Ok(weighted_sum(g, y, &w3))
        });
    }
}

#[test]
fn bmm_gradients() {
    let mut rng = rng_for(2);
    for _ in 0..CASES {
        let (n, k, m) = random_dims(&mut rng);
        let batch = rng.gen_range(1..4);
        let a = random_tensor(&[batch, n, k], &mut rng);
        let b = random_tensor(&[batch, k, m], &mut rng);
        let w = random_tensor(&[batch, n, m], &mut rng);
        let (bc, wc) = (b.clone(), w.clone());
        check("bmm lhs", &a, move |g, x| {
            let bid = g.constant(bc.clone())?;
            let y = g.bmm(x, bid)?;
            Ok(weighted_sum(g, y, &wc))
        });
        let (ac, wc) = (a.clone(), w.clone());
        check("bmm rhs", &b, move |g, x| {
            let aid = g.constant(ac.clone())?;
            let y = g.bmm(aid, x)?;
            Ok(weighted_sum(g, y, &wc))
        });
    }
}

#[test]
fn transpose_and_reshape_gradients() {
    let mut rng = rng_for(3);
    for _ in 0..CASES {
        let (n, m, b) = random_dims(&mut rng);
        let x = random_tensor(&[b, n, m], &mut rng);
        let w = random_tensor(&[b, m, n], &mut rng);
        check("transpose", &x, move |g, x| {
            let y = g.transpose(x)?;
            Ok(weighted_sum(g, y, &w))
        });
        let x = random_tensor(&[n, m], &mut rng);
        let w = random_tensor(&[n * m], &mut rng);
        check("reshape", &x, move |g, x| {
            let y = g.reshape(x, vec![n * m])?;
            Ok(weighted_sum(g, y, &w))
        });
    }
}

#[test]
fn elementwise_binary_gradients() {
    let mut rng = rng_for(4);
    for _ in 0..CASES {
        let (n, m, _) = random_dims(&mut rng);
        let a = random_tensor(&[n, m], &mut rng);
        let b = random_tensor(&[n, m], &mut rng);
        let w = random_tensor(&[n, m], &mut rng);
        for op in ["add", "sub", "mul"] {
            let (bc, wc) = (b.clone(), w.clone());
            check(op, &a, move |g, x| {
                let bid = g.constant(bc.clone())?;
                let y = match op {
                    "add" => g.add(x, bid)?,
                    "sub" => g.sub(x, bid)?,
                    _ => g.mul(x, bid)?,
                };
                Ok(weighted_sum(g, y, &wc))
            });
        }
        // Broadcast rhs gradients (bias-style).
        let bias = random_tensor(&[m], &mut rng);
        let (ac, wc) = (a.clone(), w.clone());
        check("add broadcast rhs", &bias, move |g, x| {
            let aid = g.constant(ac.clone())?;
            let y = g.add(aid, x)?;
            Ok(weighted_sum(g, y, &wc))
        });
        let (ac, wc) = (a.clone(), w.clone());
        check("mul broadcast rhs", &bias, move |g, x| {
            let aid = g.constant(ac.clone())?;
            let y = g.mul(aid, x)?;
            Ok(weighted_sum(g, y, &wc))
        });
    }
}

#[test]
fn scale_and_activation_gradients() {
    let mut rng = rng_for(5);
    for case in 0..CASES {
        let (n, m, _) = random_dims(&mut rng);
        let w = random_tensor(&[n, m], &mut rng);
        let factor = rng.sample::<f64, _>(StandardNormal) * 2.0;

        // ReLU has a kink at 0: keep samples away from it.
        let x = random_tensor_offset(&[n, m], 0.1, &mut rng);
        let wc = w.clone();
        check("relu", &x, move |g, x| {
            let y = g.relu(x)?;
            Ok(weighted_sum(g, y, &wc))
        });

        let x = random_tensor(&[n, m], &mut rng);
        let wc = w.clone();
        check("gelu", &x, move |g, x| {
            let y = g.gelu(x)?;
            Ok(weighted_sum(g, y, &wc))
        });

        let x = random_tensor(&[n, m], &mut rng);
        let wc = w.clone();
        check("scale", &x, move |g, x| {
            let y = g.scale(x, factor)?;
            Ok(weighted_sum(g, y, &wc))
        });

        let x = random_tensor(&[n, m], &mut rng);
        let wc = w.clone();
        check("square", &x, move |g, x| {
            let y = g.square(x)?;
            Ok(weighted_sum(g, y, &wc))
        });

        let x = random_positive(&[n, m], &mut rng);
        let wc = w.clone();
        check("sqrt", &x, move |g, x| {
            let y = g.sqrt(x)?;
            Ok(weighted_sum(g, y, &wc))
        });

        let _ = case;
    }
}

#[test]
fn row_ops_gradients() {
    let mut rng = rng_for(6);
    for _ in 0..CASES {
        let n = rng.gen_range(1..5);
        let m = rng.gen_range(2..6);
        let x = random_tensor(&[n, m], &mut rng);
        let w = random_tensor(&[n, m], &mut rng);
        let wc = w.clone();
        check("softmax-rows", &x, move |g, x| {
            let y = g.softmax_rows(x)?;
            Ok(weighted_sum(g, y, &wc))
        });
        let x = random_tensor(&[n, m], &mut rng);
        let wc = w.clone();
        check("layernorm-rows", &x, move |g, x| {
            let y = g.layernorm_rows(x)?;
            Ok(weighted_sum(g, y, &wc))
        });
    }
}

#[test]
fn concat_slice_gradients() {
    let mut rng = rng_for(7);
    for _ in 0..CASES {
        let n = rng.gen_range(1..4);
        let (ma, mb) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let a = random_tensor(&[n, ma], &mut rng);
        let b = random_tensor(&[n, mb], &mut rng);
        let w = random_tensor(&[n, ma + mb], &mut rng);
        let (bc, wc) = (b.clone(), w.clone());
        check("concat-last-dim", &a, move |g, x| {
            let bid = g.constant(bc.clone())?;
            let y = g.concat_last(&[x, bid])?;
            Ok(weighted_sum(g, y, &wc))
        });

        let m = rng.gen_range(2..7);
        let start = rng.gen_range(0..m - 1);
        let len = rng.gen_range(1..=m - start);
        let x = random_tensor(&[n, m], &mut rng);
        let w = random_tensor(&[n, len], &mut rng);
        check("slice", &x, move |g, x| {
            let y = g.slice_last(x, start, len)?;
            Ok(weighted_sum(g, y, &w))
        });
    }
}

#[test]
fn reduction_gradients() {
    let mut rng = rng_for(8);
    for _ in 0..CASES {
        let (n, m, _) = random_dims(&mut rng);
        let x = random_tensor(&[n, m], &mut rng);
        check("sum", &x, |g, x| g.sum(x));
        let x = random_tensor(&[n, m], &mut rng);
        check("mean", &x, |g, x| g.mean(x));
        // Keep the norm away from 0 where it is non-differentiable.
        let x = random_tensor_offset(&[n, m], 0.2, &mut rng);
        check("l2norm", &x, |g, x| g.l2norm(x));
    }
}

#[test]
fn cross_entropy_gradients() {
    let mut rng = rng_for(9);
    for _ in 0..CASES {
        let n = rng.gen_range(1..5);
        let k = rng.gen_range(2..6);
        let logits = random_tensor(&[n, k], &mut rng);
        let mut onehot = vec![0.0; n * k];
        for r in 0..n {
            onehot[r * k + rng.gen_range(0..k)] = 1.0;
        }
        let targets = Tensor::new(vec![n, k], onehot).unwrap();
        let tc = targets.clone();
        check("softmax-cross-entropy logits", &logits, move |g, x| {
            let t = g.constant(tc.clone())?;
            g.cross_entropy_mean(x, t)
        });
        let lc = logits.clone();
        check("softmax-cross-entropy targets", &targets, move |g, x| {
            let l = g.constant(lc.clone())?;
            g.cross_entropy_mean(l, x)
        });
    }
}

// ── full model loss ─────────────────────────────────────────────────────

fn tiny_model() -> Model {
    let cfg = ModelConfig {
        d: 6,
        e: 4,
        fw: 8,
        heads: 1,
        enc_depth: 1,
        dec_depth: 1,
        mask_token_mode: MaskTokenMode::Shared,
    };
    Model::init(cfg, 12345).unwrap()
}

/// L_total = L_std + lambda * L_adv at a fixed perturbation, as a function
/// of one parameter tensor.
fn total_loss_with_param(
    model: &Model,
    param_idx: usize,
    replacement: &Tensor,
    xs: &Tensor,
    x_adv: &Tensor,
    plans: &[MaskPlan],
    lambda: f64,
) -> met_core::Result<f64> {
    let mut patched = model.clone();
    *patched.params.tensors_mut()[param_idx] = replacement.clone();
    let mut g = Graph::new();
    let fp = patched.forward_pass(&mut g, false)?;
    let x = g.constant(xs.clone())?;
    let xhat = fp.reconstruct(&mut g, x, plans)?;
    let diff = g.sub(xhat, x)?;
    let sq = g.square(diff)?;
    let std = g.sum(sq)?;
    let xa = g.constant(x_adv.clone())?;
    let ahat = fp.reconstruct(&mut g, xa, plans)?;
    let adiff = g.sub(ahat, x)?;
    let asq = g.square(adiff)?;
    let adv = g.sum(asq)?;
    let weighted = g.scale(adv, lambda)?;
    let total = g.add(std, weighted)?;
    g.value(total).item()
}

#[test]
fn full_loss_gradients_w_r_t_every_parameter() {
    let model = tiny_model();
    let mut rng = rng_for(10);
    let xs = random_tensor(&[2, 6], &mut rng);
    let h = random_tensor(&[2, 6], &mut rng);
    let mut x_adv = xs.clone();
    for (v, hv) in x_adv.data_mut().iter_mut().zip(h.data()) {
        *v += 0.3 * hv;
    }
    let plans = vec![
        MaskPlan::new(6, vec![1, 4, 5]).unwrap(),
        MaskPlan::new(6, vec![0, 2, 3]).unwrap(),
    ];
    let lambda = 1.0;
    let n_params = model.params.tensors().len();

    for idx in 0..n_params {
        let base = model.params.tensors()[idx].clone();
        // Analytic gradient from one backward pass over the bound model.
        let analytic = {
            let mut g = Graph::new();
            let fp = model.forward_pass(&mut g, true).unwrap();
            let x = g.constant(xs.clone()).unwrap();
            let xhat = fp.reconstruct(&mut g, x, &plans).unwrap();
            let diff = g.sub(xhat, x).unwrap();
            let sq = g.square(diff).unwrap();
            let std = g.sum(sq).unwrap();
            let xa = g.constant(x_adv.clone()).unwrap();
            let ahat = fp.reconstruct(&mut g, xa, &plans).unwrap();
            let adiff = g.sub(ahat, x).unwrap();
            let asq = g.square(adiff).unwrap();
            let adv = g.sum(asq).unwrap();
            let weighted = g.scale(adv, lambda).unwrap();
            let total = g.add(std, weighted).unwrap();
            let id = fp.bound.ids()[idx];
            let mut grads = g.backward(total).unwrap();
            grads.take(id).unwrap()
        };
        // Central differences coordinate by coordinate.
        let mut probe = base.clone();
        for i in 0..base.numel() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let fp_val =
                total_loss_with_param(&model, idx, &probe, &xs, &x_adv, &plans, lambda).unwrap();
            probe.data_mut()[i] = orig - STEP;
            let fm_val =
                total_loss_with_param(&model, idx, &probe, &xs, &x_adv, &plans, lambda).unwrap();
            probe.data_mut()[i] = orig;
            let numeric = (fp_val - fm_val) / (2.0 * STEP);
            let a = analytic.data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
            assert!(
                abs <= 1e-8 || rel <= TOL,
                "param tensor {idx} coord {i}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn full_loss_gradient_w_r_t_perturbation() {
    let model = tiny_model();
    let mut rng = rng_for(11);
    for case in 0..CASES {
        let xs = random_tensor(&[1, 6], &mut rng);
        let plan = {
            use rand::seq::index::sample;
            let picked = sample(&mut rng, 6, 3).into_vec();
            MaskPlan::new(6, picked).unwrap()
        };
        let h0 = random_tensor(&[1, 6], &mut rng);
        let (xc, pc, mc) = (xs.clone(), plan.clone(), model.clone());
        let report = finite_difference_check(
            move |g, hid| {
                let fp = mc.forward_pass(g, false)?;
                let x = g.constant(xc.clone())?;
                let perturbed = g.add(x, hid)?;
                let xhat = fp.reconstruct(g, perturbed, std::slice::from_ref(&pc))?;
                let diff = g.sub(xhat, x)?;
                let sq = g.square(diff)?;
                g.sum(sq)
            },
            &h0,
            STEP,
            TOL,
        )
        .unwrap();
        assert!(report.pass, "case {case}: {report:?}");
    }
}
