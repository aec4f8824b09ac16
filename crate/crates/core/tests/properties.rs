//! Property tests for the invariants that hold on arbitrary inputs.

use proptest::prelude::*;

use met_core::data::{denormalize_row, normalize_row, project_2d, ColumnStats};
use met_core::graph::Graph;
use met_core::tensor::l2_norm;
use met_core::trainer::{project_l2, reconstruction_loss, MaskPlan};
use met_core::Tensor;

proptest! {
    // Projection safety and exact idempotence for arbitrary vectors/radii.
    #[test]
    fn projection_contains_and_idempotent(
        h in prop::collection::vec(-1e3f64..1e3, 1..16),
        eps in 1e-6f64..50.0,
    ) {
        let mut v = h.clone();
        project_l2(&mut v, eps);
        prop_assert!(l2_norm(&v) <= eps + 1e-9);
        let once = v.clone();
        project_l2(&mut v, eps);
        prop_assert_eq!(v.clone(), once);
        // Interior points pass through untouched.
        if l2_norm(&h) < eps {
            prop_assert_eq!(v, h);
        }
    }

    // Sum of squared errors equals the elementwise oracle.
    #[test]
    fn reconstruction_loss_matches_oracle(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..32),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let oracle: f64 = pairs.iter().map(|(a, b)| (a - b) * (a - b)).sum();
        let loss = reconstruction_loss(&x, &y).unwrap();
        prop_assert!((loss - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    // Softmax rows are probability distributions for any finite input.
    #[test]
    fn softmax_rows_normalize(
        rows in 1usize..5,
        cols in 1usize..6,
        seed_vals in prop::collection::vec(-30.0f64..30.0, 30),
    ) {
        let data: Vec<f64> = (0..rows * cols).map(|i| seed_vals[i % seed_vals.len()] * ((i as f64 * 0.7).sin() + 1.1)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![rows, cols], data).unwrap()).unwrap();
        let y = g.softmax_rows(x).unwrap();
        for r in 0..rows {
            let row = g.value(y).row(r);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    // Mask plans: sorted, unique, in range, never everything.
    #[test]
    fn mask_plan_invariants(d in 2usize..40, picks in prop::collection::vec(0usize..40, 0..39)) {
        let masked: Vec<usize> = {
            let mut m: Vec<usize> = picks.into_iter().filter(|&j| j < d).collect();
            m.sort_unstable();
            m.dedup();
            if m.len() >= d { m.truncate(d - 1); }
            m
        };
        let plan = MaskPlan::new(d, masked.clone()).unwrap();
        prop_assert_eq!(plan.masked(), &masked[..]);
        prop_assert_eq!(plan.masked().len() + plan.unmasked().len(), d);
        let mut union: Vec<usize> = plan.masked().iter().copied().chain(plan.unmasked()).collect();
        union.sort_unstable();
        prop_assert_eq!(union, (0..d).collect::<Vec<_>>());
    }

    // z-score and its inverse round-trip any row under non-degenerate stats.
    #[test]
    fn normalization_roundtrip(
        row in prop::collection::vec(-1e4f64..1e4, 1..12),
        means in prop::collection::vec(-10.0f64..10.0, 12),
        stds in prop::collection::vec(0.1f64..100.0, 12),
    ) {
        let stats: Vec<ColumnStats> = row
            .iter()
            .enumerate()
            .map(|(i, _)| ColumnStats { mean: means[i], std: stds[i] })
            .collect();
        let normed = normalize_row(&stats, &row);
        let back = denormalize_row(&stats, &normed);
        for (a, b) in back.iter().zip(&row) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    // Alternate-mean projection is linear.
    #[test]
    fn projection_2d_linear(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..10),
        a in -5.0f64..5.0,
    ) {
        let x: Vec<f64> = pairs.iter().flat_map(|p| [p.0, p.1]).collect();
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        let (px, py) = project_2d(&x).unwrap();
        let (sx, sy) = project_2d(&scaled).unwrap();
        prop_assert!((sx - a * px).abs() < 1e-6);
        prop_assert!((sy - a * py).abs() < 1e-6);
    }
}
