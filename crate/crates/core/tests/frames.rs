mod common;

use altproj::diagnostics::*;
use altproj::engine::RunConfig;
use altproj::frames::*;
use altproj::numerics::DenseMatrix;
use altproj::projections::*;
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherence_never_beats_welch(seed in 0u64..100_000, pick in 0usize..4) {
        let (n, l) = [(2, 3), (3, 6), (4, 8), (3, 7)][pick];
        let mut r = rng(seed);
        let d = project_column_norms(&dense(gaussian(&mut r, n, l, 1.0)), &ColumnNormTargets::ones(l)).unwrap();
        prop_assert!(mutual_coherence(&d).unwrap() >= welch_bound(n, l).unwrap() - 1e-12);
    }

    #[test]
    fn coherence_matches_gram_oracle(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let d = gaussian(&mut r, 3, 5, 1.0);
        let g = d.transpose() * &d;
        let mut mu = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    mu = mu.max(g[(i, j)].abs() / (g[(i, i)] * g[(j, j)]).sqrt());
                }
            }
        }
        prop_assert!((mutual_coherence(&dense(d)).unwrap() - mu).abs() <= 1e-14);
    }

    #[test]
    fn tightness_residual_matches_entrywise_formula(seed in 0u64..100_000, a in 0.1f64..4.0) {
        let mut r = rng(seed);
        let d = gaussian(&mut r, 3, 6, 1.0);
        let mut sum = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..6).map(|k| d[(i, k)] * d[(j, k)]).sum();
                let target = if i == j { a } else { 0.0 };
                sum += (dot - target).powi(2);
            }
        }
        prop_assert!((tightness_residual(&dense(d), a) - sum.sqrt()).abs() <= 1e-12 * (1.0 + sum.sqrt()));
    }

    #[test]
    fn extracted_frame_reproduces_truncation(seed in 0u64..100_000, a in 0.5f64..3.0) {
        let mut r = rng(seed);
        let g = symmetric(&mut r, 6, 1.0);
        let g = dense(g.as_matrix() * g.as_matrix());
        let d = extract_frame_from_gram(&g, 3, a).unwrap();
        let oracle = g.as_matrix().clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&i, &j| oracle.eigenvalues[j].total_cmp(&oracle.eigenvalues[i]));
        let mut trunc = nalgebra::DMatrix::zeros(6, 6);
        for &i in &idx[..3] {
            let u = oracle.eigenvectors.column(i);
            trunc += u * u.transpose() * a;
        }
        let dtd = d.as_matrix().transpose() * d.as_matrix();
        prop_assert!((dtd - trunc).norm() <= 1e-8);
    }

    #[test]
    fn eigen_gap_matches_oracle(seed in 0u64..100_000, n in 1usize..5) {
        let mut r = rng(seed);
        let h = symmetric(&mut r, 5, 1.0);
        let mut vals: Vec<f64> = h.as_matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        prop_assert!((eigen_gap(&h, n).unwrap() - (vals[n - 1] - vals[n])).abs() <= 1e-12);
    }
}

#[test]
fn prescribed_norm_guards_hold_across_seeds() {
    for seed in 1..=8 {
        let c = ColumnNormTargets::new(vec![2.0, 1.0, 0.5, 1.5, 1.0, 1.0]).unwrap();
        let cfg = FrameDesignConfig::new(3, 6, seed, RunConfig::new(3000, 1e-9).with_iterates())
            .with_targets(c.clone());
        let res = design_prescribed_norm_frame(&cfg).unwrap();
        let hist = res.trace.history.as_ref().unwrap();
        assert!(check_prop1_guards(hist, &c).unwrap().holds(), "seed {seed}");
        assert!(
            prop1_guards_from_trace(&res.trace, &c).holds(),
            "seed {seed}"
        );
        assert!(
            check_three_point_frames(hist, &c).unwrap().holds,
            "seed {seed}"
        );
        let bound = column_norm_contraction_constant(&c, 3) + 1e-6;
        assert!(
            check_contraction_bound(&res.trace.records, bound)
                .unwrap()
                .holds,
            "seed {seed}"
        );
    }
}

#[test]
fn guards_do_not_apply_to_rank_deficient_starts() {
    let s0 = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let hist = altproj::engine::IterateHistory {
        y0: s0.clone(),
        xs: vec![s0.clone()],
        ys: vec![s0],
    };
    let status = check_prop1_guards(&hist, &ColumnNormTargets::ones(3)).unwrap();
    assert!(matches!(status, GuardStatus::NotApplicable { .. }));
}

#[test]
fn etf_runs_decrease_and_satisfy_three_point() {
    for seed in 1..=3 {
        let cfg = FrameDesignConfig::new(3, 6, seed, RunConfig::new(400, 1e-10).with_iterates());
        let res = design_etf(&cfg).unwrap();
        for w in res.trace.records.windows(2) {
            assert!(w[1].f <= w[0].f + 1e-12);
        }
        let check = check_three_point(res.trace.history.as_ref().unwrap(), 1.0).unwrap();
        assert!(check.margin >= -1e-10, "seed {seed}: {}", check.margin);
        let bounded = GramCoherenceSet::new(6, welch_bound(3, 6).unwrap()).unwrap();
        let grams = GramTightSet::new(6, 3, 2.0).unwrap();
        let hist = res.trace.history.as_ref().unwrap();
        for k in 1..=hist.len() {
            assert!(bounded.contains(hist.y(k), 0.0));
            assert!(grams.contains(hist.x(k), 1e-8));
        }
    }
}
