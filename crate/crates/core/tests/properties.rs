use proptest::prelude::*;

use ndep::analysis::{finer_error_bound, redundancy, Screener};
use ndep::covariance::{CovAccumulator, CovMatrix, LogitMatrix};
use ndep::covlasso::{
    dual_certificate, embed, kkt_residuals, kkt_violation, lambda_max, solution_path, solve,
};
use ndep::evaluation::{emit_report, evaluate, replace_logit, DependencyReport};
use ndep::format::{decode_cov, decode_logits, encode_cov, encode_logits};
use ndep::linalg::{eigendecompose, SqrtFactor, SymmetricMatrix};
use ndep::synthetic::SplitMix64;
use ndep::testkit::{lasso_by_enumeration, lasso_objective, min_error_oracle, random_cov};

fn logits(rows: usize, cols: usize) -> impl Strategy<Value = LogitMatrix<f64>> {
    prop::collection::vec(-4.0f64..4.0, rows * cols)
        .prop_map(move |d| LogitMatrix::new(rows, cols, d).unwrap())
}

fn integer_logits(rows: usize, cols: usize) -> impl Strategy<Value = LogitMatrix<f64>> {
    prop::collection::vec(-8i32..8, rows * cols).prop_map(move |d| {
        LogitMatrix::new(rows, cols, d.into_iter().map(f64::from).collect()).unwrap()
    })
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..40, 1usize..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_symmetric_psd((rows, cols) in shape(), seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.next_normal()).collect();
        let c = CovMatrix::from_logits(&LogitMatrix::new(rows, cols, data).unwrap()).unwrap();
        let e = eigendecompose(&c.mat).unwrap();
        prop_assert!(e.min_raw_eigenvalue >= -1e-12 * e.max_eigenvalue().max(1.0));
        for i in 0..cols {
            for j in 0..cols {
                prop_assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }

    #[test]
    fn scaling_logits_scales_covariance(l in logits(12, 4), alpha in -3.0f64..3.0) {
        let c = CovMatrix::from_logits(&l).unwrap();
        let s = CovMatrix::from_logits(&l.scaled(alpha)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = alpha * alpha * c.get(i, j);
                prop_assert!((s.get(i, j) - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn merge_equals_sequential_on_exact_data(l in integer_logits(30, 5), split in 1usize..29, shards in 1usize..6) {
        let mut whole = CovAccumulator::new(5);
        whole.accumulate(&l).unwrap();
        let mut a = CovAccumulator::new(5);
        a.accumulate(&l.slice_rows(0, split).unwrap()).unwrap();
        let mut b = CovAccumulator::new(5);
        b.accumulate(&l.slice_rows(split, 30).unwrap()).unwrap();
        a.merge(&b).unwrap();
        prop_assert_eq!(a.finalize().unwrap(), whole.finalize().unwrap());
        let sharded = CovMatrix::from_logits_sharded(&l, shards).unwrap();
        prop_assert_eq!(sharded, CovMatrix::from_logits(&l).unwrap());
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = SplitMix64::new(seed);
        let s = SymmetricMatrix::from_upper(n, |_, _| rng.next_normal()).unwrap();
        let e = eigendecompose(&s).unwrap();
        let r = e.reconstruct();
        let scale = s.frobenius().max(1e-300);
        for (a, b) in r.iter().zip(s.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
        prop_assert!(e.orthogonality_error() <= 1e-10);
        prop_assert!(e.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn solver_matches_enumeration(seed in any::<u64>(), n in 2usize..6, frac in 0.01f64..0.99) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 100.0);
        let rp = c.reduce(0).unwrap();
        let lambda = frac * lambda_max(&rp);
        let s = solve(&rp, lambda, None).unwrap();
        prop_assert!(s.converged);
        let (_, best) = lasso_by_enumeration(&rp, lambda);
        let got = lasso_objective(&rp, lambda, &s.theta_hat);
        prop_assert!((got - best).abs() <= 1e-8 * (1.0 + best.abs()), "{} vs {}", got, best);
        let (resid, _) = kkt_residuals(&rp, lambda, &s.theta_hat).unwrap();
        prop_assert!(kkt_violation(&resid, lambda, &s.theta_hat) <= 1e-6 * lambda.max(1.0));
    }

    #[test]
    fn above_lambda_max_is_empty(seed in any::<u64>(), n in 2usize..10, factor in 1.0f64..5.0) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e3);
        let target = seed as usize % n;
        let rp = c.reduce(target).unwrap();
        let d = embed(&solve(&rp, factor * lambda_max(&rp), None).unwrap(), &rp).unwrap();
        prop_assert!(d.support.is_empty());
        prop_assert_eq!(d.pred_error, c.get(target, target));
    }

    #[test]
    fn duality_gap_closes(seed in any::<u64>(), n in 2usize..10, frac in 0.05f64..0.95) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e3);
        let rp = c.reduce(0).unwrap();
        let lambda = frac * lambda_max(&rp);
        let s = solve(&rp, lambda, None).unwrap();
        let a = SqrtFactor::of(&rp.chat).unwrap();
        let d = dual_certificate(&rp, lambda, &s.theta_hat, &a).unwrap();
        prop_assert!(d.gap >= -1e-9 * (1.0 + rp.cov_ii));
        prop_assert!(d.gap <= 1e-6 * (1.0 + rp.cov_ii), "gap {}", d.gap);
        prop_assert!(d.feasibility_violation <= 1e-6);
    }

    #[test]
    fn path_error_is_monotone(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e4);
        let rp = c.reduce(n - 1).unwrap();
        let grid = ndep::covlasso::auto_grid(lambda_max(&rp), 12);
        let p = solution_path(&rp, &grid).unwrap();
        prop_assert!(p.monotone);
        prop_assert!(p.errors.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn screening_never_removes_support(seed in any::<u64>(), n in 3usize..12, frac in 0.05f64..0.999) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e3);
        let rp = c.reduce(1).unwrap();
        let lambda = frac * lambda_max(&rp);
        let rep = Screener::new(&rp).unwrap().at(lambda).unwrap();
        let d = embed(&solve(&rp, lambda, None).unwrap(), &rp).unwrap();
        let (t3, _) = rep.violations(&d);
        prop_assert!(t3.is_empty(), "unsound: {:?}", t3);
    }

    #[test]
    fn finer_bound_brackets_explained_energy(seed in any::<u64>(), n in 2usize..10, frac in 0.02f64..1.0) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e3);
        let rp = c.reduce(0).unwrap();
        let lambda = frac * lambda_max(&rp);
        let s = solve(&rp, lambda, None).unwrap();
        let a = SqrtFactor::of(&rp.chat).unwrap();
        let b = finer_error_bound(&rp, lambda, &s, &a).unwrap();
        let tol = 1e-8 * (1.0 + rp.cov_ii);
        prop_assert!((b.identity - b.direct).abs() <= tol);
        prop_assert!(b.lower <= b.direct + tol);
        prop_assert!(b.direct <= b.upper + tol);
    }

    #[test]
    fn redundancy_matches_elimination(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 1e4);
        let t = seed as usize % n;
        let r = redundancy(&c, t).unwrap();
        let oracle = min_error_oracle(&c, t).unwrap();
        prop_assert!(!r.floored);
        prop_assert!((r.err0 - oracle).abs() <= 1e-8 * oracle);
        prop_assert!(r.route_disagreement() <= 1e-8);
        prop_assert!(r.relative <= 1.0 + 1e-12);
    }

    #[test]
    fn replacement_is_linear(l in logits(10, 4), alpha in -3.0f64..3.0) {
        let c = CovMatrix::from_logits(&l).unwrap();
        let rp = c.reduce(2).unwrap();
        let d = embed(&solve(&rp, 0.3 * lambda_max(&rp).max(1e-3), None).unwrap(), &rp).unwrap();
        let base = replace_logit(&l, &d).unwrap();
        let scaled = replace_logit(&l.scaled(alpha), &d).unwrap();
        for r in 0..10 {
            let want = alpha * base.get(r, 2);
            prop_assert!((scaled.get(r, 2) - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn relative_error_consistent(l in logits(20, 3), labels in prop::collection::vec(0u32..3, 20)) {
        let l = l.with_labels(labels).unwrap();
        let c = CovMatrix::from_logits(&l).unwrap();
        let rp = c.reduce(0).unwrap();
        let d = embed(&solve(&rp, 0.2 * lambda_max(&rp).max(1e-3), None).unwrap(), &rp).unwrap();
        let m = evaluate(&l, &d).unwrap();
        let mean_abs: f64 = l.column(0).iter().map(|v| v.abs()).sum::<f64>() / 20.0;
        prop_assert!((m.rel_err * mean_abs - 100.0 * m.abs_err).abs() <= 1e-9);
        for f in [m.acc, m.ori_acc] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn binary_formats_round_trip(l in logits(7, 3), labels in prop::collection::vec(0u32..3, 7), named in any::<bool>()) {
        let mut l = l.with_labels(labels).unwrap();
        if named {
            l = l.with_names(vec!["α".into(), "b,c".into(), "".into()]).unwrap();
        }
        let bytes = encode_logits(&l);
        let back = decode_logits(&bytes).unwrap();
        prop_assert_eq!(&back, &l);
        prop_assert_eq!(encode_logits(&back), bytes);
        let c = CovMatrix::from_logits(&l).unwrap();
        let cb = encode_cov(&c);
        prop_assert_eq!(encode_cov(&decode_cov(&cb).unwrap()), cb);
    }

    #[test]
    fn report_round_trip(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = SplitMix64::new(seed);
        let c = random_cov(&mut rng, n, 100.0);
        let rp = c.reduce(0).unwrap();
        let d = embed(&solve(&rp, 0.1 * lambda_max(&rp), None).unwrap(), &rp).unwrap();
        let text = emit_report(&d, rp.cov_ii, None, None).to_json();
        let again = DependencyReport::from_json(&text).unwrap().to_json();
        prop_assert_eq!(again, text);
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let mut rng = SplitMix64::new(11);
    let c = random_cov(&mut rng, 6, 10.0);
    let rp = c.reduce(0).unwrap();
    let lambda = 0.3 * lambda_max(&rp);
    let d64 = solve(&rp, lambda, None).unwrap();
    let c32: CovMatrix<f32> = c.cast();
    let rp32 = c32.reduce(0).unwrap();
    let d32 = solve(&rp32, lambda as f32, None).unwrap();
    assert!(d32.converged);
    for (a, b) in d64.theta_hat.iter().zip(&d32.theta_hat) {
        assert!((a - f64::from(*b)).abs() < 1e-3, "{a} vs {b}");
    }
}
