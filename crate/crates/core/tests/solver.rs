use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sparse_ode::functionals::FunctionalMatrix;
use sparse_ode::sparse_solver::{
    cv_ts_lambda, fit_ols, fit_oracle, fit_scad, fit_scad_grid, lambda_grid, lambda_max, scad_derivative,
    scad_objective, scad_penalty, scad_threshold, ts_rows, DescentOptions, InitStrategy, ScadParams,
};
use sparse_ode::{Error, TimeSeries};

fn problem(entries: &[f64], b: &[f64], ridge: f64) -> FunctionalMatrix {
    let p = b.len();
    let m = DMatrix::from_row_slice(p, p, &entries[..p * p]);
    let q = &m * m.transpose() / p as f64 + DMatrix::identity(p, p) * ridge;
    let q = (&q + q.transpose()) * 0.5;
    FunctionalMatrix::new(0, DVector::from_column_slice(b), q).unwrap()
}

#[test]
fn penalty_branches() {
    let p = ScadParams::new(1.0);
    assert_eq!(scad_penalty(0.0, &p), 0.0);
    assert_eq!(scad_penalty(0.5, &p), 0.5);
    // middle branch at theta = 2: (2*3.7*2 - 4 - 1) / (2*2.7)
    assert!((scad_penalty(2.0, &p) - (14.8 - 5.0) / 5.4).abs() < 1e-15);
    assert!((scad_penalty(10.0, &p) - 4.7 / 2.0).abs() < 1e-15);
    assert_eq!(scad_derivative(0.5, &p), 1.0);
    assert!((scad_derivative(2.0, &p) - 1.7 / 2.7).abs() < 1e-15);
    assert_eq!(scad_derivative(5.0, &p), 0.0);
}

#[test]
fn threshold_regions() {
    let p = ScadParams::new(1.0);
    assert_eq!(scad_threshold(0.3, 2.0, &p), 0.0);
    assert_eq!(scad_threshold(10.0, 2.0, &p), 10.0);
    assert_eq!(scad_threshold(-10.0, 2.0, &p), -10.0);
    // soft threshold region: z - lambda / q
    assert!((scad_threshold(0.8, 2.0, &p) - 0.3).abs() < 1e-15);
}

#[test]
fn ols_and_oracle() {
    let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let b = DVector::from_vec(vec![1.0, 2.0]);
    let fm = FunctionalMatrix::new(0, b.clone(), q.clone()).unwrap();
    let ols = fit_ols(&fm).unwrap();
    let resid = &q * DVector::from_vec(ols.beta.clone()) - &b;
    assert!(resid.amax() < 1e-14);
    let oracle = fit_oracle(&fm, &[1]).unwrap();
    assert_eq!(oracle.beta[0], 0.0);
    assert!((oracle.beta[1] - 2.0).abs() < 1e-14);
}

#[test]
fn zero_diagonal_is_reported() {
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let fm = FunctionalMatrix::new(0, DVector::from_vec(vec![1.0, 0.0]), q).unwrap();
    let err = fit_scad(&fm, &ScadParams::new(0.1), Some(&[0.0, 0.0]), DescentOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ZeroDiagonal { index: 1, .. }));
}

#[test]
fn lambda_max_zeroes_everything() {
    let fm = problem(&[1.0, 0.2, -0.3, 0.5, 1.0, 0.1, 0.0, 0.4, 1.0], &[0.3, -0.8, 0.5], 0.1);
    let lm = lambda_max(&fm, 3.7);
    let fit = fit_scad(&fm, &ScadParams::new(lm), Some(&[0.0; 3]), DescentOptions::default()).unwrap();
    assert!(fit.beta.iter().all(|&b| b == 0.0));
    let grid = lambda_grid(&fm, 20, 1e-4, 3.7);
    assert_eq!(grid.len(), 20);
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    assert!((grid[19] - lm).abs() < 1e-12 * lm);
    assert!((grid[0] - 1e-4 * lm).abs() < 1e-12 * lm);
}

/// Coarse grid search refined by successively finer grids around the best point.
fn grid_minimize(fm: &FunctionalMatrix, params: &ScadParams, radius: f64) -> (Vec<f64>, f64) {
    let p = fm.p();
    let mut center = vec![0.0; p];
    let mut half = radius;
    let steps: i32 = 10;
    let mut best = (center.clone(), scad_objective(fm, &center, params));
    for _ in 0..14 {
        let h = half / steps as f64;
        let total = (2 * steps + 1).pow(p as u32);
        for idx in 0..total {
            let mut rem = idx;
            let point: Vec<f64> = (0..p)
                .map(|j| {
                    let k = rem % (2 * steps + 1);
                    rem /= 2 * steps + 1;
                    center[j] + (k as i32 - steps) as f64 * h
                })
                .collect();
            let f = scad_objective(fm, &point, params);
            if f < best.1 {
                best = (point, f);
            }
        }
        center = best.0.clone();
        half = 2.0 * h;
    }
    best
}

#[test]
fn convex_instances_reach_the_global_minimum() {
    let cases: [(&[f64], &[f64]); 3] = [
        (
            &[1.0, 0.3, -0.2, 0.1, 0.0, 1.0, 0.4, -0.3, 0.2, 0.1, 1.0, 0.5, -0.1, 0.2, 0.3, 1.0],
            &[0.9, -0.05, 0.4, 0.02],
        ),
        (
            &[0.5, -0.4, 0.3, 0.2, 0.6, 0.9, -0.1, 0.0, 0.1, 0.3, 0.8, -0.6, 0.0, 0.2, 0.1, 0.7],
            &[-0.6, 0.3, 0.01, 0.5],
        ),
        (
            &[1.2, 0.0, 0.0, 0.0, 0.2, 1.1, 0.0, 0.0, 0.1, 0.3, 0.9, 0.0, 0.0, 0.1, 0.2, 1.0],
            &[0.2, 0.2, -0.3, 0.03],
        ),
    ];
    for (entries, b) in cases {
        // 2 * lambda_min(Q) > 1 / (a - 1) keeps the objective strictly convex
        let fm = problem(entries, b, 0.5);
        let params = ScadParams::new(0.1);
        let fit = fit_scad(&fm, &params, None, DescentOptions::default()).unwrap();
        let (oracle, oracle_obj) = grid_minimize(&fm, &params, 3.0);
        assert!(fit.objective <= oracle_obj + 1e-9, "{} vs {}", fit.objective, oracle_obj);
        for j in 0..4 {
            assert!((fit.beta[j] - oracle[j]).abs() < 1e-5, "{:?} vs {:?}", fit.beta, oracle);
        }
    }
}

#[test]
fn finite_difference_rows() {
    let t = vec![0.0, 0.25, 0.5, 1.0];
    let v = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 2.5, 3.0, 3.5, 4.0]);
    let ts = TimeSeries::new(t, v).unwrap();
    let (y, x) = ts_rows(&ts, 0).unwrap();
    assert_eq!(y.as_slice(), &[4.0, 2.0, 2.0]);
    assert_eq!(x.nrows(), 3);
    assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0]);
}

#[test]
fn ts_cross_validation_picks_a_candidate() {
    let n = 60;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let v = DMatrix::from_fn(n, 3, |i, j| {
        let x = t[i];
        match j {
            0 => (-x).exp(),
            1 => (2.0 * x).sin() + 0.01 * ((i * 7 % 5) as f64),
            _ => x * x,
        }
    });
    let ts = TimeSeries::new(t, v).unwrap();
    let candidates = [1e-4, 1e-2, 1.0];
    let (chosen, scores) =
        cv_ts_lambda(&ts, 0, &candidates, 5, 3.7, InitStrategy::default(), DescentOptions::default()).unwrap();
    assert!(candidates.contains(&chosen));
    assert_eq!(scores.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn threshold_is_odd_and_monotone(
        z in -5.0..5.0f64,
        dz in 0.0..1.0f64,
        q in 0.3..3.0f64,
        lambda in 0.05..1.5f64,
        a in 2.1..5.0f64,
    ) {
        let p = ScadParams::new(lambda).with_a(a);
        prop_assert_eq!(scad_threshold(-z, q, &p), -scad_threshold(z, q, &p));
        prop_assert!(scad_threshold(z + dz, q, &p) >= scad_threshold(z, q, &p));
        if q * z.abs() <= lambda {
            prop_assert_eq!(scad_threshold(z, q, &p), 0.0);
        }
    }

    #[test]
    fn descent_never_increases_the_objective(
        entries in prop::collection::vec(-1.0..1.0f64, 36),
        b in prop::collection::vec(-1.0..1.0f64, 6),
        scale in 0.01..0.9f64,
    ) {
        let fm = problem(&entries, &b, 0.01);
        let params = ScadParams::new(scale * lambda_max(&fm, 3.7));
        let fit = fit_scad(&fm, &params, None, DescentOptions::default()).unwrap();
        for w in fit.objective_path.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        prop_assert!(fit.converged);
        let support: Vec<usize> = (0..6).filter(|&j| fit.beta[j] != 0.0).collect();
        prop_assert_eq!(&fit.support, &support);
    }

    #[test]
    fn permuting_variables_permutes_the_solution(
        entries in prop::collection::vec(-1.0..1.0f64, 25),
        b in prop::collection::vec(-1.0..1.0f64, 5),
        shift in 1usize..5,
        scale in 0.01..0.9f64,
    ) {
        let fm = problem(&entries, &b, 0.5);
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let q = DMatrix::from_fn(5, 5, |i, j| fm.q[(perm[i], perm[j])]);
        let bp = DVector::from_fn(5, |i, _| fm.b[perm[i]]);
        let permuted = FunctionalMatrix::new(0, bp, q).unwrap();
        let params = ScadParams::new(scale * lambda_max(&fm, 3.7));
        let opts = DescentOptions { tol: 1e-12, max_iter: 100_000 };
        let a = fit_scad(&fm, &params, None, opts).unwrap();
        let c = fit_scad(&permuted, &params, None, opts).unwrap();
        for i in 0..5 {
            prop_assert!((c.beta[i] - a.beta[perm[i]]).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_fits_follow_candidate_order(
        entries in prop::collection::vec(-1.0..1.0f64, 16),
        b in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let fm = problem(&entries, &b, 0.05);
        let lm = lambda_max(&fm, 3.7);
        let lambdas = [0.5 * lm, 0.01 * lm, lm];
        for init in [InitStrategy::Path, InitStrategy::Ols, InitStrategy::Best] {
            let fits = fit_scad_grid(&fm, &lambdas, 3.7, init, DescentOptions::default()).unwrap();
            for (fit, &l) in fits.iter().zip(&lambdas) {
                prop_assert_eq!(fit.params.lambda, l);
            }
            if init == InitStrategy::Path {
                prop_assert!(fits[2].beta.iter().all(|&x| x == 0.0));
            }
            if init == InitStrategy::Best {
                let path = fit_scad_grid(&fm, &lambdas, 3.7, InitStrategy::Path, DescentOptions::default()).unwrap();
                let ols = fit_scad_grid(&fm, &lambdas, 3.7, InitStrategy::Ols, DescentOptions::default()).unwrap();
                for k in 0..3 {
                    prop_assert_eq!(fits[k].objective, path[k].objective.min(ols[k].objective));
                }
            }
        }
    }
}
