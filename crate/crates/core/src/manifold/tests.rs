use super::*;
use crate::error::Error;
use crate::linalg::Matrix;
use crate::model::fixtures::{ts1, ts1_slow_noise, TS1_MU};
use crate::model::{Analysis, Coupling, DeclaredConstants, SlowFastModel};
use crate::realization::Realization;

const DT: f64 = 1e-3;

fn ts1_setup(eps: f64, lookback: f64, seed: u64) -> (SlowFastModel, Realization, BackwardWindow) {
    let model = ts1(eps);
    let window = BackwardWindow::for_model(&model, Some(TS1_MU), DT, DEFAULT_TRUNCATION_TOL).unwrap();
    let r = Realization::generate(
        &model,
        &ts1_slow_noise(),
        lookback + window.t_back,
        2.5,
        DT,
        Default::default(),
        seed,
        0,
    )
    .unwrap();
    (model, r, window)
}

#[test]
fn window_length_matches_truncation_tolerance() {
    let w = BackwardWindow::for_model(&ts1(0.1), Some(1.0), DT, 1e-8).unwrap();
    // e^{-(γ1−μ)T/ε} = 1e-8 at T = 0.1·ln(1e8).
    assert!((w.t_back - 0.1 * 1e8f64.ln()).abs() <= DT);
    assert!(w.check_truncation(10.0).is_ok());
    assert!(w.check_truncation(5.0).is_err());
}

#[test]
fn zero_fast_coupling_gives_zero_map() {
    let model = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
        .coupling_v(Coupling::ScaledCos { c: 0.5 })
        .noise(1.0, 0.5)
        .alpha(1.5)
        .epsilon(0.1)
        .declared(DeclaredConstants { lipschitz: 0.5, bound_u: 0.0, bound_v: 0.5 })
        .build()
        .unwrap();
    let w = BackwardWindow::for_model(&model, Some(1.0), DT, 1e-8).unwrap();
    let r =
        Realization::generate(&model, &ts1_slow_noise(), w.t_back + 0.5, 0.5, DT, Default::default(), 3, 0).unwrap();
    let sol = solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[0.7], &w).unwrap();
    assert_eq!(sol.f_value, vec![0.0]);
    assert_eq!(sol.iterations, 1);
    let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
    for (t, v) in [(0.0, -3.0), (0.25, 1.0), (0.5, 10.0)] {
        assert_eq!(ev.eval(t, &[v]).unwrap(), vec![0.0]);
    }
    // σ1 = 0 as well: the manifold point is (0, y + ς(0)).
    let quiet = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
        .coupling_v(Coupling::ScaledCos { c: 0.5 })
        .noise(0.0, 0.5)
        .epsilon(0.1)
        .declared(DeclaredConstants { lipschitz: 0.5, bound_u: 0.0, bound_v: 0.5 })
        .build()
        .unwrap();
    let r = Realization::generate(&quiet, &ts1_slow_noise(), w.t_back, 0.0, DT, Default::default(), 4, 0).unwrap();
    let (u, v) = manifold_point(&quiet, &r.zeta, &r.varsigma, &[0.3], &w).unwrap();
    assert_eq!(u, vec![0.0]);
    assert!((v[0] - 0.3 - r.varsigma.value(0.0).unwrap()[0]).abs() < 1e-15);
}

#[test]
fn ts1_solution_respects_contraction_and_bound() {
    let (model, r, w) = ts1_setup(0.1, 0.0, 11);
    let q = Analysis::new(&model, Some(TS1_MU)).unwrap().q();
    assert!((q - (0.5 + 0.05 / 0.9)).abs() < 1e-12);
    for v0 in [-2.0, 0.0, 0.4, 3.0] {
        let sol = solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[v0], &w).unwrap();
        assert!(sol.max_contraction <= q + 0.05, "contraction {} > q + 0.05", sol.max_contraction);
        assert!(sol.f_value[0].abs() <= 0.25 + w.truncation_tol, "|F| = {}", sol.f_value[0].abs());
        assert!(sol.iterations <= 40, "{} iterations", sol.iterations);
        assert!(sol.final_residual < w.picard_tol);
        assert_eq!(sol.v_at(sol.times.len() - 1), &[v0]);
        assert_eq!(sol.f_value, sol.u_at(sol.times.len() - 1));
        assert!(sol.times[0] <= -w.t_back + 1e-9);
    }
}

#[test]
fn ts1_map_is_lipschitz_with_the_predicted_constant() {
    let (model, r, w) = ts1_setup(0.1, 0.0, 12);
    let lip = Analysis::new(&model, Some(TS1_MU)).unwrap().manifold_lipschitz();
    assert!((lip - 1.125).abs() < 1e-9);
    let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
    let ys: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
    let fs: Vec<f64> = ys.iter().map(|&y| ev.eval(0.0, &[y]).unwrap()[0]).collect();
    let mut worst: f64 = 0.0;
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            worst = worst.max((fs[i] - fs[j]).abs() / (ys[i] - ys[j]).abs());
        }
    }
    assert!(worst <= lip, "observed Lipschitz ratio {worst}");
}

#[test]
fn evaluation_along_a_solution_reproduces_it() {
    let (model, r, w) = ts1_setup(0.1, 1.0, 13);
    let sol = solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[0.8], &w).unwrap();
    let last = sol.times.len() - 1;
    let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
    // Points well inside the window, where the earlier truncation of the
    // shifted problem is still below tolerance.
    for back in [0usize, 50, 200, 400] {
        let j = last - back;
        let f = ev.eval(sol.times[j], sol.v_at(j)).unwrap();
        assert!((f[0] - sol.u_at(j)[0]).abs() < 1e-6, "t = {}: {} vs {}", sol.times[j], f[0], sol.u_at(j)[0]);
    }
}

#[test]
fn doubling_the_window_changes_the_value_below_tolerance() {
    let (model, r, w) = ts1_setup(0.1, 2.0, 14);
    let w = w.with_picard_tol(1e-12);
    let long = BackwardWindow { t_back: 2.0 * w.t_back, ..w };
    for v0 in [-1.0, 0.5] {
        let a = solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[v0], &w).unwrap();
        let b = solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[v0], &long).unwrap();
        assert!((a.f_value[0] - b.f_value[0]).abs() < 2.0 * w.truncation_tol);
    }
}

#[test]
fn warm_started_evaluator_agrees_with_cold_solves() {
    let (model, r, w) = ts1_setup(0.1, 0.5, 15);
    let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
    for k in 0..20 {
        let t = k as f64 * 0.01;
        let v = 0.3 + 0.1 * k as f64;
        let warm = ev.eval(t, &[v]).unwrap()[0];
        let cold = eval_f(&model, &r.zeta, &r.varsigma, t, &[v], &w).unwrap()[0];
        assert!((warm - cold).abs() < 1e-7);
    }
    assert_eq!(ev.eval(0.0, &[0.3]).unwrap(), ev.eval(0.0, &[0.3]).unwrap());
    assert!(ev.stats().cache_hits >= 1);
}

#[test]
fn errors_for_large_epsilon_and_short_paths() {
    let (_, r, w) = ts1_setup(0.1, 0.0, 16);
    let big = ts1(0.6);
    assert!(matches!(
        solve_lyapunov_perron(&big, &r.zeta, &r.varsigma, &[0.0], &w),
        Err(Error::ContractionViolated { .. })
    ));
    let model = ts1(0.1);
    let too_long = BackwardWindow { t_back: 1e3, ..w };
    assert!(matches!(solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[0.0], &too_long), Err(Error::Window(_))));
    let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
    assert!(matches!(ev.eval(-100.0, &[0.0]), Err(Error::Window(_))));
    assert!(matches!(ev.eval(0.0005, &[0.0]), Err(Error::Window(_))));
    let capped = w.with_max_iterations(2);
    assert!(matches!(
        solve_lyapunov_perron(&model, &r.zeta, &r.varsigma, &[0.0], &capped),
        Err(Error::NonConvergence { iterations: 2, .. })
    ));
}

#[test]
fn shadow_of_a_manifold_point_is_itself() {
    let (model, r, w) = ts1_setup(0.1, 1.0, 17);
    let v0 = [0.6];
    let f = eval_f(&model, &r.zeta, &r.varsigma, 0.0, &v0, &w).unwrap();
    let s = shadow_point(&model, &r.zeta, &r.varsigma, &f, &v0, 0.5, &w).unwrap();
    let norms = s.correction_norms();
    let after = norms[s.origin()..].iter().cloned().fold(0.0, f64::max);
    assert!(after <= 10.0 * w.picard_tol, "sup_(t≥0) |Z| = {after}");
    assert!(s.manifold_gap < 10.0 * w.picard_tol);
}

#[test]
fn shadow_point_lies_on_the_manifold_within_bounds() {
    let (model, r, w) = ts1_setup(0.1, 1.0, 18);
    let s = shadow_point(&model, &r.zeta, &r.varsigma, &[1.5], &[-0.4], 2.0, &w).unwrap();
    assert!(s.manifold_gap < 10.0 * w.picard_tol, "gap {}", s.manifold_gap);
    assert!(s.weighted_sup <= s.weighted_bound, "{} > {}", s.weighted_sup, s.weighted_bound);
    assert!(s.max_contraction <= Analysis::new(&model, Some(TS1_MU)).unwrap().q() + 0.05);
    assert!(s.residual < 1e-6);
    let rate = s.decay_rate.expect("enough points to fit");
    // The correction decays at least at the weight rate μ/ε.
    assert!(rate >= 0.8 * TS1_MU / 0.1, "rate {rate}");
}

#[test]
fn gauss_seidel_sweep_reaches_the_same_fixed_point() {
    let (model, r, w) = ts1_setup(0.1, 0.0, 19);
    let steps = w.steps();
    let (mut zs, mut vs) = (Vec::new(), Vec::new());
    solver::window_slice(&r.zeta, 0.0, w.dt, steps, &mut zs).unwrap();
    solver::window_slice(&r.varsigma, 0.0, w.dt, steps, &mut vs).unwrap();
    let sys = LpSystem::original(&model, TS1_MU).unwrap();
    let mut jacobi = LpSolver::new(sys.clone(), w.dt, steps);
    let a = jacobi.solve(&zs, &vs, &[0.9], Warm::Cold, 1e-12, 200).unwrap();
    let mut gs = LpSolver::new(sys, w.dt, steps);
    gs.set_gauss_seidel(true);
    let (mut gu, mut gv) = (Vec::new(), Vec::new());
    let b = gs.solve_with_guess(&zs, &vs, &[0.9], &mut gu, &mut gv, Warm::Cold, 1e-12, 200).unwrap();
    assert!(b.iterations < a.iterations, "{} vs {}", b.iterations, a.iterations);
    assert!((jacobi.f_value()[0] - gu[steps]).abs() < 1e-11);
    // Re-solving from the converged guess takes one sweep.
    let c = gs.solve_with_guess(&zs, &vs, &[0.9], &mut gu, &mut gv, Warm::Keep, 1e-10, 200).unwrap();
    assert_eq!(c.iterations, 1);
}
