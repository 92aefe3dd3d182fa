use super::*;
use crate::model::fixtures::ts1;
use crate::model::{simulate_full, Coupling, DeclaredConstants};
use crate::stats::quantiles;

const TOL: f64 = 1e-6;

fn ts1_scaled(eps: f64) -> ScaledModel {
    ScaledModel::new(ts1(eps).without_slow_noise()).unwrap()
}

fn setup(eps: f64, mu: f64, horizon: f64, seed: u64) -> (ScaledModel, Realization, BackwardWindow) {
    let s = ts1_scaled(eps);
    let w = scaled_window(&s, mu, 0.02, TOL).unwrap().with_picard_tol(1e-10);
    let om = scaled_realization(&s, w.t_back, horizon, 0.02, StationarySettings::default(), seed, 0).unwrap();
    (s, om, w)
}

fn linear(sigma1: f64) -> ScaledModel {
    let base = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
        .coupling_u(Coupling::Zero)
        .coupling_v(Coupling::Zero)
        .noise(sigma1, 0.0)
        .alpha(1.5)
        .epsilon(0.1)
        .declared(DeclaredConstants { lipschitz: 0.0, bound_u: 0.0, bound_v: 0.0 })
        .build()
        .unwrap();
    ScaledModel::new(base).unwrap()
}

#[test]
fn beta_reference_values() {
    let b = beta_of_epsilon(2.0, 1.0, 1.0, 0.1).unwrap();
    assert!((b.t0 - 10.0 * (1.8f64 / 1.9).ln()).abs() < 1e-12);
    // 30-digit evaluations of the same formulas.
    assert!((b.t0 + 0.5406722127027577).abs() < 1e-12, "{}", b.t0);
    assert!((b.beta - 0.058668936875347518).abs() < 1e-12, "{}", b.beta);
    let b = beta_of_epsilon(2.0, 1.0, 1.0, 0.01).unwrap();
    assert!((b.t0 + 0.5037794029957159).abs() < 1e-10, "{}", b.t0);
    assert!((b.beta - 0.005564293431625718).abs() < 1e-12, "{}", b.beta);
}

#[test]
fn beta_vanishes_monotonically() {
    let betas: Vec<BetaReport> = (1..=5).map(|k| beta_of_epsilon(2.0, 1.0, 1.0, 10f64.powi(-k)).unwrap()).collect();
    for w in betas.windows(2) {
        assert!(w[1].beta < w[0].beta);
    }
    assert!(betas[4].beta < 1e-4);
    // t₀ → (μ − γ1)/(μγ1) as ε → 0.
    assert!((betas[4].t0 + 0.5).abs() < 1e-4, "{}", betas[4].t0);
    assert!(betas.iter().all(|b| b.beta > 0.0 && b.t0 < 0.0));
}

#[test]
fn beta_domain_errors() {
    assert!(matches!(beta_of_epsilon(2.0, 1.0, 0.5, 0.6), Err(Error::Domain(_))));
    assert!(matches!(beta_of_epsilon(2.0, 1.0, 1.0, 0.0), Err(Error::Domain(_))));
    assert!(matches!(beta_of_epsilon(0.5, 1.0, 1.0, 0.6), Err(Error::Domain(_))));
}

#[test]
fn requires_zero_slow_noise() {
    assert!(ScaledModel::new(ts1(0.1)).is_err());
}

#[test]
fn zero_coupling_gives_zero_manifolds() {
    let base = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
        .coupling_u(Coupling::Zero)
        .coupling_v(Coupling::ScaledCos { c: 0.5 })
        .noise(1.0, 0.0)
        .alpha(1.5)
        .epsilon(0.1)
        .declared(DeclaredConstants { lipschitz: 0.5, bound_u: 0.0, bound_v: 0.5 })
        .build()
        .unwrap();
    let s = ScaledModel::new(base).unwrap();
    let w = scaled_window(&s, 0.5, 0.02, TOL).unwrap();
    let om = scaled_realization(&s, w.t_back, 1.0, 0.02, StationarySettings::default(), 1, 0).unwrap();
    for mode in [LimitMode::Epsilon, LimitMode::Zero] {
        assert_eq!(solve_f_scaled(&s, &om, 0.5, &[0.7], &w, mode).unwrap(), vec![0.0]);
    }
}

#[test]
fn zero_mode_lipschitz_constant() {
    let (s, om, w) = setup(0.1, 0.5, 1.0, 2);
    let an = Analysis::new(s.base(), Some(0.5)).unwrap();
    let bound = an.lipschitz / (an.rates.gamma1 - 0.5 - an.lipschitz);
    assert!((bound - 0.5).abs() < 1e-12);
    let mut ev = scaled_evaluator(&s, &om, &w, LimitMode::Zero).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in [(-2.0, 1.5), (0.0, 0.1), (0.3, 0.31), (4.0, -3.0)] {
        for t in [0.0, 0.5, 1.0] {
            let fa = ev.eval(t, &[a]).unwrap();
            let fb = ev.eval(t, &[b]).unwrap();
            worst = worst.max((fa[0] - fb[0]).abs() / f64::abs(a - b));
        }
    }
    assert!(worst > 0.0 && worst <= bound + 1e-6, "{worst}");
}

#[test]
fn mode_gap_scales_like_beta() {
    let (s, om, w) = setup(0.1, 0.5, 4.0, 3);
    let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.5).collect();
    let fit = fit_beta_constant(&s, &om, &[1.0], &times, &[0.2, 0.1, 0.05], &w).unwrap();
    assert!(fit.gaps.iter().all(|g| *g > 0.0));
    assert!(fit.spread < 0.5, "ratios {:?}", fit.ratios());
    // Both modes agree in the limit.
    assert!(fit.gaps[2] < fit.gaps[0]);
}

#[test]
fn bound_terms_for_ts1() {
    let s = ts1_scaled(0.1);
    let b = zero_limit_bound(&s, 0.5, &[1.0], &[1.0], &[0.2], 0.7, &[0.0, 10.0, 1e6]).unwrap();
    assert!((b.q - (0.5 / 1.5 + 0.05 / 0.4)).abs() < 1e-12);
    assert!((b.prefactor - 1.6154).abs() < 1e-4, "{}", b.prefactor);
    assert!((b.persistent_level - 2.4231).abs() < 1e-4, "{}", b.persistent_level);
    assert_eq!(b.term2[0], 0.0);
    let first = (2.0 * 0.8 + 2.0 * 0.5 / 2.0 + 0.5 / 1.0) / (1.0 - b.q);
    assert!((b.term1[0] - first).abs() < 1e-12);
    assert!((b.term2[2] - b.persistent_level).abs() < 1e-12);
    assert!((b.term3[1] - 0.7 * b.beta.beta).abs() < 1e-15);
    // Middle term at t = 1/ε.
    let at = zero_limit_bound(&s, 0.5, &[1.0], &[1.0], &[0.2], 0.0, &[10.0]).unwrap();
    assert!((at.term2[0] - (1.0 - (-1.0f64).exp()) * b.persistent_level).abs() < 1e-12);
}

#[test]
fn linear_scaled_system() {
    // U = V = 0 and no fast noise: ǔ = e^{At}u₀, v̌ = e^{εBt}v₀ up to Euler error.
    let s = linear(0.0);
    let om = scaled_realization(&s, 0.0, 1.0, 0.001, StationarySettings::default(), 4, 0).unwrap();
    let tr = simulate_scaled(&s, &om, (&[1.0], &[2.0]), 1.0, 0.001).unwrap();
    let (u, v) = tr.last();
    assert!((u[0] - (-2.0f64).exp()).abs() < 2e-3, "{}", u[0]);
    assert!((v[0] - 2.0 * (-0.1f64).exp()).abs() < 1e-4, "{}", v[0]);
    // With noise, ǔ − ζ̌ follows the linear flow from u₀ − ζ̌(0).
    let s = linear(1.0);
    let om = scaled_realization(&s, 0.0, 1.0, 0.001, StationarySettings::default(), 4, 0).unwrap();
    let tr = simulate_scaled(&s, &om, (&[1.0], &[2.0]), 1.0, 0.001).unwrap();
    let z0 = om.zeta.value(0.0).unwrap()[0];
    let z1 = om.zeta.value(1.0).unwrap()[0];
    let want = (-2.0f64).exp() * (1.0 - z0) + z1;
    assert!((tr.last().0[0] - want).abs() < 5e-3, "{} vs {want}", tr.last().0[0]);
    assert!(matches!(simulate_scaled(&s, &om, (&[1.0], &[2.0]), 1.0, 0.05), Err(Error::Stiffness { .. })));
}

#[test]
fn time_change_is_pathwise_exact() {
    // The Euler steps of both time scales coincide when the noise is
    // rescaled along with time.
    let eps = 0.1;
    let model = ts1(eps).without_slow_noise();
    let s = ScaledModel::new(model.clone()).unwrap();
    let params = StableParams::new(1.5, 1.0, 1).unwrap();
    let dt = eps / 100.0;
    let path = generate_two_sided_stable(params, Window::new(1.0, eps, dt), &mut rng_for(5, &[1])).unwrap();
    let zero = NoisePath::from_values(*path.grid(), 1, vec![0.0; path.grid().len()], PathLaw::Other).unwrap();
    let full = simulate_full(&model, &path, &zero, (&[1.0], &[0.5]), eps, dt).unwrap();
    let om =
        scaled_realization_from(&s, rescale_stable_path(&path, eps).unwrap(), StationarySettings::default()).unwrap();
    let scaled = simulate_scaled(&s, &om, (&[1.0], &[0.5]), 1.0, 0.01).unwrap();
    for k in [10, 50, 100] {
        assert!((full.u_at(k)[0] - scaled.u_at(k)[0]).abs() < 1e-10);
        assert!((full.v_at(k)[0] - scaled.v_at(k)[0]).abs() < 1e-10);
    }
}

#[test]
fn time_change_in_distribution() {
    // ǔ_1 from independent rescaled runs against u^ε at time ε.
    let eps = 0.1;
    let model = ts1(eps).without_slow_noise();
    let s = ScaledModel::new(model.clone()).unwrap();
    let params = StableParams::new(1.5, 1.0, 1).unwrap();
    let reps = 2000;
    let mut a = Vec::with_capacity(reps);
    let mut b = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let p = generate_two_sided_stable(params, Window::new(10.0, 1.0, 0.01), &mut rng_for(6, &[r, 1])).unwrap();
        let om = scaled_realization_from(&s, p, StationarySettings::default()).unwrap();
        a.push(simulate_scaled(&s, &om, (&[1.0], &[0.5]), 1.0, 0.01).unwrap().last().0[0]);
        let q =
            generate_two_sided_stable(params, Window::new(0.0, eps, eps / 100.0), &mut rng_for(6, &[r, 2])).unwrap();
        let zero = NoisePath::from_values(*q.grid(), 1, vec![0.0; q.grid().len()], PathLaw::Other).unwrap();
        b.push(simulate_full(&model, &q, &zero, (&[1.0], &[0.5]), eps, eps / 100.0).unwrap().last().0[0]);
    }
    let ps = [0.25, 0.5, 0.75];
    let (qa, qb) = (quantiles(&a, &ps), quantiles(&b, &ps));
    for (i, &p) in ps.iter().enumerate() {
        // Standard error of a sample quantile from the local density, read
        // off neighbouring quantiles of the pooled sample.
        let pooled: Vec<f64> = a.iter().chain(&b).cloned().collect();
        let h = 0.05;
        let spread = quantiles(&pooled, &[p + h, p - h]);
        let density = 2.0 * h / (spread[0] - spread[1]);
        let se_one = (p * (1.0 - p) / reps as f64).sqrt() / density;
        let se = se_one * 2f64.sqrt();
        assert!((qa[i] - qb[i]).abs() < 2.0 * se, "p = {p}: {} vs {} (se {se})", qa[i], qb[i]);
    }
}

#[test]
fn slow_drift_is_order_epsilon() {
    let (s, om, _) = setup(0.1, 0.5, 1.0, 7);
    let tr = simulate_scaled(&s, &om, (&[1.0], &[1.0]), 1.0, 0.02).unwrap();
    let drift = (tr.last().1[0] - 1.0).abs();
    // 2ε(‖B‖|v₀| + M_V)
    assert!(drift <= 2.0 * 0.1 * (1.0 + 0.5), "{drift}");
}

#[test]
fn linear_gap_vanishes() {
    let s = linear(0.0);
    let w = scaled_window(&s, 1.0, 0.02, TOL).unwrap();
    let om = scaled_realization(&s, w.t_back, 10.0, 0.02, StationarySettings::default(), 8, 0).unwrap();
    let exp = gap_experiment(&s, &om, (&[1.0], &[0.0]), &[0.2, 0.1], 10.0, 0.02, &w, 1.0).unwrap();
    for row in exp.rows.iter().filter(|r| r.t >= 8.0) {
        assert!(row.measured_gap < 1e-6, "{row:?}");
    }
    assert!(exp.rows.iter().all(|r| r.measured_gap <= r.bound() + 1e-12));
}

#[test]
fn ts1_gap_bound_and_persistence() {
    let grid = [0.2, 0.1, 0.05];
    let (s, om, w) = setup(0.1, 0.5, 40.0, 9);
    let exp = gap_experiment(&s, &om, (&[1.0], &[1.0]), &grid, 40.0, 0.02, &w, 0.5).unwrap();
    assert!(exp.dominance_excess() <= 0.0, "excess {}", exp.dominance_excess());
    for b in &exp.bounds {
        let level = b.persistent_level;
        let eps = b.epsilon;
        let mid = b
            .times
            .iter()
            .zip(&b.term2)
            .filter(|(t, _)| **t >= 1.0 / eps - 1e-9 && **t <= 2.0 / eps + 1e-9)
            .map(|(_, m)| *m)
            .fold(f64::INFINITY, f64::min);
        assert!(mid >= 0.5 * level, "ε = {eps}: {mid} vs {level}");
    }
    let betas: Vec<f64> = exp.bounds.iter().map(|b| b.term3[0]).collect();
    assert!(betas[2] < betas[1] && betas[1] < betas[0]);
    assert!(exp.bounds.windows(2).all(|p| p[1].persistent_level > 0.0));
}

#[test]
fn empty_grid_is_a_configuration_error() {
    let (s, om, w) = setup(0.1, 0.5, 1.0, 10);
    assert!(matches!(gap_experiment(&s, &om, (&[1.0], &[1.0]), &[], 1.0, 0.02, &w, 0.5), Err(Error::Configuration(_))));
}
