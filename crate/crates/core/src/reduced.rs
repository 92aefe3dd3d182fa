//! Reduced dynamics on the random slow manifold
//!
//! ```text
//! dṽ = (B ṽ + V(ũ, ṽ)) dt + σ2 dL,   ũ_t = F^ε(θ_tω, ṽ_t − ς(θ_tω₂)) + ζ^ε(θ_tω₁)
//! ```
//!
//! and its comparison with the full system.

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::manifold::{shadow_point, BackwardWindow, EvalStats, ManifoldEvaluator, ShadowPoint};
use crate::model::{
    aligned_indices, check_divergence, check_stiffness, simulate_full, step_count, Analysis, Representation,
    SlowFastModel, TrajectoryPair,
};
use crate::realization::Realization;
use crate::stats::fit_decay_rate;

/// Reduced trajectory in original coordinates. Only `ṽ` is integrated;
/// `ũ` is read off the manifold at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub v_tilde: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub eval_stats: EvalStats,
    /// Fingerprint of the slow noise path that drove `ṽ`.
    pub slow_noise: u64,
}

impl ReducedTrajectory {
    pub fn u_at(&self, k: usize) -> &[f64] {
        &self.u_tilde[k * self.n..(k + 1) * self.n]
    }

    pub fn v_at(&self, k: usize) -> &[f64] {
        &self.v_tilde[k * self.m..(k + 1) * self.m]
    }

    pub fn to_pair(&self) -> TrajectoryPair {
        TrajectoryPair::from_parts(
            self.times.clone(),
            self.n,
            self.m,
            self.u_tilde.clone(),
            self.v_tilde.clone(),
            Representation::Original,
        )
        .expect("consistent lengths")
    }
}

/// Euler scheme for the reduced equation from `ṽ₀` (original coordinates).
/// `dt` must be a multiple of the window step and at most `1/(50‖B‖)`.
pub fn simulate_reduced(
    model: &SlowFastModel,
    omega: &Realization,
    v_tilde0: &[f64],
    t_end: f64,
    dt: f64,
    window: &BackwardWindow,
) -> Result<ReducedTrajectory> {
    let (n, m) = (model.n(), model.m());
    if v_tilde0.len() != m {
        return Err(Error::param("v_tilde0", format!("expected dimension {m}")));
    }
    check_stiffness(dt, 1.0 / (50.0 * model.b().operator_norm()))?;
    let steps = step_count(t_end, dt)?;
    let ratio = dt / window.dt;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::Alignment(format!("dt = {dt} is not a multiple of the window step {}", window.dt)));
    }
    let (s0, ss) = aligned_indices(omega.slow.grid(), dt, steps)?;
    let mut ev = ManifoldEvaluator::new(model, &omega.zeta, &omega.varsigma, *window)?;
    let mut v = v_tilde0.to_vec();
    let mut vbar = vec![0.0; m];
    let (mut gv, mut lin, mut dl) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut us = Vec::with_capacity((steps + 1) * n);
    let mut vs = Vec::with_capacity((steps + 1) * m);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let sig = omega.varsigma.value(t)?;
        for i in 0..m {
            vbar[i] = v[i] - sig[i];
        }
        let mut u = ev.eval(t, &vbar)?;
        for (x, z) in u.iter_mut().zip(omega.zeta.value(t)?) {
            *x += z;
        }
        us.extend_from_slice(&u);
        vs.extend_from_slice(&v);
        if k == steps {
            break;
        }
        // Points are visited once, so memoization would only hold memory.
        ev.clear_cache();
        model.v().eval(&u, &v, &mut gv);
        model.b().mul_vec_into(&v, &mut lin);
        omega.slow.increment_into(s0 + k * ss, s0 + (k + 1) * ss, &mut dl);
        for i in 0..m {
            v[i] += (lin[i] + gv[i]) * dt + model.sigma2() * dl[i];
        }
        check_divergence(&u, &v, k + 1, t + dt)?;
    }
    Ok(ReducedTrajectory {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        n,
        m,
        v_tilde: vs,
        u_tilde: us,
        eval_stats: ev.stats(),
        slow_noise: omega.slow.fingerprint(),
    })
}

/// `ṽ₀` paired with `z₀` through the shadow point: the shadow point of the
/// transformed trajectory from `z₀ − (ζ(0), ς(0))`, shifted back.
pub fn shadow_start(
    model: &SlowFastModel,
    omega: &Realization,
    z0: (&[f64], &[f64]),
    t_win: f64,
    window: &BackwardWindow,
) -> Result<(Vec<f64>, ShadowPoint)> {
    let (z, s) = (omega.zeta.value(0.0)?, omega.varsigma.value(0.0)?);
    let ubar: Vec<f64> = z0.0.iter().zip(z).map(|(a, b)| a - b).collect();
    let vbar: Vec<f64> = z0.1.iter().zip(s).map(|(a, b)| a - b).collect();
    let sp = shadow_point(model, &omega.zeta, &omega.varsigma, &ubar, &vbar, t_win, window)?;
    let v_tilde0 = sp.v0.iter().zip(s).map(|(a, b)| a + b).collect();
    Ok((v_tilde0, sp))
}

/// Full-versus-reduced gap and the tracking bound along it.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCurve {
    pub times: Vec<f64>,
    /// `|u − ũ| + |v − ṽ|`.
    pub gap: Vec<f64>,
    pub u_gap: Vec<f64>,
    pub v_gap: Vec<f64>,
    pub bound: Vec<f64>,
    /// Decay rate fitted on `[0, 5ε]` before the gap first drops below `floor`.
    pub fitted_rate: Option<f64>,
    /// Discretization floor `10·dt`.
    pub floor: f64,
    /// Reference rate `μ/ε`.
    pub reference_rate: f64,
    pub v_tilde0: Vec<f64>,
    /// `|Z₀|` of the shadow point when the reduced start came from it.
    pub shadow_correction: Option<f64>,
}

impl GapCurve {
    /// Largest `max(gap − floor, 0) − slack·bound`; non-positive when the
    /// bound (times `slack`) dominates the gap above the floor.
    pub fn dominance_excess(&self, slack: f64) -> f64 {
        self.gap
            .iter()
            .zip(&self.bound)
            .map(|(g, b)| (g - self.floor).max(0.0) - slack * b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Relative deviation of the fitted rate from `μ/ε`.
    pub fn rate_deviation(&self) -> Option<f64> {
        self.fitted_rate.map(|r| (r - self.reference_rate).abs() / self.reference_rate)
    }
}

/// Simulate the full system from `z₀` and the reduced one from `ṽ₀` with the
/// same noise and compare. Without `v_tilde0` the reduced start is the
/// shadow point of `z₀` over `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn compare_full_reduced(
    model: &SlowFastModel,
    omega: &Realization,
    z0: (&[f64], &[f64]),
    v_tilde0: Option<&[f64]>,
    t_end: f64,
    dt: f64,
    window: &BackwardWindow,
) -> Result<GapCurve> {
    let analysis = Analysis::new(model, Some(window.mu))?;
    let full = simulate_full(model, &omega.fast, &omega.slow, z0, t_end, dt)?;
    let (v_tilde0, shadow_correction) = match v_tilde0 {
        Some(v) => (v.to_vec(), None),
        None => {
            let (v, sp) = shadow_start(model, omega, z0, t_end, window)?;
            let o = sp.origin();
            (v, Some(norm(sp.x_at(o)) + norm(sp.y_at(o))))
        }
    };
    let red = simulate_reduced(model, omega, &v_tilde0, t_end, dt, window)?;
    if full.slow_noise() != Some(red.slow_noise) {
        return Err(Error::Alignment("full and reduced runs use different slow noise".into()));
    }
    if full.len() != red.times.len() {
        return Err(Error::Alignment("full and reduced grids differ".into()));
    }
    let (z, s) = (omega.zeta.value(0.0)?, omega.varsigma.value(0.0)?);
    let d = dist(z0.0, z) + dist(z0.1, s);
    let mut curve = GapCurve {
        times: full.times().to_vec(),
        gap: Vec::with_capacity(full.len()),
        u_gap: Vec::with_capacity(full.len()),
        v_gap: Vec::with_capacity(full.len()),
        bound: Vec::with_capacity(full.len()),
        fitted_rate: None,
        floor: 10.0 * dt,
        reference_rate: window.mu / model.epsilon(),
        v_tilde0,
        shadow_correction,
    };
    for k in 0..full.len() {
        let du = dist(full.u_at(k), red.u_at(k));
        let dv = dist(full.v_at(k), red.v_at(k));
        curve.u_gap.push(du);
        curve.v_gap.push(dv);
        curve.gap.push(du + dv);
        curve.bound.push(analysis.tracking_bound(curve.times[k], d));
    }
    let end = curve.gap.iter().position(|&g| g < curve.floor).unwrap_or(curve.gap.len());
    curve.fitted_rate = fit_decay_rate(&curve.times[..end], &curve.gap[..end], 5.0 * model.epsilon(), curve.floor);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::fixtures::{ts1, ts1_slow_noise, TS1_MU};
    use crate::model::{Coupling, DeclaredConstants};

    fn setup(model: &SlowFastModel, dt: f64, horizon: f64, seed: u64) -> (Realization, BackwardWindow) {
        let w = BackwardWindow::for_model(model, Some(TS1_MU), dt, 1e-8).unwrap();
        let r = Realization::generate(model, &ts1_slow_noise(), w.t_back, horizon, dt, Default::default(), seed, 0)
            .unwrap();
        (r, w)
    }

    #[test]
    fn zero_fast_coupling_reduces_to_the_slow_equation() {
        let model = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
            .coupling_v(Coupling::ScaledCos { c: 0.5 })
            .noise(0.0, 0.5)
            .epsilon(0.1)
            .declared(DeclaredConstants { lipschitz: 0.5, bound_u: 0.0, bound_v: 0.5 })
            .build()
            .unwrap();
        let dt = 2e-3;
        let (r, w) = setup(&model, dt, 1.0, 5);
        let red = simulate_reduced(&model, &r, &[0.4], 1.0, dt, &w).unwrap();
        assert!(red.u_tilde.iter().all(|&u| u == 0.0));
        // Same Euler recursion written out directly.
        let mut v = 0.4;
        let mut dl = [0.0];
        let o = r.slow.grid().origin();
        for k in 0..red.times.len() - 1 {
            assert!((red.v_at(k)[0] - v).abs() < 1e-12);
            r.slow.increment_into(o + k, o + k + 1, &mut dl);
            v += (-v + 0.5 * (0.0 - v).cos()) * dt + 0.5 * dl[0];
        }
        assert_eq!(red.v_tilde.len(), red.times.len());
    }

    #[test]
    fn reduced_state_is_slow_dimensional_and_on_the_manifold() {
        let model = ts1(0.1);
        let dt = 2e-3;
        let (r, w) = setup(&model, dt, 0.5, 6);
        let red = simulate_reduced(&model, &r, &[0.2], 0.5, dt, &w).unwrap();
        assert_eq!(red.v_tilde.len(), red.times.len() * model.m());
        let mut ev = ManifoldEvaluator::new(&model, &r.zeta, &r.varsigma, w).unwrap();
        for k in [0, 100, 250] {
            let t = red.times[k];
            let vbar = red.v_at(k)[0] - r.varsigma.value(t).unwrap()[0];
            let f = ev.eval(t, &[vbar]).unwrap()[0] + r.zeta.value(t).unwrap()[0];
            assert!((f - red.u_at(k)[0]).abs() < 1e-7);
        }
    }

    #[test]
    fn stiff_or_misaligned_steps_are_rejected() {
        let model = ts1(0.1);
        let (r, w) = setup(&model, 2e-3, 0.5, 7);
        assert!(matches!(simulate_reduced(&model, &r, &[0.0], 0.5, 0.05, &w), Err(Error::Stiffness { .. })));
        assert!(matches!(simulate_reduced(&model, &r, &[0.0], 0.5, 3e-3, &w), Err(Error::Alignment(_))));
    }

    #[test]
    fn shadow_start_gap_equals_the_correction() {
        let model = ts1(0.1);
        let dt = 2e-3;
        let (r, w) = setup(&model, dt, 0.6, 8);
        let z0 = (vec![1.2], vec![-0.5]);
        let c = compare_full_reduced(&model, &r, (&z0.0, &z0.1), None, 0.6, dt, &w).unwrap();
        let corr = c.shadow_correction.unwrap();
        assert!((c.gap[0] - corr).abs() < 1e-6, "gap(0) {} vs |Z0| {corr}", c.gap[0]);
        assert!(c.dominance_excess(1.2) <= 0.0);
        assert!(c.gap.iter().all(|&g| g >= 0.0));
    }
}
