//! Shadow points: the on-manifold initial value whose trajectory tracks a
//! given trajectory of the transformed system exponentially fast.
//!
//! With `z̄_t` the transformed trajectory from `z̄₀` (extended to `t ≤ 0` by
//! `((I − |t|A)^{-1} ū₀, v̄₀)`), the correction `Z = (X, Y)` solves
//!
//! ```text
//! X_t = Z⁰_u(t) + ∫_{-∞}^t e^{(A/ε)(t−r)} ε⁻¹ ΔU_r dr
//! Y_t = Z⁰_v(t) − ∫_t^∞  e^{B(t−r)} ΔV_r dr
//! ```
//!
//! where `Δ·_r = ·(z̄_r + Z_r + stationary) − ·(z̄_r + stationary)` and `Z⁰` is
//! `I(z̄) − z̄` for `t ≤ 0` continued by the free fast decay for `t > 0`.
//! The shadow point is `z̄₀ + Z₀`.

use super::kernels::StepWeights;
use super::solver::{check_dims, solve_system_at, window_slice, BackwardWindow, LpSystem};
use crate::error::{Error, Result};
use crate::levy_noise::StationaryPath;
use crate::linalg::{dist, norm, Matrix};
use crate::model::{Analysis, SlowFastModel};
use crate::stats::fit_decay_rate;

/// Correction values below this are not used to fit the decay rate.
const DECAY_FIT_FLOOR: f64 = 1e-11;

/// Result of [`shadow_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowPoint {
    /// `(ū̄₀, v̄̄₀)` in transformed coordinates.
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub times: Vec<f64>,
    pub n: usize,
    pub m: usize,
    /// Correction `X` (row-major, `n` per time).
    pub x_path: Vec<f64>,
    /// Correction `Y` (row-major, `m` per time).
    pub y_path: Vec<f64>,
    /// Fitted exponential rate of `|Z_t|` on `[0, 5ε]`.
    pub decay_rate: Option<f64>,
    pub iterations: usize,
    /// Last Picard change plus the forward-tail bound.
    pub residual: f64,
    pub tail_bound: f64,
    pub max_contraction: f64,
    /// `sup_t e^{μt/ε}|Z_t|`.
    pub weighted_sup: f64,
    /// `(2(|ū₀|+|v̄₀|) + 2M_U/γ1 + M_V/γ2)/(1−q)`.
    pub weighted_bound: f64,
    /// `|ū̄₀ − F^ε(ω, v̄̄₀)|`.
    pub manifold_gap: f64,
}

impl ShadowPoint {
    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x_path[k * self.n..(k + 1) * self.n]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y_path[k * self.m..(k + 1) * self.m]
    }

    /// `|X_t| + |Y_t|` on the grid.
    pub fn correction_norms(&self) -> Vec<f64> {
        (0..self.times.len()).map(|k| norm(self.x_at(k)) + norm(self.y_at(k))).collect()
    }

    /// Index of `t = 0`.
    pub fn origin(&self) -> usize {
        self.times.iter().position(|&t| t.abs() < 1e-12).unwrap_or(0)
    }
}

struct Couplings<'a> {
    sys: &'a LpSystem,
    n: usize,
    m: usize,
    xu: Vec<f64>,
    xv: Vec<f64>,
}

impl Couplings<'_> {
    /// `(U, V)` at `(u + ζ, v + ς)`.
    fn eval(&mut self, u: &[f64], v: &[f64], zeta: &[f64], vsig: &[f64], gu: &mut [f64], gv: &mut [f64]) {
        let (cu, cv) = self.sys.couplings();
        for i in 0..self.n {
            self.xu[i] = u[i] + zeta[i];
        }
        for i in 0..self.m {
            self.xv[i] = v[i] + vsig[i];
        }
        cu.eval(&self.xu, &self.xv, gu);
        cv.eval(&self.xu, &self.xv, gv);
    }
}

/// Shadow point of the transformed trajectory from `(ū₀, v̄₀)` over the
/// forward horizon `t_win`. The backward half of the grid covers the
/// longer of `t_win` and the window's `T_back`; both halves use the
/// window's step.
pub fn shadow_point(
    model: &SlowFastModel,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    u_bar0: &[f64],
    v_bar0: &[f64],
    t_win: f64,
    window: &BackwardWindow,
) -> Result<ShadowPoint> {
    let analysis = Analysis::new(model, Some(window.mu))?;
    let sys = LpSystem::original(model, window.mu)?;
    let eps = model.epsilon();
    window.check_truncation((model.rates().gamma1 - window.mu) / eps)?;
    check_dims(&sys, zeta, varsigma, v_bar0)?;
    let (n, m) = (sys.n(), sys.m());
    if u_bar0.len() != n {
        return Err(Error::param("u_bar0", format!("expected dimension {n}")));
    }
    if !(t_win > 0.0 && t_win.is_finite()) {
        return Err(Error::param("T_win", format!("{t_win} must be positive")));
    }
    let h = window.dt;
    let kf = (t_win / h - 1e-9).ceil().max(1.0) as usize;
    let kb = window.steps().max(kf);
    let len = kb + kf + 1;
    let t_end = kf as f64 * h;
    let (mut zs, mut vs) = (Vec::new(), Vec::new());
    window_slice(zeta, t_end, h, len - 1, &mut zs)?;
    window_slice(varsigma, t_end, h, len - 1, &mut vs)?;
    let times: Vec<f64> = (0..len).map(|i| (i as f64 - kb as f64) * h).collect();

    let (fast_gen, fast_gain) = sys.fast();
    let (slow_gen, slow_gain) = sys.slow();
    let fast_fwd = StepWeights::forward(fast_gen, fast_gain, h);
    let slow_fwd = StepWeights::forward(slow_gen, slow_gain, h);
    let slow_bwd = StepWeights::backward(slow_gen, slow_gain, h);
    let mut g = Couplings { sys: &sys, n, m, xu: vec![0.0; n], xv: vec![0.0; m] };

    // Reference trajectory z̄ and its couplings.
    let mut bu = vec![0.0; len * n];
    let mut bv = vec![0.0; len * m];
    for i in 0..=kb {
        let s = (kb - i) as f64 * h;
        let eye = Matrix::identity(n);
        let shifted =
            Matrix::new(n, n, eye.as_slice().iter().zip(model.a().as_slice()).map(|(e, a)| e - s * a).collect())?;
        let inv = shifted.inverse().ok_or_else(|| Error::Domain(format!("I − |t|A is singular at t = {}", -s)))?;
        inv.mul_vec_into(u_bar0, &mut bu[i * n..(i + 1) * n]);
        bv[i * m..(i + 1) * m].copy_from_slice(v_bar0);
    }
    let mut gu0 = vec![0.0; len * n];
    let mut gv0 = vec![0.0; len * m];
    for i in 0..=kb {
        let (u, v) = (&bu[i * n..(i + 1) * n], &bv[i * m..(i + 1) * m]);
        g.eval(
            u,
            v,
            &zs[i * n..(i + 1) * n],
            &vs[i * m..(i + 1) * m],
            &mut gu0[i * n..(i + 1) * n],
            &mut gv0[i * m..(i + 1) * m],
        );
    }
    // Forward part: implicit exponential trapezoid, the same quadrature the
    // correction uses, so z̄ + Z is the discrete trajectory from the shadow point.
    let (mut pu, mut pv) = (vec![0.0; n], vec![0.0; m]);
    let (mut gu1, mut gv1) = (vec![0.0; n], vec![0.0; m]);
    for i in kb + 1..len {
        let (gu_prev, gu_rest) = gu0.split_at_mut(i * n);
        let (gv_prev, gv_rest) = gv0.split_at_mut(i * m);
        let (gu_prev, gv_prev) = (&gu_prev[(i - 1) * n..], &gv_prev[(i - 1) * m..]);
        gu1.copy_from_slice(gu_prev);
        gv1.copy_from_slice(gv_prev);
        let (bu_prev, bu_cur) = bu.split_at_mut(i * n);
        let (bv_prev, bv_cur) = bv.split_at_mut(i * m);
        let (bu_prev, bv_prev) = (&bu_prev[(i - 1) * n..], &bv_prev[(i - 1) * m..]);
        let (bu_cur, bv_cur) = (&mut bu_cur[..n], &mut bv_cur[..m]);
        for _ in 0..100 {
            fast_fwd.step(bu_prev, gu_prev, &gu1, &mut pu);
            slow_fwd.step(bv_prev, gv_prev, &gv1, &mut pv);
            let change = dist(&pu, bu_cur) + dist(&pv, bv_cur);
            bu_cur.copy_from_slice(&pu);
            bv_cur.copy_from_slice(&pv);
            g.eval(bu_cur, bv_cur, &zs[i * n..(i + 1) * n], &vs[i * m..(i + 1) * m], &mut gu1, &mut gv1);
            if change <= 1e-15 * (1.0 + norm(&pu) + norm(&pv)) {
                break;
            }
        }
        gu_rest[..n].copy_from_slice(&gu1);
        gv_rest[..m].copy_from_slice(&gv1);
    }

    // Z⁰: I(z̄) − z̄ on t ≤ 0, free fast decay of its value at 0 afterwards.
    let mut z0u = vec![0.0; len * n];
    let mut z0v = vec![0.0; len * m];
    {
        let mut i1 = vec![0.0; n];
        let mut next = vec![0.0; n];
        for i in 0..=kb {
            if i > 0 {
                fast_fwd.step(&i1, &gu0[(i - 1) * n..i * n], &gu0[i * n..(i + 1) * n], &mut next);
                std::mem::swap(&mut i1, &mut next);
            }
            for d in 0..n {
                z0u[i * n + d] = i1[d] - bu[i * n + d];
            }
        }
        let mut j = vec![0.0; m];
        let mut anchor = v_bar0.to_vec();
        let mut nj = vec![0.0; m];
        let mut na = vec![0.0; m];
        for i in (0..=kb).rev() {
            if i < kb {
                slow_bwd.step(&j, &gv0[i * m..(i + 1) * m], &gv0[(i + 1) * m..(i + 2) * m], &mut nj);
                slow_bwd.e.mul_vec_into(&anchor, &mut na);
                std::mem::swap(&mut j, &mut nj);
                std::mem::swap(&mut anchor, &mut na);
            }
            for d in 0..m {
                z0v[i * m + d] = anchor[d] - j[d] - bv[i * m + d];
            }
        }
        for i in kb + 1..len {
            let (prev, cur) = z0u.split_at_mut(i * n);
            fast_fwd.e.mul_vec_into(&prev[(i - 1) * n..], &mut cur[..n]);
        }
    }

    // Picard iteration on Z.
    let rate = sys.rate();
    let weights: Vec<f64> = times.iter().map(|&t| (rate * t).exp()).collect();
    let mut xu = z0u.clone();
    let mut yv = z0v.clone();
    let mut nxu = vec![0.0; len * n];
    let mut nyv = vec![0.0; len * m];
    let mut du = vec![0.0; len * n];
    let mut dv = vec![0.0; len * m];
    let (mut su, mut sv) = (vec![0.0; n], vec![0.0; m]);
    let mut iterations = 0;
    let mut picard = f64::NAN;
    let mut prev = f64::NAN;
    let mut max_contraction: f64 = 0.0;
    let mut converged = false;
    for it in 1..=window.max_iterations {
        iterations = it;
        for i in 0..len {
            for d in 0..n {
                su[d] = bu[i * n + d] + xu[i * n + d];
            }
            for d in 0..m {
                sv[d] = bv[i * m + d] + yv[i * m + d];
            }
            let (cu, cv) = (&mut du[i * n..(i + 1) * n], &mut dv[i * m..(i + 1) * m]);
            g.eval(&su, &sv, &zs[i * n..(i + 1) * n], &vs[i * m..(i + 1) * m], cu, cv);
            for d in 0..n {
                cu[d] -= gu0[i * n + d];
            }
            for d in 0..m {
                cv[d] -= gv0[i * m + d];
            }
        }
        nxu[..n].fill(0.0);
        for i in 0..len - 1 {
            let (lo, hi) = nxu.split_at_mut((i + 1) * n);
            fast_fwd.step(&lo[i * n..], &du[i * n..(i + 1) * n], &du[(i + 1) * n..(i + 2) * n], &mut hi[..n]);
        }
        nyv[(len - 1) * m..].fill(0.0);
        for i in (0..len - 1).rev() {
            let (lo, hi) = nyv.split_at_mut((i + 1) * m);
            slow_bwd.step(&hi[..m], &dv[i * m..(i + 1) * m], &dv[(i + 1) * m..(i + 2) * m], &mut lo[i * m..]);
        }
        for (x, z) in nxu.iter_mut().zip(&z0u) {
            *x += z;
        }
        for (y, z) in nyv.iter_mut().zip(&z0v) {
            *y = z - *y;
        }
        let res = (0..len)
            .map(|i| {
                weights[i]
                    * (dist(&nxu[i * n..(i + 1) * n], &xu[i * n..(i + 1) * n])
                        + dist(&nyv[i * m..(i + 1) * m], &yv[i * m..(i + 1) * m]))
            })
            .fold(0.0, f64::max);
        std::mem::swap(&mut xu, &mut nxu);
        std::mem::swap(&mut yv, &mut nyv);
        if !res.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual: res });
        }
        if prev > 1e-13 {
            max_contraction = max_contraction.max(res / prev);
        }
        picard = res;
        if res < window.picard_tol {
            converged = true;
            break;
        }
        prev = res;
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, residual: picard });
    }

    let norms: Vec<f64> = (0..len).map(|i| norm(&xu[i * n..(i + 1) * n]) + norm(&yv[i * m..(i + 1) * m])).collect();
    let weighted_sup = norms.iter().zip(&weights).map(|(z, w)| z * w).fold(0.0, f64::max);
    let r = analysis.rates;
    let l = analysis.lipschitz;
    let tail_bound = eps * l * (-window.mu * t_win / eps).exp() / (window.mu - eps * r.gamma2) * weighted_sup;
    let q = analysis.q();
    let weighted_bound =
        (2.0 * (norm(u_bar0) + norm(v_bar0)) + 2.0 * analysis.bound_u / r.gamma1 + analysis.bound_v / r.gamma2)
            / (1.0 - q);

    let u0: Vec<f64> = (0..n).map(|d| u_bar0[d] + xu[kb * n + d]).collect();
    let v0: Vec<f64> = (0..m).map(|d| v_bar0[d] + yv[kb * m + d]).collect();
    let f = solve_system_at(sys.clone(), zeta, varsigma, 0.0, &v0, window)?;
    let manifold_gap = dist(&u0, &f.f_value);

    let decay_rate = fit_decay_rate(
        &times[kb..],
        &norms[kb..],
        5.0 * eps,
        DECAY_FIT_FLOOR.max(10.0 * window.picard_tol * (-rate * 5.0 * eps).exp()),
    );

    Ok(ShadowPoint {
        u0,
        v0,
        times,
        n,
        m,
        x_path: xu,
        y_path: yv,
        decay_rate,
        iterations,
        residual: picard + tail_bound,
        tail_bound,
        max_contraction,
        weighted_sup,
        weighted_bound,
        manifold_gap,
    })
}
