//! Picard iteration for the Lyapunov–Perron integral equation
//!
//! ```text
//! û(t) = ∫_{-∞}^t e^{G_u(t−r)} c_u U(û_r + ζ_r, v̂_r + ς_r) dr
//! v̂(t) = e^{G_v t} v̄₀ − ∫_t^0 e^{G_v(t−r)} c_v V(û_r + ζ_r, v̂_r + ς_r) dr,   t ≤ 0
//! ```
//!
//! on a truncated backward window, in the norm `sup_t e^{rate·t}(|û|+|v̂|)`.

use super::kernels::StepWeights;
use crate::error::{Error, Result};
use crate::levy_noise::StationaryPath;
use crate::linalg::Matrix;
use crate::model::{Analysis, Coupling, SlowFastModel};

/// Default Picard stopping tolerance in the weighted norm.
pub const DEFAULT_PICARD_TOL: f64 = 1e-8;
/// Default bound on the discarded tail of the backward integral.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Residual ratios are only formed when the previous residual exceeds this.
const RATIO_FLOOR: f64 = 1e-13;

/// Coefficients of the fixed-point problem and the weight rate of its norm.
#[derive(Debug, Clone)]
pub struct LpSystem {
    u: Coupling,
    v: Coupling,
    fast_gen: Matrix,
    fast_gain: f64,
    slow_gen: Matrix,
    slow_gain: f64,
    rate: f64,
    q: f64,
}

impl LpSystem {
    /// The original-time problem: `G_u = A/ε`, `c_u = 1/ε`, `G_v = B`,
    /// `c_v = 1`, weight rate `μ/ε`. Errors unless the operator contracts.
    pub fn original(model: &SlowFastModel, mu: f64) -> Result<Self> {
        let analysis = Analysis::new(model, Some(mu))?;
        analysis.ensure_contraction()?;
        let form = model.original_form();
        Ok(Self {
            u: model.u().clone(),
            v: model.v().clone(),
            fast_gen: form.fast_gen,
            fast_gain: form.fast_gain,
            slow_gen: form.slow_gen,
            slow_gain: form.slow_gain,
            rate: mu / model.epsilon(),
            q: analysis.q(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        u: Coupling,
        v: Coupling,
        fast_gen: Matrix,
        fast_gain: f64,
        slow_gen: Matrix,
        slow_gain: f64,
        rate: f64,
        q: f64,
    ) -> Self {
        Self { u, v, fast_gen, fast_gain, slow_gen, slow_gain, rate, q }
    }

    pub fn n(&self) -> usize {
        self.fast_gen.rows()
    }

    pub(crate) fn couplings(&self) -> (&Coupling, &Coupling) {
        (&self.u, &self.v)
    }

    pub(crate) fn fast(&self) -> (&Matrix, f64) {
        (&self.fast_gen, self.fast_gain)
    }

    pub(crate) fn slow(&self) -> (&Matrix, f64) {
        (&self.slow_gen, self.slow_gain)
    }

    pub fn m(&self) -> usize {
        self.slow_gen.rows()
    }

    /// Weight rate of the norm (`μ/ε` in original time).
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Contraction constant of the continuous operator.
    pub fn q(&self) -> f64 {
        self.q
    }
}

/// Backward truncation window and solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardWindow {
    pub t_back: f64,
    pub dt: f64,
    /// Weight rate `μ` (divided by `ε` in original time).
    pub mu: f64,
    pub truncation_tol: f64,
    pub picard_tol: f64,
    pub max_iterations: usize,
}

impl BackwardWindow {
    /// `t_back` is rounded up to a multiple of `dt`.
    pub fn new(t_back: f64, dt: f64, mu: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("{dt} must be positive")));
        }
        if !(t_back > 0.0 && t_back.is_finite()) {
            return Err(Error::param("T_back", format!("{t_back} must be positive")));
        }
        if !(mu > 0.0) {
            return Err(Error::param("mu", format!("{mu} must be positive")));
        }
        let steps = (t_back / dt - 1e-9).ceil().max(1.0);
        Ok(Self {
            t_back: steps * dt,
            dt,
            mu,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
            picard_tol: DEFAULT_PICARD_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        })
    }

    /// Shortest window with `e^{-(γ1−μ)T/ε} ≤ tol`; `mu = None` picks the
    /// default `(γ1 − L)/2`.
    pub fn for_model(model: &SlowFastModel, mu: Option<f64>, dt: f64, truncation_tol: f64) -> Result<Self> {
        let analysis = Analysis::new(model, mu)?;
        Self::for_decay((analysis.rates.gamma1 - analysis.mu) / model.epsilon(), analysis.mu, dt, truncation_tol)
    }

    /// Shortest window with `e^{-decay·T} ≤ tol`.
    pub fn for_decay(decay: f64, mu: f64, dt: f64, truncation_tol: f64) -> Result<Self> {
        if !(truncation_tol > 0.0 && truncation_tol < 1.0) {
            return Err(Error::param("truncation_tol", "must lie in (0, 1)"));
        }
        if !(decay > 0.0) {
            return Err(Error::Domain(format!("backward decay rate {decay} is not positive")));
        }
        let mut w = Self::new((1.0 / truncation_tol).ln() / decay, dt, mu)?;
        w.truncation_tol = truncation_tol;
        Ok(w)
    }

    pub fn with_picard_tol(mut self, tol: f64) -> Self {
        self.picard_tol = tol;
        self
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = cap;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_back / self.dt).round() as usize
    }

    pub(crate) fn check_truncation(&self, decay: f64) -> Result<()> {
        let tail = (-decay * self.t_back).exp();
        if tail > self.truncation_tol * (1.0 + 1e-9) {
            return Err(Error::Window(format!(
                "T_back = {} leaves a tail factor {tail:e} above the tolerance {:e}",
                self.t_back, self.truncation_tol
            )));
        }
        Ok(())
    }
}

/// Fixed point on `[t_end − T_back, t_end]` and the map value `F = û(t_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSolution {
    pub times: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub f_value: Vec<f64>,
    pub iterations: usize,
    /// Weighted sup-norm change of the last Picard step.
    pub final_residual: f64,
    /// Largest ratio of successive residuals.
    pub max_contraction: f64,
}

impl ManifoldSolution {
    pub fn u_at(&self, j: usize) -> &[f64] {
        &self.u_hat[j * self.n..(j + 1) * self.n]
    }

    pub fn v_at(&self, j: usize) -> &[f64] {
        &self.v_hat[j * self.m..(j + 1) * self.m]
    }
}

/// How to seed the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Warm {
    /// `û ≡ 0`, `v̂ = e^{G_v t} v̄₀`.
    Cold,
    /// Current buffers.
    #[cfg_attr(not(test), allow(dead_code))]
    Keep,
    /// Current buffers advanced by this many grid steps.
    Shift(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LpStats {
    pub iterations: usize,
    pub residual: f64,
    pub max_contraction: f64,
}

/// Reusable solver state for one system, step and window length.
#[derive(Debug, Clone)]
pub(crate) struct LpSolver {
    sys: LpSystem,
    steps: usize,
    fast: StepWeights,
    slow: StepWeights,
    weights: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    nu: Vec<f64>,
    nv: Vec<f64>,
    gu: Vec<f64>,
    gv: Vec<f64>,
    anchor: Vec<f64>,
    xu: Vec<f64>,
    xv: Vec<f64>,
    seeded: bool,
    gauss_seidel: bool,
}

impl LpSolver {
    pub fn new(sys: LpSystem, h: f64, steps: usize) -> Self {
        let (n, m) = (sys.n(), sys.m());
        let len = steps + 1;
        let fast = StepWeights::forward(&sys.fast_gen, sys.fast_gain, h);
        let slow = StepWeights::backward(&sys.slow_gen, sys.slow_gain, h);
        let weights = (0..len).map(|j| (-sys.rate * (steps - j) as f64 * h).exp()).collect();
        Self {
            sys,
            steps,
            fast,
            slow,
            weights,
            u: vec![0.0; len * n],
            v: vec![0.0; len * m],
            nu: vec![0.0; len * n],
            nv: vec![0.0; len * m],
            gu: vec![0.0; len * n],
            gv: vec![0.0; len * m],
            anchor: vec![0.0; len * m],
            xu: vec![0.0; n],
            xv: vec![0.0; m],
            seeded: false,
            gauss_seidel: false,
        }
    }

    /// Use the latest `û` values inside the forward sweep. Same fixed point,
    /// fewer iterations; the per-iteration factor is no longer the one the
    /// contraction estimate refers to.
    pub fn set_gauss_seidel(&mut self, on: bool) {
        self.gauss_seidel = on;
    }

    pub fn system(&self) -> &LpSystem {
        &self.sys
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn f_value(&self) -> &[f64] {
        let n = self.sys.n();
        &self.u[self.steps * n..]
    }

    fn shift_guess(&mut self, k: usize) {
        let (n, m, len) = (self.sys.n(), self.sys.m(), self.steps + 1);
        self.u.copy_within(k * n.., 0);
        self.v.copy_within(k * m.., 0);
        for j in len - k..len {
            self.u.copy_within((len - k - 1) * n..(len - k) * n, j * n);
            self.v.copy_within((len - k - 1) * m..(len - k) * m, j * m);
        }
    }

    /// `g = (U, V)` evaluated at `(u + ζ, v + ς)` on every grid point.
    fn couplings(&mut self, zeta: &[f64], vsig: &[f64]) {
        let (n, m) = (self.sys.n(), self.sys.m());
        for j in 0..=self.steps {
            for i in 0..n {
                self.xu[i] = self.u[j * n + i] + zeta[j * n + i];
            }
            for i in 0..m {
                self.xv[i] = self.v[j * m + i] + vsig[j * m + i];
            }
            self.sys.u.eval(&self.xu, &self.xv, &mut self.gu[j * n..(j + 1) * n]);
            self.sys.v.eval(&self.xu, &self.xv, &mut self.gv[j * m..(j + 1) * m]);
        }
    }

    /// `nv = anchor − ∫_t^0 e^{G_v(t−r)} c_v V dr` from the current `gv`.
    fn slow_sweep(&mut self) {
        let m = self.sys.m();
        let k = self.steps;
        self.nv[k * m..].fill(0.0);
        for j in (0..k).rev() {
            let (lo, hi) = self.nv.split_at_mut((j + 1) * m);
            self.slow.step(
                &hi[..m],
                &self.gv[j * m..(j + 1) * m],
                &self.gv[(j + 1) * m..(j + 2) * m],
                &mut lo[j * m..],
            );
        }
        for (x, a) in self.nv.iter_mut().zip(&self.anchor) {
            *x = a - *x;
        }
    }

    /// `nu = ∫_{t_0}^t e^{G_u(t−r)} c_u U dr` from the current `gu`.
    fn fast_sweep(&mut self) {
        let n = self.sys.n();
        self.nu[..n].fill(0.0);
        for j in 0..self.steps {
            let (lo, hi) = self.nu.split_at_mut((j + 1) * n);
            self.fast.step(
                &lo[j * n..],
                &self.gu[j * n..(j + 1) * n],
                &self.gu[(j + 1) * n..(j + 2) * n],
                &mut hi[..n],
            );
        }
    }

    /// Forward sweep that evaluates `U`, `V` at the freshly swept `nu`; the
    /// right trapezoid node uses the previous iterate, held in `gu`.
    fn fast_sweep_gs(&mut self, zeta: &[f64], vsig: &[f64]) {
        let (n, m) = (self.sys.n(), self.sys.m());
        self.nu[..n].fill(0.0);
        for j in 0..=self.steps {
            for i in 0..n {
                self.xu[i] = self.nu[j * n + i] + zeta[j * n + i];
            }
            for i in 0..m {
                self.xv[i] = self.v[j * m + i] + vsig[j * m + i];
            }
            self.sys.u.eval(&self.xu, &self.xv, &mut self.gu[j * n..(j + 1) * n]);
            self.sys.v.eval(&self.xu, &self.xv, &mut self.gv[j * m..(j + 1) * m]);
            if j < self.steps {
                let (lo, hi) = self.nu.split_at_mut((j + 1) * n);
                self.fast.step(
                    &lo[j * n..],
                    &self.gu[j * n..(j + 1) * n],
                    &self.gu[(j + 1) * n..(j + 2) * n],
                    &mut hi[..n],
                );
            }
        }
    }

    /// One Gauss–Seidel iteration for scalar blocks, fused with the slow
    /// sweep and the residual; returns the weighted change.
    fn scalar_gs_iteration(&mut self, zeta: &[f64], vsig: &[f64]) -> f64 {
        let k = self.steps;
        let (fe, fa, fb) = self.fast.scalar.expect("scalar fast block");
        let (se, sa, sb) = self.slow.scalar.expect("scalar slow block");
        let (cu, cv) = (&self.sys.u, &self.sys.v);
        let (mut gu, mut gv) = ([0.0], [0.0]);
        let mut x = 0.0;
        for j in 0..=k {
            let xu = [x + zeta[j]];
            let xv = [self.v[j] + vsig[j]];
            cu.eval(&xu, &xv, &mut gu);
            cv.eval(&xu, &xv, &mut gv);
            self.nu[j] = x;
            self.gv[j] = gv[0];
            if j < k {
                x = fe * x + fa * gu[0] + fb * self.gu[j + 1];
            }
            self.gu[j] = gu[0];
        }
        let mut y = 0.0;
        let mut res = self.weights[k] * ((self.nu[k] - self.u[k]).abs() + (self.anchor[k] - self.v[k]).abs());
        self.nv[k] = self.anchor[k];
        for j in (0..k).rev() {
            y = se * y + sa * self.gv[j] + sb * self.gv[j + 1];
            let nv = self.anchor[j] - y;
            self.nv[j] = nv;
            res = res.max(self.weights[j] * ((self.nu[j] - self.u[j]).abs() + (nv - self.v[j]).abs()));
        }
        res
    }

    fn weighted_change(&self) -> f64 {
        let (n, m) = (self.sys.n(), self.sys.m());
        if n == 1 && m == 1 {
            return (0..=self.steps)
                .map(|j| self.weights[j] * ((self.nu[j] - self.u[j]).abs() + (self.nv[j] - self.v[j]).abs()))
                .fold(0.0, f64::max);
        }
        (0..=self.steps)
            .map(|j| {
                let du: f64 = (0..n).map(|i| (self.nu[j * n + i] - self.u[j * n + i]).powi(2)).sum::<f64>().sqrt();
                let dv: f64 = (0..m).map(|i| (self.nv[j * m + i] - self.v[j * m + i]).powi(2)).sum::<f64>().sqrt();
                self.weights[j] * (du + dv)
            })
            .fold(0.0, f64::max)
    }

    fn general_iteration(&mut self, zeta: &[f64], vsig: &[f64]) -> f64 {
        if self.gauss_seidel {
            self.fast_sweep_gs(zeta, vsig);
        } else {
            self.couplings(zeta, vsig);
            self.fast_sweep();
        }
        self.slow_sweep();
        self.weighted_change()
    }

    /// Iterate to the fixed point for stationary values `zeta`, `vsig` on the
    /// window (oldest first) and anchor `v0` at the window's right end.
    pub fn solve(
        &mut self,
        zeta: &[f64],
        vsig: &[f64],
        v0: &[f64],
        warm: Warm,
        tol: f64,
        cap: usize,
    ) -> Result<LpStats> {
        let (n, m) = (self.sys.n(), self.sys.m());
        let k = self.steps;
        debug_assert_eq!(zeta.len(), (k + 1) * n);
        debug_assert_eq!(vsig.len(), (k + 1) * m);
        self.anchor[k * m..].copy_from_slice(v0);
        if let Some((e, _, _)) = self.slow.scalar {
            for j in (0..k).rev() {
                self.anchor[j] = e * self.anchor[j + 1];
            }
        } else {
            for j in (0..k).rev() {
                let (lo, hi) = self.anchor.split_at_mut((j + 1) * m);
                self.slow.e.mul_vec_into(&hi[..m], &mut lo[j * m..]);
            }
        }
        let warm = if self.seeded { warm } else { Warm::Cold };
        match warm {
            Warm::Shift(s) if s <= k => self.shift_guess(s),
            Warm::Keep => {}
            _ => {
                self.u.fill(0.0);
                self.v.copy_from_slice(&self.anchor);
            }
        }
        self.seeded = true;
        if self.sys.u.is_identically_zero() {
            // û vanishes identically; one sweep gives v̂ for that û.
            self.u.fill(0.0);
            self.v.copy_from_slice(&self.anchor);
            self.couplings(zeta, vsig);
            self.slow_sweep();
            std::mem::swap(&mut self.v, &mut self.nv);
            return Ok(LpStats { iterations: 1, residual: 0.0, max_contraction: 0.0 });
        }
        let mut prev = f64::NAN;
        let mut max_contraction: f64 = 0.0;
        if self.gauss_seidel {
            self.couplings(zeta, vsig);
        }
        let scalar = self.gauss_seidel && self.fast.scalar.is_some() && self.slow.scalar.is_some();
        for it in 1..=cap {
            let res = if scalar { self.scalar_gs_iteration(zeta, vsig) } else { self.general_iteration(zeta, vsig) };
            std::mem::swap(&mut self.u, &mut self.nu);
            std::mem::swap(&mut self.v, &mut self.nv);
            if !res.is_finite() {
                return Err(Error::NonConvergence { iterations: it, residual: res });
            }
            if prev > RATIO_FLOOR {
                max_contraction = max_contraction.max(res / prev);
            }
            if res < tol {
                return Ok(LpStats { iterations: it, residual: res, max_contraction });
            }
            prev = res;
        }
        Err(Error::NonConvergence { iterations: cap, residual: prev })
    }

    /// [`solve`](Self::solve) with the iterate held by the caller, e.g. one
    /// per particle. An empty or mis-sized guess starts cold.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_with_guess(
        &mut self,
        zeta: &[f64],
        vsig: &[f64],
        v0: &[f64],
        guess_u: &mut Vec<f64>,
        guess_v: &mut Vec<f64>,
        warm: Warm,
        tol: f64,
        cap: usize,
    ) -> Result<LpStats> {
        let warm = if guess_u.len() == self.u.len() && guess_v.len() == self.v.len() {
            std::mem::swap(&mut self.u, guess_u);
            std::mem::swap(&mut self.v, guess_v);
            self.seeded = true;
            warm
        } else {
            guess_u.resize(self.u.len(), 0.0);
            guess_v.resize(self.v.len(), 0.0);
            std::mem::swap(&mut self.u, guess_u);
            std::mem::swap(&mut self.v, guess_v);
            Warm::Cold
        };
        let out = self.solve(zeta, vsig, v0, warm, tol, cap);
        std::mem::swap(&mut self.u, guess_u);
        std::mem::swap(&mut self.v, guess_v);
        out
    }

    pub fn to_solution(&self, t_end: f64, h: f64, stats: LpStats) -> ManifoldSolution {
        let k = self.steps;
        ManifoldSolution {
            times: (0..=k).map(|j| t_end - (k - j) as f64 * h).collect(),
            n: self.sys.n(),
            m: self.sys.m(),
            u_hat: self.u.clone(),
            v_hat: self.v.clone(),
            f_value: self.f_value().to_vec(),
            iterations: stats.iterations,
            final_residual: stats.residual,
            max_contraction: stats.max_contraction,
        }
    }
}

/// Copy `path` on `[t_end − steps·h, t_end]` with step `h` into `out`.
pub(crate) fn window_slice(path: &StationaryPath, t_end: f64, h: f64, steps: usize, out: &mut Vec<f64>) -> Result<()> {
    let grid = path.grid();
    let stride = grid.stride_for(h)?;
    let end = grid.index_of(t_end)?;
    let span = steps * stride;
    if span > end {
        return Err(Error::Window(format!(
            "the backward window [{}, {t_end}] starts before the path (t_min = {})",
            t_end - steps as f64 * h,
            grid.t_min()
        )));
    }
    let start = end - span;
    path.check_valid(start)?;
    let d = path.dim();
    out.clear();
    for j in 0..=steps {
        out.extend_from_slice(path.at(start + j * stride));
    }
    debug_assert_eq!(out.len(), (steps + 1) * d);
    Ok(())
}

pub(crate) fn check_dims(sys: &LpSystem, zeta: &StationaryPath, varsigma: &StationaryPath, v: &[f64]) -> Result<()> {
    if zeta.dim() != sys.n() || varsigma.dim() != sys.m() {
        return Err(Error::param("stationary paths", "dimensions do not match the model"));
    }
    if v.len() != sys.m() {
        return Err(Error::param("v_bar", format!("expected dimension {}", sys.m())));
    }
    Ok(())
}

/// Solve the integral equation for `θ_{t_end}ω` with any system.
pub(crate) fn solve_system_at(
    sys: LpSystem,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    t_end: f64,
    v_bar0: &[f64],
    window: &BackwardWindow,
) -> Result<ManifoldSolution> {
    check_dims(&sys, zeta, varsigma, v_bar0)?;
    let steps = window.steps();
    let (mut zs, mut vs) = (Vec::new(), Vec::new());
    window_slice(zeta, t_end, window.dt, steps, &mut zs)?;
    window_slice(varsigma, t_end, window.dt, steps, &mut vs)?;
    let mut solver = LpSolver::new(sys, window.dt, steps);
    let stats = solver.solve(&zs, &vs, v_bar0, Warm::Cold, window.picard_tol, window.max_iterations)?;
    Ok(solver.to_solution(t_end, window.dt, stats))
}

/// Fixed point of the Lyapunov–Perron operator anchored at `v̂(0) = v̄₀`;
/// `F^ε(ω, v̄₀)` is its `û(0)`. Errors when `ε ≥ ε₀` for the window's `μ`,
/// when the window is too short for its truncation tolerance, or when the
/// iteration cap is reached.
pub fn solve_lyapunov_perron(
    model: &SlowFastModel,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    v_bar0: &[f64],
    window: &BackwardWindow,
) -> Result<ManifoldSolution> {
    let sys = LpSystem::original(model, window.mu)?;
    window.check_truncation((model.rates().gamma1 - window.mu) / model.epsilon())?;
    solve_system_at(sys, zeta, varsigma, 0.0, v_bar0, window)
}
