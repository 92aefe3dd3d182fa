//! The limit `ε → 0` in the rescaled time `t → εt`.
//!
//! With `σ2 = 0` and `ǔ_t = u_{εt}`, `v̌_t = v_{εt}` the system reads
//!
//! ```text
//! dǔ = (A ǔ + U(ǔ, v̌)) dt + σ1 dĽ,   dv̌ = ε (B v̌ + V(ǔ, v̌)) dt,
//! ```
//!
//! with `Ľ_t = L_{εt}/ε^{1/α}` again a unit α-stable process. At `ε = 0`
//! the slow variable freezes and the manifold `F̌⁰` is built with `v̂ ≡ v₀`.

use crate::error::{Error, Result};
use crate::levy_noise::{
    generate_two_sided_stable, stationary_linear, NoisePath, PathLaw, StableParams, StationaryKind, StationaryPath,
    StationarySettings, TimeGrid, Window,
};
use crate::linalg::{norm, Matrix};
use crate::manifold::{BackwardWindow, LpSystem, ManifoldEvaluator};
use crate::model::{integrate_euler, Analysis, DriftForm, SlowFastModel, TrajectoryPair};
use crate::realization::Realization;
use crate::rng::{rng_for, stream};

/// Largest Euler step for the rescaled system, where the fast block has
/// unit rate.
pub const SCALED_STIFFNESS_LIMIT: f64 = 1.0 / 50.0;

/// A model with `σ2 = 0`, viewed in the rescaled time.
#[derive(Debug, Clone)]
pub struct ScaledModel {
    base: SlowFastModel,
}

impl ScaledModel {
    /// Errors unless the slow noise is switched off
    /// (see [`SlowFastModel::without_slow_noise`]).
    pub fn new(base: SlowFastModel) -> Result<Self> {
        if base.sigma2() != 0.0 {
            return Err(Error::param("sigma2", "the rescaled system is studied without slow noise"));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &SlowFastModel {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.base.epsilon()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Ok(Self { base: self.base.with_epsilon(epsilon)? })
    }

    pub fn form(&self) -> DriftForm {
        self.base.scaled_form()
    }
}

/// `Ľ_t = L_{εt}/ε^{1/α}` from a stable path `L` with step `dt`; the result
/// has step `dt/ε`.
pub fn rescale_stable_path(path: &NoisePath, epsilon: f64) -> Result<NoisePath> {
    let alpha = match path.law() {
        PathLaw::Stable { alpha } => alpha,
        _ => return Err(Error::param("path", "expected an α-stable path")),
    };
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let g = path.grid();
    let grid = TimeGrid::from_counts(g.dt() / epsilon, g.n_back(), g.n_fwd());
    let scale = epsilon.powf(-1.0 / alpha);
    let values = (0..g.len()).flat_map(|i| path.at(i).iter().map(move |x| x * scale)).collect();
    NoisePath::from_values(grid, path.dim(), values, PathLaw::Stable { alpha })
}

/// Noise for the rescaled system from an existing rescaled stable path:
/// the stationary `ζ̌` of `dζ = Aζ dt + σ1 dĽ` and zero slow components.
/// The fields of the returned [`Realization`] live in rescaled time.
pub fn scaled_realization_from(
    scaled: &ScaledModel,
    fast: NoisePath,
    settings: StationarySettings,
) -> Result<Realization> {
    let m = scaled.base();
    if fast.dim() != m.n() {
        return Err(Error::param("noise", "path dimension does not match the fast block"));
    }
    let zeta = stationary_linear(m.a(), m.sigma1(), m.rates().gamma1, &fast, StationaryKind::FastStable, settings)?;
    let grid = *fast.grid();
    let slow = NoisePath::from_values(grid, m.m(), vec![0.0; grid.len() * m.m()], PathLaw::Other)?;
    let varsigma = StationaryPath::zeros(grid, m.m(), StationaryKind::SlowLevy);
    Ok(Realization { fast, slow, zeta, varsigma })
}

/// Draw a rescaled realization valid on `[-lookback, horizon]`. The path
/// does not depend on `ε`, so one realization serves a whole `ε` grid.
pub fn scaled_realization(
    scaled: &ScaledModel,
    lookback: f64,
    horizon: f64,
    dt: f64,
    settings: StationarySettings,
    master: u64,
    replica: u64,
) -> Result<Realization> {
    let m = scaled.base();
    let burn = if m.sigma1() == 0.0 { 0.0 } else { (1.0 / settings.tol).ln() / m.rates().gamma1 };
    let params = StableParams::new(m.alpha(), 1.0, m.n())?;
    let mut rng = rng_for(master, &[replica, stream::FAST_NOISE]);
    let fast = generate_two_sided_stable(params, Window::new(lookback + burn + dt, horizon, dt), &mut rng)?;
    scaled_realization_from(scaled, fast, settings)
}

/// Euler scheme for the rescaled system; `dt ≤ 1/50`.
pub fn simulate_scaled(
    scaled: &ScaledModel,
    omega: &Realization,
    z0: (&[f64], &[f64]),
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryPair> {
    let m = scaled.base();
    integrate_euler(&scaled.form(), m.u(), m.v(), &omega.fast, &omega.slow, z0, t_end, dt, SCALED_STIFFNESS_LIMIT)
}

/// Which rescaled manifold to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMode {
    /// `F̌^ε`: slow block `εB`, gain `ε`.
    Epsilon,
    /// `F̌⁰`: the slow variable is frozen at `v₀`.
    Zero,
}

/// Lyapunov–Perron system of the rescaled problem with weight `e^{μt}`.
pub fn scaled_system(scaled: &ScaledModel, mu: f64, mode: LimitMode) -> Result<LpSystem> {
    let m = scaled.base();
    let analysis = Analysis::new(m, Some(mu))?;
    let (slow_gen, slow_gain, q) = match mode {
        LimitMode::Epsilon => {
            analysis.ensure_contraction()?;
            (m.b().scaled(m.epsilon()), m.epsilon(), analysis.q())
        }
        LimitMode::Zero => {
            let q0 = analysis.lipschitz / (analysis.rates.gamma1 - mu);
            if q0 >= 1.0 {
                return Err(Error::ContractionViolated { epsilon: 0.0, q: q0, epsilon0: f64::NAN });
            }
            (Matrix::zeros(m.m(), m.m()), 0.0, q0)
        }
    };
    Ok(LpSystem::from_parts(m.u().clone(), m.v().clone(), m.a().clone(), 1.0, slow_gen, slow_gain, mu, q))
}

/// Backward window for the rescaled kernels, which decay like `e^{(γ1−μ)s}`.
pub fn scaled_window(scaled: &ScaledModel, mu: f64, dt: f64, truncation_tol: f64) -> Result<BackwardWindow> {
    BackwardWindow::for_decay(scaled.base().rates().gamma1 - mu, mu, dt, truncation_tol)
}

/// Evaluator of `F̌^ε(θ_tω, ·)` or `F̌⁰(θ_tω, ·)` on a rescaled realization.
pub fn scaled_evaluator<'a>(
    scaled: &ScaledModel,
    omega: &'a Realization,
    window: &BackwardWindow,
    mode: LimitMode,
) -> Result<ManifoldEvaluator<'a>> {
    let sys = scaled_system(scaled, window.mu, mode)?;
    window.check_truncation(scaled.base().rates().gamma1 - window.mu)?;
    ManifoldEvaluator::with_system(sys, &omega.zeta, &omega.varsigma, *window)
}

/// `F̌^ε(θ_tω, v₀)` or `F̌⁰(θ_tω, v₀)` in one call.
pub fn solve_f_scaled(
    scaled: &ScaledModel,
    omega: &Realization,
    t: f64,
    v0: &[f64],
    window: &BackwardWindow,
    mode: LimitMode,
) -> Result<Vec<f64>> {
    scaled_evaluator(scaled, omega, window, mode)?.eval(t, v0)
}

/// `t₀` and `β(ε)` of the distance estimate between `F̌^ε` and `F̌⁰`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaReport {
    pub epsilon: f64,
    pub t0: f64,
    pub beta: f64,
}

/// ```text
/// t₀ = log[(μ−εγ2)γ1 / ((γ1−εγ2)μ)] / (εγ2)
/// β  = e^{μt₀}(e^{−εγ2 t₀}/(γ1−εγ2) − 1/γ1) + 1/(γ1−εγ2) − 1/γ1
/// ```
/// `t₀` is negative whenever `μ < γ1`; the formulas are used as written.
pub fn beta_of_epsilon(gamma1: f64, gamma2: f64, mu: f64, epsilon: f64) -> Result<BetaReport> {
    if ![gamma1, gamma2, mu, epsilon].iter().all(|x| x.is_finite() && *x > 0.0) {
        return Err(Error::Domain("γ1, γ2, μ and ε must be positive".into()));
    }
    let eg = epsilon * gamma2;
    if !(mu - eg > 0.0 && gamma1 - eg > 0.0) {
        return Err(Error::Domain(format!("need μ > εγ2 and γ1 > εγ2 (εγ2 = {eg})")));
    }
    let t0 = ((mu - eg) * gamma1 / ((gamma1 - eg) * mu)).ln() / eg;
    let beta =
        (mu * t0).exp() * ((-eg * t0).exp() / (gamma1 - eg) - 1.0 / gamma1) + (1.0 / (gamma1 - eg) - 1.0 / gamma1);
    Ok(BetaReport { epsilon, t0, beta })
}

/// The three terms of the estimate of `|ž^ε_t − z̃⁰_t|`:
///
/// ```text
/// e^{−μt}/(1−q) · (2|u₀−u| + 2M_U/γ1 + M_V/γ2)
///   + (1 − εL/(μ−εγ2))/(1−q) · (|Bv₀| + M_V)/γ3 · (1 − e^{−εγ3 t})
///   + C β(ε)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLimitBound {
    pub epsilon: f64,
    pub mu: f64,
    pub q: f64,
    /// `(1 − εL/(μ−εγ2))/(1−q)`.
    pub prefactor: f64,
    /// Limit of the middle term as `t → ∞`.
    pub persistent_level: f64,
    pub beta: BetaReport,
    pub c_beta: f64,
    pub times: Vec<f64>,
    pub term1: Vec<f64>,
    pub term2: Vec<f64>,
    pub term3: Vec<f64>,
}

impl ZeroLimitBound {
    pub fn total(&self, k: usize) -> f64 {
        self.term1[k] + self.term2[k] + self.term3[k]
    }
}

/// Evaluate the estimate on `times`. `u_anchor` is `ζ̌(ω)` at time zero and
/// `c_beta` the constant in front of `β(ε)` (see [`fit_beta_constant`]).
pub fn zero_limit_bound(
    scaled: &ScaledModel,
    mu: f64,
    u0: &[f64],
    v0: &[f64],
    u_anchor: &[f64],
    c_beta: f64,
    times: &[f64],
) -> Result<ZeroLimitBound> {
    let m = scaled.base();
    let an = Analysis::new(m, Some(mu))?;
    an.ensure_contraction()?;
    let (r, eps, l) = (an.rates, m.epsilon(), an.lipschitz);
    let q = an.q();
    let beta = beta_of_epsilon(r.gamma1, r.gamma2, mu, eps)?;
    let d: f64 = u0.iter().zip(u_anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let first = (2.0 * d + 2.0 * an.bound_u / r.gamma1 + an.bound_v / r.gamma2) / (1.0 - q);
    let prefactor = (1.0 - eps * l / (mu - eps * r.gamma2)) / (1.0 - q);
    let persistent_level = prefactor * (norm(&m.b().mul_vec(v0)) + an.bound_v) / r.gamma3;
    Ok(ZeroLimitBound {
        epsilon: eps,
        mu,
        q,
        prefactor,
        persistent_level,
        beta,
        c_beta,
        times: times.to_vec(),
        term1: times.iter().map(|t| first * (-mu * t).exp()).collect(),
        term2: times.iter().map(|t| persistent_level * -(-eps * r.gamma3 * t).exp_m1()).collect(),
        term3: vec![c_beta * beta.beta; times.len()],
    })
}

/// Measured `sup_t |F̌^ε(θ_tω, v₀) − F̌⁰(θ_tω, v₀)|` against `β(ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGapFit {
    pub eps: Vec<f64>,
    pub gaps: Vec<f64>,
    pub betas: Vec<f64>,
    /// Mean of `gap/β` (least squares for a constant ratio).
    pub c: f64,
    /// `max(gap/β) / min(gap/β) − 1`.
    pub spread: f64,
}

impl ModeGapFit {
    pub fn ratios(&self) -> Vec<f64> {
        self.gaps.iter().zip(&self.betas).map(|(g, b)| g / b).collect()
    }
}

/// Fit the constant of `|F̌^ε − F̌⁰| ≤ Cβ(ε)` over `eps_grid`, taking the
/// largest gap over the sample `times` for each `ε`.
pub fn fit_beta_constant(
    scaled: &ScaledModel,
    omega: &Realization,
    v0: &[f64],
    times: &[f64],
    eps_grid: &[f64],
    window: &BackwardWindow,
) -> Result<ModeGapFit> {
    if eps_grid.is_empty() || times.is_empty() {
        return Err(Error::Configuration("empty epsilon grid or sample times".into()));
    }
    let mut zero = scaled_evaluator(scaled, omega, window, LimitMode::Zero)?;
    let reference = times.iter().map(|&t| zero.eval(t, v0)).collect::<Result<Vec<_>>>()?;
    let (mut gaps, mut betas) = (Vec::new(), Vec::new());
    for &eps in eps_grid {
        let s = scaled.with_epsilon(eps)?;
        let mut ev = scaled_evaluator(&s, omega, window, LimitMode::Epsilon)?;
        let mut gap: f64 = 0.0;
        for (&t, f0) in times.iter().zip(&reference) {
            let f = ev.eval(t, v0)?;
            gap = gap.max(f.iter().zip(f0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
        let r = s.base().rates();
        gaps.push(gap);
        betas.push(beta_of_epsilon(r.gamma1, r.gamma2, window.mu, eps)?.beta);
    }
    let ratios: Vec<f64> = gaps.iter().zip(&betas).map(|(g, b)| g / b).collect();
    let c = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(ModeGapFit { eps: eps_grid.to_vec(), gaps, betas, c, spread: hi / lo - 1.0 })
}

/// The `ε = 0` reduced trajectory: `ṽ⁰ ≡ v₀` and
/// `ũ⁰_t = F̌⁰(θ_tω, v₀) + ζ̌(θ_tω)` on the window grid up to `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLimitTrajectory {
    pub times: Vec<f64>,
    pub n: usize,
    pub u: Vec<f64>,
    pub v0: Vec<f64>,
}

impl ZeroLimitTrajectory {
    pub fn u_at(&self, k: usize) -> &[f64] {
        &self.u[k * self.n..(k + 1) * self.n]
    }
}

pub fn zero_limit_trajectory(
    scaled: &ScaledModel,
    omega: &Realization,
    v0: &[f64],
    t_end: f64,
    window: &BackwardWindow,
) -> Result<ZeroLimitTrajectory> {
    let n = scaled.base().n();
    let steps = crate::model::step_count(t_end, window.dt)?;
    let mut ev = scaled_evaluator(scaled, omega, window, LimitMode::Zero)?;
    let mut u = Vec::with_capacity((steps + 1) * n);
    let mut times = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * window.dt;
        let f = ev.eval(t, v0)?;
        u.extend(f.iter().zip(omega.zeta.value(t)?).map(|(a, b)| a + b));
        times.push(t);
        ev.clear_cache();
    }
    Ok(ZeroLimitTrajectory { times, n, u, v0: v0.to_vec() })
}

/// One line of the gap table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub eps: f64,
    pub t: f64,
    pub measured_gap: f64,
    pub bound_term1: f64,
    pub bound_term2: f64,
    pub bound_term3: f64,
    pub beta: f64,
    pub t0: f64,
}

impl GapRow {
    pub fn bound(&self) -> f64 {
        self.bound_term1 + self.bound_term2 + self.bound_term3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapExperiment {
    pub rows: Vec<GapRow>,
    pub fit: ModeGapFit,
    pub bounds: Vec<ZeroLimitBound>,
}

impl GapExperiment {
    /// Largest `gap − bound` over all rows (negative when the bound holds).
    pub fn dominance_excess(&self) -> f64 {
        self.rows.iter().map(|r| r.measured_gap - r.bound()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `|ž^ε_t − z̃⁰_t|` (norm `|u| + |v|`) for every `ε` in the grid, next to
/// the three-term estimate. The rescaled system starts at `z0`; the `ε = 0`
/// reduced system starts at `(F̌⁰(ω, v₀) + ζ̌(ω), v₀)`. The constant in front
/// of `β` is fitted on the same realization at the report times.
#[allow(clippy::too_many_arguments)]
pub fn gap_experiment(
    scaled: &ScaledModel,
    omega: &Realization,
    z0: (&[f64], &[f64]),
    eps_grid: &[f64],
    t_end: f64,
    dt: f64,
    window: &BackwardWindow,
    report_dt: f64,
) -> Result<GapExperiment> {
    if eps_grid.is_empty() {
        return Err(Error::Configuration("empty epsilon grid".into()));
    }
    let reduced = zero_limit_trajectory(scaled, omega, z0.1, t_end, window)?;
    let stride_r = crate::model::step_count(report_dt, window.dt)?;
    let stride_f = crate::model::step_count(report_dt, dt)?;
    if stride_r == 0 || stride_f == 0 {
        return Err(Error::Alignment("report step below the integration step".into()));
    }
    let report: Vec<usize> = (0..reduced.times.len()).step_by(stride_r).collect();
    let times: Vec<f64> = report.iter().map(|&k| reduced.times[k]).collect();
    let fit = fit_beta_constant(scaled, omega, z0.1, &times, eps_grid, window)?;
    let anchor = omega.zeta.value(0.0)?.to_vec();
    let (mut rows, mut bounds) = (Vec::new(), Vec::new());
    for &eps in eps_grid {
        let s = scaled.with_epsilon(eps)?;
        let full = simulate_scaled(&s, omega, z0, t_end, dt)?;
        let bound = zero_limit_bound(&s, window.mu, z0.0, z0.1, &anchor, fit.c, &times)?;
        for (j, &k) in report.iter().enumerate() {
            let kf = j * stride_f;
            let du = crate::linalg::dist(full.u_at(kf), reduced.u_at(k));
            let dv = crate::linalg::dist(full.v_at(kf), z0.1);
            rows.push(GapRow {
                eps,
                t: times[j],
                measured_gap: du + dv,
                bound_term1: bound.term1[j],
                bound_term2: bound.term2[j],
                bound_term3: bound.term3[j],
                beta: bound.beta.beta,
                t0: bound.beta.t0,
            });
        }
        bounds.push(bound);
    }
    Ok(GapExperiment { rows, fit, bounds })
}

#[cfg(test)]
mod tests;
