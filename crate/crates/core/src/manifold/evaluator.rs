//! `F^ε(θ_tω, v̄)` along a run, with memoization and shifted warm starts.

use std::collections::HashMap;

use super::solver::{check_dims, window_slice, BackwardWindow, LpSolver, LpSystem, ManifoldSolution, Warm};
use crate::error::{Error, Result};
use crate::levy_noise::StationaryPath;
use crate::model::SlowFastModel;

/// Counters over the evaluator's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalStats {
    pub solves: usize,
    pub cache_hits: usize,
    pub iterations: usize,
    pub max_iterations: usize,
    pub max_contraction: f64,
    pub max_residual: f64,
}

/// Evaluates `F^ε(θ_tω, v̄)` for grid times `t`. One evaluator serves one
/// noise realization; it is not meant to be shared between workers.
pub struct ManifoldEvaluator<'a> {
    zeta: &'a StationaryPath,
    varsigma: &'a StationaryPath,
    window: BackwardWindow,
    solver: LpSolver,
    zeta_buf: Vec<f64>,
    vsig_buf: Vec<f64>,
    last_step: Option<isize>,
    cache: HashMap<(isize, Vec<u64>), Vec<f64>>,
    stats: EvalStats,
}

impl<'a> ManifoldEvaluator<'a> {
    /// Evaluator for the original-time map of `model`.
    pub fn new(
        model: &SlowFastModel,
        zeta: &'a StationaryPath,
        varsigma: &'a StationaryPath,
        window: BackwardWindow,
    ) -> Result<Self> {
        let sys = LpSystem::original(model, window.mu)?;
        window.check_truncation((model.rates().gamma1 - window.mu) / model.epsilon())?;
        Self::with_system(sys, zeta, varsigma, window)
    }

    pub(crate) fn with_system(
        sys: LpSystem,
        zeta: &'a StationaryPath,
        varsigma: &'a StationaryPath,
        window: BackwardWindow,
    ) -> Result<Self> {
        check_dims(&sys, zeta, varsigma, &vec![0.0; sys.m()])?;
        let steps = window.steps();
        Ok(Self {
            zeta,
            varsigma,
            window,
            solver: LpSolver::new(sys, window.dt, steps),
            zeta_buf: Vec::new(),
            vsig_buf: Vec::new(),
            last_step: None,
            cache: HashMap::new(),
            stats: EvalStats::default(),
        })
    }

    pub fn window(&self) -> &BackwardWindow {
        &self.window
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    /// Contraction constant `q` of the underlying operator.
    pub fn q(&self) -> f64 {
        self.solver.system().q()
    }

    fn step_of(&self, t: f64) -> Result<isize> {
        let k = (t / self.window.dt).round();
        if (t / self.window.dt - k).abs() > 1e-9 * k.abs().max(1.0) {
            return Err(Error::Window(format!("t = {t} is not on the solver grid (step {})", self.window.dt)));
        }
        Ok(k as isize)
    }

    fn run(&mut self, t: f64, v_bar: &[f64]) -> Result<super::solver::LpStats> {
        if v_bar.len() != self.solver.system().m() {
            return Err(Error::param("v_bar", format!("expected dimension {}", self.solver.system().m())));
        }
        let step = self.step_of(t)?;
        let steps = self.solver.steps();
        window_slice(self.zeta, t, self.window.dt, steps, &mut self.zeta_buf)?;
        window_slice(self.varsigma, t, self.window.dt, steps, &mut self.vsig_buf)?;
        let warm = match self.last_step {
            Some(prev) if step >= prev => Warm::Shift((step - prev) as usize),
            _ => Warm::Cold,
        };
        let stats = self.solver.solve(
            &self.zeta_buf,
            &self.vsig_buf,
            v_bar,
            warm,
            self.window.picard_tol,
            self.window.max_iterations,
        )?;
        self.last_step = Some(step);
        let s = &mut self.stats;
        s.solves += 1;
        s.iterations += stats.iterations;
        s.max_iterations = s.max_iterations.max(stats.iterations);
        s.max_contraction = s.max_contraction.max(stats.max_contraction);
        s.max_residual = s.max_residual.max(stats.residual);
        Ok(stats)
    }

    /// `F^ε(θ_tω, v̄)`; memoized on `(t, v̄)`.
    pub fn eval(&mut self, t: f64, v_bar: &[f64]) -> Result<Vec<f64>> {
        let key = (self.step_of(t)?, v_bar.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        if let Some(f) = self.cache.get(&key) {
            self.stats.cache_hits += 1;
            return Ok(f.clone());
        }
        self.run(t, v_bar)?;
        let f = self.solver.f_value().to_vec();
        self.cache.insert(key, f.clone());
        Ok(f)
    }

    /// Full fixed point for `θ_tω` (not memoized).
    pub fn solve_at(&mut self, t: f64, v_bar: &[f64]) -> Result<ManifoldSolution> {
        let stats = self.run(t, v_bar)?;
        Ok(self.solver.to_solution(t, self.window.dt, stats))
    }

    /// Drop memoized values (e.g. between unrelated runs).
    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// `F^ε(θ_tω, v̄)` in one call.
pub fn eval_f(
    model: &SlowFastModel,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    t: f64,
    v_bar: &[f64],
    window: &BackwardWindow,
) -> Result<Vec<f64>> {
    ManifoldEvaluator::new(model, zeta, varsigma, *window)?.eval(t, v_bar)
}

/// Point of the manifold `M^ε(ω)` over `y` in original coordinates:
/// `(F^ε(ω, y) + ζ^ε(ω₁), y + ς(ω₂))`.
pub fn manifold_point(
    model: &SlowFastModel,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    y: &[f64],
    window: &BackwardWindow,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = eval_f(model, zeta, varsigma, 0.0, y, window)?;
    let u = f.iter().zip(zeta.value(0.0)?).map(|(a, b)| a + b).collect();
    let v = y.iter().zip(varsigma.value(0.0)?).map(|(a, b)| a + b).collect();
    Ok((u, v))
}
