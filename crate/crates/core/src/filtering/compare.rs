//! Monte Carlo comparison of the full and reduced filters across `ε`.

use rayon::prelude::*;

use super::full::{run_filter_full, FilterProblem};
use super::observation::generate_observation;
use super::particle::FilterSettings;
use super::reduced_filter::run_filter_reduced;
use super::sensor::{Sensor, TestFunctional};
use crate::error::{Error, Result};
use crate::levy_noise::{LevyTriplet, StationarySettings};
use crate::manifold::BackwardWindow;
use crate::model::{simulate_full, Analysis, SlowFastModel};
use crate::realization::Realization;
use crate::rng::{derive_seed, rng_for, stream};

/// Experiment settings for [`compare_filters`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCompareConfig {
    pub eps_grid: Vec<f64>,
    pub p: f64,
    pub replicas: usize,
    pub particles: usize,
    pub t_end: f64,
    /// Times at which `|Π − Π̃|^p` is averaged; each must be a report time.
    pub report_times: Vec<f64>,
    /// Manifold rate; `None` picks the model default.
    pub mu: Option<f64>,
    pub truncation_tol: f64,
    pub picard_tol: f64,
    pub seed: u64,
}

impl FilterCompareConfig {
    pub fn new(eps_grid: Vec<f64>, p: f64, replicas: usize, particles: usize, t_end: f64) -> Self {
        Self {
            eps_grid,
            p,
            replicas,
            particles,
            t_end,
            report_times: vec![t_end],
            mu: None,
            truncation_tol: 1e-3,
            picard_tol: 1e-5,
            seed: 0,
        }
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCompareRow {
    pub eps: f64,
    pub t: f64,
    /// Monte Carlo mean of `|Π_t(Φ) − Π̃_t(Φ)|^p` over replicas.
    pub mean_gap_p: f64,
    pub mc_stderr: f64,
    pub shape_term: f64,
    pub replicas: usize,
    /// Degeneracy warnings summed over both filters and all replicas.
    pub warnings: usize,
}

/// `(e^{−4pμt/ε} + ε/(4μp))^{1/4}`.
pub fn shape_function(eps: f64, p: f64, mu: f64, t: f64) -> f64 {
    ((-4.0 * p * mu * t / eps).exp() + eps / (4.0 * mu * p)).powf(0.25)
}

struct ReplicaOutcome {
    gaps: Vec<f64>,
    warnings: usize,
}

#[allow(clippy::too_many_arguments)]
fn one_replica(
    model: &SlowFastModel,
    slow_law: &LevyTriplet,
    sensor: &Sensor,
    phi: &TestFunctional,
    u0: &[f64],
    v0: &[f64],
    cfg: &FilterCompareConfig,
    window: &BackwardWindow,
    settings: &FilterSettings,
    dt: f64,
    replica: u64,
) -> Result<ReplicaOutcome> {
    let omega =
        Realization::generate(model, slow_law, 0.0, cfg.t_end, dt, StationarySettings::default(), cfg.seed, replica)?;
    let truth = simulate_full(model, &omega.fast, &omega.slow, (u0, v0), cfg.t_end, dt)?;
    let mut obs_rng = rng_for(cfg.seed, &[replica, stream::OBSERVATION]);
    let obs = generate_observation(&truth, sensor, &mut obs_rng, dt)?;
    let problem = FilterProblem { model, slow_law, sensor, u0, v0 };
    let seed = derive_seed(cfg.seed, &[replica, stream::PARTICLES]);
    let functionals = std::slice::from_ref(phi);
    let full = run_filter_full(&problem, &obs, cfg.particles, settings, functionals, seed)?;
    let reduced = run_filter_reduced(&problem, &obs, cfg.particles, window, settings, functionals, seed)?;
    debug_assert_eq!(full.observation, reduced.observation);
    let gaps = cfg
        .report_times
        .iter()
        .map(|&t| {
            let (a, b) = (full.index_of(t)?, reduced.index_of(t)?);
            Ok((full.estimates[0][a] - reduced.estimates[0][b]).abs().powf(cfg.p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicaOutcome { gaps, warnings: full.warnings.len() + reduced.warnings.len() })
}

/// Table of `Ê|Π^ε_t(Φ) − Π̃^ε_t(Φ)|^p` over `cfg.eps_grid` and
/// `cfg.report_times`. Every replica draws a fresh truth and observation
/// path and runs both filters on it with shared dynamics increments. All
/// `ε` share one fine step `min(ε)/50` and the replica seeds, so rows for
/// different `ε` are positively correlated. Replicas run on the rayon pool;
/// the result does not depend on its size.
pub fn compare_filters(
    model: &SlowFastModel,
    slow_law: &LevyTriplet,
    sensor: &Sensor,
    phi: &TestFunctional,
    u0: &[f64],
    v0: &[f64],
    cfg: &FilterCompareConfig,
) -> Result<Vec<FilterCompareRow>> {
    if cfg.eps_grid.is_empty() {
        return Err(Error::Configuration("empty epsilon grid".into()));
    }
    if cfg.report_times.is_empty() {
        return Err(Error::Configuration("no report times".into()));
    }
    if !(cfg.p > 1.0) {
        return Err(Error::param("p", "must exceed 1"));
    }
    if cfg.replicas < 2 {
        return Err(Error::param("replicas", "at least two replicas are needed for a standard error"));
    }
    if cfg.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::param("eps_grid", "entries must be positive"));
    }
    // Largest step below min(ε)/50 that divides the shortest report step.
    let eps_min = cfg.eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_min = FilterSettings::for_epsilon(eps_min).report_dt;
    let dt = h_min / (h_min / (eps_min / 50.0) - 1e-9).ceil();

    let mut setups = Vec::with_capacity(cfg.eps_grid.len());
    for &eps in &cfg.eps_grid {
        let m = model.with_epsilon(eps)?;
        let mut settings = FilterSettings::for_epsilon(eps);
        // Keep the report step a whole number of fine steps.
        settings.report_dt = dt * (settings.report_dt / dt + 1e-9).floor();
        let window = BackwardWindow::for_model(&m, cfg.mu, settings.report_dt, cfg.truncation_tol)?
            .with_picard_tol(cfg.picard_tol);
        let mu = Analysis::new(&m, cfg.mu)?.mu;
        setups.push((m, settings, window, mu));
    }

    let units: Vec<(usize, u64)> =
        (0..setups.len()).flat_map(|e| (0..cfg.replicas as u64).map(move |r| (e, r))).collect();
    let outcomes = units
        .par_iter()
        .map(|&(e, r)| {
            let (m, settings, window, _) = &setups[e];
            one_replica(m, slow_law, sensor, phi, u0, v0, cfg, window, settings, dt, r)
        })
        .collect::<Vec<_>>();

    let mut rows = Vec::new();
    for (e, (m, _, _, mu)) in setups.iter().enumerate() {
        let mine = outcomes[e * cfg.replicas..(e + 1) * cfg.replicas].iter().collect::<Vec<_>>();
        let mut per = Vec::with_capacity(mine.len());
        for o in mine {
            match o {
                Ok(o) => per.push(o),
                Err(err) => return Err(err.clone()),
            }
        }
        let warnings = per.iter().map(|o| o.warnings).sum();
        for (j, &t) in cfg.report_times.iter().enumerate() {
            let xs: Vec<f64> = per.iter().map(|o| o.gaps[j]).collect();
            let (mean, se) = crate::stats::mean_stderr(&xs);
            rows.push(FilterCompareRow {
                eps: m.epsilon(),
                t,
                mean_gap_p: mean,
                mc_stderr: se,
                shape_term: shape_function(m.epsilon(), cfg.p, *mu, t),
                replicas: cfg.replicas,
                warnings,
            });
        }
    }
    Ok(rows)
}
