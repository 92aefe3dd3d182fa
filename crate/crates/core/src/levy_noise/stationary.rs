//! Stationary solutions `ζ^ε` and `ς` of the linear auxiliary equations
//! `dζ = (A/ε)ζ dt + σ1 ε^{-1/α} dL^α` and `dς = Bς dt + σ2 dL`.
//!
//! The recursion starts from zero at the left end of the path and the first
//! `ln(1/tol)/rate` time units are treated as burn-in; values before
//! [`StationaryPath::valid_from`] must not be used.

use super::path::{NoisePath, PathLaw, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::SlowFastModel;

/// Default burn-in tolerance.
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryKind {
    FastStable,
    SlowLevy,
}

/// One-step recursion used to build the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StationaryScheme {
    /// Euler step driven by the raw path increments. It is the scheme the
    /// full-system integrator uses, so subtracting the stationary path from a
    /// full trajectory gives the transformed system's trajectory exactly.
    #[default]
    Euler,
    /// Exact-in-law recursion `ζ ← e^{-a h}ζ + g ((1-e^{-αah})/(αah))^{1/α} ΔL`
    /// for a generator `-a·I` and a stable (or Gaussian, α = 2) path. Falls
    /// back to Euler otherwise.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarySettings {
    pub scheme: StationaryScheme,
    pub tol: f64,
}

impl Default for StationarySettings {
    fn default() -> Self {
        Self { scheme: StationaryScheme::Euler, tol: DEFAULT_STATIONARY_TOL }
    }
}

/// A stationary path on the grid of the driving noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    kind: StationaryKind,
    scheme: StationaryScheme,
    valid_from: f64,
    noise_fingerprint: u64,
}

impl StationaryPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> StationaryKind {
        self.kind
    }

    /// Scheme actually used (an `Exact` request may fall back to Euler).
    pub fn scheme(&self) -> StationaryScheme {
        self.scheme
    }

    /// First time after burn-in.
    pub fn valid_from(&self) -> f64 {
        self.valid_from
    }

    /// Fingerprint of the driving noise path.
    pub fn noise_fingerprint(&self) -> u64 {
        self.noise_fingerprint
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at grid time `t`; errors inside the burn-in region.
    pub fn value(&self, t: f64) -> Result<&[f64]> {
        let i = self.grid.index_of(t)?;
        self.check_valid(i)?;
        Ok(self.at(i))
    }

    pub(crate) fn check_valid(&self, i: usize) -> Result<()> {
        if self.grid.time(i) < self.valid_from - 1e-9 * self.grid.dt() {
            return Err(Error::Window(format!(
                "t = {} lies in the burn-in region (valid from {})",
                self.grid.time(i),
                self.valid_from
            )));
        }
        Ok(())
    }

    /// Zero path on `grid`, valid everywhere.
    pub fn zeros(grid: TimeGrid, dim: usize, kind: StationaryKind) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.len() * dim],
            kind,
            scheme: StationaryScheme::Euler,
            valid_from: grid.t_min(),
            noise_fingerprint: 0,
        }
    }
}

/// Stationary solution of `dx = G x dt + gain dL` on the grid of `path`,
/// where `‖e^{Gt}‖ ≤ e^{-decay·t}`.
pub fn stationary_linear(
    generator: &Matrix,
    gain: f64,
    decay: f64,
    path: &NoisePath,
    kind: StationaryKind,
    settings: StationarySettings,
) -> Result<StationaryPath> {
    let dim = path.dim();
    if generator.rows() != dim || !generator.is_square() {
        return Err(Error::param("generator", format!("expected {dim}x{dim}")));
    }
    let grid = *path.grid();
    if gain == 0.0 {
        return Ok(StationaryPath { noise_fingerprint: path.fingerprint(), ..StationaryPath::zeros(grid, dim, kind) });
    }
    if !(decay > 0.0) {
        return Err(Error::Domain(format!("stationary solution needs a positive decay rate, got {decay}")));
    }
    if !(settings.tol > 0.0 && settings.tol < 1.0) {
        return Err(Error::param("tol", "must lie in (0, 1)"));
    }
    let burn = (1.0 / settings.tol).ln() / decay;
    let valid_from = grid.t_min() + burn;
    if valid_from > 1e-9 * grid.dt() {
        return Err(Error::Window(format!(
            "burn-in needs T_back ≥ {burn:.4}, path reaches back only {:.4}",
            -grid.t_min()
        )));
    }
    let h = grid.dt();
    let exponent = match path.law() {
        PathLaw::Stable { alpha } => Some(alpha),
        PathLaw::Levy { gaussian: true } => Some(2.0),
        _ => None,
    };
    let exact = match (settings.scheme, generator.as_scalar_identity(), exponent) {
        (StationaryScheme::Exact, Some(g), Some(alpha)) if g < 0.0 => {
            let a = -g;
            Some(((-a * h).exp(), gain * ((1.0 - (-alpha * a * h).exp()) / (alpha * a * h)).powf(1.0 / alpha)))
        }
        _ => None,
    };
    let mut values = vec![0.0; grid.len() * dim];
    let mut inc = vec![0.0; dim];
    let mut drift = vec![0.0; dim];
    for i in 1..grid.len() {
        path.increment_into(i - 1, i, &mut inc);
        let (prev, cur) = values.split_at_mut(i * dim);
        let prev = &prev[(i - 1) * dim..];
        let cur = &mut cur[..dim];
        match exact {
            Some((decay_factor, noise_factor)) => {
                for d in 0..dim {
                    cur[d] = decay_factor * prev[d] + noise_factor * inc[d];
                }
            }
            None => {
                generator.mul_vec_into(prev, &mut drift);
                for d in 0..dim {
                    cur[d] = prev[d] + drift[d] * h + gain * inc[d];
                }
            }
        }
    }
    Ok(StationaryPath {
        grid,
        dim,
        values,
        kind,
        scheme: if exact.is_some() { StationaryScheme::Exact } else { StationaryScheme::Euler },
        valid_from,
        noise_fingerprint: path.fingerprint(),
    })
}

/// `ζ^ε` driven by the fast stable path.
pub fn stationary_fast(
    model: &SlowFastModel,
    stable_path: &NoisePath,
    settings: StationarySettings,
) -> Result<StationaryPath> {
    let eps = model.epsilon();
    stationary_linear(
        &model.a().scaled(1.0 / eps),
        model.sigma1() * eps.powf(-1.0 / model.alpha()),
        model.rates().gamma1 / eps,
        stable_path,
        StationaryKind::FastStable,
        settings,
    )
}

/// `ς` driven by the slow Lévy path.
pub fn stationary_slow(
    model: &SlowFastModel,
    levy_path: &NoisePath,
    settings: StationarySettings,
) -> Result<StationaryPath> {
    stationary_linear(model.b(), model.sigma2(), model.rates().gamma3, levy_path, StationaryKind::SlowLevy, settings)
}
