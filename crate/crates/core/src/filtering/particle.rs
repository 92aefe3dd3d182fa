//! Weights, resampling and the reported filter state.

use rand::Rng;

use super::sensor::TestFunctional;
use crate::error::{Error, Result};
use crate::levy_noise::{IncrementSampler, StableSampler};

/// Which system the particles follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Full,
    Reduced,
}

/// Particle filter options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    /// Resample when `ess < threshold·N`.
    pub resample_threshold: f64,
    /// Report a degeneracy warning when `ess` falls below this.
    pub degeneracy_ess: f64,
    /// Estimates are recorded every `report_dt` (a multiple of the
    /// observation step); the reduced filter also steps at this size.
    pub report_dt: f64,
    /// Burn-in tolerance for the per-particle noise history of the reduced
    /// filter.
    pub history_tol: f64,
}

impl FilterSettings {
    /// Defaults with reduced step `min(ε/10, 0.02)`.
    pub fn for_epsilon(epsilon: f64) -> Self {
        Self { resample_threshold: 0.5, degeneracy_ess: 5.0, report_dt: (epsilon / 10.0).min(0.02), history_tol: 1e-3 }
    }
}

/// Particles and log-weights at time `t`. `u` and `v` are row-major with
/// `n` and `m` entries per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub kind: FilterKind,
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub ess: f64,
}

impl FilterState {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Dimension of the state each particle evolves: `n + m` for the full
    /// filter, `m` for the reduced one (its `u` is read off the manifold).
    pub fn state_dim(&self) -> usize {
        match self.kind {
            FilterKind::Full => self.n + self.m,
            FilterKind::Reduced => self.m,
        }
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        normalize(&self.log_weights).0
    }

    /// `Π_t(Φ) = Σ ŵ_i Φ(u_i, v_i)`.
    pub fn estimate(&self, phi: &TestFunctional) -> f64 {
        estimate(&self.normalized_weights(), &self.u, &self.v, self.n, self.m, phi)
    }
}

/// A weight collapse: `ess` below the configured level at step `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyWarning {
    pub step: usize,
    pub t: f64,
    pub ess: f64,
}

/// Estimates and diagnostics of one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub kind: FilterKind,
    /// Report times.
    pub times: Vec<f64>,
    /// `estimates[j][k]` is `Π_{t_k}(Φ_j)`.
    pub estimates: Vec<Vec<f64>>,
    /// Effective sample size at the report times (before resampling).
    pub ess: Vec<f64>,
    pub resamples: usize,
    pub warnings: Vec<DegeneracyWarning>,
    /// Fingerprint of the observation path consumed.
    pub observation: u64,
    pub final_state: FilterState,
    /// Lyapunov–Perron iterations spent (reduced filter only).
    pub solver_iterations: usize,
}

impl FilterRun {
    /// Index of the report time closest to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let (k, dist) = self
            .times
            .iter()
            .enumerate()
            .map(|(k, s)| (k, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Window("empty filter run".into()))?;
        if dist > 1e-9 * t.abs().max(1.0) {
            return Err(Error::Alignment(format!("t = {t} is not a report time")));
        }
        Ok(k)
    }
}

/// Normalized weights and effective sample size `1/Σŵ²`, summed in index
/// order.
pub fn normalize(log_w: &[f64]) -> (Vec<f64>, f64) {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    (w, ess)
}

pub(crate) fn estimate(w: &[f64], u: &[f64], v: &[f64], n: usize, m: usize, phi: &TestFunctional) -> f64 {
    w.iter().enumerate().map(|(i, wi)| wi * phi.eval(&u[i * n..(i + 1) * n], &v[i * m..(i + 1) * m])).sum()
}

/// Systematic resampling with a single uniform `u0 ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let target = (i as f64 + u0) / n as f64;
        while cum < target && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// `dst[i] = src[ancestors[i]]` for rows of width `stride`.
pub(crate) fn gather(src: &[f64], dst: &mut Vec<f64>, stride: usize, ancestors: &[usize]) {
    dst.clear();
    for &a in ancestors {
        dst.extend_from_slice(&src[a * stride..(a + 1) * stride]);
    }
}

/// Dynamics noise for one particle step. Both filters draw through this in
/// the same order, so equal seeds give slot-wise common random numbers.
pub(crate) struct NoiseDraw<'a> {
    pub fast: StableSampler,
    pub fast_scale: f64,
    pub slow: IncrementSampler<'a>,
}

impl NoiseDraw<'_> {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, du: &mut [f64], dv: &mut [f64]) {
        self.fast.sample_unit_into(rng, du);
        for x in du.iter_mut() {
            *x *= self.fast_scale;
        }
        self.slow.sample(rng, dv, None);
    }
}
