//! Observation process `w_t = W_t + ∫₀ᵗ H(u_s, v_s) ds`.

use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::StandardNormal;

use super::sensor::Sensor;
use crate::error::{Error, Result};
use crate::model::{Representation, TrajectoryPair};

/// Observation path on `[0, T]` with its Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    dt: f64,
    steps: usize,
    dim: usize,
    w: Vec<f64>,
    dw_noise: Vec<f64>,
}

impl ObservationPath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `w(t_k)`.
    pub fn w_at(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    /// `ΔW_k` on `[t_k, t_{k+1}]`.
    pub fn noise_increment(&self, k: usize) -> &[f64] {
        &self.dw_noise[k * self.dim..(k + 1) * self.dim]
    }

    /// `w(t_{k1}) − w(t_{k0})`.
    pub fn increment_into(&self, k0: usize, k1: usize, out: &mut [f64]) {
        let (a, b) = (self.w_at(k0), self.w_at(k1));
        for d in 0..self.dim {
            out[d] = b[d] - a[d];
        }
    }

    /// Hash of step, dimension and values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dt.to_bits().hash(&mut h);
        self.steps.hash(&mut h);
        self.dim.hash(&mut h);
        for v in &self.w {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// The same path read every `stride` steps.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.steps % stride != 0 {
            return Err(Error::Alignment(format!("{} steps are not a multiple of {stride}", self.steps)));
        }
        let steps = self.steps / stride;
        let d = self.dim;
        let mut w = Vec::with_capacity((steps + 1) * d);
        let mut dw = vec![0.0; steps * d];
        for k in 0..=steps {
            w.extend_from_slice(self.w_at(k * stride));
        }
        for k in 0..self.steps {
            for i in 0..d {
                dw[(k / stride) * d + i] += self.dw_noise[k * d + i];
            }
        }
        Ok(Self { dt: self.dt * stride as f64, steps, dim: d, w, dw_noise: dw })
    }
}

/// `Δw_k = ΔW_k + H(u_k, v_k)·dt` along `truth` (original coordinates) with
/// `ΔW_k ~ N(0, dt·I)` drawn from `rng`. `dt` must be a multiple of the
/// trajectory's step.
pub fn generate_observation<R: Rng + ?Sized>(
    truth: &TrajectoryPair,
    sensor: &Sensor,
    rng: &mut R,
    dt: f64,
) -> Result<ObservationPath> {
    if truth.representation() != Representation::Original {
        return Err(Error::Alignment("observations are generated from original coordinates".into()));
    }
    if truth.len() < 2 {
        return Err(Error::param("truth", "needs at least two time points"));
    }
    let ratio = dt / truth.dt();
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 * ratio {
        return Err(Error::Alignment(format!("dt = {dt} is not a multiple of the trajectory step {}", truth.dt())));
    }
    let steps = (truth.len() - 1) / stride;
    let d = sensor.dim();
    let sd = dt.sqrt();
    let mut w = vec![0.0; (steps + 1) * d];
    let mut dw_noise = vec![0.0; steps * d];
    let mut h = vec![0.0; d];
    for k in 0..steps {
        let j = k * stride;
        sensor.eval(truth.u_at(j), truth.v_at(j), &mut h);
        for i in 0..d {
            let dw: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            dw_noise[k * d + i] = dw;
            w[(k + 1) * d + i] = w[k * d + i] + dw + h[i] * dt;
        }
    }
    Ok(ObservationPath { dt, steps, dim: d, w, dw_noise })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::stats::{mean_stderr, quantiles};

    fn still_truth(t_end: f64, dt: f64) -> TrajectoryPair {
        let k = (t_end / dt).round() as usize;
        TrajectoryPair::from_parts(
            (0..=k).map(|i| i as f64 * dt).collect(),
            1,
            1,
            vec![0.3; k + 1],
            vec![-0.1; k + 1],
            Representation::Original,
        )
        .unwrap()
    }

    #[test]
    fn pure_noise_has_unit_quadratic_variation() {
        let truth = still_truth(1.0, 1e-4);
        let obs = generate_observation(&truth, &Sensor::zero(1), &mut rng_for(1, &[]), 1e-4).unwrap();
        assert_eq!(obs.w_at(0), &[0.0]);
        let qv: f64 = (0..obs.steps()).map(|k| obs.noise_increment(k)[0].powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.05, "QV {qv}");
    }

    #[test]
    fn constant_sensor_gives_drift_h_t() {
        let truth = still_truth(1.0, 0.01);
        let ends: Vec<f64> = (0..4000)
            .map(|r| {
                generate_observation(&truth, &Sensor::constant(vec![0.7]), &mut rng_for(2, &[r]), 0.01)
                    .unwrap()
                    .w_at(100)[0]
            })
            .collect();
        let (m, se) = mean_stderr(&ends);
        assert!((m - 0.7).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn increments_are_consistent_with_the_noise() {
        let truth = still_truth(0.5, 0.01);
        let s = Sensor::tanh_sum(1.0, 1, 1);
        let obs = generate_observation(&truth, &s, &mut rng_for(3, &[]), 0.01).unwrap();
        let h = (0.3f64 - 0.1).tanh();
        let mut inc = [0.0];
        for k in 0..obs.steps() {
            obs.increment_into(k, k + 1, &mut inc);
            assert!((inc[0] - obs.noise_increment(k)[0] - h * 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_agrees_in_distribution() {
        let truth = still_truth(1.0, 0.005);
        let s = Sensor::tanh_sum(1.0, 1, 1);
        let n = 4000;
        let coarse: Vec<f64> = (0..n)
            .map(|r| generate_observation(&truth, &s, &mut rng_for(4, &[r]), 0.01).unwrap().w_at(100)[0])
            .collect();
        let fine: Vec<f64> = (0..n)
            .map(|r| {
                generate_observation(&truth, &s, &mut rng_for(5, &[r]), 0.005).unwrap().subsample(2).unwrap().w_at(100)
                    [0]
            })
            .collect();
        let ps = [0.1, 0.25, 0.5, 0.75, 0.9];
        let (qc, qf) = (quantiles(&coarse, &ps), quantiles(&fine, &ps));
        for (i, p) in ps.iter().enumerate() {
            // Standard error of a normal quantile: sqrt(p(1-p)/n)/φ(z_p), sd = 1.
            let z: f64 = qc[i] - 0.2f64.tanh();
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let se = (p * (1.0 - p) / n as f64).sqrt() / dens * 2f64.sqrt();
            assert!((qc[i] - qf[i]).abs() < 2.0 * se, "p = {p}: {} vs {}", qc[i], qf[i]);
        }
    }
}
