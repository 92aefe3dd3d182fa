//! General Lévy noise for the slow block: drift, Brownian part `M R_t`, and a
//! compensated small-jump part supported on `|u| ≤ δ`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::stable::c2;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Default small-jump cutoff.
pub const DEFAULT_CUTOFF: f64 = 0.5;

/// Law of a single compound-Poisson jump.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpDistribution {
    /// Uniform on the closed ball of the given radius.
    UniformBall { radius: f64 },
    /// Every jump equals this vector.
    Fixed(Vec<f64>),
}

/// Small-jump specification.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpMeasure {
    /// Compensated compound Poisson with finite rate.
    CompoundPoisson { rate: f64, jumps: JumpDistribution },
    /// Stable Lévy measure `C2(m,α)|u|^{-m-α} du` restricted to `|u| ≤ δ`.
    /// Jumps below a grid-dependent level are replaced by a Gaussian with the
    /// same covariance; the rest are simulated exactly. Symmetric, so no
    /// compensator is needed.
    TruncatedStable { alpha: f64 },
}

/// A jump recorded on a path: its exact time and size.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: Vec<f64>,
}

/// Drift `b`, diffusion matrix `M` (m × m'), small-jump measure and cutoff `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    drift: Vec<f64>,
    diffusion: Matrix,
    jumps: JumpMeasure,
    cutoff: f64,
}

impl LevyTriplet {
    pub fn new(drift: Vec<f64>, diffusion: Matrix, jumps: JumpMeasure, cutoff: f64) -> Result<Self> {
        let m = drift.len();
        if m == 0 {
            return Err(Error::param("drift", "dimension must be positive"));
        }
        if diffusion.rows() != m {
            return Err(Error::param("diffusion", format!("expected {m} rows, got {}", diffusion.rows())));
        }
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::param("cutoff", format!("{cutoff} is outside (0, 1)")));
        }
        match &jumps {
            JumpMeasure::CompoundPoisson { rate, jumps } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::param("rate", format!("{rate} must be finite and nonnegative")));
                }
                match jumps {
                    JumpDistribution::UniformBall { radius } => {
                        if !(*radius >= 0.0 && *radius <= cutoff) {
                            return Err(Error::param("radius", format!("{radius} must lie in [0, cutoff]")));
                        }
                    }
                    JumpDistribution::Fixed(j) => {
                        if j.len() != m {
                            return Err(Error::param("jump", "dimension mismatch"));
                        }
                        if norm(j) > cutoff {
                            return Err(Error::param("jump", "fixed jump exceeds the cutoff"));
                        }
                    }
                }
            }
            JumpMeasure::TruncatedStable { alpha } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::param("alpha", format!("{alpha} is outside (0, 2)")));
                }
            }
        }
        Ok(Self { drift, diffusion, jumps, cutoff })
    }

    /// Standard `m`-dimensional Brownian motion.
    pub fn brownian(m: usize) -> Self {
        Self {
            drift: vec![0.0; m],
            diffusion: Matrix::identity(m),
            jumps: JumpMeasure::CompoundPoisson { rate: 0.0, jumps: JumpDistribution::UniformBall { radius: 0.0 } },
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn diffusion(&self) -> &Matrix {
        &self.diffusion
    }

    pub fn jump_measure(&self) -> &JumpMeasure {
        &self.jumps
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// True when the law is Gaussian (no jumps).
    pub fn is_gaussian(&self) -> bool {
        matches!(&self.jumps, JumpMeasure::CompoundPoisson { rate, .. } if *rate == 0.0)
    }

    /// Per-step sampler for a fixed step `dt`.
    pub fn increment_sampler(&self, dt: f64) -> IncrementSampler<'_> {
        let m = self.dim();
        let sphere = 2.0 * PI.powf(m as f64 / 2.0) / libm::tgamma(m as f64 / 2.0);
        let (rate, small_var, lower, compensator) = match &self.jumps {
            JumpMeasure::CompoundPoisson { rate, jumps } => {
                let mean: Vec<f64> = match jumps {
                    JumpDistribution::UniformBall { .. } => vec![0.0; m],
                    JumpDistribution::Fixed(j) => j.clone(),
                };
                (*rate, 0.0, 0.0, mean.iter().map(|x| -rate * x * dt).collect())
            }
            JumpMeasure::TruncatedStable { alpha } => {
                let a = *alpha;
                let kappa = (0.5 * self.cutoff).min(dt.powf(1.0 / a));
                let c = c2(m, a) * sphere;
                let rate = c * (kappa.powf(-a) - self.cutoff.powf(-a)) / a;
                let small_var = c * kappa.powf(2.0 - a) / (m as f64 * (2.0 - a));
                (rate, small_var, kappa, vec![0.0; m])
            }
        };
        let poisson = if rate * dt > 0.0 { Some(Poisson::new(rate * dt).expect("positive mean")) } else { None };
        IncrementSampler {
            triplet: self,
            dt,
            sqrt_dt: dt.sqrt(),
            poisson,
            small_sd: (small_var * dt).sqrt(),
            lower,
            compensator,
            gauss: vec![0.0; self.diffusion.cols()],
        }
    }
}

/// Draws increments `L_{t+dt} - L_t` of a [`LevyTriplet`].
#[derive(Debug, Clone)]
pub struct IncrementSampler<'a> {
    triplet: &'a LevyTriplet,
    dt: f64,
    sqrt_dt: f64,
    poisson: Option<Poisson<f64>>,
    small_sd: f64,
    lower: f64,
    compensator: Vec<f64>,
    gauss: Vec<f64>,
}

impl IncrementSampler<'_> {
    /// Write one increment into `out`. When `jumps` is given, the simulated
    /// jumps are appended with their offsets within the step in `[0, dt)`.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64], mut jumps: Option<&mut Vec<Jump>>) {
        let tr = self.triplet;
        for (o, b) in out.iter_mut().zip(&tr.drift) {
            *o = b * self.dt;
        }
        for g in self.gauss.iter_mut() {
            *g = self.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        tr.diffusion.mul_vec_add(&self.gauss, out);
        for (o, c) in out.iter_mut().zip(&self.compensator) {
            *o += c;
        }
        if self.small_sd > 0.0 {
            for o in out.iter_mut() {
                *o += self.small_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let Some(poisson) = self.poisson else { return };
        let count = poisson.sample(rng) as usize;
        for _ in 0..count {
            let offset = rng.random::<f64>() * self.dt;
            let size = self.jump_size(rng);
            for (o, s) in out.iter_mut().zip(&size) {
                *o += s;
            }
            if let Some(reg) = jumps.as_deref_mut() {
                reg.push(Jump { time: offset, size });
            }
        }
    }

    fn jump_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let tr = self.triplet;
        let m = tr.dim();
        match &tr.jumps {
            JumpMeasure::CompoundPoisson { jumps: JumpDistribution::Fixed(j), .. } => j.clone(),
            JumpMeasure::CompoundPoisson { jumps: JumpDistribution::UniformBall { radius }, .. } => {
                let r = radius * rng.random::<f64>().powf(1.0 / m as f64);
                scaled_direction(m, r, rng)
            }
            JumpMeasure::TruncatedStable { alpha } => {
                let a = *alpha;
                let lo = self.lower.powf(-a);
                let hi = tr.cutoff.powf(-a);
                let u: f64 = rng.random();
                let r = (lo - u * (lo - hi)).powf(-1.0 / a);
                scaled_direction(m, r, rng)
            }
        }
    }
}

fn scaled_direction<R: Rng + ?Sized>(m: usize, r: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            return g.into_iter().map(|x| r * x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn validation() {
        let jm = JumpMeasure::CompoundPoisson { rate: 1.0, jumps: JumpDistribution::UniformBall { radius: 0.4 } };
        assert!(LevyTriplet::new(vec![0.0], Matrix::identity(1), jm.clone(), 0.5).is_ok());
        assert!(LevyTriplet::new(vec![0.0], Matrix::identity(1), jm.clone(), 1.0).is_err());
        assert!(LevyTriplet::new(vec![0.0], Matrix::identity(1), jm, 0.3).is_err());
        assert!(LevyTriplet::new(
            vec![0.0, 0.0],
            Matrix::identity(1),
            JumpMeasure::TruncatedStable { alpha: 1.5 },
            0.5
        )
        .is_err());
    }

    #[test]
    fn fixed_jumps_are_compensated() {
        let jm = JumpMeasure::CompoundPoisson { rate: 3.0, jumps: JumpDistribution::Fixed(vec![0.2]) };
        let tr = LevyTriplet::new(vec![0.0], Matrix::zeros(1, 1), jm, 0.5).unwrap();
        let mut s = tr.increment_sampler(0.01);
        let mut rng = rng_for(5, &[]);
        let mut out = [0.0];
        let mut acc = 0.0;
        let n = 200_000;
        for _ in 0..n {
            s.sample(&mut rng, &mut out, None);
            acc += out[0];
        }
        // Martingale: mean increment ≈ 0; sd per step √(λ dt)·0.2 ≈ 0.0346.
        let mean = acc / n as f64;
        assert!(mean.abs() < 4.0 * 0.0346 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn truncated_stable_variance_matches_measure() {
        // Var per unit time = ∫_{|u|≤δ} u² ν(du) = 2 C2 δ^{2-α}/(2-α) in one dimension.
        let (a, d, dt) = (1.5, 0.5, 0.01);
        let tr =
            LevyTriplet::new(vec![0.0], Matrix::zeros(1, 1), JumpMeasure::TruncatedStable { alpha: a }, d).unwrap();
        let mut s = tr.increment_sampler(dt);
        let mut rng = rng_for(6, &[]);
        let mut out = [0.0];
        let n = 200_000;
        let sq: Vec<f64> = (0..n)
            .map(|_| {
                s.sample(&mut rng, &mut out, None);
                out[0] * out[0] / dt
            })
            .collect();
        let (m, se) = crate::stats::mean_stderr(&sq);
        let expected = 2.0 * c2(1, a) * d.powf(2.0 - a) / (2.0 - a);
        assert!((m - expected).abs() < 4.0 * se, "{m} vs {expected} ± {se}");
    }
}
