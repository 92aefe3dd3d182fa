//! Symmetric α-stable laws.
//!
//! The unit law in dimension `n` has characteristic function
//! `exp(-C1(n,α)|u|^α)`. In one dimension `C1 = 1`, so `E cos(uX) = e^{-|u|^α}`.
//! Scalar samples use the Chambers–Mallows–Stuck transform; vectors use the
//! sub-Gaussian representation `X = C1^{1/α} √(2A) G` with `A` a positive
//! (α/2)-stable variable (Kanter's representation) and `G` standard normal.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Stability index, scale and dimension of a symmetric α-stable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    scale: f64,
    dim: usize,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64, dim: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::param("alpha", format!("{alpha} is outside (1, 2]")));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::param("scale", format!("{scale} must be finite and nonnegative")));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        Ok(Self { alpha, scale, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c1(&self) -> f64 {
        c1(self.dim, self.alpha)
    }

    pub fn c2(&self) -> f64 {
        c2(self.dim, self.alpha)
    }
}

/// `C1(n,α) = π^{-1/2} Γ((1+α)/2) Γ(n/2) / Γ((n+α)/2)`.
pub fn c1(n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    libm::tgamma((1.0 + alpha) / 2.0) * libm::tgamma(n / 2.0) / (PI.sqrt() * libm::tgamma((n + alpha) / 2.0))
}

/// `C2(n,α) = α Γ((n+α)/2) / (2^{1-α} π^{n/2} Γ(1-α/2))`, the Lévy density
/// constant of the law: `ν(du) = C2 / |u|^{n+α} du`.
pub fn c2(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    alpha * libm::tgamma((nf + alpha) / 2.0)
        / (2f64.powf(1.0 - alpha) * PI.powf(nf / 2.0) * libm::tgamma(1.0 - alpha / 2.0))
}

/// Reusable sampler with precomputed constants.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    params: StableParams,
    radial: f64,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Self {
        let radial = params.c1().powf(1.0 / params.alpha);
        Self { params, radial }
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    /// One unit-scale draw written into `out` (length `dim`).
    #[inline]
    pub fn sample_unit_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let alpha = self.params.alpha;
        if self.params.dim == 1 {
            out[0] = cms_scalar(alpha, rng);
            return;
        }
        let mix = if alpha == 2.0 { 1.0 } else { positive_stable(alpha / 2.0, rng) };
        let k = self.radial * (2.0 * mix).sqrt();
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = k * g;
        }
    }

    /// One draw at the configured scale.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sample_unit_into(rng, out);
        for o in out.iter_mut() {
            *o *= self.params.scale;
        }
    }
}

/// Chambers–Mallows–Stuck for the symmetric case with `E e^{iuX} = e^{-|u|^α}`.
#[inline]
fn cms_scalar<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.sample::<f64, _>(Open01) - 0.5);
    let w: f64 = rng.sample(Exp1);
    if alpha == 2.0 {
        return 2.0 * v.sin() * w.sqrt();
    }
    let lead = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    lead * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive stable variable with Laplace transform `e^{-λ^a}`, `0 < a < 1`.
#[inline]
fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let w: f64 = rng.sample(Exp1);
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
}

/// `count` i.i.d. draws of the law described by `params`.
pub fn sample_alpha_stable<R: Rng + ?Sized>(params: StableParams, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    let sampler = StableSampler::new(params);
    Ok((0..count)
        .map(|_| {
            let mut x = vec![0.0; params.dim];
            sampler.sample_into(rng, &mut x);
            x
        })
        .collect())
}

/// CDF of the unit scalar law, by Gil-Pelaez inversion of `e^{-|u|^α}`.
pub fn symmetric_stable_cdf(alpha: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    // e^{-u^α} < 1e-18 beyond u_max.
    let u_max = 42f64.powf(1.0 / alpha);
    let n = 20_000;
    let h = u_max / n as f64;
    let f = |u: f64| if u == 0.0 { x } else { (-u.powf(alpha)).exp() * (u * x).sin() / u };
    let mut acc = f(0.0) + f(u_max);
    for k in 1..n {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + acc * h / 3.0 / PI
}

/// Quantile of the unit scalar law.
pub fn symmetric_stable_quantile(alpha: f64, p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    if p == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while symmetric_stable_cdf(alpha, lo) > p {
        lo *= 2.0;
    }
    while symmetric_stable_cdf(alpha, hi) < p {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if symmetric_stable_cdf(alpha, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::stats::{mean_stderr, quantiles};

    #[test]
    fn c1_is_one_in_one_dimension() {
        for &a in &[1.1, 1.5, 1.9, 2.0] {
            assert!((c1(1, a) - 1.0).abs() < 1e-12);
        }
        // At α = 2 the exponent reduces to |u|²/n.
        assert!((c1(3, 2.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn c2_matches_scalar_closed_form() {
        // In one dimension C2 = Γ(1+α) sin(πα/2) / π.
        for &a in &[1.2, 1.5, 1.8] {
            let expected = libm::tgamma(1.0 + a) * (PI * a / 2.0).sin() / PI;
            assert!((c2(1, a) - expected).abs() < 1e-12, "alpha {a}");
        }
    }

    #[test]
    fn rejects_invalid_alpha() {
        assert!(StableParams::new(1.0, 1.0, 1).is_err());
        assert!(StableParams::new(2.1, 1.0, 1).is_err());
        assert!(StableParams::new(1.5, -1.0, 1).is_err());
        assert!(sample_alpha_stable(StableParams::new(1.5, 1.0, 1).unwrap(), 0, &mut rng_for(1, &[])).is_err());
    }

    #[test]
    fn gaussian_limit_has_variance_two() {
        let p = StableParams::new(2.0, 1.0, 1).unwrap();
        let xs: Vec<f64> =
            sample_alpha_stable(p, 200_000, &mut rng_for(11, &[])).unwrap().into_iter().map(|v| v[0]).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (var, se) = mean_stderr(&sq);
        assert!((var - 2.0).abs() < 4.0 * se, "variance {var} ± {se}");
    }

    #[test]
    fn scalar_characteristic_function_and_median() {
        let p = StableParams::new(1.5, 1.0, 1).unwrap();
        let xs: Vec<f64> =
            sample_alpha_stable(p, 400_000, &mut rng_for(12, &[])).unwrap().into_iter().map(|v| v[0]).collect();
        let c: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let (m, se) = mean_stderr(&c);
        assert!((m - (-1f64).exp()).abs() < 3.0 * se, "E cos X = {m} ± {se}");
        let med = quantiles(&xs, &[0.5])[0];
        assert!(med.abs() < 0.01, "median {med}");
    }

    #[test]
    fn vector_characteristic_function_uses_c1() {
        let alpha = 1.6;
        let p = StableParams::new(alpha, 1.0, 2).unwrap();
        let xs = sample_alpha_stable(p, 300_000, &mut rng_for(13, &[])).unwrap();
        let u = [0.6, -0.8];
        let c: Vec<f64> = xs.iter().map(|x| (u[0] * x[0] + u[1] * x[1]).cos()).collect();
        let (m, se) = mean_stderr(&c);
        let expected = (-c1(2, alpha)).exp();
        assert!((m - expected).abs() < 3.5 * se, "{m} vs {expected} ± {se}");
    }

    #[test]
    fn cdf_inversion_matches_gaussian_and_cauchy_like_limits() {
        // α = 2: N(0, 2).
        let q = symmetric_stable_quantile(2.0, 0.75);
        assert!((q - 0.674_489_750_196_081_7 * 2f64.sqrt()).abs() < 1e-6);
        assert!((symmetric_stable_cdf(1.5, 0.0) - 0.5).abs() < 1e-15);
        let s = symmetric_stable_cdf(1.5, 1.3) + symmetric_stable_cdf(1.5, -1.3);
        assert!((s - 1.0).abs() < 1e-10);
    }
}
