use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Analysis, SlowFastModel};
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};

/// Slack allowed when comparing probes against declared constants.
const PROBE_SLACK: f64 = 1e-9;

/// Pass/fail per hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisChecks {
    /// `A` is uniformly dissipative: `γ1 > 0`.
    pub h1: bool,
    /// `B` has the two-sided exponential bounds with `γ2 > 0` and `γ3 > 0`.
    pub h2: bool,
    /// `U`, `V` are `L`-Lipschitz on every probe.
    pub h3: bool,
    /// `γ1 > L`.
    pub h4: bool,
    /// `|U| ≤ M_U`, `|V| ≤ M_V` on every probe.
    pub h5: bool,
}

impl HypothesisChecks {
    pub fn all(&self) -> bool {
        self.h1 && self.h2 && self.h3 && self.h4 && self.h5
    }
}

/// Largest observed ratios against the declared constants (≤ 1 means the
/// declaration held on every probe).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSummary {
    pub probes: usize,
    pub max_lipschitz_u: f64,
    pub max_lipschitz_v: f64,
    pub max_abs_u: f64,
    pub max_abs_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub analysis: Analysis,
    pub epsilon0: Option<f64>,
    pub q: f64,
    pub pass: HypothesisChecks,
    pub probes: ProbeSummary,
    /// `σ1 ≠ 0`.
    pub noise_nondegenerate: bool,
    /// `α < 2` (the Gaussian limit is accepted but lies outside the theory).
    pub stable_noise: bool,
}

impl HypothesisReport {
    pub fn gamma1(&self) -> f64 {
        self.analysis.rates.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.analysis.rates.gamma2
    }

    pub fn gamma3(&self) -> f64 {
        self.analysis.rates.gamma3
    }

    pub fn mu(&self) -> f64 {
        self.analysis.mu
    }
}

impl fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.analysis;
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "gamma1 = {}", a.rates.gamma1)?;
        writeln!(f, "gamma2 = {}", a.rates.gamma2)?;
        writeln!(f, "gamma3 = {}", a.rates.gamma3)?;
        writeln!(f, "L = {}  M_U = {}  M_V = {}", a.lipschitz, a.bound_u, a.bound_v)?;
        writeln!(f, "mu = {}  epsilon = {}  q = {}", a.mu, a.epsilon, self.q)?;
        match self.epsilon0 {
            Some(e) => writeln!(f, "epsilon0 = {e}")?,
            None => writeln!(f, "epsilon0 = none (gamma1 - mu <= L)")?,
        }
        writeln!(
            f,
            "H1 {}  H2 {}  H3 {}  H4 {}  H5 {}",
            mark(self.pass.h1),
            mark(self.pass.h2),
            mark(self.pass.h3),
            mark(self.pass.h4),
            mark(self.pass.h5)
        )?;
        write!(
            f,
            "probes = {}  max |dU|/(L|dz|) = {:.4}  max |dV|/(L|dz|) = {:.4}  max |U|/M_U = {:.4}  max |V|/M_V = {:.4}",
            self.probes.probes,
            self.probes.max_lipschitz_u,
            self.probes.max_lipschitz_v,
            self.probes.max_abs_u,
            self.probes.max_abs_v
        )
    }
}

/// Random probe pairs at mixed scales; every other pair is a close pair.
pub(crate) fn probe_pairs<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    count: usize,
    rng: &mut R,
    mut visit: impl FnMut(&[f64], &[f64], &[f64], &[f64]),
) {
    const SCALES: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
    let gauss = |len: usize, s: f64, rng: &mut R| -> Vec<f64> {
        (0..len).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    for k in 0..count {
        let s = SCALES[k % SCALES.len()];
        let x1 = gauss(n, s, rng);
        let y1 = gauss(m, s, rng);
        let (x2, y2) = if k % 2 == 0 {
            (gauss(n, s, rng), gauss(m, s, rng))
        } else {
            let h = 1e-3 * s;
            let dx = gauss(n, h, rng);
            let dy = gauss(m, h, rng);
            (x1.iter().zip(&dx).map(|(a, b)| a + b).collect(), y1.iter().zip(&dy).map(|(a, b)| a + b).collect())
        };
        visit(&x1, &y1, &x2, &y2);
    }
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        value / bound
    } else if value <= PROBE_SLACK {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compute the decay rates, probe the declared constants and evaluate the
/// contraction threshold `ε₀` for weight rate `mu` (default `(γ1 − L)/2`).
pub fn validate_hypotheses<R: Rng + ?Sized>(
    model: &SlowFastModel,
    mu: Option<f64>,
    probe_count: usize,
    rng: &mut R,
) -> Result<HypothesisReport> {
    if probe_count < 1000 {
        return Err(Error::param("probe_count", "at least 1000 probes are required"));
    }
    let rates = model.rates();
    let d = model.declared();
    let h1 = rates.gamma1 > 0.0;
    let analysis = if h1 {
        Analysis::new(model, mu)?
    } else {
        Analysis {
            rates,
            lipschitz: d.lipschitz,
            bound_u: d.bound_u,
            bound_v: d.bound_v,
            mu: mu.unwrap_or(f64::NAN),
            epsilon: model.epsilon(),
        }
    };
    let (n, m) = (model.n(), model.m());
    let mut ua = vec![0.0; n];
    let mut ub = vec![0.0; n];
    let mut va = vec![0.0; m];
    let mut vb = vec![0.0; m];
    let mut summary = ProbeSummary {
        probes: probe_count,
        max_lipschitz_u: 0.0,
        max_lipschitz_v: 0.0,
        max_abs_u: 0.0,
        max_abs_v: 0.0,
    };
    let mut lip_ok = true;
    let mut bound_ok = true;
    probe_pairs(n, m, probe_count, rng, |x1, y1, x2, y2| {
        model.u().eval(x1, y1, &mut ua);
        model.u().eval(x2, y2, &mut ub);
        model.v().eval(x1, y1, &mut va);
        model.v().eval(x2, y2, &mut vb);
        let dz = dist(x1, x2) + dist(y1, y2);
        let (du, dv) = (dist(&ua, &ub), dist(&va, &vb));
        lip_ok &= du <= d.lipschitz * dz + PROBE_SLACK && dv <= d.lipschitz * dz + PROBE_SLACK;
        bound_ok &= norm(&ua) <= d.bound_u + PROBE_SLACK && norm(&va) <= d.bound_v + PROBE_SLACK;
        if dz > 0.0 {
            summary.max_lipschitz_u = summary.max_lipschitz_u.max(ratio(du, d.lipschitz * dz));
            summary.max_lipschitz_v = summary.max_lipschitz_v.max(ratio(dv, d.lipschitz * dz));
        }
        summary.max_abs_u = summary.max_abs_u.max(ratio(norm(&ua), d.bound_u));
        summary.max_abs_v = summary.max_abs_v.max(ratio(norm(&va), d.bound_v));
    });
    let pass = HypothesisChecks {
        h1,
        h2: rates.gamma2 > 0.0 && rates.gamma3 > 0.0,
        h3: lip_ok,
        h4: rates.gamma1 > d.lipschitz,
        h5: bound_ok,
    };
    let (epsilon0, q) = if h1 { (analysis.epsilon0(), analysis.q()) } else { (None, f64::INFINITY) };
    Ok(HypothesisReport {
        analysis,
        epsilon0,
        q,
        pass,
        probes: summary,
        noise_nondegenerate: model.sigma1() != 0.0,
        stable_noise: model.alpha() < 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::fixtures::ts1;
    use crate::model::{Coupling, DeclaredConstants};
    use crate::rng::rng_for;

    #[test]
    fn ts1_passes_with_epsilon0_one_half() {
        let r = validate_hypotheses(&ts1(0.1), Some(1.0), 2000, &mut rng_for(1, &[])).unwrap();
        assert!(r.pass.all(), "{r}");
        assert!((r.epsilon0.unwrap() - 0.5).abs() < 1e-9);
        assert!((r.gamma1() - 2.0).abs() < 1e-12);
        assert!(r.probes.max_lipschitz_u <= 1.0 + 1e-9);
    }

    #[test]
    fn h4_fails_when_lipschitz_reaches_gamma1() {
        let model = SlowFastModel::builder(Matrix::scalar(1, -1.0), Matrix::scalar(1, -1.0))
            .coupling_u(Coupling::ScaledSin { c: 1.0 })
            .declared(DeclaredConstants { lipschitz: 1.0, bound_u: 1.0, bound_v: 0.0 })
            .build()
            .unwrap();
        let r = validate_hypotheses(&model, Some(0.5), 1000, &mut rng_for(2, &[])).unwrap();
        assert!(!r.pass.h4);
        assert!(r.epsilon0.is_none());
    }

    #[test]
    fn understated_lipschitz_is_caught() {
        let model = SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
            .coupling_u(Coupling::ScaledSin { c: 0.5 })
            .declared(DeclaredConstants { lipschitz: 0.3, bound_u: 0.5, bound_v: 0.0 })
            .build()
            .unwrap();
        let r = validate_hypotheses(&model, Some(1.0), 1000, &mut rng_for(3, &[])).unwrap();
        assert!(!r.pass.h3);
        assert!(r.pass.h5);
    }

    #[test]
    fn non_hurwitz_a_is_flagged_not_raised() {
        let model = SlowFastModel::builder(Matrix::scalar(1, 0.5), Matrix::scalar(1, -1.0)).build().unwrap();
        let r = validate_hypotheses(&model, None, 1000, &mut rng_for(4, &[])).unwrap();
        assert!(!r.pass.h1);
        assert!(r.epsilon0.is_none());
    }

    #[test]
    fn symmetric_gamma1() {
        let model = SlowFastModel::builder(Matrix::scalar(3, -2.0), Matrix::scalar(1, -1.0)).build().unwrap();
        assert!((model.rates().gamma1 - 2.0).abs() < 1e-12);
    }
}
