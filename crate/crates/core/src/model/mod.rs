//! The slow-fast system
//!
//! ```text
//! du = (1/ε)(A u + U(u,v)) dt + σ1 ε^{-1/α} dL^α
//! dv = (B v + V(u,v)) dt + σ2 dL
//! ```
//!
//! together with its derived constants and integrators.

mod coupling;
mod hypotheses;
mod integrate;

pub use coupling::{Coupling, CouplingFn, COUPLING_CATALOG};
pub(crate) use hypotheses::probe_pairs;
pub use hypotheses::{validate_hypotheses, HypothesisChecks, HypothesisReport, ProbeSummary};
pub(crate) use integrate::{aligned_indices, check_divergence, check_stiffness, integrate_euler, step_count};
pub use integrate::{
    from_transformed, simulate_full, simulate_transformed, to_transformed, Representation, TrajectoryPair,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Log-spaced times on which `γ2`, `γ3` are fitted.
const RATE_GRID: (f64, f64, usize) = (1e-3, 1e2, 241);

/// Decay rates of the linear parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    /// `⟨Ax,x⟩ ≤ -γ1|x|²`.
    pub gamma1: f64,
    /// `‖e^{-Bs}‖ ≤ e^{γ2 s}` for `s ≥ 0`.
    pub gamma2: f64,
    /// `‖e^{Bs}‖ ≤ e^{-γ3 s}` for `s ≥ 0`.
    pub gamma3: f64,
}

impl DecayRates {
    pub fn of(a: &Matrix, b: &Matrix) -> Self {
        let gamma1 = -a.symmetric_part_max_eigenvalue();
        let (lo, hi, n) = RATE_GRID;
        let mut gamma2 = f64::NEG_INFINITY;
        let mut gamma3 = f64::INFINITY;
        for k in 0..n {
            let s = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
            gamma2 = gamma2.max(b.scaled(-s).expm().operator_norm().ln() / s);
            gamma3 = gamma3.min(-b.scaled(s).expm().operator_norm().ln() / s);
        }
        Self { gamma1, gamma2, gamma3 }
    }
}

/// Lipschitz constant of `U` and `V` and their suprema, as declared by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    pub lipschitz: f64,
    pub bound_u: f64,
    pub bound_v: f64,
}

/// Coefficients of `u' = G_u u + c_u U + s_u L̇^α`, `v' = G_v v + c_v V + s_v L̇`.
/// The original system and the time-rescaled one differ only in these.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftForm {
    pub fast_gen: Matrix,
    pub fast_gain: f64,
    pub slow_gen: Matrix,
    pub slow_gain: f64,
    pub fast_noise: f64,
    pub slow_noise: f64,
}

#[derive(Debug, Clone)]
pub struct SlowFastModel {
    a: Matrix,
    b: Matrix,
    u: Coupling,
    v: Coupling,
    sigma1: f64,
    sigma2: f64,
    epsilon: f64,
    alpha: f64,
    declared: DeclaredConstants,
    rates: DecayRates,
}

/// Builder for [`SlowFastModel`]. Couplings default to zero, noise
/// intensities to one, `α` to 1.5 and `ε` to 0.1.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    a: Matrix,
    b: Matrix,
    u: Coupling,
    v: Coupling,
    sigma1: f64,
    sigma2: f64,
    epsilon: f64,
    alpha: f64,
    declared: Option<DeclaredConstants>,
}

impl ModelBuilder {
    pub fn coupling_u(mut self, u: Coupling) -> Self {
        self.u = u;
        self
    }

    pub fn coupling_v(mut self, v: Coupling) -> Self {
        self.v = v;
        self
    }

    pub fn noise(mut self, sigma1: f64, sigma2: f64) -> Self {
        self.sigma1 = sigma1;
        self.sigma2 = sigma2;
        self
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Declare `L`, `M_U`, `M_V`. Required for custom couplings; catalog
    /// couplings default to their formula constants.
    pub fn declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = Some(declared);
        self
    }

    pub fn build(self) -> Result<SlowFastModel> {
        let n = self.a.rows();
        let m = self.b.rows();
        if !self.a.is_square() || !self.b.is_square() {
            return Err(Error::param("A/B", "matrices must be square"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("{} must be positive", self.epsilon)));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::param("alpha", format!("{} is outside (1, 2]", self.alpha)));
        }
        if !(self.sigma1.is_finite() && self.sigma2.is_finite()) {
            return Err(Error::param("sigma", "noise intensities must be finite"));
        }
        let declared = match self.declared {
            Some(d) => d,
            None => {
                let (lu, mu) = self
                    .u
                    .natural_constants(n, n, m)
                    .ok_or_else(|| Error::param("declared", "custom U needs declared constants"))?;
                let (lv, mv) = self
                    .v
                    .natural_constants(m, n, m)
                    .ok_or_else(|| Error::param("declared", "custom V needs declared constants"))?;
                DeclaredConstants { lipschitz: lu.max(lv), bound_u: mu, bound_v: mv }
            }
        };
        if [declared.lipschitz, declared.bound_u, declared.bound_v].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::param("declared", "constants must be finite and nonnegative"));
        }
        let rates = DecayRates::of(&self.a, &self.b);
        Ok(SlowFastModel {
            a: self.a,
            b: self.b,
            u: self.u,
            v: self.v,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            epsilon: self.epsilon,
            alpha: self.alpha,
            declared,
            rates,
        })
    }
}

impl SlowFastModel {
    pub fn builder(a: Matrix, b: Matrix) -> ModelBuilder {
        ModelBuilder {
            a,
            b,
            u: Coupling::Zero,
            v: Coupling::Zero,
            sigma1: 1.0,
            sigma2: 1.0,
            epsilon: 0.1,
            alpha: 1.5,
            declared: None,
        }
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn u(&self) -> &Coupling {
        &self.u
    }

    pub fn v(&self) -> &Coupling {
        &self.v
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn declared(&self) -> DeclaredConstants {
        self.declared
    }

    pub fn rates(&self) -> DecayRates {
        self.rates
    }

    /// Same model at another `ε`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("{epsilon} must be positive")));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    /// Same model with the slow noise switched off.
    pub fn without_slow_noise(&self) -> Self {
        Self { sigma2: 0.0, ..self.clone() }
    }

    /// Coefficients in the original time scale.
    pub fn original_form(&self) -> DriftForm {
        let eps = self.epsilon;
        DriftForm {
            fast_gen: self.a.scaled(1.0 / eps),
            fast_gain: 1.0 / eps,
            slow_gen: self.b.clone(),
            slow_gain: 1.0,
            fast_noise: self.sigma1 * eps.powf(-1.0 / self.alpha),
            slow_noise: self.sigma2,
        }
    }

    /// Coefficients after `t → εt`: the fast block runs at unit rate and the
    /// rescaled stable noise is again a unit α-stable process. The slow noise
    /// term expects the time-changed path `t ↦ L(εt)`.
    pub fn scaled_form(&self) -> DriftForm {
        let eps = self.epsilon;
        DriftForm {
            fast_gen: self.a.clone(),
            fast_gain: 1.0,
            slow_gen: self.b.scaled(eps),
            slow_gain: eps,
            fast_noise: self.sigma1,
            slow_noise: self.sigma2,
        }
    }
}

/// Constants entering the contraction and tracking estimates for a given
/// weight rate `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub rates: DecayRates,
    pub lipschitz: f64,
    pub bound_u: f64,
    pub bound_v: f64,
    pub mu: f64,
    pub epsilon: f64,
}

/// `μ = (γ1 − L)/2`, the centre of the admissible interval `(0, γ1 − L)`.
pub fn default_mu(gamma1: f64, lipschitz: f64) -> f64 {
    (gamma1 - lipschitz) / 2.0
}

impl Analysis {
    /// Analysis at the model's `ε`; `mu = None` picks [`default_mu`].
    pub fn new(model: &SlowFastModel, mu: Option<f64>) -> Result<Self> {
        let rates = model.rates();
        let d = model.declared();
        let mu = mu.unwrap_or_else(|| default_mu(rates.gamma1, d.lipschitz));
        if !(mu > 0.0 && mu < rates.gamma1) {
            return Err(Error::param("mu", format!("{mu} is outside (0, γ1 = {})", rates.gamma1)));
        }
        Ok(Self { rates, lipschitz: d.lipschitz, bound_u: d.bound_u, bound_v: d.bound_v, mu, epsilon: model.epsilon() })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }

    /// `q = L/(γ1−μ) + εL/(μ−εγ2)`; infinite when a denominator is not positive.
    pub fn q(&self) -> f64 {
        let r = self.rates;
        let d1 = r.gamma1 - self.mu;
        let d2 = self.mu - self.epsilon * r.gamma2;
        if d1 <= 0.0 || d2 <= 0.0 {
            return f64::INFINITY;
        }
        self.lipschitz / d1 + self.epsilon * self.lipschitz / d2
    }

    /// Positive root of `q(ε) = 1`, if any.
    pub fn epsilon0(&self) -> Option<f64> {
        let r = self.rates;
        let l = self.lipschitz;
        let gap = r.gamma1 - self.mu - l;
        if gap <= 0.0 {
            return None;
        }
        let e = self.mu * gap / (gap * r.gamma2 + l * (r.gamma1 - self.mu));
        (e > 0.0 && e.is_finite()).then_some(e)
    }

    /// Error unless the Lyapunov–Perron operator contracts (`q < 1`).
    pub fn ensure_contraction(&self) -> Result<()> {
        let q = self.q();
        if q < 1.0 {
            Ok(())
        } else {
            Err(Error::ContractionViolated { epsilon: self.epsilon, q, epsilon0: self.epsilon0().unwrap_or(f64::NAN) })
        }
    }

    /// Lipschitz constant of `F^ε` in `v̄`: `L/((γ1−μ)(1−q))`.
    pub fn manifold_lipschitz(&self) -> f64 {
        self.lipschitz / ((self.rates.gamma1 - self.mu) * (1.0 - self.q()))
    }

    /// Supremum bound on `F^ε`: `M_U/γ1`.
    pub fn manifold_bound(&self) -> f64 {
        self.bound_u / self.rates.gamma1
    }

    /// Right side of the tracking estimate at time `t` (original time scale)
    /// for an initial distance `d = |u₀−u|+|v₀−v|`.
    pub fn tracking_bound(&self, t: f64, d: f64) -> f64 {
        let r = self.rates;
        (-self.mu * t / self.epsilon).exp() / (1.0 - self.q())
            * (2.0 * d + 2.0 * self.bound_u / r.gamma1 + self.bound_v / r.gamma2)
    }
}

/// The reference fixture: `A = −2`, `B = −1`, `U = 0.5 sin(x+y)`,
/// `V = 0.5 cos(x−y)`, `σ1 = 1`, `σ2 = 0.5`, `α = 1.5`, declared
/// `L = M_U = M_V = 0.5`. Its reference weight rate is `μ = 1`.
pub mod fixtures {
    use super::*;
    use crate::levy_noise::LevyTriplet;

    pub const TS1_MU: f64 = 1.0;

    pub fn ts1(epsilon: f64) -> SlowFastModel {
        SlowFastModel::builder(Matrix::scalar(1, -2.0), Matrix::scalar(1, -1.0))
            .coupling_u(Coupling::ScaledSin { c: 0.5 })
            .coupling_v(Coupling::ScaledCos { c: 0.5 })
            .noise(1.0, 0.5)
            .alpha(1.5)
            .epsilon(epsilon)
            .declared(DeclaredConstants { lipschitz: 0.5, bound_u: 0.5, bound_v: 0.5 })
            .build()
            .expect("TS1 is valid")
    }

    /// Slow noise of the fixture: standard Brownian motion.
    pub fn ts1_slow_noise() -> LevyTriplet {
        LevyTriplet::brownian(1)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::ts1;
    use super::*;

    #[test]
    fn decay_rates_of_scalar_fixture() {
        let r = ts1(0.1).rates();
        assert!((r.gamma1 - 2.0).abs() < 1e-12);
        assert!((r.gamma2 - 1.0).abs() < 1e-9);
        assert!((r.gamma3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rates_of_non_normal_matrix() {
        // B = [[-1, 4], [0, -1]]: transient growth makes γ3 smaller than 1.
        let b = Matrix::from_rows(&[vec![-1.0, 4.0], vec![0.0, -1.0]]).unwrap();
        let r = DecayRates::of(&Matrix::scalar(1, -1.0), &b);
        assert!(r.gamma3 < 1.0);
        for s in [0.01, 0.5, 3.0, 20.0] {
            assert!(b.scaled(s).expm().operator_norm() <= (-r.gamma3 * s).exp() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn ts1_constants() {
        let an = Analysis::new(&ts1(0.1), Some(1.0)).unwrap();
        assert!((an.q() - (0.5 + 0.05 / 0.9)).abs() < 1e-9);
        assert!((an.epsilon0().unwrap() - 0.5).abs() < 1e-9);
        assert!((an.manifold_lipschitz() - 1.125).abs() < 1e-6);
        assert!((an.manifold_bound() - 0.25).abs() < 1e-12);
        assert!(an.ensure_contraction().is_ok());
        let bad = an.with_epsilon(0.6);
        assert!(matches!(bad.ensure_contraction(), Err(Error::ContractionViolated { .. })));
        assert!(Analysis::new(&ts1(0.1), Some(2.5)).is_err());
        let def = Analysis::new(&ts1(0.1), None).unwrap();
        assert!((def.mu - 0.75).abs() < 1e-12);
    }

    #[test]
    fn builder_validation() {
        let base = || SlowFastModel::builder(Matrix::scalar(1, -1.0), Matrix::scalar(1, -1.0));
        assert!(base().epsilon(0.0).build().is_err());
        assert!(base().alpha(1.0).build().is_err());
        let custom = Coupling::custom("f", std::sync::Arc::new(|_: &[f64], _: &[f64], o: &mut [f64]| o[0] = 0.0));
        assert!(base().coupling_u(custom.clone()).build().is_err());
        let d = DeclaredConstants { lipschitz: 0.0, bound_u: 0.0, bound_v: 0.0 };
        assert!(base().coupling_u(custom).declared(d).build().is_ok());
        let m = base().build().unwrap();
        assert_eq!(m.with_epsilon(0.3).unwrap().epsilon(), 0.3);
    }
}
