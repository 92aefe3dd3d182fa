//! Observation functions `H` and test functionals `Φ`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::model::probe_pairs;

/// User-supplied sensor: `h(x, y, out)` with `out` of length `l`.
pub type SensorFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// User-supplied functional `Φ(x, y)`.
pub type FunctionalFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SensorKind {
    Zero,
    /// `h` in every call.
    Constant(Vec<f64>),
    /// `c·tanh(Σx + Σy)`.
    TanhSum {
        c: f64,
    },
    /// `c·tanh(Σy)`.
    TanhSlow {
        c: f64,
    },
    /// `a·Σx + b·Σy`. Unbounded; for linear-Gaussian reference runs.
    Linear {
        a: f64,
        b: f64,
    },
    Custom {
        name: String,
        f: SensorFn,
    },
}

/// Names accepted by [`Sensor::from_catalog`].
pub const SENSOR_CATALOG: &[&str] = &["zero", "constant", "tanh_sum", "tanh_slow", "linear"];

/// Observation function with its declared sup bound and Lipschitz constant.
#[derive(Clone)]
pub struct Sensor {
    kind: SensorKind,
    dim: usize,
    bound: f64,
    lipschitz: f64,
}

impl fmt::Debug for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sensor({}, l = {}, M_H = {}, Lip = {})", self.name(), self.dim, self.bound, self.lipschitz)
    }
}

impl Sensor {
    pub fn zero(dim: usize) -> Self {
        Self { kind: SensorKind::Zero, dim, bound: 0.0, lipschitz: 0.0 }
    }

    pub fn constant(h: Vec<f64>) -> Self {
        Self { dim: h.len(), bound: norm(&h), lipschitz: 0.0, kind: SensorKind::Constant(h) }
    }

    pub fn tanh_sum(c: f64, n: usize, m: usize) -> Self {
        Self { kind: SensorKind::TanhSum { c }, dim: 1, bound: c.abs(), lipschitz: c.abs() * ((n + m) as f64).sqrt() }
    }

    pub fn tanh_slow(c: f64, m: usize) -> Self {
        Self { kind: SensorKind::TanhSlow { c }, dim: 1, bound: c.abs(), lipschitz: c.abs() * (m as f64).sqrt() }
    }

    pub fn linear(a: f64, b: f64, n: usize, m: usize) -> Self {
        let lip = (a * a * n as f64 + b * b * m as f64).sqrt();
        Self { kind: SensorKind::Linear { a, b }, dim: 1, bound: f64::INFINITY, lipschitz: lip }
    }

    pub fn custom(name: impl Into<String>, dim: usize, bound: f64, lipschitz: f64, f: SensorFn) -> Self {
        Self { kind: SensorKind::Custom { name: name.into(), f }, dim, bound, lipschitz }
    }

    /// Catalog lookup; parameters are `c` (tanh sensors), `a`, `b` (linear)
    /// and `h` (constant, scalar).
    pub fn from_catalog(name: &str, params: &[(String, f64)], n: usize, m: usize) -> Result<Self> {
        let get = |key: &str, default: f64| params.iter().find(|(k, _)| k == key).map_or(default, |(_, v)| *v);
        let allowed: &[&str] = match name {
            "zero" => &[],
            "constant" => &["h"],
            "tanh_sum" | "tanh_slow" => &["c"],
            "linear" => &["a", "b"],
            other => {
                return Err(Error::Configuration(format!(
                    "unknown sensor `{other}` (known: {})",
                    SENSOR_CATALOG.join(", ")
                )))
            }
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Configuration(format!("sensor `{name}` has no parameter `{k}`")));
        }
        Ok(match name {
            "zero" => Self::zero(1),
            "constant" => Self::constant(vec![get("h", 1.0)]),
            "tanh_sum" => Self::tanh_sum(get("c", 1.0), n, m),
            "tanh_slow" => Self::tanh_slow(get("c", 1.0), m),
            _ => Self::linear(get("a", 1.0), get("b", 1.0), n, m),
        })
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            SensorKind::Zero => "zero",
            SensorKind::Constant(_) => "constant",
            SensorKind::TanhSum { .. } => "tanh_sum",
            SensorKind::TanhSlow { .. } => "tanh_slow",
            SensorKind::Linear { .. } => "linear",
            SensorKind::Custom { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &SensorKind {
        &self.kind
    }

    /// Observation dimension `l`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared `M_H`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Declared Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.kind {
            SensorKind::Zero => out.fill(0.0),
            SensorKind::Constant(h) => out.copy_from_slice(h),
            SensorKind::TanhSum { c } => out[0] = c * (x.iter().sum::<f64>() + y.iter().sum::<f64>()).tanh(),
            SensorKind::TanhSlow { c } => out[0] = c * y.iter().sum::<f64>().tanh(),
            SensorKind::Linear { a, b } => out[0] = a * x.iter().sum::<f64>() + b * y.iter().sum::<f64>(),
            SensorKind::Custom { f, .. } => f(x, y, out),
        }
    }

    /// Check the declared bound and Lipschitz constant on random probes.
    pub fn probe<R: Rng + ?Sized>(&self, n: usize, m: usize, count: usize, rng: &mut R) -> Result<()> {
        let (mut a, mut b) = (vec![0.0; self.dim], vec![0.0; self.dim]);
        let mut worst: Option<String> = None;
        probe_pairs(n, m, count, rng, |x1, y1, x2, y2| {
            if worst.is_some() {
                return;
            }
            self.eval(x1, y1, &mut a);
            self.eval(x2, y2, &mut b);
            let dz = dist(x1, x2) + dist(y1, y2);
            if norm(&a) > self.bound + 1e-9 {
                worst = Some(format!("|H| = {} exceeds M_H = {}", norm(&a), self.bound));
            } else if dist(&a, &b) > self.lipschitz * dz + 1e-9 {
                worst = Some(format!("Lipschitz ratio {} exceeds {}", dist(&a, &b) / dz, self.lipschitz));
            }
        });
        match worst {
            Some(msg) => Err(Error::Domain(format!("sensor `{}`: {msg}", self.name()))),
            None => Ok(()),
        }
    }
}

#[derive(Clone)]
pub enum FunctionalKind {
    Constant {
        c: f64,
    },
    /// `Σ tanh(x_i) + Σ tanh(y_j)`.
    TanhSum,
    /// First fast coordinate (unbounded).
    FastCoordinate,
    /// First slow coordinate (unbounded).
    SlowCoordinate,
    Custom {
        name: String,
        f: FunctionalFn,
    },
}

/// Names accepted by [`TestFunctional::from_catalog`].
pub const FUNCTIONAL_CATALOG: &[&str] = &["constant", "tanh_sum", "fast_coordinate", "slow_coordinate"];

#[derive(Clone)]
pub struct TestFunctional {
    kind: FunctionalKind,
}

impl fmt::Debug for TestFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunctional({})", self.name())
    }
}

impl TestFunctional {
    pub fn constant(c: f64) -> Self {
        Self { kind: FunctionalKind::Constant { c } }
    }

    pub fn tanh_sum() -> Self {
        Self { kind: FunctionalKind::TanhSum }
    }

    pub fn fast_coordinate() -> Self {
        Self { kind: FunctionalKind::FastCoordinate }
    }

    pub fn slow_coordinate() -> Self {
        Self { kind: FunctionalKind::SlowCoordinate }
    }

    pub fn custom(name: impl Into<String>, f: FunctionalFn) -> Self {
        Self { kind: FunctionalKind::Custom { name: name.into(), f } }
    }

    pub fn from_catalog(name: &str, params: &[(String, f64)]) -> Result<Self> {
        let allowed: &[&str] = if name == "constant" { &["c"] } else { &[] };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Configuration(format!("functional `{name}` has no parameter `{k}`")));
        }
        Ok(match name {
            "constant" => Self::constant(params.first().map_or(1.0, |(_, v)| *v)),
            "tanh_sum" => Self::tanh_sum(),
            "fast_coordinate" => Self::fast_coordinate(),
            "slow_coordinate" => Self::slow_coordinate(),
            other => {
                return Err(Error::Configuration(format!(
                    "unknown functional `{other}` (known: {})",
                    FUNCTIONAL_CATALOG.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            FunctionalKind::Constant { .. } => "constant",
            FunctionalKind::TanhSum => "tanh_sum",
            FunctionalKind::FastCoordinate => "fast_coordinate",
            FunctionalKind::SlowCoordinate => "slow_coordinate",
            FunctionalKind::Custom { name, .. } => name,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            FunctionalKind::Constant { c } => *c,
            FunctionalKind::TanhSum => x.iter().chain(y).map(|s| s.tanh()).sum(),
            FunctionalKind::FastCoordinate => x[0],
            FunctionalKind::SlowCoordinate => y[0],
            FunctionalKind::Custom { f, .. } => f(x, y),
        }
    }

    /// `sup|Φ| + sup|∇Φ|` estimated on random probes (central differences
    /// for the gradient).
    pub fn c1_norm<R: Rng + ?Sized>(&self, n: usize, m: usize, count: usize, rng: &mut R) -> f64 {
        let (mut sup, mut grad) = (0.0f64, 0.0f64);
        let h = 1e-6;
        probe_pairs(n, m, count, rng, |x, y, _, _| {
            sup = sup.max(self.eval(x, y).abs());
            let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
            let mut g2 = 0.0;
            for i in 0..n + m {
                let slot = if i < n { &mut xp[i] } else { &mut yp[i - n] };
                let orig = *slot;
                *slot = orig + h;
                let up = self.eval(&xp, &yp);
                let slot = if i < n { &mut xp[i] } else { &mut yp[i - n] };
                *slot = orig - h;
                let down = self.eval(&xp, &yp);
                let slot = if i < n { &mut xp[i] } else { &mut yp[i - n] };
                *slot = orig;
                g2 += ((up - down) / (2.0 * h)).powi(2);
            }
            grad = grad.max(g2.sqrt());
        });
        sup + grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn catalog_sensors_respect_their_constants() {
        for name in ["zero", "constant", "tanh_sum", "tanh_slow"] {
            let s = Sensor::from_catalog(name, &[], 2, 1).unwrap();
            s.probe(2, 1, 2000, &mut rng_for(1, &[])).unwrap();
        }
        let lying = Sensor::custom("lying", 1, 0.5, 1.0, Arc::new(|x, _, out| out[0] = x[0].tanh()));
        assert!(lying.probe(1, 1, 1000, &mut rng_for(2, &[])).is_err());
        assert!(Sensor::from_catalog("tanh_sum", &[("h".into(), 1.0)], 1, 1).is_err());
        assert!(Sensor::from_catalog("sonar", &[], 1, 1).is_err());
    }

    #[test]
    fn tanh_sum_functional_norm() {
        let phi = TestFunctional::tanh_sum();
        assert!((phi.eval(&[0.3], &[-0.2]) - (0.3f64.tanh() + (-0.2f64).tanh())).abs() < 1e-15);
        // sup|Φ| → 2 and sup|∇Φ| = √2 at the origin.
        let c1 = phi.c1_norm(1, 1, 4000, &mut rng_for(3, &[]));
        assert!(c1 > 3.0 && c1 <= 2.0 + 2f64.sqrt() + 1e-6, "{c1}");
    }
}
