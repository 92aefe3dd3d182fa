//! Nonlinear couplings `U: ℝⁿ×ℝᵐ → ℝⁿ` and `V: ℝⁿ×ℝᵐ → ℝᵐ`.
//!
//! Catalog entries are dimension-generic: every output component sees the
//! same scalar argument built from coordinate sums.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// User-supplied coupling: `f(x, y, out)`.
pub type CouplingFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Coupling {
    Zero,
    /// `c·sin(Σx + Σy)` in every component.
    ScaledSin {
        c: f64,
    },
    /// `c·cos(Σx − Σy)` in every component.
    ScaledCos {
        c: f64,
    },
    /// `c·tanh(Σx + Σy)` in every component.
    ScaledTanh {
        c: f64,
    },
    /// `c` in every component.
    Constant {
        c: f64,
    },
    Custom {
        name: String,
        f: CouplingFn,
    },
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Custom { name, .. } => write!(f, "Custom({name})"),
            other => write!(f, "{}{:?}", other.name(), other.params()),
        }
    }
}

/// Names accepted by [`Coupling::from_catalog`].
pub const COUPLING_CATALOG: &[&str] = &["zero", "scaled_sin", "scaled_cos", "scaled_tanh", "constant"];

impl Coupling {
    /// Look up a catalog entry. The only parameter is `c` (default 1).
    pub fn from_catalog(name: &str, params: &[(String, f64)]) -> Result<Self> {
        let mut c = 1.0;
        for (k, v) in params {
            match k.as_str() {
                "c" => c = *v,
                other => return Err(Error::Configuration(format!("coupling `{name}` has no parameter `{other}`"))),
            }
        }
        if !c.is_finite() {
            return Err(Error::param("c", "must be finite"));
        }
        Ok(match name {
            "zero" => Coupling::Zero,
            "scaled_sin" => Coupling::ScaledSin { c },
            "scaled_cos" => Coupling::ScaledCos { c },
            "scaled_tanh" => Coupling::ScaledTanh { c },
            "constant" => Coupling::Constant { c },
            other => {
                return Err(Error::Configuration(format!(
                    "unknown coupling `{other}` (known: {})",
                    COUPLING_CATALOG.join(", ")
                )))
            }
        })
    }

    pub fn custom(name: impl Into<String>, f: CouplingFn) -> Self {
        Coupling::Custom { name: name.into(), f }
    }

    pub fn name(&self) -> &str {
        match self {
            Coupling::Zero => "zero",
            Coupling::ScaledSin { .. } => "scaled_sin",
            Coupling::ScaledCos { .. } => "scaled_cos",
            Coupling::ScaledTanh { .. } => "scaled_tanh",
            Coupling::Constant { .. } => "constant",
            Coupling::Custom { name, .. } => name,
        }
    }

    pub fn params(&self) -> Vec<(String, f64)> {
        match self {
            Coupling::ScaledSin { c }
            | Coupling::ScaledCos { c }
            | Coupling::ScaledTanh { c }
            | Coupling::Constant { c } => {
                vec![("c".into(), *c)]
            }
            _ => Vec::new(),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Coupling::Zero => true,
            Coupling::ScaledSin { c }
            | Coupling::ScaledCos { c }
            | Coupling::ScaledTanh { c }
            | Coupling::Constant { c } => *c == 0.0,
            Coupling::Custom { .. } => false,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let sx = || x.iter().sum::<f64>();
        let sy = || y.iter().sum::<f64>();
        let value = match self {
            Coupling::Zero => 0.0,
            Coupling::ScaledSin { c } => c * (sx() + sy()).sin(),
            Coupling::ScaledCos { c } => c * (sx() - sy()).cos(),
            Coupling::ScaledTanh { c } => c * (sx() + sy()).tanh(),
            Coupling::Constant { c } => *c,
            Coupling::Custom { f, .. } => return f(x, y, out),
        };
        out.iter_mut().for_each(|o| *o = value);
    }

    /// Lipschitz constant (for the norm `|x|+|y|`) and supremum implied by
    /// the catalog formula; `None` for custom couplings.
    pub fn natural_constants(&self, out_dim: usize, n: usize, m: usize) -> Option<(f64, f64)> {
        let spread = (out_dim as f64).sqrt();
        let arg = (n.max(m) as f64).sqrt();
        match self {
            Coupling::Zero => Some((0.0, 0.0)),
            Coupling::ScaledSin { c } | Coupling::ScaledCos { c } | Coupling::ScaledTanh { c } => {
                Some((c.abs() * spread * arg, c.abs() * spread))
            }
            Coupling::Constant { c } => Some((0.0, c.abs() * spread)),
            Coupling::Custom { .. } => None,
        }
    }
}
