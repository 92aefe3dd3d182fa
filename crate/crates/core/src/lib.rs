//! Slow-fast systems driven by α-stable and Lévy noise: sample paths,
//! Lyapunov–Perron construction of the random invariant manifold, reduced
//! dynamics on it, particle filters for the full and reduced systems, and the
//! ε → 0 comparison.

pub mod epsilon_zero;
pub mod error;
pub mod filtering;
pub mod levy_noise;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod realization;
pub mod reduced;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use levy_noise::{LevyTriplet, NoisePath, ShiftedView, StableParams, StationaryPath, TimeGrid, Window};
pub use linalg::Matrix;
pub use manifold::{BackwardWindow, ManifoldEvaluator, ManifoldSolution, ShadowPoint};
pub use model::{Analysis, Coupling, DeclaredConstants, HypothesisReport, SlowFastModel, TrajectoryPair};
pub use realization::Realization;
