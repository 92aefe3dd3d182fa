//! Random slow manifold `M^ε(ω) = {(F^ε(ω, y) + ζ^ε, y + ς)}` of the
//! slow-fast system, computed from the Lyapunov–Perron integral equation.

mod evaluator;
mod kernels;
mod shadow;
mod solver;

pub use evaluator::{eval_f, manifold_point, EvalStats, ManifoldEvaluator};
pub use shadow::{shadow_point, ShadowPoint};
pub use solver::{
    solve_lyapunov_perron, BackwardWindow, LpSystem, ManifoldSolution, DEFAULT_MAX_ITERATIONS, DEFAULT_PICARD_TOL,
    DEFAULT_TRUNCATION_TOL,
};

pub(crate) use solver::{LpSolver, Warm};

#[cfg(test)]
mod tests;
