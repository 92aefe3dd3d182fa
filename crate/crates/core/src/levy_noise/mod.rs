//! Noise: α-stable and general Lévy sample paths, the shift `θ_t`, and the
//! stationary auxiliary processes built on them.

mod path;
mod stable;
mod stationary;
mod triplet;

pub use path::{generate_two_sided_levy, generate_two_sided_stable, NoisePath, PathLaw, ShiftedView, TimeGrid, Window};
pub use stable::{
    c1, c2, sample_alpha_stable, symmetric_stable_cdf, symmetric_stable_quantile, StableParams, StableSampler,
};
pub use stationary::{
    stationary_fast, stationary_linear, stationary_slow, StationaryKind, StationaryPath, StationaryScheme,
    StationarySettings, DEFAULT_STATIONARY_TOL,
};
pub use triplet::{IncrementSampler, Jump, JumpDistribution, JumpMeasure, LevyTriplet, DEFAULT_CUTOFF};
