//! Observation model and particle filters for the full and reduced systems.

mod compare;
mod full;
mod observation;
mod particle;
mod reduced_filter;
mod sensor;

pub use compare::{compare_filters, shape_function, FilterCompareConfig, FilterCompareRow};
pub use full::{run_filter_full, FilterProblem, MIN_PARTICLES};
pub use observation::{generate_observation, ObservationPath};
pub use particle::{
    normalize, systematic_resample, DegeneracyWarning, FilterKind, FilterRun, FilterSettings, FilterState,
};
pub use reduced_filter::run_filter_reduced;
pub use sensor::{
    FunctionalFn, FunctionalKind, Sensor, SensorFn, SensorKind, TestFunctional, FUNCTIONAL_CATALOG, SENSOR_CATALOG,
};
