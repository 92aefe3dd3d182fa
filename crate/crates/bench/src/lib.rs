//! Shared fixtures for the kernel benchmarks.

use lfms_core::filtering::{generate_observation, ObservationPath, Sensor};
use lfms_core::model::fixtures::{ts1, ts1_slow_noise, TS1_MU};
use lfms_core::model::simulate_full;
use lfms_core::rng::rng_for;
use lfms_core::{BackwardWindow, Realization, SlowFastModel};

pub const SEED: u64 = 7;

/// TS1 at `eps` with a realization long enough for manifold solves on `[0, horizon]`.
pub fn ts1_realization(eps: f64, dt: f64, horizon: f64) -> (SlowFastModel, Realization, BackwardWindow) {
    let model = ts1(eps);
    let window = BackwardWindow::for_model(&model, Some(TS1_MU), dt, 1e-8).expect("window");
    let omega =
        Realization::generate(&model, &ts1_slow_noise(), window.t_back, horizon, dt, Default::default(), SEED, 0)
            .expect("realization");
    (model, omega, window)
}

/// Observation of the TS1 truth through `tanh(u) + tanh(v)`.
pub fn ts1_observation(eps: f64, dt: f64, horizon: f64) -> (SlowFastModel, Sensor, ObservationPath) {
    let model = ts1(eps);
    let omega = Realization::generate(&model, &ts1_slow_noise(), 0.0, horizon, dt, Default::default(), SEED, 0)
        .expect("realization");
    let truth = simulate_full(&model, &omega.fast, &omega.slow, (&[1.0], &[0.5]), horizon, dt).expect("truth");
    let sensor = Sensor::from_catalog("tanh_sum", &[("c".to_string(), 1.0)], 1, 1).expect("sensor");
    let obs = generate_observation(&truth, &sensor, &mut rng_for(SEED, &[3]), dt).expect("observation");
    (model, sensor, obs)
}
