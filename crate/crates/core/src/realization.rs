//! One noise realization `ω = (ω₁, ω₂)` with its stationary paths.

use crate::error::Result;
use crate::levy_noise::{
    generate_two_sided_levy, generate_two_sided_stable, stationary_fast, stationary_slow, LevyTriplet, NoisePath,
    StableParams, StationaryPath, StationarySettings, Window,
};
use crate::model::SlowFastModel;
use crate::rng::{rng_for, stream};

/// Fast stable path, slow Lévy path and the stationary solutions `ζ^ε`, `ς`
/// they drive, all on one grid.
#[derive(Debug, Clone)]
pub struct Realization {
    pub fast: NoisePath,
    pub slow: NoisePath,
    pub zeta: StationaryPath,
    pub varsigma: StationaryPath,
}

impl Realization {
    pub fn from_paths(
        model: &SlowFastModel,
        fast: NoisePath,
        slow: NoisePath,
        settings: StationarySettings,
    ) -> Result<Self> {
        let zeta = stationary_fast(model, &fast, settings)?;
        let varsigma = stationary_slow(model, &slow, settings)?;
        Ok(Self { fast, slow, zeta, varsigma })
    }

    /// Burn-in the stationary recursions need before their values are used.
    pub fn burn_in(model: &SlowFastModel, tol: f64) -> f64 {
        let r = model.rates();
        let ln = (1.0 / tol).ln();
        let fast = if model.sigma1() == 0.0 { 0.0 } else { ln * model.epsilon() / r.gamma1 };
        let slow = if model.sigma2() == 0.0 { 0.0 } else { ln / r.gamma3 };
        fast.max(slow)
    }

    /// Draw a realization whose stationary paths are valid on
    /// `[-lookback, horizon]`. Streams are derived from `(master, replica)`.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        model: &SlowFastModel,
        slow_law: &LevyTriplet,
        lookback: f64,
        horizon: f64,
        dt: f64,
        settings: StationarySettings,
        master: u64,
        replica: u64,
    ) -> Result<Self> {
        let t_back = lookback + Self::burn_in(model, settings.tol) + dt;
        let window = Window::new(t_back, horizon, dt);
        let params = StableParams::new(model.alpha(), 1.0, model.n())?;
        let fast = generate_two_sided_stable(params, window, &mut rng_for(master, &[replica, stream::FAST_NOISE]))?;
        let slow = generate_two_sided_levy(slow_law, window, &mut rng_for(master, &[replica, stream::SLOW_NOISE]))?;
        Self::from_paths(model, fast, slow, settings)
    }

    pub fn dt(&self) -> f64 {
        self.fast.grid().dt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{ts1, ts1_slow_noise};

    #[test]
    fn stationary_paths_are_valid_over_the_lookback() {
        let model = ts1(0.1);
        let r = Realization::generate(&model, &ts1_slow_noise(), 2.0, 1.0, 1e-3, Default::default(), 7, 0).unwrap();
        assert!(r.zeta.valid_from() <= -2.0);
        assert!(r.varsigma.valid_from() <= -2.0);
        assert!(r.zeta.value(1.0).is_ok());
        let again = Realization::generate(&model, &ts1_slow_noise(), 2.0, 1.0, 1e-3, Default::default(), 7, 0).unwrap();
        assert_eq!(r.fast.fingerprint(), again.fast.fingerprint());
        let other = Realization::generate(&model, &ts1_slow_noise(), 2.0, 1.0, 1e-3, Default::default(), 7, 1).unwrap();
        assert_ne!(r.slow.fingerprint(), other.slow.fingerprint());
    }
}
