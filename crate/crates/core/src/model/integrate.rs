use super::{Coupling, DriftForm, SlowFastModel};
use crate::error::{Error, Result};
use crate::levy_noise::{NoisePath, StationaryPath, TimeGrid};

/// States beyond this magnitude count as divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// `(u, v)` of the original system.
    Original,
    /// `(ū, v̄) = (u − ζ, v − ς)`.
    Transformed,
}

/// A trajectory `(u_t, v_t)` on a uniform grid over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    times: Vec<f64>,
    n: usize,
    m: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    representation: Representation,
    fast_noise: Option<u64>,
    slow_noise: Option<u64>,
}

impl TrajectoryPair {
    pub fn from_parts(
        times: Vec<f64>,
        n: usize,
        m: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        representation: Representation,
    ) -> Result<Self> {
        if u.len() != times.len() * n || v.len() != times.len() * m {
            return Err(Error::param("trajectory", "state length does not match times and dimensions"));
        }
        Ok(Self { times, n, m, u, v, representation, fast_noise: None, slow_noise: None })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn u_at(&self, k: usize) -> &[f64] {
        &self.u[k * self.n..(k + 1) * self.n]
    }

    pub fn v_at(&self, k: usize) -> &[f64] {
        &self.v[k * self.m..(k + 1) * self.m]
    }

    pub fn last(&self) -> (&[f64], &[f64]) {
        let k = self.len() - 1;
        (self.u_at(k), self.v_at(k))
    }

    /// Fingerprint of the fast noise path that drove this trajectory.
    pub fn fast_noise(&self) -> Option<u64> {
        self.fast_noise
    }

    /// Fingerprint of the slow noise path that drove this trajectory.
    pub fn slow_noise(&self) -> Option<u64> {
        self.slow_noise
    }

    /// Step of the time grid.
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

pub(crate) fn check_divergence(u: &[f64], v: &[f64], step: usize, t: f64) -> Result<()> {
    let bad = |x: &f64| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT;
    if u.iter().any(bad) || v.iter().any(bad) {
        return Err(Error::Divergence { step, t });
    }
    Ok(())
}

pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::param("dt/T", "need dt > 0 and T ≥ 0"));
    }
    let r = t_end / dt;
    let k = r.round();
    if (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::Alignment(format!("T = {t_end} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

pub(crate) fn check_stiffness(dt: f64, limit: f64) -> Result<()> {
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stiffness { dt, limit });
    }
    Ok(())
}

/// Storage indices on `grid` for `t_k = k·dt`, `k = 0..=steps`.
pub(crate) fn aligned_indices(grid: &TimeGrid, dt: f64, steps: usize) -> Result<(usize, usize)> {
    let stride = grid.stride_for(dt)?;
    let first = grid.origin();
    let last = first + steps * stride;
    if last >= grid.len() {
        return Err(Error::Window(format!(
            "path ends at t = {} but the run needs t = {}",
            grid.t_max(),
            steps as f64 * dt
        )));
    }
    Ok((first, stride))
}

/// Euler scheme for a [`DriftForm`] with increments read from the paths.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_euler(
    form: &DriftForm,
    u_fn: &Coupling,
    v_fn: &Coupling,
    fast: &NoisePath,
    slow: &NoisePath,
    z0: (&[f64], &[f64]),
    t_end: f64,
    dt: f64,
    stiffness_limit: f64,
) -> Result<TrajectoryPair> {
    let (n, m) = (form.fast_gen.rows(), form.slow_gen.rows());
    if z0.0.len() != n || z0.1.len() != m {
        return Err(Error::param("z0", format!("expected dimensions ({n}, {m})")));
    }
    if fast.dim() != n || slow.dim() != m {
        return Err(Error::param("noise", "path dimensions do not match the model"));
    }
    check_stiffness(dt, stiffness_limit)?;
    let steps = step_count(t_end, dt)?;
    let (f0, fs) = aligned_indices(fast.grid(), dt, steps)?;
    let (s0, ss) = aligned_indices(slow.grid(), dt, steps)?;
    let mut u = Vec::with_capacity((steps + 1) * n);
    let mut v = Vec::with_capacity((steps + 1) * m);
    u.extend_from_slice(z0.0);
    v.extend_from_slice(z0.1);
    let mut cu = z0.0.to_vec();
    let mut cv = z0.1.to_vec();
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; m];
    let mut lin_u = vec![0.0; n];
    let mut lin_v = vec![0.0; m];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; m];
    for k in 0..steps {
        u_fn.eval(&cu, &cv, &mut gu);
        v_fn.eval(&cu, &cv, &mut gv);
        form.fast_gen.mul_vec_into(&cu, &mut lin_u);
        form.slow_gen.mul_vec_into(&cv, &mut lin_v);
        fast.increment_into(f0 + k * fs, f0 + (k + 1) * fs, &mut du);
        slow.increment_into(s0 + k * ss, s0 + (k + 1) * ss, &mut dv);
        for i in 0..n {
            cu[i] += (lin_u[i] + form.fast_gain * gu[i]) * dt + form.fast_noise * du[i];
        }
        for i in 0..m {
            cv[i] += (lin_v[i] + form.slow_gain * gv[i]) * dt + form.slow_noise * dv[i];
        }
        check_divergence(&cu, &cv, k + 1, (k + 1) as f64 * dt)?;
        u.extend_from_slice(&cu);
        v.extend_from_slice(&cv);
    }
    Ok(TrajectoryPair {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        n,
        m,
        u,
        v,
        representation: Representation::Original,
        fast_noise: Some(fast.fingerprint()),
        slow_noise: Some(slow.fingerprint()),
    })
}

/// Euler scheme for the random (drift-only) system in transformed
/// coordinates, `ū' = G_u ū + c_u U(ū+ζ, v̄+ς)` and likewise for `v̄`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_transformed(
    form: &DriftForm,
    u_fn: &Coupling,
    v_fn: &Coupling,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    zbar0: (&[f64], &[f64]),
    t_end: f64,
    dt: f64,
    stiffness_limit: f64,
) -> Result<TrajectoryPair> {
    let (n, m) = (form.fast_gen.rows(), form.slow_gen.rows());
    if zbar0.0.len() != n || zbar0.1.len() != m || zeta.dim() != n || varsigma.dim() != m {
        return Err(Error::param("dimensions", "state or stationary path dimensions do not match the model"));
    }
    check_stiffness(dt, stiffness_limit)?;
    let steps = step_count(t_end, dt)?;
    let (z0, zs) = aligned_indices(zeta.grid(), dt, steps)?;
    let (s0, ss) = aligned_indices(varsigma.grid(), dt, steps)?;
    zeta.check_valid(z0)?;
    varsigma.check_valid(s0)?;
    let mut u = Vec::with_capacity((steps + 1) * n);
    let mut v = Vec::with_capacity((steps + 1) * m);
    u.extend_from_slice(zbar0.0);
    v.extend_from_slice(zbar0.1);
    let mut cu = zbar0.0.to_vec();
    let mut cv = zbar0.1.to_vec();
    let (mut xu, mut xv) = (vec![0.0; n], vec![0.0; m]);
    let (mut gu, mut gv) = (vec![0.0; n], vec![0.0; m]);
    let (mut lin_u, mut lin_v) = (vec![0.0; n], vec![0.0; m]);
    for k in 0..steps {
        let zk = zeta.at(z0 + k * zs);
        let sk = varsigma.at(s0 + k * ss);
        for i in 0..n {
            xu[i] = cu[i] + zk[i];
        }
        for i in 0..m {
            xv[i] = cv[i] + sk[i];
        }
        u_fn.eval(&xu, &xv, &mut gu);
        v_fn.eval(&xu, &xv, &mut gv);
        form.fast_gen.mul_vec_into(&cu, &mut lin_u);
        form.slow_gen.mul_vec_into(&cv, &mut lin_v);
        for i in 0..n {
            cu[i] += (lin_u[i] + form.fast_gain * gu[i]) * dt;
        }
        for i in 0..m {
            cv[i] += (lin_v[i] + form.slow_gain * gv[i]) * dt;
        }
        check_divergence(&cu, &cv, k + 1, (k + 1) as f64 * dt)?;
        u.extend_from_slice(&cu);
        v.extend_from_slice(&cv);
    }
    Ok(TrajectoryPair {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        n,
        m,
        u,
        v,
        representation: Representation::Transformed,
        fast_noise: Some(zeta.noise_fingerprint()),
        slow_noise: Some(varsigma.noise_fingerprint()),
    })
}

/// Euler–Maruyama for the full system, jump increments read from the paths.
/// `dt` must be a multiple of both path steps and at most `ε/50`.
pub fn simulate_full(
    model: &SlowFastModel,
    fast_noise: &NoisePath,
    slow_noise: &NoisePath,
    z0: (&[f64], &[f64]),
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryPair> {
    integrate_euler(
        &model.original_form(),
        model.u(),
        model.v(),
        fast_noise,
        slow_noise,
        z0,
        t_end,
        dt,
        model.epsilon() / 50.0,
    )
}

/// Euler scheme for the transformed system started at `zbar0`.
pub fn simulate_transformed(
    model: &SlowFastModel,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    zbar0: (&[f64], &[f64]),
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryPair> {
    integrate_transformed(
        &model.original_form(),
        model.u(),
        model.v(),
        zeta,
        varsigma,
        zbar0,
        t_end,
        dt,
        model.epsilon() / 50.0,
    )
}

fn shift_by_stationary(
    traj: &TrajectoryPair,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
    sign: f64,
    from: Representation,
    to: Representation,
) -> Result<TrajectoryPair> {
    if traj.representation != from {
        return Err(Error::Alignment(format!("expected a trajectory in {from:?} coordinates")));
    }
    if zeta.dim() != traj.n || varsigma.dim() != traj.m {
        return Err(Error::Alignment("stationary path dimensions do not match".into()));
    }
    let index = |p: &StationaryPath, t: f64| -> Result<usize> {
        let i = p.grid().index_of(t).map_err(|e| Error::Alignment(e.to_string()))?;
        p.check_valid(i).map_err(|e| Error::Alignment(e.to_string()))?;
        Ok(i)
    };
    let mut out = traj.clone();
    out.representation = to;
    for (k, &t) in traj.times.iter().enumerate() {
        let (iz, is) = (index(zeta, t)?, index(varsigma, t)?);
        for (x, z) in out.u[k * traj.n..(k + 1) * traj.n].iter_mut().zip(zeta.at(iz)) {
            *x += sign * z;
        }
        for (x, s) in out.v[k * traj.m..(k + 1) * traj.m].iter_mut().zip(varsigma.at(is)) {
            *x += sign * s;
        }
    }
    Ok(out)
}

/// `(u − ζ, v − ς)` pointwise.
pub fn to_transformed(
    traj: &TrajectoryPair,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
) -> Result<TrajectoryPair> {
    shift_by_stationary(traj, zeta, varsigma, -1.0, Representation::Original, Representation::Transformed)
}

/// `(ū + ζ, v̄ + ς)` pointwise.
pub fn from_transformed(
    traj: &TrajectoryPair,
    zeta: &StationaryPath,
    varsigma: &StationaryPath,
) -> Result<TrajectoryPair> {
    shift_by_stationary(traj, zeta, varsigma, 1.0, Representation::Transformed, Representation::Original)
}
