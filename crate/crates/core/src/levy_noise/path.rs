//! Two-sided sample paths on a uniform grid and their shifts `θ_t`.

use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};

use super::stable::{StableParams, StableSampler};
use super::triplet::{Jump, LevyTriplet};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Relative tolerance for "this time lies on the grid".
const GRID_TOL: f64 = 1e-9;

/// Uniform grid `t_k = k·dt` for `k = -n_back ..= n_fwd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_back: usize,
    n_fwd: usize,
}

impl TimeGrid {
    /// Smallest grid with step `dt` covering `[-t_back, t_fwd]`.
    pub fn covering(t_back: f64, t_fwd: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("{dt} must be positive")));
        }
        if !(t_back >= 0.0 && t_fwd >= 0.0) {
            return Err(Error::param("window", "T_back and T_fwd must be nonnegative"));
        }
        let steps = |t: f64| (t / dt - GRID_TOL).ceil().max(0.0) as usize;
        Ok(Self { dt, n_back: steps(t_back), n_fwd: steps(t_fwd) })
    }

    pub fn from_counts(dt: f64, n_back: usize, n_fwd: usize) -> Self {
        Self { dt, n_back, n_fwd }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_back(&self) -> usize {
        self.n_back
    }

    pub fn n_fwd(&self) -> usize {
        self.n_fwd
    }

    pub fn len(&self) -> usize {
        self.n_back + self.n_fwd + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage index of `t = 0`.
    pub fn origin(&self) -> usize {
        self.n_back
    }

    pub fn t_min(&self) -> f64 {
        -(self.n_back as f64) * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.n_fwd as f64 * self.dt
    }

    /// Time at storage index `i`.
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.n_back as f64) * self.dt
    }

    /// Signed step count of `t`, if `t` lies on the (infinite) grid.
    pub fn steps_of(&self, t: f64) -> Option<isize> {
        let k = (t / self.dt).round();
        ((t / self.dt - k).abs() <= GRID_TOL * k.abs().max(1.0)).then_some(k as isize)
    }

    /// Storage index of grid time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k =
            self.steps_of(t).ok_or_else(|| Error::Window(format!("t = {t} is not a multiple of dt = {}", self.dt)))?;
        self.index_of_steps(k)
    }

    pub fn index_of_steps(&self, k: isize) -> Result<usize> {
        let i = k + self.n_back as isize;
        if i < 0 || i as usize >= self.len() {
            return Err(Error::Window(format!(
                "t = {} is outside [{}, {}]",
                k as f64 * self.dt,
                self.t_min(),
                self.t_max()
            )));
        }
        Ok(i as usize)
    }

    /// Integer ratio `coarse / self.dt`.
    pub fn stride_for(&self, coarse: f64) -> Result<usize> {
        let r = coarse / self.dt;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > GRID_TOL * k {
            return Err(Error::Alignment(format!("step {coarse} is not a positive multiple of dt = {}", self.dt)));
        }
        Ok(k as usize)
    }
}

/// Time window `[-t_back, t_fwd]` sampled with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t_back: f64,
    pub t_fwd: f64,
    pub dt: f64,
}

impl Window {
    pub fn new(t_back: f64, t_fwd: f64, dt: f64) -> Self {
        Self { t_back, t_fwd, dt }
    }
}

/// Which law generated a path; the exact stationary recursion needs it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLaw {
    Stable { alpha: f64 },
    Levy { gaussian: bool },
    Other,
}

/// A two-sided path with `value(0) = 0` and an explicit jump register.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    jumps: Vec<Jump>,
    law: PathLaw,
}

impl NoisePath {
    /// Wrap precomputed values (row per grid point). The origin must be zero.
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>, law: PathLaw) -> Result<Self> {
        if values.len() != grid.len() * dim {
            return Err(Error::param("values", "length does not match grid and dimension"));
        }
        let o = grid.origin() * dim;
        if values[o..o + dim].iter().any(|&x| x != 0.0) {
            return Err(Error::param("values", "a two-sided path must vanish at t = 0"));
        }
        Ok(Self { grid, dim, values, jumps: Vec::new(), law })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> PathLaw {
        self.law
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Value at storage index `i`.
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at grid time `t`.
    pub fn value(&self, t: f64) -> Result<&[f64]> {
        Ok(self.at(self.grid.index_of(t)?))
    }

    /// `out = value(i1) - value(i0)`.
    #[inline]
    pub fn increment_into(&self, i0: usize, i1: usize, out: &mut [f64]) {
        let (a, b) = (self.at(i0), self.at(i1));
        for ((o, x0), x1) in out.iter_mut().zip(a).zip(b) {
            *o = x1 - x0;
        }
    }

    /// Hash of the grid, values and jump register; used to assert that two
    /// computations consumed the same path.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.grid.dt.to_bits().hash(&mut h);
        self.grid.n_back.hash(&mut h);
        self.grid.n_fwd.hash(&mut h);
        self.dim.hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        for j in &self.jumps {
            j.time.to_bits().hash(&mut h);
            for s in &j.size {
                s.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// CSV with columns `t, v_1..v_dim`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for d in 1..=self.dim {
            s.push_str(&format!(",v_{d}"));
        }
        s.push('\n');
        for i in 0..self.grid.len() {
            s.push_str(&self.grid.time(i).to_string());
            for x in self.at(i) {
                s.push(',');
                s.push_str(&x.to_string());
            }
            s.push('\n');
        }
        s
    }

    /// The shifted path `θ_t ω`.
    pub fn shift(&self, t: f64) -> Result<ShiftedView<'_>> {
        ShiftedView { base: self, offset: 0 }.shift(t)
    }
}

/// `s ↦ base(s + t) - base(t)`, with `t` a grid multiple.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedView<'a> {
    base: &'a NoisePath,
    offset: isize,
}

impl<'a> ShiftedView<'a> {
    pub fn base(&self) -> &'a NoisePath {
        self.base
    }

    pub fn shift_t(&self) -> f64 {
        self.offset as f64 * self.base.grid.dt
    }

    /// Shift steps relative to the base path.
    pub fn offset_steps(&self) -> isize {
        self.offset
    }

    /// Compose with a further shift by `t`: `θ_t θ_s = θ_{s+t}`.
    pub fn shift(&self, t: f64) -> Result<ShiftedView<'a>> {
        let g = &self.base.grid;
        let k = g.steps_of(t).ok_or_else(|| Error::Window(format!("shift {t} is not a multiple of dt = {}", g.dt)))?;
        let offset = self.offset + k;
        g.index_of_steps(offset)?;
        Ok(ShiftedView { base: self.base, offset })
    }

    /// `θ_t ω (s)`.
    pub fn value(&self, s: f64) -> Result<Vec<f64>> {
        let g = &self.base.grid;
        let k = g.steps_of(s).ok_or_else(|| Error::Window(format!("s = {s} is off the grid")))?;
        let i = g.index_of_steps(self.offset + k)?;
        let o = g.index_of_steps(self.offset)?;
        let mut out = vec![0.0; self.base.dim];
        self.base.increment_into(o, i, &mut out);
        Ok(out)
    }

    /// Grid times `s` for which `value(s)` is defined.
    pub fn range(&self) -> (f64, f64) {
        let g = &self.base.grid;
        (g.t_min() - self.shift_t(), g.t_max() - self.shift_t())
    }
}

fn split_streams<R: Rng + ?Sized>(rng: &mut R) -> (SimRng, SimRng) {
    (SimRng::seed_from_u64(rng.next_u64()), SimRng::seed_from_u64(rng.next_u64()))
}

/// Two-sided symmetric α-stable path. The forward half and the time-reversed
/// backward half use independent streams; the negative side is
/// `value(-s) = -L'(s)` for an independent copy `L'`.
pub fn generate_two_sided_stable<R: Rng + ?Sized>(
    params: StableParams,
    window: Window,
    rng: &mut R,
) -> Result<NoisePath> {
    let grid = TimeGrid::covering(window.t_back, window.t_fwd, window.dt)?;
    let dim = params.dim();
    let sampler = StableSampler::new(params);
    let step_scale = params.scale() * grid.dt.powf(1.0 / params.alpha());
    let mut values = vec![0.0; grid.len() * dim];
    let (mut fwd, mut back) = split_streams(rng);
    let mut draw = vec![0.0; dim];
    let o = grid.origin();
    for k in 1..=grid.n_fwd {
        sampler.sample_unit_into(&mut fwd, &mut draw);
        for d in 0..dim {
            values[(o + k) * dim + d] = values[(o + k - 1) * dim + d] + step_scale * draw[d];
        }
    }
    for k in 1..=grid.n_back {
        sampler.sample_unit_into(&mut back, &mut draw);
        for d in 0..dim {
            values[(o - k) * dim + d] = values[(o - k + 1) * dim + d] - step_scale * draw[d];
        }
    }
    Ok(NoisePath { grid, dim, values, jumps: Vec::new(), law: PathLaw::Stable { alpha: params.alpha() } })
}

/// Two-sided path of the Lévy process described by `triplet`. Jumps are
/// registered at their exact times and enter the values at the first grid
/// point at or after the jump.
pub fn generate_two_sided_levy<R: Rng + ?Sized>(
    triplet: &LevyTriplet,
    window: Window,
    rng: &mut R,
) -> Result<NoisePath> {
    let grid = TimeGrid::covering(window.t_back, window.t_fwd, window.dt)?;
    let dim = triplet.dim();
    let mut sampler = triplet.increment_sampler(grid.dt);
    let mut values = vec![0.0; grid.len() * dim];
    let mut jumps = Vec::new();
    let (mut fwd, mut back) = split_streams(rng);
    let mut inc = vec![0.0; dim];
    let mut step_jumps = Vec::new();
    let o = grid.origin();
    for k in 1..=grid.n_fwd {
        step_jumps.clear();
        sampler.sample(&mut fwd, &mut inc, Some(&mut step_jumps));
        // Offsets lie in [0, dt); forward jumps occupy (t_{k-1}, t_k].
        let t1 = k as f64 * grid.dt;
        jumps.extend(step_jumps.drain(..).map(|j| Jump { time: t1 - j.time, size: j.size }));
        for d in 0..dim {
            values[(o + k) * dim + d] = values[(o + k - 1) * dim + d] + inc[d];
        }
    }
    for k in 1..=grid.n_back {
        step_jumps.clear();
        sampler.sample(&mut back, &mut inc, Some(&mut step_jumps));
        let s0 = (k - 1) as f64 * grid.dt;
        // A jump J of the mirrored copy at s appears on the path at -s with
        // size +J, because value(-s) = -L'(s).
        jumps.extend(step_jumps.drain(..).map(|j| Jump { time: -(s0 + j.time), size: j.size }));
        for d in 0..dim {
            values[(o - k) * dim + d] = values[(o - k + 1) * dim + d] - inc[d];
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    let law = PathLaw::Levy { gaussian: triplet.is_gaussian() };
    Ok(NoisePath { grid, dim, values, jumps, law })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_noise::triplet::{JumpDistribution, JumpMeasure};
    use crate::linalg::Matrix;
    use crate::rng::rng_for;
    use crate::stats::{linear_fit, quantiles};

    fn stable(alpha: f64) -> StableParams {
        StableParams::new(alpha, 1.0, 1).unwrap()
    }

    #[test]
    fn empty_window_is_single_zero_point() {
        let p = generate_two_sided_stable(stable(1.5), Window::new(0.0, 0.0, 0.01), &mut rng_for(1, &[])).unwrap();
        assert_eq!(p.grid().len(), 1);
        assert_eq!(p.value(0.0).unwrap(), &[0.0]);
    }

    #[test]
    fn anchored_at_origin_and_shift_vanishes_at_zero() {
        let p = generate_two_sided_stable(stable(1.7), Window::new(1.0, 1.0, 0.01), &mut rng_for(2, &[])).unwrap();
        assert_eq!(p.value(0.0).unwrap(), &[0.0]);
        let v = p.shift(0.37).unwrap();
        assert_eq!(v.value(0.0).unwrap(), vec![0.0]);
        assert!(p.shift(1.5).is_err());
        assert!(p.shift(0.005).is_err());
    }

    #[test]
    fn shift_composes() {
        let p = generate_two_sided_stable(stable(1.5), Window::new(1.0, 1.0, 0.01), &mut rng_for(3, &[])).unwrap();
        let a = p.shift(0.3).unwrap().shift(0.2).unwrap();
        let b = p.shift(0.5).unwrap();
        for k in -100..=40 {
            let s = k as f64 * 0.01;
            assert_eq!(a.value(s).unwrap(), b.value(s).unwrap());
        }
        assert_eq!(p.shift(0.0).unwrap().value(0.42).unwrap(), p.value(0.42).unwrap());
    }

    #[test]
    fn linear_path_is_shift_invariant() {
        let dt = 0.1;
        let grid = TimeGrid::covering(2.0, 2.0, dt).unwrap();
        let values: Vec<f64> = (0..grid.len()).map(|i| 3.0 * grid.time(i)).collect();
        let p = NoisePath::from_values(grid, 1, values, PathLaw::Other).unwrap();
        let v = p.shift(0.7).unwrap();
        for k in -20..=10 {
            let s = k as f64 * dt;
            assert!((v.value(s).unwrap()[0] - 3.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn interquartile_range_scales_like_h_to_one_over_alpha() {
        let alpha = 1.5;
        let dt = 0.001;
        let p = generate_two_sided_stable(stable(alpha), Window::new(0.0, 400.0, dt), &mut rng_for(4, &[])).unwrap();
        let n = p.grid().len();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for lag in [1usize, 2, 4] {
            let incs: Vec<f64> = (0..(n - 1) / lag).map(|j| p.at((j + 1) * lag)[0] - p.at(j * lag)[0]).collect();
            let q = quantiles(&incs, &[0.25, 0.75]);
            xs.push((lag as f64 * dt).ln());
            ys.push((q[1] - q[0]).ln());
        }
        let (slope, _) = linear_fit(&xs, &ys).unwrap();
        assert!((slope - 1.0 / alpha).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn brownian_quadratic_variation() {
        let tr = LevyTriplet::brownian(2);
        let p = generate_two_sided_levy(&tr, Window::new(0.0, 1.0, 1e-4), &mut rng_for(5, &[])).unwrap();
        let o = p.grid().origin();
        let mut qv = 0.0;
        for k in o..p.grid().len() - 1 {
            qv += p.at(k + 1).iter().zip(p.at(k)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        assert!((qv - 2.0).abs() < 0.1, "quadratic variation {qv}");
    }

    #[test]
    fn zero_triplet_gives_zero_path() {
        let jm = JumpMeasure::CompoundPoisson { rate: 0.0, jumps: JumpDistribution::UniformBall { radius: 0.1 } };
        let tr = LevyTriplet::new(vec![0.0], Matrix::zeros(1, 1), jm, 0.5).unwrap();
        let p = generate_two_sided_levy(&tr, Window::new(1.0, 1.0, 0.01), &mut rng_for(6, &[])).unwrap();
        assert!((0..p.grid().len()).all(|i| p.at(i)[0] == 0.0));
    }

    #[test]
    fn poisson_jump_count_and_register() {
        let rate = 7.0;
        let jm = JumpMeasure::CompoundPoisson { rate, jumps: JumpDistribution::UniformBall { radius: 0.4 } };
        let tr = LevyTriplet::new(vec![0.0], Matrix::zeros(1, 1), jm, 0.5).unwrap();
        let reps = 2000;
        let mut total = 0usize;
        for r in 0..reps {
            let p = generate_two_sided_levy(&tr, Window::new(1.0, 1.0, 0.01), &mut rng_for(7, &[r])).unwrap();
            total += p.jumps().iter().filter(|j| j.time >= 0.0).count();
            if r == 0 {
                // Pure jump path: rebuild it from the register alone.
                let g = *p.grid();
                let mut recon = vec![0.0; g.len()];
                for j in p.jumps() {
                    let k = (j.time / g.dt() - 1e-9).ceil() as isize;
                    let i = g.index_of_steps(k).unwrap();
                    if j.time >= 0.0 {
                        recon[i..].iter_mut().for_each(|x| *x += j.size[0]);
                    } else {
                        recon[..i].iter_mut().for_each(|x| *x -= j.size[0]);
                    }
                }
                for (i, r) in recon.iter().enumerate() {
                    assert!((r - p.at(i)[0]).abs() < 1e-12, "index {i}");
                }
            }
        }
        let mean = total as f64 / reps as f64;
        let se = (rate / reps as f64).sqrt();
        assert!((mean - rate).abs() < 3.0 * se, "mean count {mean}");
    }
}
