//! Bootstrap particle filter for the full system.

use rand::Rng;

use super::observation::ObservationPath;
use super::particle::{
    estimate, gather, normalize, systematic_resample, DegeneracyWarning, FilterKind, FilterRun, FilterSettings,
    FilterState, NoiseDraw,
};
use super::sensor::{Sensor, TestFunctional};
use crate::error::{Error, Result};
use crate::levy_noise::{LevyTriplet, StableParams, StableSampler};
use crate::model::SlowFastModel;
use crate::rng::{rng_for, stream, SimRng};

/// Smallest particle count accepted by the filters.
pub const MIN_PARTICLES: usize = 100;

/// What the filters need besides the observations: the model, the law of
/// the slow noise, the sensor and the (known) initial state.
#[derive(Debug, Clone, Copy)]
pub struct FilterProblem<'a> {
    pub model: &'a SlowFastModel,
    pub slow_law: &'a LevyTriplet,
    pub sensor: &'a Sensor,
    pub u0: &'a [f64],
    pub v0: &'a [f64],
}

impl FilterProblem<'_> {
    pub(crate) fn check(&self, obs: &ObservationPath, particles: usize) -> Result<()> {
        let m = self.model;
        if particles < MIN_PARTICLES {
            return Err(Error::param("particles", format!("at least {MIN_PARTICLES} particles are required")));
        }
        if self.u0.len() != m.n() || self.v0.len() != m.m() {
            return Err(Error::param("z0", format!("expected dimensions ({}, {})", m.n(), m.m())));
        }
        if self.slow_law.dim() != m.m() {
            return Err(Error::param("slow_law", "dimension does not match the slow block"));
        }
        if self.sensor.dim() != obs.dim() {
            return Err(Error::Alignment("sensor and observation dimensions differ".into()));
        }
        Ok(())
    }

    pub(crate) fn noise(&self, dt: f64) -> Result<NoiseDraw<'_>> {
        let m = self.model;
        Ok(NoiseDraw {
            fast: StableSampler::new(StableParams::new(m.alpha(), 1.0, m.n())?),
            fast_scale: dt.powf(1.0 / m.alpha()),
            slow: self.slow_law.increment_sampler(dt),
        })
    }
}

/// Report blocks: `blocks` coarse steps of `stride` observation steps.
pub(crate) fn blocks(obs: &ObservationPath, report_dt: f64) -> Result<(usize, usize)> {
    let ratio = report_dt / obs.dt();
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 * ratio {
        return Err(Error::Alignment(format!("report step {report_dt} is not a multiple of dt = {}", obs.dt())));
    }
    if obs.steps() % stride != 0 {
        return Err(Error::Alignment(format!("T = {} is not a multiple of the report step", obs.t_end())));
    }
    Ok((stride, obs.steps() / stride))
}

pub(crate) struct Recorder<'a> {
    functionals: &'a [TestFunctional],
    pub run: FilterRun,
}

impl<'a> Recorder<'a> {
    pub fn new(kind: FilterKind, functionals: &'a [TestFunctional], obs: &ObservationPath, n: usize, m: usize) -> Self {
        let state = FilterState { kind, t: 0.0, n, m, u: Vec::new(), v: Vec::new(), log_weights: Vec::new(), ess: 0.0 };
        Self {
            functionals,
            run: FilterRun {
                kind,
                times: Vec::new(),
                estimates: vec![Vec::new(); functionals.len()],
                ess: Vec::new(),
                resamples: 0,
                warnings: Vec::new(),
                observation: obs.fingerprint(),
                final_state: state,
                solver_iterations: 0,
            },
        }
    }

    /// Record estimates at `t`; returns the normalized weights and ess.
    pub fn record(
        &mut self,
        t: f64,
        step: usize,
        log_w: &[f64],
        u: &[f64],
        v: &[f64],
        degeneracy: f64,
    ) -> (Vec<f64>, f64) {
        let (w, ess) = normalize(log_w);
        let (n, m) = (self.run.final_state.n, self.run.final_state.m);
        self.run.times.push(t);
        self.run.ess.push(ess);
        for (j, phi) in self.functionals.iter().enumerate() {
            self.run.estimates[j].push(estimate(&w, u, v, n, m, phi));
        }
        if ess < degeneracy {
            self.run.warnings.push(DegeneracyWarning { step, t, ess });
        }
        (w, ess)
    }

    pub fn finish(mut self, t: f64, u: Vec<f64>, v: Vec<f64>, log_w: Vec<f64>) -> FilterRun {
        let ess = normalize(&log_w).1;
        let s = &mut self.run.final_state;
        s.t = t;
        s.u = u;
        s.v = v;
        s.log_weights = log_w;
        s.ess = ess;
        self.run
    }
}

/// `log w += H·Δw − ½|H|² dt`.
#[inline]
pub(crate) fn girsanov_increment(h: &[f64], dw: &[f64], dt: f64) -> f64 {
    h.iter().zip(dw).map(|(a, b)| a * b - 0.5 * a * a * dt).sum()
}

pub(crate) fn resample_rng(seed: u64) -> SimRng {
    rng_for(seed, &[stream::RESAMPLING])
}

pub(crate) fn particle_rng(seed: u64) -> SimRng {
    rng_for(seed, &[stream::PARTICLES])
}

/// Bootstrap filter for `Π_t(Φ)`: particles follow the full system with
/// independent dynamics noise, weights follow the discretized
/// Kallianpur–Striebel density, and systematic resampling runs at report
/// times when `ess < threshold·N`. Streams are derived from `seed`; the
/// reduced filter with the same seed sees the same dynamics increments
/// slot by slot.
pub fn run_filter_full(
    problem: &FilterProblem<'_>,
    obs: &ObservationPath,
    particles: usize,
    settings: &FilterSettings,
    functionals: &[TestFunctional],
    seed: u64,
) -> Result<FilterRun> {
    problem.check(obs, particles)?;
    let model = problem.model;
    let dt = obs.dt();
    if dt > model.epsilon() / 50.0 * (1.0 + 1e-12) {
        return Err(Error::Stiffness { dt, limit: model.epsilon() / 50.0 });
    }
    let (stride, nblocks) = blocks(obs, settings.report_dt)?;
    let (n, m, l) = (model.n(), model.m(), obs.dim());
    let form = model.original_form();
    let mut noise = problem.noise(dt)?;
    let mut rng = particle_rng(seed);
    let mut rs_rng = resample_rng(seed);

    let mut u: Vec<f64> = problem.u0.repeat(particles);
    let mut v: Vec<f64> = problem.v0.repeat(particles);
    let mut log_w = vec![0.0; particles];
    let (mut su, mut sv) = (Vec::new(), Vec::new());
    let (mut du, mut dv) = (vec![0.0; n], vec![0.0; m]);
    let (mut gu, mut gv) = (vec![0.0; n], vec![0.0; m]);
    let (mut lu, mut lv) = (vec![0.0; n], vec![0.0; m]);
    let mut h = vec![0.0; l];
    let mut dw = vec![0.0; l];
    let mut rec = Recorder::new(FilterKind::Full, functionals, obs, n, m);
    rec.record(0.0, 0, &log_w, &u, &v, settings.degeneracy_ess);
    for b in 0..nblocks {
        for i in 0..particles {
            let (ui, vi) = (&mut u[i * n..(i + 1) * n], &mut v[i * m..(i + 1) * m]);
            for s in 0..stride {
                let k = b * stride + s;
                obs.increment_into(k, k + 1, &mut dw);
                problem.sensor.eval(ui, vi, &mut h);
                log_w[i] += girsanov_increment(&h, &dw, dt);
                model.u().eval(ui, vi, &mut gu);
                model.v().eval(ui, vi, &mut gv);
                form.fast_gen.mul_vec_into(ui, &mut lu);
                form.slow_gen.mul_vec_into(vi, &mut lv);
                noise.draw(&mut rng, &mut du, &mut dv);
                for d in 0..n {
                    ui[d] += (lu[d] + form.fast_gain * gu[d]) * dt + form.fast_noise * du[d];
                }
                for d in 0..m {
                    vi[d] += (lv[d] + form.slow_gain * gv[d]) * dt + form.slow_noise * dv[d];
                }
            }
            if !log_w[i].is_finite() || ui.iter().chain(vi.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Divergence { step: (b + 1) * stride, t: obs.time((b + 1) * stride) });
            }
        }
        let t = obs.time((b + 1) * stride);
        let (w, ess) = rec.record(t, (b + 1) * stride, &log_w, &u, &v, settings.degeneracy_ess);
        if ess < settings.resample_threshold * particles as f64 {
            let anc = systematic_resample(&w, rs_rng.random::<f64>());
            gather(&u, &mut su, n, &anc);
            gather(&v, &mut sv, m, &anc);
            std::mem::swap(&mut u, &mut su);
            std::mem::swap(&mut v, &mut sv);
            log_w.fill(0.0);
            rec.run.resamples += 1;
        }
    }
    Ok(rec.finish(obs.t_end(), u, v, log_w))
}
