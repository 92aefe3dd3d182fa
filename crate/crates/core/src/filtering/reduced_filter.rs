//! Particle filter for the reduced system: `m`-dimensional particles, `ũ`
//! read off each particle's own manifold at every step.

use rand::Rng;

use super::full::{blocks, girsanov_increment, particle_rng, resample_rng, FilterProblem, Recorder};
use super::observation::ObservationPath;
use super::particle::{gather, systematic_resample, FilterKind, FilterRun, FilterSettings};
use super::sensor::TestFunctional;
use crate::error::{Error, Result};
use crate::levy_noise::{StableParams, StableSampler};
use crate::linalg::Matrix;
use crate::manifold::{BackwardWindow, LpSolver, LpSystem, Warm};
use crate::realization::Realization;
use crate::rng::{rng_for, stream};

/// Per-particle noise history and solver iterate.
#[derive(Debug, Clone)]
struct History {
    /// `ζ` on the coarse window, oldest first.
    zeta: Vec<f64>,
    /// `ς` on the coarse window, oldest first.
    vsig: Vec<f64>,
    guess_u: Vec<f64>,
    guess_v: Vec<f64>,
}

/// Stationary values on `[−K h, 0]` for one particle: burn-in from zero,
/// then `K` recorded steps of an exponential Euler recursion at step `h`.
#[allow(clippy::too_many_arguments)]
fn prehistory<R: Rng + ?Sized>(
    rng: &mut R,
    fast: &StableSampler,
    slow: &mut crate::levy_noise::IncrementSampler<'_>,
    e_fast: &Matrix,
    e_slow: &Matrix,
    gains: (f64, f64, f64),
    burn_steps: usize,
    k: usize,
    out: &mut History,
) {
    let (fast_gain, fast_scale, slow_gain) = gains;
    let (n, m) = (e_fast.rows(), e_slow.rows());
    let (mut z, mut s) = (vec![0.0; n], vec![0.0; m]);
    let (mut dz, mut ds) = (vec![0.0; n], vec![0.0; m]);
    let mut tmp = vec![0.0; n.max(m)];
    out.zeta.clear();
    out.vsig.clear();
    for step in 0..burn_steps + k {
        fast.sample_unit_into(rng, &mut dz);
        slow.sample(rng, &mut ds, None);
        for d in 0..n {
            tmp[d] = z[d] + fast_gain * fast_scale * dz[d];
        }
        e_fast.mul_vec_into(&tmp[..n], &mut z);
        for d in 0..m {
            tmp[d] = s[d] + slow_gain * ds[d];
        }
        e_slow.mul_vec_into(&tmp[..m], &mut s);
        if step + 1 >= burn_steps {
            out.zeta.extend_from_slice(&z);
            out.vsig.extend_from_slice(&s);
        }
    }
    debug_assert_eq!(out.zeta.len(), (k + 1) * n);
}

/// Particle filter for `Π̃_t(Φ)`. Each particle carries its own noise
/// history on the window `[t − T_back, t]` (drawn once before `t = 0`,
/// then driven by the same fine increments as the full filter's slot with
/// the same `seed`) and is advanced by the Euler scheme of the reduced
/// equation at the window step, which must equal `settings.report_dt`.
pub fn run_filter_reduced(
    problem: &FilterProblem<'_>,
    obs: &ObservationPath,
    particles: usize,
    window: &BackwardWindow,
    settings: &FilterSettings,
    functionals: &[TestFunctional],
    seed: u64,
) -> Result<FilterRun> {
    problem.check(obs, particles)?;
    let model = problem.model;
    let eps = model.epsilon();
    let dt = obs.dt();
    if dt > eps / 50.0 * (1.0 + 1e-12) {
        return Err(Error::Stiffness { dt, limit: eps / 50.0 });
    }
    if (window.dt - settings.report_dt).abs() > 1e-12 * window.dt {
        return Err(Error::Alignment(format!(
            "window step {} differs from the reduced step {}",
            window.dt, settings.report_dt
        )));
    }
    let sys = LpSystem::original(model, window.mu)?;
    window.check_truncation((model.rates().gamma1 - window.mu) / eps)?;
    let (stride, nblocks) = blocks(obs, settings.report_dt)?;
    let h = settings.report_dt;
    let k = window.steps();
    let (n, m, l) = (model.n(), model.m(), obs.dim());
    let form = model.original_form();
    let mut solver = LpSolver::new(sys, h, k);
    solver.set_gauss_seidel(true);

    // Noise histories before t = 0 from their own stream.
    let burn_steps = (Realization::burn_in(model, settings.history_tol) / h).ceil() as usize;
    let fast_coarse = StableSampler::new(StableParams::new(model.alpha(), 1.0, n)?);
    let mut slow_coarse = problem.slow_law.increment_sampler(h);
    let e_fast = form.fast_gen.scaled(h).expm();
    let e_slow = form.slow_gen.scaled(h).expm();
    let gains = (form.fast_noise, h.powf(1.0 / model.alpha()), form.slow_noise);
    let mut hist_rng = rng_for(seed, &[stream::HISTORY]);
    let mut hist: Vec<History> = Vec::with_capacity(particles);
    for _ in 0..particles {
        let mut hh = History { zeta: Vec::new(), vsig: Vec::new(), guess_u: Vec::new(), guess_v: Vec::new() };
        prehistory(&mut hist_rng, &fast_coarse, &mut slow_coarse, &e_fast, &e_slow, gains, burn_steps, k, &mut hh);
        hist.push(hh);
    }

    let mut noise = problem.noise(dt)?;
    let mut rng = particle_rng(seed);
    let mut rs_rng = resample_rng(seed);
    let mut v: Vec<f64> = problem.v0.repeat(particles);
    let mut u = vec![0.0; particles * n];
    let mut zf = vec![0.0; particles * n];
    let mut sf = vec![0.0; particles * m];
    let mut log_w = vec![0.0; particles];
    let mut vbar = vec![0.0; m];
    let mut iterations = 0usize;

    let mut on_manifold =
        |hh: &mut History, vi: &[f64], zi: &[f64], si: &[f64], ui: &mut [f64], warm: Warm| -> Result<usize> {
            for d in 0..m {
                vbar[d] = vi[d] - si[d];
            }
            let stats = solver.solve_with_guess(
                &hh.zeta,
                &hh.vsig,
                &vbar,
                &mut hh.guess_u,
                &mut hh.guess_v,
                warm,
                window.picard_tol,
                window.max_iterations,
            )?;
            let f = &hh.guess_u[k * n..];
            for d in 0..n {
                ui[d] = f[d] + zi[d];
            }
            Ok(stats.iterations)
        };

    for i in 0..particles {
        let hh = &mut hist[i];
        zf[i * n..(i + 1) * n].copy_from_slice(&hh.zeta[k * n..]);
        sf[i * m..(i + 1) * m].copy_from_slice(&hh.vsig[k * m..]);
        iterations += on_manifold(
            hh,
            &v[i * m..(i + 1) * m],
            &zf[i * n..(i + 1) * n],
            &sf[i * m..(i + 1) * m],
            &mut u[i * n..(i + 1) * n],
            Warm::Cold,
        )?;
    }

    let (mut du, mut dv) = (vec![0.0; n], vec![0.0; m]);
    let (mut gv, mut lv, mut lz, mut ls) = (vec![0.0; m], vec![0.0; m], vec![0.0; n], vec![0.0; m]);
    let mut acc = vec![0.0; m];
    let mut hv = vec![0.0; l];
    let mut dw = vec![0.0; l];
    let (mut su, mut sv, mut szf, mut ssf) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rec = Recorder::new(FilterKind::Reduced, functionals, obs, n, m);
    rec.record(0.0, 0, &log_w, &u, &v, settings.degeneracy_ess);
    for b in 0..nblocks {
        obs.increment_into(b * stride, (b + 1) * stride, &mut dw);
        for i in 0..particles {
            let (ui, vi) = (&mut u[i * n..(i + 1) * n], &mut v[i * m..(i + 1) * m]);
            let (zi, si) = (&mut zf[i * n..(i + 1) * n], &mut sf[i * m..(i + 1) * m]);
            problem.sensor.eval(ui, vi, &mut hv);
            log_w[i] += girsanov_increment(&hv, &dw, h);
            model.v().eval(ui, vi, &mut gv);
            form.slow_gen.mul_vec_into(vi, &mut lv);
            acc.fill(0.0);
            for _ in 0..stride {
                noise.draw(&mut rng, &mut du, &mut dv);
                form.fast_gen.mul_vec_into(zi, &mut lz);
                form.slow_gen.mul_vec_into(si, &mut ls);
                for d in 0..n {
                    zi[d] += lz[d] * dt + form.fast_noise * du[d];
                }
                for d in 0..m {
                    si[d] += ls[d] * dt + form.slow_noise * dv[d];
                    acc[d] += dv[d];
                }
            }
            for d in 0..m {
                vi[d] += (lv[d] + form.slow_gain * gv[d]) * h + form.slow_noise * acc[d];
            }
            let hh = &mut hist[i];
            hh.zeta.copy_within(n.., 0);
            hh.zeta[k * n..].copy_from_slice(zi);
            hh.vsig.copy_within(m.., 0);
            hh.vsig[k * m..].copy_from_slice(si);
            iterations += on_manifold(hh, vi, zi, si, ui, Warm::Shift(1))?;
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
            gather(&zf, &mut szf, n, &anc);
            gather(&sf, &mut ssf, m, &anc);
            std::mem::swap(&mut u, &mut su);
            std::mem::swap(&mut v, &mut sv);
            std::mem::swap(&mut zf, &mut szf);
            std::mem::swap(&mut sf, &mut ssf);
            hist = anc.iter().map(|&a| hist[a].clone()).collect();
            log_w.fill(0.0);
            rec.run.resamples += 1;
        }
    }
    rec.run.solver_iterations = iterations;
    Ok(rec.finish(obs.t_end(), u, v, log_w))
}
