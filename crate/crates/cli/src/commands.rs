//! Subcommands. Each one computes its artifacts in memory; files are written
//! once at the end by [`output::write_all`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lfms_core::epsilon_zero::{beta_of_epsilon, gap_experiment, scaled_realization, scaled_window, ScaledModel};
use lfms_core::filtering::{compare_filters, FilterCompareConfig, Sensor, TestFunctional};
use lfms_core::levy_noise::StationarySettings;
use lfms_core::model::{simulate_full, validate_hypotheses, Analysis};
use lfms_core::reduced::{compare_full_reduced, GapCurve};
use lfms_core::rng::{rng_for, stream};
use lfms_core::stats::mean_stderr;
use lfms_core::{BackwardWindow, ManifoldEvaluator, Realization, SlowFastModel};
use rayon::prelude::*;

use crate::config::{load_config, ExperimentConfig, ManifoldSection};
use crate::error::CliError;
use crate::output::{self, fmt_num, result_table, Artifact, CsvTable, Manifest, ResultRow, Seeds};
use crate::svg::{Plot, Series};

const SEED_DERIVATION: &str =
    "each stream is ChaCha8 seeded by a SplitMix64 hash of the master seed and a label path (replica, stream tag)";
const HYPOTHESIS_PROBES: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "lfms", version, about = "Slow-fast Lévy systems: manifolds, reduction and filtering experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (a directory for `sweep`). Defaults to `[run] output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `[run] workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also render SVG summary plots next to the CSV.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check the hypotheses and print the derived constants.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the full system on one noise realization.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Slice of the manifold map over a grid of slow states.
    Manifold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
        /// `a:b:n`, n points from a to b.
        #[arg(long = "y-grid", default_value = "-2:2:41")]
        y_grid: String,
    },
    /// Full versus reduced trajectory on one realization.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Monte Carlo comparison of the full and reduced filters.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long = "T")]
        t_end: Option<f64>,
    },
    /// Rescaled system against its ε = 0 reduction.
    Eps0 {
        #[command(flatten)]
        common: Common,
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long = "T")]
        t_end: Option<f64>,
    },
    /// Reduction gap over an ε grid and several replicas.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Simulate { common, .. }
            | Command::Manifold { common, .. }
            | Command::Reduce { common, .. }
            | Command::Filter { common, .. }
            | Command::Eps0 { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Simulate { .. } => "simulate",
            Command::Manifold { .. } => "manifold",
            Command::Reduce { .. } => "reduce",
            Command::Filter { .. } => "filter",
            Command::Eps0 { .. } => "eps0",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest_hash: Option<String>,
    pub manifest: Option<PathBuf>,
    pub files: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

struct Ctx {
    cfg: ExperimentConfig,
    common: Common,
    command: &'static str,
    args: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    workers: usize,
}

impl Ctx {
    fn arg(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.args.insert(key.into(), v.to_string());
        }
    }

    fn resolve(&mut self, key: &str, value: impl ToString) {
        self.resolved.insert(key.into(), value.to_string());
    }

    fn out_file(&self) -> PathBuf {
        self.common.out.clone().unwrap_or_else(|| self.cfg.run.output.join(format!("{}.csv", self.command)))
    }

    fn settings(&self) -> StationarySettings {
        StationarySettings { tol: self.cfg.noise.stationary_tol, ..Default::default() }
    }

    fn manifold(&self) -> Result<ManifoldSection, CliError> {
        self.cfg.manifold.ok_or_else(|| CliError::Usage(format!("`{}` needs a [manifold] section", self.command)))
    }

    fn model_at(&self, eps: f64) -> Result<SlowFastModel, CliError> {
        Ok(self.cfg.base_model().with_epsilon(eps)?)
    }

    fn window(&self, model: &SlowFastModel) -> Result<BackwardWindow, CliError> {
        let mf = self.manifold()?;
        let dt = self.cfg.noise.dt;
        let w = match mf.t_back {
            Some(t) => BackwardWindow::new(t, dt, mf.mu)?,
            None => BackwardWindow::for_model(model, Some(mf.mu), dt, mf.truncation_tol)?,
        };
        Ok(w.with_picard_tol(mf.picard_tol).with_max_iterations(mf.max_iterations))
    }

    fn svg_path(&self, primary: &Path, suffix: &str) -> PathBuf {
        let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        primary.with_file_name(format!("{stem}{suffix}.svg"))
    }

    fn finish(self, manifest_file: PathBuf, artifacts: Vec<Artifact>, summary: String) -> Result<RunReport, CliError> {
        let manifest = Manifest {
            schema: output::CSV_SCHEMA,
            tool: format!("lfms {}", env!("CARGO_PKG_VERSION")),
            command: self.command.into(),
            arguments: self.args,
            config: self.cfg.echo(),
            resolved: self.resolved,
            seeds: Seeds {
                master: self.cfg.run.seed,
                source: self.cfg.run.seed_source.clone(),
                derivation: SEED_DERIVATION,
            },
            workers: self.workers,
            outputs: Vec::new(),
        };
        let hash = output::write_all(manifest, &artifacts, &manifest_file)?;
        Ok(RunReport {
            manifest_hash: Some(hash),
            manifest: Some(manifest_file),
            files: artifacts.into_iter().map(|a| a.path).collect(),
            summary,
        })
    }
}

/// Load the configuration, run the subcommand on a pool of the configured
/// size and write its outputs.
pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let common = cli.command.common().clone();
    let cfg = load_config(&common.config)?;
    let workers = common.workers.unwrap_or(cfg.run.workers);
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let mut ctx =
        Ctx { cfg, common, command: cli.command.name(), args: BTreeMap::new(), resolved: BTreeMap::new(), workers };
    if ctx.common.svg {
        ctx.args.insert("svg".into(), "true".into());
    }
    if let Some(mf) = ctx.cfg.manifold {
        ctx.resolve("mu", mf.mu);
        ctx.resolve("mu_source", if mf.mu_defaulted { "default (gamma1 - L)/2" } else { "config" });
    }
    pool.install(|| match cli.command.clone() {
        Command::Validate { .. } => validate(ctx),
        Command::Simulate { eps, t_end, replica, .. } => simulate(ctx, eps, t_end, replica),
        Command::Manifold { eps, y_grid, .. } => manifold(ctx, eps, &y_grid),
        Command::Reduce { eps, t_end, replica, .. } => reduce(ctx, eps, t_end, replica),
        Command::Filter { eps_grid, p, particles, replicas, t_end, .. } => {
            filter(ctx, eps_grid, p, particles, replicas, t_end)
        }
        Command::Eps0 { eps_grid, t_end, .. } => eps0(ctx, eps_grid, t_end),
        Command::Sweep { eps_grid, t_end, replicas, .. } => sweep(ctx, eps_grid, t_end, replicas),
    })
}

fn validate(ctx: Ctx) -> Result<RunReport, CliError> {
    let mu = ctx.cfg.manifold.map(|m| m.mu);
    let mut eps: Vec<f64> = vec![ctx.cfg.model.epsilon];
    eps.extend(ctx.cfg.model.eps_grid.iter().filter(|e| **e != ctx.cfg.model.epsilon));
    let mut summary = String::new();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &e in &eps {
        let model = ctx.model_at(e)?;
        let mut rng = rng_for(ctx.cfg.run.seed, &[stream::PROBES]);
        let rep = validate_hypotheses(&model, mu, HYPOTHESIS_PROBES, &mut rng)?;
        summary.push_str(&format!("-- epsilon = {e}\n{rep}\n"));
        if !rep.pass.all() {
            failed.push(e);
        }
        let metric = |name: &str, value: f64| ResultRow {
            experiment: "validate".into(),
            replica: None,
            eps: e,
            t: None,
            metric: name.into(),
            value,
            mc_stderr: None,
        };
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        rows.extend([
            metric("gamma1", rep.gamma1()),
            metric("gamma2", rep.gamma2()),
            metric("gamma3", rep.gamma3()),
            metric("mu", rep.mu()),
            metric("q", rep.q),
            metric("epsilon0", rep.epsilon0.unwrap_or(f64::NAN)),
            metric("h1", flag(rep.pass.h1)),
            metric("h2", flag(rep.pass.h2)),
            metric("h3", flag(rep.pass.h3)),
            metric("h4", flag(rep.pass.h4)),
            metric("h5", flag(rep.pass.h5)),
        ]);
    }
    if !failed.is_empty() {
        return Err(lfms_core::Error::Domain(format!("hypotheses fail at ε = {failed:?}\n{summary}")).into());
    }
    match ctx.common.out.clone() {
        Some(out) => {
            let manifest = output::manifest_path(&out);
            ctx.finish(manifest, vec![Artifact::csv(out, result_table(&rows))], summary)
        }
        None => Ok(RunReport { manifest_hash: None, manifest: None, files: Vec::new(), summary }),
    }
}

fn simulate(mut ctx: Ctx, eps: Option<f64>, t_end: Option<f64>, replica: u64) -> Result<RunReport, CliError> {
    ctx.arg("eps", eps);
    ctx.arg("T", t_end);
    ctx.arg("replica", Some(replica));
    let eps = eps.unwrap_or(ctx.cfg.model.epsilon);
    let t_end = t_end.unwrap_or(ctx.cfg.noise.horizon);
    let model = ctx.model_at(eps)?;
    let dt = ctx.cfg.noise.dt;
    let omega =
        Realization::generate(&model, ctx.cfg.slow_law(), 0.0, t_end, dt, ctx.settings(), ctx.cfg.run.seed, replica)?;
    let md = &ctx.cfg.model;
    let traj = simulate_full(&model, &omega.fast, &omega.slow, (&md.u0, &md.v0), t_end, dt)?;
    let (n, m) = (model.n(), model.m());
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("u_{i}")));
    cols.extend((1..=m).map(|j| format!("v_{j}")));
    let mut table = CsvTable::new(cols);
    for k in 0..traj.len() {
        table.push_numbers(
            std::iter::once(traj.times()[k]).chain(traj.u_at(k).iter().copied()).chain(traj.v_at(k).iter().copied()),
        );
    }
    let out = ctx.out_file();
    let mut artifacts = vec![Artifact::csv(out.clone(), table)];
    if ctx.common.svg {
        let mut series = Vec::new();
        for i in 0..n {
            series.push(Series::line(
                format!("u_{}", i + 1),
                (0..traj.len()).map(|k| (traj.times()[k], traj.u_at(k)[i])).collect(),
            ));
        }
        for j in 0..m {
            series.push(Series::line(
                format!("v_{}", j + 1),
                (0..traj.len()).map(|k| (traj.times()[k], traj.v_at(k)[j])).collect(),
            ));
        }
        let plot = Plot {
            title: format!("full system, ε = {eps}"),
            x_label: "t".into(),
            y_label: "state".into(),
            series,
            ..Default::default()
        };
        artifacts.push(Artifact::svg(ctx.svg_path(&out, ""), plot.render()));
    }
    let (u, v) = traj.last();
    let summary = format!("simulated {} steps at ε = {eps}; final state u = {u:?}, v = {v:?}", traj.len() - 1);
    ctx.finish(output::manifest_path(&out), artifacts, summary)
}

/// `a:b:n` with `n ≥ 1` points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid `{spec}` is not of the form a:b:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    Ok(if n == 1 { vec![a] } else { (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect() })
}

fn manifold(mut ctx: Ctx, eps: Option<f64>, y_grid: &str) -> Result<RunReport, CliError> {
    ctx.arg("eps", eps);
    ctx.arg("y_grid", Some(y_grid));
    let eps = eps.unwrap_or(ctx.cfg.model.epsilon);
    let ys = parse_grid(y_grid)?;
    let model = ctx.model_at(eps)?;
    let window = ctx.window(&model)?;
    let an = Analysis::new(&model, Some(window.mu))?;
    an.ensure_contraction()?;
    ctx.resolve("t_back", window.t_back);
    ctx.resolve("q", an.q());
    let omega = Realization::generate(
        &model,
        ctx.cfg.slow_law(),
        window.t_back,
        0.0,
        window.dt,
        ctx.settings(),
        ctx.cfg.run.seed,
        0,
    )?;
    let m = model.m();
    let solutions = ys
        .par_iter()
        .map(|&y| {
            let mut ev = ManifoldEvaluator::new(&model, &omega.zeta, &omega.varsigma, window)?;
            ev.solve_at(0.0, &vec![y; m])
        })
        .collect::<lfms_core::Result<Vec<_>>>()?;
    let n = model.n();
    let mut cols = vec!["y".to_string()];
    cols.extend((1..=n).map(|i| format!("F_{i}")));
    cols.extend(["iterations".to_string(), "residual".to_string()]);
    let mut table = CsvTable::new(cols);
    for (y, s) in ys.iter().zip(&solutions) {
        let mut row: Vec<String> = std::iter::once(*y).chain(s.f_value.iter().copied()).map(fmt_num).collect();
        row.extend([s.iterations.to_string(), fmt_num(s.final_residual)]);
        table.push(row);
    }
    let out = ctx.out_file();
    let mut artifacts = vec![Artifact::csv(out.clone(), table)];
    if ctx.common.svg {
        let series = (0..n)
            .map(|i| {
                Series::line(
                    format!("F_{}", i + 1),
                    ys.iter().zip(&solutions).map(|(y, s)| (*y, s.f_value[i])).collect(),
                )
            })
            .collect();
        let plot = Plot {
            title: format!("manifold slice, ε = {eps}"),
            x_label: "y".into(),
            y_label: "F(ω, y)".into(),
            series,
            ..Default::default()
        };
        artifacts.push(Artifact::svg(ctx.svg_path(&out, ""), plot.render()));
    }
    let worst = solutions.iter().map(|s| s.max_contraction).fold(0.0, f64::max);
    let sup = solutions.iter().flat_map(|s| s.f_value.iter().map(|x| x.abs())).fold(0.0, f64::max);
    let summary = format!(
        "{} solves at ε = {eps}: q = {:.4}, worst contraction {worst:.4}, sup |F| = {sup:.4} (bound {:.4})",
        ys.len(),
        an.q(),
        an.manifold_bound()
    );
    ctx.finish(output::manifest_path(&out), artifacts, summary)
}

fn reduce_one(ctx: &Ctx, eps: f64, t_end: f64, replica: u64) -> Result<GapCurve, CliError> {
    let model = ctx.model_at(eps)?;
    let window = ctx.window(&model)?;
    let dt = ctx.cfg.noise.dt;
    let omega = Realization::generate(
        &model,
        ctx.cfg.slow_law(),
        window.t_back,
        t_end,
        dt,
        ctx.settings(),
        ctx.cfg.run.seed,
        replica,
    )?;
    let md = &ctx.cfg.model;
    Ok(compare_full_reduced(&model, &omega, (&md.u0, &md.v0), None, t_end, dt, &window)?)
}

fn gap_plot(title: String, curves: &[(String, &GapCurve)], with_bound: bool) -> String {
    let mut series = Vec::new();
    for (label, c) in curves {
        series.push(Series::line(label.clone(), c.times.iter().copied().zip(c.gap.iter().copied()).collect()));
        if with_bound {
            series.push(
                Series::line(format!("{label} bound"), c.times.iter().copied().zip(c.bound.iter().copied()).collect())
                    .dashed(),
            );
        }
    }
    Plot { title, x_label: "t".into(), y_label: "|z - z̃|".into(), log_y: true, series, ..Default::default() }.render()
}

fn reduce(mut ctx: Ctx, eps: Option<f64>, t_end: Option<f64>, replica: u64) -> Result<RunReport, CliError> {
    ctx.arg("eps", eps);
    ctx.arg("T", t_end);
    ctx.arg("replica", Some(replica));
    let eps = eps.unwrap_or(ctx.cfg.model.epsilon);
    let t_end = t_end.unwrap_or(ctx.cfg.noise.horizon);
    let curve = reduce_one(&ctx, eps, t_end, replica)?;
    let mut table = CsvTable::new(["t", "gap", "bound", "u_gap", "v_gap"]);
    for k in 0..curve.times.len() {
        table.push_numbers([curve.times[k], curve.gap[k], curve.bound[k], curve.u_gap[k], curve.v_gap[k]]);
    }
    ctx.resolve("fitted_rate", curve.fitted_rate.map_or("none".into(), fmt_num));
    ctx.resolve("reference_rate", fmt_num(curve.reference_rate));
    let out = ctx.out_file();
    let mut artifacts = vec![Artifact::csv(out.clone(), table)];
    if ctx.common.svg {
        let svg = gap_plot(format!("full vs reduced, ε = {eps}"), &[(format!("ε = {eps}"), &curve)], true);
        artifacts.push(Artifact::svg(ctx.svg_path(&out, ""), svg));
    }
    let summary = format!(
        "ε = {eps}: gap(0) = {:.3e}, gap(T) = {:.3e}, fitted rate {}, reference μ/ε = {}, bound excess {:.3e}",
        curve.gap[0],
        curve.gap.last().copied().unwrap_or(f64::NAN),
        curve.fitted_rate.map_or("none".into(), |r| format!("{r:.3}")),
        curve.reference_rate,
        curve.dominance_excess(1.0)
    );
    ctx.finish(output::manifest_path(&out), artifacts, summary)
}

fn filter(
    mut ctx: Ctx,
    eps_grid: Option<Vec<f64>>,
    p: Option<f64>,
    particles: Option<usize>,
    replicas: Option<usize>,
    t_end: Option<f64>,
) -> Result<RunReport, CliError> {
    ctx.arg("eps_grid", eps_grid.as_ref().map(|g| g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
    ctx.arg("p", p);
    ctx.arg("particles", particles);
    ctx.arg("replicas", replicas);
    ctx.arg("T", t_end);
    let fs = ctx.cfg.filter.clone().ok_or_else(|| CliError::Usage("`filter` needs a [filter] section".into()))?;
    let mf = ctx.manifold()?;
    let grid = eps_grid.unwrap_or_else(|| ctx.cfg.eps_grid());
    let t_end = t_end.unwrap_or(ctx.cfg.noise.horizon);
    let mut cfg = FilterCompareConfig::new(
        grid,
        p.unwrap_or(fs.p),
        replicas.unwrap_or(fs.replicas),
        particles.unwrap_or(fs.particles),
        t_end,
    );
    let times: Vec<f64> = fs.times.iter().copied().filter(|t| *t <= t_end + 1e-12).collect();
    cfg.report_times = if times.is_empty() { vec![t_end] } else { times };
    cfg.mu = Some(mf.mu);
    cfg.truncation_tol = fs.truncation_tol;
    cfg.picard_tol = fs.picard_tol;
    cfg.seed = ctx.cfg.run.seed;
    let model = ctx.cfg.base_model();
    let sensor = Sensor::from_catalog(&fs.sensor.name, &fs.sensor.params, model.n(), model.m())?;
    let phi = TestFunctional::from_catalog(&fs.functional.name, &fs.functional.params)?;
    let md = &ctx.cfg.model;
    let rows = compare_filters(model, ctx.cfg.slow_law(), &sensor, &phi, &md.u0, &md.v0, &cfg)?;
    let mut table = CsvTable::new(["eps", "t", "mean_gap_p", "mc_stderr", "shape_term"]);
    for r in &rows {
        table.push_numbers([r.eps, r.t, r.mean_gap_p, r.mc_stderr, r.shape_term]);
    }
    let warnings: usize = rows.iter().map(|r| r.warnings).sum();
    ctx.resolve("degeneracy_warnings", warnings);
    let out = ctx.out_file();
    let mut artifacts = vec![Artifact::csv(out.clone(), table)];
    if ctx.common.svg {
        let mut series = Vec::new();
        for &t in &cfg.report_times {
            let at_t: Vec<_> = rows.iter().filter(|r| r.t == t).collect();
            series.push(
                Series::line(format!("E|Π-Π̃|^p, t = {t}"), at_t.iter().map(|r| (r.eps, r.mean_gap_p)).collect())
                    .with_markers(),
            );
            series.push(
                Series::line(format!("shape, t = {t}"), at_t.iter().map(|r| (r.eps, r.shape_term)).collect()).dashed(),
            );
        }
        let plot = Plot {
            title: "filter gap vs ε".into(),
            x_label: "ε".into(),
            y_label: "value".into(),
            log_x: true,
            log_y: true,
            series,
        };
        artifacts.push(Artifact::svg(ctx.svg_path(&out, ""), plot.render()));
    }
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "ε = {:<6} t = {:<5} E|Π-Π̃|^p = {:.4e} ± {:.2e}  shape {:.4}\n",
            r.eps, r.t, r.mean_gap_p, r.mc_stderr, r.shape_term
        ));
    }
    summary.push_str(&format!("degeneracy warnings: {warnings}"));
    ctx.finish(output::manifest_path(&out), artifacts, summary)
}

fn eps0(mut ctx: Ctx, eps_grid: Option<Vec<f64>>, t_end: Option<f64>) -> Result<RunReport, CliError> {
    ctx.arg("eps_grid", eps_grid.as_ref().map(|g| g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
    ctx.arg("T", t_end);
    let es = ctx.cfg.eps0.clone().ok_or_else(|| CliError::Usage("`eps0` needs an [eps0] section".into()))?;
    let grid = eps_grid.unwrap_or_else(|| es.eps_grid.clone());
    if grid.is_empty() {
        return Err(lfms_core::Error::Configuration("empty epsilon grid".into()).into());
    }
    let t_end = t_end.unwrap_or(es.horizon);
    let scaled = ScaledModel::new(ctx.cfg.base_model().without_slow_noise())?.with_epsilon(grid[0])?;
    let window = scaled_window(&scaled, es.mu, es.dt, es.truncation_tol)?.with_picard_tol(es.picard_tol);
    let omega = scaled_realization(&scaled, window.t_back, t_end, es.dt, ctx.settings(), ctx.cfg.run.seed, 0)?;
    let md = &ctx.cfg.model;
    let exp = gap_experiment(&scaled, &omega, (&md.u0, &md.v0), &grid, t_end, es.dt, &window, es.report_dt)?;
    ctx.resolve("mu", es.mu);
    ctx.resolve("c_beta", fmt_num(exp.fit.c));
    ctx.resolve("c_beta_spread", fmt_num(exp.fit.spread));
    let mut table =
        CsvTable::new(["eps", "t", "measured_gap", "bound_term1", "bound_term2", "bound_term3", "beta", "t0"]);
    for r in &exp.rows {
        table.push_numbers([r.eps, r.t, r.measured_gap, r.bound_term1, r.bound_term2, r.bound_term3, r.beta, r.t0]);
    }
    let out = ctx.out_file();
    let mut artifacts = vec![Artifact::csv(out.clone(), table)];
    if ctx.common.svg {
        let mut series = Vec::new();
        for &e in &grid {
            let rows: Vec<_> = exp.rows.iter().filter(|r| r.eps == e).collect();
            series.push(Series::line(format!("gap ε = {e}"), rows.iter().map(|r| (r.t, r.measured_gap)).collect()));
            series
                .push(Series::line(format!("bound ε = {e}"), rows.iter().map(|r| (r.t, r.bound())).collect()).dashed());
        }
        let plot = Plot {
            title: "rescaled system vs ε = 0 reduction".into(),
            x_label: "t".into(),
            y_label: "gap".into(),
            log_y: true,
            series,
            ..Default::default()
        };
        artifacts.push(Artifact::svg(ctx.svg_path(&out, ""), plot.render()));
        let r = scaled.base().rates();
        let curve = (0..=20)
            .map(|k| 10f64.powf(-5.0 + 4.0 * k as f64 / 20.0))
            .filter_map(|e| beta_of_epsilon(r.gamma1, r.gamma2, es.mu, e).ok().map(|b| (e, b.beta)))
            .collect();
        let marks = grid
            .iter()
            .filter_map(|&e| beta_of_epsilon(r.gamma1, r.gamma2, es.mu, e).ok().map(|b| (e, b.beta)))
            .collect();
        let plot = Plot {
            title: "β(ε)".into(),
            x_label: "ε".into(),
            y_label: "β".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::line("β(ε)", curve), Series::line("grid", marks).with_markers()],
        };
        artifacts.push(Artifact::svg(ctx.svg_path(&out, "_beta"), plot.render()));
    }
    let mut summary = format!("C fitted as {:.4} (ratio spread {:.3})\n", exp.fit.c, exp.fit.spread);
    for b in &exp.bounds {
        summary.push_str(&format!(
            "ε = {:<6} β = {:.6e} t0 = {:.6} prefactor {:.4} persistent level {:.4}\n",
            b.epsilon, b.beta.beta, b.beta.t0, b.prefactor, b.persistent_level
        ));
    }
    summary.push_str(&format!("largest gap - bound: {:.3e}", exp.dominance_excess()));
    ctx.finish(output::manifest_path(&out), artifacts, summary)
}

fn sweep(
    mut ctx: Ctx,
    eps_grid: Option<Vec<f64>>,
    t_end: Option<f64>,
    replicas: Option<usize>,
) -> Result<RunReport, CliError> {
    ctx.arg("eps_grid", eps_grid.as_ref().map(|g| g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
    ctx.arg("T", t_end);
    ctx.arg("replicas", replicas);
    let grid = eps_grid.unwrap_or_else(|| ctx.cfg.eps_grid());
    let t_end = t_end.unwrap_or(ctx.cfg.noise.horizon);
    let replicas = replicas.unwrap_or(ctx.cfg.run.replicas).max(1) as u64;
    let units: Vec<(f64, u64)> = grid.iter().flat_map(|&e| (0..replicas).map(move |r| (e, r))).collect();
    let curves = units.par_iter().map(|&(e, r)| reduce_one(&ctx, e, t_end, r)).collect::<Result<Vec<_>, _>>()?;
    let dir = ctx.common.out.clone().unwrap_or_else(|| ctx.cfg.run.output.join("sweep"));
    let mut artifacts = Vec::new();
    let mut summary_rows = Vec::new();
    let mut summary = String::new();
    let mut mean_curves = Vec::new();
    for (gi, &e) in grid.iter().enumerate() {
        let mine = &curves[gi * replicas as usize..(gi + 1) * replicas as usize];
        let mut rows = Vec::new();
        for (r, c) in mine.iter().enumerate() {
            for k in 0..c.times.len() {
                for (metric, value) in [("gap", c.gap[k]), ("bound", c.bound[k])] {
                    rows.push(ResultRow {
                        experiment: "sweep".into(),
                        replica: Some(r as u64),
                        eps: e,
                        t: Some(c.times[k]),
                        metric: metric.into(),
                        value,
                        mc_stderr: None,
                    });
                }
            }
        }
        artifacts.push(Artifact::csv(dir.join(format!("sweep_eps_{}.csv", fmt_num(e))), result_table(&rows)));
        let rates: Vec<f64> = mine.iter().filter_map(|c| c.fitted_rate).collect();
        let finals: Vec<f64> = mine.iter().filter_map(|c| c.gap.last().copied()).collect();
        let excess = mine.iter().map(|c| c.dominance_excess(1.0)).fold(f64::NEG_INFINITY, f64::max);
        let (rate, rate_se) =
            if rates.len() >= 2 { mean_stderr(&rates) } else { (rates.first().copied().unwrap_or(f64::NAN), f64::NAN) };
        let (fin, fin_se) = if finals.len() >= 2 { mean_stderr(&finals) } else { (finals[0], f64::NAN) };
        let reference = mine[0].reference_rate;
        let row = |metric: &str, value: f64, se: Option<f64>| ResultRow {
            experiment: "sweep".into(),
            replica: None,
            eps: e,
            t: None,
            metric: metric.into(),
            value,
            mc_stderr: se,
        };
        summary_rows.extend([
            row("fitted_rate", rate, Some(rate_se)),
            row("reference_rate", reference, None),
            row("rate_ratio", rate / reference, Some(rate_se / reference)),
            row("dominance_excess", excess, None),
            ResultRow { t: Some(t_end), ..row("final_gap", fin, Some(fin_se)) },
        ]);
        summary.push_str(&format!(
            "ε = {e:<6} fitted rate {rate:.3} ± {rate_se:.3} (μ/ε = {reference}), final gap {fin:.3e}, bound excess {excess:.3e}\n"
        ));
        let len = mine[0].times.len();
        let mean: Vec<(f64, f64)> = (0..len)
            .map(|k| (mine[0].times[k], mine.iter().map(|c| c.gap[k]).sum::<f64>() / mine.len() as f64))
            .collect();
        mean_curves.push((e, mean));
    }
    let summary_path = dir.join("sweep_summary.csv");
    artifacts.push(Artifact::csv(summary_path, result_table(&summary_rows)));
    if ctx.common.svg {
        let series = mean_curves.into_iter().map(|(e, pts)| Series::line(format!("ε = {e}"), pts)).collect();
        let plot = Plot {
            title: "mean reduction gap".into(),
            x_label: "t".into(),
            y_label: "gap".into(),
            log_y: true,
            series,
            ..Default::default()
        };
        artifacts.push(Artifact::svg(dir.join("sweep_gap.svg"), plot.render()));
    }
    ctx.finish(dir.join("manifest.json"), artifacts, summary.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("2:5:1").unwrap(), vec![2.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:1:2").is_err());
    }

    #[test]
    fn cli_grammar() {
        let cli = Cli::try_parse_from(["lfms", "filter", "--config", "x.cfg", "--eps-grid", "0.4,0.2,0.1", "--p", "2"])
            .unwrap();
        match cli.command {
            Command::Filter { eps_grid, p, .. } => {
                assert_eq!(eps_grid.unwrap(), vec![0.4, 0.2, 0.1]);
                assert_eq!(p, Some(2.0));
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["lfms", "reduce", "--config", "x.cfg", "--eps", "0.1", "--T", "1.0"]).unwrap();
        assert_eq!(cli.command.name(), "reduce");
        assert!(Cli::try_parse_from(["lfms", "reduce"]).is_err());
    }
}
