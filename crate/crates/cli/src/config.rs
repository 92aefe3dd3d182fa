//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [model]
//! A = -2
//! U = "scaled_sin", c = 0.5
//! eps_grid = 0.4, 0.2, 0.1
//! ```
//!
//! Matrices are row-major with rows separated by `;`. Catalog selections
//! name an entry and list its parameters after the name.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use lfms_core::filtering::{Sensor, TestFunctional};
use lfms_core::levy_noise::{JumpDistribution, JumpMeasure, DEFAULT_CUTOFF};
use lfms_core::model::{default_mu, Analysis, Coupling, DeclaredConstants};
use lfms_core::{LevyTriplet, Matrix, SlowFastModel};
use serde::Serialize;
use thiserror::Error;

/// Environment variable that replaces `[run] seed`.
pub const SEED_ENV: &str = "LFMS_SEED";

/// One rejected key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub key: String,
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.reason),
            None => write!(f, "`{}`: {}", self.key, self.reason),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{} validation error(s): {}", .0.len(), join_issues(.0))]
    Invalid(Vec<Issue>),
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

/// A raw `key = value` entry with its source line.
#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "model",
        &[
            "A",
            "B",
            "U",
            "V",
            "sigma1",
            "sigma2",
            "alpha",
            "epsilon",
            "eps_grid",
            "lipschitz",
            "bound_u",
            "bound_v",
            "u0",
            "v0",
        ],
    ),
    ("noise", &["dt", "horizon", "cutoff", "slow", "stationary_tol"]),
    ("manifold", &["mu", "t_back", "truncation_tol", "picard_tol", "max_iterations"]),
    ("filter", &["particles", "replicas", "p", "sensor", "functional", "times", "truncation_tol", "picard_tol"]),
    ("eps0", &["eps_grid", "dt", "horizon", "report_dt", "mu", "truncation_tol", "picard_tol"]),
    ("run", &["seed", "workers", "output", "replicas"]),
];

type RawSections = BTreeMap<String, BTreeMap<String, Entry>>;

fn parse_raw(text: &str) -> Result<RawSections, ConfigError> {
    let mut out = RawSections::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { line, reason: "unterminated section header".into() })?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Parse { line, reason: format!("unknown section [{name}]") });
            }
            if out.contains_key(name) {
                return Err(ConfigError::Parse { line, reason: format!("section [{name}] appears twice") });
            }
            out.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let section =
            current.as_ref().ok_or_else(|| ConfigError::Parse { line, reason: "key outside of any section".into() })?;
        let (key, value) =
            body.split_once('=').ok_or_else(|| ConfigError::Parse { line, reason: "expected `key = value`".into() })?;
        let key = key.trim();
        let allowed = SECTIONS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError::Parse { line, reason: format!("unknown key `{key}` in [{section}]") });
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::Parse { line, reason: format!("`{key}` has no value") });
        }
        let map = out.get_mut(section).expect("section inserted");
        if map.insert(key.to_string(), Entry { value: value.to_string(), line }).is_some() {
            return Err(ConfigError::Parse { line, reason: format!("duplicate key `{key}`") });
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split([',', ' ']).filter(|t| !t.trim().is_empty()).map(parse_number).collect()
}

fn parse_matrix(s: &str) -> Result<Matrix, String> {
    let rows = s.split(';').map(parse_list).collect::<Result<Vec<_>, _>>()?;
    Matrix::from_rows(&rows).map_err(|e| e.to_string())
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

/// `"name", k = v, ...`
fn parse_selection(s: &str) -> Result<Selection, String> {
    let mut parts = s.split(',');
    let name = unquote(parts.next().unwrap_or_default()).to_string();
    if name.is_empty() {
        return Err("missing catalog name".into());
    }
    let params = parts
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected `key = value`, got `{}`", p.trim()))?;
            Ok((k.trim().to_string(), parse_number(v)?))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Selection { name, params })
}

/// Catalog entry plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub name: String,
    pub params: Vec<(String, f64)>,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.name)?;
        for (k, v) in &self.params {
            write!(f, ", {k} = {v}")?;
        }
        Ok(())
    }
}

impl Selection {
    fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSection {
    pub a: Matrix,
    pub b: Matrix,
    pub u: Selection,
    pub v: Selection,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub eps_grid: Vec<f64>,
    pub declared: Option<DeclaredConstants>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NoiseSection {
    pub dt: f64,
    pub horizon: f64,
    pub cutoff: f64,
    pub slow: Selection,
    pub stationary_tol: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ManifoldSection {
    /// Resolved weight rate.
    pub mu: f64,
    /// True when `mu` was not in the file.
    pub mu_defaulted: bool,
    pub t_back: Option<f64>,
    pub truncation_tol: f64,
    pub picard_tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FilterSection {
    pub particles: usize,
    pub replicas: usize,
    pub p: f64,
    pub sensor: Selection,
    pub functional: Selection,
    pub times: Vec<f64>,
    pub truncation_tol: f64,
    pub picard_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Eps0Section {
    pub eps_grid: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub report_dt: f64,
    pub mu: f64,
    pub truncation_tol: f64,
    pub picard_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Config,
    Environment,
}

#[derive(Debug, Clone)]
pub struct RunSection {
    pub seed: u64,
    pub seed_source: SeedSource,
    pub workers: usize,
    pub output: PathBuf,
    pub replicas: usize,
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub manifold: Option<ManifoldSection>,
    pub filter: Option<FilterSection>,
    pub eps0: Option<Eps0Section>,
    pub run: RunSection,
    base_model: SlowFastModel,
    slow_law: LevyTriplet,
}

/// Collects issues while typed values are pulled out of the raw sections.
struct Reader<'a> {
    raw: &'a RawSections,
    issues: Vec<Issue>,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.raw.get(section).and_then(|s| s.get(key))
    }

    fn has_section(&self, section: &str) -> bool {
        self.raw.contains_key(section)
    }

    fn issue(&mut self, key: String, line: Option<usize>, reason: impl Into<String>) {
        self.issues.push(Issue { key, line, reason: reason.into() });
    }

    fn get<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let e = self.entry(section, key)?;
        match parse(&e.value) {
            Ok(v) => Some(v),
            Err(reason) => {
                self.issue(format!("{section}.{key}"), Some(e.line), reason);
                None
            }
        }
    }

    fn required<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        if self.entry(section, key).is_none() {
            self.issue(format!("{section}.{key}"), None, "required key is missing");
            return None;
        }
        self.get(section, key, parse)
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.entry(section, key).map(|e| e.line)
    }

    /// Record an issue unless `ok`.
    fn check(&mut self, ok: bool, section: &str, key: &str, reason: impl Into<String>) {
        if !ok {
            let line = self.line(section, key);
            self.issue(format!("{section}.{key}"), line, reason);
        }
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let x = parse_number(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} must be positive"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|_| format!("`{}` is not a nonnegative integer", s.trim()))
}

fn parse_seed(s: &str) -> Result<u64, String> {
    s.trim().parse::<u64>().map_err(|_| format!("`{}` is not an unsigned 64-bit seed", s.trim()))
}

fn parse_text(s: &str) -> Result<String, String> {
    Ok(unquote(s).to_string())
}

fn coupling(sel: &Selection) -> Result<Coupling, String> {
    Coupling::from_catalog(&sel.name, &sel.params).map_err(|e| e.to_string())
}

fn slow_law(sel: &Selection, m: usize, cutoff: f64) -> Result<LevyTriplet, String> {
    let allowed: &[&str] = match sel.name.as_str() {
        "brownian" => &[],
        "poisson" => &["rate", "radius", "diffusion"],
        "truncated_stable" => &["alpha", "diffusion"],
        other => return Err(format!("unknown slow noise `{other}` (known: brownian, poisson, truncated_stable)")),
    };
    if let Some((k, _)) = sel.params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(format!("slow noise `{}` has no parameter `{k}`", sel.name));
    }
    if sel.name == "brownian" {
        let t = LevyTriplet::brownian(m);
        return LevyTriplet::new(vec![0.0; m], t.diffusion().clone(), t.jump_measure().clone(), cutoff)
            .map_err(|e| e.to_string());
    }
    let diffusion = Matrix::identity(m).scaled(sel.param("diffusion").unwrap_or(0.0));
    let jumps = if sel.name == "poisson" {
        JumpMeasure::CompoundPoisson {
            rate: sel.param("rate").unwrap_or(1.0),
            jumps: JumpDistribution::UniformBall { radius: sel.param("radius").unwrap_or(cutoff) },
        }
    } else {
        JumpMeasure::TruncatedStable { alpha: sel.param("alpha").unwrap_or(1.5) }
    };
    LevyTriplet::new(vec![0.0; m], diffusion, jumps, cutoff).map_err(|e| e.to_string())
}

impl ExperimentConfig {
    /// Parse and validate. `seed_override` (normally from [`SEED_ENV`])
    /// replaces the configured seed.
    pub fn parse(text: &str, seed_override: Option<&str>) -> Result<Self, ConfigError> {
        let raw = parse_raw(text)?;
        let mut r = Reader { raw: &raw, issues: Vec::new() };
        for section in ["model", "noise"] {
            if !r.has_section(section) {
                r.issue(format!("[{section}]"), None, "required section is missing");
            }
        }

        let a = r.required("model", "A", parse_matrix);
        let b = r.required("model", "B", parse_matrix);
        let u = r.get("model", "U", parse_selection).unwrap_or(Selection { name: "zero".into(), params: vec![] });
        let v = r.get("model", "V", parse_selection).unwrap_or(Selection { name: "zero".into(), params: vec![] });
        let sigma1 = r.get("model", "sigma1", parse_number).unwrap_or(1.0);
        let sigma2 = r.get("model", "sigma2", parse_number).unwrap_or(1.0);
        let alpha = r.get("model", "alpha", parse_number).unwrap_or(1.5);
        let epsilon = r.required("model", "epsilon", parse_positive);
        let eps_grid = r.get("model", "eps_grid", parse_list).unwrap_or_default();
        let lipschitz = r.get("model", "lipschitz", parse_number);
        let bound_u = r.get("model", "bound_u", parse_number);
        let bound_v = r.get("model", "bound_v", parse_number);
        let declared = match (lipschitz, bound_u, bound_v) {
            (Some(l), Some(mu), Some(mv)) => Some(DeclaredConstants { lipschitz: l, bound_u: mu, bound_v: mv }),
            (None, None, None) => None,
            _ => {
                let line = r.line("model", "lipschitz").or(r.line("model", "bound_u")).or(r.line("model", "bound_v"));
                r.issue("model.lipschitz".into(), line, "declare all of lipschitz, bound_u, bound_v or none");
                None
            }
        };
        let u0 = r.get("model", "u0", parse_list);
        let v0 = r.get("model", "v0", parse_list);

        let dt = r.required("noise", "dt", parse_positive);
        let horizon = r.get("noise", "horizon", parse_positive).unwrap_or(1.0);
        let cutoff = r.get("noise", "cutoff", parse_number).unwrap_or(DEFAULT_CUTOFF);
        let slow =
            r.get("noise", "slow", parse_selection).unwrap_or(Selection { name: "brownian".into(), params: vec![] });
        let stationary_tol = r.get("noise", "stationary_tol", parse_positive).unwrap_or(1e-8);

        let seed_cfg = r.get("run", "seed", parse_seed).unwrap_or(0);
        let (seed, seed_source) = match seed_override {
            Some(s) => match parse_seed(s) {
                Ok(v) => (v, SeedSource::Environment),
                Err(reason) => {
                    r.issue(SEED_ENV.into(), None, reason);
                    (seed_cfg, SeedSource::Config)
                }
            },
            None => (seed_cfg, SeedSource::Config),
        };
        let workers = r.get("run", "workers", parse_count).unwrap_or(1);
        r.check(workers >= 1, "run", "workers", "at least one worker is required");
        let output = r.get("run", "output", parse_text).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
        let run_replicas = r.get("run", "replicas", parse_count).unwrap_or(1);
        r.check(run_replicas >= 1, "run", "replicas", "at least one replica is required");
        let run = RunSection { seed, seed_source, workers, output, replicas: run_replicas };

        // Everything below needs a model.
        let (Some(a), Some(b), Some(epsilon), Some(dt)) = (a, b, epsilon, dt) else {
            return Err(ConfigError::Invalid(r.issues));
        };
        let (n, m) = (a.rows(), b.rows());
        let u0 = u0.unwrap_or_else(|| vec![0.0; n]);
        let v0 = v0.unwrap_or_else(|| vec![0.0; m]);
        r.check(u0.len() == n, "model", "u0", format!("expected {n} components"));
        r.check(v0.len() == m, "model", "v0", format!("expected {m} components"));
        let alpha_ok = alpha > 1.0 && alpha < 2.0;
        r.check(alpha_ok, "model", "alpha", format!("{alpha} is outside (1, 2)"));
        r.check(eps_grid.iter().all(|e| *e > 0.0), "model", "eps_grid", "every ε must be positive");

        let mut builder = SlowFastModel::builder(a.clone(), b.clone()).noise(sigma1, sigma2).epsilon(epsilon);
        // A bad α is already reported; keep going so later problems are listed too.
        if alpha_ok {
            builder = builder.alpha(alpha);
        }
        match coupling(&u) {
            Ok(c) => builder = builder.coupling_u(c),
            Err(e) => r.issue("model.U".into(), r.line("model", "U"), e),
        }
        match coupling(&v) {
            Ok(c) => builder = builder.coupling_v(c),
            Err(e) => r.issue("model.V".into(), r.line("model", "V"), e),
        }
        if let Some(d) = declared {
            builder = builder.declared(d);
        }
        let base_model = match builder.build() {
            Ok(m) => m,
            Err(e) => {
                r.issue("model".into(), None, e.to_string());
                return Err(ConfigError::Invalid(r.issues));
            }
        };
        let slow_law = match slow_law(&slow, m, cutoff) {
            Ok(l) => Some(l),
            Err(e) => {
                r.issue("noise.slow".into(), r.line("noise", "slow"), e);
                None
            }
        };

        let all_eps: Vec<f64> = std::iter::once(epsilon).chain(eps_grid.iter().copied()).collect();
        for &e in &all_eps {
            r.check(
                dt <= e / 50.0 * (1.0 + 1e-12),
                "noise",
                "dt",
                format!("stiffness guard: dt = {dt} exceeds ε/50 = {} at ε = {e}", e / 50.0),
            );
        }
        let rates = base_model.rates();
        let lip = base_model.declared().lipschitz;

        let manifold = if r.has_section("manifold") {
            let mu_cfg = r.get("manifold", "mu", parse_positive);
            let mu = mu_cfg.unwrap_or_else(|| default_mu(rates.gamma1, lip));
            let t_back = r.get("manifold", "t_back", parse_positive);
            let truncation_tol = r.get("manifold", "truncation_tol", parse_positive).unwrap_or(1e-8);
            let picard_tol = r.get("manifold", "picard_tol", parse_positive).unwrap_or(1e-8);
            let max_iterations = r.get("manifold", "max_iterations", parse_count).unwrap_or(200);
            r.check(truncation_tol < 1.0, "manifold", "truncation_tol", "must lie in (0, 1)");
            match Analysis::new(&base_model, Some(mu)) {
                Err(e) => r.issue("manifold.mu".into(), r.line("manifold", "mu"), e.to_string()),
                Ok(an) => {
                    for &e in &all_eps {
                        let a = an.with_epsilon(e);
                        if a.ensure_contraction().is_err() {
                            let eps0 = a.epsilon0().map_or("none".to_string(), |x| format!("{x}"));
                            let key = if e == epsilon { "epsilon" } else { "eps_grid" };
                            r.check(
                                false,
                                "model",
                                key,
                                format!("H-contraction violated at ε = {e}: q = {} ≥ 1 (ε₀ = {eps0})", a.q()),
                            );
                        }
                    }
                }
            }
            Some(ManifoldSection {
                mu,
                mu_defaulted: mu_cfg.is_none(),
                t_back,
                truncation_tol,
                picard_tol,
                max_iterations,
            })
        } else {
            None
        };

        let filter = if r.has_section("filter") {
            let particles = r.get("filter", "particles", parse_count).unwrap_or(2000);
            let replicas = r.get("filter", "replicas", parse_count).unwrap_or(200);
            let p = r.get("filter", "p", parse_number).unwrap_or(2.0);
            let sensor = r
                .get("filter", "sensor", parse_selection)
                .unwrap_or(Selection { name: "tanh_sum".into(), params: vec![("c".into(), 1.0)] });
            let functional = r
                .get("filter", "functional", parse_selection)
                .unwrap_or(Selection { name: "tanh_sum".into(), params: vec![] });
            let times = r.get("filter", "times", parse_list).unwrap_or_else(|| vec![horizon]);
            let truncation_tol = r.get("filter", "truncation_tol", parse_positive).unwrap_or(1e-3);
            let picard_tol = r.get("filter", "picard_tol", parse_positive).unwrap_or(1e-5);
            r.check(particles >= 100, "filter", "particles", "at least 100 particles are required");
            r.check(replicas >= 2, "filter", "replicas", "at least 2 replicas are required");
            r.check(p > 1.0, "filter", "p", format!("{p} must exceed 1"));
            r.check(
                times.iter().all(|t| *t > 0.0 && *t <= horizon + 1e-12),
                "filter",
                "times",
                format!("times must lie in (0, horizon = {horizon}]"),
            );
            if let Err(e) = Sensor::from_catalog(&sensor.name, &sensor.params, n, m) {
                r.issue("filter.sensor".into(), r.line("filter", "sensor"), e.to_string());
            }
            if let Err(e) = TestFunctional::from_catalog(&functional.name, &functional.params) {
                r.issue("filter.functional".into(), r.line("filter", "functional"), e.to_string());
            }
            if manifold.is_none() {
                r.issue("[manifold]".into(), None, "the reduced filter needs a [manifold] section");
            }
            Some(FilterSection { particles, replicas, p, sensor, functional, times, truncation_tol, picard_tol })
        } else {
            None
        };

        let eps0 = if r.has_section("eps0") {
            let mu = r.get("eps0", "mu", parse_positive).or(manifold.map(|m| m.mu)).unwrap_or(1.0);
            let e0 = Eps0Section {
                eps_grid: r.get("eps0", "eps_grid", parse_list).unwrap_or_else(|| vec![0.2, 0.1, 0.05]),
                dt: r.get("eps0", "dt", parse_positive).unwrap_or(0.02),
                horizon: r.get("eps0", "horizon", parse_positive).unwrap_or(10.0),
                report_dt: r.get("eps0", "report_dt", parse_positive).unwrap_or(0.5),
                mu,
                truncation_tol: r.get("eps0", "truncation_tol", parse_positive).unwrap_or(1e-6),
                picard_tol: r.get("eps0", "picard_tol", parse_positive).unwrap_or(1e-10),
            };
            r.check(
                e0.dt <= lfms_core::epsilon_zero::SCALED_STIFFNESS_LIMIT * (1.0 + 1e-12),
                "eps0",
                "dt",
                "rescaled step must not exceed 1/50",
            );
            r.check(e0.report_dt >= e0.dt, "eps0", "report_dt", "report step is below the integration step");
            r.check(mu < rates.gamma1, "eps0", "mu", format!("{mu} is outside (0, γ1 = {})", rates.gamma1));
            if let Ok(an) = Analysis::new(&base_model, Some(mu)) {
                for &e in &e0.eps_grid {
                    let a = an.with_epsilon(e);
                    r.check(
                        e > 0.0 && a.ensure_contraction().is_ok(),
                        "eps0",
                        "eps_grid",
                        format!("H-contraction violated at ε = {e}: q = {} ≥ 1", a.q()),
                    );
                }
            }
            Some(e0)
        } else {
            None
        };

        if !r.issues.is_empty() {
            return Err(ConfigError::Invalid(r.issues));
        }
        let noise = NoiseSection { dt, horizon, cutoff, slow, stationary_tol };
        let model = ModelSection {
            a,
            b,
            u,
            v,
            sigma1,
            sigma2,
            alpha,
            epsilon,
            eps_grid,
            declared: Some(base_model.declared()),
            u0,
            v0,
        };
        Ok(Self { model, noise, manifold, filter, eps0, run, base_model, slow_law: slow_law.expect("checked above") })
    }

    /// The model at `[model] epsilon`.
    pub fn base_model(&self) -> &SlowFastModel {
        &self.base_model
    }

    pub fn slow_law(&self) -> &LevyTriplet {
        &self.slow_law
    }

    /// `[model] eps_grid`, or the single `epsilon` when no grid is set.
    pub fn eps_grid(&self) -> Vec<f64> {
        if self.model.eps_grid.is_empty() {
            vec![self.model.epsilon]
        } else {
            self.model.eps_grid.clone()
        }
    }

    /// Canonical echo: every key with its resolved value, in a fixed order.
    /// Two configs with the same echo run identically.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mat = |m: &Matrix| {
            (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| m.get(i, j).to_string()).collect::<Vec<_>>().join(", "))
                .collect::<Vec<_>>()
                .join("; ")
        };
        let md = &self.model;
        let d = self.base_model.declared();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "A = {}", mat(&md.a));
        let _ = writeln!(s, "B = {}", mat(&md.b));
        let _ = writeln!(s, "U = {}", md.u);
        let _ = writeln!(s, "V = {}", md.v);
        let _ = writeln!(s, "sigma1 = {}", md.sigma1);
        let _ = writeln!(s, "sigma2 = {}", md.sigma2);
        let _ = writeln!(s, "alpha = {}", md.alpha);
        let _ = writeln!(s, "epsilon = {}", md.epsilon);
        if !md.eps_grid.is_empty() {
            let _ = writeln!(s, "eps_grid = {}", list(&md.eps_grid));
        }
        let _ = writeln!(s, "lipschitz = {}", d.lipschitz);
        let _ = writeln!(s, "bound_u = {}", d.bound_u);
        let _ = writeln!(s, "bound_v = {}", d.bound_v);
        let _ = writeln!(s, "u0 = {}", list(&md.u0));
        let _ = writeln!(s, "v0 = {}", list(&md.v0));
        let no = &self.noise;
        let _ = writeln!(s, "[noise]");
        let _ = writeln!(s, "dt = {}", no.dt);
        let _ = writeln!(s, "horizon = {}", no.horizon);
        let _ = writeln!(s, "cutoff = {}", no.cutoff);
        let _ = writeln!(s, "slow = {}", no.slow);
        let _ = writeln!(s, "stationary_tol = {:e}", no.stationary_tol);
        if let Some(mf) = &self.manifold {
            let _ = writeln!(s, "[manifold]");
            let _ = writeln!(s, "mu = {}{}", mf.mu, if mf.mu_defaulted { "  # default (γ1 − L)/2" } else { "" });
            if let Some(t) = mf.t_back {
                let _ = writeln!(s, "t_back = {t}");
            }
            let _ = writeln!(s, "truncation_tol = {:e}", mf.truncation_tol);
            let _ = writeln!(s, "picard_tol = {:e}", mf.picard_tol);
            let _ = writeln!(s, "max_iterations = {}", mf.max_iterations);
        }
        if let Some(f) = &self.filter {
            let _ = writeln!(s, "[filter]");
            let _ = writeln!(s, "particles = {}", f.particles);
            let _ = writeln!(s, "replicas = {}", f.replicas);
            let _ = writeln!(s, "p = {}", f.p);
            let _ = writeln!(s, "sensor = {}", f.sensor);
            let _ = writeln!(s, "functional = {}", f.functional);
            let _ = writeln!(s, "times = {}", list(&f.times));
            let _ = writeln!(s, "truncation_tol = {:e}", f.truncation_tol);
            let _ = writeln!(s, "picard_tol = {:e}", f.picard_tol);
        }
        if let Some(e) = &self.eps0 {
            let _ = writeln!(s, "[eps0]");
            let _ = writeln!(s, "eps_grid = {}", list(&e.eps_grid));
            let _ = writeln!(s, "dt = {}", e.dt);
            let _ = writeln!(s, "horizon = {}", e.horizon);
            let _ = writeln!(s, "report_dt = {}", e.report_dt);
            let _ = writeln!(s, "mu = {}", e.mu);
            let _ = writeln!(s, "truncation_tol = {:e}", e.truncation_tol);
            let _ = writeln!(s, "picard_tol = {:e}", e.picard_tol);
        }
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "seed = {}", self.run.seed);
        let _ = writeln!(s, "workers = {}", self.run.workers);
        let _ = writeln!(s, "output = \"{}\"", self.run.output.display());
        let _ = writeln!(s, "replicas = {}", self.run.replicas);
        s
    }
}

/// Read and validate `path`, applying [`SEED_ENV`] when set.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), reason: e.to_string() })?;
    let env = std::env::var(SEED_ENV).ok();
    ExperimentConfig::parse(&text, env.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TS1: &str = include_str!("../../../configs/ts1.cfg");

    fn invalid(text: &str) -> Vec<Issue> {
        match ExperimentConfig::parse(text, None) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn ts1_fixture_loads() {
        let cfg = ExperimentConfig::parse(TS1, None).unwrap();
        let an = Analysis::new(cfg.base_model(), Some(cfg.manifold.unwrap().mu)).unwrap();
        assert!((an.epsilon0().unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(cfg.eps_grid(), vec![0.4, 0.2, 0.1]);
        assert_eq!(cfg.run.seed_source, SeedSource::Config);
    }

    #[test]
    fn large_epsilon_is_rejected_with_the_contraction_message() {
        let text = TS1.replace("epsilon = 0.1", "epsilon = 0.6");
        let issues = invalid(&text);
        let hit = issues.iter().find(|i| i.key == "model.epsilon").expect("epsilon issue");
        assert!(hit.reason.contains("H-contraction"), "{hit}");
        assert!(hit.line.is_some());
    }

    #[test]
    fn missing_mu_defaults_to_the_interval_centre() {
        let text: String = TS1.lines().filter(|l| !l.trim_start().starts_with("mu")).collect::<Vec<_>>().join("\n");
        let cfg = ExperimentConfig::parse(&text, None).unwrap();
        let mf = cfg.manifold.unwrap();
        assert!(mf.mu_defaulted);
        assert!((mf.mu - 0.75).abs() < 1e-12);
        assert!(cfg.echo().contains("mu = 0.75  # default"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("[model]\nA = -2\nbogus = 1\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("A = 1\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
        let err = ExperimentConfig::parse("[model]\n[plot]\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
        let err = ExperimentConfig::parse("[model]\nA = 1\nA = 2\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }));
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = TS1.replace("alpha = 1.5", "alpha = 2.5").replace("particles = 2000", "particles = 10");
        let keys: Vec<String> = invalid(&text).into_iter().map(|i| i.key).collect();
        assert!(keys.contains(&"model.alpha".to_string()), "{keys:?}");
        assert!(keys.contains(&"filter.particles".to_string()), "{keys:?}");
        let issues = invalid("[model]\nA = x\n");
        assert!(issues.iter().any(|i| i.key == "model.A" && i.line == Some(2)));
        assert!(issues.iter().any(|i| i.key == "[noise]"));
    }

    #[test]
    fn seed_override_and_echo() {
        let cfg = ExperimentConfig::parse(TS1, Some("99")).unwrap();
        assert_eq!(cfg.run.seed, 99);
        assert_eq!(cfg.run.seed_source, SeedSource::Environment);
        assert!(ExperimentConfig::parse(TS1, Some("-1")).is_err());
        let again = ExperimentConfig::parse(&cfg.echo(), None).unwrap();
        assert_eq!(
            again.echo().replace("seed = 99", "seed = 20240501"),
            ExperimentConfig::parse(TS1, None).unwrap().echo()
        );
    }

    #[test]
    fn selections_and_matrices() {
        let s = parse_selection("\"scaled_sin\", c = 0.5").unwrap();
        assert_eq!(s.name, "scaled_sin");
        assert_eq!(s.param("c"), Some(0.5));
        assert_eq!(s.to_string(), "\"scaled_sin\", c = 0.5");
        let m = parse_matrix("-1, 4; 0, -1").unwrap();
        assert_eq!((m.rows(), m.cols(), m.get(0, 1)), (2, 2, 4.0));
        assert!(parse_matrix("1, 2; 3").is_err());
        assert_eq!(strip_comment("a = \"x#y\" # c"), "a = \"x#y\" ");
    }
}
