//! Run configuration: a flat `section.key = value` text format.
//!
//! ```text
//! # comment
//! grid.n_m = 101
//! rates.delta.kind = polynomial
//! rates.delta.params = 1, 0, 4
//! ```
//!
//! Arrays are comma lists. Unknown keys, duplicates and non-finite numbers
//! are rejected with the offending key and line. Everything except the grid
//! sizes and the eight rate declarations has a default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::discretization::{FcSign, Grid, MapContext, Switches};
use crate::error::{Error, Result};
use crate::model::{
    BivariateRate, InitialData, MaturityMap, ModelParams, Profile, RateFunction, RateSet, Shape,
    Table, Velocity,
};
use crate::picard::Tolerances;

pub const DEFAULT_TOLL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_REFERENCE_FACTOR: f64 = 1e-4;
pub const DEFAULT_H_ODE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_m: usize,
    pub n_t: usize,
    pub h_ode: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSpec {
    pub toll: f64,
    pub max_iter: usize,
    pub reference_factor: f64,
}

impl SolverSpec {
    pub fn tolerances(&self) -> Result<Tolerances> {
        Tolerances::new(self.toll, self.max_iter, self.reference_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub phi: Profile,
    pub psi: Profile,
    pub omega: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionSpec {
    pub trials: usize,
    pub amplitude: f64,
    pub lambda_max: f64,
    pub lambda_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSpec {
    pub refinements: usize,
    pub base_n_m: usize,
    pub base_n_t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    /// Upper bound accepted for the Gompertz rate σ.
    pub sigma_limit: f64,
    pub rates: RateSet,
    pub init: InitSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub seed: u64,
    pub switches: Switches,
    pub contraction: ContractionSpec,
    pub convergence: ConvergenceSpec,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text)?.finish()
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    /// Grid with the configured node counts.
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.params, self.grid.n_m, self.grid.n_t)
    }

    pub fn initial_data(&self, grid: &Grid) -> InitialData {
        InitialData::from_profiles(grid, &self.init.phi, &self.init.psi, &self.init.omega)
    }

    pub fn context_on(&self, grid: Grid) -> Result<MapContext> {
        let init = self.initial_data(&grid);
        MapContext::new(grid, self.rates.clone(), init, self.switches, self.grid.h_ode)
    }

    pub fn context(&self) -> Result<MapContext> {
        self.context_on(self.grid()?)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let p = &self.params;
        kv("model.m_max", num(p.m_max));
        kv("model.tau_lo", num(p.tau_lo));
        kv("model.tau_hi", num(p.tau_hi));
        kv("model.horizon", num(p.horizon));
        kv("model.epsilon", num(p.epsilon));
        kv("model.sigma_limit", num(self.sigma_limit));
        kv("grid.n_m", self.grid.n_m.to_string());
        kv("grid.n_t", self.grid.n_t.to_string());
        kv("grid.h_ode", num(self.grid.h_ode));
        let r = &self.rates;
        for (name, rate) in [("delta", &r.delta), ("gamma", &r.gamma), ("sigma", &r.sigma)] {
            for (k, v) in univariate_entries(rate) {
                kv(&format!("rates.{name}.{k}"), v);
            }
        }
        for (name, rate) in [("beta", &r.beta), ("alpha", &r.alpha)] {
            for (k, v) in bivariate_entries(rate) {
                kv(&format!("rates.{name}.{k}"), v);
            }
        }
        for (name, vel) in [("v", &r.v), ("u", &r.u)] {
            for (k, v) in velocity_entries(vel) {
                kv(&format!("rates.{name}.{k}"), v);
            }
        }
        for (k, v) in map_entries(&r.g) {
            kv(&format!("rates.g.{k}"), v);
        }
        for (name, prof) in [
            ("phi", &self.init.phi),
            ("psi", &self.init.psi),
            ("omega", &self.init.omega),
        ] {
            kv(&format!("init.{name}.amplitude"), num(prof.amplitude));
            kv(&format!("init.{name}.shape"), prof.shape.name().to_string());
            kv(&format!("init.{name}.decay"), num(prof.decay));
        }
        kv("solver.toll", num(self.solver.toll));
        kv("solver.max_iter", self.solver.max_iter.to_string());
        kv("solver.reference_factor", num(self.solver.reference_factor));
        kv("solver.seed", self.seed.to_string());
        kv(
            "switches.omega_scales_integral_term",
            self.switches.omega_scales_integral_term.to_string(),
        );
        kv("switches.fc_sign_convention", self.switches.fc_sign.to_string());
        let c = &self.contraction;
        kv("contraction.trials", c.trials.to_string());
        kv("contraction.amplitude", num(c.amplitude));
        kv("contraction.lambda_max", num(c.lambda_max));
        kv("contraction.lambda_tol", num(c.lambda_tol));
        let v = &self.convergence;
        kv("convergence.refinements", v.refinements.to_string());
        kv("convergence.base_n_m", v.base_n_m.to_string());
        kv("convergence.base_n_t", v.base_n_t.to_string());
        if let Some(dir) = &self.output_dir {
            kv("output.dir", dir.display().to_string());
        }
        out
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

fn univariate_entries(r: &RateFunction) -> Vec<(&'static str, String)> {
    match r {
        RateFunction::Constant(c) => vec![("kind", "constant".into()), ("params", num(*c))],
        RateFunction::Hill {
            amplitude,
            half,
            exponent,
        } => vec![
            ("kind", "hill".into()),
            ("params", list(&[*amplitude, *half, *exponent])),
        ],
        RateFunction::Parabolic { scale, upper } => vec![
            ("kind", "parabolic".into()),
            ("params", list(&[*scale, *upper])),
        ],
        RateFunction::Polynomial(c) => vec![("kind", "polynomial".into()), ("params", list(c))],
        RateFunction::Tabulated(t) => table_entries(t),
    }
}

fn table_entries(t: &Table) -> Vec<(&'static str, String)> {
    vec![
        ("kind", "tabulated".into()),
        ("table_m", list(t.xs())),
        ("table_v", list(t.ys())),
    ]
}

fn bivariate_entries(r: &BivariateRate) -> Vec<(&'static str, String)> {
    let scale = |s: &Option<Vec<f64>>| s.as_ref().map(|c| ("maturity_scale", list(c)));
    let mut out: Vec<(&'static str, String)> = match r {
        BivariateRate::Hill {
            amplitude,
            exponent,
            ..
        } => vec![
            ("kind", "hill".into()),
            ("params", list(&[*amplitude, *exponent])),
        ],
        BivariateRate::Saturating { amplitude, .. } => {
            vec![("kind", "saturating".into()), ("params", num(*amplitude))]
        }
        BivariateRate::Tabulated { ms, xs, values } => vec![
            ("kind", "tabulated".into()),
            ("table_m", list(ms)),
            ("table_x", list(xs)),
            ("table_v", list(values)),
        ],
    };
    match r {
        BivariateRate::Hill { maturity_scale, .. }
        | BivariateRate::Saturating { maturity_scale, .. } => out.extend(scale(maturity_scale)),
        BivariateRate::Tabulated { .. } => {}
    }
    out
}

fn velocity_entries(v: &Velocity) -> Vec<(&'static str, String)> {
    match v {
        Velocity::Parabolic { scale, upper } => vec![
            ("kind", "parabolic".into()),
            ("params", list(&[*scale, *upper])),
        ],
        Velocity::Tabulated(t) => table_entries(t),
    }
}

fn map_entries(g: &MaturityMap) -> Vec<(&'static str, String)> {
    match g {
        MaturityMap::LinearScale(k) => vec![("kind", "linear".into()), ("params", num(*k))],
        MaturityMap::Tabulated { forward, .. } => table_entries(forward),
    }
}

const UNIVARIATE: [&str; 3] = ["delta", "gamma", "sigma"];
const BIVARIATE: [&str; 2] = ["beta", "alpha"];
const VELOCITIES: [&str; 2] = ["v", "u"];
const RATE_FIELDS: [&str; 6] = ["kind", "params", "table_m", "table_x", "table_v", "maturity_scale"];
const PROFILES: [&str; 3] = ["phi", "psi", "omega"];
const PROFILE_FIELDS: [&str; 3] = ["amplitude", "shape", "decay"];
const PLAIN_KEYS: [&str; 22] = [
    "model.m_max",
    "model.tau_lo",
    "model.tau_hi",
    "model.horizon",
    "model.epsilon",
    "model.sigma_limit",
    "grid.n_m",
    "grid.n_t",
    "grid.h_ode",
    "solver.toll",
    "solver.max_iter",
    "solver.reference_factor",
    "solver.seed",
    "switches.omega_scales_integral_term",
    "switches.fc_sign_convention",
    "contraction.trials",
    "contraction.amplitude",
    "contraction.lambda_max",
    "contraction.lambda_tol",
    "convergence.refinements",
    "convergence.base_n_m",
    "convergence.base_n_t",
];

fn is_known_key(key: &str) -> bool {
    if PLAIN_KEYS.contains(&key) || key == "output.dir" {
        return true;
    }
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["rates", name, field] => {
            let known_name = UNIVARIATE.contains(name)
                || BIVARIATE.contains(name)
                || VELOCITIES.contains(name)
                || *name == "g";
            known_name && RATE_FIELDS.contains(field)
        }
        ["init", name, field] => PROFILES.contains(name) && PROFILE_FIELDS.contains(field),
        _ => false,
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Parser {
    entries: BTreeMap<String, Entry>,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::config(line, content, "expected `key = value`")
            })?;
            let key = key.trim().to_string();
            if !is_known_key(&key) {
                return Err(Error::config(line, key, "unknown key"));
            }
            if let Some(prev) = entries.get(&key) {
                let prev: &Entry = prev;
                return Err(Error::config(
                    line,
                    key,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key,
                Entry {
                    line,
                    value: value.trim().to_string(),
                    used: false,
                },
            );
        }
        Ok(Parser { entries })
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_f64(&v).map(Some).map_err(|m| Error::config(line, key, m)),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::config(line, key, format!("expected a nonnegative integer, got `{v}`"))),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn usize_req(&mut self, key: &str) -> Result<usize> {
        self.usize_opt(key)?
            .ok_or_else(|| Error::config(0, key, "missing required key"))
    }

    fn list_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| parse_f64(s.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|m| Error::config(line, key, m)),
        }
    }

    fn list_req(&mut self, key: &str) -> Result<Vec<f64>> {
        self.list_opt(key)?
            .ok_or_else(|| Error::config(0, key, "missing required key"))
    }

    fn string_req(&mut self, key: &str) -> Result<(usize, String)> {
        self.raw(key)
            .ok_or_else(|| Error::config(0, key, "missing required key"))
    }

    /// Parameter list with an exact length, or one of two lengths.
    fn params(&mut self, key: &str, lengths: &[usize]) -> Result<Vec<f64>> {
        let line = self.line_of(key);
        let v = self.list_req(key)?;
        if lengths.contains(&v.len()) {
            Ok(v)
        } else {
            Err(Error::config(
                line,
                key,
                format!("expected {lengths:?} values, got {}", v.len()),
            ))
        }
    }

    fn table(&mut self, prefix: &str) -> Result<Table> {
        let line = self.line_of(&format!("{prefix}.table_m"));
        let m = self.list_req(&format!("{prefix}.table_m"))?;
        let v = self.list_req(&format!("{prefix}.table_v"))?;
        Table::new(m, v).map_err(|e| Error::config(line, format!("{prefix}.table_m"), e.to_string()))
    }

    fn univariate(&mut self, name: &str) -> Result<RateFunction> {
        let prefix = format!("rates.{name}");
        let pk = format!("{prefix}.params");
        let (line, kind) = self.string_req(&format!("{prefix}.kind"))?;
        Ok(match kind.as_str() {
            "constant" => RateFunction::Constant(self.params(&pk, &[1])?[0]),
            "hill" => {
                let p = self.params(&pk, &[3])?;
                RateFunction::Hill {
                    amplitude: p[0],
                    half: p[1],
                    exponent: p[2],
                }
            }
            "parabolic" => {
                let p = self.params(&pk, &[2])?;
                RateFunction::Parabolic {
                    scale: p[0],
                    upper: p[1],
                }
            }
            "polynomial" => RateFunction::Polynomial(self.list_req(&pk)?),
            "tabulated" => RateFunction::Tabulated(self.table(&prefix)?),
            other => {
                return Err(Error::config(
                    line,
                    format!("{prefix}.kind"),
                    format!("unknown kind `{other}` (constant, hill, parabolic, polynomial, tabulated)"),
                ))
            }
        })
    }

    fn bivariate(&mut self, name: &str) -> Result<BivariateRate> {
        let prefix = format!("rates.{name}");
        let pk = format!("{prefix}.params");
        let (line, kind) = self.string_req(&format!("{prefix}.kind"))?;
        let scale = self.list_opt(&format!("{prefix}.maturity_scale"))?;
        Ok(match kind.as_str() {
            "hill" => {
                let p = self.params(&pk, &[2])?;
                BivariateRate::Hill {
                    amplitude: p[0],
                    exponent: p[1],
                    maturity_scale: scale,
                }
            }
            "saturating" => BivariateRate::Saturating {
                amplitude: self.params(&pk, &[1])?[0],
                maturity_scale: scale,
            },
            "zero" => BivariateRate::zero(),
            "tabulated" => {
                let tline = self.line_of(&format!("{prefix}.table_m"));
                let ms = self.list_req(&format!("{prefix}.table_m"))?;
                let xs = self.list_req(&format!("{prefix}.table_x"))?;
                let vs = self.list_req(&format!("{prefix}.table_v"))?;
                BivariateRate::tabulated(ms, xs, vs)
                    .map_err(|e| Error::config(tline, format!("{prefix}.table_m"), e.to_string()))?
            }
            other => {
                return Err(Error::config(
                    line,
                    format!("{prefix}.kind"),
                    format!("unknown kind `{other}` (hill, saturating, zero, tabulated)"),
                ))
            }
        })
    }

    fn velocity(&mut self, name: &str, m_max: f64) -> Result<Velocity> {
        let prefix = format!("rates.{name}");
        let pk = format!("{prefix}.params");
        let (line, kind) = self.string_req(&format!("{prefix}.kind"))?;
        Ok(match kind.as_str() {
            "parabolic" => {
                let p = self.params(&pk, &[1, 2])?;
                Velocity::parabolic(p[0], p.get(1).copied().unwrap_or(m_max))
            }
            "tabulated" => Velocity::Tabulated(self.table(&prefix)?),
            other => {
                return Err(Error::config(
                    line,
                    format!("{prefix}.kind"),
                    format!("unknown kind `{other}` (parabolic, tabulated)"),
                ))
            }
        })
    }

    fn maturity_map(&mut self) -> Result<MaturityMap> {
        let (line, kind) = self.string_req("rates.g.kind")?;
        Ok(match kind.as_str() {
            "linear" => MaturityMap::linear(self.params("rates.g.params", &[1])?[0]),
            "tabulated" => {
                let t = self.table("rates.g")?;
                let tline = self.line_of("rates.g.table_v");
                MaturityMap::tabulated(t)
                    .map_err(|e| Error::config(tline, "rates.g.table_v", e.to_string()))?
            }
            other => {
                return Err(Error::config(
                    line,
                    "rates.g.kind",
                    format!("unknown kind `{other}` (linear, tabulated)"),
                ))
            }
        })
    }

    fn profile(&mut self, name: &str) -> Result<Profile> {
        let prefix = format!("init.{name}");
        let amplitude = self.f64_or(&format!("{prefix}.amplitude"), 0.0)?;
        let decay = self.f64_or(&format!("{prefix}.decay"), 0.0)?;
        let shape = match self.raw(&format!("{prefix}.shape")) {
            None => Shape::Constant,
            Some((line, s)) => Shape::from_name(&s).ok_or_else(|| {
                Error::config(
                    line,
                    format!("{prefix}.shape"),
                    format!("unknown shape `{s}` (constant, parabolic, cosine)"),
                )
            })?,
        };
        Ok(Profile::new(amplitude, shape, decay))
    }

    fn finish(mut self) -> Result<RunConfig> {
        let m_max = self.f64_or("model.m_max", 1.0)?;
        let tau_lo = self.f64_or("model.tau_lo", 0.4)?;
        let tau_hi = self.f64_or("model.tau_hi", 1.0)?;
        let horizon = self.f64_or("model.horizon", 5.0 * tau_hi)?;
        let epsilon = self.f64_or("model.epsilon", 1.0)?;
        let params = ModelParams::new(m_max, tau_lo, tau_hi, horizon, epsilon)
            .map_err(|e| Error::config(self.line_of("model.tau_hi"), "model", e.to_string()))?;
        let sigma_limit = self.f64_or("model.sigma_limit", 0.1)?;

        let grid = GridSpec {
            n_m: self.usize_req("grid.n_m")?,
            n_t: self.usize_req("grid.n_t")?,
            h_ode: self.f64_or("grid.h_ode", DEFAULT_H_ODE)?,
        };
        if grid.n_m < 3 || grid.n_t < 3 {
            return Err(Error::config(
                self.line_of("grid.n_m").max(self.line_of("grid.n_t")),
                "grid",
                "need at least 3 nodes per axis",
            ));
        }
        if !(grid.h_ode > 0.0) {
            return Err(Error::config(self.line_of("grid.h_ode"), "grid.h_ode", "must be positive"));
        }

        let rates = RateSet {
            delta: self.univariate("delta")?,
            gamma: self.univariate("gamma")?,
            sigma: self.univariate("sigma")?,
            beta: self.bivariate("beta")?,
            alpha: self.bivariate("alpha")?,
            v: self.velocity("v", m_max)?,
            u: self.velocity("u", m_max)?,
            g: self.maturity_map()?,
        };
        rates
            .check()
            .map_err(|e| Error::config(0, "rates", e.to_string()))?;

        let init = InitSpec {
            phi: self.profile("phi")?,
            psi: self.profile("psi")?,
            omega: self.profile("omega")?,
        };

        let solver = SolverSpec {
            toll: self.f64_or("solver.toll", DEFAULT_TOLL)?,
            max_iter: self.usize_or("solver.max_iter", DEFAULT_MAX_ITER)?,
            reference_factor: self.f64_or("solver.reference_factor", DEFAULT_REFERENCE_FACTOR)?,
        };
        solver
            .tolerances()
            .map_err(|e| Error::config(self.line_of("solver.toll"), "solver", e.to_string()))?;
        let seed = match self.raw("solver.seed") {
            None => DEFAULT_SEED,
            Some((line, v)) => v.parse::<u64>().map_err(|_| {
                Error::config(line, "solver.seed", format!("expected an unsigned integer, got `{v}`"))
            })?,
        };

        let omega_scales_integral_term = match self.raw("switches.omega_scales_integral_term") {
            None => true,
            Some((line, v)) => v.parse::<bool>().map_err(|_| {
                Error::config(
                    line,
                    "switches.omega_scales_integral_term",
                    format!("expected true or false, got `{v}`"),
                )
            })?,
        };
        let fc_sign = match self.raw("switches.fc_sign_convention") {
            None => FcSign::Minus,
            Some((line, v)) => v
                .parse::<FcSign>()
                .map_err(|m| Error::config(line, "switches.fc_sign_convention", m))?,
        };

        let contraction = ContractionSpec {
            trials: self.usize_or("contraction.trials", 100)?,
            amplitude: self.f64_or("contraction.amplitude", 1.0)?,
            lambda_max: self.f64_or("contraction.lambda_max", 200.0)?,
            lambda_tol: self.f64_or("contraction.lambda_tol", 0.5)?,
        };
        if contraction.trials < 1 || !(contraction.amplitude > 0.0) || !(contraction.lambda_tol > 0.0) {
            return Err(Error::config(
                self.line_of("contraction.trials"),
                "contraction",
                "trials >= 1, amplitude > 0 and lambda_tol > 0 required",
            ));
        }
        let convergence = ConvergenceSpec {
            refinements: self.usize_or("convergence.refinements", 3)?,
            base_n_m: self.usize_or("convergence.base_n_m", 21)?,
            base_n_t: self.usize_or("convergence.base_n_t", 51)?,
        };
        let output_dir = self.raw("output.dir").map(|(_, v)| PathBuf::from(v));

        if let Some((key, e)) = self.entries.iter().find(|(_, e)| !e.used) {
            return Err(Error::config(e.line, key.clone(), "key not used by this configuration"));
        }

        Ok(RunConfig {
            params,
            sigma_limit,
            rates,
            init,
            grid,
            solver,
            seed,
            switches: Switches {
                omega_scales_integral_term,
                fc_sign,
            },
            contraction,
            convergence,
            output_dir,
        })
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("value {v} is not finite")),
        Err(_) => Err(format!("expected a number, got `{s}`")),
    }
}

/// The stock configuration used by the examples and tests.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.cfg");
