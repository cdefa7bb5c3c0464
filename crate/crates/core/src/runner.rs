//! Subcommand drivers and their on-disk outputs.
//!
//! Every file is written to a temporary sibling and renamed into place.
//! Numbers use 17 significant digits and LF line endings, so identical runs
//! give byte-identical output trees.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::discretization::{Field, Grid, MapContext, Stage, StageMap};
use crate::error::{Error, Result};
use crate::model::{validate_assumptions, ValidationReport, LIPSCHITZ_SAMPLES};
use crate::picard::{
    contraction_profiles, minimal_contractive_lambda, solve_system, LambdaSearch, PicardTrace,
    SystemSolution,
};
use crate::stability::{domain_nodes, fit_population, stability_index, StabilityReport};

/// Weight rates at which the contraction ratio is tabulated.
pub const CONTRACTION_LAMBDAS: [f64; 5] = [0.0, 25.0, 50.0, 100.0, 200.0];

/// Process exit status of a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Fault,
    NotConverged,
    NotCertified,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Fault => 1,
            Status::NotConverged => 2,
            Status::NotCertified => 3,
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::domain(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Header `t,<m nodes>`, then one row per time node.
pub fn field_csv(field: &Field, grid: &Grid) -> String {
    let mut out = String::from("t");
    for m in grid.maturities() {
        out.push(',');
        out.push_str(&fmt_num(m));
    }
    out.push('\n');
    for j in 0..field.rows() {
        out.push_str(&fmt_num(grid.t(j)));
        for v in field.row(j) {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// Columns `k,e_k,r_k`; `r_k` is empty where undefined.
pub fn trace_csv(trace: &PicardTrace) -> String {
    let mut out = String::from("k,e_k,r_k\n");
    for (k, e) in trace.errors.iter().enumerate() {
        let r = trace.rates[k].map(fmt_num).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", k + 1, fmt_num(*e), r);
    }
    out
}

/// Parse a field CSV written by [`field_csv`] back into its values.
pub fn read_field_csv(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::domain("empty CSV"))?;
    let cols = header.split(',').count().saturating_sub(1);
    let mut values = Vec::new();
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').skip(1).collect();
        if cells.len() != cols {
            return Err(Error::domain(format!("row {} has {} cells", rows + 1, cells.len())));
        }
        for c in cells {
            values.push(
                c.parse::<f64>()
                    .map_err(|_| Error::domain(format!("bad number `{c}`")))?,
            );
        }
        rows += 1;
    }
    Field::from_values(rows, cols, values)
}

/// Flat `key = value` description of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut m = Manifest::default();
        m.push("command", command);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("config_sha256", config_digest(cfg));
        m.push("seed", cfg.seed);
        m.push(
            "switches.omega_scales_integral_term",
            cfg.switches.omega_scales_integral_term,
        );
        m.push("switches.fc_sign_convention", cfg.switches.fc_sign);
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// SHA-256 of the canonical config text.
pub fn config_digest(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.to_text().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn record_solution(manifest: &mut Manifest, sol: &SystemSolution) {
    for stage in Stage::ALL {
        match sol.stage(stage) {
            Some(s) => {
                manifest.push(format!("{stage}.converged"), s.trace.converged);
                manifest.push(format!("{stage}.iterations"), s.trace.iterations);
                let last = s.trace.increments.last().copied().unwrap_or(f64::NAN);
                manifest.push(format!("{stage}.last_increment"), fmt_num(last));
            }
            None => manifest.push(format!("{stage}.converged"), "skipped"),
        }
    }
}

/// Output directory: the override, else the config's, else `out`.
pub fn output_dir(cfg: &RunConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn validation_text(report: &ValidationReport) -> String {
    let mut out = String::new();
    for e in &report.entries {
        let _ = writeln!(out, "{} = {}", e.name, if e.passed { "pass" } else { "fail" });
        if let Some(w) = &e.witness {
            let _ = writeln!(out, "{}.witness_m = {}", e.name, fmt_num(w.m));
            if let Some(o) = w.other {
                let _ = writeln!(out, "{}.witness_other = {}", e.name, fmt_num(o));
            }
            let _ = writeln!(out, "{}.witness_value = {}", e.name, fmt_num(w.value));
        }
    }
    let _ = writeln!(out, "k_b = {}", fmt_num(report.k_b));
    let _ = writeln!(out, "k_a = {}", fmt_num(report.k_a));
    out
}

/// Check the modelling assumptions. Fault status when any check fails.
pub fn run_validate(cfg: &RunConfig, out: &Path) -> Result<(ValidationReport, Status)> {
    let grid = cfg.grid()?;
    let init = cfg.initial_data(&grid);
    let report = validate_assumptions(&cfg.params, &cfg.rates, &init, cfg.sigma_limit);
    ensure_dir(out)?;
    write_atomic(&out.join("validation.txt"), &validation_text(&report))?;
    let mut manifest = Manifest::new("validate", cfg);
    manifest.push("validation.passed", report.passed());
    write_atomic(&out.join("manifest.txt"), &manifest.to_text())?;
    let status = if report.passed() {
        Status::Success
    } else {
        Status::Fault
    };
    Ok((report, status))
}

/// Fields and traces of one solved system.
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub context: MapContext,
    pub solution: SystemSolution,
    pub status: Status,
}

fn write_solution(out: &Path, grid: &Grid, sol: &SystemSolution) -> Result<()> {
    for s in &sol.stages {
        write_atomic(&out.join(format!("{}.csv", s.which)), &field_csv(&s.field, grid))?;
        write_atomic(
            &out.join(format!("trace_{}.csv", s.which)),
            &trace_csv(&s.trace),
        )?;
    }
    Ok(())
}

/// Solve N, P, C and write `N.csv`, `P.csv`, `C.csv`, the traces and the
/// manifest. Files are written even when a stage fails to converge.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateOutcome> {
    let ctx = cfg.context()?;
    let tol = cfg.solver.tolerances()?;
    let solution = solve_system(&ctx, &tol)?;
    ensure_dir(out)?;
    write_solution(out, ctx.grid(), &solution)?;
    let mut manifest = Manifest::new("simulate", cfg);
    manifest.push("grid.n_m", ctx.grid().n_m());
    manifest.push("grid.n_t", ctx.grid().n_t());
    record_solution(&mut manifest, &solution);
    for (k, w) in ctx.warnings().iter().enumerate() {
        manifest.push(format!("warning.{k}"), w);
    }
    write_atomic(&out.join("manifest.txt"), &manifest.to_text())?;
    write_atomic(&out.join("config.cfg"), &cfg.to_text())?;
    let status = if solution.all_converged() {
        Status::Success
    } else {
        Status::NotConverged
    };
    Ok(SimulateOutcome {
        context: ctx,
        solution,
        status,
    })
}

/// Contraction estimate of the stem map.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSummary {
    pub search: LambdaSearch,
    /// `(λ, sup ratio)` at [`CONTRACTION_LAMBDAS`].
    pub table: Vec<(f64, f64)>,
}

pub fn contraction_summary(ctx: &MapContext, cfg: &RunConfig) -> Result<ContractionSummary> {
    let c = &cfg.contraction;
    let profiles = contraction_profiles(
        &StageMap::n(ctx),
        ctx.grid(),
        c.trials,
        c.amplitude,
        cfg.seed,
    )?;
    let search = minimal_contractive_lambda(&profiles, c.lambda_max, c.lambda_tol);
    let table = CONTRACTION_LAMBDAS
        .iter()
        .map(|&l| (l, profiles.sup_ratio(l)))
        .collect();
    Ok(ContractionSummary { search, table })
}

/// Header and single row of `stability_report.csv`.
pub fn stability_csv(report: &StabilityReport) -> String {
    let ix = &report.index;
    format!(
        "i,e,k_b,k_a,varsigma_bar,index_a,verdict\n{},{},{},{},{},{},{}\n",
        fmt_num(ix.i),
        fmt_num(ix.e),
        fmt_num(ix.k_b),
        fmt_num(ix.k_a),
        fmt_num(ix.varsigma_bar),
        fmt_num(ix.index_a),
        report.verdict.label()
    )
}

/// Columns `population,c,d,r_squared,points,status`.
pub fn decay_fit_csv(report: &StabilityReport) -> String {
    let mut out = String::from("population,c,d,r_squared,points,status\n");
    for (stage, fit) in &report.fits {
        match fit {
            Ok(f) => {
                let _ = writeln!(
                    out,
                    "{stage},{},{},{},{},{}",
                    fmt_num(f.c),
                    fmt_num(f.d),
                    fmt_num(f.r_squared),
                    f.points,
                    if f.is_exponential_decay() { "decay" } else { "no-decay" }
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{stage},,,,0,\"{}\"", e.replace('"', "'"));
            }
        }
    }
    out
}

/// Flat `key = value` block of a stability report.
pub fn stability_text(report: &StabilityReport, contraction: &ContractionSummary) -> String {
    let ix = &report.index;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("i", fmt_num(ix.i));
    kv("e", fmt_num(ix.e));
    kv("k_b", fmt_num(ix.k_b));
    kv("k_a", fmt_num(ix.k_a));
    kv("varsigma_bar", fmt_num(ix.varsigma_bar));
    kv("index_a", fmt_num(ix.index_a));
    for (stage, fit) in &report.fits {
        match fit {
            Ok(f) => {
                kv(&format!("fit.{stage}.c"), fmt_num(f.c));
                kv(&format!("fit.{stage}.d"), fmt_num(f.d));
                kv(&format!("fit.{stage}.r_squared"), fmt_num(f.r_squared));
            }
            Err(e) => kv(&format!("fit.{stage}.error"), e.clone()),
        }
    }
    match contraction.search {
        LambdaSearch::Contractive { lambda, sup_ratio } => {
            kv("contraction.lambda_star", fmt_num(lambda));
            kv("contraction.sup_ratio", fmt_num(sup_ratio));
        }
        LambdaSearch::NotContractive {
            lambda_max,
            sup_ratio,
        } => {
            kv("contraction.lambda_star", "none".into());
            kv("contraction.ratio_at_lambda_max", fmt_num(sup_ratio));
            kv("contraction.lambda_max", fmt_num(lambda_max));
        }
    }
    kv("verdict", report.verdict.to_string());
    for (k, w) in report.warnings.iter().enumerate() {
        kv(&format!("warning.{k}"), w.clone());
    }
    out
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome {
    pub report: Option<StabilityReport>,
    pub contraction: Option<ContractionSummary>,
    pub status: Status,
}

/// Solve, compute the index and decay fits, estimate contraction, and write
/// `stability_report.csv`, `stability_report.txt`, `decay_fit.csv` and
/// `contraction.csv`. Success only when the verdict is stable-certified.
pub fn run_stability(cfg: &RunConfig, out: &Path) -> Result<StabilityOutcome> {
    let ctx = cfg.context()?;
    let tol = cfg.solver.tolerances()?;
    let solution = solve_system(&ctx, &tol)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new("stability", cfg);
    record_solution(&mut manifest, &solution);
    if !solution.all_converged() {
        write_atomic(&out.join("manifest.txt"), &manifest.to_text())?;
        return Ok(StabilityOutcome {
            report: None,
            contraction: None,
            status: Status::NotConverged,
        });
    }
    let report = stability_report(&ctx, cfg, &solution)?;
    let contraction = contraction_summary(&ctx, cfg)?;

    write_atomic(&out.join("stability_report.csv"), &stability_csv(&report))?;
    write_atomic(
        &out.join("stability_report.txt"),
        &stability_text(&report, &contraction),
    )?;
    write_atomic(&out.join("decay_fit.csv"), &decay_fit_csv(&report))?;
    let mut table = String::from("lambda,sup_ratio\n");
    for (l, r) in &contraction.table {
        let _ = writeln!(table, "{},{}", fmt_num(*l), fmt_num(*r));
    }
    write_atomic(&out.join("contraction.csv"), &table)?;
    manifest.push("verdict", report.verdict.label());
    write_atomic(&out.join("manifest.txt"), &manifest.to_text())?;

    let status = if report.verdict.is_certified() {
        Status::Success
    } else {
        Status::NotCertified
    };
    Ok(StabilityOutcome {
        report: Some(report),
        contraction: Some(contraction),
        status,
    })
}

/// Index and decay fits for a converged solution.
pub fn stability_report(
    ctx: &MapContext,
    cfg: &RunConfig,
    solution: &SystemSolution,
) -> Result<StabilityReport> {
    let grid = ctx.grid();
    let index = stability_index(
        &cfg.rates,
        grid,
        ctx.kernels(),
        cfg.params.epsilon,
        LIPSCHITZ_SAMPLES,
    )?;
    let fits = solution
        .stages
        .iter()
        .map(|s| (s.which, fit_population(&s.field, grid, &cfg.rates.g)))
        .collect();
    let mut report = StabilityReport::build(index, fits);
    report.warnings.extend(ctx.warnings().iter().cloned());
    Ok(report)
}

/// One row of the self-convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Relative sup error against the finest run.
    pub error: f64,
    /// `log2` of successive differences between neighbouring levels.
    pub observed_order: Option<f64>,
}

/// Relative sup distance of `coarse` from `fine` on the coarse grid's
/// stability-domain nodes, maximized over N, P, C.
fn level_distance(
    coarse: &SystemSolution,
    coarse_grid: &Grid,
    fine: &SystemSolution,
    step: usize,
    cfg: &RunConfig,
) -> Result<f64> {
    let cols = domain_nodes(coarse_grid, &cfg.rates.g);
    let mut worst = 0.0_f64;
    for stage in Stage::ALL {
        let (a, b) = match (coarse.stage(stage), fine.stage(stage)) {
            (Some(a), Some(b)) => (&a.field, b.field.restrict(step)),
            _ => return Err(Error::numeric(format!("stage {stage} missing"))),
        };
        if !a.same_shape(&b) {
            return Err(Error::domain("refinement levels are not nested"));
        }
        let mut diff = 0.0_f64;
        let mut scale = 0.0_f64;
        for j in 0..a.rows() {
            for i in 0..cols {
                diff = diff.max((a.get(j, i) - b.get(j, i)).abs());
                scale = scale.max(b.get(j, i).abs());
            }
        }
        let rel = if scale > 0.0 { diff / scale } else { diff };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Nested refinement study: levels `0..refinements` from the base grid, each
/// halving `h_t` and `h_m`, plus one finer level as the reference.
pub fn convergence_study(cfg: &RunConfig) -> Result<(Vec<ConvergenceRow>, bool)> {
    let levels = cfg.convergence.refinements;
    if levels < 3 {
        return Err(Error::Invalid(format!(
            "convergence needs at least 3 refinements, got {levels}"
        )));
    }
    let tol = cfg.solver.tolerances()?;
    let mut grid = Grid::new(
        &cfg.params,
        cfg.convergence.base_n_m,
        cfg.convergence.base_n_t,
    )?;
    let mut runs = Vec::with_capacity(levels + 1);
    let mut converged = true;
    for _ in 0..=levels {
        let ctx = cfg.context_on(grid.clone())?;
        let sol = solve_system(&ctx, &tol)?;
        converged &= sol.all_converged();
        if !sol.all_converged() {
            return Ok((Vec::new(), false));
        }
        let next = grid.refined();
        runs.push((grid, sol));
        grid = next;
    }
    let (_, fine) = runs.last().expect("at least one level");
    let mut rows = Vec::with_capacity(levels);
    let mut diffs = Vec::with_capacity(levels);
    for k in 0..levels {
        let (g, s) = &runs[k];
        let error = level_distance(s, g, fine, 1 << (levels - k), cfg)?;
        let (_, next) = &runs[k + 1];
        diffs.push(level_distance(s, g, next, 2, cfg)?);
        let observed_order = (k > 0 && diffs[k] > 0.0 && diffs[k - 1] > 0.0)
            .then(|| (diffs[k - 1] / diffs[k]).log2());
        rows.push(ConvergenceRow {
            h: g.h_t(),
            error,
            observed_order,
        });
    }
    Ok((rows, converged))
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("h,error,observed_order\n");
    for r in rows {
        let order = r.observed_order.map(fmt_num).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", fmt_num(r.h), fmt_num(r.error), order);
    }
    out
}

/// Run the refinement study and write `convergence.csv`.
pub fn run_convergence(cfg: &RunConfig, out: &Path) -> Result<(Vec<ConvergenceRow>, Status)> {
    let (rows, converged) = convergence_study(cfg)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new("convergence", cfg);
    manifest.push("refinements", cfg.convergence.refinements);
    manifest.push("converged", converged);
    write_atomic(&out.join("manifest.txt"), &manifest.to_text())?;
    if !converged {
        return Ok((rows, Status::NotConverged));
    }
    write_atomic(&out.join("convergence.csv"), &convergence_csv(&rows))?;
    Ok((rows, Status::Success))
}
