//! Browser bindings: Gompertz curves, characteristic curves and a small
//! end-to-end simulation of the stock configuration.

use cellflow_core::characteristics::FlowSolver;
use cellflow_core::closed_forms::{gompertz, GompertzParams};
use cellflow_core::config::{RunConfig, DEFAULT_CONFIG};
use cellflow_core::discretization::Stage;
use cellflow_core::model::{BivariateRate, Velocity};
use cellflow_core::picard::solve_system;
use cellflow_core::runner::stability_report;
use cellflow_core::stability::domain_trajectory;
use cellflow_core::{Error, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Gompertz damaged density at `points` uniform times on `[0, t_end]`.
pub fn gompertz_samples(c0: f64, a: f64, sigma: f64, t_end: f64, points: usize) -> Result<Vec<f64>> {
    let p = GompertzParams::new(c0, a, sigma)?;
    let n = points.max(2);
    Ok((0..n)
        .map(|k| gompertz(&p, t_end * k as f64 / (n - 1) as f64))
        .collect())
}

/// Backward characteristics of `v(m) = scale m (1 - m)` from `curves`
/// evenly spaced maturities, each sampled at `points` times on
/// `[-duration, 0]`. Row-major, one row per curve.
pub fn characteristic_samples(scale: f64, duration: f64, curves: usize, points: usize) -> Result<Vec<f64>> {
    let solver = FlowSolver::new(Velocity::parabolic(scale, 1.0), 1.0, 1e-3)?;
    let mut out = Vec::with_capacity(curves * points);
    for c in 0..curves {
        let m = (c as f64 + 0.5) / curves as f64;
        out.extend(solver.flow_path(m, -duration, points.max(2))?.iter().map(|&(_, y)| y));
    }
    Ok(out)
}

/// Outcome of [`simulate`].
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Simulation {
    times: Vec<f64>,
    sups: [Vec<f64>; 3],
    stem_rates: Vec<f64>,
    index_a: f64,
    verdict: String,
}

#[wasm_bindgen]
impl Simulation {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// Per-time maximum over the stability domain; `which` is 0, 1, 2 for
    /// N, P, C.
    pub fn trajectory(&self, which: usize) -> Vec<f64> {
        self.sups.get(which).cloned().unwrap_or_default()
    }

    /// Picard rates `r^k` of the stem solve.
    pub fn stem_rates(&self) -> Vec<f64> {
        self.stem_rates.clone()
    }

    pub fn index_a(&self) -> f64 {
        self.index_a
    }

    pub fn verdict(&self) -> String {
        self.verdict.clone()
    }
}

/// Stock configuration with the division amplitude and grid replaced.
pub fn run_stock(beta_amplitude: f64, n_m: usize, n_t: usize) -> Result<Simulation> {
    let mut cfg = RunConfig::parse(DEFAULT_CONFIG)?;
    cfg.rates.beta = BivariateRate::hill(beta_amplitude, 2.0);
    cfg.grid.n_m = n_m;
    cfg.grid.n_t = n_t;
    let ctx = cfg.context()?;
    let solution = solve_system(&ctx, &cfg.solver.tolerances()?)?;
    if !solution.all_converged() {
        return Err(Error::Numeric("Picard iteration did not converge".into()));
    }
    let grid = ctx.grid();
    let sup = |s: Stage| {
        let field = &solution.stage(s).expect("all stages solved").field;
        domain_trajectory(field, grid, &cfg.rates.g)
    };
    let report = stability_report(&ctx, &cfg, &solution)?;
    Ok(Simulation {
        times: grid.times(),
        sups: [sup(Stage::N), sup(Stage::P), sup(Stage::C)],
        stem_rates: solution.stages[0].trace.defined_rates(),
        index_a: report.index.index_a,
        verdict: report.verdict.label().to_string(),
    })
}

#[wasm_bindgen(js_name = gompertzCurve)]
pub fn gompertz_curve(c0: f64, a: f64, sigma: f64, t_end: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    gompertz_samples(c0, a, sigma, t_end, points).map_err(js)
}

#[wasm_bindgen(js_name = characteristicCurves)]
pub fn characteristic_curves(scale: f64, duration: f64, curves: usize, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    characteristic_samples(scale, duration, curves, points).map_err(js)
}

#[wasm_bindgen]
pub fn simulate(beta_amplitude: f64, n_m: usize, n_t: usize) -> std::result::Result<Simulation, JsError> {
    run_stock(beta_amplitude, n_m, n_t).map_err(js)
}
