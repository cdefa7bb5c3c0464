//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! with the measured quantities, then asserts.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use cellflow_core::characteristics::FlowSolver;
use cellflow_core::closed_forms::{attenuation, gompertz, GompertzParams};
use cellflow_core::config::{RunConfig, DEFAULT_CONFIG};
use cellflow_core::discretization::{trapezoid, Stage, StageMap};
use cellflow_core::model::{RateFunction, Velocity};
use cellflow_core::picard::{contraction_profiles, minimal_contractive_lambda, solve_system};
use cellflow_core::runner::{read_field_csv, run_simulate, stability_report};
use cellflow_core::stability::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(index: usize, name: &str, pass: bool, detail: &str, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    println!(
        "acceptance {index}/9 {name}: {} ({detail}; {:.2}s of {:.0}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    ok
}

fn stock() -> RunConfig {
    RunConfig::parse(DEFAULT_CONFIG).expect("stock config parses")
}

fn rk4_gompertz(c0: f64, a: f64, sigma: f64, t_end: f64, h: f64) -> Vec<(f64, f64)> {
    let f = |c: f64| a * c - sigma * c * c.ln();
    let steps = (t_end / h).round() as usize;
    let mut c = c0;
    let mut out = vec![(0.0, c0)];
    for k in 0..steps {
        let k1 = f(c);
        let k2 = f(c + 0.5 * h * k1);
        let k3 = f(c + 0.5 * h * k2);
        let k4 = f(c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (k + 1) % 1000 == 0 {
            out.push(((k + 1) as f64 * h, c));
        }
    }
    out
}

#[test]
fn gompertz_closed_form_matches_rk4() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let c0 = rng.random_range(0.01..0.99);
        let a = rng.random_range(-1.0..=1.0);
        let sigma = rng.random_range(0.001..=0.1);
        let p = GompertzParams::new(c0, a, sigma).unwrap();
        for (t, c) in rk4_gompertz(c0, a, sigma, 10.0, 1e-4) {
            worst = worst.max((gompertz(&p, t) - c).abs() / c.abs());
        }
    }
    let ok = verdict(
        1,
        "gompertz closed form vs RK4",
        worst < 1e-6,
        &format!("max relative error {worst:.3e}"),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn trapezoid_is_second_order() {
    let start = Instant::now();
    let composite = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize| {
        let h = (hi - lo) / n as f64;
        let ys: Vec<f64> = (0..=n).map(|k| f(lo + k as f64 * h)).collect();
        trapezoid(&ys, h).unwrap()
    };
    let levels = [8, 16, 32, 64];
    let square: Vec<f64> = levels
        .iter()
        .map(|&n| (composite(&|x| x * x, 0.0, 1.0, n) - 1.0 / 3.0).abs())
        .collect();
    let sine: Vec<f64> = levels
        .iter()
        .map(|&n| (composite(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, n) - 2.0).abs())
        .collect();

    let solver = FlowSolver::new(Velocity::parabolic(2.0, 1.0), 1.0, 1e-4).unwrap();
    let loss = RateFunction::Polynomial(vec![0.1, 0.0, 4.0]);
    let path = |nodes: usize| attenuation(&loss, &solver, 0.8, 1.5, nodes).unwrap().ln();
    let reference = path(8193);
    let kernel: Vec<f64> = levels
        .iter()
        .map(|&n| (path(n + 1) - reference).abs())
        .collect();

    let mut all = Vec::new();
    for (name, errs) in [("x^2", &square), ("sin", &sine), ("path integrand", &kernel)] {
        let o = orders(errs);
        all.push((name, o));
    }
    let pass = all
        .iter()
        .all(|(_, o)| o.len() == 3 && o.iter().all(|p| (p - 2.0).abs() <= 0.1));
    let detail = all
        .iter()
        .map(|(n, o)| format!("{n}: {}", o.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join("/")))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = verdict(2, "trapezoid order", pass, &detail, start.elapsed(), Duration::from_secs(5));
    assert!(ok);
}

/// `m' = k m (1 - m)` started at `m` and run for time `s` (any sign).
fn logistic(m: f64, k: f64, s: f64) -> f64 {
    let e = (k * s).exp();
    m * e / (1.0 - m + m * e)
}

#[test]
fn characteristic_flow_accuracy() {
    let start = Instant::now();
    let k = 2.0;
    let solver = FlowSolver::new(Velocity::parabolic(k, 1.0), 1.0, 1e-3).unwrap();

    let mut closed = 0.0_f64;
    for i in 1..20 {
        let m = i as f64 / 20.0;
        for s in [-0.25, -0.5, -1.0, -2.0, -3.7] {
            closed = closed.max((solver.flow(m, s).unwrap() - logistic(m, k, s)).abs());
        }
    }

    let mut semigroup = 0.0_f64;
    for i in 0..20 {
        let m = 0.05 + 0.9 * i as f64 / 19.0;
        for j in 0..20 {
            let s1 = -0.1 - 0.1 * j as f64;
            let s2 = -0.35;
            let two = solver.flow(solver.flow(m, s1).unwrap(), s2).unwrap();
            semigroup = semigroup.max((two - solver.flow(m, s1 + s2).unwrap()).abs());
        }
    }

    let errors: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let coarse = FlowSolver::new(Velocity::parabolic(k, 1.0), 1.0, h).unwrap();
            (coarse.flow(0.7, -2.0).unwrap() - logistic(0.7, k, -2.0)).abs()
        })
        .collect();
    let order = orders(&errors).into_iter().fold(f64::INFINITY, f64::min);

    let pass = closed < 1e-8 && semigroup < 1e-7 && order >= 3.5;
    let ok = verdict(
        3,
        "characteristic flow",
        pass,
        &format!("closed-form error {closed:.2e}, semigroup defect {semigroup:.2e}, RK4 order {order:.3}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

/// `(max - min) / max` of the last five defined rates.
fn spread(rates: &[f64]) -> Option<f64> {
    if rates.len() < 5 {
        return None;
    }
    let last = &rates[rates.len() - 5..];
    let hi = last.iter().copied().fold(f64::MIN, f64::max);
    let lo = last.iter().copied().fold(f64::MAX, f64::min);
    Some((hi - lo) / hi)
}

#[test]
fn picard_rate_is_geometric_on_stock_config() {
    let start = Instant::now();
    let cfg = stock();
    let ctx = cfg.context().unwrap();
    let sol = solve_system(&ctx, &cfg.solver.tolerances().unwrap()).unwrap();
    let elapsed = start.elapsed();

    let mut pass = sol.all_converged() && cfg.grid.n_m == 101 && cfg.grid.n_t == 201;
    let mut parts = Vec::new();
    for s in &sol.stages {
        let rates = s.trace.defined_rates();
        let terminal = s.trace.terminal_rate();
        match (terminal, spread(&rates)) {
            (Some(r), Some(sp)) => {
                pass &= r < 1.0 && sp < 0.05;
                parts.push(format!("{}: {} its, terminal r {r:.4}, last-five spread {:.2}%", s.which, s.trace.iterations, 100.0 * sp));
            }
            (Some(r), None) => {
                pass &= r < 1.0;
                parts.push(format!("{}: {} its, terminal r {r:.4}, fewer than five rates", s.which, s.trace.iterations));
            }
            (None, _) => {
                let exact = s.trace.errors.first() == Some(&0.0);
                pass &= exact;
                parts.push(format!(
                    "{}: {} its, exact after the first application (e^1 = 0, no rate defined)",
                    s.which, s.trace.iterations
                ));
            }
        }
    }
    let ok = verdict(4, "picard geometric convergence", pass, &parts.join("; "), elapsed, Duration::from_secs(60));
    assert!(ok);
}

#[test]
fn trivial_solution_certified_stable() {
    let start = Instant::now();
    let cfg = stock();
    let ctx = cfg.context().unwrap();
    let sol = solve_system(&ctx, &cfg.solver.tolerances().unwrap()).unwrap();
    let report = stability_report(&ctx, &cfg, &sol).unwrap();
    let elapsed = start.elapsed();

    let mut pass = report.index.index_a < 1.0 && report.verdict == Verdict::StableCertified;
    let mut parts = vec![format!("A = {:.4}", report.index.index_a)];
    for stage in Stage::ALL {
        match report.fit(stage) {
            Some(f) => {
                pass &= f.d > 0.0 && f.r_squared >= 0.99;
                parts.push(format!("{stage}: d {:.3}, r^2 {:.4}", f.d, f.r_squared));
            }
            None => {
                pass = false;
                parts.push(format!("{stage}: no fit"));
            }
        }
    }
    parts.push(format!("verdict {}", report.verdict));
    let ok = verdict(5, "trivial solution stability", pass, &parts.join(", "), elapsed, Duration::from_secs(60));
    assert!(ok);
}

#[test]
fn stem_map_is_contractive_in_weighted_norm() {
    let start = Instant::now();
    let cfg = stock();
    let ctx = cfg.context().unwrap();
    let c = &cfg.contraction;
    let profiles = contraction_profiles(&StageMap::n(&ctx), ctx.grid(), 100, c.amplitude, cfg.seed).unwrap();
    let search = minimal_contractive_lambda(&profiles, c.lambda_max, c.lambda_tol);
    let elapsed = start.elapsed();

    let (pass, detail) = match search.lambda() {
        Some(l) => {
            let at = profiles.sup_ratio(l);
            let later = profiles.sup_ratio(l + 10.0);
            (
                at < 1.0 && later <= at && profiles.trials() == 100,
                format!("lambda* = {l:.3}, sup ratio {at:.4e}, at lambda*+10 {later:.4e}, 100 trials"),
            )
        }
        None => (false, format!("not contractive up to lambda = {}", c.lambda_max)),
    };
    let ok = verdict(6, "stem map contraction", pass, &detail, elapsed, Duration::from_secs(120));
    assert!(ok);
}

fn zero_source_config() -> RunConfig {
    let text = DEFAULT_CONFIG
        .replace("rates.beta.kind = hill\nrates.beta.params = 0.5, 2", "rates.beta.kind = zero")
        .replace("rates.alpha.kind = saturating\nrates.alpha.params = 0.3", "rates.alpha.kind = zero")
        .replace("init.phi.amplitude = 0.5", "init.phi.amplitude = 0")
        .replace("init.psi.amplitude = 0.2", "init.psi.amplitude = 0")
        .replace("init.omega.amplitude = 0.3", "init.omega.amplitude = 0");
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.init.phi.amplitude, 0.0);
    cfg
}

#[test]
fn zero_data_give_zero_fields() {
    let start = Instant::now();
    let cfg = zero_source_config();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_simulate(&cfg, dir.path()).unwrap();
    let elapsed = start.elapsed();

    let mut pass = true;
    let mut parts = Vec::new();
    for stage in Stage::ALL {
        let text = std::fs::read_to_string(dir.path().join(format!("{stage}.csv"))).unwrap();
        let field = read_field_csv(&text).unwrap();
        let bit_zero = field.values().iter().all(|v| v.to_bits() == 0);
        let its = outcome.solution.stage(stage).map_or(0, |s| s.trace.iterations);
        pass &= bit_zero && its == 1;
        parts.push(format!("{stage}: {} after {its} iteration(s)", if bit_zero { "bit-zero" } else { "nonzero" }));
    }
    let ok = verdict(7, "zero fixed point", pass, &parts.join(", "), elapsed, Duration::from_secs(5));
    assert!(ok);
}

/// Scalar stem recursion for constant rates, no maturation and `g = id`,
/// marched on a fine step with the implicit endpoint solved by iteration.
fn scalar_stem_oracle(
    phi: f64,
    delta: f64,
    gamma: f64,
    beta: impl Fn(f64) -> f64,
    tau: f64,
    horizon: f64,
    h: f64,
) -> Vec<f64> {
    let n = (horizon / h).round() as usize;
    let lag = (tau / h).round() as usize;
    let mut x = vec![phi; n + 1];
    for j in lag + 1..=n {
        let t = j as f64 * h;
        let mut known = phi * (-delta * (t - tau)).exp();
        for l in lag..=j {
            let w = if l == lag || l == j { 0.5 } else { 1.0 };
            let age = (j - l) as f64 * h;
            let inflow = 2.0 * (-(delta + gamma) * age).exp() * beta(x[l - lag]) * x[l - lag];
            known += h * w * inflow;
            if l < j {
                known -= h * w * (-delta * age).exp() * beta(x[l]) * x[l];
            }
        }
        let mut y = x[j - 1];
        for _ in 0..200 {
            let next = known - 0.5 * h * beta(y) * y;
            if (next - y).abs() < 1e-16 {
                y = next;
                break;
            }
            y = next;
        }
        x[j] = y;
    }
    x
}

#[test]
fn degenerate_instance_matches_scalar_oracle() {
    let start = Instant::now();
    let text = "\
model.m_max = 1
model.tau_lo = 0.25
model.tau_hi = 0.5
model.horizon = 2
grid.n_m = 3
grid.n_t = 401
rates.delta.kind = constant
rates.delta.params = 1
rates.gamma.kind = constant
rates.gamma.params = 0.5
rates.sigma.kind = constant
rates.sigma.params = 0.05
rates.beta.kind = hill
rates.beta.params = 0.8, 2
rates.alpha.kind = saturating
rates.alpha.params = 0.3
rates.v.kind = parabolic
rates.v.params = 0, 1
rates.u.kind = parabolic
rates.u.params = 0, 1
rates.g.kind = linear
rates.g.params = 1
init.phi.amplitude = 0.6
init.psi.amplitude = 0.2
init.omega.amplitude = 0.3
";
    let cfg = RunConfig::parse(text).unwrap();
    let ctx = cfg.context().unwrap();
    let sol = solve_system(&ctx, &cfg.solver.tolerances().unwrap()).unwrap();
    let n = sol.n().unwrap();
    let beta = |x: f64| 0.8 / (1.0 + x * x);
    let step = 16;
    let fine = scalar_stem_oracle(0.6, 1.0, 0.5, beta, 0.5, 2.0, ctx.grid().h_t() / step as f64);
    let mut worst = 0.0_f64;
    for j in 0..n.rows() {
        for i in 0..n.cols() {
            worst = worst.max((n.get(j, i) - fine[j * step]).abs());
        }
    }
    let ok = verdict(
        8,
        "degenerate instance vs scalar oracle",
        sol.all_converged() && worst < 1e-4,
        &format!("sup error {worst:.3e}"),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = stock();
    let single = Instant::now();
    let warm = tempfile::tempdir().unwrap();
    run_simulate(&cfg, warm.path()).unwrap();
    let single = single.elapsed();

    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_simulate(&cfg, a.path()).unwrap();
    run_simulate(&cfg, b.path()).unwrap();
    let elapsed = start.elapsed();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let pass = ta == tb && ta.len() >= 8 && ta == tree(warm.path());
    let ok = verdict(
        9,
        "determinism",
        pass,
        &format!(
            "{} files byte-identical across three runs, two runs took {:.2}x one run",
            ta.len(),
            elapsed.as_secs_f64() / single.as_secs_f64()
        ),
        elapsed,
        Duration::from_secs(120),
    );
    assert!(ok);
}
