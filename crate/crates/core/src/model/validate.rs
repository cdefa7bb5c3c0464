use std::fmt;

use crate::error::{Error, Result};

use super::{BivariateRate, InitialData, ModelParams, RateSet, Velocity};

/// Default number of maturity samples used by [`validate_assumptions`].
pub const VALIDATION_SAMPLES: usize = 201;

/// Default sample count for Lipschitz estimates.
pub const LIPSCHITZ_SAMPLES: usize = 400;

/// Tolerance for "vanishes at the endpoint" and "g(m) <= m" checks.
const EXACT_TOL: f64 = 1e-12;

/// Point at which a check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub m: f64,
    /// Age (initial data) or density argument, when relevant.
    pub other: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
    /// Lipschitz estimate of `x -> x β(m, x)` on `[0, ε]`.
    pub k_b: f64,
    /// Lipschitz estimate of `x -> x α(m, x)` on `[0, ε]`.
    pub k_a: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            write!(
                f,
                "{:<24} {}  {}",
                e.name,
                if e.passed { "pass" } else { "FAIL" },
                e.description
            )?;
            if let Some(w) = &e.witness {
                write!(f, "  [m = {}", w.m)?;
                if let Some(o) = w.other {
                    write!(f, ", arg = {o}")?;
                }
                write!(f, ", value = {}]", w.value)?;
            }
            writeln!(f)?;
        }
        writeln!(f, "k_b = {}", self.k_b)?;
        writeln!(f, "k_a = {}", self.k_a)?;
        write!(
            f,
            "overall: {}",
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Largest adjacent secant slope of `f` on a uniform partition of `[0, eps]`
/// into `samples` intervals.
///
/// Each secant equals the derivative somewhere in its interval, so the result
/// never exceeds the true Lipschitz constant. Doubling `samples` refines the
/// partition and cannot decrease the result.
pub fn lipschitz_estimate(f: impl Fn(f64) -> f64, eps: f64, samples: usize) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::domain(format!(
            "neighborhood radius must be positive, got {eps}"
        )));
    }
    if samples < 1 {
        return Err(Error::domain("need at least one sampling interval"));
    }
    let h = eps / samples as f64;
    let mut prev = f(0.0);
    let mut best = 0.0_f64;
    for k in 1..=samples {
        let x = if k == samples { eps } else { k as f64 * h };
        let cur = f(x);
        let slope = ((cur - prev) / h).abs();
        if !slope.is_finite() {
            return Err(Error::numeric(format!("non-finite difference quotient at x = {x}")));
        }
        best = best.max(slope);
        prev = cur;
    }
    Ok(best)
}

/// Lipschitz estimate of the flux `x -> x r(m, x)` maximized over `maturities`.
pub fn flux_lipschitz(
    rate: &BivariateRate,
    maturities: &[f64],
    eps: f64,
    samples: usize,
) -> Result<f64> {
    maturities.iter().try_fold(0.0_f64, |acc, &m| {
        Ok(acc.max(lipschitz_estimate(|x| rate.flux(m, x), eps, samples)?))
    })
}

/// Check every standing assumption on parameters, rates and initial data.
///
/// Failures are reported as entries with a witness point, never as errors.
/// `sigma_limit` is the numeric reading of "σ is small".
pub fn validate_assumptions(
    params: &ModelParams,
    rates: &RateSet,
    init: &InitialData,
    sigma_limit: f64,
) -> ValidationReport {
    let m_max = params.m_max;
    let n = VALIDATION_SAMPLES;
    let ms: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { m_max } else { m_max * i as f64 / (n - 1) as f64 })
        .collect();
    let mut entries = Vec::new();

    entries.push(velocity_check(
        "velocity_v",
        "v vanishes at 0 and m_F and is positive inside",
        &rates.v,
        &ms,
    ));
    entries.push(velocity_check(
        "velocity_u",
        "u vanishes at 0 and m_F and is positive inside",
        &rates.u,
        &ms,
    ));

    let sigma_bad = ms
        .iter()
        .map(|&m| (m, rates.sigma.eval(m)))
        .find(|&(_, s)| !(s > 0.0 && s <= sigma_limit));
    entries.push(entry(
        "sigma_small",
        "Gompertz rate lies in (0, sigma_limit]",
        sigma_bad.map(|(m, s)| Witness { m, other: None, value: s }),
    ));

    entries.push(maturity_map_check(rates, &ms));

    let positive_bad = ms.iter().find_map(|&m| {
        [rates.delta.eval(m), rates.gamma.eval(m)]
            .into_iter()
            .find(|v| !(*v > 0.0))
            .map(|value| Witness { m, other: None, value })
    });
    entries.push(entry(
        "loss_rates_positive",
        "delta and gamma are positive",
        positive_bad,
    ));

    let bivariate_bad = ms.iter().find_map(|&m| {
        (0..=20).find_map(|k| {
            let x = params.epsilon * k as f64 / 20.0;
            [rates.beta.eval(m, x), rates.alpha.eval(m, x)]
                .into_iter()
                .find(|v| !(*v >= 0.0 && v.is_finite()))
                .map(|value| Witness { m, other: Some(x), value })
        })
    });
    entries.push(entry(
        "rates_nonnegative",
        "beta and alpha are finite and nonnegative",
        bivariate_bad,
    ));

    let alpha_zero_bad = ms
        .iter()
        .map(|&m| (m, rates.alpha.eval(m, 0.0)))
        .find(|&(_, a)| a.abs() > EXACT_TOL);
    entries.push(entry(
        "alpha_vanishes_at_zero",
        "alpha(m, 0) = 0",
        alpha_zero_bad.map(|(m, value)| Witness { m, other: Some(0.0), value }),
    ));

    let omega_bad = first_violation(init.omega.rows(), init.omega.cols(), |k, i| {
        let w = init.omega.get(k, i);
        (!(w < 1.0)).then_some(w)
    });
    entries.push(entry(
        "damaged_below_one",
        "initial damaged density stays below 1",
        omega_bad.map(|(k, i, value)| witness_on(params, init, k, i, value)),
    ));

    let negative = [&init.phi, &init.psi, &init.omega].into_iter().find_map(|f| {
        first_violation(f.rows(), f.cols(), |k, i| {
            let v = f.get(k, i);
            (!(v >= 0.0)).then_some(v)
        })
    });
    entries.push(entry(
        "initial_nonnegative",
        "initial data are nonnegative",
        negative.map(|(k, i, value)| witness_on(params, init, k, i, value)),
    ));

    let k_b = flux_lipschitz(&rates.beta, &ms, params.epsilon, LIPSCHITZ_SAMPLES);
    let k_a = flux_lipschitz(&rates.alpha, &ms, params.epsilon, LIPSCHITZ_SAMPLES);
    entries.push(entry(
        "lipschitz_beta",
        "x beta(m, x) has a finite Lipschitz estimate near 0",
        k_b.as_ref().err().map(|_| Witness { m: 0.0, other: None, value: f64::NAN }),
    ));
    entries.push(entry(
        "lipschitz_alpha",
        "x alpha(m, x) has a finite Lipschitz estimate near 0",
        k_a.as_ref().err().map(|_| Witness { m: 0.0, other: None, value: f64::NAN }),
    ));

    ValidationReport {
        entries,
        k_b: k_b.unwrap_or(f64::INFINITY),
        k_a: k_a.unwrap_or(f64::INFINITY),
    }
}

fn entry(name: &'static str, description: &'static str, witness: Option<Witness>) -> CheckEntry {
    CheckEntry {
        name,
        description,
        passed: witness.is_none(),
        witness,
    }
}

fn velocity_check(
    name: &'static str,
    description: &'static str,
    vel: &Velocity,
    ms: &[f64],
) -> CheckEntry {
    let last = ms.len() - 1;
    let witness = ms.iter().enumerate().find_map(|(i, &m)| {
        let v = vel.value(m);
        let ok = if i == 0 || i == last {
            v.abs() <= EXACT_TOL
        } else {
            v > 0.0
        };
        (!ok || !vel.derivative(m).is_finite()).then_some(Witness { m, other: None, value: v })
    });
    entry(name, description, witness)
}

fn maturity_map_check(rates: &RateSet, ms: &[f64]) -> CheckEntry {
    let g = &rates.g;
    let mut witness = None;
    let mut prev = f64::NEG_INFINITY;
    for &m in ms {
        let y = g.forward(m);
        let round_trip = (g.inverse(y) - m).abs();
        if !(y > prev) || y > m + EXACT_TOL || round_trip > 1e-10 {
            witness = Some(Witness { m, other: None, value: y });
            break;
        }
        prev = y;
    }
    entry(
        "maturity_map",
        "g is strictly increasing, g(m) <= m, and g^-1(g(m)) = m",
        witness,
    )
}

fn first_violation(
    rows: usize,
    cols: usize,
    bad: impl Fn(usize, usize) -> Option<f64>,
) -> Option<(usize, usize, f64)> {
    (0..rows).find_map(|k| (0..cols).find_map(|i| bad(k, i).map(|v| (k, i, v))))
}

fn witness_on(params: &ModelParams, init: &InitialData, k: usize, i: usize, value: f64) -> Witness {
    let rows = init.phi.rows().max(2);
    let cols = init.phi.cols().max(2);
    Witness {
        m: params.m_max * i as f64 / (cols - 1) as f64,
        other: Some(params.tau_hi * k as f64 / (rows - 1) as f64),
        value,
    }
}
