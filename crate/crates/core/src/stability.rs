//! Stability index of the trivial equilibrium and exponential decay fits.

use std::fmt;

use crate::closed_forms::KernelCache;
use crate::discretization::{Field, Grid, Stage};
use crate::error::{Error, Result};
use crate::model::{flux_lipschitz, MaturityMap, RateFunction, RateSet, Velocity};

/// Minimum `r²` for a decay fit to count as exponential.
pub const MIN_R_SQUARED: f64 = 0.99;

/// Maturity nodes of the stability domain `[0, g(m_F)]`.
pub fn domain_nodes(grid: &Grid, g: &MaturityMap) -> usize {
    grid.nodes_up_to(g.forward(grid.m_max())).max(1)
}

/// `min (δ + v')` over the maturity nodes of `[0, g(m_F)]`.
pub fn infimum_i(delta: &RateFunction, v: &Velocity, g: &MaturityMap, grid: &Grid) -> f64 {
    min_over_domain(grid, g, |m| delta.eval(m) + v.derivative(m))
}

/// `min (v' - γ)` over the maturity nodes of `[0, g(m_F)]`.
pub fn infimum_e(gamma: &RateFunction, v: &Velocity, g: &MaturityMap, grid: &Grid) -> f64 {
    min_over_domain(grid, g, |m| v.derivative(m) - gamma.eval(m))
}

fn min_over_domain(grid: &Grid, g: &MaturityMap, f: impl Fn(f64) -> f64) -> f64 {
    (0..domain_nodes(grid, g))
        .map(|i| f(grid.m(i)))
        .fold(f64::INFINITY, f64::min)
}

/// Quantities entering the stability index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexReport {
    pub i: f64,
    pub e: f64,
    pub k_b: f64,
    pub k_a: f64,
    pub varsigma_bar: f64,
    /// `k_b (1 + 2 ς̄) / I`, infinite when `I <= 0`.
    pub index_a: f64,
}

impl IndexReport {
    pub fn from_parts(i: f64, e: f64, k_b: f64, k_a: f64, varsigma_bar: f64) -> Self {
        let index_a = if i > 0.0 {
            k_b * (1.0 + 2.0 * varsigma_bar) / i
        } else {
            f64::INFINITY
        };
        IndexReport {
            i,
            e,
            k_b,
            k_a,
            varsigma_bar,
            index_a,
        }
    }
}

/// I, E, the flux Lipschitz constants on `[0, ε]` (maximized over maturity
/// nodes) and ς̄ = max of the ς kernel over the lattice.
pub fn stability_index(
    rates: &RateSet,
    grid: &Grid,
    kernels: &KernelCache,
    epsilon: f64,
    samples: usize,
) -> Result<IndexReport> {
    let i = infimum_i(&rates.delta, &rates.v, &rates.g, grid);
    let e = infimum_e(&rates.gamma, &rates.v, &rates.g, grid);
    let ms = grid.maturities();
    let k_b = flux_lipschitz(&rates.beta, &ms, epsilon, samples)?;
    let k_a = flux_lipschitz(&rates.alpha, &ms, epsilon, samples)?;
    Ok(IndexReport::from_parts(i, e, k_b, k_a, kernels.varsigma_max()))
}

/// Least-squares fit of `ln y = ln c - d (t - t_start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub d: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl DecayFit {
    pub fn is_exponential_decay(&self) -> bool {
        self.d > 0.0 && self.r_squared >= MIN_R_SQUARED
    }
}

/// Fit an exponential to `values` over `times >= t_start`. The window ends at
/// the first nonpositive value.
pub fn fit_exponential_decay(times: &[f64], values: &[f64], t_start: f64) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::domain("times and values differ in length"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < t_start - 1e-12 {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            break;
        }
        xs.push(t - t_start);
        ys.push(v.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} positive points after t = {t_start}, need 3",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit {
        c: intercept.exp(),
        d: -slope,
        r_squared,
        points: xs.len(),
    })
}

/// `max |field(t_j, m)|` over the stability domain, per time node.
pub fn domain_trajectory(field: &Field, grid: &Grid, g: &MaturityMap) -> Vec<f64> {
    let cols = domain_nodes(grid, g);
    (0..field.rows()).map(|j| field.row_sup(j, cols)).collect()
}

/// Fit the decay of a population on the stability domain from τ̄ on.
pub fn fit_population(field: &Field, grid: &Grid, g: &MaturityMap) -> Result<DecayFit> {
    fit_exponential_decay(&grid.times(), &domain_trajectory(field, grid, g), grid.tau_hi())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    StableCertified,
    DecayObservedOnly,
    NotCertified { reasons: Vec<String> },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::StableCertified => "stable-certified",
            Verdict::DecayObservedOnly => "decay-observed-only",
            Verdict::NotCertified { .. } => "not-certified",
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::StableCertified)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())?;
        if let Verdict::NotCertified { reasons } = self {
            write!(f, " ({})", reasons.join("; "))?;
        }
        Ok(())
    }
}

/// Certified iff the index is below 1 and every population decays
/// exponentially; decay with an index of 1 or more is only observed.
pub fn classify(index_a: f64, fits: &[(Stage, Result<DecayFit>)]) -> Verdict {
    let mut reasons = Vec::new();
    for (stage, fit) in fits {
        match fit {
            Ok(f) if f.is_exponential_decay() => {}
            Ok(f) => reasons.push(format!(
                "{stage}: d = {:.6e}, r^2 = {:.6}",
                f.d, f.r_squared
            )),
            Err(e) => reasons.push(format!("{stage}: {e}")),
        }
    }
    if !reasons.is_empty() {
        if !(index_a < 1.0) {
            reasons.push(format!("index A = {index_a} >= 1"));
        }
        return Verdict::NotCertified { reasons };
    }
    if index_a < 1.0 {
        Verdict::StableCertified
    } else {
        Verdict::DecayObservedOnly
    }
}

/// Index, fits and verdict for one solved system.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub index: IndexReport,
    pub fits: Vec<(Stage, std::result::Result<DecayFit, String>)>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn build(index: IndexReport, fits: Vec<(Stage, Result<DecayFit>)>) -> Self {
        let verdict = classify(index.index_a, &fits);
        let mut warnings = Vec::new();
        if !(index.e > 0.0) {
            warnings.push(format!(
                "E = {} is not positive on the stability domain",
                index.e
            ));
        }
        if !(index.i > 0.0) {
            warnings.push(format!("I = {} is not positive; index undefined", index.i));
        }
        StabilityReport {
            index,
            fits: fits
                .into_iter()
                .map(|(s, f)| (s, f.map_err(|e| e.to_string())))
                .collect(),
            verdict,
            warnings,
        }
    }

    pub fn fit(&self, stage: Stage) -> Option<&DecayFit> {
        self.fits
            .iter()
            .find(|(s, _)| *s == stage)
            .and_then(|(_, f)| f.as_ref().ok())
    }
}
