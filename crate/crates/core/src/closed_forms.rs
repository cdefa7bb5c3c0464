//! Attenuation kernels along characteristics, the age-resolved proliferating
//! density, and the Gompertz closed form.

use crate::characteristics::{FlowCache, FlowSolver};
use crate::discretization::{trapezoid, Field, Grid};
use crate::error::{Error, Result};
use crate::model::{BivariateRate, MaturityMap, RateFunction, RateSet, Velocity};

/// Floor applied to a density before taking its logarithm.
pub const LOG_FLOOR: f64 = 1e-300;

/// `exp(-∫_0^t (loss + v')(π_{-s}(m)) ds)`, trapezoid over `nodes` path points.
pub fn attenuation(
    loss: &RateFunction,
    solver: &FlowSolver,
    m: f64,
    t: f64,
    nodes: usize,
) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::domain(format!("kernel time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let v = solver.velocity();
    let integrand: Vec<f64> = solver
        .flow_path(m, -t, nodes)?
        .iter()
        .map(|&(_, y)| loss.eval(y) + v.derivative(y))
        .collect();
    if integrand.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite kernel integrand along the path from m = {m}"
        )));
    }
    let h = t / (nodes - 1) as f64;
    Ok((-trapezoid(&integrand, h)?).exp())
}

/// Proliferating survival kernel ς(m, t).
pub fn varsigma(rates: &RateSet, solver: &FlowSolver, m: f64, t: f64, nodes: usize) -> Result<f64> {
    attenuation(&rates.gamma, solver, m, t, nodes)
}

/// Stem survival kernel K(m, t).
pub fn kernel_k(rates: &RateSet, solver: &FlowSolver, m: f64, t: f64, nodes: usize) -> Result<f64> {
    attenuation(&rates.delta, solver, m, t, nodes)
}

/// ς and K on the `(lag, maturity)` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCache {
    varsigma: Field,
    k: Field,
}

impl KernelCache {
    /// Cumulative trapezoid along each cached characteristic.
    pub fn build(
        rates: &RateSet,
        velocity: &Velocity,
        flow: &FlowCache,
        grid: &Grid,
    ) -> Result<Self> {
        let h = grid.h_t();
        let (n_t, n_m) = (grid.n_t(), grid.n_m());
        let mut varsigma = Field::zeros(n_t, n_m);
        let mut k = Field::zeros(n_t, n_m);
        for i in 0..n_m {
            let mut log_s = 0.0;
            let mut log_k = 0.0;
            let rates_at = |y: f64| {
                let dv = velocity.derivative(y);
                (rates.gamma.eval(y) + dv, rates.delta.eval(y) + dv)
            };
            let (mut gs_prev, mut dk_prev) = rates_at(flow.at(0, i));
            varsigma.set(0, i, 1.0);
            k.set(0, i, 1.0);
            for lag in 1..n_t {
                let (gs, dk) = rates_at(flow.at(lag, i));
                log_s -= 0.5 * h * (gs_prev + gs);
                log_k -= 0.5 * h * (dk_prev + dk);
                varsigma.set(lag, i, log_s.exp());
                k.set(lag, i, log_k.exp());
                gs_prev = gs;
                dk_prev = dk;
            }
        }
        if !varsigma.is_finite() || !k.is_finite() {
            return Err(Error::numeric("non-finite survival kernel"));
        }
        Ok(KernelCache { varsigma, k })
    }

    #[inline]
    pub fn varsigma(&self, lag: usize, i: usize) -> f64 {
        self.varsigma.get(lag, i)
    }

    #[inline]
    pub fn k(&self, lag: usize, i: usize) -> f64 {
        self.k.get(lag, i)
    }

    pub fn varsigma_field(&self) -> &Field {
        &self.varsigma
    }

    pub fn k_field(&self) -> &Field {
        &self.k
    }

    /// ς at lag node `lag` and off-grid maturity `m`.
    pub fn varsigma_at(&self, grid: &Grid, lag: usize, m: f64) -> f64 {
        grid.stencil(m).apply(self.varsigma.row(lag))
    }

    /// Largest ς over the whole lattice.
    pub fn varsigma_max(&self) -> f64 {
        self.varsigma.sup_norm()
    }
}

/// Division-inflow factor `2 (g⁻¹)'(y) ς(g⁻¹(y), lag)`.
///
/// Zero when the mother maturity `g⁻¹(y)` lies beyond `m_F`: no cell matures
/// past the top, so nothing divides from there.
pub fn f2(g: &MaturityMap, kernels: &KernelCache, grid: &Grid, y: f64, lag: usize) -> f64 {
    let mother = g.inverse(y);
    if mother > grid.m_max() * (1.0 + 1e-12) {
        return 0.0;
    }
    2.0 * g.inverse_derivative(y) * kernels.varsigma_at(grid, lag, mother.min(grid.m_max()))
}

/// Parameters of `c' = A c - σ c ln c` with `c(0) = c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GompertzParams {
    pub c0: f64,
    pub a: f64,
    pub sigma: f64,
}

impl GompertzParams {
    pub fn new(c0: f64, a: f64, sigma: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::domain(format!("Gompertz initial value must be > 0, got {c0}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() || !a.is_finite() {
            return Err(Error::domain(format!(
                "Gompertz rates must be finite with sigma > 0, got A = {a}, sigma = {sigma}"
            )));
        }
        Ok(GompertzParams { c0, a, sigma })
    }

    /// Limit value `exp(A / σ)`.
    pub fn plateau(&self) -> f64 {
        (self.a / self.sigma).exp()
    }
}

/// `exp[A/σ - (A/σ - ln c0) e^{-σt}]`.
pub fn gompertz(p: &GompertzParams, t: f64) -> f64 {
    gompertz_log(p.c0.ln(), p.a, p.sigma, t).exp()
}

/// Logarithm of the Gompertz solution from `ln c0`, written so that small
/// `σ t` loses no precision; `σ = 0` degenerates to pure exponential growth.
#[inline]
pub fn gompertz_log(ln_c0: f64, a: f64, sigma: f64, t: f64) -> f64 {
    if sigma == 0.0 {
        return ln_c0 + a * t;
    }
    let decay = (-sigma * t).exp();
    (a / sigma) * (-(-sigma * t).exp_m1()) + ln_c0 * decay
}

/// Gompertz value tolerant of `c0 = 0` (the zero solution) and tiny `c0`.
#[inline]
pub fn gompertz_value(c0: f64, a: f64, sigma: f64, t: f64) -> f64 {
    if c0 <= 0.0 {
        return 0.0;
    }
    gompertz_log(c0.max(LOG_FLOOR).ln(), a, sigma, t).exp()
}

/// `c ln c` with the continuous extension `0 ln 0 = 0`.
#[inline]
pub fn c_log_c(c: f64) -> f64 {
    if c <= 0.0 {
        0.0
    } else {
        c * c.max(LOG_FLOOR).ln()
    }
}

/// Inputs of the age-resolved proliferating density.
#[derive(Debug, Clone, Copy)]
pub struct DensityInputs<'a> {
    pub grid: &'a Grid,
    pub solver: &'a FlowSolver,
    pub kernels: &'a KernelCache,
    pub n_field: &'a Field,
    pub beta: &'a BivariateRate,
    /// Initial proliferating density, rows over age.
    pub psi: &'a Field,
}

/// Proliferating density `p(t, m, a)`.
///
/// For `a > t` the initial datum transported along the characteristic; for
/// `a <= t` the newborn flux `x β(x)` of stem cells at maturity `π_{-a}(m)` and
/// time `t - a`. Both branches carry `ς(m, t)`. Ages and times must be nodes.
pub fn density_p(inp: &DensityInputs<'_>, a: f64, t: f64, m: f64) -> Result<f64> {
    let grid = inp.grid;
    let a_idx = node_index(a, grid.h_t(), grid.n_ages(), "age")?;
    let t_idx = node_index(t, grid.h_t(), grid.n_t(), "time")?;
    if !(0.0..=grid.m_max()).contains(&m) {
        return Err(Error::domain(format!("maturity {m} outside [0, {}]", grid.m_max())));
    }
    if !inp.n_field.matches(grid) || inp.psi.rows() != grid.n_ages() {
        return Err(Error::domain("density inputs do not match the grid"));
    }
    let sig = inp.kernels.varsigma_at(grid, t_idx, m);
    if a_idx > t_idx {
        let y = inp.solver.flow(m, -t)?;
        let datum = grid.stencil(y).apply(inp.psi.row(a_idx - t_idx));
        Ok(sig * datum)
    } else {
        let y = inp.solver.flow(m, -a)?;
        let n = grid.stencil(y).apply(inp.n_field.row(t_idx - a_idx));
        Ok(sig * inp.beta.flux(y, n))
    }
}

fn node_index(x: f64, h: f64, count: usize, what: &str) -> Result<usize> {
    let pos = x / h;
    let k = pos.round();
    if !(x >= 0.0) || (pos - k).abs() > 1e-9 || k as usize >= count {
        return Err(Error::domain(format!("{what} {x} is not a grid node")));
    }
    Ok(k as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gompertz_initial_and_fixed_point() {
        let p = GompertzParams::new(0.4, 0.3, 0.05).unwrap();
        assert!((gompertz(&p, 0.0) - 0.4).abs() < 1e-15);
        let fixed = GompertzParams::new((0.3_f64 / 0.05).exp(), 0.3, 0.05).unwrap();
        for t in [0.0, 1.0, 50.0] {
            let c = gompertz(&fixed, t);
            assert!((c - fixed.c0).abs() / fixed.c0 < 1e-12);
        }
    }

    #[test]
    fn gompertz_tends_to_plateau() {
        let p = GompertzParams::new(0.5, -0.2, 0.08).unwrap();
        let late = gompertz(&p, 400.0);
        assert!((late - p.plateau()).abs() / p.plateau() < 1e-9);
    }

    #[test]
    fn zero_initial_value_stays_zero() {
        assert_eq!(gompertz_value(0.0, 0.3, 0.05, 3.0), 0.0);
        assert_eq!(c_log_c(0.0), 0.0);
        assert!(GompertzParams::new(0.0, 0.1, 0.05).is_err());
        assert!(GompertzParams::new(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn attenuation_at_zero_time() {
        let solver = FlowSolver::new(Velocity::parabolic(1.0, 1.0), 1.0, 1e-3).unwrap();
        let gamma = RateFunction::Constant(0.3);
        assert_eq!(attenuation(&gamma, &solver, 0.4, 0.0, 11).unwrap(), 1.0);
        assert!(attenuation(&gamma, &solver, 0.4, -1.0, 11).is_err());
    }
}
