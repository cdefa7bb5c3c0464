//! Backward characteristic flow `dπ/ds = v(π)`, `π_0(m) = m`, for `s <= 0`.

use crate::discretization::{Field, Grid};
use crate::error::{Error, Result};
use crate::model::Velocity;

pub const DEFAULT_H_ODE: f64 = 1e-3;

/// Fixed-step RK4 integrator for the characteristic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolver {
    velocity: Velocity,
    m_max: f64,
    h_ode: f64,
}

impl FlowSolver {
    pub fn new(velocity: Velocity, m_max: f64, h_ode: f64) -> Result<Self> {
        if !(h_ode > 0.0) || !h_ode.is_finite() {
            return Err(Error::domain(format!("ODE step must be positive, got {h_ode}")));
        }
        if !(m_max > 0.0) {
            return Err(Error::domain("maximal maturity must be positive"));
        }
        Ok(FlowSolver {
            velocity,
            m_max,
            h_ode,
        })
    }

    pub fn h_ode(&self) -> f64 {
        self.h_ode
    }

    pub fn m_max(&self) -> f64 {
        self.m_max
    }

    pub fn velocity(&self) -> &Velocity {
        &self.velocity
    }

    /// `π_s(m)`.
    pub fn flow(&self, m: f64, s: f64) -> Result<f64> {
        self.check_m(m)?;
        if s > 0.0 || !s.is_finite() {
            return Err(Error::domain(format!("flow time must be <= 0, got {s}")));
        }
        self.advance(m, -s)
    }

    /// Uniform nodes `s_lo = s_0 < ... < s_{n-1} = 0` with the flow value at each.
    pub fn flow_path(&self, m: f64, s_lo: f64, nodes: usize) -> Result<Vec<(f64, f64)>> {
        self.check_m(m)?;
        if nodes < 2 {
            return Err(Error::domain("a flow path needs at least 2 nodes"));
        }
        if s_lo > 0.0 || !s_lo.is_finite() {
            return Err(Error::domain(format!("path start must be <= 0, got {s_lo}")));
        }
        let segments = nodes - 1;
        let ds = -s_lo / segments as f64;
        let mut out = vec![(0.0, m); nodes];
        let mut y = m;
        for k in 1..=segments {
            y = self.advance(y, ds)?;
            let s = if k == segments { s_lo } else { -(k as f64) * ds };
            out[segments - k] = (s, y);
        }
        Ok(out)
    }

    /// Flow backward by `duration >= 0`, sub-stepping at no more than `h_ode`.
    pub fn advance(&self, m: f64, duration: f64) -> Result<f64> {
        if duration == 0.0 {
            return Ok(m);
        }
        let steps = (duration / self.h_ode).ceil().max(1.0) as usize;
        let h = -duration / steps as f64;
        let mut y = m;
        for _ in 0..steps {
            y = self.rk4_step(y, h);
            if !y.is_finite() {
                return Err(Error::numeric(format!(
                    "characteristic from m = {m} became non-finite"
                )));
            }
        }
        Ok(y.clamp(0.0, self.m_max))
    }

    #[inline]
    fn rk4_step(&self, y: f64, h: f64) -> f64 {
        let f = |x: f64| self.velocity.value(x);
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    fn check_m(&self, m: f64) -> Result<()> {
        if (0.0..=self.m_max).contains(&m) {
            Ok(())
        } else {
            Err(Error::domain(format!("maturity {m} outside [0, {}]", self.m_max)))
        }
    }
}

/// `π_{-k h_t}(m_i)` for every time lag `k` and maturity node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCache {
    values: Field,
}

impl FlowCache {
    pub fn build(solver: &FlowSolver, grid: &Grid) -> Result<Self> {
        let mut values = Field::zeros(grid.n_t(), grid.n_m());
        for i in 0..grid.n_m() {
            values.set(0, i, grid.m(i));
        }
        for k in 1..grid.n_t() {
            for i in 0..grid.n_m() {
                let prev = values.get(k - 1, i);
                values.set(k, i, solver.advance(prev, grid.h_t())?);
            }
        }
        Ok(FlowCache { values })
    }

    /// Flow value after lag index `k` from maturity node `i`.
    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.values.get(k, i)
    }

    pub fn field(&self) -> &Field {
        &self.values
    }
}
