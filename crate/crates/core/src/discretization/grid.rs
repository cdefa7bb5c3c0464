use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Uniform maturity and time lattice. The age axis shares the time spacing so
/// that age and time shifts land on nodes; τ̲ and τ̄ are snapped onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    m_max: f64,
    n_m: usize,
    n_t: usize,
    h_m: f64,
    h_t: f64,
    tau_lo_index: usize,
    tau_hi_index: usize,
}

/// Linear-interpolation weights for an off-grid maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub lo: usize,
    pub w: f64,
}

impl Stencil {
    #[inline]
    pub fn apply(&self, row: &[f64]) -> f64 {
        let a = row[self.lo];
        if self.w == 0.0 {
            a
        } else {
            a + self.w * (row[self.lo + 1] - a)
        }
    }
}

impl Grid {
    pub fn new(params: &ModelParams, n_m: usize, n_t: usize) -> Result<Self> {
        if n_m < 3 || n_t < 3 {
            return Err(Error::Invalid(format!(
                "grid needs >= 3 nodes per axis, got {n_m} maturity x {n_t} time"
            )));
        }
        let h_m = params.m_max / (n_m - 1) as f64;
        let h_t = params.horizon / (n_t - 1) as f64;
        let tau_hi_index = (params.tau_hi / h_t).round() as usize;
        let tau_lo_index = (params.tau_lo / h_t).round() as usize;
        if tau_hi_index < 2 {
            return Err(Error::Invalid(format!(
                "time step {h_t} too coarse: division age spans fewer than 3 age nodes"
            )));
        }
        if tau_lo_index == 0 || tau_lo_index >= tau_hi_index {
            return Err(Error::Invalid(format!(
                "damage onset age does not snap strictly inside (0, division age) at step {h_t}"
            )));
        }
        if tau_hi_index >= n_t - 1 {
            return Err(Error::Invalid("horizon must exceed the division age".into()));
        }
        Ok(Grid {
            m_max: params.m_max,
            n_m,
            n_t,
            h_m,
            h_t,
            tau_lo_index,
            tau_hi_index,
        })
    }

    pub fn n_m(&self) -> usize {
        self.n_m
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn h_m(&self) -> f64 {
        self.h_m
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    /// Age spacing; equal to the time spacing.
    pub fn h_a(&self) -> f64 {
        self.h_t
    }

    pub fn m_max(&self) -> f64 {
        self.m_max
    }

    pub fn m(&self, i: usize) -> f64 {
        if i + 1 == self.n_m {
            self.m_max
        } else {
            i as f64 * self.h_m
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.h_t
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.n_t - 1)
    }

    pub fn tau_hi_index(&self) -> usize {
        self.tau_hi_index
    }

    pub fn tau_lo_index(&self) -> usize {
        self.tau_lo_index
    }

    /// Snapped division age τ̄.
    pub fn tau_hi(&self) -> f64 {
        self.t(self.tau_hi_index)
    }

    /// Snapped damage onset age τ̲.
    pub fn tau_lo(&self) -> f64 {
        self.t(self.tau_lo_index)
    }

    /// Number of age nodes on `[0, τ̄]`.
    pub fn n_ages(&self) -> usize {
        self.tau_hi_index + 1
    }

    pub fn maturities(&self) -> Vec<f64> {
        (0..self.n_m).map(|i| self.m(i)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|j| self.t(j)).collect()
    }

    /// Number of maturity nodes with `m <= y` (the nodes of `[0, y]`).
    pub fn nodes_up_to(&self, y: f64) -> usize {
        let k = ((y / self.h_m) + 1e-9).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize + 1).min(self.n_m)
        }
    }

    /// Interpolation stencil for maturity `y`, clamped to `[0, m_max]`.
    pub fn stencil(&self, y: f64) -> Stencil {
        let y = y.clamp(0.0, self.m_max);
        let pos = y / self.h_m;
        let lo = (pos.floor() as usize).min(self.n_m - 2);
        let w = (pos - lo as f64).clamp(0.0, 1.0);
        Stencil { lo, w }
    }

    /// The grid with both spacings halved; every node of `self` is a node of
    /// the result.
    pub fn refined(&self) -> Grid {
        Grid {
            m_max: self.m_max,
            n_m: 2 * self.n_m - 1,
            n_t: 2 * self.n_t - 1,
            h_m: self.h_m / 2.0,
            h_t: self.h_t / 2.0,
            tau_lo_index: 2 * self.tau_lo_index,
            tau_hi_index: 2 * self.tau_hi_index,
        }
    }
}
