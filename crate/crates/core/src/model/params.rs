use std::f64::consts::PI;

use crate::discretization::{Field, Grid};
use crate::error::{Error, Result};

/// Scalar model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Maximal maturity m_F.
    pub m_max: f64,
    /// Age τ̲ from which damage can occur.
    pub tau_lo: f64,
    /// Division age τ̄.
    pub tau_hi: f64,
    /// Simulated horizon T.
    pub horizon: f64,
    /// Radius of the density neighborhood used for Lipschitz estimates.
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(m_max: f64, tau_lo: f64, tau_hi: f64, horizon: f64, epsilon: f64) -> Result<Self> {
        let p = ModelParams {
            m_max,
            tau_lo,
            tau_hi,
            horizon,
            epsilon,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let all_finite = [self.m_max, self.tau_lo, self.tau_hi, self.horizon, self.epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Invalid("model parameters must be finite".into()));
        }
        if !(0.0 < self.tau_lo && self.tau_lo < self.tau_hi && self.tau_hi < self.horizon) {
            return Err(Error::Invalid(format!(
                "need 0 < tau_lo < tau_hi < horizon, got {} / {} / {}",
                self.tau_lo, self.tau_hi, self.horizon
            )));
        }
        if self.m_max <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Invalid("m_max and epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Maturity shape of an initial profile, normalized to peak 1 on `[0, m_F]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Constant,
    /// `4 m (m_F - m) / m_F²`
    Parabolic,
    /// `(1 + cos(π m / m_F)) / 2`, largest at `m = 0`.
    Cosine,
}

impl Shape {
    pub fn eval(&self, m: f64, m_max: f64) -> f64 {
        match self {
            Shape::Constant => 1.0,
            Shape::Parabolic => 4.0 * m * (m_max - m) / (m_max * m_max),
            Shape::Cosine => 0.5 * (1.0 + (PI * m / m_max).cos()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Constant => "constant",
            Shape::Parabolic => "parabolic",
            Shape::Cosine => "cosine",
        }
    }

    pub fn from_name(s: &str) -> Option<Shape> {
        match s {
            "constant" => Some(Shape::Constant),
            "parabolic" => Some(Shape::Parabolic),
            "cosine" => Some(Shape::Cosine),
            _ => None,
        }
    }
}

/// Separable initial profile `amplitude * shape(m) * exp(-decay * a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub amplitude: f64,
    pub shape: Shape,
    pub decay: f64,
}

impl Profile {
    pub fn new(amplitude: f64, shape: Shape, decay: f64) -> Self {
        Profile {
            amplitude,
            shape,
            decay,
        }
    }

    pub fn zero() -> Self {
        Profile::new(0.0, Shape::Constant, 0.0)
    }

    pub fn eval(&self, a: f64, m: f64, m_max: f64) -> f64 {
        self.amplitude * self.shape.eval(m, m_max) * (-self.decay * a).exp()
    }
}

/// Initial data sampled on the grid.
///
/// * `phi`: stem-cell history `N(t, m)` on `t ∈ [0, τ̄]`;
/// * `psi`: proliferating density `p(0, m, a)` on `a ∈ [0, τ̄]`;
/// * `omega`: damaged density `c(0, m, a)`, read on `a ∈ [τ̲, τ̄]`.
///
/// Rows are the `n_ages` nodes `0, h, ..., τ̄`; columns are maturity nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub phi: Field,
    pub psi: Field,
    pub omega: Field,
}

impl InitialData {
    pub fn from_profiles(grid: &Grid, phi: &Profile, psi: &Profile, omega: &Profile) -> Self {
        let m_max = grid.m_max();
        InitialData::from_fn(
            grid,
            |a, m| phi.eval(a, m, m_max),
            |a, m| psi.eval(a, m, m_max),
            |a, m| omega.eval(a, m, m_max),
        )
    }

    /// Sample arbitrary `(age, maturity)` functions on the grid.
    pub fn from_fn(
        grid: &Grid,
        phi: impl Fn(f64, f64) -> f64,
        psi: impl Fn(f64, f64) -> f64,
        omega: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let rows = grid.n_ages();
        let cols = grid.n_m();
        let sample = |f: &dyn Fn(f64, f64) -> f64| {
            Field::from_fn(rows, cols, |k, i| f(grid.t(k), grid.m(i)))
        };
        InitialData {
            phi: sample(&phi),
            psi: sample(&psi),
            omega: sample(&omega),
        }
    }

    pub fn zero(grid: &Grid) -> Self {
        let z = Field::zeros(grid.n_ages(), grid.n_m());
        InitialData {
            phi: z.clone(),
            psi: z.clone(),
            omega: z,
        }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        [&self.phi, &self.psi, &self.omega]
            .iter()
            .all(|f| f.rows() == grid.n_ages() && f.cols() == grid.n_m())
    }
}
