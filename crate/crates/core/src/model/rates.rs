//! Rate, velocity and maturity-map families.
//!
//! Every family is either a small closed-form kind with hand-coded derivative
//! or a table of `(m, value)` pairs interpolated piecewise-linearly. Tables
//! differentiate by central differences of the interpolant.

use crate::error::{Error, Result};

/// Step used for central differences on tabulated kinds.
const TABLE_DIFF_STEP: f64 = 1e-6;

/// Sorted `(m, value)` pairs with strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Invalid(format!(
                "table has {} abscissae but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Invalid("table needs at least 2 points".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("table contains a non-finite entry".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Table { xs, ys })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Table::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Piecewise-linear interpolation, constant extension outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // partition_point gives the first abscissa > x
        let hi = self.xs.partition_point(|&v| v <= x);
        let lo = hi - 1;
        let w = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.ys[lo] + w * (self.ys[hi] - self.ys[lo])
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let lo = self.xs[0];
        let hi = self.xs[self.xs.len() - 1];
        let a = (x - TABLE_DIFF_STEP).max(lo);
        let b = (x + TABLE_DIFF_STEP).min(hi);
        (self.eval(b) - self.eval(a)) / (b - a)
    }

    fn is_strictly_increasing_values(&self) -> bool {
        self.ys.windows(2).all(|w| w[1] > w[0])
    }

    /// Table with abscissae and values swapped. Requires increasing values.
    fn inverted(&self) -> Result<Table> {
        Table::new(self.ys.clone(), self.xs.clone())
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
}

/// `x^n`, using integer powers when the exponent is integral.
#[inline]
fn pow(x: f64, n: f64) -> f64 {
    if n.fract() == 0.0 && n.abs() <= 16.0 {
        x.powi(n as i32)
    } else {
        x.powf(n)
    }
}

/// Univariate rate on the maturity axis: δ, γ, σ.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(f64),
    /// `amplitude / (1 + (m / half)^exponent)`
    Hill {
        amplitude: f64,
        half: f64,
        exponent: f64,
    },
    /// `scale * m * (upper - m)`
    Parabolic { scale: f64, upper: f64 },
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Tabulated(Table),
}

impl RateFunction {
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            RateFunction::Constant(c) => *c,
            RateFunction::Hill {
                amplitude,
                half,
                exponent,
            } => amplitude / (1.0 + pow(m / half, *exponent)),
            RateFunction::Parabolic { scale, upper } => scale * m * (upper - m),
            RateFunction::Polynomial(c) => poly_eval(c, m),
            RateFunction::Tabulated(t) => t.eval(m),
        }
    }

    pub fn derivative(&self, m: f64) -> f64 {
        match self {
            RateFunction::Constant(_) => 0.0,
            RateFunction::Hill {
                amplitude,
                half,
                exponent,
            } => {
                if m == 0.0 {
                    return if *exponent == 1.0 { -amplitude / half } else { 0.0 };
                }
                let r = pow(m / half, *exponent);
                -amplitude * exponent * r / (m * (1.0 + r).powi(2))
            }
            RateFunction::Parabolic { scale, upper } => scale * (upper - 2.0 * m),
            RateFunction::Polynomial(c) => poly_derivative(c, m),
            RateFunction::Tabulated(t) => t.derivative(m),
        }
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        let ok = match self {
            RateFunction::Constant(c) => c.is_finite(),
            RateFunction::Hill {
                amplitude,
                half,
                exponent,
            } => amplitude.is_finite() && *half > 0.0 && half.is_finite() && exponent.is_finite(),
            RateFunction::Parabolic { scale, upper } => scale.is_finite() && *upper > 0.0,
            RateFunction::Polynomial(c) => !c.is_empty() && c.iter().all(|v| v.is_finite()),
            RateFunction::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad rate parameters: {self:?}")))
        }
    }
}

/// Bivariate rate `r(m, x)` for β(m, N) and α(m, P).
#[derive(Debug, Clone, PartialEq)]
pub enum BivariateRate {
    /// `s(m) * amplitude / (1 + x^exponent)`
    Hill {
        amplitude: f64,
        exponent: f64,
        maturity_scale: Option<Vec<f64>>,
    },
    /// `s(m) * amplitude * x / (1 + x)`; vanishes at `x = 0`.
    Saturating {
        amplitude: f64,
        maturity_scale: Option<Vec<f64>>,
    },
    /// Bilinear interpolation on a `(m, x)` lattice, `values` row-major in `m`.
    /// Constant extension beyond the last `x` node.
    Tabulated {
        ms: Vec<f64>,
        xs: Vec<f64>,
        values: Vec<f64>,
    },
}

impl BivariateRate {
    pub fn hill(amplitude: f64, exponent: f64) -> Self {
        BivariateRate::Hill {
            amplitude,
            exponent,
            maturity_scale: None,
        }
    }

    pub fn saturating(amplitude: f64) -> Self {
        BivariateRate::Saturating {
            amplitude,
            maturity_scale: None,
        }
    }

    pub fn zero() -> Self {
        BivariateRate::hill(0.0, 1.0)
    }

    pub fn tabulated(ms: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let sorted = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !sorted(&ms) || !sorted(&xs) {
            return Err(Error::Invalid(
                "2-d table axes need >= 2 strictly increasing nodes".into(),
            ));
        }
        if values.len() != ms.len() * xs.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("2-d table values malformed".into()));
        }
        Ok(BivariateRate::Tabulated { ms, xs, values })
    }

    #[inline]
    pub fn eval(&self, m: f64, x: f64) -> f64 {
        match self {
            BivariateRate::Hill {
                amplitude,
                exponent,
                maturity_scale,
            } => scale_at(maturity_scale, m) * amplitude / (1.0 + pow(x.abs(), *exponent)),
            BivariateRate::Saturating {
                amplitude,
                maturity_scale,
            } => {
                let x = x.max(0.0);
                scale_at(maturity_scale, m) * amplitude * x / (1.0 + x)
            }
            BivariateRate::Tabulated { ms, xs, values } => bilinear(ms, xs, values, m, x),
        }
    }

    /// `x * r(m, x)`, the flux whose Lipschitz constant enters the stability index.
    #[inline]
    pub fn flux(&self, m: f64, x: f64) -> f64 {
        x * self.eval(m, x)
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        let scale_ok = |s: &Option<Vec<f64>>| {
            s.as_ref()
                .is_none_or(|c| !c.is_empty() && c.iter().all(|v| v.is_finite()))
        };
        let ok = match self {
            BivariateRate::Hill {
                amplitude,
                exponent,
                maturity_scale,
            } => amplitude.is_finite() && *exponent > 0.0 && scale_ok(maturity_scale),
            BivariateRate::Saturating {
                amplitude,
                maturity_scale,
            } => amplitude.is_finite() && scale_ok(maturity_scale),
            BivariateRate::Tabulated { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad bivariate rate parameters: {self:?}")))
        }
    }
}

fn scale_at(scale: &Option<Vec<f64>>, m: f64) -> f64 {
    scale.as_deref().map_or(1.0, |c| poly_eval(c, m))
}

fn bracket(nodes: &[f64], v: f64) -> (usize, f64) {
    let n = nodes.len();
    if v <= nodes[0] {
        return (0, 0.0);
    }
    if v >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = nodes.partition_point(|&u| u <= v);
    let lo = hi - 1;
    (lo, (v - nodes[lo]) / (nodes[hi] - nodes[lo]))
}

fn bilinear(ms: &[f64], xs: &[f64], values: &[f64], m: f64, x: f64) -> f64 {
    let nx = xs.len();
    let (i, wm) = bracket(ms, m);
    let (j, wx) = bracket(xs, x);
    let at = |a: usize, b: usize| values[a * nx + b];
    let lo = at(i, j) * (1.0 - wx) + at(i, j + 1) * wx;
    let hi = at(i + 1, j) * (1.0 - wx) + at(i + 1, j + 1) * wx;
    lo * (1.0 - wm) + hi * wm
}

/// Maturation velocity, `v` for healthy cells and `u` for damaged ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    /// `scale * m * (upper - m)`
    Parabolic { scale: f64, upper: f64 },
    Tabulated(Table),
}

impl Velocity {
    pub fn parabolic(scale: f64, upper: f64) -> Self {
        Velocity::Parabolic { scale, upper }
    }

    #[inline]
    pub fn value(&self, m: f64) -> f64 {
        match self {
            Velocity::Parabolic { scale, upper } => scale * m * (upper - m),
            Velocity::Tabulated(t) => t.eval(m),
        }
    }

    #[inline]
    pub fn derivative(&self, m: f64) -> f64 {
        match self {
            Velocity::Parabolic { scale, upper } => scale * (upper - 2.0 * m),
            Velocity::Tabulated(t) => t.derivative(m),
        }
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        match self {
            Velocity::Parabolic { scale, upper } if scale.is_finite() && *upper > 0.0 => Ok(()),
            Velocity::Tabulated(_) => Ok(()),
            other => Err(Error::Invalid(format!("bad velocity parameters: {other:?}"))),
        }
    }
}

/// Daughter-maturity map `g` with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub enum MaturityMap {
    /// `g(m) = factor * m`
    LinearScale(f64),
    Tabulated { forward: Table, inverse: Table },
}

impl MaturityMap {
    pub fn linear(factor: f64) -> Self {
        MaturityMap::LinearScale(factor)
    }

    pub fn tabulated(forward: Table) -> Result<Self> {
        if !forward.is_strictly_increasing_values() {
            return Err(Error::Invalid(
                "tabulated maturity map must be strictly increasing".into(),
            ));
        }
        let inverse = forward.inverted()?;
        Ok(MaturityMap::Tabulated { forward, inverse })
    }

    pub fn forward(&self, m: f64) -> f64 {
        match self {
            MaturityMap::LinearScale(k) => k * m,
            MaturityMap::Tabulated { forward, .. } => forward.eval(m),
        }
    }

    /// `g⁻¹(y)`. For the linear kind this extends past `g(m_F)`; callers decide
    /// what an out-of-range mother maturity means.
    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            MaturityMap::LinearScale(k) => y / k,
            MaturityMap::Tabulated { inverse, forward } => {
                let top = *inverse.xs().last().unwrap();
                if y > top {
                    // linear continuation so that out-of-range stays detectable
                    let m_top = *forward.xs().last().unwrap();
                    m_top + (y - top) * inverse.derivative(top)
                } else {
                    inverse.eval(y)
                }
            }
        }
    }

    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match self {
            MaturityMap::LinearScale(k) => 1.0 / k,
            MaturityMap::Tabulated { inverse, .. } => inverse.derivative(y),
        }
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        match self {
            MaturityMap::LinearScale(k) if *k > 0.0 && k.is_finite() => Ok(()),
            MaturityMap::Tabulated { .. } => Ok(()),
            other => Err(Error::Invalid(format!("bad maturity map: {other:?}"))),
        }
    }
}

/// The full rate declaration of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    /// Stem-cell loss δ(m).
    pub delta: RateFunction,
    /// Proliferating-cell loss γ(m).
    pub gamma: RateFunction,
    /// Gompertz rate σ(m) of damaged cells.
    pub sigma: RateFunction,
    /// Stem → proliferating introduction rate β(m, N).
    pub beta: BivariateRate,
    /// Proliferating → damaged conversion rate α(m, P).
    pub alpha: BivariateRate,
    /// Healthy maturation velocity.
    pub v: Velocity,
    /// Damaged maturation velocity.
    pub u: Velocity,
    pub g: MaturityMap,
}

impl RateSet {
    pub fn check(&self) -> Result<()> {
        self.delta.check_params()?;
        self.gamma.check_params()?;
        self.sigma.check_params()?;
        self.beta.check_params()?;
        self.alpha.check_params()?;
        self.v.check_params()?;
        self.u.check_params()?;
        self.g.check_params()
    }
}

/// Borrowed view over any rate family, for domain-checked evaluation.
#[derive(Debug, Clone, Copy)]
pub enum RateRef<'a> {
    Univariate(&'a RateFunction),
    Bivariate(&'a BivariateRate),
    Velocity(&'a Velocity),
}

/// Evaluate a rate at maturity `m` (and density `x` for bivariate kinds),
/// rejecting arguments outside `[0, m_max]` / `x >= 0`.
pub fn eval_rate(rate: RateRef<'_>, m: f64, x: Option<f64>, m_max: f64) -> Result<f64> {
    if !(0.0..=m_max).contains(&m) {
        return Err(Error::domain(format!("maturity {m} outside [0, {m_max}]")));
    }
    let value = match rate {
        RateRef::Univariate(r) => r.eval(m),
        RateRef::Velocity(v) => v.value(m),
        RateRef::Bivariate(b) => {
            let x = x.ok_or_else(|| Error::domain("bivariate rate needs a density argument"))?;
            if !(x >= 0.0) {
                return Err(Error::domain(format!("density {x} must be >= 0")));
            }
            b.eval(m, x)
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(format!("rate evaluated to {value} at m = {m}")))
    }
}
