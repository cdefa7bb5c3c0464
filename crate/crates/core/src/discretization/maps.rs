use std::fmt;
use std::str::FromStr;

use crate::characteristics::{FlowCache, FlowSolver};
use crate::closed_forms::{c_log_c, f2, gompertz_value, KernelCache};
use crate::error::{Error, Result};
use crate::model::{InitialData, RateSet};
use crate::par::map_indices;

use super::quadrature::{cumulative_trapezoid, trapezoid};
use super::{Field, Grid, Stencil};

/// Sign applied to the damaged-cell source term built from the Gompertz
/// age integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FcSign {
    /// `F_C = -σ ∫ c ln c da - c(t, m, τ̄)`
    #[default]
    Minus,
    /// `F_C = σ ∫ c ln c da + c(t, m, τ̄)`
    Plus,
}

impl fmt::Display for FcSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FcSign::Minus => "minus",
            FcSign::Plus => "plus",
        })
    }
}

impl FromStr for FcSign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "minus" => Ok(FcSign::Minus),
            "plus" => Ok(FcSign::Plus),
            other => Err(format!("expected `minus` or `plus`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switches {
    /// Multiply the convolution term of the damaged map by the initial total
    /// as well as the decay term.
    pub omega_scales_integral_term: bool,
    pub fc_sign: FcSign,
}

impl Default for Switches {
    fn default() -> Self {
        Switches {
            omega_scales_integral_term: true,
            fc_sign: FcSign::Minus,
        }
    }
}

/// Mother-cell tap of the division inflow for one `(lag, maturity)` pair.
#[derive(Debug, Clone, Copy)]
struct DivisionTap {
    stencil: Stencil,
    mother: f64,
    /// `K(lag) * f2`
    coef: f64,
}

/// Everything the three maps share: grid, rates, initial data and the
/// characteristic and kernel caches.
#[derive(Debug, Clone)]
pub struct MapContext {
    grid: Grid,
    rates: RateSet,
    init: InitialData,
    switches: Switches,
    solver: FlowSolver,
    flow: FlowCache,
    kernels: KernelCache,
    along: Vec<Stencil>,
    division: Vec<Option<DivisionTap>>,
    transport: Field,
    warnings: Vec<String>,
}

impl MapContext {
    pub fn new(
        grid: Grid,
        rates: RateSet,
        init: InitialData,
        switches: Switches,
        h_ode: f64,
    ) -> Result<Self> {
        rates.check()?;
        if !init.matches(&grid) {
            return Err(Error::domain("initial data do not match the grid"));
        }
        let solver = FlowSolver::new(rates.v.clone(), grid.m_max(), h_ode)?;
        let flow = FlowCache::build(&solver, &grid)?;
        let kernels = KernelCache::build(&rates, &rates.v, &flow, &grid)?;
        let (n_t, n_m) = (grid.n_t(), grid.n_m());
        let m_max = grid.m_max();

        let mut along = Vec::with_capacity(n_t * n_m);
        let mut division = Vec::with_capacity(n_t * n_m);
        let mut overshoot = 0.0_f64;
        for lag in 0..n_t {
            for i in 0..n_m {
                let y = flow.at(lag, i);
                along.push(grid.stencil(y));
                let mother = rates.g.inverse(y);
                let tap = if mother > m_max * (1.0 + 1e-9) {
                    None
                } else {
                    if mother > m_max {
                        overshoot = overshoot.max(mother - m_max);
                    }
                    let mother = mother.min(m_max);
                    Some(DivisionTap {
                        stencil: grid.stencil(mother),
                        mother,
                        coef: kernels.k(lag, i) * f2(&rates.g, &kernels, &grid, y, lag),
                    })
                };
                division.push(tap);
            }
        }
        let mut warnings = Vec::new();
        if overshoot > 0.0 {
            warnings.push(format!(
                "mother maturity overshot m_F by {overshoot:e}; clamped"
            ));
        }

        let j_hi = grid.tau_hi_index();
        let phi_top = init.phi.row(j_hi);
        let transport = Field::from_fn(n_t, n_m, |j, i| {
            if j <= j_hi {
                init.phi.get(j, i)
            } else {
                let lag = j - j_hi;
                along[lag * n_m + i].apply(phi_top) * kernels.k(lag, i)
            }
        });

        Ok(MapContext {
            grid,
            rates,
            init,
            switches,
            solver,
            flow,
            kernels,
            along,
            division,
            transport,
            warnings,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rates(&self) -> &RateSet {
        &self.rates
    }

    pub fn init(&self) -> &InitialData {
        &self.init
    }

    pub fn switches(&self) -> Switches {
        self.switches
    }

    pub fn solver(&self) -> &FlowSolver {
        &self.solver
    }

    pub fn flow(&self) -> &FlowCache {
        &self.flow
    }

    pub fn kernels(&self) -> &KernelCache {
        &self.kernels
    }

    /// Transport part of the stem map: φ on `[0, τ̄]`, then φ(τ̄) carried
    /// along characteristics and attenuated by K.
    pub fn transport(&self) -> &Field {
        &self.transport
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[inline]
    fn along(&self, lag: usize, i: usize) -> &Stencil {
        &self.along[lag * self.grid.n_m() + i]
    }

    #[inline]
    fn division(&self, lag: usize, i: usize) -> Option<&DivisionTap> {
        self.division[lag * self.grid.n_m() + i].as_ref()
    }

    fn check_field(&self, f: &Field, what: &str) -> Result<()> {
        if !f.matches(&self.grid) {
            return Err(Error::domain(format!(
                "{what} is {} x {}, grid is {} x {}",
                f.rows(),
                f.cols(),
                self.grid.n_t(),
                self.grid.n_m()
            )));
        }
        if !f.is_finite() {
            return Err(Error::numeric(format!("{what} contains non-finite values")));
        }
        Ok(())
    }
}

/// Which population a map updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    N,
    P,
    C,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::N, Stage::P, Stage::C];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::N => "N",
            Stage::P => "P",
            Stage::C => "C",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the three maps with its frozen inputs.
#[derive(Debug, Clone, Copy)]
pub struct StageMap<'a> {
    pub which: Stage,
    pub ctx: &'a MapContext,
    pub n_star: Option<&'a Field>,
    pub p_star: Option<&'a Field>,
}

impl<'a> StageMap<'a> {
    pub fn n(ctx: &'a MapContext) -> Self {
        StageMap {
            which: Stage::N,
            ctx,
            n_star: None,
            p_star: None,
        }
    }

    pub fn p(ctx: &'a MapContext, n_star: &'a Field) -> Self {
        StageMap {
            which: Stage::P,
            ctx,
            n_star: Some(n_star),
            p_star: None,
        }
    }

    pub fn c(ctx: &'a MapContext, n_star: &'a Field, p_star: &'a Field) -> Self {
        StageMap {
            which: Stage::C,
            ctx,
            n_star: Some(n_star),
            p_star: Some(p_star),
        }
    }

    pub fn apply(&self, prev: &Field) -> Result<Field> {
        let missing = |what: &str| Error::domain(format!("{} map needs {what}", self.which));
        match self.which {
            Stage::N => apply_n_map(prev, self.ctx),
            Stage::P => apply_p_map(prev, self.n_star.ok_or_else(|| missing("N*"))?, self.ctx),
            Stage::C => apply_c_map(
                prev,
                self.n_star.ok_or_else(|| missing("N*"))?,
                self.p_star.ok_or_else(|| missing("P*"))?,
                self.ctx,
            ),
        }
    }
}

/// Stem map with β evaluated at the input itself (Picard freezing).
pub fn apply_n_map(n_prev: &Field, ctx: &MapContext) -> Result<Field> {
    apply_n_map_frozen(n_prev, n_prev, ctx)
}

/// Stem map that is linear in `n_prev`: β is evaluated at `freeze`.
///
/// For `t <= τ̄` returns φ. Beyond, the transport term minus the outflow to
/// the proliferating phase plus the division inflow, both as trapezoid sums
/// over `s ∈ [τ̄, t]`.
pub fn apply_n_map_frozen(n_prev: &Field, freeze: &Field, ctx: &MapContext) -> Result<Field> {
    ctx.check_field(n_prev, "N iterate")?;
    ctx.check_field(freeze, "frozen N")?;
    let grid = &ctx.grid;
    let (n_t, n_m) = (grid.n_t(), grid.n_m());
    let j_hi = grid.tau_hi_index();
    let h = grid.h_t();
    let beta = &ctx.rates.beta;

    let columns = map_indices(n_m, |i| {
        let mut col = vec![0.0; n_t];
        for (j, c) in col.iter_mut().enumerate().take(j_hi + 1) {
            *c = ctx.init.phi.get(j, i);
        }
        for (j, c) in col.iter_mut().enumerate().skip(j_hi + 1) {
            let mut outflow = 0.0;
            let mut inflow = 0.0;
            for l in j_hi..=j {
                let w = if l == j_hi || l == j { 0.5 } else { 1.0 };
                let lag = j - l;
                let st = ctx.along(lag, i);
                let y = ctx.flow.at(lag, i);
                let x = st.apply(n_prev.row(l));
                let xf = st.apply(freeze.row(l));
                outflow += w * ctx.kernels.k(lag, i) * beta.eval(y, xf) * x;
                if let Some(tap) = ctx.division(lag, i) {
                    let row = l - j_hi;
                    let x = tap.stencil.apply(n_prev.row(row));
                    let xf = tap.stencil.apply(freeze.row(row));
                    inflow += w * tap.coef * beta.eval(tap.mother, xf) * x;
                }
            }
            *c = ctx.transport.get(j, i) - h * outflow + h * inflow;
        }
        col
    });
    finish(Field::from_columns(n_t, &columns), "N")
}

/// Dense `(A, b)` with `apply_n_map_frozen(x, freeze) = A x + b`, unknowns
/// ordered row-major in `(t, m)`. Meant for small grids.
pub fn assemble_n_operator(freeze: &Field, ctx: &MapContext) -> Result<(Vec<f64>, Vec<f64>)> {
    ctx.check_field(freeze, "frozen N")?;
    let grid = &ctx.grid;
    let (n_t, n_m) = (grid.n_t(), grid.n_m());
    let dim = n_t * n_m;
    let j_hi = grid.tau_hi_index();
    let h = grid.h_t();
    let beta = &ctx.rates.beta;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    let mut add = |row: usize, st: &Stencil, t_row: usize, value: f64| {
        let base = row * dim + t_row * n_m;
        a[base + st.lo] += value * (1.0 - st.w);
        if st.w != 0.0 {
            a[base + st.lo + 1] += value * st.w;
        }
    };
    for j in 0..n_t {
        for i in 0..n_m {
            let row = j * n_m + i;
            b[row] = ctx.transport.get(j, i);
            if j <= j_hi {
                continue;
            }
            for l in j_hi..=j {
                let w = if l == j_hi || l == j { 0.5 } else { 1.0 };
                let lag = j - l;
                let st = ctx.along(lag, i);
                let y = ctx.flow.at(lag, i);
                let rate = beta.eval(y, st.apply(freeze.row(l)));
                add(row, st, l, -h * w * ctx.kernels.k(lag, i) * rate);
                if let Some(tap) = ctx.division(lag, i) {
                    let r = l - j_hi;
                    let rate = beta.eval(tap.mother, tap.stencil.apply(freeze.row(r)));
                    add(row, &tap.stencil, r, h * w * tap.coef * rate);
                }
            }
        }
    }
    Ok((a, b))
}

/// Proliferating map. The right-hand side depends only on the frozen stem
/// field, so `p_prev` is checked but otherwise unused.
///
/// `P = e^{-E t} ψ(min(t, τ̄), m) + ∫_0^t e^{-E (t-s)} ∫_0^m F(s, z) dz ds`
/// with `E = v' - γ` and `F` the newborn flux minus the outflow at age τ̄.
pub fn apply_p_map(p_prev: &Field, n_star: &Field, ctx: &MapContext) -> Result<Field> {
    ctx.check_field(p_prev, "P iterate")?;
    ctx.check_field(n_star, "N*")?;
    let grid = &ctx.grid;
    let (n_t, n_m) = (grid.n_t(), grid.n_m());
    let j_hi = grid.tau_hi_index();
    let h_t = grid.h_t();
    let h_m = grid.h_m();
    let beta = &ctx.rates.beta;
    let psi = &ctx.init.psi;

    // Outflow at age τ̄. Before τ̄ it comes from the initial datum, after τ̄
    // from newborns of time s - τ̄; at s = τ̄ both one-sided values are kept.
    let outflow_initial = |j: usize, i: usize| {
        let y = ctx.along(j, i);
        ctx.kernels.varsigma(j, i) * y.apply(psi.row(j_hi - j))
    };
    let outflow_newborn = |j: usize, i: usize| {
        let y = ctx.flow.at(j_hi, i);
        let x = ctx.along(j_hi, i).apply(n_star.row(j - j_hi));
        ctx.kernels.varsigma(j, i) * beta.flux(y, x)
    };
    let inner = |j: usize, newborn_branch: bool| -> Vec<f64> {
        let f: Vec<f64> = (0..n_m)
            .map(|i| {
                let out = if newborn_branch {
                    outflow_newborn(j, i)
                } else {
                    outflow_initial(j, i)
                };
                beta.flux(grid.m(i), n_star.get(j, i)) - out
            })
            .collect();
        cumulative_trapezoid(&f, h_m)
    };
    // q_left[j]: value approached from s < t_j; q_right[j]: from s > t_j.
    let q_right: Vec<Vec<f64>> = (0..n_t).map(|j| inner(j, j >= j_hi)).collect();
    let q_left_hi = inner(j_hi, false);

    let columns = map_indices(n_m, |i| {
        let m = grid.m(i);
        let e = ctx.rates.v.derivative(m) - ctx.rates.gamma.eval(m);
        let step = (-e * h_t).exp();
        let mut col = vec![0.0; n_t];
        let mut conv = 0.0;
        for (j, c) in col.iter_mut().enumerate() {
            if j > 0 {
                let q_prev = q_right[j - 1][i];
                let q_here = if j == j_hi { q_left_hi[i] } else { q_right[j][i] };
                conv = step * (conv + 0.5 * h_t * q_prev) + 0.5 * h_t * q_here;
            }
            let age = j.min(j_hi);
            *c = (-e * grid.t(j)).exp() * psi.get(age, i) + conv;
        }
        col
    });
    finish(Field::from_columns(n_t, &columns), "P")
}

/// Damaged map. Like the proliferating map its right-hand side depends only
/// on the frozen fields; `c_prev` is checked but otherwise unused.
///
/// `C = W (e^{-Λ(t)} + ∫_0^t e^{-(Λ(t)-Λ(s))} ∫_0^m F(s, z) dz ds)` with
/// `W = ∫_{τ̲}^{τ̄} Ω da`, `Λ' = u' - α(P*)` and `F = α(P*) P* - F_C`.
pub fn apply_c_map(c_prev: &Field, n_star: &Field, p_star: &Field, ctx: &MapContext) -> Result<Field> {
    ctx.check_field(c_prev, "C iterate")?;
    ctx.check_field(n_star, "N*")?;
    ctx.check_field(p_star, "P*")?;
    let grid = &ctx.grid;
    let (n_t, n_m) = (grid.n_t(), grid.n_m());
    let (j_lo, j_hi) = (grid.tau_lo_index(), grid.tau_hi_index());
    let h_t = grid.h_t();
    let rates = &ctx.rates;
    let omega = &ctx.init.omega;
    let sign = match ctx.switches.fc_sign {
        FcSign::Minus => 1.0,
        FcSign::Plus => -1.0,
    };

    let weight: Vec<f64> = (0..n_m)
        .map(|i| {
            let ages: Vec<f64> = (j_lo..=j_hi).map(|k| omega.get(k, i)).collect();
            trapezoid(&ages, h_t)
        })
        .collect::<Result<_>>()?;

    // Source rows F(s, ·) integrated in maturity.
    let rows = map_indices(n_t, |j| {
        let t = grid.t(j);
        let f: Vec<f64> = (0..n_m)
            .map(|i| {
                let m = grid.m(i);
                let p = p_star.get(j, i);
                let alpha = rates.alpha.eval(m, p);
                let a = alpha - rates.u.derivative(m);
                let sigma = rates.sigma.eval(m);
                let c_at = |k: usize| gompertz_value(omega.get(k, i), a, sigma, t);
                let clogc: Vec<f64> = (j_lo..=j_hi).map(|k| c_log_c(c_at(k))).collect();
                let age_integral = trapezoid(&clogc, h_t).unwrap_or(0.0);
                let f_c = sign * (-sigma * age_integral - c_at(j_hi));
                alpha * p - f_c
            })
            .collect();
        cumulative_trapezoid(&f, grid.h_m())
    });

    let columns = map_indices(n_m, |i| {
        let m = grid.m(i);
        let du = rates.u.derivative(m);
        let growth: Vec<f64> = (0..n_t)
            .map(|j| du - rates.alpha.eval(m, p_star.get(j, i)))
            .collect();
        let lambda = cumulative_trapezoid(&growth, h_t);
        let mut col = vec![0.0; n_t];
        let mut conv = 0.0;
        for (j, c) in col.iter_mut().enumerate() {
            if j > 0 {
                let step = (-(lambda[j] - lambda[j - 1])).exp();
                conv = step * (conv + 0.5 * h_t * rows[j - 1][i]) + 0.5 * h_t * rows[j][i];
            }
            let decay = (-lambda[j]).exp();
            *c = if ctx.switches.omega_scales_integral_term {
                weight[i] * (decay + conv)
            } else {
                weight[i] * decay + conv
            };
        }
        col
    });
    finish(Field::from_columns(n_t, &columns), "C")
}

fn finish(field: Field, what: &str) -> Result<Field> {
    if field.is_finite() {
        Ok(field)
    } else {
        Err(Error::numeric(format!("{what} map produced non-finite values")))
    }
}
