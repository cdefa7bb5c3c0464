//! Picard iteration, convergence diagnostics and weighted-norm contraction
//! estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::{Field, Grid, MapContext, Stage, StageMap};
use crate::error::{Error, Result};
use crate::par::map_indices;

/// Anything that maps a field to a field of the same shape.
pub trait FixedPointMap: Sync {
    fn apply(&self, x: &Field) -> Result<Field>;
}

impl FixedPointMap for StageMap<'_> {
    fn apply(&self, x: &Field) -> Result<Field> {
        StageMap::apply(self, x)
    }
}

impl<F> FixedPointMap for F
where
    F: Fn(&Field) -> Result<Field> + Sync,
{
    fn apply(&self, x: &Field) -> Result<Field> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Stop when successive iterates differ by less than this in sup norm.
    pub toll: f64,
    pub max_iter: usize,
    /// Tighter threshold used to compute the reference fixed point.
    pub reference_toll: f64,
}

impl Tolerances {
    pub fn new(toll: f64, max_iter: usize, reference_factor: f64) -> Result<Self> {
        let t = Tolerances {
            toll,
            max_iter,
            reference_toll: toll * reference_factor,
        };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.toll > 0.0 && self.reference_toll > 0.0 && self.reference_toll <= self.toll) {
            return Err(Error::Invalid(format!(
                "need 0 < reference_toll <= toll, got {} and {}",
                self.reference_toll, self.toll
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::Invalid("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            toll: 1e-8,
            max_iter: 200,
            reference_toll: 1e-12,
        }
    }
}

/// Record of one Picard run. Iterate `k` (1-based) is `iterates[k - 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardTrace {
    pub iterates: Vec<Field>,
    /// `||F^k - F^{k-1}||`, sup norm.
    pub increments: Vec<f64>,
    /// `e^k = ||F^k - F*||`, filled by [`diagnostics`].
    pub errors: Vec<f64>,
    /// `r^k = e^k / e^{k-1}`; `None` for `k = 1` or when `e^{k-1} = 0`.
    pub rates: Vec<Option<f64>>,
    pub converged: bool,
    /// Number of map applications.
    pub iterations: usize,
}

impl PicardTrace {
    /// Last defined rate.
    pub fn terminal_rate(&self) -> Option<f64> {
        self.rates.iter().rev().find_map(|r| *r)
    }

    /// Defined rates in order.
    pub fn defined_rates(&self) -> Vec<f64> {
        self.rates.iter().filter_map(|r| *r).collect()
    }
}

/// Iterate `F^{k+1} = map(F^k)` until the sup-norm increment drops below
/// `toll` or `max_iter` applications are spent. Returns the last iterate.
pub fn picard_solve(
    map: &impl FixedPointMap,
    initial: Field,
    tol: &Tolerances,
) -> Result<(Field, PicardTrace)> {
    tol.check()?;
    let mut trace = PicardTrace::default();
    let current = iterate(map, initial, tol.toll, tol.max_iter, &mut trace)?;
    Ok((current, trace))
}

fn iterate(
    map: &impl FixedPointMap,
    initial: Field,
    toll: f64,
    max_iter: usize,
    trace: &mut PicardTrace,
) -> Result<Field> {
    let mut current = initial;
    for _ in 0..max_iter {
        let next = map.apply(&current)?;
        if !next.same_shape(&current) {
            return Err(Error::domain("map changed the field shape"));
        }
        if !next.is_finite() {
            return Err(Error::numeric(format!(
                "iterate {} is not finite",
                trace.iterations + 1
            )));
        }
        let inc = next.sup_distance(&current);
        trace.iterations += 1;
        trace.increments.push(inc);
        trace.iterates.push(next.clone());
        current = next;
        if inc < toll {
            trace.converged = true;
            break;
        }
    }
    Ok(current)
}

/// Errors against `reference` and their successive ratios.
pub fn diagnostics(trace: &PicardTrace, reference: &Field) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    if trace.iterates.is_empty() {
        return Err(Error::domain("trace has no iterates"));
    }
    let mut errors = Vec::with_capacity(trace.iterates.len());
    for f in &trace.iterates {
        if !f.same_shape(reference) {
            return Err(Error::domain("reference shape differs from the iterates"));
        }
        errors.push(f.sup_distance(reference));
    }
    let rates = rates_of(&errors);
    Ok((errors, rates))
}

/// `r^k = e^k / e^{k-1}` aligned with `errors`.
pub fn rates_of(errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|k| (k > 0 && errors[k - 1] > 0.0).then(|| errors[k] / errors[k - 1]))
        .collect()
}

/// Converged field of one stage, its trace, and the reference fixed point.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub which: Stage,
    pub field: Field,
    pub reference: Field,
    pub trace: PicardTrace,
}

/// Picard solve from the zero field, then continue to `reference_toll` to
/// obtain `F*` and fill in `e^k` and `r^k`.
pub fn solve_stage(map: &impl FixedPointMap, which: Stage, zero: Field, tol: &Tolerances) -> Result<StageOutcome> {
    let (field, mut trace) = picard_solve(map, zero, tol)?;
    let reference = if trace.converged {
        let mut scratch = PicardTrace::default();
        iterate(map, field.clone(), tol.reference_toll, tol.max_iter, &mut scratch)?
    } else {
        field.clone()
    };
    let (errors, rates) = diagnostics(&trace, &reference)?;
    trace.errors = errors;
    trace.rates = rates;
    Ok(StageOutcome {
        which,
        field,
        reference,
        trace,
    })
}

/// Result of the chained solve. Later stages are absent when an earlier one
/// fails to converge.
#[derive(Debug, Clone)]
pub struct SystemSolution {
    pub stages: Vec<StageOutcome>,
}

impl SystemSolution {
    pub fn stage(&self, which: Stage) -> Option<&StageOutcome> {
        self.stages.iter().find(|s| s.which == which)
    }

    pub fn all_converged(&self) -> bool {
        self.stages.len() == 3 && self.stages.iter().all(|s| s.trace.converged)
    }

    pub fn n(&self) -> Option<&Field> {
        self.stage(Stage::N).map(|s| &s.field)
    }

    pub fn p(&self) -> Option<&Field> {
        self.stage(Stage::P).map(|s| &s.field)
    }

    pub fn c(&self) -> Option<&Field> {
        self.stage(Stage::C).map(|s| &s.field)
    }
}

/// Solve for N, then P with N frozen, then C with N and P frozen.
pub fn solve_system(ctx: &MapContext, tol: &Tolerances) -> Result<SystemSolution> {
    let zero = Field::zeros_on(ctx.grid());
    let mut stages = Vec::with_capacity(3);

    let n = solve_stage(&StageMap::n(ctx), Stage::N, zero.clone(), tol)?;
    let ok = n.trace.converged;
    stages.push(n);
    if !ok {
        return Ok(SystemSolution { stages });
    }
    let n_star = stages[0].field.clone();

    let p = solve_stage(&StageMap::p(ctx, &n_star), Stage::P, zero.clone(), tol)?;
    let ok = p.trace.converged;
    stages.push(p);
    if !ok {
        return Ok(SystemSolution { stages });
    }
    let p_star = stages[1].field.clone();

    let c = solve_stage(&StageMap::c(ctx, &n_star, &p_star), Stage::C, zero, tol)?;
    stages.push(c);
    Ok(SystemSolution { stages })
}

/// `max_t e^{-λ t} max_m |F(t, m)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorm {
    pub lambda: f64,
}

impl WeightedNorm {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("weight rate must be >= 0, got {lambda}")));
        }
        Ok(WeightedNorm { lambda })
    }

    pub fn eval(&self, field: &Field, grid: &Grid) -> f64 {
        let sups = row_sups(field);
        log_weighted(&sups, &grid.times(), self.lambda).exp()
    }
}

fn row_sups(field: &Field) -> Vec<f64> {
    (0..field.rows()).map(|j| field.row_sup(j, field.cols())).collect()
}

/// `ln max_j e^{-λ t_j} s_j`, computed in log space so large λ cannot underflow.
fn log_weighted(sups: &[f64], times: &[f64], lambda: f64) -> f64 {
    sups.iter()
        .zip(times)
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, t)| s.ln() - lambda * t)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Per-trial time profiles `max_m |F1 - F2|` and `max_m |map(F1) - map(F2)|`.
/// Any weight rate can then be evaluated without re-applying the map.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionProfiles {
    times: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl ContractionProfiles {
    /// Ratio `||map(F1) - map(F2)||_λ / ||F1 - F2||_λ` for each trial.
    pub fn ratios(&self, lambda: f64) -> Vec<f64> {
        self.inputs
            .iter()
            .zip(&self.outputs)
            .map(|(din, dout)| {
                let den = log_weighted(din, &self.times, lambda);
                let num = log_weighted(dout, &self.times, lambda);
                (num - den).exp()
            })
            .collect()
    }

    pub fn sup_ratio(&self, lambda: f64) -> f64 {
        self.ratios(lambda).into_iter().fold(0.0, f64::max)
    }

    pub fn trials(&self) -> usize {
        self.inputs.len()
    }
}

/// Draw `trials` seeded pairs of smoothed random fields in `[0, amplitude]`
/// and record their difference profiles before and after `map`.
pub fn contraction_profiles(
    map: &impl FixedPointMap,
    grid: &Grid,
    trials: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ContractionProfiles> {
    if trials < 1 {
        return Err(Error::domain("need at least one contraction trial"));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::domain(format!("amplitude must be positive, got {amplitude}")));
    }
    let (rows, cols) = (grid.n_t(), grid.n_m());
    let results = map_indices(trials, |trial| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        loop {
            let a = random_field(&mut rng, rows, cols, amplitude);
            let b = random_field(&mut rng, rows, cols, amplitude);
            let din = difference_profile(&a, &b);
            if din.iter().all(|d| *d == 0.0) {
                continue;
            }
            let dout = difference_profile(&map.apply(&a)?, &map.apply(&b)?);
            return Ok((din, dout));
        }
    });
    let mut inputs = Vec::with_capacity(trials);
    let mut outputs = Vec::with_capacity(trials);
    for r in results {
        let (din, dout) = r?;
        inputs.push(din);
        outputs.push(dout);
    }
    Ok(ContractionProfiles {
        times: grid.times(),
        inputs,
        outputs,
    })
}

/// Largest contraction ratio over the trials in the weighted norm, plus the
/// per-trial ratios.
pub fn contraction_ratio(
    map: &impl FixedPointMap,
    grid: &Grid,
    norm: WeightedNorm,
    trials: usize,
    amplitude: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let profiles = contraction_profiles(map, grid, trials, amplitude, seed)?;
    let ratios = profiles.ratios(norm.lambda);
    Ok((ratios.iter().copied().fold(0.0, f64::max), ratios))
}

/// Outcome of the search for the smallest contractive weight rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSearch {
    Contractive { lambda: f64, sup_ratio: f64 },
    /// Not contractive even at the upper end of the search interval.
    NotContractive { lambda_max: f64, sup_ratio: f64 },
}

impl LambdaSearch {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            LambdaSearch::Contractive { lambda, .. } => Some(*lambda),
            LambdaSearch::NotContractive { .. } => None,
        }
    }
}

/// Bisection on `[0, lambda_max]` (to `tol`) for the smallest weight rate
/// whose sup ratio is below 1.
pub fn minimal_contractive_lambda(profiles: &ContractionProfiles, lambda_max: f64, tol: f64) -> LambdaSearch {
    let top = profiles.sup_ratio(lambda_max);
    if top >= 1.0 {
        return LambdaSearch::NotContractive {
            lambda_max,
            sup_ratio: top,
        };
    }
    let at_zero = profiles.sup_ratio(0.0);
    if at_zero < 1.0 {
        return LambdaSearch::Contractive {
            lambda: 0.0,
            sup_ratio: at_zero,
        };
    }
    let (mut lo, mut hi) = (0.0, lambda_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if profiles.sup_ratio(mid) < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    LambdaSearch::Contractive {
        lambda: hi,
        sup_ratio: profiles.sup_ratio(hi),
    }
}

fn difference_profile(a: &Field, b: &Field) -> Vec<f64> {
    (0..a.rows())
        .map(|j| {
            a.row(j)
                .iter()
                .zip(b.row(j))
                .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
        })
        .collect()
}

/// Uniform values in `[0, amplitude]`, then one pass of averaging with the
/// available grid neighbors.
fn random_field(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amplitude: f64) -> Field {
    let raw = Field::from_fn(rows, cols, |_, _| amplitude * rng.random::<f64>());
    Field::from_fn(rows, cols, |j, i| {
        let mut sum = raw.get(j, i);
        let mut count = 1.0;
        let mut add = |jj: usize, ii: usize| {
            sum += raw.get(jj, ii);
            count += 1.0;
        };
        if j > 0 {
            add(j - 1, i);
        }
        if j + 1 < rows {
            add(j + 1, i);
        }
        if i > 0 {
            add(j, i - 1);
        }
        if i + 1 < cols {
            add(j, i + 1);
        }
        sum / count
    })
}
