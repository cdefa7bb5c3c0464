//! Model parameters, rate families and assumption checks.

mod params;
mod rates;
mod validate;

pub use params::{InitialData, ModelParams, Profile, Shape};
pub use rates::{
    eval_rate, BivariateRate, MaturityMap, RateFunction, RateRef, RateSet, Table, Velocity,
};
pub use validate::{
    flux_lipschitz, lipschitz_estimate, validate_assumptions, CheckEntry, ValidationReport,
    Witness, LIPSCHITZ_SAMPLES, VALIDATION_SAMPLES,
};
