//! Stem, proliferating and damaged cell populations structured by age and
//! maturity, solved along characteristics with chained Picard iterations.
//!
//! The stem field `N(t, m)` is computed first, then the proliferating field
//! `P` with `N` frozen, then the damaged field `C` with both frozen. The
//! [`stability`] module checks exponential decay of the trivial equilibrium.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod closed_forms;
pub mod config;
pub mod discretization;
pub mod error;
pub mod model;
pub mod picard;
pub mod runner;
pub mod stability;

pub use error::{Error, Result};

pub(crate) mod par {
    /// `(0..n).map(f)` collected in index order, in parallel when enabled.
    #[cfg(feature = "parallel")]
    pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        (0..n).map(f).collect()
    }
}
