use crate::error::{Error, Result};

use super::Grid;

/// Population values on a `(time, maturity)` lattice, row-major in time.
///
/// Also used for initial data, whose rows are age (or history-time) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Field {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// All-zero field on the full `(t, m)` lattice of `grid`.
    pub fn zeros_on(grid: &Grid) -> Self {
        Field::zeros(grid.n_t(), grid.n_m())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for i in 0..cols {
                values.push(f(j, i));
            }
        }
        Field { rows, cols, values }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::domain(format!(
                "{} values do not fill a {rows} x {cols} field",
                values.len()
            )));
        }
        Ok(Field { rows, cols, values })
    }

    /// Assemble from per-maturity columns, each of length `rows`.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        Field::from_fn(rows, cols, |j, i| columns[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.cols + i]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.values[j * self.cols + i] = v;
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|j| self.get(j, i)).collect()
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.rows == grid.n_t() && self.cols == grid.n_m()
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |self - other|`; shapes must agree.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        assert!(self.same_shape(other), "field shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// `max_i |f(j, i)|` over the first `cols` maturity nodes of row `j`.
    pub fn row_sup(&self, j: usize, cols: usize) -> f64 {
        self.row(j)[..cols.min(self.cols)]
            .iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keep every `step`-th row and column (nested-grid restriction).
    pub fn restrict(&self, step: usize) -> Field {
        let rows = (self.rows - 1) / step + 1;
        let cols = (self.cols - 1) / step + 1;
        Field::from_fn(rows, cols, |j, i| self.get(j * step, i * step))
    }
}
