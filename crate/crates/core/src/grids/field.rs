use super::Grid;
use crate::error::{Error, Result};

/// What a field's values mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    Density,
    Pressure,
}

/// Nodal values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    role: FieldRole,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, role: FieldRole) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        if role == FieldRole::Density {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "negative density {} at node {i}",
                    values[i]
                )));
            }
        }
        Ok(ScalarField { grid, values, role })
    }

    pub fn density(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(grid, values, FieldRole::Density)
    }

    pub fn pressure(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(grid, values, FieldRole::Pressure)
    }

    pub fn constant(grid: Grid, value: f64, role: FieldRole) -> Result<ScalarField> {
        ScalarField::new(grid, vec![value; grid.len()], role)
    }

    pub fn from_fn(grid: Grid, role: FieldRole, f: impl Fn([f64; 2]) -> f64) -> Result<ScalarField> {
        let values = grid.nodes().into_iter().map(f).collect();
        ScalarField::new(grid, values, role)
    }

    /// Builds a field without validation. Callers guarantee the length.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>, role: FieldRole) -> ScalarField {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values, role }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> ScalarField {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ values · h^d`, summed in index order.
    pub fn mass(&self) -> f64 {
        let mut acc = 0.0;
        for v in &self.values {
            acc += v;
        }
        acc * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ |a - b| h^d`.
    pub fn l1_distance(&self, other: &ScalarField) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += (a - b).abs();
        }
        acc * self.grid.cell_volume()
    }

    /// One-sided norm `‖(self − other)₊‖₁`.
    pub fn positive_part_l1(&self, other: &ScalarField) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += (a - b).max(0.0);
        }
        acc * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            role: self.role,
        }
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        self.map(|v| v * factor)
    }

    /// Discrete total variation `Σ |Δv| h^{d-1}` over nearest-neighbour pairs.
    pub fn total_variation(&self) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for a in 0..g.dim() {
            let face = g.cell_volume() / g.spacing(a);
            for idx in 0..g.len() {
                let mut m = g.multi_index(idx);
                if m[a] + 1 < g.n(a) {
                    m[a] += 1;
                    acc += (self.values[g.index(m[0], m[1])] - self.values[idx]).abs() * face;
                }
            }
        }
        acc
    }
}
