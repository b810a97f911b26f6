//! Rectangular discretization of the domain, scalar fields, transport costs,
//! c/c̄-transforms, transport maps and mass-preserving pushforward.
//!
//! Nodes are cell centers of a box. Axis 0 is the slow (row) index, so a
//! 2-d field is stored row-major with `index = i0 * n1 + i1`.

mod cost;
mod field;
pub mod interp;
pub mod io;
mod map;
mod pushforward;
mod transform;

pub use cost::{Cost, RadialKernel};
pub use field::{FieldRole, ScalarField};
pub use map::{argmin_map, forward_map, TransportMapSample};
pub use pushforward::{pushforward, splat_weights};
pub use transform::{
    c_concavify, c_transform, c_transform_brute, c_transform_fast_quadratic, cbar_transform,
    cbar_transform_brute, concavity_defect, lipschitz_bound, max_discrete_gradient,
    NodalTransform,
};

use crate::error::{Error, Result};

/// Point in the (at most 2-d) domain. Unused trailing coordinates are zero.
pub type Point = [f64; 2];

/// Box domain `origin + [0, extent]` split into `n` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    origin: [f64; 2],
    extent: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, n: &[usize], origin: &[f64], extent: &[f64]) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {dim}")));
        }
        if n.len() != dim || origin.len() != dim || extent.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "expected {dim} entries for n/origin/extent"
            )));
        }
        let mut g = Grid { dim, n: [1, 1], origin: [0.0; 2], extent: [1.0; 2] };
        for a in 0..dim {
            if n[a] == 0 {
                return Err(Error::InvalidArgument("n must be positive".into()));
            }
            if !(extent[a] > 0.0) || !extent[a].is_finite() {
                return Err(Error::InvalidArgument(format!("extent must be > 0, got {}", extent[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidArgument("origin must be finite".into()));
            }
            g.n[a] = n[a];
            g.origin[a] = origin[a];
            g.extent[a] = extent[a];
        }
        Ok(g)
    }

    /// `[0, extent]` with `n` cells.
    pub fn line(n: usize, extent: f64) -> Result<Grid> {
        Grid::new(1, &[n], &[0.0], &[extent])
    }

    /// `[0, e0] × [0, e1]` with `n0 × n1` cells.
    pub fn rect(n0: usize, n1: usize, e0: f64, e1: f64) -> Result<Grid> {
        Grid::new(2, &[n0, n1], &[0.0, 0.0], &[e0, e1])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn origin(&self, axis: usize) -> f64 {
        self.origin[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.n[axis] as f64
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent[a]).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| self.extent[a] * self.extent[a]).sum::<f64>().sqrt()
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.n[1] + i1
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx / self.n[1], idx % self.n[1]]
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.spacing(axis)
    }

    pub fn node(&self, idx: usize) -> Point {
        let [i0, i1] = self.multi_index(idx);
        let mut pt = [0.0; 2];
        pt[0] = self.coord(0, i0);
        if self.dim == 2 {
            pt[1] = self.coord(1, i1);
        }
        pt
    }

    /// Every node coordinate in storage order.
    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Convex hull of the nodes along `axis`: `[first node, last node]`.
    pub fn node_hull(&self, axis: usize) -> (f64, f64) {
        (self.coord(axis, 0), self.coord(axis, self.n[axis] - 1))
    }

    /// Clamp a point into the node hull.
    pub fn clamp(&self, pt: Point) -> Point {
        let mut out = pt;
        for (a, v) in out.iter_mut().enumerate().take(self.dim) {
            let (lo, hi) = self.node_hull(a);
            *v = v.clamp(lo, hi);
        }
        out
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Discrete gradient of nodal values: centered in the interior,
    /// one-sided at the boundary, zero along axes with a single node.
    pub fn gradient(&self, values: &[f64]) -> Vec<Point> {
        assert_eq!(values.len(), self.len());
        let mut out = vec![[0.0; 2]; self.len()];
        for (idx, g) in out.iter_mut().enumerate() {
            let mi = self.multi_index(idx);
            for (a, ga) in g.iter_mut().enumerate().take(self.dim) {
                let n = self.n[a];
                if n < 2 {
                    continue;
                }
                let h = self.spacing(a);
                let at = |i: usize| {
                    let mut m = mi;
                    m[a] = i;
                    values[self.index(m[0], m[1])]
                };
                let i = mi[a];
                *ga = if i == 0 {
                    (at(1) - at(0)) / h
                } else if i == n - 1 {
                    (at(n - 1) - at(n - 2)) / h
                } else {
                    (at(i + 1) - at(i - 1)) / (2.0 * h)
                };
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_volume() {
        let g = Grid::rect(4, 8, 2.0, 1.0).unwrap();
        assert_eq!(g.spacing(0), 0.5);
        assert_eq!(g.spacing(1), 0.125);
        assert_eq!(g.volume(), 2.0);
        assert!((g.cell_volume() * g.len() as f64 - g.volume()).abs() < 1e-15);
        assert_eq!(g.node(g.index(1, 2)), [0.75, 0.3125]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(3, &[1, 1, 1], &[0.0; 3], &[1.0; 3]).is_err());
        assert!(Grid::line(0, 1.0).is_err());
        assert!(Grid::line(4, 0.0).is_err());
    }

    #[test]
    fn gradient_is_exact_on_linear_data() {
        let g = Grid::line(5, 1.0).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| 3.0 * x[0] - 1.0).collect();
        for d in g.gradient(&v) {
            assert!((d[0] - 3.0).abs() < 1e-12);
        }
    }
}
