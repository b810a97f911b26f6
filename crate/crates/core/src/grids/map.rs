use super::{c_transform, cbar_transform, concavity_defect, Cost, Grid, Point, ScalarField};
use crate::error::{Error, Result};

/// Tolerance for accepting a field as c-concave, relative to its sup norm.
const CONCAVE_TOL: f64 = 1e-10;

/// Samples of a transport map on the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportMapSample {
    grid: Grid,
    /// Image `T(y)` of every source node `y`, inside the node hull.
    pub forward: Vec<Point>,
    /// Preimage `T⁻¹(x)` of every target node `x`, when available.
    pub inverse: Option<Vec<Point>>,
}

impl TransportMapSample {
    pub fn new(grid: Grid, forward: Vec<Point>, inverse: Option<Vec<Point>>) -> Result<Self> {
        if forward.len() != grid.len() || inverse.as_ref().is_some_and(|v| v.len() != grid.len()) {
            return Err(Error::GridMismatch("map sample length".into()));
        }
        let forward = forward.into_iter().map(|t| grid.clamp(t)).collect();
        let inverse = inverse.map(|v| v.into_iter().map(|t| grid.clamp(t)).collect());
        Ok(TransportMapSample { grid, forward, inverse })
    }

    pub fn identity(grid: Grid) -> Self {
        let nodes = grid.nodes();
        TransportMapSample { grid, forward: nodes.clone(), inverse: Some(nodes) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Largest displacement `|T(y) − y|`.
    pub fn max_displacement(&self) -> f64 {
        self.forward
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let y = self.grid.node(i);
                ((t[0] - y[0]).powi(2) + (t[1] - y[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn require_c_concave(p: &ScalarField, cost: &Cost) -> Result<()> {
    let scale = p.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let defect = concavity_defect(p, cost);
    if defect > CONCAVE_TOL * scale {
        return Err(Error::NotCConcave { defect });
    }
    Ok(())
}

/// Forward map of a c-concave pressure.
///
/// Quadratic cost: `T(y) = y − τ∇p^c(y)` and `T⁻¹(x) = x + τ∇p(x)` from the
/// discrete gradient, clamped to the node hull. Other costs use the nodal
/// argmin/argmax.
pub fn forward_map(p: &ScalarField, cost: &Cost) -> Result<TransportMapSample> {
    require_c_concave(p, cost)?;
    let grid = *p.grid();
    match cost {
        Cost::Quadratic { tau } => {
            let pc = c_transform(p, cost).values;
            let gpc = grid.gradient(pc.values());
            let gp = grid.gradient(p.values());
            let nodes = grid.nodes();
            let forward = nodes
                .iter()
                .zip(&gpc)
                .map(|(y, g)| [y[0] - tau * g[0], y[1] - tau * g[1]])
                .collect();
            let inverse = nodes
                .iter()
                .zip(&gp)
                .map(|(x, g)| [x[0] + tau * g[0], x[1] + tau * g[1]])
                .collect();
            TransportMapSample::new(grid, forward, Some(inverse))
        }
        Cost::TranslationKernel(_) => argmin_map(p, cost),
    }
}

/// Map from the recorded extremizers: `T(y) = argmin_x p(x) + c(x, y)` and
/// `T⁻¹(x) = argmax_y p^c(y) − c(x, y)`, both over nodes.
pub fn argmin_map(p: &ScalarField, cost: &Cost) -> Result<TransportMapSample> {
    let grid = *p.grid();
    let t = c_transform(p, cost);
    let back = cbar_transform(&t.values, cost);
    let forward = t.argmin.iter().map(|&j| grid.node(j)).collect();
    let inverse = back.argmin.iter().map(|&j| grid.node(j)).collect();
    TransportMapSample::new(grid, forward, Some(inverse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::FieldRole;

    fn three_nodes() -> Grid {
        Grid::new(1, &[3], &[-0.25], &[1.5]).unwrap()
    }

    #[test]
    fn constant_pressure_gives_identity() {
        let g = Grid::rect(4, 5, 1.0, 1.0).unwrap();
        let cost = Cost::quadratic(0.2).unwrap();
        let p = ScalarField::constant(g, 0.7, FieldRole::Pressure).unwrap();
        let map = forward_map(&p, &cost).unwrap();
        assert_eq!(map, TransportMapSample::identity(g));
    }

    #[test]
    fn three_node_map() {
        let g = three_nodes();
        let cost = Cost::quadratic(0.5).unwrap();
        let p = ScalarField::pressure(g, vec![0.0, 0.25, 0.0]).unwrap();
        let map = forward_map(&p, &cost).unwrap();
        assert_eq!(map.forward[0][0], 0.0);
        assert_eq!(map.forward[1][0], 0.5);
        assert_eq!(map.forward[2][0], 1.0);
        let arg = argmin_map(&p, &cost).unwrap();
        assert_eq!(arg.forward[0][0], 0.0);
    }

    #[test]
    fn rejects_non_concave_pressure() {
        let g = three_nodes();
        let cost = Cost::quadratic(0.5).unwrap();
        let p = ScalarField::pressure(g, vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(forward_map(&p, &cost), Err(Error::NotCConcave { .. })));
    }
}
