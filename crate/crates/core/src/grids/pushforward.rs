use super::{FieldRole, Grid, Point, ScalarField, TransportMapSample};
use crate::error::Result;

/// Locate `t` along `axis`: lower node index and fractional offset in `[0, 1]`.
fn locate(grid: &Grid, axis: usize, t: f64) -> (usize, f64) {
    let n = grid.n(axis);
    if n == 1 {
        return (0, 0.0);
    }
    let h = grid.spacing(axis);
    let u = (t - grid.coord(axis, 0)) / h;
    if u <= 0.0 {
        return (0, 0.0);
    }
    let i = (u.floor() as usize).min(n - 2);
    let theta = (u - i as f64).clamp(0.0, 1.0);
    (i, theta)
}

/// Multilinear interpolation weights of `pt` (clamped to the node hull).
/// Returns up to four `(node, weight)` pairs; weights sum to one.
pub fn splat_weights(grid: &Grid, pt: Point) -> ([(usize, f64); 4], usize) {
    let mut out = [(0usize, 0.0f64); 4];
    let (i0, t0) = locate(grid, 0, pt[0]);
    if grid.dim() == 1 {
        let n0 = grid.n(0);
        if n0 == 1 {
            out[0] = (0, 1.0);
            return (out, 1);
        }
        out[0] = (i0, 1.0 - t0);
        out[1] = (i0 + 1, t0);
        return (out, 2);
    }
    let (i1, t1) = locate(grid, 1, pt[1]);
    let j0 = if grid.n(0) > 1 { i0 + 1 } else { i0 };
    let j1 = if grid.n(1) > 1 { i1 + 1 } else { i1 };
    out[0] = (grid.index(i0, i1), (1.0 - t0) * (1.0 - t1));
    out[1] = (grid.index(j0, i1), t0 * (1.0 - t1));
    out[2] = (grid.index(i0, j1), (1.0 - t0) * t1);
    out[3] = (grid.index(j0, j1), t0 * t1);
    (out, 4)
}

/// Deposit each node's mass `ρ̄(y) h^d` at `T(y)` with multilinear weights.
pub fn pushforward(rho: &ScalarField, map: &TransportMapSample) -> Result<ScalarField> {
    rho.grid().check_same(map.grid())?;
    Ok(ScalarField::from_raw(
        *rho.grid(),
        splat_density(rho.grid(), rho.values(), &map.forward),
        FieldRole::Density,
    ))
}

/// Splat of nodal densities through target points, returned as a density.
pub(crate) fn splat_density(grid: &Grid, rho: &[f64], targets: &[Point]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (&r, &t) in rho.iter().zip(targets) {
        if r == 0.0 {
            continue;
        }
        let (w, k) = splat_weights(grid, t);
        for &(idx, wt) in &w[..k] {
            out[idx] += r * wt;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_reproduces_density() {
        let g = Grid::rect(4, 3, 1.0, 1.0).unwrap();
        let rho = ScalarField::density(g, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let map = TransportMapSample::identity(g);
        let out = pushforward(&rho, &map).unwrap();
        for (a, b) in out.values().iter().zip(rho.values()) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn one_cell_shift() {
        let g = Grid::line(6, 1.0).unwrap();
        let rho = ScalarField::density(g, vec![0.0, 1.0, 2.0, 0.5, 0.0, 0.0]).unwrap();
        let h = g.spacing(0);
        let forward = g.nodes().iter().map(|x| [x[0] + h, 0.0]).collect();
        let map = TransportMapSample::new(g, forward, None).unwrap();
        let out = pushforward(&rho, &map).unwrap();
        let expect = [0.0, 0.0, 1.0, 2.0, 0.5, 0.0];
        for (a, b) in out.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn out_of_hull_targets_are_clamped() {
        let g = Grid::line(4, 1.0).unwrap();
        let (w, k) = splat_weights(&g, [-3.0, 0.0]);
        assert_eq!(&w[..k], &[(0, 1.0), (1, 0.0)]);
        let (w, k) = splat_weights(&g, [9.0, 0.0]);
        assert_eq!(&w[..k], &[(2, 0.0), (3, 1.0)]);
    }
}
