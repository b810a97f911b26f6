//! Nodal c-transforms.
//!
//! `p^c(x) = min_y p(y) + c(x, y)` and `q^c̄(x) = max_y q(y) − c(x, y)` with
//! both extrema taken over grid nodes. The quadratic cost has a separable
//! lower-envelope evaluation that is linear per axis.

use rayon::prelude::*;

use super::{Cost, FieldRole, Grid, ScalarField};

/// Transformed values together with the extremizing source node per target.
#[derive(Clone, Debug)]
pub struct NodalTransform {
    pub values: ScalarField,
    pub argmin: Vec<usize>,
}

fn check_finite(p: &ScalarField) {
    assert!(p.values().iter().all(|v| v.is_finite()), "transform input must be finite");
}

/// Exhaustive min over all node pairs. Ties go to the lowest source index.
pub fn c_transform_brute(p: &ScalarField, cost: &Cost) -> NodalTransform {
    check_finite(p);
    let grid = *p.grid();
    let nodes = grid.nodes();
    let vals = p.values();
    let (values, argmin): (Vec<f64>, Vec<usize>) = nodes
        .par_iter()
        .map(|&x| {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (j, &y) in nodes.iter().enumerate() {
                let v = vals[j] + cost.eval(x, y);
                if v < best {
                    best = v;
                    arg = j;
                }
            }
            (best, arg)
        })
        .unzip();
    NodalTransform { values: ScalarField::from_raw(grid, values, FieldRole::Pressure), argmin }
}

/// Exhaustive max over all node pairs. Ties go to the lowest source index.
pub fn cbar_transform_brute(q: &ScalarField, cost: &Cost) -> NodalTransform {
    check_finite(q);
    let grid = *q.grid();
    let nodes = grid.nodes();
    let vals = q.values();
    let (values, argmin): (Vec<f64>, Vec<usize>) = nodes
        .par_iter()
        .map(|&x| {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (j, &y) in nodes.iter().enumerate() {
                let v = vals[j] - cost.eval(x, y);
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            (best, arg)
        })
        .unzip();
    NodalTransform { values: ScalarField::from_raw(grid, values, FieldRole::Pressure), argmin }
}

/// Lower envelope of the parabolas `f[j] + (x − j·h)² / (2τ)` sampled at the
/// same uniform positions. Returns the envelope and the active parabola.
fn lower_envelope(f: &[f64], h: f64, tau: f64, out: &mut [f64], arg: &mut [usize]) {
    let n = f.len();
    let pos = |j: usize| j as f64 * h;
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let key = |j: usize| 2.0 * tau * f[j] + pos(j) * pos(j);
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = (key(q) - key(v[k])) / (2.0 * (pos(q) - pos(v[k])));
        // z[0] = −∞ stops the pop loop at k = 0.
        while s <= z[k] {
            k -= 1;
            s = (key(q) - key(v[k])) / (2.0 * (pos(q) - pos(v[k])));
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for x in 0..n {
        let xp = pos(x);
        while z[k + 1] < xp {
            k += 1;
        }
        let j = v[k];
        let d = xp - pos(j);
        out[x] = f[j] + d * d / (2.0 * tau);
        arg[x] = j;
    }
}

/// Separable lower-envelope transform for `c = |x − y|²/(2τ)`.
pub fn c_transform_fast_quadratic(p: &ScalarField, tau: f64) -> NodalTransform {
    check_finite(p);
    assert!(tau > 0.0);
    let grid = *p.grid();
    let [n0, n1] = grid.shape();
    if grid.dim() == 1 {
        let mut out = vec![0.0; n0];
        let mut arg = vec![0; n0];
        lower_envelope(p.values(), grid.spacing(0), tau, &mut out, &mut arg);
        return NodalTransform { values: ScalarField::from_raw(grid, out, FieldRole::Pressure), argmin: arg };
    }
    // Rows first (axis 1), then columns (axis 0).
    let h0 = grid.spacing(0);
    let h1 = grid.spacing(1);
    let mut rows = vec![0.0; grid.len()];
    let mut row_arg = vec![0usize; grid.len()];
    rows.par_chunks_mut(n1)
        .zip(row_arg.par_chunks_mut(n1))
        .enumerate()
        .for_each(|(i0, (out, arg))| {
            lower_envelope(&p.values()[i0 * n1..(i0 + 1) * n1], h1, tau, out, arg);
        });
    let cols: Vec<(Vec<f64>, Vec<usize>)> = (0..n1)
        .into_par_iter()
        .map(|i1| {
            let col: Vec<f64> = (0..n0).map(|i0| rows[i0 * n1 + i1]).collect();
            let mut out = vec![0.0; n0];
            let mut arg = vec![0; n0];
            lower_envelope(&col, h0, tau, &mut out, &mut arg);
            (out, arg)
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    let mut argmin = vec![0usize; grid.len()];
    for (i1, (out, arg)) in cols.into_iter().enumerate() {
        for i0 in 0..n0 {
            let idx = i0 * n1 + i1;
            values[idx] = out[i0];
            let src_row = arg[i0];
            argmin[idx] = src_row * n1 + row_arg[src_row * n1 + i1];
        }
    }
    NodalTransform { values: ScalarField::from_raw(grid, values, FieldRole::Pressure), argmin }
}

/// `p^c`, using the lower-envelope path for quadratic costs and brute force otherwise.
pub fn c_transform(p: &ScalarField, cost: &Cost) -> NodalTransform {
    match cost {
        Cost::Quadratic { tau } => c_transform_fast_quadratic(p, *tau),
        Cost::TranslationKernel(_) => c_transform_brute(p, cost),
    }
}

/// `q^c̄ = −(−q)^c`.
pub fn cbar_transform(q: &ScalarField, cost: &Cost) -> NodalTransform {
    match cost {
        Cost::Quadratic { tau } => {
            let neg = q.map(|v| -v);
            let t = c_transform_fast_quadratic(&neg, *tau);
            NodalTransform { values: t.values.map(|v| -v), argmin: t.argmin }
        }
        Cost::TranslationKernel(_) => cbar_transform_brute(q, cost),
    }
}

/// `p^{c c̄}`: the largest c-concave field below `p`.
pub fn c_concavify(p: &ScalarField, cost: &Cost) -> ScalarField {
    let pc = c_transform(p, cost).values;
    cbar_transform(&pc, cost).values
}

/// `max_x p(x) − p^{c c̄}(x)`; zero for c-concave fields.
pub fn concavity_defect(p: &ScalarField, cost: &Cost) -> f64 {
    let q = c_concavify(p, cost);
    p.values().iter().zip(q.values()).map(|(a, b)| a - b).fold(0.0, f64::max)
}

/// Lipschitz constant shared by every c-concave field on the node hull.
pub fn lipschitz_bound(grid: &Grid, cost: &Cost) -> f64 {
    let diam = (0..grid.dim())
        .map(|a| {
            let (lo, hi) = grid.node_hull(a);
            (hi - lo) * (hi - lo)
        })
        .sum::<f64>()
        .sqrt();
    cost.max_gradient(diam)
}

/// Largest forward-difference slope `|Δp| / h` along any axis.
pub fn max_discrete_gradient(p: &ScalarField) -> f64 {
    let g = p.grid();
    let v = p.values();
    let mut best: f64 = 0.0;
    for a in 0..g.dim() {
        let h = g.spacing(a);
        for idx in 0..g.len() {
            let mut m = g.multi_index(idx);
            if m[a] + 1 < g.n(a) {
                m[a] += 1;
                best = best.max((v[g.index(m[0], m[1])] - v[idx]).abs() / h);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nodes {0, 0.5, 1}.
    fn three_nodes() -> Grid {
        Grid::new(1, &[3], &[-0.25], &[1.5]).unwrap()
    }

    #[test]
    fn three_node_c_transform() {
        let g = three_nodes();
        let cost = Cost::quadratic(0.5).unwrap();
        let p = ScalarField::pressure(g, vec![0.0, 1.0, 0.0]).unwrap();
        let brute = c_transform_brute(&p, &cost);
        assert_eq!(brute.values.values(), &[0.0, 0.25, 0.0]);
        assert_eq!(brute.argmin, vec![0, 0, 2]);
        let fast = c_transform_fast_quadratic(&p, 0.5);
        assert_eq!(fast.values.values(), &[0.0, 0.25, 0.0]);
    }

    #[test]
    fn three_node_cbar_and_concavify() {
        let g = three_nodes();
        let cost = Cost::quadratic(0.5).unwrap();
        let q = ScalarField::pressure(g, vec![0.0, 0.25, 0.0]).unwrap();
        assert_eq!(cbar_transform_brute(&q, &cost).values.values(), &[0.0, 0.25, 0.0]);
        assert_eq!(cbar_transform(&q, &cost).values.values(), &[0.0, 0.25, 0.0]);
        let p = ScalarField::pressure(g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c_concavify(&p, &cost).values(), &[0.0, 0.25, 0.0]);
        // Already c-concave: unchanged.
        assert_eq!(c_concavify(&q, &cost).values(), q.values());
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = Grid::rect(5, 4, 1.0, 2.0).unwrap();
        let cost = Cost::quadratic(0.1).unwrap();
        let zero = ScalarField::constant(g, 0.0, FieldRole::Pressure).unwrap();
        let t = c_transform_brute(&zero, &cost);
        assert!(t.values.values().iter().all(|&v| v == 0.0));
        assert_eq!(t.argmin, (0..g.len()).collect::<Vec<_>>());
        let kappa = ScalarField::constant(g, -2.5, FieldRole::Pressure).unwrap();
        assert!(c_transform(&kappa, &cost).values.values().iter().all(|&v| v == -2.5));
        assert!(cbar_transform(&kappa, &cost).values.values().iter().all(|&v| v == -2.5));
    }

    #[test]
    fn envelope_handles_dominating_parabola() {
        // A very low value at the end dominates all earlier parabolas.
        let g = Grid::line(6, 1.0).unwrap();
        let p = ScalarField::pressure(g, vec![5.0, 4.0, 3.0, 2.0, 1.0, -100.0]).unwrap();
        let cost = Cost::quadratic(10.0).unwrap();
        let brute = c_transform_brute(&p, &cost);
        let fast = c_transform_fast_quadratic(&p, 10.0);
        assert_eq!(brute.argmin, fast.argmin);
        for (a, b) in brute.values.values().iter().zip(fast.values.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_cost_uses_brute_force() {
        let g = Grid::line(8, 1.0).unwrap();
        let k = super::super::RadialKernel::new(vec![0.0, 1.0], vec![0.0, 3.0]).unwrap();
        let cost = Cost::TranslationKernel(k);
        let p = ScalarField::pressure(g, vec![0.0, 1.0, 0.3, -0.2, 0.8, 0.1, 0.5, 0.9]).unwrap();
        let a = c_transform(&p, &cost);
        let b = c_transform_brute(&p, &cost);
        assert_eq!(a.values, b.values);
    }
}
