//! c-transform of the multilinear interpolant for the quadratic cost.
//!
//! For nodal values `p` let `P` be their piecewise (bi)linear interpolant on
//! the node hull. Every source node `y` gets
//!
//! ```text
//! p^c(y) = min_{x in hull} P(x) + |x − y|² / (2τ)
//! ```
//!
//! computed exactly: each cell is minimized in closed form and cells are
//! pruned by a lower bound, so the result is the global minimum. The
//! minimizer `T(y)` is returned with its multilinear weights, which makes
//! `Σ_y a_y w(T(y))` the exact derivative of `Σ_y a_y p^c(y)` in `p`.

use rayon::prelude::*;

use super::{Grid, Point};

/// Location of the minimizer for one source node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellHit {
    /// Lower corner of the cell, per axis.
    pub cell: [usize; 2],
    /// Offset inside the cell, per axis, as a fraction of the cell width.
    pub theta: [f64; 2],
    /// Axes along which the minimizer lies strictly inside the cell.
    pub free: [bool; 2],
    /// Mixed derivative of the interpolant on this cell.
    pub twist: f64,
    pub point: Point,
}

/// Result of [`interpolated_c_transform`].
#[derive(Clone, Debug)]
pub struct InterpolatedTransform {
    grid: Grid,
    tau: f64,
    pub margin: f64,
    pub values: Vec<f64>,
    pub hits: Vec<CellHit>,
    /// Per source node, other minimizers within a small margin of the minimum.
    pub alternatives: Vec<Vec<Alternative>>,
}

struct CellGeom {
    lo: [f64; 2],
    width: [f64; 2],
    corners: [usize; 4],
}

fn cell_geom(grid: &Grid, c: [usize; 2]) -> CellGeom {
    let mut lo = [0.0; 2];
    let mut width = [0.0; 2];
    let mut hi_idx = c;
    for a in 0..2 {
        if a < grid.dim() {
            lo[a] = grid.coord(a, c[a]);
            if grid.n(a) > 1 {
                width[a] = grid.spacing(a);
                hi_idx[a] = c[a] + 1;
            }
        }
    }
    CellGeom {
        lo,
        width,
        corners: [
            grid.index(c[0], c[1]),
            grid.index(hi_idx[0], c[1]),
            grid.index(c[0], hi_idx[1]),
            grid.index(hi_idx[0], hi_idx[1]),
        ],
    }
}

/// Candidate minimum on one cell: (value, u, v, free0, free1).
fn minimize_cell(p: &[f64], g: &CellGeom, y: Point, tau: f64) -> (f64, f64, f64, bool, bool, f64) {
    let [c00, c10, c01, c11] = g.corners;
    let (p00, p10, p01, p11) = (p[c00], p[c10], p[c01], p[c11]);
    let [w0, w1] = g.width;
    let b0 = if w0 > 0.0 { (p10 - p00) / w0 } else { 0.0 };
    let b1 = if w1 > 0.0 { (p01 - p00) / w1 } else { 0.0 };
    let gm = if w0 > 0.0 && w1 > 0.0 { (p11 - p10 - p01 + p00) / (w0 * w1) } else { 0.0 };
    let y0 = y[0] - g.lo[0];
    let y1 = y[1] - g.lo[1];
    let f = |u: f64, v: f64| {
        p00 + b0 * u + b1 * v + gm * u * v + ((u - y0) * (u - y0) + (v - y1) * (v - y1)) / (2.0 * tau)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, false, false, gm);
    let mut consider = |u: f64, v: f64, f0: bool, f1: bool| {
        let val = f(u, v);
        if val < best.0 {
            best = (val, u, v, f0, f1, gm);
        }
    };
    // Interior stationary point.
    if w0 > 0.0 && w1 > 0.0 {
        let det = 1.0 - tau * tau * gm * gm;
        if det > 0.0 {
            let r0 = y0 - tau * b0;
            let r1 = y1 - tau * b1;
            let u = (r0 - tau * gm * r1) / det;
            let v = (r1 - tau * gm * r0) / det;
            if u > 0.0 && u < w0 && v > 0.0 && v < w1 {
                consider(u, v, true, true);
            }
        }
    }
    // Edges with v fixed, u free.
    let v_edges: &[f64] = if w1 > 0.0 { &[0.0, w1] } else { &[0.0] };
    for &v in v_edges {
        let slope = b0 + gm * v;
        let u = (y0 - tau * slope).clamp(0.0, w0);
        consider(u, v, u > 0.0 && u < w0, false);
    }
    if w1 > 0.0 {
        // Edges with u fixed, v free.
        let u_edges: &[f64] = if w0 > 0.0 { &[0.0, w0] } else { &[0.0] };
        for &u in u_edges {
            let slope = b1 + gm * u;
            let v = (y1 - tau * slope).clamp(0.0, w1);
            consider(u, v, false, v > 0.0 && v < w1);
        }
    }
    best
}

fn cell_count(grid: &Grid, a: usize) -> usize {
    if a >= grid.dim() {
        1
    } else {
        grid.n(a).saturating_sub(1).max(1)
    }
}

/// Range of cell indices along `a` whose interval meets `[lo, hi]`.
fn cell_range(grid: &Grid, a: usize, lo: f64, hi: f64) -> (usize, usize) {
    let m = cell_count(grid, a);
    if a >= grid.dim() || grid.n(a) == 1 {
        return (0, 0);
    }
    let h = grid.spacing(a);
    let x0 = grid.coord(a, 0);
    let first = ((lo - x0) / h).floor().max(0.0) as usize;
    let last = ((hi - x0) / h).floor().max(0.0) as usize;
    (first.min(m - 1), last.min(m - 1))
}

fn box_distance_sq(g: &CellGeom, y: Point) -> f64 {
    let mut d2 = 0.0;
    for a in 0..2 {
        let lo = g.lo[a];
        let hi = lo + g.width[a];
        let d = if y[a] < lo { lo - y[a] } else if y[a] > hi { y[a] - hi } else { 0.0 };
        d2 += d * d;
    }
    d2
}

/// Near-optimal minimizer away from the best one, for mass splitting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alternative {
    /// Objective value above the minimum, `≥ 0`.
    pub excess: f64,
    pub hit: CellHit,
}

/// Most alternatives kept per source node.
const MAX_ALTERNATIVES: usize = 4;

fn transform_one(grid: &Grid, p: &[f64], pmin: f64, margin: f64, tau: f64, yi: usize) -> (f64, CellHit, Vec<(f64, CellHit)>) {
    let y = grid.node(yi);
    let yc = grid.multi_index(yi);
    let mut best_val = f64::INFINITY;
    let mut best = CellHit { cell: [0, 0], theta: [0.0; 2], free: [false; 2], twist: 0.0, point: y };
    let mut seen: Vec<(f64, CellHit)> = Vec::new();
    let eval = |c: [usize; 2], best_val: &mut f64, best: &mut CellHit, seen: &mut Vec<(f64, CellHit)>| {
        let g = cell_geom(grid, c);
        let (val, u, v, f0, f1, gm) = minimize_cell(p, &g, y, tau);
        let theta = [
            if g.width[0] > 0.0 { u / g.width[0] } else { 0.0 },
            if g.width[1] > 0.0 { v / g.width[1] } else { 0.0 },
        ];
        let hit = CellHit { cell: c, theta, free: [f0, f1], twist: gm, point: [g.lo[0] + u, g.lo[1] + v] };
        if val < *best_val {
            *best_val = val;
            *best = hit;
        }
        seen.push((val, hit));
    };
    // Seed with the cells around the source node.
    let m0 = cell_count(grid, 0);
    let m1 = cell_count(grid, 1);
    let mut seeded = Vec::with_capacity(4);
    for c0 in yc[0].saturating_sub(1)..=yc[0].min(m0 - 1) {
        for c1 in yc[1].saturating_sub(1)..=yc[1].min(m1 - 1) {
            eval([c0, c1], &mut best_val, &mut best, &mut seen);
            seeded.push([c0, c1]);
        }
    }
    let radius = (2.0 * tau * (best_val + margin - pmin)).max(0.0).sqrt();
    let (a0, b0) = cell_range(grid, 0, y[0] - radius, y[0] + radius);
    let (a1, b1) = cell_range(grid, 1, y[1] - radius, y[1] + radius);
    for c0 in a0..=b0 {
        for c1 in a1..=b1 {
            if seeded.contains(&[c0, c1]) {
                continue;
            }
            let g = cell_geom(grid, [c0, c1]);
            let corner_min = g.corners.iter().map(|&k| p[k]).fold(f64::INFINITY, f64::min);
            if corner_min + box_distance_sq(&g, y) / (2.0 * tau) >= best_val + margin {
                continue;
            }
            eval([c0, c1], &mut best_val, &mut best, &mut seen);
        }
    }
    // Alternatives: other local minima within the margin. A candidate on a
    // cell side is a local minimum only if no neighbouring cell across that
    // side does better.
    let genuine = |val: f64, h: &CellHit| {
        for a in 0..grid.dim() {
            let m = cell_count(grid, a);
            let across = if h.theta[a] <= 0.0 && h.cell[a] > 0 {
                Some(h.cell[a] - 1)
            } else if h.theta[a] >= 1.0 && h.cell[a] + 1 < m {
                Some(h.cell[a] + 1)
            } else {
                None
            };
            if let Some(c) = across {
                let mut nb = h.cell;
                nb[a] = c;
                if seen.iter().any(|(v, o)| o.cell == nb && *v < val - 1e-14 * (1.0 + val.abs())) {
                    return false;
                }
            }
        }
        true
    };
    let same = {
        let tol = 1e-9 * (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
        move |a: Point, b: Point| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    };
    let mut order: Vec<usize> = (0..seen.len()).collect();
    order.sort_by(|&i, &j| seen[i].0.total_cmp(&seen[j].0));
    let mut alts: Vec<(f64, CellHit)> = Vec::new();
    for i in order {
        let (val, hit) = seen[i];
        if alts.len() == MAX_ALTERNATIVES || val > best_val + margin {
            break;
        }
        if same(hit.point, best.point) || alts.iter().any(|(_, h)| same(h.point, hit.point)) {
            continue;
        }
        if genuine(val, &hit) {
            alts.push((val, hit));
        }
    }
    (best_val, best, alts)
}

fn hit_weights(grid: &Grid, h: &CellHit) -> ([(usize, f64); 4], usize) {
    let g = cell_geom(grid, h.cell);
    let [t0, t1] = h.theta;
    let w = [(1.0 - t0) * (1.0 - t1), t0 * (1.0 - t1), (1.0 - t0) * t1, t0 * t1];
    let mut out = [(0usize, 0.0f64); 4];
    for k in 0..4 {
        out[k] = (g.corners[k], w[k]);
    }
    (out, 4)
}

/// `Σ w p + |T − y|² / 2τ` evaluated through the splat weights.
fn hit_value(grid: &Grid, p: &[f64], tau: f64, y: Point, h: &CellHit) -> f64 {
    let (w, k) = hit_weights(grid, h);
    let interp: f64 = w[..k].iter().map(|&(i, wt)| wt * p[i]).sum();
    let d2 = (h.point[0] - y[0]).powi(2) + (h.point[1] - y[1]).powi(2);
    interp + d2 / (2.0 * tau)
}

/// Local minimizer of `P + |· − y|²/2τ` reached from cell `start` by moving
/// across clamped cell sides while that lowers the value, with its value.
pub fn local_minimizer(grid: &Grid, p: &[f64], tau: f64, yi: usize, start: [usize; 2]) -> (f64, CellHit) {
    let y = grid.node(yi);
    let solve = |c: [usize; 2]| {
        let g = cell_geom(grid, c);
        let (_, u, v, f0, f1, gm) = minimize_cell(p, &g, y, tau);
        let theta = [
            if g.width[0] > 0.0 { u / g.width[0] } else { 0.0 },
            if g.width[1] > 0.0 { v / g.width[1] } else { 0.0 },
        ];
        let hit = CellHit { cell: c, theta, free: [f0, f1], twist: gm, point: [g.lo[0] + u, g.lo[1] + v] };
        (hit_value(grid, p, tau, y, &hit), hit)
    };
    let mut cur = solve(start);
    for _ in 0..grid.len() {
        let mut best: Option<(f64, CellHit)> = None;
        for a in 0..grid.dim() {
            let m = cell_count(grid, a);
            let h = &cur.1;
            let across = if h.theta[a] <= 0.0 && h.cell[a] > 0 {
                Some(h.cell[a] - 1)
            } else if h.theta[a] >= 1.0 && h.cell[a] + 1 < m {
                Some(h.cell[a] + 1)
            } else {
                None
            };
            if let Some(c) = across {
                let mut nb = h.cell;
                nb[a] = c;
                let cand = solve(nb);
                if cand.0 < cur.0 - 1e-15 * (1.0 + cur.0.abs()) && best.is_none_or(|b| cand.0 < b.0) {
                    best = Some(cand);
                }
            }
        }
        match best {
            Some(b) => cur = b,
            None => break,
        }
    }
    cur
}

/// Default margin for alternatives: `10⁻³` of the pressure range.
pub fn default_margin(p: &[f64]) -> f64 {
    let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
    let pmax = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    1e-3 * (pmax - pmin) + 1e-12 * (1.0 + pmin.abs().max(pmax.abs()))
}

/// Exact c-transform of the multilinear interpolant of `p` at every node.
pub fn interpolated_c_transform(grid: &Grid, p: &[f64], tau: f64) -> InterpolatedTransform {
    interpolated_c_transform_with_margin(grid, p, tau, default_margin(p))
}

/// As [`interpolated_c_transform`], keeping local minima within `margin`
/// of the minimum as alternatives.
pub fn interpolated_c_transform_with_margin(grid: &Grid, p: &[f64], tau: f64, margin: f64) -> InterpolatedTransform {
    assert_eq!(p.len(), grid.len());
    assert!(tau > 0.0);
    let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<_> = (0..grid.len()).into_par_iter().map(|yi| transform_one(grid, p, pmin, margin, tau, yi)).collect();
    let mut values = Vec::with_capacity(raw.len());
    let mut hits = Vec::with_capacity(raw.len());
    let mut alternatives = Vec::with_capacity(raw.len());
    // Values are recomputed through the splat weights so that Σ w p matches
    // the pushed-forward pairing bit for bit.
    for (yi, (_, hit, alts)) in raw.into_iter().enumerate() {
        let y = grid.node(yi);
        let v = hit_value(grid, p, tau, y, &hit);
        values.push(v);
        hits.push(hit);
        alternatives.push(
            alts.into_iter()
                .map(|(_, h)| Alternative { excess: (hit_value(grid, p, tau, y, &h) - v).max(0.0), hit: h })
                .collect(),
        );
    }
    InterpolatedTransform { grid: *grid, tau, margin, values, hits, alternatives }
}

impl InterpolatedTransform {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn targets(&self) -> Vec<Point> {
        self.hits.iter().map(|h| h.point).collect()
    }

    /// Corner nodes and multilinear weights of `T(y)`.
    pub fn weights(&self, y: usize) -> ([(usize, f64); 4], usize) {
        hit_weights(&self.grid, &self.hits[y])
    }

    /// Corner nodes and weights of an arbitrary minimizer location.
    pub fn hit_weights(&self, h: &CellHit) -> ([(usize, f64); 4], usize) {
        hit_weights(&self.grid, h)
    }

    /// Curvature of `p ↦ p^c(y)`: `p^c(y)` is locally `min_u` of a quadratic
    /// in the free offsets `u`, so its Hessian in `p` is `−G M⁻¹ Gᵀ` with
    /// `G = ∂w/∂u` and `M = ∇²_u (P + c)`. Returns the corners and `G M⁻¹ Gᵀ`.
    pub fn curvature(&self, y: usize) -> Option<([usize; 4], [[f64; 4]; 4])> {
        self.curvature_at(&self.hits[y])
    }

    /// As [`InterpolatedTransform::curvature`] for any minimizer location.
    pub fn curvature_at(&self, h: &CellHit) -> Option<([usize; 4], [[f64; 4]; 4])> {
        if !h.free[0] && !h.free[1] {
            return None;
        }
        let g = cell_geom(&self.grid, h.cell);
        let [t0, t1] = h.theta;
        let mut grads: Vec<[f64; 4]> = Vec::with_capacity(2);
        let mut axes = Vec::with_capacity(2);
        if h.free[0] {
            let s = 1.0 / g.width[0];
            grads.push([-(1.0 - t1) * s, (1.0 - t1) * s, -t1 * s, t1 * s]);
            axes.push(0);
        }
        if h.free[1] {
            let s = 1.0 / g.width[1];
            grads.push([-(1.0 - t0) * s, -t0 * s, (1.0 - t0) * s, t0 * s]);
            axes.push(1);
        }
        let inv_tau = 1.0 / self.tau;
        // Inverse of M restricted to the free axes.
        let minv: [[f64; 2]; 2] = if axes.len() == 1 {
            [[self.tau, 0.0], [0.0, 0.0]]
        } else {
            let det = inv_tau * inv_tau - h.twist * h.twist;
            if det <= 0.0 {
                return None;
            }
            [[inv_tau / det, -h.twist / det], [-h.twist / det, inv_tau / det]]
        };
        let mut k = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for (a, ga) in grads.iter().enumerate() {
                    for (b, gb) in grads.iter().enumerate() {
                        acc += ga[i] * minv[a][b] * gb[j];
                    }
                }
                k[i][j] = acc;
            }
        }
        Some((g.corners, k))
    }
}
