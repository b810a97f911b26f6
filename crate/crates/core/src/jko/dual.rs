//! Primal and dual objectives of one step and their joint evaluation.

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::grids::interp::{interpolated_c_transform, CellHit, InterpolatedTransform};
use crate::grids::{c_transform, Cost, FieldRole, Grid, Point, ScalarField, TransportMapSample};

/// How the dual objective pairs `p^c` with the data.
///
/// `Interpolated` transforms the multilinear interpolant of `p` and sends
/// each source node to the exact minimizer, which lands anywhere in the node
/// hull and is splatted back (quadratic cost only). `Nodal` minimizes over
/// nodes and moves whole cells. Both give exact weak duality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualMode {
    Auto,
    Interpolated,
    Nodal,
}

impl DualMode {
    pub fn resolve(self, cost: &Cost) -> DualMode {
        match (self, cost) {
            (DualMode::Auto, Cost::Quadratic { .. }) => DualMode::Interpolated,
            (DualMode::Auto, _) => DualMode::Nodal,
            (DualMode::Interpolated, Cost::TranslationKernel(_)) => DualMode::Nodal,
            (m, _) => m,
        }
    }
}

/// `E(ρ) = Σ s(ρ(x), x) h^d`.
pub fn energy_value(rho: &ScalarField, energy: &EnergyDensity) -> Extended {
    let hd = rho.grid().cell_volume();
    rho.values().iter().enumerate().map(|(x, &z)| energy.s(z, x)).sum::<Extended>().scale(hd)
}

/// `E*(p) = Σ s*(p(x), x) h^d`; infinite values are rejected.
pub fn dual_energy(p: &ScalarField, energy: &EnergyDensity) -> Result<f64> {
    let hd = p.grid().cell_volume();
    let mut acc = 0.0;
    for (x, &v) in p.values().iter().enumerate() {
        match energy.s_star(v, x) {
            Extended::Finite(s) => acc += s,
            Extended::Infinite => return Err(Error::InfiniteDualEnergy { node: x }),
        }
    }
    Ok(acc * hd)
}

/// `J*(p, ρ̄) = Σ ρ̄ p^c h^d − E*(p)`.
pub fn dual_value(p: &ScalarField, rho_bar: &ScalarField, energy: &EnergyDensity, cost: &Cost) -> Result<f64> {
    dual_value_with(p, rho_bar, energy, cost, DualMode::Auto)
}

pub fn dual_value_with(
    p: &ScalarField,
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    mode: DualMode,
) -> Result<f64> {
    p.grid().check_same(rho_bar.grid())?;
    Evaluation::new(p.values(), rho_bar, energy, cost, mode.resolve(cost), 0.0)?.ok_or_else(|| {
        let node = p.values().iter().enumerate().find(|(x, &v)| !energy.s_star(v, *x).is_finite()).map_or(0, |t| t.0);
        Error::InfiniteDualEnergy { node }
    }).map(|e| e.dual)
}

/// `J(ρ, ρ̄) ≤ E(ρ) + Σ c(T(y), y) ρ̄(y) h^d` for the Monge coupling of `map`.
/// When `ρ` is the pushforward of `ρ̄` through `map` this bounds the step's
/// optimal value from above.
pub fn primal_value(
    rho: &ScalarField,
    rho_bar: &ScalarField,
    map: &TransportMapSample,
    energy: &EnergyDensity,
    cost: &Cost,
) -> Result<Extended> {
    rho.grid().check_same(rho_bar.grid())?;
    rho.grid().check_same(map.grid())?;
    let (m0, m1) = (rho.mass(), rho_bar.mass());
    if (m0 - m1).abs() > 1e-10 * m1.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::MassMismatch { left: m0, right: m1 });
    }
    Ok(energy_value(rho, energy) + transport_cost(rho_bar, &map.forward, cost))
}

/// As [`primal_value`] for a plan that diverts part of the mass along `splits`.
pub fn primal_value_with_splits(
    rho: &ScalarField,
    rho_bar: &ScalarField,
    map: &TransportMapSample,
    splits: &[MassSplit],
    energy: &EnergyDensity,
    cost: &Cost,
) -> Result<Extended> {
    primal_value(rho, rho_bar, map, energy, cost)?;
    Ok(energy_value(rho, energy) + split_transport_cost(rho_bar, &map.forward, splits, cost))
}

/// `Σ c(T(y), y) ρ̄(y) h^d`.
pub fn transport_cost(rho_bar: &ScalarField, targets: &[Point], cost: &Cost) -> f64 {
    let grid = rho_bar.grid();
    let hd = grid.cell_volume();
    rho_bar
        .values()
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(y, (&r, &t))| if r == 0.0 { 0.0 } else { r * hd * cost.eval(t, grid.node(y)) })
        .sum()
}

/// Part of a source node's mass sent to a second minimizer of `P + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassSplit {
    pub source: usize,
    pub target: Point,
    /// Fraction of the source mass, in `(0, 1]`.
    pub fraction: f64,
}

/// Transport cost of a map with some mass diverted along `splits`.
pub fn split_transport_cost(rho_bar: &ScalarField, targets: &[Point], splits: &[MassSplit], cost: &Cost) -> f64 {
    let grid = rho_bar.grid();
    let hd = grid.cell_volume();
    let mut kept = vec![1.0; grid.len()];
    let mut extra = 0.0;
    for s in splits {
        kept[s.source] -= s.fraction;
        let r = rho_bar.values()[s.source];
        extra += r * hd * s.fraction * cost.eval(s.target, grid.node(s.source));
    }
    let base: f64 = rho_bar
        .values()
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(y, (&r, &t))| if r == 0.0 { 0.0 } else { r * hd * kept[y] * cost.eval(t, grid.node(y)) })
        .sum();
    base + extra
}

/// `Σ h^d [s(ρ) + s*(p) − ρ p]`.
pub(crate) fn fy_sum(grid: &Grid, rho: &[f64], p: &[f64], energy: &EnergyDensity) -> f64 {
    let mut acc = 0.0;
    for (x, (&z, &v)) in rho.iter().zip(p).enumerate() {
        match energy.fenchel_young_gap(z, v, x) {
            Extended::Finite(g) => acc += g,
            Extended::Infinite => return f64::INFINITY,
        }
    }
    acc * grid.cell_volume()
}

/// Everything the ascent needs at one pressure.
///
/// With `eps > 0` the mass of each source node is shared among its local
/// minimizers with weights `∝ exp(−Δ/eps)`, and the ascent works on the
/// matching soft-min objective. `dual` is always the exact dual and `gap`
/// the exact gap of the shared plan.
pub(crate) struct Evaluation {
    pub dual: f64,
    /// Soft-min dual `≤ dual`; equal to it when `eps = 0`.
    pub smooth: f64,
    pub eps: f64,
    /// Pushed-forward density of the (shared) plan.
    pub rho: Vec<f64>,
    /// Gradient of the soft-min dual, `h^d (ρ − z)` with `z ∈ ∂ₚs*(p)` nearest to `ρ`.
    pub grad: Vec<f64>,
    pub targets: Vec<Point>,
    pub transport: f64,
    pub transform: Option<InterpolatedTransform>,
    /// Fractions sent to each alternative, parallel to the transform's alternatives.
    pub theta: Vec<Vec<f64>>,
    /// `Σ a_y θ Δ`: value lost by sharing relative to the minimum.
    pub split_excess: f64,
}

impl Evaluation {
    /// `None` when `E*(p)` is infinite.
    pub(crate) fn new(
        p: &[f64],
        rho_bar: &ScalarField,
        energy: &EnergyDensity,
        cost: &Cost,
        mode: DualMode,
        eps: f64,
    ) -> Result<Option<Evaluation>> {
        let grid = *rho_bar.grid();
        let hd = grid.cell_volume();
        let a: Vec<f64> = rho_bar.values().iter().map(|r| r * hd).collect();
        let mut star = 0.0;
        for (x, &v) in p.iter().enumerate() {
            match energy.s_star(v, x) {
                Extended::Finite(s) => star += s * hd,
                Extended::Infinite => return Ok(None),
            }
        }
        let mut rho = vec![0.0; grid.len()];
        let mut paired = 0.0;
        let mut soft = 0.0;
        let mut excess = 0.0;
        let mut transport = 0.0;
        let mut theta = Vec::new();
        let (targets, transform, eps) = match mode {
            DualMode::Interpolated | DualMode::Auto => {
                let tau = cost
                    .tau()
                    .ok_or_else(|| Error::InvalidArgument("interpolated dual needs a quadratic cost".into()))?;
                let tr = interpolated_c_transform(&grid, p, tau);
                theta = vec![Vec::new(); grid.len()];
                for (y, &ay) in a.iter().enumerate() {
                    if ay == 0.0 {
                        continue;
                    }
                    let node = grid.node(y);
                    let alts = &tr.alternatives[y];
                    let mut kept = 1.0;
                    let mut shift = 0.0;
                    if eps > 0.0 && !alts.is_empty() {
                        let e: Vec<f64> = alts.iter().map(|al| (-al.excess / eps).exp()).collect();
                        let z = 1.0 + e.iter().sum::<f64>();
                        theta[y] = e.iter().map(|v| v / z).collect();
                        kept = 1.0 / z;
                        shift = eps * z.ln();
                        for (al, &t) in alts.iter().zip(&theta[y]) {
                            let (w, k) = tr.hit_weights(&al.hit);
                            for &(i, wt) in &w[..k] {
                                rho[i] += ay * t * wt;
                            }
                            excess += ay * t * al.excess;
                            transport += ay * t * cost.eval(al.hit.point, node);
                        }
                    } else {
                        theta[y] = vec![0.0; alts.len()];
                    }
                    let (w, k) = tr.weights(y);
                    for &(i, wt) in &w[..k] {
                        rho[i] += ay * kept * wt;
                    }
                    transport += ay * kept * cost.eval(tr.hits[y].point, node);
                    paired += ay * tr.values[y];
                    soft += ay * (tr.values[y] - shift);
                }
                (tr.targets(), Some(tr), eps)
            }
            DualMode::Nodal => {
                let field = ScalarField::from_raw(grid, p.to_vec(), FieldRole::Pressure);
                let nt = c_transform(&field, cost);
                for (y, &ay) in a.iter().enumerate() {
                    rho[nt.argmin[y]] += ay;
                }
                paired = a.iter().zip(nt.values.values()).map(|(ay, v)| ay * v).sum();
                soft = paired;
                let targets: Vec<Point> = nt.argmin.iter().map(|&i| grid.node(i)).collect();
                transport = transport_cost(rho_bar, &targets, cost);
                (targets, None, 0.0)
            }
        };
        rho.iter_mut().for_each(|r| *r /= hd);
        let grad = supergradient(&rho, p, energy, hd);
        Ok(Some(Evaluation {
            dual: paired - star,
            smooth: soft - star,
            eps,
            rho,
            grad,
            targets,
            transport,
            transform,
            theta,
            split_excess: excess,
        }))
    }

    /// `Σ h^d [s(ρ) + s*(p) − ρ p] + Σ a_y θ Δ`, the exact gap of this
    /// primal–dual pair.
    pub(crate) fn gap(&self, grid: &Grid, p: &[f64], energy: &EnergyDensity) -> f64 {
        fy_sum(grid, &self.rho, p, energy) + self.split_excess
    }

    pub(crate) fn energy(&self, grid: &Grid, energy: &EnergyDensity) -> Extended {
        let hd = grid.cell_volume();
        self.rho.iter().enumerate().map(|(x, &z)| energy.s(z, x)).sum::<Extended>().scale(hd)
    }

    /// Mass splits of the current plan.
    pub(crate) fn splits(&self) -> Vec<(MassSplit, CellHit)> {
        let Some(tr) = &self.transform else { return Vec::new() };
        let mut out = Vec::new();
        for (y, th) in self.theta.iter().enumerate() {
            for (al, &t) in tr.alternatives[y].iter().zip(th) {
                if t > 0.0 {
                    out.push((MassSplit { source: y, target: al.hit.point, fraction: t }, al.hit));
                }
            }
        }
        out
    }

    /// Lower the gap by re-sharing the mass of source nodes among their
    /// local minimizers: coordinate descent on `E(ρ) + Σ a_y θ Δ` over the
    /// fractions, from the current ones. Keeps the result only if the gap
    /// drops; returns the gap.
    pub(crate) fn refine_plan(&mut self, rho_bar: &ScalarField, p: &[f64], energy: &EnergyDensity, cost: &Cost) -> f64 {
        let grid = *rho_bar.grid();
        let hd = grid.cell_volume();
        let base = self.gap(&grid, p, energy);
        let Some(tr) = &self.transform else { return base };
        struct Var {
            source: usize,
            alt: usize,
            excess: f64,
            dir: Vec<(usize, f64)>,
        }
        let mut vars: Vec<Var> = Vec::new();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for (y, alts) in tr.alternatives.iter().enumerate() {
            let r = rho_bar.values()[y];
            if r == 0.0 || alts.is_empty() {
                continue;
            }
            let ay = r * hd;
            let (w1, k1) = tr.weights(y);
            let start = vars.len();
            for (j, alt) in alts.iter().enumerate() {
                let (wj, kj) = tr.hit_weights(&alt.hit);
                let mut dir: Vec<(usize, f64)> = Vec::with_capacity(8);
                dir.extend(wj[..kj].iter().map(|&(i, w)| (i, ay * w / hd)));
                dir.extend(w1[..k1].iter().map(|&(i, w)| (i, -ay * w / hd)));
                dir.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(8);
                for (i, v) in dir {
                    match merged.last_mut() {
                        Some(last) if last.0 == i => last.1 += v,
                        _ => merged.push((i, v)),
                    }
                }
                merged.retain(|e| e.1 != 0.0);
                vars.push(Var { source: y, alt: j, excess: ay * alt.excess, dir: merged });
            }
            groups.push((start, vars.len()));
        }
        if vars.is_empty() {
            return base;
        }
        let mut theta = self.theta.clone();
        let mut rho = self.rho.clone();
        // One-sided derivative of t ↦ E(ρ + t u) + t·excess.
        let slope = |rho: &[f64], v: &Var, t: f64, right: bool| -> f64 {
            let mut acc = v.excess;
            for &(i, u) in &v.dir {
                let z = (rho[i] + t * u).max(0.0);
                let (lo, hi) = energy.subdiff_s(z, i).map_or((f64::INFINITY, f64::INFINITY), |iv| (iv.lo, iv.hi));
                let pick = if (u > 0.0) == right { hi } else { lo };
                acc += hd * u * pick;
            }
            if acc.is_nan() {
                0.0
            } else {
                acc
            }
        };
        for _sweep in 0..200 {
            let mut moved = 0.0f64;
            for &(start, end) in &groups {
                for v in &vars[start..end] {
                    let used: f64 = theta[v.source].iter().sum();
                    let cur = theta[v.source][v.alt];
                    let (tlo, thi) = (-cur, 1.0 - used);
                    let t = if thi > 1e-15 && slope(&rho, v, 0.0, true) < 0.0 {
                        if slope(&rho, v, thi, false) <= 0.0 {
                            thi
                        } else {
                            let (mut a, mut b) = (0.0, thi);
                            for _ in 0..60 {
                                let m = 0.5 * (a + b);
                                if slope(&rho, v, m, true) < 0.0 {
                                    a = m;
                                } else {
                                    b = m;
                                }
                            }
                            0.5 * (a + b)
                        }
                    } else if tlo < -1e-15 && slope(&rho, v, 0.0, false) > 0.0 {
                        if slope(&rho, v, tlo, true) >= 0.0 {
                            tlo
                        } else {
                            let (mut a, mut b) = (tlo, 0.0);
                            for _ in 0..60 {
                                let m = 0.5 * (a + b);
                                if slope(&rho, v, m, false) > 0.0 {
                                    b = m;
                                } else {
                                    a = m;
                                }
                            }
                            0.5 * (a + b)
                        }
                    } else {
                        0.0
                    };
                    if t != 0.0 {
                        for &(i, u) in &v.dir {
                            rho[i] = (rho[i] + t * u).max(0.0);
                        }
                        theta[v.source][v.alt] = (cur + t).max(0.0);
                        moved = moved.max(t.abs());
                    }
                }
            }
            if moved < 1e-13 {
                break;
            }
        }
        let excess: f64 = vars.iter().map(|v| theta[v.source][v.alt] * v.excess).sum();
        let refined = fy_sum(&grid, &rho, p, energy) + excess;
        if refined < base {
            let splits: Vec<MassSplit> = self.splits_from(&theta);
            self.transport = split_transport_cost(rho_bar, &self.targets, &splits, cost);
            self.rho = rho;
            self.theta = theta;
            self.split_excess = excess;
            refined
        } else {
            base
        }
    }

    fn splits_from(&self, theta: &[Vec<f64>]) -> Vec<MassSplit> {
        let Some(tr) = &self.transform else { return Vec::new() };
        let mut out = Vec::new();
        for (y, th) in theta.iter().enumerate() {
            for (al, &t) in tr.alternatives[y].iter().zip(th) {
                if t > 0.0 {
                    out.push(MassSplit { source: y, target: al.hit.point, fraction: t });
                }
            }
        }
        out
    }
}

pub(crate) fn supergradient(rho: &[f64], p: &[f64], energy: &EnergyDensity, hd: f64) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(x, &v)| hd * (rho[x] - energy.subdiff_s_star(v, x).project(rho[x])))
        .collect()
}
