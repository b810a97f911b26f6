//! One minimizing-movement step, solved by concave ascent on the dual.

mod dual;
mod kinks;
mod linalg;
mod polish;
mod select;

pub use dual::{
    dual_energy, dual_value, dual_value_with, energy_value, primal_value, primal_value_with_splits, split_transport_cost,
    transport_cost, DualMode, MassSplit,
};
pub use select::{
    largest_pressure_select, maximizer_pool, smallest_pressure_select, smallest_pressure_select_from, SmallestSelection,
    MONOTONICITY_TOL,
};

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::grids::{concavity_defect, c_concavify, Cost, FieldRole, Grid, ScalarField, TransportMapSample};
use dual::Evaluation;
use kinks::Kinks;
use linalg::{solve_spd, Csr};

const MIN_DAMPING: f64 = 1e-10;
const MAX_DAMPING: f64 = 1e2;
const STALL_HALVINGS: usize = 30;

/// Pressure at which the mass condition is probed.
pub const MASS_PROBE_PRESSURE: f64 = 1e6;

/// Ascent direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    /// Full second-order model of the dual, solved exactly (tridiagonal)
    /// or by conjugate gradients.
    Newton,
    /// Diagonal of the second-order model, floored.
    Diagonal,
    /// Weighted grid Laplacian plus the energy curvature.
    InverseLaplacian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative gap target: certified when `gap ≤ gap_tol · max(1, |J*|)`.
    pub gap_tol: f64,
    /// When positive, certification also needs the last accepted step to
    /// move `p` by at most this much in max norm.
    pub step_tol: f64,
    /// Initial step multiplier; halved on insufficient ascent.
    pub sigma: f64,
    pub preconditioner: Preconditioner,
    /// Try a nodal c-concavification every this many iterations, kept only
    /// when it does not lower the dual (0 disables). The nodal pairing
    /// always concavifies.
    pub concavify_every: usize,
    pub k_schedule: Vec<u32>,
    /// Strict-convexity regularization `δ`; 0 leaves the energy untouched.
    pub delta: f64,
    pub mode: DualMode,
    /// Initial pressures are clamped to `[−init_window, init_window]`.
    pub init_window: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 500,
            gap_tol: 1e-10,
            step_tol: 0.0,
            sigma: 1.0,
            preconditioner: Preconditioner::Newton,
            concavify_every: 0,
            k_schedule: vec![4, 16, 64, 256],
            delta: 0.0,
            mode: DualMode::Auto,
            init_window: 1e3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("gap_tol must be > 0, got {}", self.gap_tol)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.delta >= 0.0) || !(self.step_tol >= 0.0) || !(self.init_window > 0.0) {
            return Err(Error::InvalidArgument("delta, step_tol must be >= 0 and init_window > 0".into()));
        }
        if self.k_schedule.contains(&0) {
            return Err(Error::InvalidArgument("k_schedule entries must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct JkoStepResult {
    pub rho_star: ScalarField,
    pub p_star: ScalarField,
    /// `E(ρ*) + transport cost`; `+∞` if `ρ*` leaves the energy's domain.
    pub primal_value: f64,
    pub dual_value: f64,
    /// `Σ h^d [s(ρ*) + s*(p*) − ρ* p*]`, equal to primal − dual.
    pub gap: f64,
    pub iterations: usize,
    pub map: TransportMapSample,
    pub certified: bool,
    pub energy: f64,
    pub transport_cost: f64,
    /// `max |p^{cc̄} − p|` of the nodal transform.
    pub concavity_defect: f64,
    pub mode: DualMode,
    /// Mass diverted from `map` to second minimizers; `ρ*` is the
    /// pushforward of this split plan.
    pub splits: Vec<MassSplit>,
}

impl JkoStepResult {
    pub fn relative_gap(&self) -> f64 {
        self.gap / self.dual_value.abs().max(1.0)
    }
}

/// `Σ sup ∂ₚs*(b, x) h^d` at a large pressure `b`: masses at or above this
/// cannot be represented.
pub fn mass_limit(energy: &EnergyDensity, grid: &Grid) -> f64 {
    let hd = grid.cell_volume();
    (0..grid.len()).map(|x| energy.subdiff_s_star(MASS_PROBE_PRESSURE, x).hi * hd).sum()
}

pub fn check_mass_condition(rho_bar: &ScalarField, energy: &EnergyDensity) -> Result<()> {
    let mass = rho_bar.mass();
    let limit = mass_limit(energy, rho_bar.grid());
    if !(mass > 0.0) || !(mass < limit) {
        return Err(Error::MassCondition { mass, limit });
    }
    Ok(())
}

fn check_energy_grid(energy: &EnergyDensity, grid: &Grid) -> Result<()> {
    match energy.node_count() {
        Some(n) if n != grid.len() => {
            Err(Error::GridMismatch(format!("energy defined on {n} nodes, grid has {}", grid.len())))
        }
        _ => Ok(()),
    }
}

/// Midpoint of `∂s(max(ρ̄, ρ_floor))`, clamped to the window.
pub fn initial_pressure(rho_bar: &ScalarField, energy: &EnergyDensity, window: f64) -> ScalarField {
    let n = rho_bar.len();
    let mean = rho_bar.mass() / rho_bar.grid().volume();
    let floor = 1e-12 * mean;
    let values = (0..n)
        .map(|x| {
            let z = rho_bar.values()[x].max(floor);
            let mid = energy.subdiff_s(z, x).map_or(f64::NAN, |iv| iv.midpoint());
            if mid.is_nan() {
                -window
            } else {
                mid.clamp(-window, window)
            }
        })
        .collect();
    ScalarField::from_raw(*rho_bar.grid(), values, FieldRole::Pressure)
}

pub fn jko_step(rho_bar: &ScalarField, energy: &EnergyDensity, cost: &Cost, config: &SolverConfig) -> Result<JkoStepResult> {
    jko_step_from(rho_bar, energy, cost, config, None)
}

/// As [`jko_step`], starting the ascent from `p0` when given.
pub fn jko_step_from(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    p0: Option<&ScalarField>,
) -> Result<JkoStepResult> {
    config.validate()?;
    let grid = *rho_bar.grid();
    check_energy_grid(energy, &grid)?;
    let regularized;
    let energy = if config.delta > 0.0 {
        regularized = energy.regularize_delta(config.delta)?;
        &regularized
    } else {
        energy
    };
    check_mass_condition(rho_bar, energy)?;
    let mode = config.mode.resolve(cost);
    let start = match p0 {
        Some(p) => {
            grid.check_same(p.grid())?;
            p.values().to_vec()
        }
        None => initial_pressure(rho_bar, energy, config.init_window).into_values(),
    };
    let mut p = start;
    if mode == DualMode::Nodal {
        p = concavified(&grid, &p, cost);
    }
    let evaluate = |p: &[f64], eps: f64| -> Result<Option<Evaluation>> { Evaluation::new(p, rho_bar, energy, cost, mode, eps) };
    let mut ev = match evaluate(&p, 0.0)? {
        Some(ev) => ev,
        None => {
            let node = (0..p.len()).find(|&x| !energy.s_star(p[x], x).is_finite()).unwrap_or(0);
            return Err(Error::InfiniteDualEnergy { node });
        }
    };
    // Soft-min smoothing of ties between local minimizers, driven to zero.
    let mut eps = ev.transform.as_ref().map_or(0.0, |tr| tr.margin / 20.0);
    let eps_floor = 1e-18 * ev.dual.abs().max(1.0);
    if eps > 0.0 {
        ev = evaluate(&p, eps)?.expect("finite at the same pressure");
    }
    let kinks = Kinks::new(energy, grid.len());
    let mut gap = ev.gap(&grid, &p, energy);
    let mut last_step = f64::INFINITY;
    let mut sigma = config.sigma;
    // Levenberg–Marquardt damping of the Newton model, relative to its largest diagonal.
    let mut damping = MIN_DAMPING;
    let mut iterations = 0;
    let converged = |gap: f64, dual: f64, step: f64| {
        gap <= config.gap_tol * dual.abs().max(1.0) && (config.step_tol == 0.0 || step <= config.step_tol)
    };

    while iterations < config.max_iters && !converged(gap, ev.dual, last_step) {
        iterations += 1;
        if eps > 0.0 && fy_part(&ev, &grid, &p, energy) <= ev.split_excess {
            eps = if eps / 10.0 < eps_floor { 0.0 } else { eps / 10.0 };
            ev = evaluate(&p, eps)?.expect("finite at the same pressure");
            gap = ev.gap(&grid, &p, energy);
            continue;
        }
        let concavify_now = mode == DualMode::Nodal
            || (config.concavify_every > 0 && iterations % config.concavify_every == 0);
        if concavify_now && mode == DualMode::Interpolated {
            let q = concavified(&grid, &p, cost);
            if let Some(eq) = evaluate(&q, eps)? {
                if eq.smooth >= ev.smooth {
                    p = q;
                    ev = eq;
                    gap = ev.gap(&grid, &p, energy);
                }
            }
        }

        let newton = config.preconditioner == Preconditioner::Newton && mode == DualMode::Interpolated;
        let mut d = direction(&grid, &p, &ev, rho_bar, energy, cost, mode, config.preconditioner, damping, kinks.as_ref());
        let mut slope: f64 = ev.grad.iter().zip(&d).map(|(g, d)| g * d).sum();
        if !(slope > 0.0) {
            d = ev.grad.clone();
            slope = d.iter().map(|v| v * v).sum();
        }
        if slope == 0.0 {
            if eps > 0.0 {
                eps = if eps / 10.0 < eps_floor { 0.0 } else { eps / 10.0 };
                ev = evaluate(&p, eps)?.expect("finite at the same pressure");
                gap = ev.gap(&grid, &p, energy);
                continue;
            }
            break;
        }
        let mut s = if newton { 1.0f64.min(config.sigma) } else { sigma };
        let mut accepted = None;
        let mut halvings = 0;
        for _ in 0..60 {
            let mut trial: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            if let Some(k) = &kinks {
                k.clip(&p, &mut trial);
            }
            let rise: f64 = ev.grad.iter().zip(trial.iter().zip(&p)).map(|(g, (t, v))| g * (t - v)).sum();
            let trial = if mode == DualMode::Nodal { concavified(&grid, &trial, cost) } else { trial };
            if let Some(et) = evaluate(&trial, eps)? {
                let gt = et.gap(&grid, &trial, energy);
                let roundoff = 8.0 * f64::EPSILON * ev.smooth.abs().max(1.0);
                if et.smooth >= ev.smooth + 1e-4 * rise.max(0.0) || (et.smooth >= ev.smooth - roundoff && gt < gap) {
                    accepted = Some((trial, et, gt));
                    break;
                }
            }
            s *= 0.5;
            halvings += 1;
        }
        if newton {
            damping = if accepted.is_none() || halvings >= 2 {
                (damping * 10.0).min(MAX_DAMPING)
            } else if halvings == 0 {
                (damping / 10.0).max(MIN_DAMPING)
            } else {
                damping
            };
        }
        // A step that needed this many halvings makes no real progress.
        let stalled = accepted.is_none() || halvings >= STALL_HALVINGS;
        if let Some((trial, et, gt)) = accepted {
            last_step = trial.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            p = trial;
            ev = et;
            gap = gt;
            if !newton {
                sigma = (2.0 * s).min(1e12);
            }
        }
        if stalled {
            if newton && damping < MAX_DAMPING {
                continue;
            }
            if eps == 0.0 {
                break;
            }
            eps = if eps / 10.0 < eps_floor { 0.0 } else { eps / 10.0 };
            ev = evaluate(&p, eps)?.expect("finite at the same pressure");
            gap = ev.gap(&grid, &p, energy);
            damping = MIN_DAMPING;
        }
    }
    if !converged(gap, ev.dual, last_step) {
        gap = gap.min(ev.refine_plan(rho_bar, &p, energy, cost));
    }
    if mode == DualMode::Interpolated && config.preconditioner == Preconditioner::Newton {
        if let Some((q, eq, gq, step)) = polish::polish(&ev, &p, rho_bar, energy, cost, kinks.as_ref()) {
            if gq < gap {
                p = q;
                ev = eq;
                gap = gq;
                last_step = step;
            }
        }
    }

    let certified = converged(gap, ev.dual, last_step);
    finish(rho_bar, energy, cost, mode, p, ev, gap, iterations, certified)
}

/// Fenchel–Young part of the gap.
fn fy_part(ev: &Evaluation, grid: &Grid, p: &[f64], energy: &EnergyDensity) -> f64 {
    ev.gap(grid, p, energy) - ev.split_excess
}

fn concavified(grid: &Grid, p: &[f64], cost: &Cost) -> Vec<f64> {
    c_concavify(&ScalarField::from_raw(*grid, p.to_vec(), FieldRole::Pressure), cost).into_values()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    mode: DualMode,
    p: Vec<f64>,
    ev: Evaluation,
    gap: f64,
    iterations: usize,
    certified: bool,
) -> Result<JkoStepResult> {
    let grid = *rho_bar.grid();
    let p_star = ScalarField::from_raw(grid, p, FieldRole::Pressure);
    let inverse = cost.tau().map(|tau| {
        grid.gradient(p_star.values())
            .iter()
            .enumerate()
            .map(|(x, g)| {
                let node = grid.node(x);
                [node[0] + tau * g[0], node[1] + tau * g[1]]
            })
            .collect()
    });
    let map = TransportMapSample::new(grid, ev.targets.clone(), inverse)?;
    let energy_val = match ev.energy(&grid, energy) {
        Extended::Finite(v) => v,
        Extended::Infinite => f64::INFINITY,
    };
    let defect = concavity_defect(&p_star, cost);
    Ok(JkoStepResult {
        rho_star: ScalarField::from_raw(grid, ev.rho.clone(), FieldRole::Density),
        p_star,
        primal_value: energy_val + ev.transport,
        dual_value: ev.dual,
        gap,
        iterations,
        map,
        certified,
        energy: energy_val,
        transport_cost: ev.transport,
        concavity_defect: defect,
        mode,
        splits: ev.splits().into_iter().map(|(s, _)| s).collect(),
    })
}

/// Curvature `h^d ∂²ₚs*` of the energy term, per node.
fn energy_curvature(grid: &Grid, p: &[f64], energy: &EnergyDensity) -> Vec<f64> {
    let hd = grid.cell_volume();
    p.iter().enumerate().map(|(x, &v)| hd * energy.d2p_s_star(v, x)).collect()
}

/// Triplets of the transport part of the negative Hessian: per source node
/// `a_y Σ θ_j G M⁻¹ Gᵀ` over its minimizers, plus `(a_y/ε) Cov_θ(w)` of the
/// corner weights when the mass is softly shared.
fn transport_curvature(ev: &Evaluation, rho_bar: &ScalarField) -> Vec<(usize, usize, f64)> {
    let hd = rho_bar.grid().cell_volume();
    let mut trip = Vec::new();
    let Some(tr) = &ev.transform else { return trip };
    let push = |trip: &mut Vec<(usize, usize, f64)>, curv: Option<([usize; 4], [[f64; 4]; 4])>, mass: f64| {
        if let Some((corners, k)) = curv {
            for i in 0..4 {
                for j in 0..4 {
                    if k[i][j] != 0.0 {
                        trip.push((corners[i], corners[j], mass * k[i][j]));
                    }
                }
            }
        }
    };
    for (y, &r) in rho_bar.values().iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let ay = r * hd;
        let th = &ev.theta[y];
        let kept = 1.0 - th.iter().sum::<f64>();
        push(&mut trip, tr.curvature(y), ay * kept);
        if th.iter().all(|&t| t == 0.0) {
            continue;
        }
        let mut members: Vec<(f64, ([(usize, f64); 4], usize))> = vec![(kept, tr.weights(y))];
        for (al, &t) in tr.alternatives[y].iter().zip(th) {
            if t > 0.0 {
                push(&mut trip, tr.curvature_at(&al.hit), ay * t);
                members.push((t, tr.hit_weights(&al.hit)));
            }
        }
        if ev.eps > 0.0 {
            let mut idx: Vec<usize> = members.iter().flat_map(|(_, (w, k))| w[..*k].iter().map(|e| e.0)).collect();
            idx.sort_unstable();
            idx.dedup();
            let vecs: Vec<(f64, Vec<f64>)> = members
                .iter()
                .map(|(t, (w, k))| {
                    let mut v = vec![0.0; idx.len()];
                    for &(i, wt) in &w[..*k] {
                        v[idx.binary_search(&i).unwrap()] += wt;
                    }
                    (*t, v)
                })
                .collect();
            let mean: Vec<f64> = (0..idx.len()).map(|i| vecs.iter().map(|(t, v)| t * v[i]).sum()).collect();
            let scale = ay / ev.eps;
            for a in 0..idx.len() {
                for b in 0..idx.len() {
                    let c: f64 = vecs.iter().map(|(t, v)| t * v[a] * v[b]).sum::<f64>() - mean[a] * mean[b];
                    if c != 0.0 {
                        trip.push((idx[a], idx[b], scale * c));
                    }
                }
            }
        }
    }
    trip
}

#[allow(clippy::too_many_arguments)]
fn direction(
    grid: &Grid,
    p: &[f64],
    ev: &Evaluation,
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    mode: DualMode,
    pre: Preconditioner,
    damping: f64,
    kinks: Option<&Kinks>,
) -> Vec<f64> {
    let n = p.len();
    let pins = kinks.map(|k| k.pinned(energy, p, &ev.rho));
    let held = |i: usize| pins.as_ref().is_some_and(|b| b[i]);
    let hd = grid.cell_volume();
    let dcurv = energy_curvature(grid, p, energy);
    let mut trip = match (mode, pre) {
        (DualMode::Interpolated, Preconditioner::Newton | Preconditioner::Diagonal) => {
            transport_curvature(ev, rho_bar)
        }
        (_, Preconditioner::InverseLaplacian) => laplacian(grid, rho_bar, cost.tau().unwrap_or(1.0)),
        _ => Vec::new(),
    };
    if pre == Preconditioner::Diagonal || mode == DualMode::Nodal && pre == Preconditioner::Newton {
        let full = Csr::from_triplets(n, std::mem::take(&mut trip));
        let diag = full.diagonal();
        let floor = 1e-3 * hd;
        return (0..n).map(|i| if held(i) { 0.0 } else { ev.grad[i] / (diag[i] + dcurv[i]).max(floor) }).collect();
    }
    for (i, &dc) in dcurv.iter().enumerate() {
        trip.push((i, i, dc));
    }
    let diag_max = {
        let m = Csr::from_triplets(n, trip.clone());
        m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b))
    };
    let mu = (damping * diag_max).max(1e-300);
    for i in 0..n {
        trip.push((i, i, mu));
    }
    let Some(pins) = pins else { return solve_spd(&Csr::from_triplets(n, trip), &ev.grad) };
    let m = Csr::from_triplets(n, kinks::eliminate(trip, &pins));
    let rhs: Vec<f64> = ev.grad.iter().zip(&pins).map(|(&g, &b)| if b { 0.0 } else { g }).collect();
    solve_spd(&m, &rhs)
}

/// `τ h^d Σ_edges ρ̄_edge (e_i − e_j)(e_i − e_j)ᵀ / h²`, a model of the
/// transport curvature for smooth data.
fn laplacian(grid: &Grid, rho_bar: &ScalarField, tau: f64) -> Vec<(usize, usize, f64)> {
    let hd = grid.cell_volume();
    let mean = rho_bar.mass() / grid.volume();
    let mut trip = Vec::new();
    let [n0, n1] = grid.shape();
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            let a = grid.index(i0, i1);
            for (axis, nb) in [(0, (i0 + 1 < n0).then(|| grid.index(i0 + 1, i1))), (1, (i1 + 1 < n1).then(|| grid.index(i0, i1 + 1)))] {
                let Some(b) = nb else { continue };
                if axis >= grid.dim() {
                    continue;
                }
                let h = grid.spacing(axis);
                let r = (0.5 * (rho_bar.values()[a] + rho_bar.values()[b])).max(1e-3 * mean);
                let w = tau * hd * r / (h * h);
                trip.push((a, a, w));
                trip.push((b, b, w));
                trip.push((a, b, -w));
                trip.push((b, a, -w));
            }
        }
    }
    trip
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Grid {
        Grid::line(n, 1.0).unwrap()
    }

    #[test]
    fn constant_state_is_stationary() {
        let g = line(32);
        let rho = ScalarField::constant(g, 0.3, FieldRole::Density).unwrap();
        let e = EnergyDensity::Quadratic;
        let r = jko_step(&rho, &e, &Cost::quadratic(0.01).unwrap(), &SolverConfig::default()).unwrap();
        assert!(r.certified);
        assert!(r.rho_star.l1_distance(&rho) < 1e-12);
        for &v in r.p_star.values() {
            assert!((v - 0.3).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn zero_pressure_dual_is_zero() {
        let g = line(8);
        let rho = ScalarField::constant(g, 1.0, FieldRole::Density).unwrap();
        let p = ScalarField::constant(g, 0.0, FieldRole::Pressure).unwrap();
        let c = Cost::quadratic(0.1).unwrap();
        assert_eq!(dual_value(&p, &rho, &EnergyDensity::Quadratic, &c).unwrap(), 0.0);
    }

    #[test]
    fn constant_pressure_dual() {
        let g = Grid::rect(5, 4, 1.0, 2.0).unwrap();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 1.0 + x[0] * x[1]).unwrap();
        let c = Cost::quadratic(0.05).unwrap();
        let e = EnergyDensity::power_law(3.0).unwrap();
        let k = 0.7;
        let p = ScalarField::constant(g, k, FieldRole::Pressure).unwrap();
        let expect = k * rho.mass() - g.volume() * e.s_star(k, 0).to_f64();
        for mode in [DualMode::Interpolated, DualMode::Nodal] {
            let v = dual_value_with(&p, &rho, &e, &c, mode).unwrap();
            assert!((v - expect).abs() < 1e-12, "{mode:?}: {v} vs {expect}");
        }
    }

    #[test]
    fn infinite_dual_energy_rejected() {
        let g = line(4);
        let rho = ScalarField::constant(g, 1.0, FieldRole::Density).unwrap();
        let p = ScalarField::pressure(g, vec![0.0, 800.0, 0.0, 0.0]).unwrap();
        let e = EnergyDensity::Entropy;
        let err = dual_value(&p, &rho, &e, &Cost::quadratic(0.1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InfiniteDualEnergy { node: 1 }));
    }

    #[test]
    fn mass_condition() {
        let g = line(4);
        let zero = ScalarField::constant(g, 0.0, FieldRole::Density).unwrap();
        let e = EnergyDensity::Quadratic;
        let c = Cost::quadratic(0.1).unwrap();
        assert!(matches!(jko_step(&zero, &e, &c, &SolverConfig::default()), Err(Error::MassCondition { .. })));
        let t = crate::energy::Table::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 2.0]).unwrap();
        let tab = EnergyDensity::tabulated(t);
        let heavy = ScalarField::constant(g, 2.5, FieldRole::Density).unwrap();
        assert!(matches!(jko_step(&heavy, &tab, &c, &SolverConfig::default()), Err(Error::MassCondition { .. })));
    }

    #[test]
    fn primal_identity_is_energy() {
        let g = line(6);
        let rho = ScalarField::density(g, vec![0.1, 0.5, 1.0, 0.7, 0.2, 0.0]).unwrap();
        let e = EnergyDensity::power_law(2.0).unwrap();
        let c = Cost::quadratic(0.1).unwrap();
        let v = primal_value(&rho, &rho, &TransportMapSample::identity(g), &e, &c).unwrap();
        assert_eq!(v, energy_value(&rho, &e));
        let other = rho.scaled(1.1);
        assert!(matches!(
            primal_value(&other, &rho, &TransportMapSample::identity(g), &e, &c),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn weak_duality_along_iterates() {
        let g = line(40);
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| (-20.0 * (x[0] - 0.4).powi(2)).exp()).unwrap();
        let e = EnergyDensity::power_law(2.0).unwrap();
        let c = Cost::quadratic(0.02).unwrap();
        for iters in [0, 1, 2, 5, 50] {
            let cfg = SolverConfig { max_iters: iters, ..SolverConfig::default() };
            let r = jko_step(&rho, &e, &c, &cfg).unwrap();
            let direct = primal_value_with_splits(&r.rho_star, &rho, &r.map, &r.splits, &e, &c).unwrap().to_f64();
            assert!((direct - r.primal_value).abs() < 1e-12);
            assert!(direct - r.dual_value >= -1e-10);
            assert!((direct - r.dual_value - r.gap).abs() < 1e-10);
        }
    }

    #[test]
    fn two_dimensional_step_certifies() {
        let g = Grid::rect(16, 12, 1.0, 1.0).unwrap();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 0.2 + (-10.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2))).exp()).unwrap();
        let e = EnergyDensity::power_law(2.0).unwrap();
        let r = jko_step(&rho, &e, &Cost::quadratic(0.01).unwrap(), &SolverConfig::default()).unwrap();
        assert!(r.certified, "gap {}", r.gap);
        assert!((r.rho_star.mass() - rho.mass()).abs() < 1e-12 * rho.mass());
    }

    #[test]
    fn preconditioners_agree() {
        let g = line(24);
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 0.5 + 0.4 * (6.0 * x[0]).sin()).unwrap();
        let e = EnergyDensity::Entropy;
        let c = Cost::quadratic(0.01).unwrap();
        let base = jko_step(&rho, &e, &c, &SolverConfig::default()).unwrap();
        for pre in [Preconditioner::Diagonal, Preconditioner::InverseLaplacian] {
            let cfg = SolverConfig { preconditioner: pre, max_iters: 5000, gap_tol: 1e-9, ..SolverConfig::default() };
            let r = jko_step(&rho, &e, &c, &cfg).unwrap();
            assert!(r.certified, "{pre:?}: gap {}", r.gap);
            assert!(r.rho_star.l1_distance(&base.rho_star) < 1e-4, "{pre:?}");
        }
    }

    #[test]
    fn kernel_cost_uses_nodal_pairing() {
        let g = line(12);
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 1.0 + x[0]).unwrap();
        let kernel = crate::grids::RadialKernel::new(vec![0.0, 0.1, 1.0], vec![0.0, 0.05, 2.0]).unwrap();
        let r = jko_step(&rho, &EnergyDensity::Entropy, &Cost::TranslationKernel(kernel), &SolverConfig { max_iters: 200, ..SolverConfig::default() }).unwrap();
        assert_eq!(r.mode, DualMode::Nodal);
        assert!(r.gap >= -1e-12);
        assert!((r.rho_star.mass() - rho.mass()).abs() < 1e-12);
    }
}
