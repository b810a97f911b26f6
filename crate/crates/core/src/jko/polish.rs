//! Newton polish of a shared transport plan.
//!
//! At the optimum every source node sends its mass to minimizers of
//! `P + c(·, y)` that tie in value, in fractions that make the pushed-forward
//! density a subgradient of `s*` at `p`. With the set of shared sources
//! fixed this is a smooth system in `p` and the fractions, solved here by
//! Newton steps through a Schur complement on the fractions.

use super::dual::{fy_sum, supergradient, Evaluation};
use super::kinks::{self, Kinks};
use super::linalg::{dense_solve, solve_spd, Csr};
use crate::energy::EnergyDensity;
use crate::extended::Extended;
use crate::grids::interp::{interpolated_c_transform, local_minimizer, Alternative, CellHit};
use crate::grids::{Cost, Grid, ScalarField};

const MAX_ITERS: usize = 30;
const MAX_HALVINGS: usize = 20;
/// Rounds of adding newly tied sources per step.
const MAX_EXPANSIONS: usize = 3;
/// Fractions at or below this are dropped from the plan.
const MIN_SHARE: f64 = 1e-14;

#[derive(Clone, Copy)]
struct Share {
    hit: CellHit,
    frac: f64,
    value: f64,
}

struct State {
    p: Vec<f64>,
    shares: Vec<Vec<Share>>,
    ev: Evaluation,
    gap: f64,
}

struct Problem<'a> {
    grid: Grid,
    tau: f64,
    a: Vec<f64>,
    energy: &'a EnergyDensity,
    cost: &'a Cost,
    kinks: Option<&'a Kinks>,
}

impl Problem<'_> {
    /// Re-solve every share in its own basin at `p` and evaluate the plan.
    fn evaluate(&self, p: &[f64], plan: &[Vec<(CellHit, f64)>]) -> Option<State> {
        let grid = self.grid;
        let hd = grid.cell_volume();
        let mut star = 0.0;
        for (x, &v) in p.iter().enumerate() {
            match self.energy.s_star(v, x) {
                Extended::Finite(s) => star += s * hd,
                Extended::Infinite => return None,
            }
        }
        let mut tr = interpolated_c_transform(&grid, p, self.tau);
        let mut rho = vec![0.0; grid.len()];
        let mut shares: Vec<Vec<Share>> = vec![Vec::new(); grid.len()];
        let mut theta = vec![Vec::new(); grid.len()];
        let (mut paired, mut excess, mut transport) = (0.0, 0.0, 0.0);
        for (y, &ay) in self.a.iter().enumerate() {
            tr.alternatives[y].clear();
            if ay == 0.0 {
                continue;
            }
            let node = grid.node(y);
            let mut list: Vec<Share> = Vec::new();
            if plan[y].len() > 1 {
                for &(start, frac) in &plan[y] {
                    let (value, hit) = local_minimizer(&grid, p, self.tau, y, start.cell);
                    let scale = 1e-12 * grid.spacing(0);
                    match list.iter_mut().find(|s| {
                        (s.hit.point[0] - hit.point[0]).abs() <= scale && (s.hit.point[1] - hit.point[1]).abs() <= scale
                    }) {
                        Some(s) => s.frac += frac,
                        None => list.push(Share { hit, frac, value }),
                    }
                }
            }
            if list.len() < 2 {
                list = vec![Share { hit: tr.hits[y], frac: 1.0, value: tr.values[y] }];
            }
            let fstar = list.iter().map(|s| s.value).fold(tr.values[y], f64::min);
            for s in &list {
                let (w, k) = tr.hit_weights(&s.hit);
                for &(i, wt) in &w[..k] {
                    rho[i] += ay * s.frac * wt;
                }
                excess += ay * s.frac * (s.value - fstar);
                transport += ay * s.frac * self.cost.eval(s.hit.point, node);
            }
            paired += ay * fstar;
            tr.hits[y] = list[0].hit;
            tr.values[y] = fstar;
            for s in &list[1..] {
                tr.alternatives[y].push(Alternative { excess: s.value - fstar, hit: s.hit });
                theta[y].push(s.frac);
            }
            shares[y] = list;
        }
        rho.iter_mut().for_each(|r| *r /= hd);
        let grad = supergradient(&rho, p, self.energy, hd);
        let gap = fy_sum(&grid, &rho, p, self.energy) + excess;
        if !gap.is_finite() {
            return None;
        }
        let dual = paired - star;
        let ev = Evaluation {
            dual,
            smooth: dual,
            eps: 0.0,
            rho,
            grad,
            targets: tr.targets(),
            transport,
            transform: Some(tr),
            theta,
            split_excess: excess,
        };
        Some(State { p: p.to_vec(), shares, ev, gap })
    }

    fn trial(&self, p: &[f64], dp: &[f64], alpha: f64) -> Vec<f64> {
        let mut t: Vec<f64> = p.iter().zip(dp).map(|(a, b)| a + alpha * b).collect();
        if let Some(k) = self.kinks {
            k.clip(p, &mut t);
        }
        t
    }

    /// Newton step `(dp, dθ)`, with `dθ` listed per shared source for shares `1..`.
    fn step(&self, st: &State) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let grid = self.grid;
        let n = grid.len();
        let hd = grid.cell_volume();
        let tr = st.ev.transform.as_ref()?;
        let mut trip = Vec::new();
        let mut ties: Vec<(usize, usize, Vec<(usize, f64)>, f64)> = Vec::new();
        for (y, list) in st.shares.iter().enumerate() {
            let ay = self.a[y];
            for s in list {
                if let Some((corners, k)) = tr.curvature_at(&s.hit) {
                    for i in 0..4 {
                        for j in 0..4 {
                            if k[i][j] != 0.0 {
                                trip.push((corners[i], corners[j], ay * s.frac * k[i][j]));
                            }
                        }
                    }
                }
            }
            if list.len() < 2 {
                continue;
            }
            let (w0, k0) = tr.hit_weights(&list[0].hit);
            for (j, s) in list.iter().enumerate().skip(1) {
                let (wj, kj) = tr.hit_weights(&s.hit);
                let mut col: Vec<(usize, f64)> = Vec::with_capacity(8);
                col.extend(wj[..kj].iter().map(|&(i, w)| (i, ay * w)));
                col.extend(w0[..k0].iter().map(|&(i, w)| (i, -ay * w)));
                ties.push((y, j, col, ay * (s.value - list[0].value)));
            }
        }
        for (x, &v) in st.p.iter().enumerate() {
            trip.push((x, x, hd * self.energy.d2p_s_star(v, x)));
        }
        let diag_max = Csr::from_triplets(n, trip.clone()).diagonal().iter().fold(0.0f64, |m, &d| m.max(d));
        let mu = (1e-12 * diag_max).max(1e-300);
        for x in 0..n {
            trip.push((x, x, mu));
        }
        let pins = self.kinks.map_or_else(|| vec![false; n], |k| k.pinned(self.energy, &st.p, &st.ev.rho));
        let a = Csr::from_triplets(n, kinks::eliminate(trip, &pins));
        let rhs: Vec<f64> = st.ev.grad.iter().zip(&pins).map(|(&g, &b)| if b { 0.0 } else { g }).collect();
        let u0 = solve_spd(&a, &rhs);
        let k = ties.len();
        let mut dtheta = vec![Vec::new(); n];
        if k == 0 {
            return u0.iter().all(|v| v.is_finite()).then_some((u0, dtheta));
        }
        let us: Vec<Vec<f64>> = ties
            .iter()
            .map(|(_, _, col, _)| {
                let mut b = vec![0.0; n];
                for &(i, v) in col {
                    if !pins[i] {
                        b[i] += v;
                    }
                }
                solve_spd(&a, &b)
            })
            .collect();
        let dot = |col: &[(usize, f64)], u: &[f64]| col.iter().map(|&(i, v)| v * u[i]).sum::<f64>();
        let mut s = vec![0.0; k * k];
        for (r, (_, _, col, _)) in ties.iter().enumerate() {
            for (c, u) in us.iter().enumerate() {
                s[r * k + c] = dot(col, u);
            }
        }
        let s_max = (0..k).map(|i| s[i * k + i]).fold(0.0f64, f64::max);
        for i in 0..k {
            s[i * k + i] += 1e-12 * s_max + 1e-300;
        }
        let rhs: Vec<f64> = ties.iter().map(|(_, _, col, r)| -r - dot(col, &u0)).collect();
        let dt = dense_solve(s, rhs)?;
        let mut dp = u0;
        for (u, &t) in us.iter().zip(&dt) {
            for (d, &ui) in dp.iter_mut().zip(u) {
                *d += t * ui;
            }
        }
        for ((y, _, _, _), &t) in ties.iter().zip(&dt) {
            dtheta[*y].push(t);
        }
        dp.iter().all(|v| v.is_finite()).then_some((dp, dtheta))
    }
}

/// Plan after a step of length `alpha`, shares that run out dropped.
fn advance(shares: &[Vec<Share>], dtheta: &[Vec<f64>], alpha: f64) -> Vec<Vec<(CellHit, f64)>> {
    shares
        .iter()
        .zip(dtheta)
        .map(|(list, dt)| {
            if dt.is_empty() {
                return list.iter().map(|s| (s.hit, s.frac)).collect();
            }
            let moved: f64 = dt.iter().sum();
            let mut out = vec![(list[0].hit, list[0].frac - alpha * moved)];
            out.extend(list[1..].iter().zip(dt).map(|(s, &t)| (s.hit, s.frac + alpha * t)));
            out.retain(|e| e.1 > MIN_SHARE);
            let total: f64 = out.iter().map(|e| e.1).sum();
            out.iter_mut().for_each(|e| e.1 /= total);
            out
        })
        .collect()
}

/// Largest `alpha ≤ 1` keeping every fraction nonnegative.
fn max_alpha(shares: &[Vec<Share>], dtheta: &[Vec<f64>]) -> f64 {
    let mut alpha = 1.0f64;
    for (list, dt) in shares.iter().zip(dtheta) {
        if dt.is_empty() {
            continue;
        }
        let moved: f64 = dt.iter().sum();
        let deltas = std::iter::once(-moved).chain(dt.iter().copied());
        for (s, d) in list.iter().zip(deltas) {
            if d < 0.0 {
                alpha = alpha.min(s.frac / -d);
            }
        }
    }
    alpha
}

fn plan_of(shares: &[Vec<Share>]) -> Vec<Vec<(CellHit, f64)>> {
    shares.iter().map(|list| list.iter().map(|s| (s.hit, s.frac)).collect()).collect()
}

impl Problem<'_> {
    /// Single-share sources whose minimizer leaves its basin between `cur` and `next`,
    /// as new zero-fraction shares.
    fn switched(&self, cur: &State, next: &State) -> Vec<(usize, CellHit)> {
        let Some(tr) = next.ev.transform.as_ref() else { return Vec::new() };
        let mut out = Vec::new();
        for (y, list) in cur.shares.iter().enumerate() {
            if list.len() != 1 {
                continue;
            }
            let (v, _) = local_minimizer(&self.grid, &next.p, self.tau, y, list[0].hit.cell);
            if v > tr.values[y] + 1e-14 * (1.0 + v.abs()) {
                out.push((y, tr.hits[y]));
            }
        }
        out
    }

    /// Newton step after dropping zero-fraction shares the step would make negative.
    fn feasible_step(&self, cur: &mut State) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        for _ in 0..8 {
            let (dp, dtheta) = self.step(cur)?;
            let mut plan = plan_of(&cur.shares);
            let mut dropped = false;
            for (y, dt) in dtheta.iter().enumerate() {
                if dt.is_empty() {
                    continue;
                }
                let moved: f64 = dt.iter().sum();
                let deltas: Vec<f64> = std::iter::once(-moved).chain(dt.iter().copied()).collect();
                let before = plan[y].len();
                let mut j = 0;
                plan[y].retain(|e| {
                    let keep = !(e.1 == 0.0 && deltas[j] < 0.0);
                    j += 1;
                    keep
                });
                dropped |= plan[y].len() != before;
            }
            if !dropped {
                return Some((dp, dtheta));
            }
            *cur = self.evaluate(&cur.p.clone(), &plan)?;
        }
        None
    }
}

/// Polish `ev` at `p`; returns the new pressure, evaluation, gap and last
/// step size when the gap drops below `ev`'s.
pub(crate) fn polish(
    ev: &Evaluation,
    p: &[f64],
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    kinks: Option<&Kinks>,
) -> Option<(Vec<f64>, Evaluation, f64, f64)> {
    let grid = *rho_bar.grid();
    let hd = grid.cell_volume();
    let tr = ev.transform.as_ref()?;
    let tau = cost.tau()?;
    let base = ev.gap(&grid, p, energy);
    let prob = Problem { grid, tau, a: rho_bar.values().iter().map(|r| r * hd).collect(), energy, cost, kinks };
    let plan: Vec<Vec<(CellHit, f64)>> = (0..grid.len())
        .map(|y| {
            let th = ev.theta.get(y).map_or(&[][..], |t| &t[..]);
            let kept = 1.0 - th.iter().sum::<f64>();
            let mut list = vec![(tr.hits[y], kept)];
            list.extend(tr.alternatives[y].iter().zip(th).filter(|(_, &t)| t > MIN_SHARE).map(|(al, &t)| (al.hit, t)));
            list.retain(|e| e.1 > MIN_SHARE);
            list
        })
        .collect();
    let mut cur = prob.evaluate(p, &plan)?;
    // Size of the last Newton step proposed, an estimate of the distance to the solution.
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let Some((mut dp, mut dtheta)) = prob.feasible_step(&mut cur) else { break };
        for _ in 0..MAX_EXPANSIONS {
            let alpha = max_alpha(&cur.shares, &dtheta);
            let trial = prob.trial(&cur.p, &dp, alpha);
            let Some(full) = prob.evaluate(&trial, &advance(&cur.shares, &dtheta, alpha)) else { break };
            let new = prob.switched(&cur, &full);
            if new.is_empty() {
                break;
            }
            let mut plan = plan_of(&cur.shares);
            for (y, hit) in new {
                plan[y].push((hit, 0.0));
            }
            let Some(mut next) = prob.evaluate(&cur.p.clone(), &plan) else { break };
            let Some(step) = prob.feasible_step(&mut next) else { break };
            cur = next;
            (dp, dtheta) = step;
        }
        last_step = dp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if cur.gap <= 0.0 {
            break;
        }
        let mut alpha = max_alpha(&cur.shares, &dtheta);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = prob.trial(&cur.p, &dp, alpha);
            if let Some(st) = prob.evaluate(&trial, &advance(&cur.shares, &dtheta, alpha)) {
                if st.gap < cur.gap {
                    accepted = Some(st);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(st) = accepted else { break };
        cur = st;
    }
    (cur.gap < base && last_step.is_finite()).then_some((cur.p, cur.ev, cur.gap, last_step))
}
