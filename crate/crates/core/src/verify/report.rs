use std::fmt::Write as _;

use super::checks::{ComparisonReport, ContractionReport, MaxPrincipleReport, SandwichReport};
use super::diagnostics::{FluxReport, ModulusRow};
use crate::grids::io::fmt_f64;

fn f(v: f64) -> String {
    fmt_f64(v)
}

pub fn contraction_csv(reports: &[ContractionReport]) -> String {
    let mut s = String::from("trial,pre,post,slack,gap0,gap1,tol,gap_term,discretization,curvature,certified,pass\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{},{}",
            f(r.pre),
            f(r.post),
            f(r.slack),
            f(r.gaps[0]),
            f(r.gaps[1]),
            f(r.tol),
            f(r.allowance.gap_term),
            f(r.allowance.discretization),
            f(r.allowance.curvature),
            r.certified,
            r.pass
        );
    }
    s
}

/// One row per trial and regularization level; empty for strictly convex energies.
pub fn delta_trend_csv(reports: &[ContractionReport]) -> String {
    let mut s = String::from("trial,delta,pre,post,slack,gap0,gap1,certified\n");
    for (i, r) in reports.iter().enumerate() {
        for t in &r.delta_trend {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{}",
                f(t.delta),
                f(t.pre),
                f(t.post),
                f(t.slack()),
                f(t.gaps[0]),
                f(t.gaps[1]),
                t.certified
            );
        }
    }
    s
}

pub fn contraction_summary(reports: &[ContractionReport]) -> String {
    let passed = reports.iter().filter(|r| r.pass).count();
    let inconclusive = reports.iter().filter(|r| r.inconclusive()).count();
    let worst = reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let max_tol = reports.iter().map(|r| r.tol).fold(0.0, f64::max);
    format!(
        "[contraction] {passed}/{} passed, {inconclusive} inconclusive, min slack {worst:.3e}, max tol {max_tol:.3e}\n",
        reports.len()
    )
}

pub fn comparison_csv(reports: &[ComparisonReport]) -> String {
    let mut s = String::from("trial,rho_violation,p_violation,gap0,gap1,tol,certified,pass\n");
    for (i, r) in reports.iter().enumerate() {
        let pv = r.p_violation.map_or_else(String::new, f);
        let _ = writeln!(
            s,
            "{i},{},{pv},{},{},{},{},{}",
            f(r.rho_violation),
            f(r.gaps[0]),
            f(r.gaps[1]),
            f(r.tol),
            r.certified,
            r.pass
        );
    }
    s
}

pub fn comparison_summary(reports: &[ComparisonReport]) -> String {
    let passed = reports.iter().filter(|r| r.pass).count();
    let worst = reports.iter().map(|r| r.rho_violation).fold(f64::NEG_INFINITY, f64::max);
    let worst_p = reports.iter().filter_map(|r| r.p_violation).fold(f64::NEG_INFINITY, f64::max);
    let mut s = format!("[comparison] {passed}/{} passed, max density violation {worst:.3e}", reports.len());
    if worst_p.is_finite() {
        let _ = write!(s, ", max pressure violation {worst_p:.3e}");
    }
    s.push('\n');
    s
}

pub fn max_principle_csv(reports: &[MaxPrincipleReport]) -> String {
    let mut s = String::from("trial,a,b,p_min,p_max,l1_change,tol_p,gap,certified,branch\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{:?}",
            f(r.a),
            f(r.b),
            f(r.p_min),
            f(r.p_max),
            f(r.l1_change),
            f(r.tol_p),
            f(r.gap),
            r.certified,
            r.branch
        );
    }
    s
}

pub fn sandwich_csv(r: &SandwichReport) -> String {
    format!("below,above,tol,pass\n{},{},{},{}\n", f(r.below), f(r.above), f(r.tol), r.pass)
}

pub fn flux_csv(reports: &[FluxReport]) -> String {
    let mut s = String::from("step,residual,chain_mismatch,scale,vacuum_max\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.step,
            f(r.residual),
            f(r.chain_mismatch),
            f(r.scale),
            f(r.vacuum_max)
        );
    }
    s
}

pub fn modulus_csv(rows: &[ModulusRow]) -> String {
    let mut s = String::from("shift,distance,modulus\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.shift, f(r.distance), f(r.modulus));
    }
    s
}
