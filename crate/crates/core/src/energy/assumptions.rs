//! Probing a density against the standing structural assumptions.

use super::EnergyDensity;

/// Where to sample: node indices, pressures and densities.
#[derive(Clone, Debug)]
pub struct AssumptionProbe {
    pub nodes: Vec<usize>,
    pub pressures: Vec<f64>,
    pub densities: Vec<f64>,
}

impl AssumptionProbe {
    pub fn new(nodes: Vec<usize>) -> AssumptionProbe {
        let pressures = (0..=80).map(|i| -10.0 + 0.25 * i as f64).collect();
        let densities = (0..=60).map(|i| 0.1 * i as f64).collect();
        AssumptionProbe { nodes, pressures, densities }
    }

    /// Probe over every node of a field with `n` nodes.
    pub fn all_nodes(n: usize) -> AssumptionProbe {
        AssumptionProbe::new((0..n.max(1)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail per assumption. Failures are warnings, not errors.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// `∂s(·, x)` strictly increasing on the probe densities.
    pub strictly_convex: bool,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.get(name).is_some_and(|c| c.passed)
    }
}

fn check(name: &'static str, failure: Option<String>) -> AssumptionCheck {
    AssumptionCheck { name, passed: failure.is_none(), detail: failure.unwrap_or_else(|| "ok".into()) }
}

/// Pressures at which `∂ₚs*` may jump: the slopes of every table involved.
fn kink_pressures(e: &EnergyDensity, x: usize, out: &mut Vec<f64>) {
    match e {
        EnergyDensity::Tabulated(t) => out.extend_from_slice(t.at(x).slopes()),
        EnergyDensity::Multiplicative { base, weight } => {
            let mut inner = Vec::new();
            kink_pressures(base, x, &mut inner);
            out.extend(inner.into_iter().map(|p| p * weight.value(x)));
        }
        EnergyDensity::Sum(parts) => parts.iter().for_each(|p| kink_pressures(p, x, out)),
        EnergyDensity::DeltaRegularized { base, .. } | EnergyDensity::LogExpRegularized { base, .. } => {
            kink_pressures(base, x, out)
        }
        _ => {}
    }
}

pub fn check_assumptions(e: &EnergyDensity, probe: &AssumptionProbe) -> AssumptionReport {
    let nodes = &probe.nodes;
    let mut checks = Vec::new();

    // (s1): convex, proper, lower semicontinuous on the sampled densities.
    let mut fail = None;
    'outer: for &x in nodes {
        let vals: Vec<f64> = probe.densities.iter().map(|&z| e.s(z, x).to_f64()).collect();
        for i in 1..vals.len().saturating_sub(1) {
            let (a, b, c) = (vals[i - 1], vals[i], vals[i + 1]);
            if a.is_finite() && b.is_finite() && c.is_finite() && a + c - 2.0 * b < -1e-9 * (1.0 + b.abs()) {
                fail = Some(format!("second difference negative at z = {}, node {x}", probe.densities[i]));
                break 'outer;
            }
            if a.is_infinite() && b.is_finite() && c.is_infinite() {
                fail = Some(format!("domain not an interval near z = {}, node {x}", probe.densities[i]));
                break 'outer;
            }
        }
    }
    checks.push(check("s1", fail));

    // (s2): effective domain, lower bound, superlinear growth.
    let mut fail = None;
    for &x in nodes {
        if e.s(-1e-12, x).is_finite() || e.s(0.0, x).to_f64() != 0.0 {
            fail = Some(format!("s(z<0) finite or s(0) != 0 at node {x}"));
            break;
        }
        let lowest = probe.densities.iter().map(|&z| e.s(z, x).to_f64()).fold(f64::INFINITY, f64::min);
        if !(lowest > f64::NEG_INFINITY) {
            fail = Some(format!("s unbounded below at node {x}"));
            break;
        }
        let ratios: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&z| e.s(z, x).to_f64() / z).collect();
        let increasing = ratios.windows(2).all(|w| w[1] > w[0] || w[1].is_infinite());
        if !increasing {
            fail = Some(format!("s(z)/z not increasing on 1e2, 1e4, 1e6 at node {x}: {ratios:?}"));
            break;
        }
    }
    checks.push(check("s2", fail));

    // (s3): ∂ₚs* single-valued (differentiability of s*) on probe and kink pressures.
    let mut fail = None;
    'outer3: for &x in nodes {
        let mut ps = probe.pressures.clone();
        kink_pressures(e, x, &mut ps);
        for &p in &ps {
            let iv = e.subdiff_s_star(p, x);
            if iv.width() > 1e-12 * (1.0 + iv.hi.abs()) {
                fail = Some(format!("subdifferential of s* is [{}, {}] at p = {p}, node {x}", iv.lo, iv.hi));
                break 'outer3;
            }
        }
    }
    checks.push(check("s3", fail));

    // (s4): ∂ₚs* → 0 as α → −∞ uniformly, and stays positive as α → +∞.
    let sup_at = |a: f64| nodes.iter().map(|&x| e.dp_s_star(a, x)).fold(0.0, f64::max);
    let inf_at = |a: f64| nodes.iter().map(|&x| e.dp_s_star(a, x)).fold(f64::INFINITY, f64::min);
    let low: Vec<f64> = [-10.0, -100.0, -1000.0].iter().map(|&a| sup_at(a)).collect();
    let high = inf_at(1e3);
    let fail = if !(low[2] <= 1e-8 && low.windows(2).all(|w| w[1] <= w[0])) {
        Some(format!("sup dp_s_star at -10, -100, -1000: {low:?}"))
    } else if !(high > 0.0) {
        Some(format!("inf dp_s_star at 1e3 is {high}"))
    } else {
        None
    };
    checks.push(check("s4", fail));

    // (s5): sup_x ∂ₚs*(α) ≤ M_α inf_x ∂ₚs*(α) with finite M_α.
    let mut fail = None;
    for &a in &probe.pressures {
        let (sup, inf) = (sup_at(a), inf_at(a));
        if sup > 0.0 && !(inf > 0.0) {
            fail = Some(format!("ratio unbounded at α = {a}: sup {sup}, inf {inf}"));
            break;
        }
    }
    checks.push(check("s5", fail));

    let strictly_convex = nodes.iter().all(|&x| {
        let ivs: Vec<_> = probe.densities.iter().filter_map(|&z| e.subdiff_s(z, x)).collect();
        ivs.windows(2).all(|w| w[1].lo > w[0].hi)
    });

    AssumptionReport { checks, strictly_convex }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{Table, WeightField};

    #[test]
    fn power_law_passes() {
        let r = check_assumptions(&EnergyDensity::power_law(2.0).unwrap(), &AssumptionProbe::new(vec![0]));
        assert!(r.all_passed(), "{r:?}");
        assert!(r.strictly_convex);
    }

    #[test]
    fn weighted_entropy_passes() {
        let n = 16;
        let values: Vec<f64> = (0..n).map(|i| 1.5 + 0.5 * (i as f64 * 0.4).sin()).collect();
        let grad = vec![[0.0, 0.0]; n];
        let e = EnergyDensity::weighted(EnergyDensity::Entropy, WeightField::from_parts(values, grad).unwrap());
        let r = check_assumptions(&e, &AssumptionProbe::all_nodes(n));
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn flat_table_flagged() {
        let t = Table::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let r = check_assumptions(&EnergyDensity::tabulated(t), &AssumptionProbe::new(vec![0]));
        assert!(!r.passed("s3"), "{r:?}");
        assert!(!r.strictly_convex);
        assert!(r.passed("s1") && r.passed("s2"));
    }
}
