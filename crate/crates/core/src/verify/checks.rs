use rayon::prelude::*;

use super::random::{random_ordered_pair, random_pair};
use crate::energy::{check_assumptions, AssumptionProbe, EnergyDensity};
use crate::error::{Error, Result};
use crate::grids::{Cost, Grid, ScalarField};
use crate::jko::{jko_step, smallest_pressure_select, JkoStepResult, SolverConfig};

/// Regularization levels tried when the energy is not strictly convex.
pub const DELTA_TREND: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Minimum density required by the maximum-principle check.
pub const MAX_PRINCIPLE_FLOOR: f64 = 1e-6;

/// L¹ distance below which `ρ* = ρ̄` counts as the stationary branch.
pub const STATIONARY_TOL: f64 = 1e-6;

/// `|(‖(ρ₁−ρ₀)₊‖₁ − ‖(ρ₀−ρ₁)₊‖₁) − (mass(ρ₁) − mass(ρ₀))|`.
pub fn one_sided_identity_defect(rho0: &ScalarField, rho1: &ScalarField) -> f64 {
    let lhs = rho1.positive_part_l1(rho0) - rho0.positive_part_l1(rho1);
    (lhs - (rho1.mass() - rho0.mass())).abs()
}

fn strictly_convex(energy: &EnergyDensity, grid: &Grid) -> bool {
    let n = energy.node_count().unwrap_or(1).min(grid.len());
    check_assumptions(energy, &AssumptionProbe::all_nodes(n)).strictly_convex
}

fn max_curvature(r: &JkoStepResult, energy: &EnergyDensity) -> f64 {
    r.p_star.values().iter().enumerate().map(|(x, &p)| energy.d2p_s_star(p, x)).fold(0.0, f64::max)
}

fn step_pair(
    rho0: &ScalarField,
    rho1: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
) -> Result<(JkoStepResult, JkoStepResult)> {
    let (a, b) = rayon::join(|| jko_step(rho0, energy, cost, config), || jko_step(rho1, energy, cost, config));
    Ok((a?, b?))
}

/// The two parts of the contraction tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionAllowance {
    /// `4 √(2|Ω| (gap₀+gap₁) κ)` with `κ = max ∂²ₚs*` at the computed
    /// pressures: an L¹ bound on how far an inexact minimizer can sit from
    /// the exact one.
    pub gap_term: f64,
    /// `2h · TV(ρ₁ − ρ₀)`: grid-scale disagreement of the discrete plans.
    pub discretization: f64,
    pub curvature: f64,
}

impl ContractionAllowance {
    pub fn total(&self) -> f64 {
        self.gap_term + self.discretization
    }
}

/// Heuristic tolerance for one contraction trial.
pub fn contraction_allowance(
    rho0: &ScalarField,
    rho1: &ScalarField,
    gaps: [f64; 2],
    curvature: f64,
) -> ContractionAllowance {
    let grid = rho0.grid();
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let diff = ScalarField::from_raw(
        *grid,
        rho1.values().iter().zip(rho0.values()).map(|(a, b)| a - b).collect(),
        rho0.role(),
    );
    ContractionAllowance {
        gap_term: 4.0 * (2.0 * grid.volume() * (gaps[0] + gaps[1]).max(0.0) * curvature).sqrt(),
        discretization: 2.0 * h * diff.total_variation(),
        curvature,
    }
}

/// One contraction experiment at a fixed regularization.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionTrial {
    pub delta: f64,
    /// `‖(ρ₁−ρ₀)₊‖₁`.
    pub pre: f64,
    /// `‖(ρ₁*−ρ₀*)₊‖₁`.
    pub post: f64,
    pub gaps: [f64; 2],
    pub certified: bool,
}

impl ContractionTrial {
    pub fn slack(&self) -> f64 {
        self.pre - self.post
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub pre: f64,
    pub post: f64,
    pub slack: f64,
    pub gaps: [f64; 2],
    pub allowance: ContractionAllowance,
    pub tol: f64,
    /// Both steps certified; otherwise the report is inconclusive.
    pub certified: bool,
    pub pass: bool,
    /// Repeats with `DELTA_TREND` when the energy is not strictly convex.
    pub delta_trend: Vec<ContractionTrial>,
}

impl ContractionReport {
    pub fn inconclusive(&self) -> bool {
        !self.certified
    }
}

fn contraction_trial(
    rho0: &ScalarField,
    rho1: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
) -> Result<(ContractionTrial, [JkoStepResult; 2])> {
    let (a, b) = step_pair(rho0, rho1, energy, cost, config)?;
    let t = ContractionTrial {
        delta: config.delta,
        pre: rho1.positive_part_l1(rho0),
        post: b.rho_star.positive_part_l1(&a.rho_star),
        gaps: [a.gap, b.gap],
        certified: a.certified && b.certified,
    };
    Ok((t, [a, b]))
}

/// One step from each datum and the one-sided L¹ distance before and after.
pub fn check_contraction(
    rho0: &ScalarField,
    rho1: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
) -> Result<ContractionReport> {
    rho0.grid().check_same(rho1.grid())?;
    let (t, [a, b]) = contraction_trial(rho0, rho1, energy, cost, config)?;
    let curvature = max_curvature(&a, energy).max(max_curvature(&b, energy));
    let allowance = contraction_allowance(rho0, rho1, t.gaps, curvature);
    let tol = allowance.total();
    let mut delta_trend = Vec::new();
    if config.delta == 0.0 && !strictly_convex(energy, rho0.grid()) {
        for &delta in &DELTA_TREND {
            let cfg = SolverConfig { delta, ..config.clone() };
            delta_trend.push(contraction_trial(rho0, rho1, energy, cost, &cfg)?.0);
        }
    }
    let slack = t.slack();
    Ok(ContractionReport {
        pre: t.pre,
        post: t.post,
        slack,
        gaps: t.gaps,
        allowance,
        tol,
        certified: t.certified,
        pass: t.certified && slack >= -tol,
        delta_trend,
    })
}

/// `trials` seeded pairs from [`random_pair`], run concurrently and
/// returned in trial order.
pub fn contraction_trials(
    grid: &Grid,
    mass: f64,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<ContractionReport>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (r0, r1) = random_pair(grid, mass, seed.wrapping_add(i));
            check_contraction(&r0, &r1, energy, cost, config)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `max (ρ₀* − ρ₁*)`, nodewise.
    pub rho_violation: f64,
    /// `max (p₀⁻ − p₁⁻)` with `p⁻ = min(p, 0)`, under the smallest selector.
    pub p_violation: Option<f64>,
    pub gaps: [f64; 2],
    pub tol: f64,
    pub certified: bool,
    pub pass: bool,
}

/// Nodewise ordering tolerance `1e−6 + 10·gap_tol`.
pub fn comparison_tolerance(config: &SolverConfig) -> f64 {
    1e-6 + 10.0 * config.gap_tol
}

/// For `ρ₀ ≤ ρ₁`, checks `ρ₀* ≤ ρ₁*` and, with `select`, `p₀⁻ ≤ p₁⁻` for the
/// smallest maximizers.
pub fn check_comparison(
    rho0: &ScalarField,
    rho1: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    select: bool,
) -> Result<ComparisonReport> {
    rho0.grid().check_same(rho1.grid())?;
    if rho0.values().iter().zip(rho1.values()).any(|(a, b)| a > b) {
        return Err(Error::InvalidArgument("comparison needs rho0 <= rho1 nodewise".into()));
    }
    let tol = comparison_tolerance(config);
    let max_excess =
        |a: &[f64], b: &[f64], f: fn(f64) -> f64| a.iter().zip(b).map(|(x, y)| f(*x) - f(*y)).fold(f64::NEG_INFINITY, f64::max);
    let (r0, r1, certified, p_violation) = if select {
        let (a, b) = rayon::join(
            || smallest_pressure_select(rho0, energy, cost, config),
            || smallest_pressure_select(rho1, energy, cost, config),
        );
        let (a, b) = (a?, b?);
        let certified = a.all_certified() && b.all_certified();
        let pv = max_excess(a.pressure().values(), b.pressure().values(), |p| p.min(0.0));
        (a.last().clone(), b.last().clone(), certified, Some(pv))
    } else {
        let (a, b) = step_pair(rho0, rho1, energy, cost, config)?;
        let c = a.certified && b.certified;
        (a, b, c, None)
    };
    let rho_violation = max_excess(r0.rho_star.values(), r1.rho_star.values(), |v| v);
    let pass = certified && rho_violation <= tol && p_violation.is_none_or(|v| v <= tol);
    Ok(ComparisonReport { rho_violation, p_violation, gaps: [r0.gap, r1.gap], tol, certified, pass })
}

/// `trials` ordered pairs from [`random_ordered_pair`], run concurrently.
pub fn comparison_trials(
    grid: &Grid,
    mass: f64,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    trials: usize,
    seed: u64,
    select: bool,
) -> Result<Vec<ComparisonReport>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (r0, r1) = random_ordered_pair(grid, mass, seed.wrapping_add(i));
            check_comparison(&r0, &r1, energy, cost, config, select)
        })
        .collect()
}

/// How far snapshots stray outside `lower ≤ ρ ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichReport {
    /// `max (lower − ρ)` over snapshots and nodes.
    pub below: f64,
    /// `max (ρ − upper)`.
    pub above: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_sandwich<'a>(
    lower: &ScalarField,
    upper: &ScalarField,
    states: impl IntoIterator<Item = &'a ScalarField>,
    tol: f64,
) -> SandwichReport {
    let (mut below, mut above) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in states {
        for ((r, l), u) in s.values().iter().zip(lower.values()).zip(upper.values()) {
            below = below.max(l - r);
            above = above.max(r - u);
        }
    }
    SandwichReport { below, above, tol, pass: below <= tol && above <= tol }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaxPrincipleBranch {
    /// `ρ* = ρ̄` within [`STATIONARY_TOL`].
    Stationary,
    /// `p*` inside the widened range `[a − tol_p, b + tol_p]`.
    InRange,
    /// Neither holds: flagged, since the gap tolerance may be too loose.
    Flagged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxPrincipleReport {
    pub a: f64,
    pub b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub l1_change: f64,
    pub tol_p: f64,
    pub gap: f64,
    pub certified: bool,
    pub branch: MaxPrincipleBranch,
}

/// For `ρ̄ ≥ 10⁻⁶`: either the step is stationary or `p*` stays within the
/// range `[a, b]` of `∂s(ρ̄(x), x)`, widened by `10·gap_tol·max(1, |a|, |b|)`.
pub fn check_maximum_principle(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
) -> Result<MaxPrincipleReport> {
    if !(rho_bar.min() >= MAX_PRINCIPLE_FLOOR) {
        return Err(Error::InvalidArgument(format!(
            "maximum principle needs min density >= {MAX_PRINCIPLE_FLOOR}, got {}",
            rho_bar.min()
        )));
    }
    let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, &z) in rho_bar.values().iter().enumerate() {
        let iv = energy
            .subdiff_s(z, x)
            .ok_or_else(|| Error::InvalidArgument(format!("density {z} at node {x} outside the energy's domain")))?;
        a = a.min(iv.lo);
        b = b.max(iv.hi);
    }
    let r = jko_step(rho_bar, energy, cost, config)?;
    let tol_p = 10.0 * config.gap_tol * 1f64.max(a.abs()).max(b.abs());
    let l1_change = r.rho_star.l1_distance(rho_bar);
    let (p_min, p_max) = (r.p_star.min(), r.p_star.max());
    let branch = if l1_change <= STATIONARY_TOL {
        MaxPrincipleBranch::Stationary
    } else if p_min >= a - tol_p && p_max <= b + tol_p {
        MaxPrincipleBranch::InRange
    } else {
        MaxPrincipleBranch::Flagged
    };
    Ok(MaxPrincipleReport { a, b, p_min, p_max, l1_change, tol_p, gap: r.gap, certified: r.certified, branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::stationary_barrier;
    use crate::grids::FieldRole;
    use crate::verify::random_density;

    fn setup() -> (Grid, EnergyDensity, Cost, SolverConfig) {
        (
            Grid::line(48, 1.0).unwrap(),
            EnergyDensity::power_law(2.0).unwrap(),
            Cost::quadratic(1e-3).unwrap(),
            SolverConfig::default(),
        )
    }

    #[test]
    fn identical_data_contract_trivially() {
        let (g, e, c, cfg) = setup();
        let r = random_density(&g, 1.0, 2);
        let rep = check_contraction(&r, &r, &e, &c, &cfg).unwrap();
        assert_eq!(rep.pre, 0.0);
        assert_eq!(rep.post, 0.0);
        assert!(rep.pass);
        assert!(rep.delta_trend.is_empty());
    }

    #[test]
    fn random_pair_contracts() {
        let (g, e, c, cfg) = setup();
        let reps = contraction_trials(&g, 1.0, &e, &c, &cfg, 4, 11).unwrap();
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
    }

    #[test]
    fn flat_energy_reports_delta_trend() {
        let (g, _, c, cfg) = setup();
        let table = crate::energy::Table::new(vec![0.0, 1.0, 3.0, 10.0], vec![0.0, 0.5, 3.5, 40.0]).unwrap();
        let e = EnergyDensity::tabulated(table);
        let (r0, r1) = random_pair(&g, 1.0, 4);
        let rep = check_contraction(&r0, &r1, &e, &c, &cfg).unwrap();
        assert_eq!(rep.delta_trend.len(), 3);
        assert_eq!(rep.delta_trend[1].delta, 1e-3);
    }

    #[test]
    fn ordered_data_stay_ordered() {
        let (g, e, c, cfg) = setup();
        let reps = comparison_trials(&g, 1.0, &e, &c, &cfg, 3, 1, false).unwrap();
        assert!(reps.iter().all(|r| r.pass && r.p_violation.is_none()), "{reps:?}");
    }

    #[test]
    fn comparison_rejects_unordered_data() {
        let (g, e, c, cfg) = setup();
        let (r0, r1) = random_pair(&g, 1.0, 2);
        assert!(matches!(check_comparison(&r1, &r0, &e, &c, &cfg, false), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn barrier_is_the_stationary_branch() {
        let (g, _, c, cfg) = setup();
        let f = ScalarField::from_fn(g, FieldRole::Pressure, |x| 1.5 + 0.5 * (6.0 * x[0]).sin()).unwrap();
        let e = EnergyDensity::weighted(EnergyDensity::Entropy, crate::energy::WeightField::from_field(&f).unwrap());
        let b = stationary_barrier(&e, &g, 0.8).unwrap();
        let rep = check_maximum_principle(&b.rho, &e, &c, &cfg).unwrap();
        assert_eq!(rep.branch, MaxPrincipleBranch::Stationary);
    }

    #[test]
    fn pressure_stays_in_range() {
        let (g, e, _, cfg) = setup();
        let c = Cost::quadratic(1e-2).unwrap();
        // ∂s(z) = 2z for m = 2: densities in [0.1, 0.4] give p in [0.2, 0.8].
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 0.25 + 0.15 * (2.0 * std::f64::consts::PI * x[0]).cos()).unwrap();
        let rep = check_maximum_principle(&rho, &e, &c, &cfg).unwrap();
        assert!((rep.a - 0.2).abs() < 1e-3 && (rep.b - 0.8).abs() < 1e-3);
        assert_eq!(rep.branch, MaxPrincipleBranch::InRange, "{rep:?}");
    }

    #[test]
    fn maximum_principle_needs_positive_density() {
        let (g, e, c, cfg) = setup();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| (x[0] - 0.5).max(0.0)).unwrap();
        assert!(check_maximum_principle(&rho, &e, &c, &cfg).is_err());
    }

    #[test]
    fn sandwich_detects_excursions() {
        let g = Grid::line(4, 1.0).unwrap();
        let lo = ScalarField::constant(g, 1.0, FieldRole::Density).unwrap();
        let hi = ScalarField::constant(g, 2.0, FieldRole::Density).unwrap();
        let mid = ScalarField::constant(g, 1.5, FieldRole::Density).unwrap();
        assert!(check_sandwich(&lo, &hi, [&mid], 1e-6).pass);
        let out = ScalarField::constant(g, 2.1, FieldRole::Density).unwrap();
        let rep = check_sandwich(&lo, &hi, [&mid, &out], 1e-6);
        assert!(!rep.pass && (rep.above - 0.1).abs() < 1e-12);
    }
}
