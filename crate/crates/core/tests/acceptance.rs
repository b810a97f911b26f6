#![allow(clippy::type_complexity)]

//! Acceptance run: one pass/fail line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use darcy_jko::energy::{EnergyDensity, Table, WeightField};
use darcy_jko::flow::{run_flow, stationary_barrier, FlowConfig};
use darcy_jko::grids::{
    c_transform, c_transform_brute, c_transform_fast_quadratic, cbar_transform, Cost, FieldRole, Grid, ScalarField,
};
use darcy_jko::jko::{
    dual_value, jko_step, primal_value_with_splits, smallest_pressure_select, SolverConfig, MONOTONICITY_TOL,
};
use darcy_jko::verify::{
    benchmark_heat, benchmark_pme_barenblatt, check_sandwich, comparison_tolerance, comparison_trials,
    contraction_trials, random_density, Barenblatt, BarenblattSetup, ContractionReport, CosineSeries,
};

const TRANSFORM_FIELDS_1D: usize = 50;
const TRANSFORM_FIELDS_2D: usize = 50;
const TRANSFORM_TAU: f64 = 1e-2;
const TRANSFORM_REL_TOL: f64 = 1e-12;
const TRANSFORM_SECONDS: f64 = 10.0;

const DUALITY_STEPS_PER_ENERGY: u64 = 10;
const DUALITY_REL_GAP: f64 = 1e-5;
const WEAK_DUALITY_TOL: f64 = 1e-10;
const DUALITY_STEP_SECONDS: f64 = 5.0;

const FIXED_POINT_L1: f64 = 1e-6;
const FIXED_POINT_REL_GAP: f64 = 1e-8;

const CONTRACTION_TRIALS: usize = 50;
const CONTRACTION_GAP_TOL: f64 = 1e-6;
const CONTRACTION_SHRINK: f64 = 5.0;
/// Violations below this multiple of the total mass are floating-point roundoff.
const CONTRACTION_ROUNDOFF: f64 = 1e-14;

const COMPARISON_TRIALS: usize = 50;

const BARRIER_STEPS: usize = 100;
const BARRIER_TOL: f64 = 1e-6;

const EDI_STEPS: usize = 200;
const MASS_DRIFT: f64 = 1e-10;

const PME_ERROR: f64 = 5e-2;
const PME_SECONDS: f64 = 300.0;
const HEAT_RATE: f64 = 0.8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn weight(g: Grid) -> WeightField {
    let f = ScalarField::from_fn(g, FieldRole::Pressure, |x| 1.5 + 0.5 * (6.0 * x[0]).sin()).unwrap();
    WeightField::from_field(&f).unwrap()
}

fn energies(g: Grid) -> Vec<(&'static str, EnergyDensity)> {
    vec![
        ("power m=2", EnergyDensity::power_law(2.0).unwrap()),
        ("weighted entropy", EnergyDensity::weighted(EnergyDensity::Entropy, weight(g))),
    ]
}

fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let amp = rng.gen_range(0.001..0.1);
    let v = (0..g.len()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
    ScalarField::pressure(g, v).unwrap()
}

fn transform_corpus() -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g1 = Grid::line(256, 1.0).unwrap();
    let g2 = Grid::rect(64, 64, 1.0, 1.0).unwrap();
    let mut out: Vec<ScalarField> = (0..TRANSFORM_FIELDS_1D).map(|_| random_field(g1, &mut rng)).collect();
    out.extend((0..TRANSFORM_FIELDS_2D).map(|_| random_field(g2, &mut rng)));
    out
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

fn transform_oracle(corpus: &[ScalarField]) -> Outcome {
    let cost = Cost::quadratic(TRANSFORM_TAU).unwrap();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for p in corpus {
        let fast = c_transform_fast_quadratic(p, TRANSFORM_TAU);
        let brute = c_transform_brute(p, &cost);
        worst = worst.max(rel_diff(fast.values.values(), brute.values.values()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= TRANSFORM_REL_TOL && secs < TRANSFORM_SECONDS,
        format!("{} fields, max rel diff {worst:.2e}, {secs:.2} s", corpus.len()),
    )
}

fn transform_algebra(corpus: &[ScalarField]) -> Outcome {
    let cost = Cost::quadratic(TRANSFORM_TAU).unwrap();
    let (mut above, mut idem) = (f64::NEG_INFINITY, 0.0f64);
    for p in corpus {
        let pc = c_transform(p, &cost).values;
        let pcc = cbar_transform(&pc, &cost).values;
        let pccc = c_transform(&pcc, &cost).values;
        let scale = p.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        above = above.max(pcc.values().iter().zip(p.values()).map(|(a, b)| (a - b) / scale).fold(f64::NEG_INFINITY, f64::max));
        idem = idem.max(rel_diff(pccc.values(), pc.values()));
    }
    outcome(
        above <= TRANSFORM_REL_TOL && idem <= TRANSFORM_REL_TOL,
        format!("max (p^cc - p) {above:.2e}, max |p^ccc - p^c| {idem:.2e}"),
    )
}

fn duality_certificate() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let cost = Cost::quadratic(1e-3).unwrap();
    let cfg = SolverConfig::default();
    let (mut worst_gap, mut worst_weak, mut worst_secs) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    let mut all_certified = true;
    let mut count = 0;
    for (_, e) in energies(g) {
        for seed in 0..DUALITY_STEPS_PER_ENERGY {
            let rho = random_density(&g, 1.0, 100 + seed);
            let start = Instant::now();
            let r = jko_step(&rho, &e, &cost, &cfg).unwrap();
            worst_secs = worst_secs.max(start.elapsed().as_secs_f64());
            let primal = primal_value_with_splits(&r.rho_star, &rho, &r.map, &r.splits, &e, &cost).unwrap().to_f64();
            let dual = dual_value(&r.p_star, &rho, &e, &cost).unwrap();
            let scale = dual.abs().max(1.0);
            worst_gap = worst_gap.max((primal - dual) / scale);
            worst_weak = worst_weak.max((dual - primal) / scale);
            all_certified &= r.certified;
            count += 1;
        }
    }
    outcome(
        all_certified && worst_gap <= DUALITY_REL_GAP && worst_weak <= WEAK_DUALITY_TOL && worst_secs < DUALITY_STEP_SECONDS,
        format!(
            "{count} steps, max rel gap {worst_gap:.2e}, max dual - primal {worst_weak:.2e}, slowest {worst_secs:.2} s"
        ),
    )
}

fn fixed_point() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let cost = Cost::quadratic(1e-2).unwrap();
    let cfg = SolverConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    let weighted_power = EnergyDensity::weighted(EnergyDensity::power_law(2.0).unwrap(), weight(g));
    let cases = vec![
        ("weighted entropy", EnergyDensity::weighted(EnergyDensity::Entropy, weight(g)), 0.8),
        ("weighted power m=2", weighted_power, 0.5),
    ];
    for (name, e, lambda) in cases {
        let b = stationary_barrier(&e, &g, lambda).unwrap();
        let r = jko_step(&b.rho, &e, &cost, &cfg).unwrap();
        let dev = r.rho_star.l1_distance(&b.rho);
        let rel = r.gap / r.dual_value.abs();
        pass &= r.certified && dev <= FIXED_POINT_L1 && rel <= FIXED_POINT_REL_GAP;
        parts.push(format!("{name}: L1 {dev:.2e}, gap/|J*| {rel:.2e}"));
    }
    outcome(pass, parts.join("; "))
}

/// Worst violation `max(−slack)` above the roundoff floor, or 0.
fn violation(reports: &[ContractionReport], masses: f64) -> (f64, f64) {
    let raw = reports.iter().map(|r| -r.slack).fold(0.0f64, f64::max);
    let floor = CONTRACTION_ROUNDOFF * masses;
    (raw, if raw > floor { raw } else { 0.0 })
}

fn contraction() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let cost = Cost::quadratic(1e-3).unwrap();
    let loose = SolverConfig { gap_tol: CONTRACTION_GAP_TOL, ..SolverConfig::default() };
    let tight = SolverConfig { gap_tol: CONTRACTION_GAP_TOL / 10.0, ..SolverConfig::default() };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, e) in energies(g) {
        let a = contraction_trials(&g, 1.0, &e, &cost, &loose, CONTRACTION_TRIALS, 7).unwrap();
        let b = contraction_trials(&g, 1.0, &e, &cost, &tight, CONTRACTION_TRIALS, 7).unwrap();
        let passed = a.iter().chain(&b).filter(|r| r.pass).count();
        let (raw_a, va) = violation(&a, 2.2);
        let (raw_b, vb) = violation(&b, 2.2);
        let shrinks = vb == 0.0 || vb * CONTRACTION_SHRINK <= va;
        pass &= passed == 2 * CONTRACTION_TRIALS && shrinks;
        parts.push(format!(
            "{name}: {passed}/{} pass, worst violation {raw_a:.1e} -> {raw_b:.1e}",
            2 * CONTRACTION_TRIALS
        ));
    }
    outcome(pass, parts.join("; "))
}

fn comparison() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let cost = Cost::quadratic(1e-3).unwrap();
    let cfg = SolverConfig::default();
    let tol = comparison_tolerance(&cfg);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, e) in energies(g) {
        let reps = comparison_trials(&g, 1.0, &e, &cost, &cfg, COMPARISON_TRIALS, 31, false).unwrap();
        let worst = reps.iter().map(|r| r.rho_violation).fold(f64::NEG_INFINITY, f64::max);
        let ok = reps.iter().all(|r| r.certified) && worst <= tol;
        pass &= ok;
        parts.push(format!("{name}: {} trials, max violation {worst:.2e} (tol {tol:.1e})", reps.len()));
    }
    outcome(pass, parts.join("; "))
}

fn barrier_confinement() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    let cases = vec![
        ("weighted entropy", EnergyDensity::weighted(EnergyDensity::Entropy, weight(g)), 0.5, 1.5),
        ("weighted power m=2", EnergyDensity::weighted(EnergyDensity::power_law(2.0).unwrap(), weight(g)), 0.3, 0.9),
    ];
    for (name, e, l1, l2) in cases {
        let lo = stationary_barrier(&e, &g, l1).unwrap();
        let hi = stationary_barrier(&e, &g, l2).unwrap();
        let v = (0..g.len())
            .map(|i| {
                let th = 0.5 + 0.45 * (11.0 * g.node(i)[0]).sin();
                th * lo.rho.values()[i] + (1.0 - th) * hi.rho.values()[i]
            })
            .collect();
        let rho0 = ScalarField::density(g, v).unwrap();
        let cfg = FlowConfig { tau: 1e-3, t_final: BARRIER_STEPS as f64 * 1e-3, snapshot_every: 1, ..FlowConfig::default() };
        let out = run_flow(&rho0, &e, &cfg).unwrap();
        let steps = out.ledger.rows.len() - 1;
        let rep = check_sandwich(&lo.rho, &hi.rho, out.snapshots.iter().map(|s| &s.rho), BARRIER_TOL);
        pass &= out.completed() && steps == BARRIER_STEPS && rep.pass;
        parts.push(format!("{name}: {steps} steps, below {:.1e}, above {:.1e}", rep.below, rep.above));
    }
    outcome(pass, parts.join("; "))
}

fn discrete_edi() -> Outcome {
    let g = Grid::line(128, 1.0).unwrap();
    let e = EnergyDensity::power_law(2.0).unwrap();
    let rho0 = ScalarField::from_fn(g, FieldRole::Density, |x| {
        (1.0 - 100.0 * (x[0] - 0.35).powi(2)).max(0.0) + 0.5 * (1.0 - 400.0 * (x[0] - 0.7).powi(2)).max(0.0)
    })
    .unwrap();
    let cfg = FlowConfig { tau: 1e-3, t_final: EDI_STEPS as f64 * 1e-3, snapshot_every: 0, ..FlowConfig::default() };
    let out = run_flow(&rho0, &e, &cfg).unwrap();
    let steps = out.ledger.rows.len() - 1;
    let edi = out.ledger.edi_violation();
    let drift = out.ledger.mass_drift();
    outcome(
        out.completed() && steps == EDI_STEPS && edi <= 0.0 && drift <= MASS_DRIFT,
        format!("{steps} steps, max EDI excess {edi:.2e}, mass drift {drift:.1e}"),
    )
}

fn barenblatt() -> Outcome {
    let setup = BarenblattSetup { profile: Barenblatt::new(2.0, 0.0847).unwrap(), t0: 0.1, t1: 0.5, half_width: 1.0 };
    let start = Instant::now();
    let rep = benchmark_pme_barenblatt(&setup, &[(64, 4e-3), (128, 2e-3), (256, 1e-3)], &SolverConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let finest = rep.rows.last().unwrap();
    let errs: Vec<String> = rep.rows.iter().map(|r| format!("{:.2e}", r.error)).collect();
    outcome(
        rep.all_certified() && rep.strictly_decreasing() && finest.error <= PME_ERROR && secs < PME_SECONDS,
        format!("errors {} (n=256 tau=1e-3 last), rate {:.2}, {secs:.1} s", errs.join(" > "), rep.rate_tau),
    )
}

fn heat() -> Outcome {
    let s = CosineSeries { length: 1.0, constant: 1.0, terms: vec![(1, 0.5)] };
    let rep = benchmark_heat(&s, 0.05, &[(32, 0.01), (64, 0.005), (128, 0.0025)], &SolverConfig::default()).unwrap();
    let errs: Vec<String> = rep.rows.iter().map(|r| format!("{:.2e}", r.error)).collect();
    outcome(
        rep.all_certified() && rep.strictly_decreasing() && rep.rate_tau >= HEAT_RATE,
        format!("errors {}, tau-rate {:.3}", errs.join(" > "), rep.rate_tau),
    )
}

fn smallest_monotone() -> Outcome {
    let g = Grid::line(64, 1.0).unwrap();
    // Piecewise-linear s: ∂s jumps at every breakpoint, so ∂ₚs* is flat between slopes.
    let table = Table::new(vec![0.0, 0.5, 1.0, 2.0, 4.0], vec![0.0, 0.1, 0.4, 1.4, 5.4]).unwrap();
    let e = EnergyDensity::tabulated(table);
    let cost = Cost::quadratic(1e-2).unwrap();
    let cfg = SolverConfig::default();
    let (mut worst, mut certified) = (f64::NEG_INFINITY, true);
    for seed in 0..5 {
        let rho = random_density(&g, 1.0, 500 + seed);
        let sel = smallest_pressure_select(&rho, &e, &cost, &cfg).unwrap();
        worst = worst.max(sel.max_decrease);
        certified &= sel.all_certified();
    }
    outcome(
        certified && worst <= MONOTONICITY_TOL,
        format!("schedule {:?}, 5 data, max decrease {worst:.2e}", cfg.k_schedule),
    )
}

fn main() -> ExitCode {
    let corpus = transform_corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("transform oracle equivalence", Box::new(|| transform_oracle(&corpus))),
        ("transform algebra", Box::new(|| transform_algebra(&corpus))),
        ("duality certificate", Box::new(duality_certificate)),
        ("barrier fixed point", Box::new(fixed_point)),
        ("L1 contraction", Box::new(contraction)),
        ("comparison", Box::new(comparison)),
        ("barrier confinement", Box::new(barrier_confinement)),
        ("discrete EDI", Box::new(discrete_edi)),
        ("PME Barenblatt benchmark", Box::new(barenblatt)),
        ("heat benchmark", Box::new(heat)),
        ("smallest-maximizer monotonicity", Box::new(smallest_monotone)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
