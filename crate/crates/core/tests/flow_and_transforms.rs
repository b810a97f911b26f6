use darcy_jko::energy::EnergyDensity;
use darcy_jko::flow::{run_flow, FlowConfig};
use darcy_jko::grids::{c_concavify, c_transform, c_transform_brute, cbar_transform, Cost, FieldRole, Grid, ScalarField};
use proptest::prelude::*;

fn bump(n: usize) -> ScalarField {
    let g = Grid::line(n, 1.0).unwrap();
    ScalarField::from_fn(g, FieldRole::Density, |x| 0.1 + (1.0 - 40.0 * (x[0] - 0.35).powi(2)).max(0.0)).unwrap()
}

#[test]
fn entropy_flow_keeps_mass_and_dissipates_energy() {
    let cfg = FlowConfig { tau: 2e-3, t_final: 0.02, snapshot_every: 5, ..FlowConfig::default() };
    let out = run_flow(&bump(48), &EnergyDensity::Entropy, &cfg).unwrap();
    assert!(out.completed());
    assert_eq!(out.ledger.rows.len(), 11);
    assert!(out.ledger.mass_drift() <= 1e-10);
    assert!(out.ledger.edi_violation() <= 0.0);
    for w in out.ledger.rows.windows(2) {
        assert!(w[1].energy <= w[0].energy + 2.0 * w[1].gap);
    }
    let steps: Vec<usize> = out.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, vec![0, 5, 10]);
}

#[test]
fn porous_medium_flow_flattens_the_bump() {
    let cfg = FlowConfig { tau: 2e-3, t_final: 0.02, snapshot_every: 0, ..FlowConfig::default() };
    let rho0 = bump(48);
    let out = run_flow(&rho0, &EnergyDensity::power_law(2.0).unwrap(), &cfg).unwrap();
    let last = out.final_density();
    assert!(last.max() < rho0.max());
    assert!(last.min() >= rho0.min() - 1e-12);
}

fn pressure(values: Vec<f64>) -> ScalarField {
    let n = values.len();
    ScalarField::new(Grid::line(n, 1.0).unwrap(), values, FieldRole::Pressure).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_transform_matches_brute_force(v in prop::collection::vec(-2.0f64..2.0, 2..40), tau in 1e-3f64..1.0) {
        let p = pressure(v);
        let cost = Cost::quadratic(tau).unwrap();
        let fast = c_transform(&p, &cost).values;
        let brute = c_transform_brute(&p, &cost).values;
        for (a, b) in fast.values().iter().zip(brute.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn concavification_is_idempotent_and_below(v in prop::collection::vec(-2.0f64..2.0, 2..40), tau in 1e-3f64..1.0) {
        let p = pressure(v);
        let cost = Cost::quadratic(tau).unwrap();
        let once = c_concavify(&p, &cost);
        let twice = c_concavify(&once, &cost);
        for ((a, b), c) in once.values().iter().zip(twice.values()).zip(p.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!(*a <= c + 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn double_transform_is_c_concave(v in prop::collection::vec(-2.0f64..2.0, 2..40), tau in 1e-3f64..1.0) {
        let p = pressure(v);
        let cost = Cost::quadratic(tau).unwrap();
        let q = cbar_transform(&c_transform(&p, &cost).values, &cost).values;
        let again = cbar_transform(&c_transform(&q, &cost).values, &cost).values;
        for (a, b) in q.values().iter().zip(again.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
