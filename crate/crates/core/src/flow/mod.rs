//! Time stepping, the energy-dissipation ledger and stationary barriers.

mod barrier;
mod ledger;

pub use barrier::{stationary_barrier, Barrier};
pub use ledger::{FlowLedger, LedgerRow, LEDGER_COLUMNS};

use std::path::Path;

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::grids::io::write_field;
use crate::grids::{Cost, ScalarField};
use crate::jko::{energy_value, jko_step_from, smallest_pressure_select_from, JkoStepResult, SolverConfig};

/// Which maximizer each step keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    /// Whatever the ascent converges to.
    Ascent,
    /// The log-exp regularized smallest maximizer.
    Smallest,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub tau: f64,
    /// Final time; `ceil(T/τ)` steps are taken.
    pub t_final: f64,
    /// Keep every this many steps (plus the first and last); 0 keeps only those.
    pub snapshot_every: usize,
    /// When set, `ρ₀ ≤ ∂ₚs*(M, ·)` is checked and a warning recorded otherwise.
    pub m_bound: Option<f64>,
    /// Keep going after a step that does not certify.
    pub allow_uncertified: bool,
    pub selector: Selector,
    pub solver: SolverConfig,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            tau: 1e-3,
            t_final: 0.0,
            snapshot_every: 1,
            m_bound: None,
            allow_uncertified: false,
            selector: Selector::Ascent,
            solver: SolverConfig::default(),
        }
    }
}

impl FlowConfig {
    pub fn steps(&self) -> usize {
        if self.t_final <= 0.0 {
            0
        } else {
            (self.t_final / self.tau * (1.0 - 1e-12)).ceil() as usize
        }
    }
}

/// The piecewise-constant interpolant at step `step`: `ρ^τ(t) = ρ^{n}` for
/// `t ∈ ((n−1)τ, nτ]`.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub rho: ScalarField,
    /// `None` for the initial datum.
    pub p: Option<ScalarField>,
}

#[derive(Clone, Debug)]
pub struct FlowOutput {
    pub snapshots: Vec<Snapshot>,
    pub ledger: FlowLedger,
    pub warnings: Vec<String>,
    /// First step that failed to certify, when the flow stopped there.
    pub aborted_at: Option<usize>,
    /// The last step's result, if any step ran.
    pub last: Option<JkoStepResult>,
}

impl FlowOutput {
    pub fn completed(&self) -> bool {
        self.aborted_at.is_none()
    }

    pub fn final_density(&self) -> &ScalarField {
        &self.snapshots.last().expect("initial snapshot is always kept").rho
    }

    /// Write `ledger.csv` and `snap_<step>.csv` files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.ledger.write_csv(&dir.join("ledger.csv"))?;
        for s in &self.snapshots {
            write_field(&dir.join(format!("snap_{}.csv", s.step)), &s.rho)?;
        }
        Ok(())
    }
}

/// `(τ/2) Σ ρ |∇p|² h^d` over `{ρ > 0}`, with the map's discrete gradient.
pub fn step_dissipation(rho: &ScalarField, p: &ScalarField, tau: f64) -> f64 {
    let grid = rho.grid();
    let grad = grid.gradient(p.values());
    let hd = grid.cell_volume();
    0.5 * tau
        * hd
        * rho
            .values()
            .iter()
            .zip(&grad)
            .filter(|(&r, _)| r > 0.0)
            .map(|(&r, g)| r * (g[0] * g[0] + g[1] * g[1]))
            .sum::<f64>()
}

/// Iterate the step with the quadratic cost `|x−y|²/(2τ)`, warm-starting
/// each ascent from the previous pressure.
pub fn run_flow(rho0: &ScalarField, energy: &EnergyDensity, config: &FlowConfig) -> Result<FlowOutput> {
    let cost = Cost::quadratic(config.tau)?;
    if !(config.t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!("final time must be >= 0, got {}", config.t_final)));
    }
    let mut warnings = Vec::new();
    if let Some(m) = config.m_bound {
        let worst = rho0
            .values()
            .iter()
            .enumerate()
            .map(|(x, &r)| r - energy.subdiff_s_star(m, x).hi)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 0.0 {
            warnings.push(format!("initial density exceeds the bound at M = {m} by {worst:e}"));
        }
    }
    let e0 = energy_value(rho0, energy).to_f64();
    let mut ledger = FlowLedger::default();
    ledger.rows.push(LedgerRow {
        step: 0,
        time: 0.0,
        energy: e0,
        step_cost: 0.0,
        cum_dissipation: 0.0,
        gap: 0.0,
        mass: rho0.mass(),
        rho_min: rho0.min(),
        rho_max: rho0.max(),
        p_min: f64::NAN,
        p_max: f64::NAN,
    });
    let mut snapshots = vec![Snapshot { step: 0, time: 0.0, rho: rho0.clone(), p: None }];
    let n_steps = config.steps();
    let mut rho = rho0.clone();
    let mut warm: Option<ScalarField> = None;
    let mut cum = 0.0;
    let mut aborted_at = None;
    let mut last = None;
    for n in 1..=n_steps {
        let r = match config.selector {
            Selector::Ascent => jko_step_from(&rho, energy, &cost, &config.solver, warm.as_ref())?,
            Selector::Smallest => {
                let sel = smallest_pressure_select_from(&rho, energy, &cost, &config.solver, warm.as_ref())?;
                if !sel.monotone {
                    warnings.push(format!("step {n}: selector monotonicity defect {:e}", sel.max_decrease));
                }
                sel.last().clone()
            }
        };
        cum += step_dissipation(&r.rho_star, &r.p_star, config.tau);
        let time = n as f64 * config.tau;
        ledger.rows.push(LedgerRow {
            step: n,
            time,
            energy: r.energy,
            step_cost: r.transport_cost,
            cum_dissipation: cum,
            gap: r.gap,
            mass: r.rho_star.mass(),
            rho_min: r.rho_star.min(),
            rho_max: r.rho_star.max(),
            p_min: r.p_star.min(),
            p_max: r.p_star.max(),
        });
        rho = r.rho_star.clone();
        warm = Some(r.p_star.clone());
        let keep = n == n_steps || (config.snapshot_every > 0 && n % config.snapshot_every == 0);
        let failed = !r.certified;
        if keep || (failed && !config.allow_uncertified) {
            snapshots.push(Snapshot { step: n, time, rho: rho.clone(), p: Some(r.p_star.clone()) });
        }
        if failed {
            warnings.push(format!("step {n} not certified: gap {:e}", r.gap));
        }
        last = Some(r);
        if failed && !config.allow_uncertified {
            aborted_at = Some(n);
            break;
        }
    }
    Ok(FlowOutput { snapshots, ledger, warnings, aborted_at, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{FieldRole, Grid};

    #[test]
    fn zero_final_time_keeps_input() {
        let g = Grid::line(16, 1.0).unwrap();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 1.0 + x[0]).unwrap();
        let out = run_flow(&rho, &EnergyDensity::power_law(2.0).unwrap(), &FlowConfig::default()).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.final_density(), &rho);
        assert_eq!(out.ledger.rows.len(), 1);
    }

    #[test]
    fn step_count() {
        let cfg = FlowConfig { tau: 0.1, t_final: 0.3, ..FlowConfig::default() };
        assert_eq!(cfg.steps(), 3);
        let cfg = FlowConfig { tau: 0.1, t_final: 0.31, ..FlowConfig::default() };
        assert_eq!(cfg.steps(), 4);
    }

    #[test]
    fn barrier_is_a_fixed_point_of_the_flow() {
        let g = Grid::line(32, 1.0).unwrap();
        let e = EnergyDensity::power_law(2.0).unwrap();
        let b = stationary_barrier(&e, &g, 0.4).unwrap();
        let cfg = FlowConfig { tau: 0.01, t_final: 0.05, ..FlowConfig::default() };
        let out = run_flow(&b.rho, &e, &cfg).unwrap();
        assert!(out.completed());
        for s in &out.snapshots {
            assert!(s.rho.l1_distance(&b.rho) < 1e-8);
        }
    }

    #[test]
    fn energy_decreases_and_mass_is_kept() {
        let g = Grid::line(48, 1.0).unwrap();
        let e = EnergyDensity::power_law(2.0).unwrap();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| 0.1 + (-40.0 * (x[0] - 0.3).powi(2)).exp()).unwrap();
        let cfg = FlowConfig { tau: 0.005, t_final: 0.05, snapshot_every: 5, ..FlowConfig::default() };
        let out = run_flow(&rho, &e, &cfg).unwrap();
        assert!(out.completed());
        assert_eq!(out.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 5, 10]);
        let rows = &out.ledger.rows;
        for w in rows.windows(2) {
            assert!(w[1].energy <= w[0].energy + 2.0 * w[1].gap);
            assert!((w[1].mass - rows[0].mass).abs() <= 1e-10 * rows[0].mass);
        }
        assert!(out.ledger.edi_violation() <= 0.0);
    }
}
