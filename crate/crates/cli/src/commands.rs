//! One function per subcommand. Inputs are read and every result computed
//! before the first file is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use darcy_jko::energy::EnergyDensity;
use darcy_jko::flow::{run_flow, stationary_barrier, step_dissipation, FlowLedger, LedgerRow, Selector};
use darcy_jko::grids::io::{fmt_f64, format_field, read_field};
use darcy_jko::grids::{c_concavify, c_transform, cbar_transform, Cost, FieldRole, Grid, ScalarField};
use darcy_jko::jko::{jko_step, smallest_pressure_select, JkoStepResult, SolverConfig};
use darcy_jko::verify::{
    benchmark_heat, benchmark_pme_barenblatt, check_maximum_principle, comparison_csv, comparison_summary,
    comparison_trials, contraction_csv, contraction_summary, contraction_trials, delta_trend_csv,
    max_principle_csv, random_density, Barenblatt, BarenblattSetup, ConvergenceReport, CosineSeries,
    MaxPrincipleBranch,
};

use crate::config::{EnergyKind, RunConfig};
use crate::error::CliError;

/// Largest relative mass drift accepted by the `edi` suite.
const EDI_MASS_DRIFT: f64 = 1e-10;
/// Tolerated growth between refinement levels of a benchmark.
const REFINEMENT_NOISE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Failed,
    Uncertified,
}

impl Outcome {
    fn from_checks(pass: bool, certified: bool) -> Outcome {
        match (pass, certified) {
            (false, _) => Outcome::Failed,
            (true, false) => Outcome::Uncertified,
            (true, true) => Outcome::Pass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Contraction,
    Comparison,
    Maxprinciple,
    Edi,
    Barenblatt,
    Heat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TransformMode {
    /// `p^c(x) = min_y p(y) + c(x, y)`.
    C,
    /// `q^c̄(y) = max_x q(x) − c(x, y)`.
    Cbar,
    /// `p^{c c̄}`.
    Concavify,
}

/// Files produced by a command, written together at the end.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Outputs {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn write(self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn read_input(path: &Path, role: FieldRole) -> Result<ScalarField, CliError> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    read_field(path, role).map_err(|e| CliError::input(path, e))
}

fn solve(rho: &ScalarField, energy: &EnergyDensity, cost: &Cost, cfg: &RunConfig) -> Result<JkoStepResult, CliError> {
    Ok(match cfg.selector {
        Selector::Ascent => jko_step(rho, energy, cost, &cfg.solver)?,
        Selector::Smallest => smallest_pressure_select(rho, energy, cost, &cfg.solver)?.last().clone(),
    })
}

fn step_row(r: &JkoStepResult, tau: Option<f64>) -> LedgerRow {
    LedgerRow {
        step: 1,
        time: tau.unwrap_or(f64::NAN),
        energy: r.energy,
        step_cost: r.transport_cost,
        cum_dissipation: tau.map_or(f64::NAN, |t| step_dissipation(&r.rho_star, &r.p_star, t)),
        gap: r.gap,
        mass: r.rho_star.mass(),
        rho_min: r.rho_star.min(),
        rho_max: r.rho_star.max(),
        p_min: r.p_star.min(),
        p_max: r.p_star.max(),
    }
}

/// One step from the density in `input`: `rho_star.csv`, `p_star.csv` and a one-row `ledger.csv`.
pub fn step(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(Outcome, String), CliError> {
    let rho = read_input(input, FieldRole::Density)?;
    let energy = cfg.energy(rho.grid())?;
    let cost = cfg.cost()?;
    let r = solve(&rho, &energy, &cost, cfg)?;
    let ledger = FlowLedger { rows: vec![step_row(&r, cfg.tau())] };
    let mut files = Outputs::new(out);
    files.add("rho_star.csv", format_field(&r.rho_star));
    files.add("p_star.csv", format_field(&r.p_star));
    files.add("ledger.csv", ledger.to_csv());
    files.write()?;
    let summary = format!(
        "[step] certified={} iterations={} gap={:.3e} primal={} dual={} mass={}\n",
        r.certified,
        r.iterations,
        r.gap,
        fmt_f64(r.primal_value),
        fmt_f64(r.dual_value),
        fmt_f64(r.rho_star.mass())
    );
    Ok((Outcome::from_checks(true, r.certified), summary))
}

/// The flow from the density in `input`: `ledger.csv` and `snap_<step>.csv`.
/// A flow stopped at an uncertified step still writes what it computed.
pub fn flow(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(Outcome, String), CliError> {
    let rho0 = read_input(input, FieldRole::Density)?;
    let energy = cfg.energy(rho0.grid())?;
    let fc = cfg.flow_config()?;
    let res = run_flow(&rho0, &energy, &fc)?;
    res.write(out)?;
    let steps = res.ledger.rows.len() - 1;
    let mut summary = format!(
        "[flow] steps={steps} snapshots={} edi_violation={:.3e} mass_drift={:.3e} total_gap={:.3e}\n",
        res.snapshots.len(),
        res.ledger.edi_violation(),
        res.ledger.mass_drift(),
        res.ledger.total_gap()
    );
    for w in &res.warnings {
        let _ = writeln!(summary, "  warning: {w}");
    }
    if let Some(n) = res.aborted_at {
        let _ = writeln!(summary, "  aborted at step {n}");
    }
    Ok((Outcome::from_checks(true, res.completed()), summary))
}

fn convergence(rep: &ConvergenceReport, file: &str, out: &Path) -> Result<(Outcome, String), CliError> {
    let mut files = Outputs::new(out);
    files.add(file, rep.to_csv());
    let summary = rep.summary();
    files.add("summary.txt", summary.clone());
    files.write()?;
    Ok((Outcome::from_checks(rep.decreasing(REFINEMENT_NOISE), rep.all_certified()), summary))
}

/// Run one verification suite on data generated from the configured domain.
pub fn verify(
    cfg: &RunConfig,
    suite: Suite,
    input: Option<&Path>,
    out: &Path,
) -> Result<(Outcome, String), CliError> {
    let grid = cfg.grid()?;
    let v = &cfg.verify;
    let solver = &cfg.solver;
    match suite {
        Suite::Contraction | Suite::Comparison | Suite::Maxprinciple => {
            let energy = cfg.energy(&grid)?;
            let cost = cfg.cost()?;
            let mut files = Outputs::new(out);
            let (outcome, summary) = match suite {
                Suite::Contraction => {
                    let reps = contraction_trials(&grid, v.mass, &energy, &cost, solver, v.trials, cfg.seed)?;
                    files.add("contraction.csv", contraction_csv(&reps));
                    files.add("delta_trend.csv", delta_trend_csv(&reps));
                    let pass = reps.iter().all(|r| r.pass || r.inconclusive());
                    (Outcome::from_checks(pass, reps.iter().all(|r| r.certified)), contraction_summary(&reps))
                }
                Suite::Comparison => {
                    let reps = comparison_trials(&grid, v.mass, &energy, &cost, solver, v.trials, cfg.seed, v.select)?;
                    files.add("comparison.csv", comparison_csv(&reps));
                    let pass = reps.iter().all(|r| r.pass || !r.certified);
                    (Outcome::from_checks(pass, reps.iter().all(|r| r.certified)), comparison_summary(&reps))
                }
                _ => {
                    let reps = max_principle_trials(&grid, v.mass, &energy, &cost, solver, v.trials, cfg.seed)?;
                    files.add("maxprinciple.csv", max_principle_csv(&reps));
                    let flagged = reps.iter().filter(|r| r.branch == MaxPrincipleBranch::Flagged).count();
                    let certified = reps.iter().all(|r| r.certified);
                    let summary = format!("[maxprinciple] {}/{} within range or stationary\n", reps.len() - flagged, reps.len());
                    (Outcome::from_checks(flagged == 0, certified), summary)
                }
            };
            files.add("summary.txt", summary.clone());
            files.write()?;
            Ok((outcome, summary))
        }
        Suite::Edi => {
            let rho0 = match input {
                Some(p) => read_input(p, FieldRole::Density)?,
                None => random_density(&grid, v.mass, cfg.seed),
            };
            let energy = cfg.energy(rho0.grid())?;
            let fc = cfg.flow_config()?;
            if fc.steps() == 0 {
                return Err(CliError::Usage("the edi suite needs flow.T > 0".into()));
            }
            let res = run_flow(&rho0, &energy, &fc)?;
            let edi = res.ledger.edi_violation();
            let drift = res.ledger.mass_drift();
            let summary = format!(
                "[edi] steps={} edi_violation={edi:.3e} mass_drift={drift:.3e} completed={}\n",
                res.ledger.rows.len() - 1,
                res.completed()
            );
            let mut files = Outputs::new(out);
            files.add("ledger.csv", res.ledger.to_csv());
            files.add("summary.txt", summary.clone());
            files.write()?;
            Ok((Outcome::from_checks(edi <= 0.0 && drift <= EDI_MASS_DRIFT, res.completed()), summary))
        }
        Suite::Barenblatt => {
            if cfg.energy.kind != EnergyKind::Power || cfg.energy.weight_field.is_some() {
                return Err(CliError::Usage("the barenblatt suite needs energy.kind = power without a weight".into()));
            }
            let setup = BarenblattSetup {
                profile: Barenblatt::new(cfg.energy.m, v.c)?,
                t0: v.t0,
                t1: v.t1,
                half_width: v.half_width,
            };
            let levels = v.levels.clone().unwrap_or_else(|| vec![(64, 4e-3), (128, 2e-3), (256, 1e-3)]);
            convergence(&benchmark_pme_barenblatt(&setup, &levels, solver)?, "barenblatt.csv", out)
        }
        Suite::Heat => {
            let series = CosineSeries { length: cfg.domain.extent[0], constant: 1.0, terms: vec![(1, v.amplitude)] };
            let levels = v.levels.clone().unwrap_or_else(|| vec![(32, 0.01), (64, 0.005), (128, 0.0025)]);
            convergence(&benchmark_heat(&series, v.t_final, &levels, solver)?, "heat.csv", out)
        }
    }
}

/// Random data bounded away from zero, one check per trial.
fn max_principle_trials(
    grid: &Grid,
    mass: f64,
    energy: &EnergyDensity,
    cost: &Cost,
    solver: &SolverConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<darcy_jko::verify::MaxPrincipleReport>, CliError> {
    let mean = mass / grid.volume();
    let res: darcy_jko::Result<Vec<_>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let r = random_density(grid, mass, seed.wrapping_add(i));
            let floored = ScalarField::new(*grid, r.values().iter().map(|v| 0.9 * v + 0.1 * mean).collect(), FieldRole::Density)?;
            check_maximum_principle(&floored, energy, cost, solver)
        })
        .collect();
    Ok(res?)
}

/// Transform the field in `input` and write it to `out`.
pub fn ctransform(mode: TransformMode, cost: &Cost, input: &Path, out: &Path) -> Result<(Outcome, String), CliError> {
    let p = read_input(input, FieldRole::Pressure)?;
    let result = match mode {
        TransformMode::C => c_transform(&p, cost).values,
        TransformMode::Cbar => cbar_transform(&p, cost).values,
        TransformMode::Concavify => c_concavify(&p, cost),
    };
    std::fs::write(out, format_field(&result)).map_err(|e| CliError::io(out, e))?;
    Ok((Outcome::Pass, format!("[ctransform] {} nodes, min {} max {}\n", result.len(), fmt_f64(result.min()), fmt_f64(result.max()))))
}

/// The stationary barrier of mass `barrier.lambda`: `barrier.csv` and `summary.txt`.
pub fn barrier(cfg: &RunConfig, out: &Path) -> Result<(Outcome, String), CliError> {
    let lambda = cfg.barrier_lambda.ok_or_else(|| CliError::Usage("barrier needs barrier.lambda".into()))?;
    let grid = cfg.grid()?;
    let energy = cfg.energy(&grid)?;
    let b = stationary_barrier(&energy, &grid, lambda)?;
    let summary = format!(
        "[barrier] lambda={} alpha={} a={} b={} mass={}\n",
        fmt_f64(b.lambda),
        fmt_f64(b.alpha),
        fmt_f64(b.a),
        fmt_f64(b.b),
        fmt_f64(b.rho.mass())
    );
    let mut files = Outputs::new(out);
    files.add("barrier.csv", format_field(&b.rho));
    files.add("summary.txt", summary.clone());
    files.write()?;
    Ok((Outcome::Pass, summary))
}
