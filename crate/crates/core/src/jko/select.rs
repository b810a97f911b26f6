//! Selecting particular maximizers when the dual has many.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{initial_pressure, jko_step_from, JkoStepResult, SolverConfig};
use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::grids::{Cost, FieldRole, ScalarField};

/// Default max-norm step bound used by the selector when none is configured.
const SELECT_STEP_TOL: f64 = 1e-9;

/// Tolerance on `p_k ≤ p_{k'}` for `k < k'`.
pub const MONOTONICITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SmallestSelection {
    /// Regularization level and the step solved with it, in schedule order.
    pub steps: Vec<(u32, JkoStepResult)>,
    /// Largest `p_k − p_{k'}` over consecutive `k < k'` and nodes.
    pub max_decrease: f64,
    /// `max_decrease ≤ MONOTONICITY_TOL` and every step certified.
    pub monotone: bool,
}

impl SmallestSelection {
    /// The last (largest-k) pressure: the approximation of the smallest maximizer.
    pub fn pressure(&self) -> &ScalarField {
        &self.steps.last().expect("schedule is nonempty").1.p_star
    }

    pub fn last(&self) -> &JkoStepResult {
        &self.steps.last().expect("schedule is nonempty").1
    }

    pub fn all_certified(&self) -> bool {
        self.steps.iter().all(|(_, r)| r.certified)
    }
}

/// Solve with `s*_k = s* + ln(1 + eᵖ)/k` along the increasing schedule,
/// warm-starting each level from the previous one.
pub fn smallest_pressure_select(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
) -> Result<SmallestSelection> {
    smallest_pressure_select_from(rho_bar, energy, cost, config, None)
}

pub fn smallest_pressure_select_from(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    p0: Option<&ScalarField>,
) -> Result<SmallestSelection> {
    let mut schedule = config.k_schedule.clone();
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("k_schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("k_schedule must be strictly increasing".into()));
    }
    schedule.dedup();
    let mut cfg = config.clone();
    if cfg.step_tol == 0.0 {
        cfg.step_tol = SELECT_STEP_TOL;
    }
    let mut steps: Vec<(u32, JkoStepResult)> = Vec::with_capacity(schedule.len());
    let mut warm = p0.cloned();
    for &k in &schedule {
        let ek = energy.regularize_logexp(k)?;
        let r = jko_step_from(rho_bar, &ek, cost, &cfg, warm.as_ref())?;
        warm = Some(r.p_star.clone());
        steps.push((k, r));
    }
    let mut max_decrease = f64::NEG_INFINITY;
    for w in steps.windows(2) {
        for (a, b) in w[0].1.p_star.values().iter().zip(w[1].1.p_star.values()) {
            max_decrease = max_decrease.max(a - b);
        }
    }
    if steps.len() == 1 {
        max_decrease = 0.0;
    }
    let monotone = max_decrease <= MONOTONICITY_TOL && steps.iter().all(|(_, r)| r.certified);
    Ok(SmallestSelection { steps, max_decrease, monotone })
}

/// Steps solved from `starts` random perturbations of the default initial
/// pressure. Trials are independent and returned in trial order.
pub fn maximizer_pool(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    starts: usize,
    seed: u64,
) -> Result<Vec<JkoStepResult>> {
    let base = initial_pressure(rho_bar, energy, config.init_window);
    let amp = 1.0 + (base.max() - base.min());
    (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let values = base.values().iter().map(|v| v + amp * rng.gen_range(-1.0..=1.0)).collect();
            let p0 = ScalarField::from_raw(*rho_bar.grid(), values, FieldRole::Pressure);
            jko_step_from(rho_bar, energy, cost, config, Some(&p0))
        })
        .collect()
}

/// Pointwise max of the certified pool members: a heuristic stand-in for
/// the largest maximizer.
pub fn largest_pressure_select(
    rho_bar: &ScalarField,
    energy: &EnergyDensity,
    cost: &Cost,
    config: &SolverConfig,
    starts: usize,
    seed: u64,
) -> Result<ScalarField> {
    let pool = maximizer_pool(rho_bar, energy, cost, config, starts, seed)?;
    let mut best: Option<Vec<f64>> = None;
    for r in pool.iter().filter(|r| r.certified) {
        match &mut best {
            None => best = Some(r.p_star.values().to_vec()),
            Some(b) => b.iter_mut().zip(r.p_star.values()).for_each(|(a, &v)| *a = a.max(v)),
        }
    }
    best.map(|v| ScalarField::from_raw(*rho_bar.grid(), v, FieldRole::Pressure))
        .ok_or_else(|| Error::Unavailable("no certified maximizer in the pool".into()))
}
