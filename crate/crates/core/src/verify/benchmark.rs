use std::fmt::Write as _;
use std::time::Instant;

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig};
use crate::grids::io::fmt_f64;
use crate::grids::{FieldRole, Grid, ScalarField};
use crate::jko::SolverConfig;

/// Cosine series terms are dropped once the remaining tail is below this.
pub const SERIES_TAIL: f64 = 1e-12;

/// Self-similar solution of `ρ_t = (ρ^m)_xx` on the line:
/// `t^{−α} (C − k x² t^{−2α})₊^{1/(m−1)}` with `α = 1/(m+1)` and
/// `k = (m−1)/(2m(m+1))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, c: f64) -> Result<Barenblatt> {
        if !(m > 1.0) || !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("Barenblatt needs m > 1 and C > 0, got m={m}, C={c}")));
        }
        Ok(Barenblatt { m, c })
    }

    fn alpha(&self) -> f64 {
        1.0 / (self.m + 1.0)
    }

    fn k(&self) -> f64 {
        (self.m - 1.0) / (2.0 * self.m * (self.m + 1.0))
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let a = self.alpha();
        let base = self.c - self.k() * x * x * t.powf(-2.0 * a);
        if base <= 0.0 {
            0.0
        } else {
            t.powf(-a) * base.powf(1.0 / (self.m - 1.0))
        }
    }

    /// Edge of the support at time `t`.
    pub fn radius(&self, t: f64) -> f64 {
        (self.c / self.k()).sqrt() * t.powf(self.alpha())
    }

    /// `∫ ρ dx`, constant in time: `√(C/k) C^γ ∫_{−π/2}^{π/2} cos^{2γ+1}θ dθ`
    /// with `γ = 1/(m−1)`, by the midpoint rule.
    pub fn mass(&self) -> f64 {
        let g = 1.0 / (self.m - 1.0);
        let n = 200_000;
        let d = std::f64::consts::PI / n as f64;
        let integral: f64 =
            (0..n).map(|i| (-std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * d).cos().powf(2.0 * g + 1.0)).sum::<f64>() * d;
        (self.c / self.k()).sqrt() * self.c.powf(g) * integral
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> ScalarField {
        let v = (0..grid.len()).map(|i| self.eval(grid.node(i)[0], t)).collect();
        ScalarField::from_raw(*grid, v, FieldRole::Density)
    }
}

/// Neumann eigen-expansion on `[0, L]`: `c₀ + Σ a_k cos(kπx/L) e^{−(kπ/L)² t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries {
    pub length: f64,
    pub constant: f64,
    /// `(k, a_k)` with `k ≥ 1`.
    pub terms: Vec<(usize, f64)>,
}

impl CosineSeries {
    /// Terms in increasing `k`, stopping once the remaining `Σ |a_j| e^{−λ_j t}`
    /// is below [`SERIES_TAIL`].
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|&(k, _)| k);
        let decay: Vec<f64> = terms
            .iter()
            .map(|&(k, a)| {
                let w = k as f64 * std::f64::consts::PI / self.length;
                a.abs() * (-w * w * t).exp()
            })
            .collect();
        let mut tail: f64 = decay.iter().sum();
        let mut acc = self.constant;
        for (j, &(k, a)) in terms.iter().enumerate() {
            if tail < SERIES_TAIL {
                break;
            }
            let w = k as f64 * std::f64::consts::PI / self.length;
            acc += a * (w * x).cos() * (-w * w * t).exp();
            tail -= decay[j];
        }
        acc
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> ScalarField {
        let v = (0..grid.len()).map(|i| self.eval(grid.node(i)[0], t)).collect();
        ScalarField::from_raw(*grid, v, FieldRole::Density)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub tau: f64,
    pub h: f64,
    pub steps: usize,
    /// `‖ρ − ρ_ref‖₁ / ‖ρ_ref‖₁` at the final time.
    pub error: f64,
    /// Relative difference between the numerical and reference masses.
    pub mass_error: f64,
    pub max_gap: f64,
    pub edi_violation: f64,
    pub certified: bool,
    /// Wall time; kept out of the CSV so reports are reproducible.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log τ`.
    pub rate_tau: f64,
    pub rate_h: f64,
}

/// Least-squares slope of `ys` against `xs`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        f64::NAN
    }
}

pub const CONVERGENCE_COLUMNS: &str = "n,tau,h,steps,error,mass_error,max_gap,edi_violation,certified";

impl ConvergenceReport {
    fn new(name: &str, rows: Vec<ConvergenceRow>) -> ConvergenceReport {
        let taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        ConvergenceReport {
            name: name.into(),
            rate_tau: loglog_slope(&taus, &errs),
            rate_h: loglog_slope(&hs, &errs),
            rows,
        }
    }

    /// Each error at most `(1 + noise)` times its predecessor's.
    pub fn decreasing(&self, noise: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].error <= w[0].error * (1.0 + noise))
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.certified)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CONVERGENCE_COLUMNS}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.tau),
                fmt_f64(r.h),
                r.steps,
                fmt_f64(r.error),
                fmt_f64(r.mass_error),
                fmt_f64(r.max_gap),
                fmt_f64(r.edi_violation),
                r.certified
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("[{}] {} levels\n", self.name, self.rows.len());
        for r in &self.rows {
            let _ = writeln!(s, "  n={:<5} tau={:.3e} error={:.4e} mass_err={:.1e}", r.n, r.tau, r.error, r.mass_error);
        }
        let _ = writeln!(s, "  rate_tau={:.3} rate_h={:.3}", self.rate_tau, self.rate_h);
        s
    }
}

fn run_level(
    rho0: &ScalarField,
    energy: &EnergyDensity,
    tau: f64,
    span: f64,
    solver: &SolverConfig,
    reference: impl Fn(f64) -> ScalarField,
    exact_mass: f64,
) -> Result<(ConvergenceRow, ScalarField)> {
    let start = Instant::now();
    let cfg = FlowConfig { tau, t_final: span, snapshot_every: 0, solver: solver.clone(), ..FlowConfig::default() };
    let out = run_flow(rho0, energy, &cfg)?;
    let grid = rho0.grid();
    let steps = out.ledger.rows.len() - 1;
    let rho = out.final_density().clone();
    let exact = reference(steps as f64 * tau);
    let norm = exact.l1_distance(&exact.scaled(0.0));
    let row = ConvergenceRow {
        n: grid.n(0),
        tau,
        h: grid.spacing(0),
        steps,
        error: rho.l1_distance(&exact) / norm,
        mass_error: (rho.mass() - exact_mass).abs() / exact_mass,
        max_gap: out.ledger.rows.iter().map(|r| r.gap).fold(0.0, f64::max),
        edi_violation: out.ledger.edi_violation(),
        certified: out.completed(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((row, rho))
}

/// Porous-medium flow on `[−L, L]` from Barenblatt data at `t0` to `t1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarenblattSetup {
    pub profile: Barenblatt,
    pub t0: f64,
    pub t1: f64,
    pub half_width: f64,
}

/// The flow for `s(z) = z^m/(m−1)` on each `(n, τ)` level, compared with the
/// exact profile at the final time. The initial datum is the sampled profile
/// rescaled to the exact mass.
pub fn benchmark_pme_barenblatt(
    setup: &BarenblattSetup,
    levels: &[(usize, f64)],
    solver: &SolverConfig,
) -> Result<ConvergenceReport> {
    let b = setup.profile;
    if !(setup.t0 > 0.0) || !(setup.t1 > setup.t0) {
        return Err(Error::InvalidArgument(format!("need 0 < t0 < t1, got {} and {}", setup.t0, setup.t1)));
    }
    let energy = EnergyDensity::power_law(b.m)?;
    let mass = b.mass();
    let mut rows = Vec::with_capacity(levels.len());
    for &(n, tau) in levels {
        let grid = Grid::new(1, &[n], &[-setup.half_width], &[2.0 * setup.half_width])?;
        let steps = FlowConfig { tau, t_final: setup.t1 - setup.t0, ..FlowConfig::default() }.steps();
        let t_end = setup.t0 + steps as f64 * tau;
        if b.radius(t_end) >= grid.node_hull(0).1 {
            return Err(Error::SupportTouchesBoundary { time: t_end });
        }
        let sampled = b.sample(&grid, setup.t0);
        let rho0 = sampled.scaled(mass / sampled.mass());
        let (row, rho) =
            run_level(&rho0, &energy, tau, setup.t1 - setup.t0, solver, |t| b.sample(&grid, setup.t0 + t), mass)?;
        if rho.values()[0] > 0.0 || rho.values()[n - 1] > 0.0 {
            return Err(Error::SupportTouchesBoundary { time: t_end });
        }
        rows.push(row);
    }
    Ok(ConvergenceReport::new(&format!("barenblatt m={}", b.m), rows))
}

/// Heat flow (entropy energy) on `[0, L]` from the series at `t = 0`.
pub fn benchmark_heat(
    series: &CosineSeries,
    t_final: f64,
    levels: &[(usize, f64)],
    solver: &SolverConfig,
) -> Result<ConvergenceReport> {
    if !(series.constant > 0.0) {
        return Err(Error::InvalidArgument("heat reference needs a positive mean".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &(n, tau) in levels {
        let grid = Grid::line(n, series.length)?;
        let rho0 = series.sample(&grid, 0.0);
        if rho0.min() <= 0.0 {
            return Err(Error::InvalidArgument("heat initial datum must be positive".into()));
        }
        let mass = rho0.mass();
        let (row, _) =
            run_level(&rho0, &EnergyDensity::Entropy, tau, t_final, solver, |t| series.sample(&grid, t), mass)?;
        rows.push(row);
    }
    Ok(ConvergenceReport::new("heat", rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barenblatt_solves_the_porous_medium_equation() {
        let b = Barenblatt::new(2.0, 0.0847).unwrap();
        let (t, h, dt) = (0.3, 1e-3, 1e-5);
        let u = |x: f64, t: f64| b.eval(x, t).powf(b.m);
        for &x in &[0.0f64, 0.1, -0.25, 0.4] {
            assert!(x.abs() < 0.8 * b.radius(t));
            let ut = (b.eval(x, t + dt) - b.eval(x, t - dt)) / (2.0 * dt);
            let lap = (u(x + h, t) - 2.0 * u(x, t) + u(x - h, t)) / (h * h);
            assert!((ut - lap).abs() < 1e-5 * ut.abs().max(1.0), "x={x}: {ut} vs {lap}");
        }
    }

    #[test]
    fn barenblatt_mass_is_constant() {
        let b = Barenblatt::new(2.0, 0.0847).unwrap();
        let closed = 4.0 / 3.0 * 0.0847f64.powf(1.5) * 12f64.sqrt();
        assert!((b.mass() - closed).abs() < 1e-12 * closed);
        let b3 = Barenblatt::new(3.0, 0.2).unwrap();
        for &t in &[0.1, 0.5] {
            let n = 400_000;
            let r = b3.radius(t);
            let d = 2.0 * r / n as f64;
            let q: f64 = (0..n).map(|i| b3.eval(-r + (i as f64 + 0.5) * d, t)).sum::<f64>() * d;
            assert!((q - b3.mass()).abs() < 1e-6 * q);
        }
    }

    #[test]
    fn cosine_series_satisfies_heat_equation() {
        let s = CosineSeries { length: 1.0, constant: 1.0, terms: vec![(1, 0.5), (3, 0.1)] };
        let (x, t, h, dt) = (0.37, 0.01, 1e-3, 1e-6);
        let ut = (s.eval(x, t + dt) - s.eval(x, t - dt)) / (2.0 * dt);
        let lap = (s.eval(x + h, t) - 2.0 * s.eval(x, t) + s.eval(x - h, t)) / (h * h);
        assert!((ut - lap).abs() < 1e-4 * ut.abs());
        // Neumann: the x-derivative vanishes at both ends.
        assert!((s.eval(1e-7, t) - s.eval(0.0, t)).abs() < 1e-12);
        // The tail rule drops terms that have decayed away.
        assert_eq!(s.eval(0.2, 10.0), 1.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 0.5, 0.25];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((loglog_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn support_reaching_boundary_is_rejected() {
        let setup = BarenblattSetup { profile: Barenblatt::new(2.0, 0.0847).unwrap(), t0: 0.1, t1: 0.5, half_width: 0.6 };
        let err = benchmark_pme_barenblatt(&setup, &[(32, 0.1)], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SupportTouchesBoundary { .. }));
    }

    #[test]
    fn coarse_barenblatt_run() {
        let setup = BarenblattSetup { profile: Barenblatt::new(2.0, 0.0847).unwrap(), t0: 0.1, t1: 0.3, half_width: 1.0 };
        let rep = benchmark_pme_barenblatt(&setup, &[(32, 0.02), (64, 0.01)], &SolverConfig::default()).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.all_certified());
        assert!(rep.strictly_decreasing(), "{}", rep.summary());
        assert!(rep.rows.iter().all(|r| r.mass_error < 1e-10));
        assert!(rep.to_csv().starts_with(CONVERGENCE_COLUMNS));
    }
}
