use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::flow::Snapshot;
use crate::grids::{Grid, Point, ScalarField};

fn norm2(p: Point) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

/// Flux consistency at one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxReport {
    pub step: usize,
    /// `‖m − ρ∇p‖₂` over `{ρ > threshold}`, with
    /// `m = ∇[s*(p, x)] − ∂ₓs*(p, x)` by direct differencing.
    pub residual: f64,
    /// `‖m − ∂ₚs*(p)∇p‖₂` over the same set: direct versus chain rule.
    pub chain_mismatch: f64,
    /// `‖ρ∇p‖₂` over the same set, for scale.
    pub scale: f64,
    /// `max |m|` over `{ρ ≤ threshold}`.
    pub vacuum_max: f64,
}

/// Nodewise `m`, by direct differencing of `s*(p(x), x)`.
pub fn flux_field(p: &ScalarField, energy: &EnergyDensity) -> Result<Vec<Point>> {
    let grid = p.grid();
    let mut star = Vec::with_capacity(grid.len());
    let mut dx = Vec::with_capacity(grid.len());
    for (x, &v) in p.values().iter().enumerate() {
        star.push(energy.s_star(v, x).to_f64());
        dx.push(
            energy
                .dx_s_star(v, x)
                .ok_or_else(|| Error::Unavailable("flux needs the spatial derivative of the conjugate".into()))?,
        );
    }
    let grad = grid.gradient(&star);
    Ok(grad.iter().zip(&dx).map(|(g, d)| [g[0] - d[0], g[1] - d[1]]).collect())
}

pub fn flux_diagnostic(
    step: usize,
    rho: &ScalarField,
    p: &ScalarField,
    energy: &EnergyDensity,
    threshold: f64,
) -> Result<FluxReport> {
    rho.grid().check_same(p.grid())?;
    let grid = rho.grid();
    let m = flux_field(p, energy)?;
    let gp = grid.gradient(p.values());
    let hd = grid.cell_volume();
    let (mut res, mut chain, mut scale, mut vac) = (0.0, 0.0, 0.0, 0.0f64);
    for x in 0..grid.len() {
        let r = rho.values()[x];
        if r > threshold {
            let rg = [r * gp[x][0], r * gp[x][1]];
            let d = energy.dp_s_star(p.values()[x], x);
            res += norm2([m[x][0] - rg[0], m[x][1] - rg[1]]) * hd;
            chain += norm2([m[x][0] - d * gp[x][0], m[x][1] - d * gp[x][1]]) * hd;
            scale += norm2(rg) * hd;
        } else {
            vac = vac.max(norm2(m[x]).sqrt());
        }
    }
    Ok(FluxReport { step, residual: res.sqrt(), chain_mismatch: chain.sqrt(), scale: scale.sqrt(), vacuum_max: vac })
}

/// [`flux_diagnostic`] at every snapshot that carries a pressure.
pub fn flux_series(snapshots: &[Snapshot], energy: &EnergyDensity, threshold: f64) -> Result<Vec<FluxReport>> {
    snapshots
        .iter()
        .filter_map(|s| s.p.as_ref().map(|p| flux_diagnostic(s.step, &s.rho, p, energy, threshold)))
        .collect()
}

/// Empirical constant in
/// `|∂ₓs*(p₁) − ∂ₓs*(p₂)|² ≤ C |∂ₚs*(p₁) − ∂ₚs*(p₂)| |s*(p₁) − s*(p₂)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessSample {
    pub samples: usize,
    /// Triples with a vanishing right-hand side.
    pub skipped: usize,
    pub max_ratio: f64,
}

pub fn sample_uniqueness_condition(
    energy: &EnergyDensity,
    grid: &Grid,
    p_range: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<UniquenessSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut skipped, mut max_ratio) = (0, 0.0f64);
    for _ in 0..samples {
        let x = rng.gen_range(0..grid.len());
        let p1 = rng.gen_range(p_range.0..=p_range.1);
        let p2 = rng.gen_range(p_range.0..=p_range.1);
        let missing = || Error::Unavailable("sampler needs the spatial derivative of the conjugate".into());
        let g1 = energy.dx_s_star(p1, x).ok_or_else(missing)?;
        let g2 = energy.dx_s_star(p2, x).ok_or_else(missing)?;
        let lhs = norm2([g1[0] - g2[0], g1[1] - g2[1]]);
        let rhs = (energy.dp_s_star(p1, x) - energy.dp_s_star(p2, x)).abs()
            * (energy.s_star(p1, x).to_f64() - energy.s_star(p2, x).to_f64()).abs();
        if !(rhs > 1e-300) {
            skipped += 1;
            continue;
        }
        max_ratio = max_ratio.max(lhs / rhs);
    }
    Ok(UniquenessSample { samples, skipped, max_ratio })
}

/// `sup_snapshots ‖ρ(· + s·h e_a) − ρ‖₁` over the overlap, maximized over axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulusRow {
    pub shift: usize,
    pub distance: f64,
    pub modulus: f64,
}

pub fn equicontinuity_table(snapshots: &[Snapshot], shifts: &[usize]) -> Vec<ModulusRow> {
    let Some(first) = snapshots.first() else { return Vec::new() };
    let grid = *first.rho.grid();
    shifts
        .iter()
        .map(|&s| {
            let mut modulus = 0.0f64;
            let mut distance = 0.0f64;
            for a in 0..grid.dim() {
                distance = distance.max(s as f64 * grid.spacing(a));
                for snap in snapshots {
                    let v = snap.rho.values();
                    let mut acc = 0.0;
                    for idx in 0..grid.len() {
                        let mut m = grid.multi_index(idx);
                        if m[a] + s < grid.n(a) {
                            m[a] += s;
                            acc += (v[grid.index(m[0], m[1])] - v[idx]).abs();
                        }
                    }
                    modulus = modulus.max(acc * grid.cell_volume());
                }
            }
            ModulusRow { shift: s, distance, modulus }
        })
        .collect()
}
