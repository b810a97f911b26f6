use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::grids::{FieldRole, Grid, ScalarField};
use crate::jko::mass_limit;

/// Mass-`λ` minimizer of the energy: `ρ_λ ∈ ∂ₚs*(α_λ, ·)`.
#[derive(Clone, Debug)]
pub struct Barrier {
    pub lambda: f64,
    pub alpha: f64,
    pub rho: ScalarField,
    /// Essential bounds of `ρ_λ`.
    pub a: f64,
    pub b: f64,
}

fn mass_at(energy: &EnergyDensity, grid: &Grid, alpha: f64) -> (f64, f64) {
    let hd = grid.cell_volume();
    let (mut lo, mut hi) = (0.0, 0.0);
    for x in 0..grid.len() {
        let iv = energy.subdiff_s_star(alpha, x);
        lo += iv.lo.max(0.0);
        hi += iv.hi;
    }
    (lo * hd, hi * hd)
}

/// Bisection for the smallest `α` whose upper mass `Σ sup ∂ₚs*(α, x) h^d`
/// reaches `λ`. Across a jump of `∂ₚs*` the density is interpolated inside
/// the subdifferential so that the mass is exactly `λ`.
pub fn stationary_barrier(energy: &EnergyDensity, grid: &Grid, lambda: f64) -> Result<Barrier> {
    let limit = mass_limit(energy, grid);
    if !(lambda > 0.0) || !(lambda < limit) {
        return Err(Error::MassCondition { mass: lambda, limit });
    }
    let upper = |a: f64| mass_at(energy, grid, a).1;
    let mut lo = -1.0f64;
    while upper(lo) >= lambda {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::InvalidArgument("no pressure level below the target mass".into()));
        }
    }
    let mut hi = 1.0f64;
    while upper(hi) < lambda {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if upper(mid) >= lambda {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let alpha = hi;
    let (m_lo, m_hi) = mass_at(energy, grid, alpha);
    let theta = if m_hi > m_lo { ((lambda - m_lo) / (m_hi - m_lo)).clamp(0.0, 1.0) } else { 0.0 };
    let values: Vec<f64> = (0..grid.len())
        .map(|x| {
            let iv = energy.subdiff_s_star(alpha, x);
            let l = iv.lo.max(0.0);
            l + theta * (iv.hi - l)
        })
        .collect();
    let rho = ScalarField::from_raw(*grid, values, FieldRole::Density);
    let (a, b) = (rho.min(), rho.max());
    Ok(Barrier { lambda, alpha, rho, a, b })
}
