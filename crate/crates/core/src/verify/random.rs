use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grids::{FieldRole, Grid, ScalarField};

/// Passes of the `[1/4, 1/2, 1/4]` filter applied along each axis.
const SMOOTHING_PASSES: usize = 4;

fn smooth(grid: &Grid, v: &mut [f64]) {
    for axis in 0..grid.dim() {
        let n = grid.n(axis);
        if n < 2 {
            continue;
        }
        for _ in 0..SMOOTHING_PASSES {
            let w = v.to_vec();
            for (idx, out) in v.iter_mut().enumerate() {
                let m = grid.multi_index(idx);
                let at = |i: usize| {
                    let mut mm = m;
                    mm[axis] = i;
                    w[grid.index(mm[0], mm[1])]
                };
                let i = m[axis];
                *out = 0.25 * at(i.saturating_sub(1)) + 0.5 * w[idx] + 0.25 * at((i + 1).min(n - 1));
            }
        }
    }
}

/// Smoothed uniform noise rescaled to `mass`.
pub fn random_density(grid: &Grid, mass: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    smooth(grid, &mut v);
    let f = ScalarField::from_raw(*grid, v, FieldRole::Density);
    let m = f.mass();
    f.scaled(mass / m)
}

/// A pair of nearby data of the same order of mass. Even seeds mix in a
/// fraction `w ∈ [0.01, 0.1]` of an independent sample (crossing
/// difference); odd seeds add it (`ρ₀ ≤ ρ₁`).
pub fn random_pair(grid: &Grid, mass: f64, seed: u64) -> (ScalarField, ScalarField) {
    let r0 = random_density(grid, mass, seed.wrapping_mul(3));
    let other = random_density(grid, mass, seed.wrapping_mul(3).wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(2));
    let w = rng.gen_range(0.01..0.1);
    let ordered = seed % 2 == 1;
    let v = r0
        .values()
        .iter()
        .zip(other.values())
        .map(|(a, b)| if ordered { a + w * b } else { (1.0 - w) * a + w * b })
        .collect();
    (r0, ScalarField::from_raw(*grid, v, FieldRole::Density))
}

/// An ordered pair `ρ₀ ≤ ρ₁` with a localized bump added to `ρ₀`.
pub fn random_ordered_pair(grid: &Grid, mass: f64, seed: u64) -> (ScalarField, ScalarField) {
    let r0 = random_density(grid, mass, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let centre: Vec<f64> =
        (0..grid.dim()).map(|a| grid.origin(a) + grid.extent(a) * rng.gen_range(0.2..0.8)).collect();
    let width = 0.1 * grid.diameter();
    let height = rng.gen_range(0.05..0.5) * mass / grid.volume();
    let v = r0
        .values()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let x = grid.node(i);
            let d2: f64 = centre.iter().enumerate().map(|(a, c)| (x[a] - c).powi(2)).sum();
            r + height * (-d2 / (width * width)).exp()
        })
        .collect();
    (r0, ScalarField::from_raw(*grid, v, FieldRole::Density))
}
