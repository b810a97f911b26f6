//! Pressures where `∂ₚs*` jumps.
//!
//! A node sitting on a kink with its density strictly inside the jump is
//! held there: the dual is not differentiable in that coordinate, and the
//! density, not the pressure, absorbs the optimality condition.

use crate::energy::EnergyDensity;

pub(crate) struct Kinks {
    per_node: Vec<Vec<f64>>,
}

impl Kinks {
    /// `None` when no node has a kink.
    pub(crate) fn new(energy: &EnergyDensity, n: usize) -> Option<Kinks> {
        let per_node: Vec<Vec<f64>> = (0..n).map(|x| energy.pressure_kinks(x)).collect();
        per_node.iter().any(|k| !k.is_empty()).then_some(Kinks { per_node })
    }

    /// Nodes held on a kink.
    pub(crate) fn pinned(&self, energy: &EnergyDensity, p: &[f64], rho: &[f64]) -> Vec<bool> {
        p.iter()
            .enumerate()
            .map(|(x, &v)| {
                if self.per_node[x].is_empty() {
                    return false;
                }
                let iv = energy.subdiff_s_star(v, x);
                let tol = 1e-12 * iv.hi.abs().max(1.0);
                iv.hi > iv.lo && rho[x] > iv.lo + tol && rho[x] < iv.hi - tol
            })
            .collect()
    }

    /// Stop each coordinate of the move `p → trial` at the first kink it crosses.
    pub(crate) fn clip(&self, p: &[f64], trial: &mut [f64]) {
        for (x, (t, &v)) in trial.iter_mut().zip(p).enumerate() {
            let ks = &self.per_node[x];
            if *t > v {
                if let Some(&q) = ks.iter().find(|&&q| q > v && q < *t) {
                    *t = q;
                }
            } else if *t < v {
                if let Some(&q) = ks.iter().rev().find(|&&q| q < v && q > *t) {
                    *t = q;
                }
            }
        }
    }
}

/// Replace the rows and columns of pinned nodes by the identity.
pub(crate) fn eliminate(trip: Vec<(usize, usize, f64)>, pinned: &[bool]) -> Vec<(usize, usize, f64)> {
    let mut out: Vec<_> = trip.into_iter().filter(|&(i, j, _)| !pinned[i] && !pinned[j]).collect();
    out.extend(pinned.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (i, i, 1.0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Table;

    fn energy() -> EnergyDensity {
        EnergyDensity::tabulated(Table::new(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.125, 0.5, 1.5]).unwrap())
    }

    #[test]
    fn clip_stops_at_first_kink() {
        let e = energy();
        let k = Kinks::new(&e, 3).unwrap();
        let p = [0.0, 0.9, 0.75];
        let mut t = [1.2, 0.1, 0.8];
        k.clip(&p, &mut t);
        assert_eq!(t, [0.25, 0.75, 0.8]);
    }

    #[test]
    fn pinned_needs_density_inside_jump() {
        let e = energy();
        let k = Kinks::new(&e, 3).unwrap();
        let pins = k.pinned(&e, &[0.75, 0.75, 0.5], &[0.7, 1.0, 0.7]);
        assert_eq!(pins, [true, false, false]);
        assert!(Kinks::new(&EnergyDensity::Entropy, 3).is_none());
    }

    #[test]
    fn eliminate_decouples_pinned_rows() {
        let trip = vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)];
        let out = eliminate(trip, &[false, true]);
        assert_eq!(out, vec![(0, 0, 2.0), (1, 1, 1.0)]);
    }
}
