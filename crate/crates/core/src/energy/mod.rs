//! Convex inhomogeneous energy densities `s(z, x)` and their conjugates
//! `s*(p, x) = sup_z pz − s(z, x)`.
//!
//! Points `x` are node indices; spatially varying ingredients (weights,
//! per-node tables) are stored per node. Every density satisfies `s(z, x) =
//! +∞` for `z < 0` and `s(0, x) = 0`.

mod assumptions;
mod conjugate;
mod tabulated;

use std::sync::Arc;

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionProbe, AssumptionReport};
pub use conjugate::legendre_numeric;
pub use tabulated::{TabulatedEnergy, Table, CONVEXITY_TOL};

use crate::error::{Error, Result};
use crate::extended::{Extended, Interval};
use crate::grids::{Point, ScalarField};

/// Strictly positive spatial weight `f(x)` with its nodal gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    values: Vec<f64>,
    gradient: Vec<Point>,
}

impl WeightField {
    pub fn from_field(field: &ScalarField) -> Result<WeightField> {
        if let Some(i) = field.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("weight must be > 0, got {} at node {i}", field.values()[i])));
        }
        Ok(WeightField { values: field.values().to_vec(), gradient: field.grid().gradient(field.values()) })
    }

    /// Weight with an exact gradient supplied by the caller.
    pub fn from_parts(values: Vec<f64>, gradient: Vec<Point>) -> Result<WeightField> {
        if values.len() != gradient.len() {
            return Err(Error::InvalidArgument("weight and gradient lengths differ".into()));
        }
        if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("weight must be > 0 at node {i}")));
        }
        Ok(WeightField { values, gradient })
    }

    pub fn value(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn gradient(&self, x: usize) -> Point {
        self.gradient[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Energy density kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum EnergyDensity {
    /// `z^m / (m − 1)`, `m > 1`.
    PowerLaw { m: f64 },
    /// `z ln z − z`.
    Entropy,
    /// `z² / 2`.
    Quadratic,
    /// `f(x) · base(z, x)`.
    Multiplicative { base: Arc<EnergyDensity>, weight: Arc<WeightField> },
    /// `Σ_i s_i(z, x)`.
    Sum(Vec<EnergyDensity>),
    Tabulated(Arc<TabulatedEnergy>),
    /// `s(z, x) + δ(√(1 + z²) − 1)`.
    DeltaRegularized { base: Arc<EnergyDensity>, delta: f64 },
    /// Conjugate `s*(p, x) + ln(1 + eᵖ)/k`.
    LogExpRegularized { base: Arc<EnergyDensity>, k: u32 },
}

pub(crate) fn softplus(b: f64) -> f64 {
    b.max(0.0) + (-b.abs()).exp().ln_1p()
}

pub(crate) fn logistic(b: f64) -> f64 {
    if b >= 0.0 {
        1.0 / (1.0 + (-b).exp())
    } else {
        let e = b.exp();
        e / (1.0 + e)
    }
}

fn finite_or_inf(v: f64) -> Extended {
    if v.is_finite() {
        Extended::Finite(v)
    } else {
        Extended::Infinite
    }
}

impl EnergyDensity {
    pub fn power_law(m: f64) -> Result<EnergyDensity> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(Error::InvalidArgument(format!("power-law exponent must be > 1, got {m}")));
        }
        Ok(EnergyDensity::PowerLaw { m })
    }

    pub fn weighted(base: EnergyDensity, weight: WeightField) -> EnergyDensity {
        EnergyDensity::Multiplicative { base: Arc::new(base), weight: Arc::new(weight) }
    }

    pub fn tabulated(table: Table) -> EnergyDensity {
        EnergyDensity::Tabulated(Arc::new(TabulatedEnergy::homogeneous(table)))
    }

    /// Adds `δ(√(1+z²) − 1)`, making `∂s(·, x)` strictly increasing.
    pub fn regularize_delta(&self, delta: f64) -> Result<EnergyDensity> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
        }
        Ok(EnergyDensity::DeltaRegularized { base: Arc::new(self.clone()), delta })
    }

    /// Density whose conjugate is `s* + ln(1 + eᵖ)/k`.
    pub fn regularize_logexp(&self, k: u32) -> Result<EnergyDensity> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        Ok(EnergyDensity::LogExpRegularized { base: Arc::new(self.clone()), k })
    }

    /// True when no ingredient depends on `x`.
    pub fn is_homogeneous(&self) -> bool {
        match self {
            EnergyDensity::PowerLaw { .. } | EnergyDensity::Entropy | EnergyDensity::Quadratic => true,
            EnergyDensity::Multiplicative { .. } => false,
            EnergyDensity::Sum(parts) => parts.iter().all(|p| p.is_homogeneous()),
            EnergyDensity::Tabulated(t) => t.is_homogeneous(),
            EnergyDensity::DeltaRegularized { base, .. } | EnergyDensity::LogExpRegularized { base, .. } => {
                base.is_homogeneous()
            }
        }
    }

    /// Number of nodes the density is defined on, if it is inhomogeneous.
    pub fn node_count(&self) -> Option<usize> {
        match self {
            EnergyDensity::Multiplicative { base, weight } => Some(base.node_count().unwrap_or(weight.len())),
            EnergyDensity::Sum(parts) => parts.iter().find_map(|p| p.node_count()),
            EnergyDensity::Tabulated(t) if !t.is_homogeneous() => Some(t.len()),
            EnergyDensity::DeltaRegularized { base, .. } | EnergyDensity::LogExpRegularized { base, .. } => {
                base.node_count()
            }
            _ => None,
        }
    }

    /// `s(z, x)`.
    pub fn s(&self, z: f64, x: usize) -> Extended {
        if z < 0.0 {
            return Extended::Infinite;
        }
        match self {
            EnergyDensity::PowerLaw { m } => Extended::Finite(z.powf(*m) / (m - 1.0)),
            EnergyDensity::Entropy => Extended::Finite(if z == 0.0 { 0.0 } else { z * z.ln() - z }),
            EnergyDensity::Quadratic => Extended::Finite(0.5 * z * z),
            EnergyDensity::Multiplicative { base, weight } => base.s(z, x).scale(weight.value(x)),
            EnergyDensity::Sum(parts) => parts.iter().map(|p| p.s(z, x)).sum(),
            EnergyDensity::Tabulated(t) => t.at(x).eval(z),
            EnergyDensity::DeltaRegularized { base, delta } => {
                base.s(z, x) + delta * ((1.0 + z * z).sqrt() - 1.0)
            }
            EnergyDensity::LogExpRegularized { .. } => {
                if z == 0.0 {
                    return Extended::ZERO;
                }
                let p = self.invert_conjugate_subdiff(z, x);
                match self.s_star(p, x) {
                    Extended::Finite(v) => Extended::Finite(p * z - v),
                    Extended::Infinite => Extended::Infinite,
                }
            }
        }
    }

    /// `∂s(z, x)`; `None` for `z < 0`. Unbounded ends are IEEE infinities
    /// (the entropy gives `[−∞, −∞]` at `z = 0`).
    pub fn subdiff_s(&self, z: f64, x: usize) -> Option<Interval> {
        if z < 0.0 {
            return None;
        }
        match self {
            EnergyDensity::PowerLaw { m } => Some(if z == 0.0 {
                Interval::new(f64::NEG_INFINITY, 0.0)
            } else {
                Interval::point(m * z.powf(m - 1.0) / (m - 1.0))
            }),
            EnergyDensity::Entropy => Some(if z == 0.0 {
                Interval::point(f64::NEG_INFINITY)
            } else {
                Interval::point(z.ln())
            }),
            EnergyDensity::Quadratic => {
                Some(if z == 0.0 { Interval::new(f64::NEG_INFINITY, 0.0) } else { Interval::point(z) })
            }
            EnergyDensity::Multiplicative { base, weight } => {
                let f = weight.value(x);
                base.subdiff_s(z, x).map(|iv| Interval::new(iv.lo * f, iv.hi * f))
            }
            EnergyDensity::Sum(parts) => {
                let mut acc = Interval::point(0.0);
                for p in parts {
                    acc = acc + p.subdiff_s(z, x)?;
                }
                Some(acc)
            }
            EnergyDensity::Tabulated(t) => t.at(x).subdiff(z),
            EnergyDensity::DeltaRegularized { base, delta } => {
                base.subdiff_s(z, x).map(|iv| iv.shift(delta * z / (1.0 + z * z).sqrt()))
            }
            EnergyDensity::LogExpRegularized { .. } => Some(if z == 0.0 {
                Interval::point(f64::NEG_INFINITY)
            } else {
                Interval::point(self.invert_conjugate_subdiff(z, x))
            }),
        }
    }

    /// `s*(p, x)`.
    pub fn s_star(&self, p: f64, x: usize) -> Extended {
        match self {
            EnergyDensity::PowerLaw { m } => {
                if p <= 0.0 {
                    Extended::ZERO
                } else {
                    let z = ((m - 1.0) * p / m).powf(1.0 / (m - 1.0));
                    finite_or_inf(z * p * (m - 1.0) / m)
                }
            }
            EnergyDensity::Entropy => finite_or_inf(p.exp()),
            EnergyDensity::Quadratic => {
                let q = p.max(0.0);
                finite_or_inf(0.5 * q * q)
            }
            EnergyDensity::Multiplicative { base, weight } => {
                let f = weight.value(x);
                base.s_star(p / f, x).scale(f)
            }
            EnergyDensity::Tabulated(t) => finite_or_inf(t.at(x).conjugate(p)),
            EnergyDensity::Sum(_) | EnergyDensity::DeltaRegularized { .. } => {
                let z = self.invert_subdiff(p, x);
                match self.s(z, x) {
                    Extended::Finite(v) => finite_or_inf(p * z - v),
                    Extended::Infinite => Extended::Infinite,
                }
            }
            EnergyDensity::LogExpRegularized { base, k } => base.s_star(p, x) + softplus(p) / *k as f64,
        }
    }

    /// `∂ₚs*(p, x)` as an interval.
    pub fn subdiff_s_star(&self, p: f64, x: usize) -> Interval {
        match self {
            EnergyDensity::Tabulated(t) => t.at(x).conjugate_subdiff(p),
            EnergyDensity::Multiplicative { base, weight } => base.subdiff_s_star(p / weight.value(x), x),
            EnergyDensity::LogExpRegularized { base, k } => {
                base.subdiff_s_star(p, x).shift(logistic(p) / *k as f64)
            }
            _ => Interval::point(self.dp_s_star(p, x)),
        }
    }

    /// Pressures where `∂ₚs*(·, x)` jumps, increasing. Empty when `s*(·, x)`
    /// is differentiable or its kinks are not known in closed form.
    pub fn pressure_kinks(&self, x: usize) -> Vec<f64> {
        match self {
            EnergyDensity::Tabulated(t) => t.at(x).conjugate_breakpoints().0.to_vec(),
            EnergyDensity::Multiplicative { base, weight } => {
                let f = weight.value(x);
                base.pressure_kinks(x)
                    .into_iter()
                    .map(|q| {
                        // Land exactly on the kink seen through `p / f`.
                        let mut c = q * f;
                        for _ in 0..4 {
                            let back = c / f;
                            if back == q {
                                break;
                            }
                            c = if back < q { c.next_up() } else { c.next_down() };
                        }
                        c
                    })
                    .collect()
            }
            EnergyDensity::LogExpRegularized { base, .. } => base.pressure_kinks(x),
            _ => Vec::new(),
        }
    }

    /// `∂ₚs*(p, x)`; the smallest element when set-valued.
    pub fn dp_s_star(&self, p: f64, x: usize) -> f64 {
        match self {
            EnergyDensity::PowerLaw { m } => {
                if p <= 0.0 {
                    0.0
                } else {
                    ((m - 1.0) * p / m).powf(1.0 / (m - 1.0))
                }
            }
            EnergyDensity::Entropy => p.exp(),
            EnergyDensity::Quadratic => p.max(0.0),
            EnergyDensity::Multiplicative { base, weight } => base.dp_s_star(p / weight.value(x), x),
            EnergyDensity::Tabulated(t) => t.at(x).conjugate_subdiff(p).lo,
            EnergyDensity::Sum(_) | EnergyDensity::DeltaRegularized { .. } => self.invert_subdiff(p, x),
            EnergyDensity::LogExpRegularized { base, k } => base.dp_s_star(p, x) + logistic(p) / *k as f64,
        }
    }

    /// `∂²ₚs*(p, x)` where it exists; zero on flat and affine pieces.
    pub fn d2p_s_star(&self, p: f64, x: usize) -> f64 {
        match self {
            EnergyDensity::PowerLaw { m } => {
                if p <= 0.0 {
                    0.0
                } else {
                    let e = 1.0 / (m - 1.0);
                    e * ((m - 1.0) / m).powf(e) * p.powf(e - 1.0)
                }
            }
            EnergyDensity::Entropy => p.exp(),
            EnergyDensity::Quadratic => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            EnergyDensity::Multiplicative { base, weight } => {
                let f = weight.value(x);
                base.d2p_s_star(p / f, x) / f
            }
            EnergyDensity::Tabulated(_) => 0.0,
            EnergyDensity::Sum(_) | EnergyDensity::DeltaRegularized { .. } => {
                // 1 / s''(z) at z = ∂ₚs*(p), by central differences of ∂ₚs*.
                let step = 1e-6 * p.abs().max(1.0);
                let hi = self.dp_s_star(p + step, x);
                let lo = self.dp_s_star(p - step, x);
                ((hi - lo) / (2.0 * step)).max(0.0)
            }
            EnergyDensity::LogExpRegularized { base, k } => {
                let sg = logistic(p);
                base.d2p_s_star(p, x) + sg * (1.0 - sg) / *k as f64
            }
        }
    }

    /// `∇ₓs(z, x)`; `None` when the x-dependence is only tabulated.
    pub fn dx_s(&self, z: f64, x: usize) -> Option<Point> {
        match self {
            EnergyDensity::PowerLaw { .. } | EnergyDensity::Entropy | EnergyDensity::Quadratic => Some([0.0, 0.0]),
            EnergyDensity::Multiplicative { base, weight } => {
                let g = base.s(z, x).finite()?;
                let gx = base.dx_s(z, x)?;
                let f = weight.value(x);
                let df = weight.gradient(x);
                Some([df[0] * g + f * gx[0], df[1] * g + f * gx[1]])
            }
            EnergyDensity::Sum(parts) => {
                let mut acc = [0.0, 0.0];
                for p in parts {
                    let g = p.dx_s(z, x)?;
                    acc[0] += g[0];
                    acc[1] += g[1];
                }
                Some(acc)
            }
            EnergyDensity::Tabulated(t) => t.is_homogeneous().then_some([0.0, 0.0]),
            EnergyDensity::DeltaRegularized { base, .. } => base.dx_s(z, x),
            EnergyDensity::LogExpRegularized { base, .. } => base.is_homogeneous().then_some([0.0, 0.0]),
        }
    }

    /// `∇ₓs*(p, x) = −∇ₓs(∂ₚs*(p, x), x)` by the envelope theorem.
    pub fn dx_s_star(&self, p: f64, x: usize) -> Option<Point> {
        if let EnergyDensity::LogExpRegularized { base, .. } = self {
            return base.dx_s_star(p, x);
        }
        let z = self.dp_s_star(p, x);
        self.dx_s(z, x).map(|g| [-g[0], -g[1]])
    }

    /// The `z ≥ 0` with `p ∈ ∂s(z, x)`, by bisection on the monotone subdifferential.
    fn invert_subdiff(&self, p: f64, x: usize) -> f64 {
        let at0 = self.subdiff_s(0.0, x).expect("z = 0 is in the domain");
        if p <= at0.hi {
            return 0.0;
        }
        let below = |z: f64| self.subdiff_s(z, x).is_some_and(|iv| iv.hi < p);
        let above = |z: f64| self.subdiff_s(z, x).is_none_or(|iv| iv.lo > p);
        let mut lo = 0.0;
        let mut hi = 1.0;
        while below(hi) && hi < 1e300 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if above(mid) {
                hi = mid;
            } else if below(mid) {
                lo = mid;
            } else {
                return mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `p` with `z ∈ ∂ₚs*(p, x)`, for densities with strictly increasing `∂ₚs*`.
    fn invert_conjugate_subdiff(&self, z: f64, x: usize) -> f64 {
        let below = |p: f64| self.subdiff_s_star(p, x).hi < z;
        let above = |p: f64| self.subdiff_s_star(p, x).lo > z;
        let mut lo: f64 = -1.0;
        let mut hi: f64 = 1.0;
        while !below(lo) && lo > -1e300 {
            hi = hi.min(lo);
            lo *= 2.0;
        }
        while !above(hi) && hi < 1e300 {
            lo = lo.max(hi);
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if above(mid) {
                hi = mid;
            } else if below(mid) {
                lo = mid;
            } else {
                return mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Fenchel–Young residual `s(z) + s*(p) − pz`, nonnegative.
    pub fn fenchel_young_gap(&self, z: f64, p: f64, x: usize) -> Extended {
        (self.s(z, x) + self.s_star(p, x)).map(|v| v - p * z)
    }
}
