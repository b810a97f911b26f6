use super::Point;
use crate::error::{Error, Result};

/// Convex nondecreasing radial profile `k(r)`, piecewise linear through
/// `(r_i, k_i)` with `r_0 = 0`, `k_0 = 0`, extended linearly past the table.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialKernel {
    r: Vec<f64>,
    k: Vec<f64>,
    slopes: Vec<f64>,
}

impl RadialKernel {
    pub fn new(r: Vec<f64>, k: Vec<f64>) -> Result<RadialKernel> {
        if r.len() != k.len() || r.len() < 2 {
            return Err(Error::InvalidArgument("kernel needs at least two (r, k) pairs".into()));
        }
        if r[0] != 0.0 || k[0] != 0.0 {
            return Err(Error::InvalidArgument("kernel must start at (0, 0)".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("kernel radii must increase".into()));
        }
        let slopes: Vec<f64> = (0..r.len() - 1).map(|i| (k[i + 1] - k[i]) / (r[i + 1] - r[i])).collect();
        if slopes[0] < 0.0 {
            return Err(Error::InvalidArgument("kernel must be nondecreasing".into()));
        }
        for (i, w) in slopes.windows(2).enumerate() {
            if w[1] - w[0] < -1e-10 {
                return Err(Error::NonConvexTable { index: i + 1, value: w[1] - w[0] });
            }
        }
        Ok(RadialKernel { r, k, slopes })
    }

    fn segment(&self, r: f64) -> usize {
        match self.r.partition_point(|&ri| ri <= r) {
            0 => 0,
            j => (j - 1).min(self.slopes.len() - 1),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let j = self.segment(r);
        self.k[j] + self.slopes[j] * (r - self.r[j])
    }

    /// Right derivative `k'(r)`.
    pub fn slope(&self, r: f64) -> f64 {
        self.slopes[self.segment(r)]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.r
    }
}

/// Transport cost `c(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Cost {
    /// `|x − y|² / (2τ)`.
    Quadratic { tau: f64 },
    /// `k(|x − y|)` for a convex radial profile.
    TranslationKernel(RadialKernel),
}

impl Cost {
    pub fn quadratic(tau: f64) -> Result<Cost> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be > 0, got {tau}")));
        }
        Ok(Cost::Quadratic { tau })
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Cost::Quadratic { tau } => Some(*tau),
            Cost::TranslationKernel(_) => None,
        }
    }

    pub fn eval(&self, x: Point, y: Point) -> f64 {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        match self {
            Cost::Quadratic { tau } => (d0 * d0 + d1 * d1) / (2.0 * tau),
            Cost::TranslationKernel(k) => k.eval((d0 * d0 + d1 * d1).sqrt()),
        }
    }

    /// `∇ₓ c(x, y)`.
    pub fn grad_x(&self, x: Point, y: Point) -> Point {
        let d = [x[0] - y[0], x[1] - y[1]];
        match self {
            Cost::Quadratic { tau } => [d[0] / tau, d[1] / tau],
            Cost::TranslationKernel(k) => {
                let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    let s = k.slope(r) / r;
                    [s * d[0], s * d[1]]
                }
            }
        }
    }

    /// Upper bound of `|∇ₓ c|` over pairs at distance at most `diam`.
    pub fn max_gradient(&self, diam: f64) -> f64 {
        match self {
            Cost::Quadratic { tau } => diam / tau,
            Cost::TranslationKernel(k) => k.slope(diam),
        }
    }
}
