//! Extended reals for energy values and closed intervals for subdifferentials.

use std::fmt;
use std::ops::Add;

/// A value in ℝ ∪ {+∞}. The infinite case is a flag, never a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub const ZERO: Extended = Extended::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Finite value or `f64::INFINITY`, for reporting only.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn scale(self, factor: f64) -> Extended {
        debug_assert!(factor >= 0.0);
        match self {
            Extended::Finite(v) => Extended::Finite(v * factor),
            Extended::Infinite => Extended::Infinite,
        }
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(f(v)),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

impl Add for Extended {
    type Output = Extended;
    fn add(self, rhs: Extended) -> Extended {
        match (self, rhs) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }
}

impl Add<f64> for Extended {
    type Output = Extended;
    fn add(self, rhs: f64) -> Extended {
        self.map(|v| v + rhs)
    }
}

impl std::iter::Sum for Extended {
    fn sum<I: Iterator<Item = Extended>>(iter: I) -> Extended {
        iter.fold(Extended::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "+inf"),
        }
    }
}

/// Closed interval `[lo, hi]`. Unbounded ends use IEEE infinities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    /// Midpoint, or the finite end when the other is unbounded.
    pub fn midpoint(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (false, true) => self.hi,
            (true, false) => self.lo,
            (false, false) => 0.0,
        }
    }

    /// Point of the interval closest to `v`.
    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn shift(&self, by: f64) -> Interval {
        Interval { lo: self.lo + by, hi: self.hi + by }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval { lo: self.lo + rhs.lo, hi: self.hi + rhs.hi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_absorbs_sums() {
        let total: Extended = [Extended::Finite(1.0), Extended::Infinite, Extended::Finite(2.0)]
            .into_iter()
            .sum();
        assert_eq!(total, Extended::Infinite);
        assert_eq!(Extended::Finite(1.5) + Extended::Finite(2.0), Extended::Finite(3.5));
    }

    #[test]
    fn interval_midpoint_with_unbounded_end() {
        assert_eq!(Interval::new(f64::NEG_INFINITY, 0.5).midpoint(), 0.5);
        assert_eq!(Interval::new(1.0, 3.0).midpoint(), 2.0);
        assert_eq!(Interval::new(1.0, 3.0).project(5.0), 3.0);
    }
}
