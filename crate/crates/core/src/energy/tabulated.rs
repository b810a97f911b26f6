//! Piecewise-linear energies given by samples `(z_i, s_i)`.

use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::extended::{Extended, Interval};

/// Tolerance on discrete second differences when checking convexity.
pub const CONVEXITY_TOL: f64 = 1e-10;

/// Check that the samples form a convex function; returns the segment slopes.
pub(crate) fn convex_slopes(z: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    if z.len() != s.len() || z.is_empty() {
        return Err(Error::InvalidArgument("table needs matching, nonempty z and s columns".into()));
    }
    if let Some(i) = z.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!("z-grid not strictly increasing at index {}", i + 1)));
    }
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite table value at index {i}")));
    }
    let slopes: Vec<f64> = (0..z.len() - 1).map(|i| (s[i + 1] - s[i]) / (z[i + 1] - z[i])).collect();
    for i in 1..slopes.len() {
        let second = slopes[i] - slopes[i - 1];
        if second < -CONVEXITY_TOL {
            return Err(Error::NonConvexTable { index: i, value: second });
        }
    }
    Ok(slopes)
}

/// Convex piecewise-linear `s` on `[z_0, z_K]`, `+∞` elsewhere.
#[derive(Debug)]
pub struct Table {
    z: Vec<f64>,
    s: Vec<f64>,
    slopes: Vec<f64>,
    conjugate: OnceLock<Vec<f64>>,
}

impl Clone for Table {
    fn clone(&self) -> Self {
        Table { z: self.z.clone(), s: self.s.clone(), slopes: self.slopes.clone(), conjugate: OnceLock::new() }
    }
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.z == other.z && self.s == other.s
    }
}

impl Table {
    /// Energy table: requires `z_0 = 0` and `s_0 = 0`.
    pub fn new(z: Vec<f64>, s: Vec<f64>) -> Result<Table> {
        let slopes = convex_slopes(&z, &s)?;
        if z[0] != 0.0 || s[0] != 0.0 {
            return Err(Error::InvalidArgument("energy table must start at (0, 0)".into()));
        }
        if z.len() < 2 {
            return Err(Error::InvalidArgument("energy table needs at least two samples".into()));
        }
        Ok(Table { z, s, slopes, conjugate: OnceLock::new() })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn eval(&self, z: f64) -> Extended {
        if z < 0.0 || z > self.z_max() {
            return Extended::Infinite;
        }
        let j = self.z.partition_point(|&zi| zi <= z).saturating_sub(1).min(self.slopes.len() - 1);
        Extended::Finite(self.s[j] + self.slopes[j] * (z - self.z[j]))
    }

    pub fn subdiff(&self, z: f64) -> Option<Interval> {
        if z < 0.0 || z > self.z_max() {
            return None;
        }
        let k = self.slopes.len();
        match self.z.binary_search_by(|zi| zi.total_cmp(&z)) {
            Ok(0) => Some(Interval::new(f64::NEG_INFINITY, self.slopes[0])),
            Ok(i) if i == k => Some(Interval::new(self.slopes[k - 1], f64::INFINITY)),
            Ok(i) => Some(Interval::new(self.slopes[i - 1], self.slopes[i])),
            Err(i) => Some(Interval::point(self.slopes[i - 1])),
        }
    }

    /// Conjugate values `s*(slope_j)` at the breakpoints, built on first use.
    fn conjugate_table(&self) -> &[f64] {
        self.conjugate.get_or_init(|| {
            self.slopes.iter().enumerate().map(|(j, &q)| q * self.z[j] - self.s[j]).collect()
        })
    }

    /// Index of the sample attaining `max_i p z_i − s_i` (lowest on ties).
    fn argmax(&self, p: f64) -> usize {
        // Sample i is optimal for slopes[i-1] <= p <= slopes[i].
        self.slopes.partition_point(|&q| q < p)
    }

    pub fn conjugate(&self, p: f64) -> f64 {
        let i = self.argmax(p);
        p * self.z[i] - self.s[i]
    }

    pub fn conjugate_subdiff(&self, p: f64) -> Interval {
        let i = self.argmax(p);
        if i < self.slopes.len() && self.slopes[i] == p {
            Interval::new(self.z[i], self.z[i + 1])
        } else {
            Interval::point(self.z[i])
        }
    }

    /// Breakpoints of `s*` and its values there.
    pub fn conjugate_breakpoints(&self) -> (&[f64], &[f64]) {
        (&self.slopes, self.conjugate_table())
    }

    /// Parse `z,s` rows. Blank lines, `#` comments and a non-numeric header row are skipped.
    pub fn parse_csv(text: &str) -> Result<Table> {
        let mut z = Vec::new();
        let mut s = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut cols = t.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse { line: i + 1, msg: "expected two columns `z,s`".into() });
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(za), Ok(sb)) => {
                    z.push(za);
                    s.push(sb);
                }
                _ if z.is_empty() && a.parse::<f64>().is_err() => continue,
                _ => return Err(Error::Parse { line: i + 1, msg: format!("bad row `{t}`") }),
            }
        }
        Table::new(z, s)
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        Table::parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// One table for every node, or a single shared table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedEnergy {
    tables: Vec<Table>,
}

impl TabulatedEnergy {
    pub fn homogeneous(table: Table) -> Self {
        TabulatedEnergy { tables: vec![table] }
    }

    pub fn per_node(tables: Vec<Table>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument("no tables".into()));
        }
        Ok(TabulatedEnergy { tables })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.tables.len() == 1
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn at(&self, x: usize) -> &Table {
        if self.tables.len() == 1 {
            &self.tables[0]
        } else {
            &self.tables[x]
        }
    }
}
