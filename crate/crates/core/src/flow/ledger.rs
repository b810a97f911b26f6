use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grids::io::fmt_f64;

pub const LEDGER_COLUMNS: [&str; 11] = [
    "step",
    "time",
    "energy",
    "step_cost",
    "cum_dissipation",
    "gap",
    "mass",
    "rho_min",
    "rho_max",
    "p_min",
    "p_max",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    /// Transport cost of the step into this state.
    pub step_cost: f64,
    /// `Σ_{k ≤ n} (τ/2) Σ ρ^k |∇p^k|² h^d`.
    pub cum_dissipation: f64,
    pub gap: f64,
    pub mass: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `NaN` on the initial row.
    pub p_min: f64,
    pub p_max: f64,
}

/// Per-step audit trail; row 0 is the initial datum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowLedger {
    pub rows: Vec<LedgerRow>,
}

impl FlowLedger {
    /// `max_n [E(ρⁿ) + D_n − E(ρ⁰) − 2 Σ_{k≤n} gap_k]`; nonpositive when the
    /// discrete energy-dissipation inequality holds at every step.
    pub fn edi_violation(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let mut gaps = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for r in &self.rows {
            gaps += r.gap;
            worst = worst.max(r.energy + r.cum_dissipation - first.energy - 2.0 * gaps);
        }
        worst
    }

    /// Largest relative deviation of the mass from the initial row.
    pub fn mass_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        self.rows.iter().map(|r| (r.mass - first.mass).abs() / first.mass.abs()).fold(0.0, f64::max)
    }

    pub fn total_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = LEDGER_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let vals = [
                r.time,
                r.energy,
                r.step_cost,
                r.cum_dissipation,
                r.gap,
                r.mass,
                r.rho_min,
                r.rho_max,
                r.p_min,
                r.p_max,
            ];
            let _ = write!(s, "{}", r.step);
            for v in vals {
                let _ = write!(s, ",{}", fmt_f64(v));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<FlowLedger> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, hdr) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty ledger".into() })?;
        if hdr.trim() != LEDGER_COLUMNS.join(",") {
            return Err(Error::Parse { line: 1, msg: format!("unexpected ledger header `{hdr}`") });
        }
        let mut rows = Vec::new();
        for (i, l) in lines {
            let line = i + 1;
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != LEDGER_COLUMNS.len() {
                return Err(Error::Parse { line, msg: format!("expected {} columns", LEDGER_COLUMNS.len()) });
            }
            let step = cols[0].parse().map_err(|_| Error::Parse { line, msg: format!("bad step `{}`", cols[0]) })?;
            let mut v = [0.0; 10];
            for (k, c) in cols[1..].iter().enumerate() {
                v[k] = c.parse().map_err(|_| Error::Parse { line, msg: format!("bad number `{c}`") })?;
            }
            rows.push(LedgerRow {
                step,
                time: v[0],
                energy: v[1],
                step_cost: v[2],
                cum_dissipation: v[3],
                gap: v[4],
                mass: v[5],
                rho_min: v[6],
                rho_max: v[7],
                p_min: v[8],
                p_max: v[9],
            });
        }
        Ok(FlowLedger { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
