//! `section.key = value` run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use darcy_jko::energy::{EnergyDensity, Table, WeightField};
use darcy_jko::flow::{FlowConfig, Selector};
use darcy_jko::grids::io::read_field;
use darcy_jko::grids::{Cost, FieldRole, Grid, RadialKernel};
use darcy_jko::jko::{DualMode, Preconditioner, SolverConfig};

use crate::error::CliError;

const KEYS: &[&str] = &[
    "domain.dim",
    "domain.n",
    "domain.extent",
    "domain.origin",
    "energy.kind",
    "energy.m",
    "energy.weight_field",
    "energy.table",
    "cost.kind",
    "cost.tau",
    "cost.kernel",
    "solver.max_iters",
    "solver.gap_tol",
    "solver.step_tol",
    "solver.sigma",
    "solver.preconditioner",
    "solver.concavify_every",
    "solver.k_schedule",
    "solver.delta",
    "solver.mode",
    "solver.init_window",
    "flow.T",
    "flow.snapshot_every",
    "flow.M_bound",
    "flow.allow_uncertified",
    "flow.selector",
    "io.out_dir",
    "io.seed",
    "verify.trials",
    "verify.mass",
    "verify.select",
    "verify.levels",
    "verify.t0",
    "verify.t1",
    "verify.C",
    "verify.half_width",
    "verify.t_final",
    "verify.amplitude",
    "barrier.lambda",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub n: Vec<usize>,
    pub extent: Vec<f64>,
    pub origin: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyKind {
    Power,
    Entropy,
    Quadratic,
    Tabulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergySpec {
    pub kind: EnergyKind,
    pub m: f64,
    pub weight_field: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostSpec {
    Quadratic { tau: f64 },
    Kernel { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySpec {
    pub trials: usize,
    pub mass: f64,
    pub select: bool,
    pub levels: Option<Vec<(usize, f64)>>,
    pub t0: f64,
    pub t1: f64,
    pub c: f64,
    pub half_width: f64,
    pub t_final: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub domain: Domain,
    pub energy: EnergySpec,
    pub cost: CostSpec,
    pub solver: SolverConfig,
    pub t_final: f64,
    pub snapshot_every: usize,
    pub m_bound: Option<f64>,
    pub allow_uncertified: bool,
    pub selector: Selector,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub verify: VerifySpec,
    pub barrier_lambda: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: Domain { dim: 1, n: vec![128], extent: vec![1.0], origin: vec![0.0] },
            energy: EnergySpec { kind: EnergyKind::Power, m: 2.0, weight_field: None, table: None },
            cost: CostSpec::Quadratic { tau: 1e-3 },
            solver: SolverConfig::default(),
            t_final: 0.0,
            snapshot_every: 1,
            m_bound: None,
            allow_uncertified: false,
            selector: Selector::Ascent,
            out_dir: PathBuf::from("out"),
            seed: 0,
            verify: VerifySpec {
                trials: 20,
                mass: 1.0,
                select: false,
                levels: None,
                t0: 0.1,
                t1: 0.5,
                c: 0.0847,
                half_width: 1.0,
                t_final: 0.05,
                amplitude: 0.5,
            },
            barrier_lambda: None,
        }
    }
}

fn bad(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config { line, msg: msg.into() }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| bad(line, format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|s| num(line, key, s.trim())).collect()
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn positive(line: usize, key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(line, format!("`{key}` must be > 0, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// Parse `text`; relative file paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        let mut seen = BTreeSet::new();
        let mut tau = None;
        let mut kernel = None;
        let mut cost_kind = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            let (key, value) = t.split_once('=').ok_or_else(|| bad(line, format!("expected `section.key = value`, got `{t}`")))?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(line, format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(bad(line, format!("duplicate key `{key}`")));
            }
            let path = |v: &str| -> Result<PathBuf, CliError> {
                let p = base.join(v);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(bad(line, format!("`{key}`: file `{}` does not exist", p.display())))
                }
            };
            match key {
                "domain.dim" => c.domain.dim = num(line, key, v)?,
                "domain.n" => c.domain.n = list(line, key, v)?,
                "domain.extent" => c.domain.extent = list(line, key, v)?,
                "domain.origin" => c.domain.origin = list(line, key, v)?,
                "energy.kind" => {
                    c.energy.kind = match v {
                        "power" => EnergyKind::Power,
                        "entropy" => EnergyKind::Entropy,
                        "quadratic" => EnergyKind::Quadratic,
                        "tabulated" => EnergyKind::Tabulated,
                        _ => return Err(bad(line, format!("unknown energy kind `{v}`"))),
                    }
                }
                "energy.m" => {
                    let m: f64 = num(line, key, v)?;
                    if !(m > 1.0 && m.is_finite()) {
                        return Err(bad(line, format!("`energy.m` must be > 1, got {m}")));
                    }
                    c.energy.m = m;
                }
                "energy.weight_field" => c.energy.weight_field = Some(path(v)?),
                "energy.table" => c.energy.table = Some(path(v)?),
                "cost.kind" => {
                    cost_kind = match v {
                        "quadratic" | "kernel" => Some((line, v.to_string())),
                        _ => return Err(bad(line, format!("unknown cost kind `{v}`"))),
                    }
                }
                "cost.tau" => tau = Some(positive(line, key, num(line, key, v)?)?),
                "cost.kernel" => kernel = Some(path(v)?),
                "solver.max_iters" => c.solver.max_iters = num(line, key, v)?,
                "solver.gap_tol" => c.solver.gap_tol = positive(line, key, num(line, key, v)?)?,
                "solver.step_tol" => c.solver.step_tol = num(line, key, v)?,
                "solver.sigma" => c.solver.sigma = positive(line, key, num(line, key, v)?)?,
                "solver.preconditioner" => {
                    c.solver.preconditioner = match v {
                        "newton" => Preconditioner::Newton,
                        "diagonal" => Preconditioner::Diagonal,
                        "laplacian" => Preconditioner::InverseLaplacian,
                        _ => return Err(bad(line, format!("unknown preconditioner `{v}`"))),
                    }
                }
                "solver.concavify_every" => c.solver.concavify_every = num(line, key, v)?,
                "solver.k_schedule" => c.solver.k_schedule = list(line, key, v)?,
                "solver.delta" => c.solver.delta = num(line, key, v)?,
                "solver.mode" => {
                    c.solver.mode = match v {
                        "auto" => DualMode::Auto,
                        "interpolated" => DualMode::Interpolated,
                        "nodal" => DualMode::Nodal,
                        _ => return Err(bad(line, format!("unknown dual mode `{v}`"))),
                    }
                }
                "solver.init_window" => c.solver.init_window = positive(line, key, num(line, key, v)?)?,
                "flow.T" => {
                    let t: f64 = num(line, key, v)?;
                    if !(t >= 0.0 && t.is_finite()) {
                        return Err(bad(line, format!("`flow.T` must be >= 0, got {t}")));
                    }
                    c.t_final = t;
                }
                "flow.snapshot_every" => c.snapshot_every = num(line, key, v)?,
                "flow.M_bound" => c.m_bound = Some(num(line, key, v)?),
                "flow.allow_uncertified" => c.allow_uncertified = flag(line, key, v)?,
                "flow.selector" => {
                    c.selector = match v {
                        "ascent" => Selector::Ascent,
                        "smallest" => Selector::Smallest,
                        _ => return Err(bad(line, format!("unknown selector `{v}`"))),
                    }
                }
                "io.out_dir" => c.out_dir = base.join(v),
                "io.seed" => c.seed = num(line, key, v)?,
                "verify.trials" => c.verify.trials = num(line, key, v)?,
                "verify.mass" => c.verify.mass = positive(line, key, num(line, key, v)?)?,
                "verify.select" => c.verify.select = flag(line, key, v)?,
                "verify.levels" => {
                    let mut levels = Vec::new();
                    for item in v.split(',') {
                        let (n, t) = item
                            .trim()
                            .split_once(':')
                            .ok_or_else(|| bad(line, format!("`{key}`: expected `n:tau` pairs, got `{item}`")))?;
                        levels.push((num(line, key, n.trim())?, positive(line, key, num(line, key, t.trim())?)?));
                    }
                    c.verify.levels = Some(levels);
                }
                "verify.t0" => c.verify.t0 = positive(line, key, num(line, key, v)?)?,
                "verify.t1" => c.verify.t1 = positive(line, key, num(line, key, v)?)?,
                "verify.C" => c.verify.c = positive(line, key, num(line, key, v)?)?,
                "verify.half_width" => c.verify.half_width = positive(line, key, num(line, key, v)?)?,
                "verify.t_final" => c.verify.t_final = positive(line, key, num(line, key, v)?)?,
                "verify.amplitude" => c.verify.amplitude = num(line, key, v)?,
                "barrier.lambda" => c.barrier_lambda = Some(positive(line, key, num(line, key, v)?)?),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        c.cost = match cost_kind.as_ref().map(|(l, k)| (*l, k.as_str())) {
            Some((line, "kernel")) => CostSpec::Kernel {
                path: kernel.ok_or_else(|| bad(line, "cost.kind = kernel needs `cost.kernel`"))?,
            },
            _ => CostSpec::Quadratic { tau: tau.unwrap_or(1e-3) },
        };
        c.check_domain()?;
        if c.energy.kind == EnergyKind::Tabulated && c.energy.table.is_none() {
            return Err(bad(0, "energy.kind = tabulated needs `energy.table`"));
        }
        c.solver.validate()?;
        Ok(c)
    }

    fn check_domain(&self) -> Result<(), CliError> {
        let d = &self.domain;
        if d.dim != 1 && d.dim != 2 {
            return Err(bad(0, format!("`domain.dim` must be 1 or 2, got {}", d.dim)));
        }
        if d.n.len() != d.dim || d.extent.len() != d.dim || d.origin.len() != d.dim {
            return Err(bad(0, "`domain.n`, `domain.extent` and `domain.origin` need one entry per dimension"));
        }
        if d.n.iter().any(|&n| n < 2) || d.extent.iter().any(|&e| !(e > 0.0)) {
            return Err(bad(0, "domain needs n >= 2 and extent > 0 on every axis"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let d = &self.domain;
        Ok(Grid::new(d.dim, &d.n, &d.origin, &d.extent)?)
    }

    /// The energy, with a weight field read on `grid` when one is configured.
    pub fn energy(&self, grid: &Grid) -> Result<EnergyDensity, CliError> {
        let base = match self.energy.kind {
            EnergyKind::Power => EnergyDensity::power_law(self.energy.m)?,
            EnergyKind::Entropy => EnergyDensity::Entropy,
            EnergyKind::Quadratic => EnergyDensity::Quadratic,
            EnergyKind::Tabulated => {
                let path = self.energy.table.as_ref().expect("checked at parse time");
                EnergyDensity::tabulated(Table::read_csv(path).map_err(|e| CliError::input(path, e))?)
            }
        };
        match &self.energy.weight_field {
            None => Ok(base),
            Some(path) => {
                let f = read_field(path, FieldRole::Pressure).map_err(|e| CliError::input(path, e))?;
                grid.check_same(f.grid())?;
                Ok(EnergyDensity::weighted(base, WeightField::from_field(&f)?))
            }
        }
    }

    pub fn cost(&self) -> Result<Cost, CliError> {
        match &self.cost {
            CostSpec::Quadratic { tau } => Ok(Cost::quadratic(*tau)?),
            CostSpec::Kernel { path } => {
                let table = Table::read_csv(path).map_err(|e| CliError::input(path, e))?;
                Ok(Cost::TranslationKernel(RadialKernel::new(table.z().to_vec(), table.s_values().to_vec())?))
            }
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self.cost {
            CostSpec::Quadratic { tau } => Some(tau),
            CostSpec::Kernel { .. } => None,
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig, CliError> {
        let tau = self.tau().ok_or_else(|| CliError::Usage("flow needs a quadratic cost".into()))?;
        Ok(FlowConfig {
            tau,
            t_final: self.t_final,
            snapshot_every: self.snapshot_every,
            m_bound: self.m_bound,
            allow_uncertified: self.allow_uncertified,
            selector: self.selector,
            solver: self.solver.clone(),
        })
    }
}
