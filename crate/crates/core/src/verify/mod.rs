//! Numerical certification of the step's structural properties and
//! convergence benchmarks against closed-form solutions.

mod benchmark;
mod checks;
mod diagnostics;
mod random;
mod report;

pub use benchmark::{
    benchmark_heat, benchmark_pme_barenblatt, loglog_slope, Barenblatt, BarenblattSetup, ConvergenceReport,
    ConvergenceRow, CosineSeries, CONVERGENCE_COLUMNS, SERIES_TAIL,
};
pub use checks::{
    check_comparison, check_contraction, check_maximum_principle, check_sandwich, comparison_tolerance,
    comparison_trials, contraction_allowance, contraction_trials, one_sided_identity_defect, ComparisonReport,
    ContractionAllowance, ContractionReport, ContractionTrial, MaxPrincipleBranch, MaxPrincipleReport,
    SandwichReport, DELTA_TREND, MAX_PRINCIPLE_FLOOR, STATIONARY_TOL,
};
pub use diagnostics::{
    equicontinuity_table, flux_diagnostic, flux_field, flux_series, sample_uniqueness_condition, FluxReport,
    ModulusRow, UniquenessSample,
};
pub use random::{random_density, random_ordered_pair, random_pair};
pub use report::{
    comparison_csv, comparison_summary, contraction_csv, contraction_summary, delta_trend_csv, flux_csv,
    max_principle_csv, modulus_csv, sandwich_csv,
};
