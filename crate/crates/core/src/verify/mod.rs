//! Convergence studies, the discrete-norm stability monitor and the mass
//! ledger.
//!
//! All reports serialize to JSON; see the README for the key schema.

mod monitor;
mod norms;
mod order;

pub use monitor::{
    contractive_scenario, mass_ledger, stability_check, stability_monitor, LedgerReport, StabilityCheck, StabilityReport,
    ALPHA_TOL,
};
pub use norms::{error_norm, CompartmentNorm, ErrorNorms};
pub use order::{
    imex_consistency_study, imex_study_scenario, spatial_order_study, temporal_order_study,
    temporal_order_study_analytic, temporal_study_scenario, Axis, CosineModeStudy, LevelError, OrderReport,
    ReferenceKind, DEFAULT_IMEX_DTS, DEFAULT_SPATIAL_DIVISIONS, DEFAULT_TEMPORAL_DTS,
};
