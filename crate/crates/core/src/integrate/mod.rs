//! Time discretization: classical RK4 (and a forward-Euler comparator) over
//! the semi-discrete system, a 1D IMEX-Euler variant, step-size guards and
//! the fixed-step simulation loop.

mod imex;
mod rk;
mod simulate;
mod stability;
mod system;
mod tableau;

pub use imex::{imex_euler_step, imex_euler_step_with, solve_tridiagonal};
pub use rk::{euler_step, euler_step_with, explicit_rk_step, rk4_step, rk4_step_with, RkWorkspace};
pub use simulate::{
    run, simulate, step_count, GuardReport, Integrator, Kinetics, RunConfig, RunOutcome, Snapshot, StepControl,
    StepDiagnostics, TimeSeries,
};
pub use stability::{
    cfl_limit, combine_bounds, estimate_alpha, estimate_alpha_system, max_stable_dt, AlphaEstimate, StableDtBound, ALPHA_TINY,
    EULER_REAL_AXIS_EXTENT, RK4_REAL_AXIS_EXTENT,
};
pub use system::{full_rhs, full_rhs_with, EpidemicSystem, OdeSystem, SirSystem};
pub use tableau::ButcherTableau;
