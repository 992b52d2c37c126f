//! Finite-difference / Runge-Kutta solver for a seven-compartment epidemic
//! reaction-diffusion model on 1D and 2D structured grids.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! scenario I/O and the verification studies work in `f64`.
//!
//! ```
//! use covid_rd::{preset, simulate, Compartment};
//!
//! let scenario = preset("nanjing-ode").unwrap();
//! let series = simulate(&scenario).unwrap();
//! let d = series.regional_series(Compartment::D, 0);
//! assert!(d.iter().all(|v| v.is_finite()));
//! ```

// `!(x > 0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod integrate;
pub mod model;
pub mod scalar;
pub mod scenario;
pub mod verify;

pub use error::{Diagnostic, Error, Result};
pub use grid::{
    diffusion_term, discrete_integral, laplacian, laplacian_into, region_integral, CompartmentField, DiffusionForm,
    DiffusionMode, Grid,
};
pub use integrate::{
    cfl_limit, estimate_alpha, imex_euler_step, max_stable_dt, rk4_step, run, simulate, Integrator, Kinetics,
    RunConfig, StepControl, TimeSeries,
};
pub use model::{reaction_rhs, sir_rhs, total_population, Compartment, ModelParams, NodeState, SirParams, SirState};
pub use scalar::Scalar;
pub use scenario::{load_observed, load_scenario, preset, preset_names, write_timeseries, Scenario};

pub type Field = CompartmentField<f64>;
pub type Field32 = CompartmentField<f32>;
pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type State = NodeState<f64>;
pub type State32 = NodeState<f32>;
pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
