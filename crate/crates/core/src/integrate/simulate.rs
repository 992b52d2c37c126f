//! Fixed-step time loop with snapshots and per-step diagnostics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{region_integral, CompartmentField, DiffusionMode, Grid};
use crate::model::{Compartment, ModelParams, SirParams};
use crate::scalar::Scalar;

use super::rk::{explicit_rk_step, RkWorkspace};
use super::stability::{
    cfl_limit, combine_bounds, estimate_alpha_on_grid, EULER_REAL_AXIS_EXTENT, RK4_REAL_AXIS_EXTENT,
};
use super::system::{EpidemicSystem, OdeSystem, SirSystem};
use super::tableau::ButcherTableau;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
    Imex,
}

impl Integrator {
    /// Real-axis stability extent of the explicit diffusion treatment;
    /// `None` when diffusion is implicit.
    pub fn real_axis_extent(self) -> Option<f64> {
        match self {
            Integrator::Rk4 => Some(RK4_REAL_AXIS_EXTENT),
            Integrator::Euler => Some(EULER_REAL_AXIS_EXTENT),
            Integrator::Imex => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::Euler => "euler",
            Integrator::Imex => "imex",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "euler" => Ok(Integrator::Euler),
            "imex" => Ok(Integrator::Imex),
            other => Err(Error::InvalidParameter {
                name: "integrator".into(),
                reason: format!("unknown integrator `{other}` (expected rk4, euler or imex)"),
            }),
        }
    }
}

/// Which reaction kinetics drive the run.
#[derive(Debug, Clone, PartialEq)]
pub enum Kinetics<T> {
    Covid(ModelParams<T>),
    Sir(SirParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepControl<T> {
    pub dt: T,
    /// Check `dt <= 1/alpha` before the run.
    pub guard_alpha: bool,
    /// Check the explicit-diffusion limit before the run.
    pub guard_cfl: bool,
    /// Turn guard violations into errors instead of warnings.
    pub strict: bool,
    /// Values below `-negativity_tolerance * initial max` raise a warning.
    pub negativity_tolerance: T,
    /// Clamp negative entries to zero, recording the clamped mass.
    pub clamp: bool,
}

impl<T: Scalar> StepControl<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            guard_alpha: true,
            guard_cfl: true,
            strict: false,
            negativity_tolerance: T::lit(1e-9),
            clamp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub kinetics: Kinetics<T>,
    pub mode: DiffusionMode<T>,
    pub integrator: Integrator,
    pub control: StepControl<T>,
    pub t0: T,
    pub horizon: T,
    /// Snapshot every this many steps (the final step is always recorded).
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub step: usize,
    pub time: T,
    pub field: CompartmentField<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub l2_norm: f64,
    pub live_total: f64,
    pub augmented_total: f64,
    pub min_value: f64,
    pub clamped_mass: f64,
}

/// Guard evaluation performed before the first step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    pub dt: f64,
    pub alpha: Option<f64>,
    pub alpha_limit: Option<f64>,
    pub cfl_limit: Option<f64>,
    pub bound: f64,
    /// `dt * alpha`.
    pub dt_alpha_margin: Option<f64>,
    /// `dt / cfl_limit`.
    pub dt_cfl_ratio: Option<f64>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TimeSeries<T> {
    pub grid: Arc<Grid<T>>,
    pub dt: T,
    pub snapshots: Vec<Snapshot<T>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub guard: GuardReport,
    pub negativity_warnings: usize,
    pub clamped_mass: f64,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn final_field(&self) -> Option<&CompartmentField<T>> {
        self.snapshots.last().map(|s| &s.field)
    }

    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Integral of one compartment over a region at every snapshot.
    pub fn regional_series(&self, compartment: Compartment, label: u16) -> Vec<T> {
        self.snapshots
            .iter()
            .map(|s| region_integral(s.field.compartment(compartment), &self.grid, label).expect("snapshot on series grid"))
            .collect()
    }
}

/// A finished or aborted run. `abort` carries the numerical failure, if
/// any; `series` holds everything recorded up to that point.
#[derive(Debug)]
pub struct RunOutcome<T> {
    pub series: TimeSeries<T>,
    pub abort: Option<Error>,
}

impl<T: Scalar> RunOutcome<T> {
    pub fn into_result(self) -> Result<TimeSeries<T>> {
        match self.abort {
            None => Ok(self.series),
            Some(e) => Err(e),
        }
    }
}

enum System<T> {
    Epidemic(EpidemicSystem<T>),
    Sir(SirSystem<T>),
}

impl<T: Scalar> OdeSystem<T> for System<T> {
    fn dim(&self) -> usize {
        match self {
            System::Epidemic(s) => s.dim(),
            System::Sir(s) => s.dim(),
        }
    }

    fn eval(&self, t: T, y: &[T], dy: &mut [T]) {
        match self {
            System::Epidemic(s) => s.eval(t, y, dy),
            System::Sir(s) => s.eval(t, y, dy),
        }
    }
}

/// Number of fixed steps covering `horizon`; rejects horizons that are not
/// an integer multiple of `dt`.
pub fn step_count<T: Scalar>(horizon: T, dt: T) -> Result<usize> {
    let (h, d) = (horizon.as_f64(), dt.as_f64());
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt".into(),
            reason: format!("must be positive and finite, got {d}"),
        });
    }
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon".into(),
            reason: format!("must be nonnegative and finite, got {h}"),
        });
    }
    let n = (h / d).round();
    if (n * d - h).abs() > 1e-9 * h.max(d) {
        return Err(Error::InvalidParameter {
            name: "horizon".into(),
            reason: format!("{h} is not an integer multiple of dt = {d}"),
        });
    }
    Ok(n as usize)
}

fn diagnostics<T: Scalar>(step: usize, time: T, field: &CompartmentField<T>, clamped: f64) -> StepDiagnostics {
    StepDiagnostics {
        step,
        time: time.as_f64(),
        l2_norm: field.l2_norm().as_f64(),
        live_total: field.live_total().as_f64(),
        augmented_total: field.augmented_total().as_f64(),
        min_value: field.min_value().as_f64(),
        clamped_mass: clamped,
    }
}

fn evaluate_guards<T: Scalar>(
    system: &System<T>,
    initial: &CompartmentField<T>,
    cfg: &RunConfig<T>,
) -> Result<GuardReport> {
    let dt = cfg.control.dt.as_f64();
    let grid = initial.grid();
    let alpha = if cfg.control.guard_alpha {
        Some(estimate_alpha_on_grid(system, grid, &[initial.as_slice()])?.alpha)
    } else {
        None
    };
    let cfl = match (&cfg.kinetics, cfg.control.guard_cfl, cfg.integrator.real_axis_extent()) {
        (Kinetics::Covid(p), true, Some(extent)) => cfl_limit(p, grid, initial, cfg.mode, extent),
        _ => None,
    };
    let cap = cfg.horizon.as_f64().max(dt);
    let combined = combine_bounds(alpha.unwrap_or(f64::NEG_INFINITY), cfl, cap);
    let mut violations = Vec::new();
    if let Some(limit) = combined.alpha_limit {
        if dt > limit {
            violations.push(format!("dt = {dt} exceeds 1/alpha = {limit}"));
        }
    }
    if let Some(limit) = cfl {
        if dt > limit {
            violations.push(format!("dt = {dt} exceeds the explicit-diffusion limit {limit}"));
        }
    }
    Ok(GuardReport {
        dt,
        alpha,
        alpha_limit: combined.alpha_limit,
        cfl_limit: cfl,
        bound: combined.bound,
        dt_alpha_margin: alpha.map(|a| dt * a),
        dt_cfl_ratio: cfl.map(|c| dt / c),
        violations,
    })
}

/// Runs the configured integrator from `initial` over `[t0, t0 + horizon]`.
///
/// Precondition failures (bad configuration, strict guard violations)
/// return `Err`. A numerical failure during the loop is reported in
/// [`RunOutcome::abort`] together with everything recorded before it.
pub fn run<T: Scalar>(initial: &CompartmentField<T>, cfg: &RunConfig<T>) -> Result<RunOutcome<T>> {
    let dt = cfg.control.dt;
    let n_steps = step_count(cfg.horizon, dt)?;
    if cfg.snapshot_every == 0 {
        return Err(Error::InvalidParameter {
            name: "snapshot_interval".into(),
            reason: "must be a positive multiple of dt".into(),
        });
    }
    initial.check_finite()?;
    let grid = initial.grid().clone();
    let system = match &cfg.kinetics {
        Kinetics::Covid(p) => System::Epidemic(EpidemicSystem::new(*p, grid.clone(), cfg.mode)),
        Kinetics::Sir(p) => System::Sir(SirSystem {
            params: *p,
            grid: grid.clone(),
        }),
    };
    if cfg.integrator == Integrator::Imex && grid.dim() != 1 {
        return Err(Error::Unsupported("IMEX stepping is implemented for 1D grids only".into()));
    }

    let guard = if cfg.control.guard_alpha || cfg.control.guard_cfl {
        evaluate_guards(&system, initial, cfg)?
    } else {
        GuardReport {
            dt: dt.as_f64(),
            bound: cfg.horizon.as_f64().max(dt.as_f64()),
            ..Default::default()
        }
    };
    if let Some(first) = guard.violations.first() {
        if cfg.control.strict {
            return Err(Error::GuardViolation {
                dt: guard.dt,
                bound: guard.bound,
                limit: first.clone(),
            });
        }
        for v in &guard.violations {
            log::warn!("step guard: {v}");
        }
    }

    let tableau = match cfg.integrator {
        Integrator::Rk4 => ButcherTableau::classical_rk4(),
        Integrator::Euler | Integrator::Imex => ButcherTableau::forward_euler(),
    };
    let mut ws = RkWorkspace::new(tableau.stages(), system.dim());
    let live_len = grid.len() * Compartment::LIVE_COUNT;
    let initial_max = initial.as_slice()[..live_len]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let neg_threshold = -cfg.control.negativity_tolerance.as_f64() * initial_max;
    let weights = grid.weights();

    let mut field = initial.clone();
    let mut series = TimeSeries {
        grid: grid.clone(),
        dt,
        snapshots: vec![Snapshot {
            step: 0,
            time: cfg.t0,
            field: field.clone(),
        }],
        diagnostics: vec![diagnostics(0, cfg.t0, &field, 0.0)],
        guard,
        negativity_warnings: 0,
        clamped_mass: 0.0,
    };

    for step in 1..=n_steps {
        let t = cfg.t0 + T::lit((step - 1) as f64) * dt;
        let t_next = cfg.t0 + T::lit(step as f64) * dt;
        match (&system, cfg.integrator) {
            (System::Epidemic(sys), Integrator::Imex) => sys.imex_step(field.as_mut_slice(), dt)?,
            _ => explicit_rk_step(&tableau, &system, t, field.as_mut_slice(), dt, &mut ws),
        }

        if let Some((compartment, node)) = field.first_non_finite() {
            series.diagnostics.push(diagnostics(step, t_next, &field, 0.0));
            log::error!("non-finite {compartment} at node {node}, step {step}");
            return Ok(RunOutcome {
                series,
                abort: Some(Error::NumericalAbort {
                    step,
                    time: t_next.as_f64(),
                    compartment,
                    node,
                }),
            });
        }

        let mut clamped = 0.0;
        let min = field.min_value().as_f64();
        if min < neg_threshold {
            if series.negativity_warnings == 0 {
                log::warn!("negative density {min:e} at step {step} (t = {})", t_next.as_f64());
            }
            series.negativity_warnings += 1;
        }
        if cfg.control.clamp && min < 0.0 {
            let n = grid.len();
            for (k, v) in field.as_mut_slice().iter_mut().enumerate() {
                if *v < T::zero() {
                    clamped += (weights[k % n] * -*v).as_f64();
                    *v = T::zero();
                }
            }
            series.clamped_mass += clamped;
        }

        series.diagnostics.push(diagnostics(step, t_next, &field, clamped));
        if step % cfg.snapshot_every == 0 || step == n_steps {
            series.snapshots.push(Snapshot {
                step,
                time: t_next,
                field: field.clone(),
            });
        }
    }
    if series.negativity_warnings > 1 {
        log::warn!("{} steps produced negative densities", series.negativity_warnings);
    }
    Ok(RunOutcome { series, abort: None })
}

/// Runs a validated scenario to completion; numerical aborts become errors.
pub fn simulate(scenario: &crate::scenario::Scenario) -> Result<TimeSeries<f64>> {
    let initial = scenario.initial_field()?;
    let cfg = scenario.run_config()?;
    run(&initial, &cfg)?.into_result()
}
