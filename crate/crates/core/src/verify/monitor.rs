use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{cfl_limit, combine_bounds, estimate_alpha, run, Kinetics, StableDtBound, TimeSeries};
use crate::scenario::{preset, Scenario};

/// Largest `alpha` still treated as non-positive when deciding whether the
/// norm is expected to be monotone.
pub const ALPHA_TOL: f64 = 1e-8;

/// Relative tolerance on step-to-step norm growth.
const MONOTONE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dt: f64,
    pub alpha: f64,
    /// `dt * alpha`.
    pub dt_alpha_margin: f64,
    pub cfl_limit: Option<f64>,
    /// `dt / cfl_limit`.
    pub dt_cfl_ratio: Option<f64>,
    /// Discrete L2 norm of the live compartments after every step,
    /// starting with the initial state.
    pub norms: Vec<f64>,
    pub monotone: bool,
    /// Step at which the norm first grew beyond tolerance.
    pub first_violation: Option<usize>,
    /// Whether the step-size conditions for a non-increasing norm hold.
    pub expected_monotone: bool,
}

impl StabilityReport {
    pub fn expected_but_violated(&self) -> bool {
        self.expected_monotone && !self.monotone
    }
}

pub fn stability_monitor(series: &TimeSeries<f64>, alpha: f64, dt: f64, cfl_limit: Option<f64>) -> StabilityReport {
    let norms: Vec<f64> = series.diagnostics.iter().map(|d| d.l2_norm).collect();
    let tol = MONOTONE_RTOL * norms.first().copied().unwrap_or(0.0);
    let first_violation = norms
        .windows(2)
        .position(|w| !w[1].is_finite() || w[1] > w[0] + tol)
        .map(|k| series.diagnostics[k + 1].step);
    let expected_monotone =
        alpha <= ALPHA_TOL && dt * alpha.abs() <= 1.0 && cfl_limit.is_none_or(|c| dt <= c);
    StabilityReport {
        dt,
        alpha,
        dt_alpha_margin: dt * alpha,
        cfl_limit,
        dt_cfl_ratio: cfl_limit.map(|c| dt / c),
        norms,
        monotone: first_violation.is_none(),
        first_violation,
        expected_monotone,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub times: Vec<f64>,
    pub live_totals: Vec<f64>,
    /// Sum of both death ledgers.
    pub cumulative_deaths: Vec<f64>,
    pub augmented_totals: Vec<f64>,
    /// Largest `|total(t) - total(0)| / total(0)` of the nine-slot total.
    pub max_relative_drift: f64,
    pub live_max_relative_drift: f64,
    pub live_non_increasing: bool,
}

pub fn mass_ledger(series: &TimeSeries<f64>) -> Result<LedgerReport> {
    if series.snapshots.is_empty() {
        return Err(Error::Degenerate("time series has no snapshots".into()));
    }
    let mut times = Vec::new();
    let mut live_totals = Vec::new();
    let mut cumulative_deaths = Vec::new();
    let mut augmented_totals = Vec::new();
    for s in &series.snapshots {
        let live = s.field.live_total();
        let aug = s.field.augmented_total();
        times.push(s.time);
        live_totals.push(live);
        augmented_totals.push(aug);
        cumulative_deaths.push(aug - live);
    }
    let drift = |v: &[f64]| {
        let base = v[0].abs();
        let scale = if base > 0.0 { base } else { 1.0 };
        v.iter().map(|x| (x - v[0]).abs() / scale).fold(0.0, f64::max)
    };
    let tol = 1e-12 * live_totals[0].abs();
    let live_non_increasing = live_totals.windows(2).all(|w| w[1] <= w[0] + tol);
    Ok(LedgerReport {
        max_relative_drift: drift(&augmented_totals),
        live_max_relative_drift: drift(&live_totals),
        live_non_increasing,
        times,
        live_totals,
        cumulative_deaths,
        augmented_totals,
    })
}

/// Outcome of a monitored run at a chosen fraction of the stability bound.
#[derive(Debug)]
pub struct StabilityCheck {
    pub bound: StableDtBound,
    pub report: StabilityReport,
    /// Set when the run hit a non-finite state.
    pub abort: Option<Error>,
}

/// Runs `scenario` with `dt = dt_factor * bound`, rounded down so that it
/// divides the horizon, where `bound` combines the `1/alpha` and
/// explicit-diffusion limits at the initial state.
pub fn stability_check(scenario: &Scenario, dt_factor: f64) -> Result<StabilityCheck> {
    if !(dt_factor.is_finite() && dt_factor > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt-factor".into(),
            reason: format!("must be positive, got {dt_factor}"),
        });
    }
    let params = match scenario.kinetics() {
        Kinetics::Covid(p) => p,
        Kinetics::Sir(_) => {
            return Err(Error::Unsupported("stability checks need the seven-compartment model".into()));
        }
    };
    let initial = scenario.initial_field()?;
    let grid = initial.grid().clone();
    let mode = scenario.diffusion_mode();
    let alpha = estimate_alpha(&params, &grid, mode, std::slice::from_ref(&initial))?.alpha;
    let cfl = scenario
        .integrator
        .real_axis_extent()
        .and_then(|extent| cfl_limit(&params, &grid, &initial, mode, extent));
    let bound = combine_bounds(alpha, cfl, scenario.horizon);
    let dt = scenario.horizon / (scenario.horizon / (dt_factor * bound.bound)).ceil();

    let mut cfg = scenario.run_config()?;
    cfg.control.dt = dt;
    cfg.control.strict = false;
    cfg.control.guard_alpha = false;
    cfg.control.guard_cfl = false;
    cfg.snapshot_every = usize::MAX;
    let outcome = run(&initial, &cfg)?;
    let report = stability_monitor(&outcome.series, alpha, dt, cfl);
    Ok(StabilityCheck {
        bound,
        report,
        abort: outcome.abort,
    })
}

/// All transfer and source rates off, only the two death rates and
/// diffusion active, with `N` frozen so the operator is linear.
pub fn contractive_scenario() -> Result<Scenario> {
    preset("contractive-1d")
}
