use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::norms::{error_norm, ErrorNorms};
use crate::error::{Error, Result};
use crate::grid::{CompartmentField, DiffusionForm, DiffusionMode, Grid};
use crate::integrate::{run, Integrator, Kinetics, RunConfig, StepControl};
use crate::model::{ModelParams, NodeState};
use crate::scenario::{preset, Scenario};

pub const DEFAULT_TEMPORAL_DTS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_SPATIAL_DIVISIONS: [usize; 4] = [8, 16, 32, 64];
pub const DEFAULT_IMEX_DTS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Ratio between the coarsest level's step and the fine reference step.
const REFERENCE_REFINEMENT: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Analytic,
    /// Same problem run with RK4 at a much smaller step.
    Richardson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    /// `dt` for temporal studies, `h` for spatial ones.
    pub step: f64,
    pub errors: ErrorNorms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub axis: Axis,
    pub integrator: Integrator,
    pub steps: Vec<f64>,
    /// Levels kept for order estimation, coarsest first.
    pub levels: Vec<LevelError>,
    /// `log(e_k / e_{k+1}) / log(step_k / step_{k+1})` on the aggregated
    /// L2 error, i.e. `log2` of the error ratio for halving steps.
    pub orders_l2: Vec<f64>,
    pub orders_linf: Vec<f64>,
    pub reference_kind: ReferenceKind,
    pub reference: String,
    /// Levels dropped because their error sat at the roundoff floor.
    pub discarded: Vec<String>,
}

impl OrderReport {
    pub fn min_order(&self) -> f64 {
        self.orders_l2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_order(&self) -> f64 {
        self.orders_l2.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn orders_within(&self, lo: f64, hi: f64) -> bool {
        !self.orders_l2.is_empty() && self.orders_l2.iter().all(|p| (lo..=hi).contains(p))
    }

    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:>12}  {:>14}  {:>14}  {:>8}  {:>8}\n",
            "step", "L2 error", "Linf error", "p(L2)", "p(Linf)"
        );
        for (k, lvl) in self.levels.iter().enumerate() {
            let (p2, pi) = if k == 0 {
                ("-".to_string(), "-".to_string())
            } else {
                (format!("{:.3}", self.orders_l2[k - 1]), format!("{:.3}", self.orders_linf[k - 1]))
            };
            out.push_str(&format!(
                "{:>12.6e}  {:>14.6e}  {:>14.6e}  {:>8}  {:>8}\n",
                lvl.step, lvl.errors.l2, lvl.errors.linf, p2, pi
            ));
        }
        for d in &self.discarded {
            out.push_str(&format!("note: {d}\n"));
        }
        out
    }
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "levels".into(),
            reason: format!("need at least 3 levels, got {}", steps.len()),
        });
    }
    for w in steps.windows(2) {
        if !(w[1] > 0.0 && (w[0] / w[1] - 2.0).abs() < 1e-12) {
            return Err(Error::InvalidParameter {
                name: "levels".into(),
                reason: format!("steps must halve at each level, got {} then {}", w[0], w[1]),
            });
        }
    }
    Ok(())
}

fn assemble(
    axis: Axis,
    integrator: Integrator,
    steps: &[f64],
    errors: Vec<ErrorNorms>,
    scale: f64,
    reference_kind: ReferenceKind,
    reference: String,
) -> Result<OrderReport> {
    if errors.iter().all(|e| e.l2 == 0.0 && e.linf == 0.0) {
        return Err(Error::Degenerate("error is exactly zero at every level".into()));
    }
    let floor = 100.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut levels = Vec::new();
    let mut discarded = Vec::new();
    for (&step, e) in steps.iter().zip(errors) {
        if e.linf < floor {
            discarded.push(format!(
                "level step={step:e} discarded: max error {:e} below roundoff floor {floor:e}",
                e.linf
            ));
        } else {
            levels.push(LevelError { step, errors: e });
        }
    }
    if levels.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} level(s) above the roundoff floor",
            levels.len()
        )));
    }
    let order = |a: f64, b: f64, sa: f64, sb: f64| (a / b).ln() / (sa / sb).ln();
    let orders_l2 = levels
        .windows(2)
        .map(|w| order(w[0].errors.l2, w[1].errors.l2, w[0].step, w[1].step))
        .collect();
    let orders_linf = levels
        .windows(2)
        .map(|w| order(w[0].errors.linf, w[1].errors.linf, w[0].step, w[1].step))
        .collect();
    Ok(OrderReport {
        axis,
        integrator,
        steps: steps.to_vec(),
        levels,
        orders_l2,
        orders_linf,
        reference_kind,
        reference,
        discarded,
    })
}

fn unguarded(control: &mut StepControl<f64>) {
    control.guard_alpha = false;
    control.guard_cfl = false;
    control.strict = false;
}

fn final_state(initial: &CompartmentField<f64>, cfg: &RunConfig<f64>) -> Result<CompartmentField<f64>> {
    let mut series = run(initial, cfg)?.into_result()?;
    Ok(series.snapshots.pop().expect("runs record at least one snapshot").field)
}

fn scenario_config(scenario: &Scenario, dt: f64, integrator: Integrator) -> Result<RunConfig<f64>> {
    let mut s = scenario.clone().with_dt(dt)?;
    s.integrator = integrator;
    s.snapshot_interval = None;
    let mut cfg = s.run_config()?;
    cfg.snapshot_every = usize::MAX;
    unguarded(&mut cfg.control);
    Ok(cfg)
}

fn require_no_diffusion(scenario: &Scenario) -> Result<()> {
    if scenario.model == crate::scenario::ModelKind::Covid7 && scenario.params.has_diffusion() {
        return Err(Error::InvalidParameter {
            name: "params".into(),
            reason: "temporal order studies need all diffusivities set to zero".into(),
        });
    }
    Ok(())
}

fn run_levels(
    scenario: &Scenario,
    dts: &[f64],
    integrator: Integrator,
    exact: &CompartmentField<f64>,
) -> Result<Vec<ErrorNorms>> {
    let initial = scenario.initial_field()?;
    dts.iter()
        .map(|&dt| {
            let y = final_state(&initial, &scenario_config(scenario, dt, integrator)?)?;
            error_norm(&y, exact)
        })
        .collect()
}

/// Observed temporal order against a fine-step RK4 reference at
/// `min(dts) / 16`. Diffusion must be off so that the spatial error plays
/// no part.
pub fn temporal_order_study(scenario: &Scenario, dts: &[f64], integrator: Integrator) -> Result<OrderReport> {
    check_steps(dts)?;
    require_no_diffusion(scenario)?;
    let initial = scenario.initial_field()?;
    if initial.max_abs() == 0.0 {
        return Err(Error::Degenerate("initial data is identically zero".into()));
    }
    let dt_ref = dts[dts.len() - 1] / REFERENCE_REFINEMENT;
    let exact = final_state(&initial, &scenario_config(scenario, dt_ref, Integrator::Rk4)?)?;
    let errors = run_levels(scenario, dts, integrator, &exact)?;
    assemble(
        Axis::Temporal,
        integrator,
        dts,
        errors,
        exact.max_abs(),
        ReferenceKind::Richardson,
        format!("rk4 at dt = {dt_ref:e}, horizon {}", scenario.horizon),
    )
}

/// Temporal study against a known solution at the horizon.
pub fn temporal_order_study_analytic(
    scenario: &Scenario,
    dts: &[f64],
    integrator: Integrator,
    exact: &CompartmentField<f64>,
    description: &str,
) -> Result<OrderReport> {
    check_steps(dts)?;
    require_no_diffusion(scenario)?;
    if scenario.initial_field()?.max_abs() == 0.0 {
        return Err(Error::Degenerate("initial data is identically zero".into()));
    }
    let errors = run_levels(scenario, dts, integrator, exact)?;
    assemble(
        Axis::Temporal,
        integrator,
        dts,
        errors,
        exact.max_abs(),
        ReferenceKind::Analytic,
        description.to_string(),
    )
}

/// The ODE-reduction study problem: the `nanjing-ode` preset cut to 20 days.
pub fn temporal_study_scenario() -> Result<Scenario> {
    let mut s = preset("nanjing-ode")?;
    s.horizon = 20.0;
    s.snapshot_interval = None;
    s.validate()?;
    Ok(s)
}

/// Pure diffusion of one Neumann cosine mode with `N` frozen at 1:
/// `u(x, t) = u0 + amplitude * exp(-nu (pi/L)^2 t) cos(pi x / L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineModeStudy {
    pub extent: f64,
    pub nu: f64,
    pub u0: f64,
    pub amplitude: f64,
    pub horizon: f64,
    pub dt: f64,
    /// 1 or 2; in 2D the field is constant along y.
    pub dim: u8,
    pub ny: usize,
    pub form: DiffusionForm,
}

impl Default for CosineModeStudy {
    fn default() -> Self {
        Self {
            extent: 1.0,
            nu: 0.1,
            u0: 1.0,
            amplitude: 0.5,
            horizon: 1.0,
            dt: 1.0 / 1024.0,
            dim: 1,
            ny: 5,
            form: DiffusionForm::Pointwise,
        }
    }
}

impl CosineModeStudy {
    fn grid(&self, divisions: usize) -> Result<Grid<f64>> {
        match self.dim {
            1 => Grid::line(self.extent, divisions + 1),
            2 => Grid::rect(self.extent, divisions + 1, 1.0, self.ny),
            d => Err(Error::InvalidParameter {
                name: "dim".into(),
                reason: format!("must be 1 or 2, got {d}"),
            }),
        }
    }

    fn field(&self, grid: &Arc<Grid<f64>>, t: f64) -> CompartmentField<f64> {
        let k = std::f64::consts::PI / self.extent;
        let decay = (-self.nu * k * k * t).exp();
        let mut f = CompartmentField::zeros(grid.clone());
        for node in 0..grid.len() {
            let x = grid.x(grid.coords(node).0);
            let s = self.u0 + self.amplitude * decay * (k * x).cos();
            f.set_node(node, &NodeState { s, ..NodeState::zero() });
        }
        f
    }

    fn config(&self) -> RunConfig<f64> {
        let params = ModelParams {
            nu_s: self.nu,
            ..ModelParams::default()
        };
        let mut control = StepControl::new(self.dt);
        unguarded(&mut control);
        RunConfig {
            kinetics: Kinetics::Covid(params),
            mode: DiffusionMode {
                form: self.form,
                frozen_n: Some(1.0),
            },
            integrator: Integrator::Rk4,
            control,
            t0: 0.0,
            horizon: self.horizon,
            snapshot_every: usize::MAX,
        }
    }
}

/// Observed spatial order on grids with `L / divisions` spacing.
pub fn spatial_order_study(study: &CosineModeStudy, divisions: &[usize]) -> Result<OrderReport> {
    let steps: Vec<f64> = divisions.iter().map(|&d| study.extent / d as f64).collect();
    check_steps(&steps)?;
    if study.amplitude == 0.0 {
        return Err(Error::Degenerate("cosine amplitude is zero: the discrete solution is exact".into()));
    }
    let cfg = study.config();
    let mut errors = Vec::with_capacity(divisions.len());
    let mut scale = 0.0f64;
    for &d in divisions {
        let grid = Arc::new(study.grid(d)?);
        let y = final_state(&study.field(&grid, 0.0), &cfg)?;
        let exact = study.field(&grid, study.horizon);
        scale = scale.max(exact.max_abs());
        errors.push(error_norm(&y, &exact)?);
    }
    assemble(
        Axis::Spatial,
        Integrator::Rk4,
        &steps,
        errors,
        scale,
        ReferenceKind::Analytic,
        format!(
            "cosine mode u0={} A={} nu={} L={} at t={}, dt={:e}, dim={}",
            study.u0, study.amplitude, study.nu, study.extent, study.horizon, study.dt, study.dim
        ),
    )
}

/// A smooth 1D problem with all reaction channels and diffusion active.
pub fn imex_study_scenario() -> Result<Scenario> {
    let doc = r#"{
        "schema_version": 1,
        "name": "imex-consistency",
        "description": "smooth 1D problem for the IMEX/RK4 consistency study",
        "grid": {"dim": 1, "extent_x": 1.0, "nodes_x": 41},
        "params": {"theta": 0.5, "b": 0.5, "c": 0.05, "delta": 0.02, "epsilon": 0.2,
                   "frac_sympt": 0.6, "g": 0.05, "beta_rec": 0.1, "j_rec": 0.1,
                   "l_death": 0.01, "h1": 0.1, "m_death": 0.01, "mu": 0.1,
                   "nu_s": 0.01, "nu_e": 0.01, "nu_a": 0.02, "nu_i": 0.005},
        "initial": {"background": {"s": 1.0, "e": 0.01}},
        "horizon": 2.0,
        "dt": 0.1,
        "integrator": "imex"
    }"#;
    let mut s = crate::scenario::load_scenario(doc)?;
    // smooth spatial profile: a cosine bump of exposed individuals
    s.initial.nodes = (0..41)
        .map(|ix| {
            let x = ix as f64 / 40.0;
            let e = 0.01 * (1.0 + (std::f64::consts::PI * x).cos());
            crate::scenario::NodeInit {
                ix,
                iy: 0,
                state: NodeState { s: 1.0 - e, e, ..NodeState::zero() },
            }
        })
        .collect();
    s.validate()?;
    Ok(s)
}

/// Convergence of IMEX Euler towards a fine-step RK4 reference.
pub fn imex_consistency_study(scenario: &Scenario, dts: &[f64]) -> Result<OrderReport> {
    check_steps(dts)?;
    let initial = scenario.initial_field()?;
    if initial.max_abs() == 0.0 {
        return Err(Error::Degenerate("initial data is identically zero".into()));
    }
    let dt_ref = dts[dts.len() - 1] / REFERENCE_REFINEMENT;
    let exact = final_state(&initial, &scenario_config(scenario, dt_ref, Integrator::Rk4)?)?;
    let errors = run_levels(scenario, dts, Integrator::Imex, &exact)?;
    assemble(
        Axis::Temporal,
        Integrator::Imex,
        dts,
        errors,
        exact.max_abs(),
        ReferenceKind::Richardson,
        format!("rk4 at dt = {dt_ref:e}, horizon {}", scenario.horizon),
    )
}
