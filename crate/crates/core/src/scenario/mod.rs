//! Scenario documents, shipped presets, observed-data ingestion and
//! time-series output.
//!
//! Scenarios are closed, versioned JSON documents: unknown keys are errors.

mod observed;
mod output;
mod presets;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use observed::{fit_metrics, load_observed, FitMetrics, ObservedRecord, ObservedSeries, RegionFit, RegionMapping};
pub use output::{read_node_csv, write_timeseries, OutputPlan, TimeseriesCsv};
pub use presets::{preset, preset_names, PRESETS};

use crate::error::{Diagnostic, Error, Result};
use crate::grid::{CompartmentField, DiffusionForm, DiffusionMode, Grid};
use crate::integrate::{step_count, Integrator, Kinetics, RunConfig, StepControl};
use crate::model::{Compartment, ModelParams, NodeState, SirParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Seven-compartment reaction-diffusion model.
    #[default]
    Covid7,
    /// Classic SIR kinetics on the S, I, R slots.
    Sir,
}

fn default_dim() -> u8 {
    1
}
fn default_extent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    /// Closed interval `[x0, x1]` covered by the region.
    pub x: [f64; 2],
    /// Closed interval in y; required on 2D grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dim")]
    pub dim: u8,
    #[serde(default = "default_extent")]
    pub extent_x: f64,
    pub nodes_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_y: Option<usize>,
    /// Nodes take the label of the first region containing them; nodes in
    /// no region are labelled `outside`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionInit {
    pub region: String,
    pub state: NodeState<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeInit {
    pub ix: usize,
    #[serde(default)]
    pub iy: usize,
    pub state: NodeState<f64>,
}

/// Initial densities: a background state, overridden per region, then per
/// node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub background: NodeState<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionInit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeInit>,
}

fn default_true() -> bool {
    true
}
fn default_negativity() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Hold N at this constant (verification scenarios only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_n: Option<f64>,
    #[serde(default)]
    pub diffusion_form: DiffusionForm,
    #[serde(default)]
    pub clamp: bool,
    #[serde(default)]
    pub strict_guards: bool,
    #[serde(default = "default_true")]
    pub guard_alpha: bool,
    #[serde(default = "default_true")]
    pub guard_cfl: bool,
    #[serde(default = "default_negativity")]
    pub negativity_tolerance: f64,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            frozen_n: None,
            diffusion_form: DiffusionForm::Pointwise,
            clamp: false,
            strict_guards: false,
            guard_alpha: true,
            guard_cfl: true,
            negativity_tolerance: default_negativity(),
        }
    }
}

/// A runnable configuration: grid, parameters, initial state, horizon and
/// integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub model: ModelKind,
    pub grid: GridSpec,
    #[serde(default)]
    pub params: ModelParams<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sir_params: Option<SirParams<f64>>,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Days.
    pub horizon: f64,
    /// Days.
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Days between snapshots; defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub flags: Flags,
    /// Free-form provenance notes, ignored by the solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(document).map_err(|e| {
        Error::Validation(vec![Diagnostic::new(
            json_error_field(&e),
            format!("{e}"),
        )])
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    // serde reports "unknown field `x`" and "missing field `x`"
    for marker in ["unknown field `", "missing field `"] {
        if let Some(pos) = msg.find(marker) {
            let rest = &msg[pos + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "document".to_string()
}

fn check_state(prefix: &str, s: &NodeState<f64>, out: &mut Vec<Diagnostic>) {
    for c in Compartment::ALL {
        let v = s.get(c);
        if !(v.is_finite() && v >= 0.0) {
            out.push(Diagnostic::new(
                format!("{prefix}.{}", c.name()),
                format!("must be finite and nonnegative, got {v}"),
            ));
        }
    }
}

fn is_multiple(interval: f64, dt: f64) -> bool {
    let k = (interval / dt).round();
    k >= 1.0 && (k * dt - interval).abs() <= 1e-9 * interval
}

impl Scenario {
    /// Writes the scenario back to pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Collects every invariant violation rather than stopping at the first.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            d.push(Diagnostic::new(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let g = &self.grid;
        match g.dim {
            1 => {
                if g.extent_y.is_some() || g.nodes_y.is_some() {
                    d.push(Diagnostic::new("grid.nodes_y", "only valid when dim = 2"));
                }
            }
            2 => {
                if !g.extent_y.is_some_and(|e| e.is_finite() && e > 0.0) {
                    d.push(Diagnostic::new("grid.extent_y", "required and positive when dim = 2"));
                }
                if !g.nodes_y.is_some_and(|n| n >= 3) {
                    d.push(Diagnostic::new("grid.nodes_y", "required and at least 3 when dim = 2"));
                }
            }
            other => d.push(Diagnostic::new("grid.dim", format!("must be 1 or 2, got {other}"))),
        }
        if g.nodes_x < 3 {
            d.push(Diagnostic::new("grid.nodes_x", format!("need at least 3 nodes, got {}", g.nodes_x)));
        }
        if !(g.extent_x.is_finite() && g.extent_x > 0.0) {
            d.push(Diagnostic::new("grid.extent_x", format!("must be positive, got {}", g.extent_x)));
        }
        for (k, r) in g.regions.iter().enumerate() {
            let f = format!("grid.regions[{k}]");
            if r.name.is_empty() || r.name == "outside" || r.name == "domain" {
                d.push(Diagnostic::new(format!("{f}.name"), "must be non-empty and not a reserved name"));
            }
            if g.regions[..k].iter().any(|o| o.name == r.name) {
                d.push(Diagnostic::new(format!("{f}.name"), format!("duplicate region `{}`", r.name)));
            }
            if !(r.x[0].is_finite() && r.x[1].is_finite() && r.x[0] <= r.x[1]) {
                d.push(Diagnostic::new(format!("{f}.x"), "must be an ordered finite interval"));
            }
            match (g.dim, r.y) {
                (2, None) => d.push(Diagnostic::new(format!("{f}.y"), "required on 2D grids")),
                (2, Some(y)) if !(y[0].is_finite() && y[1].is_finite() && y[0] <= y[1]) => {
                    d.push(Diagnostic::new(format!("{f}.y"), "must be an ordered finite interval"))
                }
                (1, Some(_)) => d.push(Diagnostic::new(format!("{f}.y"), "only valid on 2D grids")),
                _ => {}
            }
        }

        match self.model {
            ModelKind::Covid7 => {
                d.extend(self.params.diagnostics("params."));
                if self.sir_params.is_some() {
                    d.push(Diagnostic::new("sir_params", "only valid when model = \"sir\""));
                }
            }
            ModelKind::Sir => match &self.sir_params {
                None => d.push(Diagnostic::new("sir_params", "required when model = \"sir\"")),
                Some(p) => d.extend(p.diagnostics("sir_params.")),
            },
        }

        let dt_ok = self.dt.is_finite() && self.dt > 0.0;
        if !dt_ok {
            d.push(Diagnostic::new("dt", format!("must be positive and finite, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            d.push(Diagnostic::new("horizon", format!("must be positive and finite, got {}", self.horizon)));
        } else if dt_ok && !is_multiple(self.horizon, self.dt) {
            d.push(Diagnostic::new("horizon", format!("must be a multiple of dt = {}", self.dt)));
        }
        if let Some(iv) = self.snapshot_interval {
            if !(iv.is_finite() && iv > 0.0) {
                d.push(Diagnostic::new("snapshot_interval", format!("must be positive, got {iv}")));
            } else if dt_ok && !is_multiple(iv, self.dt) {
                d.push(Diagnostic::new("snapshot_interval", format!("must be a multiple of dt = {}", self.dt)));
            }
        }
        if self.integrator == Integrator::Imex && g.dim == 2 {
            d.push(Diagnostic::new("integrator", "imex is only available on 1D grids"));
        }

        check_state("initial.background", &self.initial.background, &mut d);
        for (k, r) in self.initial.regions.iter().enumerate() {
            if !g.regions.iter().any(|s| s.name == r.region) {
                d.push(Diagnostic::new(
                    format!("initial.regions[{k}].region"),
                    format!("unknown region `{}`", r.region),
                ));
            }
            check_state(&format!("initial.regions[{k}].state"), &r.state, &mut d);
        }
        let ny = if g.dim == 2 { g.nodes_y.unwrap_or(0) } else { 1 };
        for (k, n) in self.initial.nodes.iter().enumerate() {
            if n.ix >= g.nodes_x || n.iy >= ny {
                d.push(Diagnostic::new(
                    format!("initial.nodes[{k}]"),
                    format!("node ({}, {}) outside the {}x{} grid", n.ix, n.iy, g.nodes_x, ny),
                ));
            }
            check_state(&format!("initial.nodes[{k}].state"), &n.state, &mut d);
        }

        let f = &self.flags;
        if let Some(n0) = f.frozen_n {
            if !(n0.is_finite() && n0 > 0.0) {
                d.push(Diagnostic::new("flags.frozen_n", format!("must be positive, got {n0}")));
            }
        }
        if !(f.negativity_tolerance.is_finite() && f.negativity_tolerance >= 0.0) {
            d.push(Diagnostic::new("flags.negativity_tolerance", "must be nonnegative"));
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(d))
        }
    }

    pub fn build_grid(&self) -> Result<Arc<Grid<f64>>> {
        let g = &self.grid;
        let base = if g.dim == 2 {
            Grid::rect(
                g.extent_x,
                g.nodes_x,
                g.extent_y.unwrap_or(0.0),
                g.nodes_y.unwrap_or(0),
            )?
        } else {
            Grid::line(g.extent_x, g.nodes_x)?
        };
        if g.regions.is_empty() {
            return Ok(Arc::new(base));
        }
        let tol = 1e-12 * g.extent_x.max(g.extent_y.unwrap_or(0.0));
        let inside = |iv: [f64; 2], v: f64| v >= iv[0] - tol && v <= iv[1] + tol;
        let labels = (0..base.len())
            .map(|node| {
                let (ix, iy) = base.coords(node);
                let (x, y) = (base.x(ix), base.y(iy));
                g.regions
                    .iter()
                    .position(|r| inside(r.x, x) && r.y.is_none_or(|ry| inside(ry, y)))
                    .map_or(0, |p| p as u16 + 1)
            })
            .collect();
        let names = std::iter::once("outside".to_string())
            .chain(g.regions.iter().map(|r| r.name.clone()))
            .collect();
        Ok(Arc::new(base.with_regions(labels, names)?))
    }

    pub fn initial_field(&self) -> Result<CompartmentField<f64>> {
        let grid = self.build_grid()?;
        let mut field = CompartmentField::uniform(grid.clone(), self.initial.background);
        for r in &self.initial.regions {
            let label = grid.region_label(&r.region).ok_or_else(|| Error::InvalidParameter {
                name: "initial.regions".into(),
                reason: format!("unknown region `{}`", r.region),
            })?;
            for node in 0..grid.len() {
                if grid.labels()[node] == label {
                    field.set_node(node, &r.state);
                }
            }
        }
        for n in &self.initial.nodes {
            field.set_node(grid.index(n.ix, n.iy), &n.state);
        }
        Ok(field)
    }

    pub fn diffusion_mode(&self) -> DiffusionMode<f64> {
        DiffusionMode {
            form: self.flags.diffusion_form,
            frozen_n: self.flags.frozen_n,
        }
    }

    pub fn kinetics(&self) -> Kinetics<f64> {
        match self.model {
            ModelKind::Covid7 => Kinetics::Covid(self.params),
            ModelKind::Sir => Kinetics::Sir(self.sir_params.unwrap_or_default()),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig<f64>> {
        let interval = self.snapshot_interval.unwrap_or(self.dt);
        let every = step_count(interval, self.dt)?.max(1);
        Ok(RunConfig {
            kinetics: self.kinetics(),
            mode: self.diffusion_mode(),
            integrator: self.integrator,
            control: StepControl {
                dt: self.dt,
                guard_alpha: self.flags.guard_alpha,
                guard_cfl: self.flags.guard_cfl,
                strict: self.flags.strict_guards,
                negativity_tolerance: self.flags.negativity_tolerance,
                clamp: self.flags.clamp,
            },
            t0: 0.0,
            horizon: self.horizon,
            snapshot_every: every,
        })
    }

    /// Replaces `dt` (and the snapshot interval when it no longer divides)
    /// and revalidates.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        if let Some(iv) = self.snapshot_interval {
            if dt > 0.0 && !is_multiple(iv, dt) {
                self.snapshot_interval = None;
            }
        }
        self.validate()?;
        Ok(self)
    }
}
