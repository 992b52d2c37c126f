use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use covid_rd::integrate::{estimate_alpha, run, AlphaEstimate, GuardReport, Integrator, Kinetics};
use covid_rd::scenario::{fit_metrics, load_observed, load_scenario, preset, OutputPlan, RegionMapping, Scenario, PRESETS};
use covid_rd::verify::{
    imex_consistency_study, imex_study_scenario, mass_ledger, spatial_order_study, stability_check,
    temporal_order_study, temporal_study_scenario, CosineModeStudy, OrderReport, DEFAULT_IMEX_DTS,
    DEFAULT_SPATIAL_DIVISIONS, DEFAULT_TEMPORAL_DTS,
};
use covid_rd::{write_timeseries, Error};
use serde::Serialize;

use crate::{Failure, EXIT_NUMERICAL};

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, json: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, json),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(json.as_bytes())
                .map_err(|e| Failure::usage(format!("standard output: {e}")))
        }
    }
}

/// Resolves `preset:NAME` or reads a scenario file.
pub fn load_source(source: &str) -> Result<Scenario, Failure> {
    if let Some(name) = source.strip_prefix("preset:") {
        return Ok(preset(name)?);
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(load_scenario(&text)?)
}

pub struct SimulateArgs {
    pub scenario: String,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub integrator: Option<Integrator>,
    pub out: PathBuf,
    pub strict_guards: bool,
    pub gnuplot: bool,
}

#[derive(Serialize)]
struct LedgerSummary {
    max_relative_drift: f64,
    live_max_relative_drift: f64,
    initial_live_total: f64,
    final_live_total: f64,
    final_cumulative_deaths: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a Scenario,
    integrator: Integrator,
    dt: f64,
    horizon: f64,
    steps: usize,
    snapshots: usize,
    guard: &'a GuardReport,
    /// Estimated over the initial state and the snapshots at 25, 50 and
    /// 75% of the run.
    alpha: Option<AlphaEstimate>,
    ledger: Option<LedgerSummary>,
    negativity_warnings: usize,
    clamped_mass: f64,
    abort: Option<String>,
    files: Vec<String>,
}

fn gnuplot_script(scenario: &Scenario, regions: &[String]) -> String {
    let mut s = format!(
        "# regional hospitalized (D) for {}\nset datafile separator ','\nset key autotitle columnhead\n\
         set xlabel 'day'\nset ylabel 'D (regional integral)'\nplot ",
        scenario.name
    );
    let curves: Vec<String> = regions
        .iter()
        .map(|r| {
            format!(
                "'regions.csv' using (strcol(2) eq '{r}' ? $1 : 1/0):9 with lines title '{r}'"
            )
        })
        .collect();
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut scenario = load_source(&args.scenario)?;
    if let Some(dt) = args.dt {
        scenario.dt = dt;
        if scenario.snapshot_interval.is_some_and(|iv| dt > 0.0 && ((iv / dt).round() * dt - iv).abs() > 1e-9 * iv) {
            scenario.snapshot_interval = None;
        }
    }
    if let Some(t) = args.horizon {
        scenario.horizon = t;
    }
    if let Some(i) = args.integrator {
        scenario.integrator = i;
    }
    if args.strict_guards {
        scenario.flags.strict_guards = true;
    }
    scenario.validate()?;

    let initial = scenario.initial_field()?;
    let cfg = scenario.run_config()?;
    let steps = covid_rd::integrate::step_count(cfg.horizon, cfg.control.dt)?;
    let outcome = run(&initial, &cfg)?;
    let series = &outcome.series;

    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let csv = write_timeseries(series, OutputPlan::default());
    let mut files = vec!["nodes.csv".to_string(), "regions.csv".to_string()];
    write_file(&args.out.join("nodes.csv"), &csv.nodes)?;
    write_file(&args.out.join("regions.csv"), &csv.regions)?;
    if args.gnuplot {
        let labels: Vec<String> = series
            .grid
            .region_names()
            .iter()
            .enumerate()
            .filter(|(l, _)| series.grid.labels().contains(&(*l as u16)))
            .map(|(_, n)| n.clone())
            .collect();
        write_file(&args.out.join("plot.gp"), &gnuplot_script(&scenario, &labels))?;
        files.push("plot.gp".into());
    }

    let alpha = match &cfg.kinetics {
        Kinetics::Covid(p) => {
            let n = series.snapshots.len();
            let mut picks: Vec<usize> = vec![0, n / 4, n / 2, 3 * n / 4];
            picks.dedup();
            let samples: Vec<_> = picks
                .into_iter()
                .map(|k| series.snapshots[k].field.clone())
                .filter(|f| f.first_non_finite().is_none())
                .collect();
            match estimate_alpha(p, &series.grid, cfg.mode, &samples) {
                Ok(a) => Some(a),
                Err(e) => {
                    log::warn!("alpha estimate unavailable: {e}");
                    None
                }
            }
        }
        Kinetics::Sir(_) => None,
    };
    let ledger = mass_ledger(series).ok().map(|l| LedgerSummary {
        max_relative_drift: l.max_relative_drift,
        live_max_relative_drift: l.live_max_relative_drift,
        initial_live_total: l.live_totals[0],
        final_live_total: *l.live_totals.last().unwrap_or(&f64::NAN),
        final_cumulative_deaths: *l.cumulative_deaths.last().unwrap_or(&f64::NAN),
    });
    files.push("manifest.json".into());
    let manifest = Manifest {
        scenario: &scenario,
        integrator: scenario.integrator,
        dt: scenario.dt,
        horizon: scenario.horizon,
        steps,
        snapshots: series.snapshots.len(),
        guard: &series.guard,
        alpha,
        ledger,
        negativity_warnings: series.negativity_warnings,
        clamped_mass: series.clamped_mass,
        abort: outcome.abort.as_ref().map(|e| e.to_string()),
        files,
    };
    write_file(&args.out.join("manifest.json"), &to_json(&manifest)?)?;

    if let Some(e) = outcome.abort {
        return Err(e.into());
    }
    println!(
        "{}: {} steps of {} (dt = {}), {} snapshots written to {}",
        scenario.name,
        steps,
        scenario.integrator.name(),
        scenario.dt,
        series.snapshots.len(),
        args.out.display()
    );
    Ok(())
}

pub enum StudyAxis {
    Temporal(Integrator),
    Spatial,
    Imex,
}

fn halvings(first: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| first / f64::powi(2.0, k as i32)).collect()
}

pub fn order_check(axis: StudyAxis, levels: usize, out: Option<&Path>) -> Result<(), Failure> {
    if levels < 3 {
        return Err(Failure::usage(format!("--levels must be at least 3, got {levels}")));
    }
    let report: OrderReport = match axis {
        StudyAxis::Temporal(integrator) => {
            if integrator == Integrator::Imex {
                return Err(Failure::usage("use --axis imex for the IMEX study"));
            }
            temporal_order_study(&temporal_study_scenario()?, &halvings(DEFAULT_TEMPORAL_DTS[0], levels), integrator)?
        }
        StudyAxis::Spatial => {
            let divisions: Vec<usize> = (0..levels).map(|k| DEFAULT_SPATIAL_DIVISIONS[0] << k).collect();
            spatial_order_study(&CosineModeStudy::default(), &divisions)?
        }
        StudyAxis::Imex => imex_consistency_study(&imex_study_scenario()?, &halvings(DEFAULT_IMEX_DTS[0], levels))?,
    };
    let json = to_json(&report)?;
    match out {
        Some(path) => {
            write_file(path, &json)?;
            print!("{}", report.table());
        }
        None => {
            eprint!("{}", report.table());
            emit(None, &json)?;
        }
    }
    Ok(())
}

pub fn stability_check_cmd(source: &str, dt_factor: f64, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = load_source(source)?;
    let check = stability_check(&scenario, dt_factor)?;
    let r = &check.report;
    emit(out, &to_json(r)?)?;
    eprintln!(
        "dt = {:e} (factor {dt_factor} of bound {:e}); alpha = {:e}; monotone = {}; first violation = {}",
        r.dt,
        check.bound.bound,
        r.alpha,
        r.monotone,
        r.first_violation.map_or("none".to_string(), |k| format!("step {k}"))
    );
    if let Some(e) = check.abort {
        return Err(e.into());
    }
    if r.expected_but_violated() {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!(
                "L2 norm grew at step {} although the step-size conditions hold",
                r.first_violation.unwrap_or(0)
            ),
        });
    }
    Ok(())
}

pub fn compare(source: &str, observed: &Path, region: Option<&str>, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = load_source(source)?;
    let text = fs::read_to_string(observed).map_err(|e| io_failure(observed, e))?;
    let obs = load_observed(&text)?;
    let mapping = match region {
        Some(spec) => RegionMapping::parse(spec)?,
        None => RegionMapping::identity(&obs),
    };
    let series = covid_rd::simulate(&scenario)?;
    let metrics = fit_metrics(&series, &obs, &mapping)?;
    emit(out, &to_json(&metrics)?)
}

pub fn presets() -> Result<(), Failure> {
    let mut out = String::new();
    for (name, _) in PRESETS {
        let s = preset(name)?;
        out.push_str(&format!("{name:<16} {}\n", s.description));
    }
    emit(None, &out)
}
