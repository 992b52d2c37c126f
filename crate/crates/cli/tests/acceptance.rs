//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p covid-rd-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use covid_rd::integrate::{step_count, StepDiagnostics};
use covid_rd::verify::{
    contractive_scenario, imex_consistency_study, imex_study_scenario, spatial_order_study, stability_check,
    temporal_order_study, temporal_study_scenario, CosineModeStudy, DEFAULT_IMEX_DTS, DEFAULT_SPATIAL_DIVISIONS,
    DEFAULT_TEMPORAL_DTS,
};
use covid_rd::{preset, rk4_step, run, simulate, Compartment, CompartmentField, Grid, Integrator, ModelParams, NodeState};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn scalar_decay() -> Outcome {
    // With only the death rate from I active, I obeys y' = -y.
    let grid = Arc::new(Grid::line(1.0f64, 3).map_err(err)?);
    let field = CompartmentField::uniform(
        grid.clone(),
        NodeState {
            i: 1.0,
            ..NodeState::zero()
        },
    );
    let params = ModelParams {
        l_death: 1.0,
        ..Default::default()
    };
    let out = rk4_step(0.0, &field, 0.1, &params, &grid).map_err(err)?;
    let v = out.compartment(Compartment::I)[0];
    check((v - 0.9048375).abs() < 1e-12, format!("y1 = {v:.16}"))
}

fn temporal_order() -> Outcome {
    let scenario = temporal_study_scenario().map_err(err)?;
    let rk4 = temporal_order_study(&scenario, &DEFAULT_TEMPORAL_DTS, Integrator::Rk4).map_err(err)?;
    let euler = temporal_order_study(&scenario, &DEFAULT_TEMPORAL_DTS, Integrator::Euler).map_err(err)?;
    check(
        rk4.orders_within(3.7, 4.3) && euler.orders_within(0.7, 1.3),
        format!(
            "rk4 orders {:?}, euler orders {:?}",
            rounded(&rk4.orders_l2),
            rounded(&euler.orders_l2)
        ),
    )
}

fn spatial_order() -> Outcome {
    let report = spatial_order_study(&CosineModeStudy::default(), &DEFAULT_SPATIAL_DIVISIONS).map_err(err)?;
    check(report.orders_within(1.8, 2.2), format!("orders {:?}", rounded(&report.orders_l2)))
}

fn stability(bin: &Path) -> Outcome {
    let scenario = contractive_scenario().map_err(err)?;
    let safe = stability_check(&scenario, 0.5).map_err(err)?;
    let steps = safe.report.norms.len().saturating_sub(1);
    if !(safe.report.monotone && safe.abort.is_none() && steps >= 1000) {
        return Err(format!(
            "safe run: {steps} steps, monotone = {}, first violation = {:?}",
            safe.report.monotone, safe.report.first_violation
        ));
    }
    let out = Command::new(bin)
        .args(["stability-check", "--scenario", "preset:contractive-1d", "--dt-factor", "4"])
        .output()
        .map_err(err)?;
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(err)?;
    let violation = report["first_violation"].as_u64();
    check(
        out.status.code() == Some(3) && violation.is_some(),
        format!(
            "safe run monotone over {steps} steps; 4x bound exits {:?} with violation at step {violation:?}",
            out.status.code()
        ),
    )
}

fn max_drift(diagnostics: &[StepDiagnostics], total: impl Fn(&StepDiagnostics) -> f64) -> f64 {
    let base = total(&diagnostics[0]);
    diagnostics.iter().map(|d| (total(d) - base).abs() / base).fold(0.0, f64::max)
}

fn conservation() -> Outcome {
    let scenario = preset("corridor-1d").map_err(err)?;
    let steps = step_count(scenario.horizon, scenario.dt).map_err(err)?;
    if steps < 1000 {
        return Err(format!("only {steps} steps"));
    }
    let series = simulate(&scenario).map_err(err)?;
    let augmented = max_drift(&series.diagnostics, |d| d.augmented_total);

    let mut closed = scenario.clone();
    closed.params.l_death = 0.0;
    closed.params.m_death = 0.0;
    let cfg = closed.run_config().map_err(err)?;
    let live_run = run(&closed.initial_field().map_err(err)?, &cfg).map_err(err)?;
    let live = max_drift(&live_run.series.diagnostics, |d| d.live_total);
    check(
        augmented <= 1e-12 && live <= 1e-12,
        format!("{steps} steps; augmented drift {augmented:.2e}, live drift with no deaths {live:.2e}"),
    )
}

fn nanjing_peak() -> Outcome {
    let scenario = preset("nanjing-ode").map_err(err)?;
    let series = simulate(&scenario).map_err(err)?;
    let times = series.times();
    let d: Vec<f64> = series.snapshots.iter().map(|s| s.field.compartment(Compartment::D)[0]).collect();
    let interior_maxima: Vec<usize> = (1..d.len() - 1).filter(|&k| d[k] > d[k - 1] && d[k] >= d[k + 1]).collect();
    let peak = d.iter().copied().fold(f64::MIN, f64::max);
    let last = *d.last().ok_or("empty series")?;
    let ok = interior_maxima.len() == 1
        && (times[interior_maxima[0]] - 15.0).abs() <= 1.0
        && last < 0.05 * peak;
    let peak_day = interior_maxima.first().map(|&k| times[k]);
    check(
        ok,
        format!(
            "interior maxima {}, peak day {peak_day:?}, D(end)/peak = {:.4}",
            interior_maxima.len(),
            last / peak
        ),
    )
}

fn corridor_peaks() -> Outcome {
    let scenario = preset("corridor-1d").map_err(err)?;
    let series = simulate(&scenario).map_err(err)?;
    let peak = |name: &str| -> Result<f64, String> {
        let label = series.grid.region_label(name).ok_or(format!("no region {name}"))?;
        Ok(series.regional_series(Compartment::D, label).into_iter().fold(f64::MIN, f64::max))
    };
    let (seed, near, far) = (peak("Nanjing")?, peak("Yangzhou")?, peak("Huai'an")?);
    check(
        near > seed && near > far && far < 0.25 * near,
        format!("peaks Nanjing {seed:.3e}, Yangzhou {near:.3e}, Huai'an {far:.3e} ({:.0}%)", 100.0 * far / near),
    )
}

fn imex_order() -> Outcome {
    let report = imex_consistency_study(&imex_study_scenario().map_err(err)?, &DEFAULT_IMEX_DTS).map_err(err)?;
    check(report.orders_within(0.7, 1.3), format!("orders {:?}", rounded(&report.orders_l2)))
}

fn run_with_threads(bin: &Path, threads: &str, scenario: &str, out: &Path) -> Result<(), String> {
    let status = Command::new(bin)
        .env("COVID_RD_THREADS", threads)
        .args(["simulate", "--scenario", scenario, "--out"])
        .arg(out)
        .output()
        .map_err(err)?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{scenario} with {threads} threads: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn determinism(bin: &Path) -> Outcome {
    let max_threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2).to_string();
    let dir = std::env::temp_dir().join(format!("covid-rd-acceptance-{}", std::process::id()));
    let mut compared = Vec::new();
    for name in ["corridor-1d", "jiangsu-2d"] {
        let scenario = format!("preset:{name}");
        let (one, many) = (dir.join(format!("{name}-1")), dir.join(format!("{name}-n")));
        run_with_threads(bin, "1", &scenario, &one)?;
        run_with_threads(bin, &max_threads, &scenario, &many)?;
        for file in ["nodes.csv", "regions.csv"] {
            let a = std::fs::read(one.join(file)).map_err(err)?;
            let b = std::fs::read(many.join(file)).map_err(err)?;
            if a != b {
                let _ = std::fs::remove_dir_all(&dir);
                return Err(format!("{name}/{file} differs between 1 and {max_threads} threads"));
            }
            compared.push(format!("{name}/{file}"));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("1 vs {max_threads} threads identical: {}", compared.join(", ")))
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

fn main() {
    let bin = Path::new(env!("CARGO_BIN_EXE_covid-rd"));
    let criteria: Vec<Criterion> = vec![
        ("rk4 scalar step", Box::new(scalar_decay)),
        ("temporal order", Box::new(temporal_order)),
        ("spatial order", Box::new(spatial_order)),
        ("stability monitor", Box::new(move || stability(bin))),
        ("augmented conservation", Box::new(conservation)),
        ("single-site peak timing", Box::new(nanjing_peak)),
        ("corridor spread pattern", Box::new(corridor_peaks)),
        ("imex consistency order", Box::new(imex_order)),
        ("thread-count determinism", Box::new(move || determinism(bin))),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name} ({secs:.2}s): {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} FAIL {name} ({secs:.2}s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
