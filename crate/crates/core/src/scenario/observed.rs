use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::TimeSeries;
use crate::model::Compartment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub day: u32,
    pub region: String,
    pub confirmed_hospitalized: f64,
    #[serde(default)]
    pub recovered: Option<f64>,
    #[serde(default)]
    pub deaths: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservedSeries {
    pub records: Vec<ObservedRecord>,
}

impl ObservedSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Region names in first-appearance order.
    pub fn regions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.region.as_str()) {
                out.push(&r.region);
            }
        }
        out
    }

    pub fn region_records<'a>(&'a self, region: &'a str) -> impl Iterator<Item = &'a ObservedRecord> + 'a {
        self.records.iter().filter(move |r| r.region == region)
    }
}

const REQUIRED: [&str; 3] = ["day", "region", "confirmed_hospitalized"];
const OPTIONAL: [&str; 2] = ["recovered", "deaths"];

/// Parses `day,region,confirmed_hospitalized[,recovered,deaths]`.
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn load_observed(document: &str) -> Result<ObservedSeries> {
    if document.trim().is_empty() {
        return Ok(ObservedSeries::default());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(document.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { row: Some(1), message: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let expected_len = cols.len();
    if expected_len < 3
        || cols[..3] != REQUIRED
        || cols[3..].iter().zip(OPTIONAL).any(|(a, b)| *a != b)
        || expected_len > 5
    {
        return Err(Error::Parse {
            row: Some(1),
            message: format!(
                "header must be day,region,confirmed_hospitalized[,recovered[,deaths]], got {}",
                cols.join(",")
            ),
        });
    }

    let mut last_day: BTreeMap<String, u32> = BTreeMap::new();
    let mut records = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let bad = |message: String| Error::Parse { row: Some(row), message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != expected_len {
            return Err(bad(format!("expected {expected_len} fields, found {}", rec.len())));
        }
        let day: u32 = rec[0].parse().map_err(|_| bad(format!("invalid day `{}`", &rec[0])))?;
        let region = rec[1].to_string();
        if region.is_empty() {
            return Err(bad("empty region".into()));
        }
        let count = |idx: usize, name: &str| -> Result<f64> {
            let v: f64 = rec[idx]
                .parse()
                .map_err(|_| bad(format!("invalid {name} `{}`", &rec[idx])))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(format!("{name} must be a nonnegative count, got {v}")));
            }
            Ok(v)
        };
        let confirmed = count(2, "confirmed_hospitalized")?;
        let optional = |idx: usize, name: &str| -> Result<Option<f64>> {
            if idx < rec.len() && !rec[idx].is_empty() {
                count(idx, name).map(Some)
            } else {
                Ok(None)
            }
        };
        let recovered = optional(3, "recovered")?;
        let deaths = optional(4, "deaths")?;
        if let Some(&prev) = last_day.get(&region) {
            if day <= prev {
                return Err(bad(format!(
                    "day {day} for region `{region}` does not follow day {prev}"
                )));
            }
        }
        last_day.insert(region.clone(), day);
        records.push(ObservedRecord { day, region, confirmed_hospitalized: confirmed, recovered, deaths });
    }
    Ok(ObservedSeries { records })
}

/// Observed region name to simulated region name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionMapping {
    pub pairs: Vec<(String, String)>,
}

impl RegionMapping {
    /// Parses `obs=sim,obs2=sim2`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (o, s) = item.split_once('=').ok_or_else(|| Error::InvalidParameter {
                name: "region".into(),
                reason: format!("expected OBS=SIM, got `{item}`"),
            })?;
            pairs.push((o.trim().to_string(), s.trim().to_string()));
        }
        Ok(Self { pairs })
    }

    /// Maps every observed region to the simulated region of the same name.
    pub fn identity(obs: &ObservedSeries) -> Self {
        Self {
            pairs: obs.regions().into_iter().map(|r| (r.to_string(), r.to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub observed_region: String,
    pub simulated_region: String,
    pub points: usize,
    /// Observations past the simulated horizon, excluded from the metrics.
    pub points_outside_horizon: usize,
    /// Persons.
    pub rmse: f64,
    /// RMSE divided by the observed maximum; absent when that maximum is 0.
    pub nrmse: Option<f64>,
    pub simulated_peak_day: f64,
    pub observed_peak_day: f64,
    /// Simulated minus observed.
    pub peak_day_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub compartment: String,
    pub regions: Vec<RegionFit>,
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    if times[k] == t {
        return values[k];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] + w * (values[k] - values[k - 1])
}

/// Compares the regional aggregate of D against confirmed-hospitalized
/// counts, interpolating the simulation linearly between snapshots.
pub fn fit_metrics(sim: &TimeSeries<f64>, obs: &ObservedSeries, mapping: &RegionMapping) -> Result<FitMetrics> {
    if sim.snapshots.is_empty() {
        return Err(Error::Degenerate("simulation has no snapshots".into()));
    }
    let times = sim.times();
    let t_end = *times.last().unwrap_or(&0.0);
    let mut regions = Vec::new();
    for (obs_name, sim_name) in &mapping.pairs {
        let label = sim.grid.region_label(sim_name).ok_or_else(|| Error::InvalidParameter {
            name: "region".into(),
            reason: format!(
                "no simulated region `{sim_name}`; available: {}",
                sim.grid.region_names().join(", ")
            ),
        })?;
        let series = sim.regional_series(Compartment::D, label);
        let recs: Vec<&ObservedRecord> = obs.region_records(obs_name).collect();
        if recs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "region".into(),
                reason: format!("no observations for region `{obs_name}`"),
            });
        }
        let inside: Vec<&&ObservedRecord> = recs.iter().filter(|r| f64::from(r.day) <= t_end + 1e-9).collect();
        let sq: f64 = inside
            .iter()
            .map(|r| {
                let d = interpolate(&times, &series, f64::from(r.day)) - r.confirmed_hospitalized;
                d * d
            })
            .sum();
        let rmse = if inside.is_empty() { f64::NAN } else { (sq / inside.len() as f64).sqrt() };
        let obs_max = recs.iter().map(|r| r.confirmed_hospitalized).fold(0.0, f64::max);
        let obs_peak = recs
            .iter()
            .find(|r| r.confirmed_hospitalized == obs_max)
            .map_or(0.0, |r| f64::from(r.day));
        let sim_max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sim_peak = series.iter().position(|&v| v == sim_max).map_or(0.0, |k| times[k]);
        regions.push(RegionFit {
            observed_region: obs_name.clone(),
            simulated_region: sim_name.clone(),
            points: inside.len(),
            points_outside_horizon: recs.len() - inside.len(),
            rmse,
            nrmse: (obs_max > 0.0).then(|| rmse / obs_max),
            simulated_peak_day: sim_peak,
            observed_peak_day: obs_peak,
            peak_day_difference: sim_peak - obs_peak,
        });
    }
    Ok(FitMetrics { compartment: Compartment::D.name().to_string(), regions })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{CompartmentField, Grid};
    use crate::integrate::{GuardReport, Snapshot};
    use crate::model::NodeState;

    fn row_of(e: Error) -> Option<usize> {
        match e {
            Error::Parse { row, .. } => row,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_body_gives_empty_series() {
        assert!(load_observed("").unwrap().is_empty());
        assert!(load_observed("day,region,confirmed_hospitalized\n").unwrap().is_empty());
    }

    #[test]
    fn three_valid_rows() {
        let doc = "day,region,confirmed_hospitalized,recovered,deaths\n\
                   0,Nanjing,3,0,0\n1,Nanjing,5,,\n1,Yangzhou,1,0,0\n";
        let s = load_observed(doc).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.records[1].recovered, None);
        assert_eq!(s.regions(), vec!["Nanjing", "Yangzhou"]);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let unsorted = "day,region,confirmed_hospitalized\n0,A,1\n2,A,1\n1,A,1\n";
        assert_eq!(row_of(load_observed(unsorted).unwrap_err()), Some(4));
        let negative = "day,region,confirmed_hospitalized\n0,A,-1\n";
        assert_eq!(row_of(load_observed(negative).unwrap_err()), Some(2));
        let malformed = "day,region,confirmed_hospitalized\n0,A,1\nx,A,1\n";
        assert_eq!(row_of(load_observed(malformed).unwrap_err()), Some(3));
        let short = "day,region,confirmed_hospitalized\n0,A\n";
        assert_eq!(row_of(load_observed(short).unwrap_err()), Some(2));
        let header = "when,region,confirmed_hospitalized\n";
        assert_eq!(row_of(load_observed(header).unwrap_err()), Some(1));
    }

    fn series_with(values: &[f64]) -> TimeSeries<f64> {
        let grid = Arc::new(
            Grid::line(1.0, 3)
                .unwrap()
                .with_regions(vec![1, 1, 1], vec!["outside".into(), "city".into()])
                .unwrap(),
        );
        let snapshots = values
            .iter()
            .enumerate()
            .map(|(k, &d)| Snapshot {
                step: k,
                time: k as f64,
                field: CompartmentField::uniform(grid.clone(), NodeState { d, ..NodeState::zero() }),
            })
            .collect();
        TimeSeries {
            grid,
            dt: 1.0,
            snapshots,
            diagnostics: Vec::new(),
            guard: GuardReport::default(),
            negativity_warnings: 0,
            clamped_mass: 0.0,
        }
    }

    fn obs_from(values: &[f64], offset: f64) -> ObservedSeries {
        ObservedSeries {
            records: values
                .iter()
                .enumerate()
                .map(|(k, &v)| ObservedRecord {
                    day: k as u32,
                    region: "obs".into(),
                    confirmed_hospitalized: v + offset,
                    recovered: None,
                    deaths: None,
                })
                .collect(),
        }
    }

    #[test]
    fn sampled_simulation_fits_exactly() {
        let values = [0.0, 1.0, 4.0, 9.0, 4.0, 1.0];
        let sim = series_with(&values);
        let map = RegionMapping::parse("obs=city").unwrap();
        let m = fit_metrics(&sim, &obs_from(&values, 0.0), &map).unwrap();
        assert_eq!(m.regions[0].rmse, 0.0);
        assert_eq!(m.regions[0].peak_day_difference, 0.0);
        let m = fit_metrics(&sim, &obs_from(&values, 0.25), &map).unwrap();
        assert!((m.regions[0].rmse - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shifted_peak_reports_the_shift() {
        let sim = series_with(&[0.0, 1.0, 5.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        let shifted = [0.0, 0.0, 0.0, 1.0, 5.0, 2.0, 1.0, 0.0];
        let m = fit_metrics(&sim, &obs_from(&shifted, 0.0), &RegionMapping::parse("obs=city").unwrap()).unwrap();
        assert_eq!(m.regions[0].peak_day_difference, -2.0);
    }

    #[test]
    fn mapping_errors() {
        assert!(RegionMapping::parse("a-b").is_err());
        let sim = series_with(&[1.0, 2.0]);
        let map = RegionMapping::parse("obs=nowhere").unwrap();
        assert!(fit_metrics(&sim, &obs_from(&[1.0], 0.0), &map).is_err());
    }
}
