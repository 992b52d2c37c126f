use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{region_integral, CompartmentField, Grid};
use crate::integrate::TimeSeries;
use crate::model::Compartment;

/// Which snapshots to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputPlan {
    /// Write every `stride`-th snapshot; the last one is always written.
    pub stride: usize,
}

impl Default for OutputPlan {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeseriesCsv {
    /// Long format, one row per (time, node).
    pub nodes: String,
    /// One row per (time, region) holding regional integrals.
    pub regions: String,
}

// 17 significant digits.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn compartment_header(out: &mut String) {
    for c in Compartment::ALL {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
}

pub fn write_timeseries(series: &TimeSeries<f64>, plan: OutputPlan) -> TimeseriesCsv {
    let grid = &series.grid;
    let stride = plan.stride.max(1);
    let last = series.snapshots.len().saturating_sub(1);
    let chosen = series
        .snapshots
        .iter()
        .enumerate()
        .filter(|(k, _)| k % stride == 0 || *k == last)
        .map(|(_, s)| s);

    let two_d = grid.dim() == 2;
    let mut nodes = String::from(if two_d { "time,node_x,node_y,region" } else { "time,node_x,region" });
    compartment_header(&mut nodes);
    let mut regions = String::from("time,region");
    compartment_header(&mut regions);

    let names = grid.region_names();
    let present: Vec<u16> = (0..names.len() as u16)
        .filter(|l| grid.labels().contains(l))
        .collect();

    for snap in chosen {
        let f = &snap.field;
        for node in 0..grid.len() {
            let (ix, iy) = grid.coords(node);
            num(&mut nodes, snap.time);
            nodes.push(',');
            num(&mut nodes, grid.x(ix));
            if two_d {
                nodes.push(',');
                num(&mut nodes, grid.y(iy));
            }
            nodes.push(',');
            nodes.push_str(&names[grid.labels()[node] as usize]);
            for v in f.node(node).to_array() {
                nodes.push(',');
                num(&mut nodes, v);
            }
            nodes.push('\n');
        }
        for &label in &present {
            num(&mut regions, snap.time);
            regions.push(',');
            regions.push_str(&names[label as usize]);
            for c in Compartment::ALL {
                regions.push(',');
                // labels come from the grid itself, so this cannot fail
                let v = region_integral(f.compartment(c), grid, label).unwrap_or(f64::NAN);
                num(&mut regions, v);
            }
            regions.push('\n');
        }
    }
    TimeseriesCsv { nodes, regions }
}

/// Reads a node CSV written by [`write_timeseries`] back into fields on
/// `grid`, one per time.
pub fn read_node_csv(document: &str, grid: &Arc<Grid<f64>>) -> Result<Vec<(f64, CompartmentField<f64>)>> {
    let mut reader = csv::Reader::from_reader(document.as_bytes());
    let offset = if grid.dim() == 2 { 4 } else { 3 };
    let mut out: Vec<(f64, CompartmentField<f64>)> = Vec::new();
    let mut node = 0;
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let bad = |message: String| Error::Parse { row: Some(row), message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != offset + Compartment::COUNT {
            return Err(bad(format!("expected {} fields", offset + Compartment::COUNT)));
        }
        let parse = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("invalid number `{}`", &rec[i])));
        let time = parse(0)?;
        if node == 0 {
            out.push((time, CompartmentField::zeros(grid.clone())));
        }
        let field = &mut out.last_mut().expect("pushed above").1;
        let mut vals = [0.0; Compartment::COUNT];
        for (c, v) in vals.iter_mut().enumerate() {
            *v = parse(offset + c)?;
        }
        field.set_node(node, &crate::model::NodeState::from_array(vals));
        node = (node + 1) % grid.len();
    }
    if node != 0 {
        return Err(Error::Parse { row: None, message: "truncated snapshot".into() });
    }
    Ok(out)
}
