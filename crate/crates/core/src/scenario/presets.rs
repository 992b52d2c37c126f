use super::{load_scenario, Scenario};
use crate::error::{Error, Result};

/// Shipped scenarios. Parameter values are calibration fixtures pinned for
/// regression testing, not measured quantities.
pub const PRESETS: &[(&str, &str)] = &[
    ("nanjing-ode", include_str!("../../presets/nanjing-ode.json")),
    ("corridor-1d", include_str!("../../presets/corridor-1d.json")),
    ("jiangsu-2d", include_str!("../../presets/jiangsu-2d.json")),
    ("sir-demo", include_str!("../../presets/sir-demo.json")),
    ("contractive-1d", include_str!("../../presets/contractive-1d.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    let (_, doc) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidParameter {
            name: "preset".into(),
            reason: format!("unknown preset `{name}`; valid names: {}", preset_names().join(", ")),
        })?;
    load_scenario(doc)
}
