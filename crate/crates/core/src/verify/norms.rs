use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CompartmentField;
use crate::model::Compartment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentNorm {
    pub compartment: String,
    pub l2: f64,
    pub linf: f64,
}

/// Discrete L2 (trapezoid-weighted) and max norms of `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub per_compartment: Vec<CompartmentNorm>,
    /// Maximum over compartments.
    pub l2: f64,
    /// Maximum over compartments.
    pub linf: f64,
}

pub fn error_norm(a: &CompartmentField<f64>, b: &CompartmentField<f64>) -> Result<ErrorNorms> {
    if a.grid() != b.grid() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let grid = a.grid();
    let mut per_compartment = Vec::with_capacity(Compartment::COUNT);
    let (mut l2_max, mut linf_max) = (0.0f64, 0.0f64);
    for c in Compartment::ALL {
        let (ua, ub) = (a.compartment(c), b.compartment(c));
        let mut sq = 0.0;
        let mut linf = 0.0f64;
        for (node, (x, y)) in ua.iter().zip(ub).enumerate() {
            let d = x - y;
            sq += grid.weight(node) * d * d;
            linf = linf.max(d.abs());
        }
        let l2 = sq.sqrt();
        l2_max = l2_max.max(l2);
        linf_max = linf_max.max(linf);
        per_compartment.push(CompartmentNorm {
            compartment: c.name().to_string(),
            l2,
            linf,
        });
    }
    Ok(ErrorNorms {
        per_compartment,
        l2: l2_max,
        linf: linf_max,
    })
}
