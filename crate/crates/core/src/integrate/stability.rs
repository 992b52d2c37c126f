//! Step-size guards: an estimate of the one-sided Lipschitz constant of the
//! right-hand side and the explicit-diffusion limit.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CompartmentField, DiffusionMode, Grid};
use crate::model::{Compartment, ModelParams};
use crate::scalar::Scalar;

use super::system::{EpidemicSystem, OdeSystem};

/// Real-axis stability extent of classical RK4 (`|R(-2.785)| <= 1`).
pub const RK4_REAL_AXIS_EXTENT: f64 = 2.785;
/// Real-axis stability extent of forward Euler.
pub const EULER_REAL_AXIS_EXTENT: f64 = 2.0;

const LANCZOS_MAX_ITER: usize = 1000;
const LANCZOS_REL_TOL: f64 = 1e-9;

/// Result of [`estimate_alpha`]. An estimate, not a rigorous bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Maximum over samples, per day.
    pub alpha: f64,
    pub per_sample: Vec<f64>,
    /// Largest iteration count used by any sample.
    pub iterations: usize,
    pub converged: bool,
}

/// Jacobian probe of `system` at `y`, restricted to the leading `live`
/// coordinates, as `(row, col, value)` triplets in column order.
fn jacobian_triplets<T: Scalar, S: OdeSystem<T>>(system: &S, y: &[T], live: usize) -> Vec<(usize, usize, T)> {
    let dim = system.dim();
    let scale = y[..live].iter().fold(T::one(), |m, v| m.max(v.abs()));
    // The model is at most quadratic in the state, so central differences
    // are exact up to rounding for any probe size.
    let eps = scale * T::lit(1e-3);
    let mut plus = y.to_vec();
    let mut minus = y.to_vec();
    let mut fp = vec![T::zero(); dim];
    let mut fm = vec![T::zero(); dim];
    let inv = T::one() / (eps + eps);
    let mut out = Vec::new();
    for j in 0..live {
        plus[j] = y[j] + eps;
        minus[j] = y[j] - eps;
        system.eval(T::zero(), &plus, &mut fp);
        system.eval(T::zero(), &minus, &mut fm);
        plus[j] = y[j];
        minus[j] = y[j];
        for i in 0..live {
            let d = fp[i] - fm[i];
            if d != T::zero() {
                out.push((i, j, d * inv));
            }
        }
    }
    out
}

/// Same probe as [`jacobian_triplets`] for a system on `grid` whose
/// Jacobian couples each node only to its 5-point stencil. Nodes are
/// coloured by `(ix mod 3, iy mod 3)` so that columns of one colour and
/// compartment never touch the same row and can be perturbed together.
fn jacobian_triplets_on_grid<T: Scalar, S: OdeSystem<T>>(system: &S, y: &[T], grid: &Grid<T>) -> Vec<(usize, usize, T)> {
    let n = grid.len();
    let live = n * Compartment::LIVE_COUNT;
    let dim = system.dim();
    let colour = |node: usize| {
        let (ix, iy) = grid.coords(node);
        ix % 3 + 3 * (iy % 3)
    };
    let colours = if grid.dim() == 2 { 9 } else { 3 };
    let stencil = |node: usize| {
        let (ix, iy) = grid.coords(node);
        let mut out = [usize::MAX; 5];
        out[0] = node;
        if ix > 0 {
            out[1] = grid.index(ix - 1, iy);
        }
        if ix + 1 < grid.nodes_x() {
            out[2] = grid.index(ix + 1, iy);
        }
        if iy > 0 {
            out[3] = grid.index(ix, iy - 1);
        }
        if iy + 1 < grid.nodes_y() {
            out[4] = grid.index(ix, iy + 1);
        }
        out
    };
    let scale = y[..live].iter().fold(T::one(), |m, v| m.max(v.abs()));
    let eps = scale * T::lit(1e-3);
    let inv = T::one() / (eps + eps);
    let mut plus = y.to_vec();
    let mut minus = y.to_vec();
    let mut fp = vec![T::zero(); dim];
    let mut fm = vec![T::zero(); dim];
    let mut out = Vec::new();
    for c in 0..Compartment::LIVE_COUNT {
        for k in 0..colours {
            let cols: Vec<usize> = (0..n).filter(|&node| colour(node) == k).map(|node| c * n + node).collect();
            if cols.is_empty() {
                continue;
            }
            for &j in &cols {
                plus[j] = y[j] + eps;
                minus[j] = y[j] - eps;
            }
            system.eval(T::zero(), &plus, &mut fp);
            system.eval(T::zero(), &minus, &mut fm);
            for &j in &cols {
                plus[j] = y[j];
                minus[j] = y[j];
            }
            for i in 0..live {
                let d = fp[i] - fm[i];
                if d == T::zero() {
                    continue;
                }
                let owner = stencil(i % n).into_iter().find(|&m| m != usize::MAX && colour(m) == k);
                if let Some(m) = owner {
                    out.push((i, c * n + m, d * inv));
                }
            }
        }
    }
    out
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(diag, off)`
/// strictly below `x` (Sturm sequence count).
fn eigenvalues_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for k in 0..diag.len() {
        let b2 = if k == 0 { 0.0 } else { off[k - 1] * off[k - 1] };
        d = diag[k] - x - b2 / d;
        if d == 0.0 {
            d = f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_max_eigen(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let mut radius = 0.0f64;
    for k in 0..n {
        let left = if k > 0 { off[k - 1].abs() } else { 0.0 };
        let right = if k + 1 < n { off[k].abs() } else { 0.0 };
        radius = radius.max(diag[k].abs() + left + right);
    }
    let (mut lo, mut hi) = (-radius - 1.0, radius + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eigenvalues_below(diag, off, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Residual norm of the Ritz pair for `theta`: `off_last * |s_last|` with
/// `s` the normalized eigenvector of the tridiagonal matrix.
fn ritz_residual(diag: &[f64], off: &[f64], theta: f64, beta_next: f64, scale: f64) -> f64 {
    let n = diag.len();
    if n == 1 {
        return beta_next;
    }
    let shift = theta + 1e-10 * scale.max(f64::MIN_POSITIVE);
    let sub: Vec<f64> = std::iter::once(0.0).chain(off[..n - 1].iter().copied()).collect();
    let sup: Vec<f64> = off[..n - 1].iter().copied().chain(std::iter::once(0.0)).collect();
    let d: Vec<f64> = diag.iter().map(|a| a - shift).collect();
    let mut s = vec![1.0; n];
    for _ in 0..2 {
        if super::imex::solve_tridiagonal(&sub, &d, &sup, &mut s).is_err() {
            return beta_next;
        }
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return beta_next;
        }
        s.iter_mut().for_each(|v| *v /= norm);
    }
    beta_next * s[n - 1].abs()
}

/// Largest eigenvalue of the symmetric part of `J` in the inner product
/// weighted by `weights`, via Lanczos iteration.
fn symmetric_part_max_eigen(triplets: &[(usize, usize, f64)], weights: &[f64]) -> (f64, usize, bool) {
    let m = weights.len();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    // W^{1/2} J W^{-1/2}
    let scaled: Vec<(usize, usize, f64)> = triplets
        .iter()
        .map(|&(i, j, v)| (i, j, v * sw[i] / sw[j]))
        .collect();
    let mut rowsum = vec![0.0; m];
    for &(i, j, v) in &scaled {
        rowsum[i] += 0.5 * v.abs();
        rowsum[j] += 0.5 * v.abs();
    }
    let scale = rowsum.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return (0.0, 0, true);
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, v) in &scaled {
            out[i] += 0.5 * v * x[j];
            out[j] += 0.5 * v * x[i];
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut q: Vec<f64> = (0..m)
        .map(|k| sw[k] * (1.0 + 0.5 * ((k * 7919 % 97) as f64 / 97.0 - 0.5)))
        .collect();
    let norm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= norm);

    let max_iter = m.min(LANCZOS_MAX_ITER);
    let mut prev = vec![0.0; m];
    let mut diag = Vec::with_capacity(max_iter);
    let mut off: Vec<f64> = Vec::with_capacity(max_iter);
    let mut w = vec![0.0; m];
    let mut theta = f64::NEG_INFINITY;
    for it in 1..=max_iter {
        apply(&q, &mut w);
        let a = dot(&q, &w);
        diag.push(a);
        let b_prev = off.last().copied().unwrap_or(0.0);
        for k in 0..m {
            w[k] -= a * q[k] + b_prev * prev[k];
        }
        // local reorthogonalization; the extreme Ritz value does not need
        // a globally orthogonal basis
        for basis in [&q, &prev] {
            let c = dot(basis, &w);
            w.iter_mut().zip(basis.iter()).for_each(|(x, y)| *x -= c * y);
        }
        let beta = dot(&w, &w).sqrt();
        theta = tridiagonal_max_eigen(&diag, &off);
        let residual = ritz_residual(&diag, &off, theta, beta, scale);
        if residual <= LANCZOS_REL_TOL * scale || beta <= f64::EPSILON * scale {
            return (theta, it, true);
        }
        off.push(beta);
        std::mem::swap(&mut prev, &mut q);
        for k in 0..m {
            q[k] = w[k] / beta;
        }
    }
    (theta, max_iter, max_iter == m)
}

/// Generic estimator over any system whose leading `weights.len()`
/// coordinates form the state of interest. Probes the Jacobian one column
/// at a time.
pub fn estimate_alpha_system<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    weights: &[T],
    samples: &[&[T]],
) -> Result<AlphaEstimate> {
    let live = weights.len();
    estimate_with(system, weights, samples, |y| jacobian_triplets(system, y, live))
}

/// Estimator for systems on `grid` with 5-point-stencil coupling, weighted
/// by the trapezoid rule over the seven live compartments.
pub(crate) fn estimate_alpha_on_grid<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    grid: &Grid<T>,
    samples: &[&[T]],
) -> Result<AlphaEstimate> {
    let node_w = grid.weights();
    let weights: Vec<T> = (0..Compartment::LIVE_COUNT).flat_map(|_| node_w.iter().copied()).collect();
    estimate_with(system, &weights, samples, |y| jacobian_triplets_on_grid(system, y, grid))
}

fn estimate_with<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    weights: &[T],
    samples: &[&[T]],
    probe: impl Fn(&[T]) -> Vec<(usize, usize, T)>,
) -> Result<AlphaEstimate> {
    if samples.is_empty() {
        return Err(Error::Degenerate("alpha estimate needs at least one sample state".into()));
    }
    let w: Vec<f64> = weights.iter().map(|v| v.as_f64()).collect();
    if w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("inner-product weights must be positive".into()));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut iterations = 0;
    let mut converged = true;
    for (k, y) in samples.iter().enumerate() {
        if y.len() != system.dim() {
            return Err(Error::ShapeMismatch {
                expected: system.dim(),
                found: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: format!("sample[{k}]"),
                node: None,
            });
        }
        let trip: Vec<(usize, usize, f64)> = probe(y).into_iter().map(|(i, j, v)| (i, j, v.as_f64())).collect();
        let (lambda, it, ok) = symmetric_part_max_eigen(&trip, &w);
        per_sample.push(lambda);
        iterations = iterations.max(it);
        converged &= ok;
    }
    let alpha = per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlphaEstimate {
        alpha,
        per_sample,
        iterations,
        converged,
    })
}

/// Estimates the one-sided Lipschitz constant
/// `max <y1 - y2, f(y1) - f(y2)> / |y1 - y2|^2` of the full right-hand side
/// over the seven live compartments, as the largest eigenvalue of the
/// symmetrized Jacobian (trapezoid-weighted inner product) maximized over
/// the samples.
pub fn estimate_alpha<T: Scalar>(
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
    samples: &[CompartmentField<T>],
) -> Result<AlphaEstimate> {
    let system = EpidemicSystem::new(*params, grid.clone(), mode);
    let slices: Vec<&[T]> = samples.iter().map(|f| f.as_slice()).collect();
    estimate_alpha_on_grid(&system, grid, &slices)
}

/// Combined step-size bound with both contributing terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableDtBound {
    pub alpha: f64,
    /// `1 / alpha`, present when alpha is positive.
    pub alpha_limit: Option<f64>,
    /// Explicit-diffusion limit, present when the operator has diffusion and
    /// the integrator treats it explicitly.
    pub cfl_limit: Option<f64>,
    pub horizon_cap: f64,
    pub bound: f64,
}

/// Smallest alpha treated as positive when forming `1 / alpha`.
pub const ALPHA_TINY: f64 = 1e-12;

/// Explicit-diffusion step limit
/// `extent / (max N * max nu * (4/hx^2 [+ 4/hy^2]))`, or `None` without
/// diffusion.
pub fn cfl_limit<T: Scalar>(
    params: &ModelParams<T>,
    grid: &Grid<T>,
    field: &CompartmentField<T>,
    mode: DiffusionMode<T>,
    real_axis_extent: f64,
) -> Option<f64> {
    let nu = params.max_diffusivity().as_f64();
    if nu <= 0.0 {
        return None;
    }
    let max_n = match mode.frozen_n {
        Some(n0) => n0.as_f64(),
        None => field
            .total_population()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.as_f64().abs())),
    };
    if max_n <= 0.0 {
        return None;
    }
    Some(real_axis_extent / (max_n * nu * grid.laplacian_spectral_bound().as_f64()))
}

/// `dt* = min(1/max(alpha, tiny), cfl, horizon_cap)` with alpha estimated at
/// `field` and the RK4 real-axis extent in the diffusion limit.
pub fn max_stable_dt<T: Scalar>(
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    field: &CompartmentField<T>,
    mode: DiffusionMode<T>,
    horizon_cap: f64,
) -> Result<StableDtBound> {
    let alpha = estimate_alpha(params, grid, mode, std::slice::from_ref(field))?.alpha;
    let cfl = cfl_limit(params, grid, field, mode, RK4_REAL_AXIS_EXTENT);
    Ok(combine_bounds(alpha, cfl, horizon_cap))
}

/// Smallest of `1/alpha` (when alpha is positive), the diffusion limit and
/// the horizon.
pub fn combine_bounds(alpha: f64, cfl: Option<f64>, horizon_cap: f64) -> StableDtBound {
    let alpha_limit = (alpha > ALPHA_TINY).then(|| 1.0 / alpha);
    let bound = [alpha_limit, cfl, Some(horizon_cap)]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    StableDtBound {
        alpha,
        alpha_limit,
        cfl_limit: cfl,
        horizon_cap,
        bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeState;

    #[test]
    fn coloured_probe_matches_column_probe() {
        use crate::grid::DiffusionForm;
        for (grid, form) in [
            (Grid::line(1.0, 7).unwrap(), DiffusionForm::Pointwise),
            (Grid::rect(1.0, 5, 2.0, 7).unwrap(), DiffusionForm::Conservative),
            (Grid::rect(1.0, 4, 1.0, 3).unwrap(), DiffusionForm::Pointwise),
        ] {
            let grid = Arc::new(grid);
            let params = ModelParams {
                theta: 0.7,
                b: 0.4,
                c: 0.1,
                delta: 0.05,
                epsilon: 0.3,
                frac_sympt: 0.6,
                g: 0.1,
                beta_rec: 0.2,
                j_rec: 0.1,
                l_death: 0.01,
                h1: 0.2,
                m_death: 0.02,
                mu: 0.1,
                nu_s: 0.3,
                nu_e: 0.2,
                nu_a: 0.1,
                nu_i: 0.05,
            };
            let system = EpidemicSystem::new(params, grid.clone(), DiffusionMode { form, frozen_n: None });
            let y: Vec<f64> = (0..grid.len() * 9).map(|k| 0.1 + ((k * 31 % 17) as f64) / 17.0).collect();
            let mut dense = jacobian_triplets(&system, &y, grid.len() * 7);
            let mut coloured = jacobian_triplets_on_grid(&system, &y, &grid);
            dense.sort_by_key(|&(i, j, _)| (i, j));
            coloured.sort_by_key(|&(i, j, _)| (i, j));
            assert_eq!(dense.len(), coloured.len());
            for (a, b) in dense.iter().zip(&coloured) {
                assert_eq!((a.0, a.1), (b.0, b.1));
                assert!((a.2 - b.2).abs() <= 1e-9 * a.2.abs().max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    struct Decay(f64, usize);
    impl OdeSystem<f64> for Decay {
        fn dim(&self) -> usize {
            self.1
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            for (d, v) in dy.iter_mut().zip(y) {
                *d = -self.0 * v;
            }
        }
    }

    #[test]
    fn linear_decay_gives_minus_gamma() {
        let y = [1.0, 2.0, -3.0, 0.5];
        let est = estimate_alpha_system(&Decay(0.3, 4), &[1.0; 4], &[&y]).unwrap();
        assert!((est.alpha + 0.3).abs() < 1e-10, "{}", est.alpha);
        assert!(est.converged);
    }

    #[test]
    fn empty_sample_set_is_degenerate() {
        assert!(matches!(
            estimate_alpha_system(&Decay(0.3, 2), &[1.0; 2], &[]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn pure_neumann_diffusion_is_nonpositive() {
        let g = Arc::new(Grid::line(1.0, 21).unwrap());
        let p = ModelParams {
            nu_s: 0.3,
            nu_e: 0.2,
            nu_a: 0.1,
            nu_i: 0.4,
            ..Default::default()
        };
        let f = CompartmentField::uniform(
            g.clone(),
            NodeState::from_array([0.5, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.0, 0.0]),
        );
        let est = estimate_alpha(&p, &g, DiffusionMode::default(), &[f]).unwrap();
        assert!(est.alpha <= 1e-8, "{}", est.alpha);
    }

    #[test]
    fn bound_scalings() {
        let g = Arc::new(Grid::line(1.0, 11).unwrap());
        let fine = Arc::new(Grid::line(1.0, 21).unwrap());
        let p = ModelParams {
            nu_s: 0.5,
            ..Default::default()
        };
        let state = NodeState {
            s: 2.0,
            ..NodeState::zero()
        };
        let mode = DiffusionMode::default();
        let f1 = CompartmentField::uniform(g.clone(), state);
        let f2 = CompartmentField::uniform(
            g.clone(),
            NodeState {
                s: 4.0,
                ..NodeState::zero()
            },
        );
        let b1 = max_stable_dt(&p, &g, &f1, mode, 100.0).unwrap();
        let b2 = max_stable_dt(&p, &g, &f2, mode, 100.0).unwrap();
        assert!((b2.cfl_limit.unwrap() * 2.0 - b1.cfl_limit.unwrap()).abs() < 1e-15);
        let b3 = max_stable_dt(&p, &fine, &CompartmentField::uniform(fine.clone(), state), mode, 100.0).unwrap();
        assert!((b3.cfl_limit.unwrap() * 4.0 - b1.cfl_limit.unwrap()).abs() < 1e-15);
        // 2.785 h^2 / (4 N nu) in 1D
        assert!((b1.cfl_limit.unwrap() - 2.785 * 0.01 / (4.0 * 2.0 * 0.5)).abs() < 1e-15);
        assert_eq!(b1.bound, b1.cfl_limit.unwrap());
    }

    #[test]
    fn no_diffusion_and_contractive_gives_horizon_cap() {
        let g = Arc::new(Grid::line(1.0, 5).unwrap());
        let p = ModelParams {
            l_death: 0.2,
            ..Default::default()
        };
        let f = CompartmentField::uniform(
            g.clone(),
            NodeState {
                i: 3.0,
                ..NodeState::zero()
            },
        );
        let b = max_stable_dt(&p, &g, &f, DiffusionMode::default(), 60.0).unwrap();
        assert!(b.alpha <= ALPHA_TINY, "{}", b.alpha);
        assert_eq!(b.bound, 60.0);
        assert!(b.alpha_limit.is_none() && b.cfl_limit.is_none());
    }
}
