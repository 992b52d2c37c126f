//! Semi-discrete right-hand sides.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{flux_laplacian_at, laplacian_at, node_from_flat, CompartmentField, DiffusionForm, DiffusionMode, Grid};
use crate::model::{reaction_terms, sir_terms, Compartment, ModelParams, NodeState, SirParams, SirState};
use crate::scalar::Scalar;

/// Node count above which stage evaluations fan out over rayon. Every
/// output entry is computed by the same expression either way, so results
/// do not depend on the thread count.
pub(crate) const PARALLEL_MIN_NODES: usize = 256;

/// A first-order system `y' = f(t, y)` on a flat state vector.
pub trait OdeSystem<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: T, y: &[T], dy: &mut [T]);
}

/// Seven-compartment reaction-diffusion system on a grid.
#[derive(Debug, Clone)]
pub struct EpidemicSystem<T> {
    pub params: ModelParams<T>,
    pub grid: Arc<Grid<T>>,
    pub mode: DiffusionMode<T>,
}

impl<T: Scalar> EpidemicSystem<T> {
    pub fn new(params: ModelParams<T>, grid: Arc<Grid<T>>, mode: DiffusionMode<T>) -> Self {
        Self { params, grid, mode }
    }

    /// Coefficient field N used by the diffusion operator for state `y`.
    pub(crate) fn n_coefficient(&self, y: &[T]) -> Vec<T> {
        let n = self.grid.len();
        match self.mode.frozen_n {
            Some(n0) => vec![n0; n],
            None => (0..n)
                .map(|i| {
                    // Same summation order as `total_population`.
                    y[i] + y[n + i] + y[2 * n + i] + y[3 * n + i] + y[4 * n + i] + y[5 * n + i] + y[6 * n + i]
                })
                .collect(),
        }
    }

    fn reactions(&self, y: &[T]) -> Vec<NodeState<T>> {
        let n = self.grid.len();
        let f = |i: usize| reaction_terms(&node_from_flat(y, n, i), &self.params);
        if n >= PARALLEL_MIN_NODES {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    #[inline]
    fn diffusion_at(&self, u: &[T], coef: &[T], nu: T, node: usize) -> T {
        match self.mode.form {
            DiffusionForm::Pointwise => coef[node] * nu * laplacian_at(u, &self.grid, node),
            DiffusionForm::Conservative => nu * flux_laplacian_at(u, coef, &self.grid, node),
        }
    }
}

impl<T: Scalar> OdeSystem<T> for EpidemicSystem<T> {
    fn dim(&self) -> usize {
        self.grid.len() * Compartment::COUNT
    }

    fn eval(&self, _t: T, y: &[T], dy: &mut [T]) {
        let n = self.grid.len();
        let reactions = self.reactions(y);
        let coef = if self.params.has_diffusion() {
            self.n_coefficient(y)
        } else {
            Vec::new()
        };
        let fill = |(c, out): (usize, &mut [T])| {
            let comp = Compartment::ALL[c];
            let nu = self.params.diffusivity(comp);
            let u = &y[c * n..(c + 1) * n];
            for (node, o) in out.iter_mut().enumerate() {
                let react = reactions[node].get(comp);
                *o = if nu > T::zero() {
                    react + self.diffusion_at(u, &coef, nu, node)
                } else {
                    react
                };
            }
        };
        if n >= PARALLEL_MIN_NODES {
            dy.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            dy.chunks_mut(n).enumerate().for_each(fill);
        }
    }
}

/// Classic SIR kinetics evaluated nodewise on the S, I and R slots of a
/// compartment field. There is no spatial coupling.
#[derive(Debug, Clone)]
pub struct SirSystem<T> {
    pub params: SirParams<T>,
    pub grid: Arc<Grid<T>>,
}

impl<T: Scalar> OdeSystem<T> for SirSystem<T> {
    fn dim(&self) -> usize {
        self.grid.len() * Compartment::COUNT
    }

    fn eval(&self, _t: T, y: &[T], dy: &mut [T]) {
        let n = self.grid.len();
        dy.iter_mut().for_each(|v| *v = T::zero());
        let (si, ii, ri) = (
            Compartment::S.index() * n,
            Compartment::I.index() * n,
            Compartment::R.index() * n,
        );
        for node in 0..n {
            let d = sir_terms(
                &SirState {
                    s: y[si + node],
                    i: y[ii + node],
                    r: y[ri + node],
                },
                &self.params,
            );
            dy[si + node] = d.s;
            dy[ii + node] = d.i;
            dy[ri + node] = d.r;
        }
    }
}

/// Full semi-discrete right-hand side (reaction plus diffusion of S, E, A, I)
/// with N taken from the field itself.
pub fn full_rhs<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
) -> Result<CompartmentField<T>> {
    full_rhs_with(t, field, params, grid, DiffusionMode::default())
}

pub fn full_rhs_with<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
) -> Result<CompartmentField<T>> {
    if field.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: field.len(),
        });
    }
    field.check_finite()?;
    let system = EpidemicSystem::new(*params, grid.clone(), mode);
    let mut out = CompartmentField::zeros(grid.clone());
    system.eval(t, field.as_slice(), out.as_mut_slice());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reaction_rhs;

    fn params() -> ModelParams<f64> {
        ModelParams {
            theta: 0.002,
            b: 0.5,
            c: 0.1,
            delta: 0.05,
            epsilon: 0.2,
            frac_sympt: 0.6,
            g: 0.1,
            beta_rec: 0.1,
            j_rec: 0.07,
            l_death: 0.01,
            h1: 0.2,
            m_death: 0.02,
            mu: 0.1,
            ..Default::default()
        }
    }

    fn rough_field(grid: &Arc<Grid<f64>>) -> CompartmentField<f64> {
        let mut f = CompartmentField::zeros(grid.clone());
        for (k, v) in f.as_mut_slice().iter_mut().enumerate() {
            *v = 10.0 + ((k * 37 % 23) as f64);
        }
        f
    }

    #[test]
    fn no_diffusion_reduces_to_nodewise_reaction() {
        let g = Arc::new(Grid::line(1.0, 6).unwrap());
        let f = rough_field(&g);
        let rhs = full_rhs(0.0, &f, &params(), &g).unwrap();
        for node in 0..6 {
            assert_eq!(rhs.node(node), reaction_rhs(&f.node(node), &params()).unwrap());
        }
    }

    #[test]
    fn uniform_field_has_no_diffusion_contribution() {
        let g = Arc::new(Grid::rect(1.0, 4, 2.0, 5).unwrap());
        let state = NodeState {
            s: 900.0,
            q: 3.0,
            e: 4.0,
            a: 5.0,
            i: 6.0,
            d: 7.0,
            r: 8.0,
            ..NodeState::zero()
        };
        let p = ModelParams {
            nu_s: 0.5,
            nu_e: 0.4,
            nu_a: 0.3,
            nu_i: 0.2,
            ..params()
        };
        let rhs = full_rhs(0.0, &CompartmentField::uniform(g.clone(), state), &p, &g).unwrap();
        let expect = reaction_rhs(&state, &p).unwrap();
        for node in 0..g.len() {
            assert_eq!(rhs.node(node), expect);
        }
    }

    #[test]
    fn single_node_exposed_bump_hand_stencil() {
        // Three nodes, h = 1, E = (0, 2, 0), everything else zero. N = E.
        let g = Arc::new(Grid::line(2.0, 3).unwrap());
        let mut f = CompartmentField::zeros(g.clone());
        f.compartment_mut(Compartment::E)[1] = 2.0;
        let p = ModelParams {
            nu_e: 0.25,
            nu_s: 0.5,
            ..Default::default()
        };
        let rhs = full_rhs(0.0, &f, &p, &g).unwrap();
        // Stencil (0, 2, 0) -> (4, -4, 4); N = (0, 2, 0); dE = N * 0.25 * stencil.
        assert_eq!(rhs.compartment(Compartment::E), &[0.0, -2.0, 0.0]);
        for c in [Compartment::S, Compartment::Q, Compartment::A, Compartment::I, Compartment::D, Compartment::R] {
            assert!(rhs.compartment(c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let g = Arc::new(Grid::line(1.0, 4).unwrap());
        let other = Arc::new(Grid::line(1.0, 5).unwrap());
        let f = CompartmentField::zeros(other);
        assert!(matches!(full_rhs(0.0, &f, &params(), &g), Err(Error::ShapeMismatch { .. })));
        let mut f = CompartmentField::zeros(g.clone());
        f.compartment_mut(Compartment::A)[2] = f64::NAN;
        assert!(matches!(full_rhs(0.0, &f, &params(), &g), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn parallel_and_serial_paths_agree_bitwise() {
        let g = Arc::new(Grid::rect(1.0, 20, 1.0, 16).unwrap());
        assert!(g.len() >= PARALLEL_MIN_NODES);
        let f = rough_field(&g);
        let p = ModelParams {
            nu_s: 0.01,
            nu_e: 0.02,
            nu_a: 0.03,
            nu_i: 0.04,
            ..params()
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| full_rhs(0.0, &f, &p, &g).unwrap());
        let b = pool4.install(|| full_rhs(0.0, &f, &p, &g).unwrap());
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
