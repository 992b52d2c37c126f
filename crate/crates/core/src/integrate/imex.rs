//! First-order implicit-explicit Euler for 1D grids: reactions explicit,
//! diffusion implicit with N frozen at the start of the step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{CompartmentField, DiffusionForm, DiffusionMode, Grid};
use crate::model::{Compartment, ModelParams};
use crate::scalar::Scalar;

use super::system::EpidemicSystem;

/// Thomas algorithm for a tridiagonal system, solved in place into `rhs`.
/// `sub[0]` and `sup[n - 1]` are ignored.
pub fn solve_tridiagonal<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &mut [T]) -> Result<()> {
    let n = rhs.len();
    if sub.len() != n || diag.len() != n || sup.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: diag.len(),
        });
    }
    if n == 0 {
        return Ok(());
    }
    let mut cp = vec![T::zero(); n];
    if diag[0] == T::zero() {
        return Err(Error::Degenerate("zero pivot in tridiagonal solve at row 0".into()));
    }
    cp[0] = sup[0] / diag[0];
    rhs[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * cp[i - 1];
        if m == T::zero() {
            return Err(Error::Degenerate(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        cp[i] = sup[i] / m;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - cp[i] * rhs[i + 1];
    }
    Ok(())
}

impl<T: Scalar> EpidemicSystem<T> {
    /// Advances `y` by one IMEX-Euler step:
    /// `(I - dt N^n nu L) u^{n+1} = u^n + dt reaction(u^n)` for each
    /// diffusing compartment, plain explicit Euler for the rest.
    pub(crate) fn imex_step(&self, y: &mut [T], dt: T) -> Result<()> {
        if self.grid.dim() != 1 {
            return Err(Error::Unsupported("IMEX stepping is implemented for 1D grids only".into()));
        }
        let n = self.grid.len();
        let reactions: Vec<_> = (0..n)
            .map(|i| crate::model::reaction_terms(&crate::grid::node_from_flat(y, n, i), &self.params))
            .collect();
        let coef = self.n_coefficient(y);
        let h2 = self.grid.h() * self.grid.h();
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let mut sub = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut sup = vec![T::zero(); n];
        for comp in Compartment::ALL {
            let c = comp.index();
            let u = &mut y[c * n..(c + 1) * n];
            for (node, v) in u.iter_mut().enumerate() {
                *v = *v + dt * reactions[node].get(comp);
            }
            let nu = self.params.diffusivity(comp);
            if nu <= T::zero() {
                continue;
            }
            let scale = dt * nu / h2;
            for i in 0..n {
                let (lo, hi) = match self.mode.form {
                    DiffusionForm::Pointwise => (scale * coef[i], scale * coef[i]),
                    DiffusionForm::Conservative => {
                        let face = |j: usize| half * (coef[i] + coef[j]);
                        let l = if i == 0 { 1 } else { i - 1 };
                        let r = if i + 1 == n { n - 2 } else { i + 1 };
                        (scale * face(l), scale * face(r))
                    }
                };
                if i == 0 {
                    sub[i] = T::zero();
                    sup[i] = -two * hi;
                    diag[i] = T::one() + two * hi;
                } else if i + 1 == n {
                    sub[i] = -two * lo;
                    sup[i] = T::zero();
                    diag[i] = T::one() + two * lo;
                } else {
                    sub[i] = -lo;
                    sup[i] = -hi;
                    diag[i] = T::one() + lo + hi;
                }
            }
            solve_tridiagonal(&sub, &diag, &sup, u)?;
        }
        Ok(())
    }
}

/// One IMEX-Euler step of the full system (1D grids only).
pub fn imex_euler_step<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
) -> Result<CompartmentField<T>> {
    imex_euler_step_with(t, field, dt, params, grid, DiffusionMode::default())
}

pub fn imex_euler_step_with<T: Scalar>(
    _t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
) -> Result<CompartmentField<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "dt".into(),
            reason: format!("must be positive and finite, got {dt}"),
        });
    }
    if field.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: field.len(),
        });
    }
    field.check_finite()?;
    let system = EpidemicSystem::new(*params, grid.clone(), mode);
    let mut y = field.as_slice().to_vec();
    system.imex_step(&mut y, dt)?;
    CompartmentField::from_vec(grid.clone(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::rk::euler_step;
    use crate::model::NodeState;
    use proptest::prelude::*;

    #[test]
    fn thomas_matches_dense_solution() {
        // [[4,1,0],[1,4,1],[0,1,4]] x = [5,6,5] -> x = [1,1,1]
        let mut rhs = [5.0f64, 6.0, 5.0];
        solve_tridiagonal(&[0.0, 1.0, 1.0], &[4.0, 4.0, 4.0], &[1.0, 1.0, 0.0], &mut rhs).unwrap();
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let mut bad = [1.0, 1.0];
        assert!(solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &mut bad).is_err());
    }

    #[test]
    fn zero_diffusivity_matches_euler_bitwise() {
        let g = Arc::new(Grid::line(1.0, 7).unwrap());
        let mut f = CompartmentField::zeros(g.clone());
        for (k, v) in f.as_mut_slice().iter_mut().enumerate() {
            *v = 50.0 + (k % 11) as f64;
        }
        let p = ModelParams {
            theta: 0.001,
            b: 0.4,
            c: 0.1,
            delta: 0.02,
            epsilon: 0.3,
            frac_sympt: 0.5,
            g: 0.1,
            beta_rec: 0.05,
            j_rec: 0.1,
            l_death: 0.02,
            h1: 0.1,
            m_death: 0.01,
            mu: 0.1,
            ..Default::default()
        };
        let a = imex_euler_step(0.0, &f, 0.3, &p, &g).unwrap();
        let b = euler_step(0.0, &f, 0.3, &p, &g).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn two_d_is_unsupported() {
        let g = Arc::new(Grid::rect(1.0, 4, 1.0, 4).unwrap());
        let f = CompartmentField::zeros(g.clone());
        assert!(matches!(
            imex_euler_step(0.0, &f, 0.1, &ModelParams::default(), &g),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn conserves_weighted_total_in_flux_form() {
        let g = Arc::new(Grid::line(1.0, 12).unwrap());
        let mut f = CompartmentField::zeros(g.clone());
        for i in 0..12 {
            f.set_node(
                i,
                &NodeState {
                    s: 100.0 + 30.0 * (i as f64 * 0.9).sin(),
                    i: 5.0 + i as f64,
                    ..NodeState::zero()
                },
            );
        }
        let p = ModelParams {
            nu_s: 0.01,
            nu_i: 0.02,
            l_death: 0.1,
            ..Default::default()
        };
        let mode = DiffusionMode {
            form: DiffusionForm::Conservative,
            frozen_n: None,
        };
        let out = imex_euler_step_with(0.0, &f, 5.0, &p, &g, mode).unwrap();
        let before = f.augmented_total();
        assert!((out.augmented_total() - before).abs() <= 1e-12 * before);
    }

    proptest! {
        #[test]
        fn pure_diffusion_obeys_discrete_max_principle(
            u in proptest::collection::vec(0.0..100.0f64, 4..30),
            dt in 1e-3..1e3f64,
            nu in 0.01..1.0f64,
        ) {
            let n = u.len();
            let g = Arc::new(Grid::line(1.0, n).unwrap());
            let mut f = CompartmentField::zeros(g.clone());
            f.compartment_mut(Compartment::S).copy_from_slice(&u);
            let p = ModelParams { nu_s: nu, ..Default::default() };
            let mode = DiffusionMode { form: DiffusionForm::Pointwise, frozen_n: Some(1.0) };
            let out = imex_euler_step_with(0.0, &f, dt, &p, &g, mode).unwrap();
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12 * hi.max(1.0);
            for &v in out.compartment(Compartment::S) {
                prop_assert!(v >= lo - tol && v <= hi + tol, "{} not in [{}, {}]", v, lo, hi);
            }
        }
    }
}
