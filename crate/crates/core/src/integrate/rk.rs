use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{CompartmentField, DiffusionMode, Grid};
use crate::model::ModelParams;
use crate::scalar::Scalar;

use super::system::{EpidemicSystem, OdeSystem};
use super::tableau::ButcherTableau;

/// Stage buffers reused across steps.
#[derive(Debug, Clone)]
pub struct RkWorkspace<T> {
    k: Vec<Vec<T>>,
    stage: Vec<T>,
}

impl<T: Scalar> RkWorkspace<T> {
    pub fn new(stages: usize, dim: usize) -> Self {
        Self {
            k: vec![vec![T::zero(); dim]; stages],
            stage: vec![T::zero(); dim],
        }
    }
}

/// One explicit Runge-Kutta step, in place:
/// `y <- y + dt * sum_k b_k f(t + c_k dt, Y_k)` with
/// `Y_j = y + dt * sum_{k<j} a_jk f(t + c_k dt, Y_k)`.
pub fn explicit_rk_step<T: Scalar, S: OdeSystem<T>>(
    tableau: &ButcherTableau<T>,
    system: &S,
    t: T,
    y: &mut [T],
    dt: T,
    ws: &mut RkWorkspace<T>,
) {
    let s = tableau.stages();
    debug_assert_eq!(ws.k.len(), s);
    for j in 0..s {
        ws.stage.copy_from_slice(y);
        for m in 0..j {
            let a = tableau.a[j][m];
            if a == T::zero() {
                continue;
            }
            let scale = dt * a;
            for (st, &kv) in ws.stage.iter_mut().zip(&ws.k[m]) {
                *st = *st + scale * kv;
            }
        }
        system.eval(t + tableau.c[j] * dt, &ws.stage, &mut ws.k[j]);
    }
    for (idx, yv) in y.iter_mut().enumerate() {
        let mut incr = T::zero();
        for m in 0..s {
            incr = incr + tableau.b[m] * ws.k[m][idx];
        }
        *yv = *yv + dt * incr;
    }
}

fn check_step_inputs<T: Scalar>(field: &CompartmentField<T>, grid: &Grid<T>, dt: T) -> Result<()> {
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
    field.check_finite()
}

fn step_with<T: Scalar>(
    tableau: ButcherTableau<T>,
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
) -> Result<CompartmentField<T>> {
    check_step_inputs(field, grid, dt)?;
    let system = EpidemicSystem::new(*params, grid.clone(), mode);
    let mut ws = RkWorkspace::new(tableau.stages(), system.dim());
    let mut y = field.as_slice().to_vec();
    explicit_rk_step(&tableau, &system, t, &mut y, dt, &mut ws);
    let out = CompartmentField::from_vec(grid.clone(), y)?;
    if let Some((c, node)) = out.first_non_finite() {
        return Err(Error::NumericalAbort {
            step: 1,
            time: (t + dt).as_f64(),
            compartment: c,
            node,
        });
    }
    Ok(out)
}

/// One classical RK4 step of the full reaction-diffusion system.
pub fn rk4_step<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
) -> Result<CompartmentField<T>> {
    rk4_step_with(t, field, dt, params, grid, DiffusionMode::default())
}

pub fn rk4_step_with<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
) -> Result<CompartmentField<T>> {
    step_with(ButcherTableau::classical_rk4(), t, field, dt, params, grid, mode)
}

/// Forward Euler: `y + dt * f(t, y)`.
pub fn euler_step<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
) -> Result<CompartmentField<T>> {
    euler_step_with(t, field, dt, params, grid, DiffusionMode::default())
}

pub fn euler_step_with<T: Scalar>(
    t: T,
    field: &CompartmentField<T>,
    dt: T,
    params: &ModelParams<T>,
    grid: &Arc<Grid<T>>,
    mode: DiffusionMode<T>,
) -> Result<CompartmentField<T>> {
    step_with(ButcherTableau::forward_euler(), t, field, dt, params, grid, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Compartment, NodeState};

    struct Linear(f64);
    impl OdeSystem<f64> for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = self.0 * y[0];
        }
    }

    /// I decays into the death ledger at rate l = 1: a scalar y' = -y.
    fn decay_field() -> (Arc<Grid<f64>>, CompartmentField<f64>, ModelParams<f64>) {
        let g = Arc::new(Grid::line(1.0, 3).unwrap());
        let f = CompartmentField::uniform(
            g.clone(),
            NodeState {
                i: 1.0,
                ..NodeState::zero()
            },
        );
        let p = ModelParams {
            l_death: 1.0,
            ..Default::default()
        };
        (g, f, p)
    }

    #[test]
    fn rk4_scalar_decay_matches_stability_polynomial() {
        let (g, f, p) = decay_field();
        let out = rk4_step(0.0, &f, 0.1, &p, &g).unwrap();
        for &v in out.compartment(Compartment::I) {
            assert!((v - 0.9048375).abs() < 1e-12, "{v}");
        }
        // Ledger picks up exactly what I lost.
        for node in 0..3 {
            assert!((out.node(node).augmented_total() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn euler_scalar_decay() {
        let (g, f, p) = decay_field();
        let out = euler_step(0.0, &f, 0.1, &p, &g).unwrap();
        assert!(out.compartment(Compartment::I).iter().all(|&v| (v - 0.9).abs() < 1e-15));
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = Arc::new(Grid::line(1.0, 5).unwrap());
        let p = ModelParams {
            theta: 0.5,
            c: 0.2,
            nu_s: 0.1,
            ..Default::default()
        };
        let z = CompartmentField::zeros(g.clone());
        assert_eq!(rk4_step(0.0, &z, 0.1, &p, &g).unwrap(), z);
        assert_eq!(euler_step(0.0, &z, 0.1, &p, &g).unwrap(), z);
    }

    #[test]
    fn uniform_field_is_diffusion_equilibrium() {
        let g = Arc::new(Grid::rect(1.0, 5, 1.0, 4).unwrap());
        let p = ModelParams {
            nu_s: 0.9,
            nu_e: 0.8,
            nu_a: 0.7,
            nu_i: 0.6,
            ..Default::default()
        };
        let f = CompartmentField::uniform(g.clone(), NodeState::from_array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0]));
        let out = rk4_step(0.0, &f, 0.01, &p, &g).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn linear_scalar_reproduces_polynomial_for_many_z() {
        let t = ButcherTableau::classical_rk4();
        let mut ws = RkWorkspace::new(4, 1);
        for lambda in [-3.0, -1.0, -0.25, 0.5, 2.0] {
            for dt in [0.01, 0.1, 0.7] {
                let mut y = [1.0];
                explicit_rk_step(&t, &Linear(lambda), 0.0, &mut y, dt, &mut ws);
                let expect = t.stability_function(lambda * dt);
                assert!((y[0] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_dt_rejected() {
        let (g, f, p) = decay_field();
        assert!(matches!(rk4_step(0.0, &f, -1.0, &p, &g), Err(Error::InvalidParameter { .. })));
        assert!(matches!(euler_step(0.0, &f, 0.0, &p, &g), Err(Error::InvalidParameter { .. })));
    }
}
