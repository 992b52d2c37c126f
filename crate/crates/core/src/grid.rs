//! Structured 1D/2D grids, compartment fields and the no-flux discrete
//! Laplacian.
//!
//! Nodes are stored row-major with `x` varying fastest. Boundary nodes use
//! mirror ghosts (`u[-1] = u[1]`), i.e. homogeneous Neumann conditions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{total_population, Compartment, NodeState};
use crate::scalar::Scalar;

/// Structured grid over `[0, extent_x]` or `[0, extent_x] x [0, extent_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    nodes_x: usize,
    nodes_y: usize,
    extent_x: T,
    extent_y: T,
    hx: T,
    hy: T,
    labels: Vec<u16>,
    region_names: Vec<String>,
}

impl<T: Scalar> Grid<T> {
    /// 1D grid with `nodes` points on `[0, extent]`.
    pub fn line(extent: T, nodes: usize) -> Result<Self> {
        Self::build(1, extent, nodes, T::zero(), 1)
    }

    /// 2D tensor-product grid.
    pub fn rect(extent_x: T, nodes_x: usize, extent_y: T, nodes_y: usize) -> Result<Self> {
        Self::build(2, extent_x, nodes_x, extent_y, nodes_y)
    }

    fn build(dim: usize, extent_x: T, nodes_x: usize, extent_y: T, nodes_y: usize) -> Result<Self> {
        let mut diags = Vec::new();
        if nodes_x < 3 {
            diags.push(crate::error::Diagnostic::new("grid.nodes_x", "need at least 3 nodes"));
        }
        if !(extent_x.is_finite() && extent_x > T::zero()) {
            diags.push(crate::error::Diagnostic::new("grid.extent_x", "must be positive and finite"));
        }
        if dim == 2 {
            if nodes_y < 3 {
                diags.push(crate::error::Diagnostic::new("grid.nodes_y", "need at least 3 nodes"));
            }
            if !(extent_y.is_finite() && extent_y > T::zero()) {
                diags.push(crate::error::Diagnostic::new("grid.extent_y", "must be positive and finite"));
            }
        }
        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }
        let hx = extent_x / T::lit((nodes_x - 1) as f64);
        let hy = if dim == 2 {
            extent_y / T::lit((nodes_y - 1) as f64)
        } else {
            T::zero()
        };
        let n = nodes_x * nodes_y;
        Ok(Self {
            dim,
            nodes_x,
            nodes_y,
            extent_x,
            extent_y,
            hx,
            hy,
            labels: vec![0; n],
            region_names: vec!["domain".to_string()],
        })
    }

    /// Attaches region labels; `names[label]` names each region.
    pub fn with_regions(mut self, labels: Vec<u16>, names: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= names.len()) {
            return Err(Error::InvalidParameter {
                name: "grid.regions".into(),
                reason: format!("label {bad} has no region name"),
            });
        }
        self.labels = labels;
        self.region_names = names;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nodes_x(&self) -> usize {
        self.nodes_x
    }
    pub fn nodes_y(&self) -> usize {
        self.nodes_y
    }
    pub fn extent_x(&self) -> T {
        self.extent_x
    }
    pub fn extent_y(&self) -> T {
        self.extent_y
    }
    /// Spacing along x.
    pub fn h(&self) -> T {
        self.hx
    }
    /// Spacing along y; zero for 1D grids.
    pub fn hy(&self) -> T {
        self.hy
    }
    pub fn len(&self) -> usize {
        self.nodes_x * self.nodes_y
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn region_label(&self, name: &str) -> Option<u16> {
        self.region_names
            .iter()
            .position(|n| n == name)
            .map(|p| p as u16)
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes_x + ix
    }

    #[inline]
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.nodes_x, node / self.nodes_x)
    }

    pub fn x(&self, ix: usize) -> T {
        self.hx * T::lit(ix as f64)
    }

    pub fn y(&self, iy: usize) -> T {
        self.hy * T::lit(iy as f64)
    }

    /// Trapezoid quadrature weight of a node.
    pub fn weight(&self, node: usize) -> T {
        let (ix, iy) = self.coords(node);
        let half = T::lit(0.5);
        let mut w = self.hx;
        if ix == 0 || ix + 1 == self.nodes_x {
            w = w * half;
        }
        if self.dim == 2 {
            let mut wy = self.hy;
            if iy == 0 || iy + 1 == self.nodes_y {
                wy = wy * half;
            }
            w = w * wy;
        }
        w
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.len()).map(|n| self.weight(n)).collect()
    }

    /// Largest eigenvalue magnitude bound of the unit-coefficient Laplacian
    /// (`4/hx^2 + 4/hy^2`).
    pub fn laplacian_spectral_bound(&self) -> T {
        let four = T::lit(4.0);
        let mut r = four / (self.hx * self.hx);
        if self.dim == 2 {
            r = r + four / (self.hy * self.hy);
        }
        r
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }
}

#[inline]
fn mirror(i: usize, delta: isize, n: usize) -> usize {
    let j = i as isize + delta;
    if j < 0 {
        1
    } else if j as usize >= n {
        n - 2
    } else {
        j as usize
    }
}

/// Laplacian of `u` at one node.
#[inline]
pub(crate) fn laplacian_at<T: Scalar>(u: &[T], grid: &Grid<T>, node: usize) -> T {
    let (ix, iy) = grid.coords(node);
    let nx = grid.nodes_x;
    let two = T::lit(2.0);
    let left = u[grid.index(mirror(ix, -1, nx), iy)];
    let right = u[grid.index(mirror(ix, 1, nx), iy)];
    let mut acc = (right - two * u[node] + left) / (grid.hx * grid.hx);
    if grid.dim == 2 {
        let ny = grid.nodes_y;
        let down = u[grid.index(ix, mirror(iy, -1, ny))];
        let up = u[grid.index(ix, mirror(iy, 1, ny))];
        acc = acc + (up - two * u[node] + down) / (grid.hy * grid.hy);
    }
    acc
}

/// Flux-form operator `div(coef grad u)` at one node, with face coefficients
/// taken as the arithmetic mean of the adjacent nodes.
#[inline]
pub(crate) fn flux_laplacian_at<T: Scalar>(u: &[T], coef: &[T], grid: &Grid<T>, node: usize) -> T {
    let (ix, iy) = grid.coords(node);
    let half = T::lit(0.5);
    let face = |other: usize| half * (coef[node] + coef[other]) * (u[other] - u[node]);
    let nx = grid.nodes_x;
    let l = grid.index(mirror(ix, -1, nx), iy);
    let r = grid.index(mirror(ix, 1, nx), iy);
    let mut acc = (face(r) + face(l)) / (grid.hx * grid.hx);
    if grid.dim == 2 {
        let ny = grid.nodes_y;
        let dn = grid.index(ix, mirror(iy, -1, ny));
        let up = grid.index(ix, mirror(iy, 1, ny));
        acc = acc + (face(up) + face(dn)) / (grid.hy * grid.hy);
    }
    acc
}

/// Discrete Laplacian with mirror-ghost (no-flux) boundaries.
pub fn laplacian<T: Scalar>(values: &[T], grid: &Grid<T>) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); values.len()];
    laplacian_into(values, grid, &mut out)?;
    Ok(out)
}

pub fn laplacian_into<T: Scalar>(values: &[T], grid: &Grid<T>, out: &mut [T]) -> Result<()> {
    grid.check_len(values.len())?;
    grid.check_len(out.len())?;
    for (node, o) in out.iter_mut().enumerate() {
        *o = laplacian_at(values, grid, node);
    }
    Ok(())
}

/// Trapezoid-rule integral of a nodal array (boundary nodes half-weighted).
pub fn discrete_integral<T: Scalar>(values: &[T], grid: &Grid<T>) -> Result<T> {
    grid.check_len(values.len())?;
    Ok(values
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (n, &v)| acc + grid.weight(n) * v))
}

/// Trapezoid integral restricted to the nodes carrying `label`. The weights
/// are the global ones, so region integrals sum to the domain integral.
pub fn region_integral<T: Scalar>(values: &[T], grid: &Grid<T>, label: u16) -> Result<T> {
    grid.check_len(values.len())?;
    Ok(values
        .iter()
        .enumerate()
        .filter(|(n, _)| grid.labels[*n] == label)
        .fold(T::zero(), |acc, (n, &v)| acc + grid.weight(n) * v))
}

/// How the `N * nu` diffusion coefficient enters the spatial operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionForm {
    /// `N_i * nu * (u[i+1] - 2u[i] + u[i-1]) / h^2`, N sampled at the node.
    #[default]
    Pointwise,
    /// `nu * div(N grad u)` in flux form; conserves the weighted total
    /// exactly for any N.
    Conservative,
}

/// Options for evaluating the diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMode<T> {
    pub form: DiffusionForm,
    /// Holds N at this constant instead of the node total (verification only).
    pub frozen_n: Option<T>,
}

impl<T> Default for DiffusionMode<T> {
    fn default() -> Self {
        Self {
            form: DiffusionForm::Pointwise,
            frozen_n: None,
        }
    }
}

/// Per-node compartment densities over a grid.
///
/// Storage is compartment-major: all nodes of S, then all nodes of Q, and
/// so on through the two ledgers.
#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentField<T> {
    grid: Arc<Grid<T>>,
    data: Vec<T>,
}

impl<T: Scalar> CompartmentField<T> {
    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len() * Compartment::COUNT;
        Self {
            grid,
            data: vec![T::zero(); n],
        }
    }

    pub fn uniform(grid: Arc<Grid<T>>, state: NodeState<T>) -> Self {
        let mut f = Self::zeros(grid);
        for node in 0..f.len() {
            f.set_node(node, &state);
        }
        f
    }

    pub fn from_nodes(grid: Arc<Grid<T>>, nodes: &[NodeState<T>]) -> Result<Self> {
        grid.check_len(nodes.len())?;
        let mut f = Self::zeros(grid);
        for (i, s) in nodes.iter().enumerate() {
            f.set_node(i, s);
        }
        Ok(f)
    }

    /// Wraps a flat compartment-major vector.
    pub fn from_vec(grid: Arc<Grid<T>>, data: Vec<T>) -> Result<Self> {
        let expected = grid.len() * Compartment::COUNT;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn compartment(&self, c: Compartment) -> &[T] {
        let n = self.len();
        &self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn compartment_mut(&mut self, c: Compartment) -> &mut [T] {
        let n = self.len();
        &mut self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn node(&self, node: usize) -> NodeState<T> {
        node_from_flat(&self.data, self.len(), node)
    }

    pub fn set_node(&mut self, node: usize, state: &NodeState<T>) {
        let n = self.len();
        for (c, v) in state.to_array().into_iter().enumerate() {
            self.data[c * n + node] = v;
        }
    }

    /// Live total `N` at every node.
    pub fn total_population(&self) -> Vec<T> {
        (0..self.len()).map(|i| total_population(&self.node(i))).collect()
    }

    /// First non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(Compartment, usize)> {
        let n = self.len();
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (Compartment::ALL[p / n], p % n))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            None => Ok(()),
            Some((c, node)) => Err(Error::NonFinite {
                field: c.name().to_string(),
                node: Some(node),
            }),
        }
    }

    /// Weighted integral of one compartment over the whole grid.
    pub fn integral(&self, c: Compartment) -> T {
        discrete_integral(self.compartment(c), &self.grid).expect("field matches its grid")
    }

    /// Integral of the seven live compartments.
    pub fn live_total(&self) -> T {
        Compartment::LIVE
            .iter()
            .fold(T::zero(), |acc, &c| acc + self.integral(c))
    }

    /// Integral of all nine slots.
    pub fn augmented_total(&self) -> T {
        Compartment::ALL
            .iter()
            .fold(T::zero(), |acc, &c| acc + self.integral(c))
    }

    /// Discrete L2 norm over the live compartments:
    /// `sqrt(sum_c integral(u_c^2))`.
    pub fn l2_norm(&self) -> T {
        let mut acc = T::zero();
        for c in Compartment::LIVE {
            let u = self.compartment(c);
            for (node, &v) in u.iter().enumerate() {
                acc = acc + self.grid.weight(node) * v * v;
            }
        }
        acc.sqrt()
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[inline]
pub(crate) fn node_from_flat<T: Scalar>(data: &[T], n: usize, node: usize) -> NodeState<T> {
    NodeState {
        s: data[node],
        q: data[n + node],
        e: data[2 * n + node],
        a: data[3 * n + node],
        i: data[4 * n + node],
        d: data[5 * n + node],
        r: data[6 * n + node],
        cum_death_i: data[7 * n + node],
        cum_death_d: data[8 * n + node],
    }
}

/// Diffusion contribution of one compartment:
/// `N_i * nu * laplacian(u)_i` (pointwise) or `nu * div(N grad u)_i`
/// (conservative), with N taken from the same field unless frozen.
pub fn diffusion_term<T: Scalar>(
    field: &CompartmentField<T>,
    compartment: Compartment,
    nu: T,
    grid: &Grid<T>,
    mode: DiffusionMode<T>,
) -> Result<Vec<T>> {
    if !(nu >= T::zero()) {
        return Err(Error::InvalidParameter {
            name: "nu".into(),
            reason: format!("diffusivity must be nonnegative, got {nu}"),
        });
    }
    grid.check_len(field.len())?;
    let u = field.compartment(compartment);
    if nu == T::zero() {
        return Ok(vec![T::zero(); u.len()]);
    }
    let n_total = match mode.frozen_n {
        Some(n0) => vec![n0; u.len()],
        None => field.total_population(),
    };
    Ok((0..u.len())
        .map(|node| match mode.form {
            DiffusionForm::Pointwise => n_total[node] * nu * laplacian_at(u, grid, node),
            DiffusionForm::Conservative => nu * flux_laplacian_at(u, &n_total, grid, node),
        })
        .collect())
}
