//! Nearest-neighbour Hermitian operators on [`Grid`]s.
//!
//! Every operator here has the form
//! `(A x)_i = d_i x_i + sum_e [ f_e(i) x_{i+e} + conj(f_e(i-e)) x_{i-e} ]`,
//! which is Hermitian by construction.

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    sample_periodic_potential, vector_potential_field_centered, Boundary, Grid, LatticeConfig,
    ScalarField, SingleSitePotential,
};

pub type C64 = Complex64;

/// Largest dimension for which dense materialisation is allowed.
pub const DENSE_LIMIT: usize = 4096;

pub trait HermitianOperator: Sync {
    fn dimension(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[C64], y: &mut [C64]);

    /// True when every matrix element is real.
    fn is_real(&self) -> bool;

    fn to_dense(&self) -> Result<Array2<C64>> {
        let n = self.dimension();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge(n));
        }
        let mut dense = Array2::<C64>::zeros((n, n).f());
        let mut unit = vec![C64::new(0.0, 0.0); n];
        let mut column = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            unit[j] = C64::new(1.0, 0.0);
            self.apply(&unit, &mut column);
            unit[j] = C64::new(0.0, 0.0);
            for i in 0..n {
                dense[[i, j]] = column[i];
            }
        }
        Ok(dense)
    }
}

/// Dense Hermitian matrix, mainly for oracles and toy problems.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: Array2<C64>,
    real: bool,
}

impl DenseOperator {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidInput("dense operator must be square".into()));
        }
        let scale = matrix.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        for i in 0..n {
            for j in 0..=i {
                if (matrix[[i, j]] - matrix[[j, i]].conj()).norm() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("matrix is not Hermitian at ({i}, {j})")));
                }
            }
        }
        let real = matrix.iter().all(|z| z.im == 0.0);
        Ok(Self { matrix, real })
    }

    pub fn from_real(matrix: Array2<f64>) -> Result<Self> {
        Self::new(matrix.mapv(|v| C64::new(v, 0.0)))
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
}

impl HermitianOperator for DenseOperator {
    fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, row) in self.matrix.rows().into_iter().enumerate() {
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn is_real(&self) -> bool {
        self.real
    }

    fn to_dense(&self) -> Result<Array2<C64>> {
        let n = self.dimension();
        let mut dense = Array2::<C64>::zeros((n, n).f());
        dense.assign(&self.matrix);
        Ok(dense)
    }
}

/// Diagonal plus forward-link coefficients along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilOperator {
    grid: Grid,
    diagonal: Vec<f64>,
    /// `links[axis][node]` couples `node` to its forward neighbour along `axis`.
    /// On a Dirichlet grid the entry of the last node along the axis is unused.
    links: Vec<Vec<C64>>,
    real: bool,
}

impl StencilOperator {
    fn new(grid: Grid, diagonal: Vec<f64>, links: Vec<Vec<C64>>) -> Self {
        let mut op = Self {
            grid,
            diagonal,
            links,
            real: false,
        };
        let real = op.active_links().all(|(_, _, _, f)| f.im == 0.0);
        op.real = real;
        op
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Iterates `(axis, from, to, coefficient)` over every link present in the matrix.
    pub fn active_links(&self) -> impl Iterator<Item = (usize, usize, usize, C64)> + '_ {
        let grid = self.grid;
        let n = grid.points();
        (0..grid.dim()).flat_map(move |axis| {
            let stride = grid.stride(axis);
            self.links[axis].iter().enumerate().filter_map(move |(node, &f)| {
                let along = grid.axis_index(node, axis);
                if along + 1 < n {
                    Some((axis, node, node + stride, f))
                } else if grid.is_periodic() {
                    Some((axis, node, node - (n - 1) * stride, f))
                } else {
                    None
                }
            })
        })
    }

    /// Real symmetric dense copy in column-major order. Fails when the operator is complex.
    pub fn to_dense_real(&self) -> Result<Array2<f64>> {
        let n = self.dimension();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge(n));
        }
        if !self.real {
            return Err(Error::InvalidInput("operator has complex entries".into()));
        }
        let mut dense = Array2::<f64>::zeros((n, n).f());
        for (i, &d) in self.diagonal.iter().enumerate() {
            dense[[i, i]] = d;
        }
        for (_, from, to, f) in self.active_links() {
            dense[[from, to]] += f.re;
            dense[[to, from]] += f.re;
        }
        Ok(dense)
    }
}

impl HermitianOperator for StencilOperator {
    fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diagonal) {
            *yi = xi * d;
        }
        let n = self.grid.points();
        for axis in 0..self.grid.dim() {
            let stride = self.grid.stride(axis);
            let links = &self.links[axis];
            let block = stride * n;
            for base in (0..x.len()).step_by(block) {
                for along in 0..n {
                    let to_offset = if along + 1 < n {
                        stride
                    } else if self.grid.is_periodic() {
                        0usize.wrapping_sub((n - 1) * stride)
                    } else {
                        continue;
                    };
                    let start = base + along * stride;
                    for from in start..start + stride {
                        let to = from.wrapping_add(to_offset);
                        let f = links[from];
                        y[from] += f * x[to];
                        y[to] += f.conj() * x[from];
                    }
                }
            }
        }
    }

    fn is_real(&self) -> bool {
        self.real
    }

    fn to_dense(&self) -> Result<Array2<C64>> {
        let n = self.dimension();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge(n));
        }
        let mut dense = Array2::<C64>::zeros((n, n).f());
        for (i, &d) in self.diagonal.iter().enumerate() {
            dense[[i, i]] += C64::new(d, 0.0);
        }
        for (_, from, to, f) in self.active_links() {
            dense[[from, to]] += f;
            dense[[to, from]] += f.conj();
        }
        Ok(dense)
    }
}

/// Discretisation of the minimal coupling `(-i grad - b a)^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagneticScheme {
    /// `-Lap/2 + i b a.grad + b^2 a^2 / 2` with centred differences; polynomial in `b`.
    #[default]
    Expanded,
    /// Link phases `exp(-i b a_e h)`; exactly gauge covariant on the grid.
    Peierls,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MagneticOptions {
    pub scheme: MagneticScheme,
    /// Centre of the symmetric gauge.
    pub gauge_center: [f64; 3],
}

fn check_field(grid: &Grid, field: &ScalarField) -> Result<()> {
    if field.grid() != grid {
        return Err(Error::InvalidInput("potential was sampled on a different grid".into()));
    }
    Ok(())
}

/// `-Lap_h/2 + V`. Dirichlet walls sit half a cell beyond the outermost nodes, at
/// `+-half_width`, through an antisymmetric ghost value; this adds `1/(2h^2)` to the
/// diagonal per wall face and keeps the scheme second order.
fn kinetic(grid: &Grid, field: &ScalarField) -> (Vec<f64>, Vec<Vec<C64>>) {
    let h2 = grid.spacing() * grid.spacing();
    let n = grid.points();
    let walls = !grid.is_periodic();
    let diagonal = field
        .values()
        .iter()
        .enumerate()
        .map(|(node, v)| {
            let faces = if walls {
                (0..grid.dim())
                    .map(|axis| grid.axis_index(node, axis))
                    .filter(|&i| i == 0 || i == n - 1)
                    .count()
            } else {
                0
            };
            (grid.dim() as f64 + 0.5 * faces as f64) / h2 + v
        })
        .collect();
    let hop = C64::new(-0.5 / h2, 0.0);
    let links = vec![vec![hop; grid.node_count()]; grid.dim()];
    (diagonal, links)
}

/// `-Lap_h/2 + V` with Dirichlet walls.
pub fn hamiltonian_single_atom(grid: &Grid, field: &ScalarField) -> Result<StencilOperator> {
    hamiltonian_magnetic(grid, field, 0.0)
}

/// Magnetic Hamiltonian with the default (expanded) scheme and gauge centred at the origin.
///
/// The expanded form tracks the continuum expansion while `|b| * max|a| * h` is small.
pub fn hamiltonian_magnetic(grid: &Grid, field: &ScalarField, b: f64) -> Result<StencilOperator> {
    hamiltonian_magnetic_with(grid, field, b, &MagneticOptions::default())
}

pub fn hamiltonian_magnetic_with(
    grid: &Grid,
    field: &ScalarField,
    b: f64,
    options: &MagneticOptions,
) -> Result<StencilOperator> {
    if grid.boundary() != Boundary::Dirichlet {
        return Err(Error::InvalidInput("magnetic Hamiltonians need a Dirichlet grid".into()));
    }
    check_field(grid, field)?;
    let (mut diagonal, mut links) = kinetic(grid, field);
    if b != 0.0 {
        let h = grid.spacing();
        let potential = vector_potential_field_centered(grid, options.gauge_center);
        for (node, a) in potential.values().iter().enumerate() {
            match options.scheme {
                MagneticScheme::Expanded => {
                    diagonal[node] += 0.5 * b * b * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
                    for axis in 0..grid.dim() {
                        links[axis][node] += C64::new(0.0, b * a[axis] / (2.0 * h));
                    }
                }
                MagneticScheme::Peierls => {
                    // a_e does not vary along axis e, so the node value is the link midpoint value.
                    for axis in 0..grid.dim() {
                        links[axis][node] *= C64::from_polar(1.0, -b * a[axis] * h);
                    }
                }
            }
        }
    }
    Ok(StencilOperator::new(*grid, diagonal, links))
}

/// How the Bloch wavevector enters the fibre operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlochScheme {
    /// Quasi-periodic wrap links `exp(i k_e R)`; exactly periodic in `k`.
    #[default]
    Twisted,
    /// `-Lap/2 - i k.grad + |k|^2/2` on a periodic grid.
    Expanded,
}

#[derive(Debug, Clone)]
pub struct BlochOperator {
    pub operator: StencilOperator,
    /// Wavevector after folding into the zone.
    pub k: [f64; 3],
    /// Set when the requested wavevector was outside the zone.
    pub folded: bool,
}

/// Fibre operator `h_R(k)` of the periodic Hamiltonian on the cell `[-R/2, R/2)^d`.
pub fn bloch_hamiltonian(
    lattice: &LatticeConfig,
    site: &SingleSitePotential,
    k: [f64; 3],
    grid: &Grid,
) -> Result<BlochOperator> {
    bloch_hamiltonian_with(lattice, site, k, grid, BlochScheme::default())
}

pub fn bloch_hamiltonian_with(
    lattice: &LatticeConfig,
    site: &SingleSitePotential,
    k: [f64; 3],
    grid: &Grid,
    scheme: BlochScheme,
) -> Result<BlochOperator> {
    let cell = lattice.constant();
    if (grid.extent() - cell).abs() > 1e-12 * cell {
        return Err(Error::InvalidInput(format!(
            "cell grid spans {} but the lattice constant is {cell}",
            grid.extent()
        )));
    }
    let folded_k = lattice.fold(k);
    let folded = (0..grid.dim()).any(|axis| (folded_k[axis] - k[axis]).abs() > 1e-14 * (1.0 + k[axis].abs()));
    let torus = grid.with_boundary(Boundary::Periodic { k: folded_k });
    let field = sample_periodic_potential(site, lattice, &torus);
    let (mut diagonal, mut links) = kinetic(&torus, &field);
    let n = torus.points();
    match scheme {
        BlochScheme::Twisted => {
            for axis in 0..torus.dim() {
                let phase = C64::from_polar(1.0, folded_k[axis] * cell);
                for (node, link) in links[axis].iter_mut().enumerate() {
                    if torus.axis_index(node, axis) == n - 1 {
                        *link *= phase;
                    }
                }
            }
        }
        BlochScheme::Expanded => {
            let h = torus.spacing();
            let k2: f64 = folded_k[..torus.dim()].iter().map(|v| v * v).sum();
            for d in diagonal.iter_mut() {
                *d += 0.5 * k2;
            }
            for axis in 0..torus.dim() {
                let shift = C64::new(0.0, -folded_k[axis] / (2.0 * h));
                for link in links[axis].iter_mut() {
                    *link += shift;
                }
            }
        }
    }
    Ok(BlochOperator {
        operator: StencilOperator::new(torus, diagonal, links),
        k: folded_k,
        folded,
    })
}

/// Angular momentum, squared distance from the field axis and momentum components.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    /// `L3 = -i (x1 D2 - x2 D1)`.
    pub angular_momentum: StencilOperator,
    /// Multiplication by `x1^2 + x2^2`.
    pub perpendicular_r2: StencilOperator,
    /// `P_e = -i D_e`.
    pub momentum: Vec<StencilOperator>,
}

pub fn observables(grid: &Grid) -> Result<ObservableSet> {
    if grid.boundary() != Boundary::Dirichlet {
        return Err(Error::InvalidInput("observables are defined on Dirichlet grids".into()));
    }
    let count = grid.node_count();
    let h = grid.spacing();
    let zero = C64::new(0.0, 0.0);
    let dim = grid.dim();

    let mut l3_links = vec![vec![zero; count]; dim];
    for node in 0..count {
        let x = grid.position(node);
        l3_links[0][node] = C64::new(0.0, x[1] / (2.0 * h));
        l3_links[1][node] = C64::new(0.0, -x[0] / (2.0 * h));
    }
    let angular_momentum = StencilOperator::new(*grid, vec![0.0; count], l3_links);

    let r2 = grid.positions().map(|x| x[0] * x[0] + x[1] * x[1]).collect();
    let perpendicular_r2 = StencilOperator::new(*grid, r2, vec![vec![zero; count]; dim]);

    let momentum = (0..dim)
        .map(|axis| {
            let mut links = vec![vec![zero; count]; dim];
            links[axis] = vec![C64::new(0.0, -1.0 / (2.0 * h)); count];
            StencilOperator::new(*grid, vec![0.0; count], links)
        })
        .collect();

    Ok(ObservableSet {
        angular_momentum,
        perpendicular_r2,
        momentum,
    })
}

/// `max |<v, A w> - conj(<w, A v>)| / (|v| |w|)` over `pairs` random vector pairs.
pub fn hermiticity_defect(op: &dyn HermitianOperator, pairs: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = op.dimension();
    let mut random = || -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let mut worst = 0.0f64;
    let mut av = vec![C64::new(0.0, 0.0); n];
    let mut aw = vec![C64::new(0.0, 0.0); n];
    for _ in 0..pairs {
        let v = random();
        let w = random();
        op.apply(&v, &mut av);
        op.apply(&w, &mut aw);
        let vaw = crate::linalg::dot(&v, &aw);
        let wav = crate::linalg::dot(&w, &av);
        let scale = crate::linalg::norm(&v) * crate::linalg::norm(&w);
        worst = worst.max((vaw - wav.conj()).norm() / scale);
    }
    worst
}
