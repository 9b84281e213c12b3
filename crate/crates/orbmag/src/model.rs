//! Grids, single-site wells, periodic assembly and the symmetric-gauge vector potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the model. Mass and hbar are fixed at 1; `kappa` is (q/c)^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    kappa: f64,
}

impl PhysicalParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { kappa: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Dirichlet,
    /// Torus with Bloch wavevector `k` (only the first `dim` components are used).
    Periodic { k: [f64; 3] },
}

/// Uniform cell-centred grid on `[-half_width, half_width)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
    boundary: Boundary,
}

pub const MIN_POINTS: usize = 8;

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize, boundary: Boundary) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {dim}")));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_POINTS} points per axis, got {points}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self {
            dim,
            half_width,
            points,
            spacing: 2.0 * half_width / points as f64,
            boundary,
        })
    }

    pub fn dirichlet(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(dim, half_width, points, Boundary::Dirichlet)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic { .. })
    }

    /// Same grid with another boundary condition.
    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self { boundary, ..*self }
    }

    pub fn node_count(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    /// Side length of the domain.
    pub fn extent(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn volume(&self) -> f64 {
        self.extent().powi(self.dim as i32)
    }

    /// Coordinate of index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    /// Distance in the flat index between neighbours along `axis`. Axis 0 varies slowest.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Index of `node` along `axis`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.points
    }

    pub fn position(&self, node: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (axis, slot) in x.iter_mut().enumerate().take(self.dim) {
            *slot = self.coordinate(self.axis_index(node, axis));
        }
        x
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.node_count()).map(move |node| self.position(node))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `-depth * exp(1 - 1/(1 - s^2))`, smooth.
    Bump,
    /// `-depth * (1 - s^2)^2`, continuously differentiable.
    TruncatedWell,
}

/// Attractive compactly supported well. The scaled radius is
/// `s^2 = (dx/r)^2 + (dy/(r*aspect))^2 + (dz/r)^2`, so `aspect < 1` squeezes the
/// well along the second axis and breaks rotational symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSitePotential {
    kind: PotentialKind,
    depth: f64,
    radius: f64,
    aspect: f64,
    center: [f64; 3],
}

impl SingleSitePotential {
    pub fn new(kind: PotentialKind, depth: f64, radius: f64) -> Result<Self> {
        if !(depth >= 0.0) || !depth.is_finite() {
            return Err(Error::InvalidInput(format!("well depth must be non-negative, got {depth}")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("well radius must be positive, got {radius}")));
        }
        Ok(Self {
            kind,
            depth,
            radius,
            aspect: 1.0,
            center: [0.0; 3],
        })
    }

    pub fn with_aspect(mut self, aspect: f64) -> Result<Self> {
        if !(aspect > 0.0 && aspect <= 1.0) {
            return Err(Error::InvalidInput(format!("aspect must lie in (0, 1], got {aspect}")));
        }
        self.aspect = aspect;
        Ok(self)
    }

    pub fn centered_at(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Support radius: the well vanishes at distance `>= radius` from its centre.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn aspect(&self) -> f64 {
        self.aspect
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        let dx = (x[0] - self.center[0]) / self.radius;
        let dy = (x[1] - self.center[1]) / (self.radius * self.aspect);
        let dz = (x[2] - self.center[2]) / self.radius;
        let s2 = dx * dx + dy * dy + dz * dz;
        if s2 >= 1.0 {
            return 0.0;
        }
        match self.kind {
            PotentialKind::Bump => -self.depth * (1.0 - 1.0 / (1.0 - s2)).exp(),
            PotentialKind::TruncatedWell => -self.depth * (1.0 - s2) * (1.0 - s2),
        }
    }
}

/// Smooth bump well centred at the origin.
pub fn bump_potential(depth: f64, radius: f64) -> Result<SingleSitePotential> {
    SingleSitePotential::new(PotentialKind::Bump, depth, radius)
}

/// Square lattice `R Z^d` shifted by `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    constant: f64,
    copies: usize,
    origin: [f64; 3],
}

impl LatticeConfig {
    pub fn new(constant: f64, copies: usize, site: &SingleSitePotential) -> Result<Self> {
        if !(constant > 2.0 * site.radius()) {
            return Err(Error::InvalidInput(format!(
                "lattice constant {constant} must exceed twice the well radius {}",
                site.radius()
            )));
        }
        if copies == 0 {
            return Err(Error::InvalidInput("at least one periodic image per side is required".into()));
        }
        Ok(Self {
            constant,
            copies,
            origin: [0.0; 3],
        })
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn cell_volume(&self, dim: usize) -> f64 {
        self.constant.powi(dim as i32)
    }

    /// Wavevector folded into the half-open zone `[-pi/R, pi/R)` per axis.
    pub fn fold(&self, k: [f64; 3]) -> [f64; 3] {
        let period = 2.0 * std::f64::consts::PI / self.constant;
        k.map(|kk| {
            let shifted = kk + 0.5 * period;
            shifted - period * (shifted / period).floor() - 0.5 * period
        })
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.node_count()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self {
            values: grid.positions().map(f).collect(),
            grid,
        }
    }

    pub fn sample(grid: Grid, site: &SingleSitePotential) -> Self {
        Self::from_fn(grid, |x| site.value(x))
    }

    /// Isotropic harmonic trap `omega^2 (x1^2 + x2^2) / 2` in the field plane.
    pub fn harmonic(grid: Grid, omega: f64) -> Self {
        Self::from_fn(grid, |x| 0.5 * omega * omega * (x[0] * x[0] + x[1] * x[1]))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `sum_v u(x - origin - R v)` over images `v` in `[-copies, copies]^dim`.
pub fn sample_periodic_potential(
    site: &SingleSitePotential,
    lattice: &LatticeConfig,
    grid: &Grid,
) -> ScalarField {
    let dim = grid.dim();
    let span = 2 * lattice.copies() + 1;
    let images = span.pow(dim as u32);
    let offset = lattice.copies() as f64;
    ScalarField::from_fn(*grid, |x| {
        (0..images)
            .map(|image| {
                let mut shifted = x;
                let mut rest = image;
                for axis in 0..dim {
                    let v = (rest % span) as f64 - offset;
                    rest /= span;
                    shifted[axis] -= lattice.origin()[axis] + lattice.constant() * v;
                }
                site.value(shifted)
            })
            .sum()
    })
}

/// Per-node vector potential.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }
}

/// Symmetric gauge for a unit field along the third axis, `a(x) = (-x2, x1, 0)/2`.
pub fn vector_potential_field(grid: &Grid) -> VectorField {
    vector_potential_field_centered(grid, [0.0; 3])
}

/// Symmetric gauge about `center`, `a(x - center)`.
pub fn vector_potential_field_centered(grid: &Grid, center: [f64; 3]) -> VectorField {
    VectorField {
        grid: *grid,
        values: grid
            .positions()
            .map(|x| symmetric_gauge([x[0] - center[0], x[1] - center[1], x[2] - center[2]]))
            .collect(),
    }
}

pub fn symmetric_gauge(x: [f64; 3]) -> [f64; 3] {
    [-0.5 * x[1], 0.5 * x[0], 0.0]
}
