//! Bloch bands of the periodic operator, their edges and gaps, the integrated density of
//! states, and the approach of the bands to the atomic levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::eigensolve::{lowest_eigenpairs, SolveOptions};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::model::{Boundary, Grid, LatticeConfig, SingleSitePotential};
use crate::operators::bloch_hamiltonian;

pub const MIN_K_PER_AXIS: usize = 4;

/// Periodic grid on one cell `[-R/2, R/2)^dim` with spacing as close to `spacing` as an
/// integer number of points allows.
pub fn cell_grid(lattice: &LatticeConfig, dim: usize, spacing: f64) -> Result<Grid> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput("grid spacing must be positive".into()));
    }
    let points = (lattice.constant() / spacing).round() as usize;
    Grid::new(dim, 0.5 * lattice.constant(), points, Boundary::Periodic { k: [0.0; 3] })
}

/// Uniform half-open Brillouin grid: `k_j = (2 pi / R)(j / n - 1/2)` per axis, axis 0 slowest.
pub fn brillouin_grid(constant: f64, dim: usize, per_axis: usize) -> Vec<[f64; 3]> {
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|index| {
            let mut k = [0.0; 3];
            let mut rest = index;
            for axis in (0..dim).rev() {
                let j = rest % per_axis;
                rest /= per_axis;
                k[axis] = 2.0 * PI / constant * (j as f64 / per_axis as f64 - 0.5);
            }
            k
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub lattice_constant: f64,
    pub dim: usize,
    pub k_per_axis: usize,
    pub k_points: Vec<[f64; 3]>,
    /// `bands[i][l]` is the `l`-th eigenvalue (ascending) at `k_points[i]`.
    pub bands: Vec<Vec<f64>>,
    pub n_bands: usize,
}

impl BandStructure {
    pub fn cell_volume(&self) -> f64 {
        self.lattice_constant.powi(self.dim as i32)
    }

    /// Values of band `l` (0-based) over the k samples.
    pub fn band(&self, l: usize) -> impl Iterator<Item = f64> + '_ {
        self.bands.iter().map(move |row| row[l])
    }

    /// Sampled `(min, max)` of each band.
    pub fn edges(&self) -> Vec<(f64, f64)> {
        (0..self.n_bands)
            .map(|l| {
                self.band(l)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)))
            })
            .collect()
    }

    /// `max |E_l(k) - E_l(-k)|` over the samples.
    pub fn time_reversal_defect(&self) -> f64 {
        let n = self.k_per_axis;
        let mut worst = 0.0f64;
        for (index, row) in self.bands.iter().enumerate() {
            let mut partner = 0;
            let mut rest = index;
            let mut stride = 1;
            for _ in 0..self.dim {
                let j = rest % n;
                rest /= n;
                partner += ((n - j) % n) * stride;
                stride *= n;
            }
            for (a, b) in row.iter().zip(&self.bands[partner]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Lowest `n_bands` eigenvalues of the fibre operator at every sample of the Brillouin grid.
pub fn band_structure(
    lattice: &LatticeConfig,
    site: &SingleSitePotential,
    n_bands: usize,
    k_per_axis: usize,
    cell: &Grid,
    opts: &SolveOptions,
) -> Result<BandStructure> {
    if k_per_axis < MIN_K_PER_AXIS {
        return Err(Error::InvalidInput(format!("need at least {MIN_K_PER_AXIS} k samples per axis")));
    }
    if n_bands == 0 {
        return Err(Error::InvalidInput("need at least one band".into()));
    }
    let k_points = brillouin_grid(lattice.constant(), cell.dim(), k_per_axis);
    let bands = k_points
        .par_iter()
        .map(|&k| {
            let spectrum = bloch_hamiltonian(lattice, site, k, cell)
                .and_then(|fibre| lowest_eigenpairs(&fibre.operator, n_bands, opts));
            spectrum
                .map(|s| s.eigenvalues)
                .map_err(|e| e.context(format!("at k = ({:.6}, {:.6}, {:.6})", k[0], k[1], k[2])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandStructure {
        lattice_constant: lattice.constant(),
        dim: cell.dim(),
        k_per_axis,
        k_points,
        bands,
        n_bands,
    })
}

/// Doubles the k sampling until no sampled band edge moves by more than `edge_tol`, up to
/// `max_per_axis` samples per axis. The flag reports whether the tolerance was met.
#[allow(clippy::too_many_arguments)]
pub fn refined_band_structure(
    lattice: &LatticeConfig,
    site: &SingleSitePotential,
    n_bands: usize,
    k_per_axis: usize,
    max_per_axis: usize,
    edge_tol: f64,
    cell: &Grid,
    opts: &SolveOptions,
) -> Result<(BandStructure, bool)> {
    let mut current = band_structure(lattice, site, n_bands, k_per_axis, cell, opts)?;
    while current.k_per_axis * 2 <= max_per_axis {
        let finer = band_structure(lattice, site, n_bands, current.k_per_axis * 2, cell, opts)?;
        let movement = current
            .edges()
            .iter()
            .zip(finer.edges())
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max);
        current = finer;
        if movement < edge_tol {
            return Ok((current, true));
        }
    }
    Ok((current, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// 1-based index of the band below the gap.
    pub below: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Sampled extrema; the true band edges lie outside them.
    pub band_edges: Vec<(f64, f64)>,
    pub gaps: Vec<Gap>,
    /// `max_k |sqrt|E_l(k)| - sqrt|lambda_l||` for each band with an atomic partner.
    pub localization: Vec<f64>,
}

impl GapReport {
    /// Gap directly above band `n0` (1-based), if open.
    pub fn gap_above(&self, n0: usize) -> Option<Gap> {
        self.gaps.iter().copied().find(|g| g.below == n0)
    }

    /// Bands `1..=count` pairwise disjoint and disjoint from band `count + 1`.
    pub fn isolated(&self, count: usize) -> bool {
        count < self.band_edges.len() && (1..=count).all(|l| self.gap_above(l).is_some())
    }

    /// Each atomic level lies strictly inside the sampled interval of its band.
    pub fn contains_levels(&self, atomic: &[f64]) -> Vec<bool> {
        atomic
            .iter()
            .zip(&self.band_edges)
            .map(|(lambda, (lo, hi))| lo < lambda && lambda < hi)
            .collect()
    }
}

pub fn band_edges_and_gaps(bs: &BandStructure, atomic: &[f64]) -> GapReport {
    let band_edges = bs.edges();
    let gaps = band_edges
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].0 > w[0].1)
        .map(|(l, w)| Gap { below: l + 1, lower: w[0].1, upper: w[1].0 })
        .collect();
    let localization = atomic
        .iter()
        .take(bs.n_bands)
        .enumerate()
        .map(|(l, lambda)| {
            let target = lambda.abs().sqrt();
            bs.band(l).map(|e| (e.abs().sqrt() - target).abs()).fold(0.0, f64::max)
        })
        .collect();
    GapReport { band_edges, gaps, localization }
}

/// Integrated density of states per unit volume: the fraction of (band, k) samples at or below
/// `energy`, divided by the cell volume.
pub fn ids_from_bands(bs: &BandStructure, energy: f64) -> f64 {
    let count = bs.bands.iter().flatten().filter(|&&e| e <= energy).count();
    count as f64 / bs.k_points.len() as f64 / bs.cell_volume()
}

/// Fit of `ln(deviation)` against `R`.
pub fn localization_slope(constants: &[f64], deviations: &[f64]) -> Result<LinearFit> {
    if deviations.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidInput("localization deviations must be positive".into()));
    }
    let logs: Vec<f64> = deviations.iter().map(|d| d.ln()).collect();
    linear_fit(constants, &logs)
}
