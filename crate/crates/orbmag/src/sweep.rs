//! Sweeps over the lattice constant comparing the scaled crystal susceptibility with the
//! single-well value, and fits of the remainder's decay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{band_edges_and_gaps, band_structure, cell_grid};
use crate::eigensolve::SolveOptions;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::model::{sample_periodic_potential, Grid, LatticeConfig, PhysicalParams, ScalarField, SingleSitePotential};
use crate::operators::{hamiltonian_single_atom, MagneticOptions, MagneticScheme};
use crate::susceptibility::{bound_spectrum, level_curvatures, BFieldProbe};
use crate::thermo::{fermi_energy, finite_volume_susceptibility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lattice_constants: Vec<f64>,
    pub n0: usize,
    pub site: SingleSitePotential,
    pub dim: usize,
    /// Grid spacing shared by every cell, box and the single-well reference.
    pub spacing: f64,
    /// Half width of the single-well reference box.
    pub atomic_half_width: f64,
    /// Box side in units of the lattice constant.
    pub box_multiple: usize,
    pub k_per_axis: usize,
    pub beta_schedule: Vec<f64>,
    /// Inverse temperature of the finite-volume pressure.
    pub box_beta: f64,
    pub probe: BFieldProbe,
    pub params: PhysicalParams,
    pub solver: SolveOptions,
    /// Recompute the smallest lattice constant at half the spacing to set the noise floor.
    pub noise_floor: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lattice_constants.is_empty() {
            return Err(Error::InvalidInput("sweep needs at least one lattice constant".into()));
        }
        if self.lattice_constants.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("lattice constants must be strictly ascending".into()));
        }
        for &r in &self.lattice_constants {
            LatticeConfig::new(r, 1, &self.site)?;
        }
        if self.n0 == 0 {
            return Err(Error::InvalidInput("n0 must be at least 1".into()));
        }
        if !(1..=3).contains(&self.box_multiple) {
            return Err(Error::InvalidInput("box multiple must be 1, 2 or 3".into()));
        }
        if !(self.spacing > 0.0) || !(self.box_beta > 0.0) || self.beta_schedule.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidInput("spacing and inverse temperatures must be positive".into()));
        }
        self.probe.validate()?;
        self.solver.validate()
    }

    fn peierls(&self) -> MagneticOptions {
        MagneticOptions { scheme: MagneticScheme::Peierls, gauge_center: [0.0; 3] }
    }

    fn with_spacing(&self, spacing: f64) -> Self {
        Self { spacing, ..self.clone() }
    }
}

/// Single-well quantities the sweep compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicReference {
    pub eigenvalues: Vec<f64>,
    pub tau: usize,
    /// `-kappa sum_{l<=n0} d^2 lambda_l / db^2`.
    pub chi: f64,
    /// `(lambda_n0 + lambda_{n0+1})/2`, with `lambda_{tau+1}` read as 0.
    pub fermi_energy: f64,
}

pub fn atomic_reference(config: &SweepConfig) -> Result<AtomicReference> {
    let points = (2.0 * config.atomic_half_width / config.spacing).round() as usize;
    let grid = Grid::dirichlet(config.dim, config.atomic_half_width, points)?;
    let field = ScalarField::sample(grid, &config.site);
    let h = hamiltonian_single_atom(&grid, &field)?;
    let spectral = bound_spectrum(&h, config.n0, &config.solver)?;
    let tau = spectral.count_negative;
    if config.n0 > tau {
        return Err(Error::InsufficientBoundStates { requested: config.n0, found: tau });
    }
    let curvatures = level_curvatures(&grid, &field, config.n0, &config.probe, &config.peierls(), &config.solver)?;
    let chi = -config.params.kappa() * curvatures.iter().map(|c| c.value).sum::<f64>();
    let upper = if config.n0 < tau { spectral.eigenvalues[config.n0] } else { 0.0 };
    Ok(AtomicReference {
        eigenvalues: spectral.eigenvalues[..tau].to_vec(),
        tau,
        chi,
        fermi_energy: 0.5 * (spectral.eigenvalues[config.n0 - 1] + upper),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lattice_constant: f64,
    pub cell_volume: f64,
    pub chi_bulk_scaled: f64,
    pub chi_atomic: f64,
    pub remainder: f64,
    pub fermi_energy: f64,
    pub fermi_remainder: f64,
    /// Per bound band, `max_k |sqrt|E_l(k)| - sqrt|lambda_l||`.
    pub band_localization: Vec<f64>,
    pub evenness_residual: f64,
}

/// Box of side `m R` holding `m^dim` wells, centred so that the wells sit symmetrically.
pub fn crystal_box(config: &SweepConfig, lattice_constant: f64) -> Result<(Grid, ScalarField)> {
    let m = config.box_multiple;
    let side = m as f64 * lattice_constant;
    let points = (side / config.spacing).round() as usize;
    let grid = Grid::dirichlet(config.dim, 0.5 * side, points)?;
    let shift = if m.is_multiple_of(2) { 0.5 * lattice_constant } else { 0.0 };
    let mut origin = [0.0; 3];
    origin[..config.dim].fill(shift);
    let lattice = LatticeConfig::new(lattice_constant, m, &config.site)?.with_origin(origin);
    let field = sample_periodic_potential(&config.site, &lattice, &grid);
    Ok((grid, field))
}

fn sweep_point(config: &SweepConfig, atomic: &AtomicReference, lattice_constant: f64) -> Result<SweepRow> {
    let lattice = LatticeConfig::new(lattice_constant, 1, &config.site)?;
    let cell = cell_grid(&lattice, config.dim, config.spacing)?;
    let n_bands = (atomic.tau + 1).max(config.n0 + 1);
    let bs = band_structure(&lattice, &config.site, n_bands, config.k_per_axis, &cell, &config.solver)?;
    let report = band_edges_and_gaps(&bs, &atomic.eigenvalues);
    let fermi = fermi_energy(&bs, config.n0, &config.beta_schedule)?;

    let (grid, field) = crystal_box(config, lattice_constant)?;
    let wells = config.box_multiple.pow(config.dim as u32);
    let occupied = wells * config.n0;
    let n_levels = wells * (config.n0 + 1) + 4;
    let fv = finite_volume_susceptibility(
        &grid,
        &field,
        config.box_beta,
        fermi.estimate,
        config.params.kappa(),
        &config.probe,
        n_levels,
        &config.peierls(),
        &config.solver,
    )?;
    let below = fv.spectrum.eigenvalues.iter().filter(|&&l| l < fermi.estimate).count();
    if below != occupied {
        return Err(Error::NotInsulating(format!(
            "the box has {below} levels below the Fermi energy {}, expected {occupied}",
            fermi.estimate
        )));
    }
    let cell_volume = lattice.cell_volume(config.dim);
    let chi_bulk_scaled = cell_volume * fv.chi;
    Ok(SweepRow {
        lattice_constant,
        cell_volume,
        chi_bulk_scaled,
        chi_atomic: atomic.chi,
        remainder: chi_bulk_scaled - atomic.chi,
        fermi_energy: fermi.estimate,
        fermi_remainder: (fermi.estimate - atomic.fermi_energy).abs(),
        band_localization: report.localization,
        evenness_residual: fv.evenness_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub atomic: AtomicReference,
    /// Three times the change of the smallest-R remainder under halving the spacing.
    pub noise_floor: Option<f64>,
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let atomic = atomic_reference(config)?;
    let rows = config
        .lattice_constants
        .par_iter()
        .map(|&r| sweep_point(config, &atomic, r).map_err(|e| e.context(format!("at R = {r}"))))
        .collect::<Result<Vec<_>>>()?;
    let noise_floor = if config.noise_floor {
        let fine = config.with_spacing(0.5 * config.spacing);
        let fine_atomic = atomic_reference(&fine)?;
        let smallest = config.lattice_constants[0];
        let fine_row = sweep_point(&fine, &fine_atomic, smallest)
            .map_err(|e| e.context(format!("refining R = {smallest}")))?;
        Some(3.0 * (fine_row.remainder - rows[0].remainder).abs())
    } else {
        None
    };
    Ok(SweepOutcome { rows, atomic, noise_floor })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    pub c: f64,
    pub alpha: f64,
    /// Coefficient of determination of `ln|remainder|` against `-c R^alpha + const`.
    pub r_squared: f64,
    pub intercept: f64,
    pub rows_used: usize,
}

/// Default exponents tried by the remainder fit.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=30).map(|i| 0.05 * i as f64).collect()
}

/// Least-squares fit of `ln|remainder|` against `R^alpha` for each `alpha`, keeping the best.
/// Rows whose remainder is not above `noise_floor` are left out.
pub fn fit_exponential_remainder(rows: &[SweepRow], alpha_grid: &[f64], noise_floor: f64) -> Result<RemainderFit> {
    let usable: Vec<&SweepRow> = rows.iter().filter(|r| r.remainder.abs() > noise_floor).collect();
    if usable.len() < 4 {
        return Err(Error::NoiseFloor(format!(
            "{} of {} remainders exceed the floor {noise_floor:.3e}; four are needed",
            usable.len(),
            rows.len()
        )));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidInput("alpha grid must hold positive exponents".into()));
    }
    let logs: Vec<f64> = usable.iter().map(|r| r.remainder.abs().ln()).collect();
    let mut best: Option<RemainderFit> = None;
    for &alpha in alpha_grid {
        let x: Vec<f64> = usable.iter().map(|r| r.lattice_constant.powf(alpha)).collect();
        let fit = linear_fit(&x, &logs)?;
        if best.as_ref().is_none_or(|b| fit.r_squared > b.r_squared) {
            best = Some(RemainderFit {
                c: -fit.slope,
                alpha,
                r_squared: fit.r_squared,
                intercept: fit.intercept,
                rows_used: usable.len(),
            });
        }
    }
    Ok(best.expect("nonempty alpha grid"))
}
