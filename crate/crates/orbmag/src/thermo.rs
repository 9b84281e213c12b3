//! Grand-canonical quantities of the non-interacting gas: Fermi factors, bulk density from
//! bands, the chemical potential at fixed density and its zero-temperature limit, and the
//! finite-volume pressure and its field curvature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bands::{band_edges_and_gaps, BandStructure};
use crate::eigensolve::{dense_decomposition, lowest_eigenpairs, SolveOptions};
use crate::error::{Error, Result};
use crate::model::{Grid, ScalarField};
use crate::operators::{hamiltonian_magnetic_with, HermitianOperator, MagneticOptions, DENSE_LIMIT};
use crate::susceptibility::BFieldProbe;

pub use crate::finite_t::vanvleck_finite_t;

/// Largest occupation of the highest included band that `density` accepts.
pub const BAND_TAIL_TOL: f64 = 1e-10;
/// Largest estimated relative contribution of omitted levels to the box pressure.
pub const PRESSURE_TAIL_TOL: f64 = 1e-10;
/// Relative density residual required of the chemical-potential inversion.
pub const DENSITY_RESIDUAL_TOL: f64 = 1e-10;

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `e^{beta(mu - E)} / (1 + e^{beta(mu - E)})`.
pub fn fermi_dirac(beta: f64, mu: f64, energy: f64) -> f64 {
    let x = beta * (mu - energy);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1/(|Omega| |Omega*|)) sum_l int f(E_l(k)) dk` by the uniform k rule.
pub fn density(bs: &BandStructure, beta: f64, mu: f64) -> Result<f64> {
    check_beta(beta)?;
    let top = bs.n_bands - 1;
    let tail = bs.band(top).map(|e| fermi_dirac(beta, mu, e)).fold(0.0, f64::max);
    if tail > BAND_TAIL_TOL {
        return Err(Error::TailTooLarge(tail));
    }
    let occupied: f64 = bs.bands.iter().flatten().map(|&e| fermi_dirac(beta, mu, e)).sum();
    Ok(occupied / bs.k_points.len() as f64 / bs.cell_volume())
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + values.iter().map(|v| (v - peak).exp()).sum::<f64>().ln()
}

/// `ln(particles above band n0) - ln(holes in bands <= n0)`, increasing in `mu`; zero exactly
/// where the density equals `n0 / |Omega|`.
fn particle_hole_balance(bs: &BandStructure, n0: usize, beta: f64, mu: f64) -> f64 {
    let particles = log_sum_exp(
        bs.bands
            .iter()
            .flat_map(|row| row[n0..].iter())
            .map(|&e| -softplus(beta * (e - mu))),
    );
    let holes = log_sum_exp(
        bs.bands
            .iter()
            .flat_map(|row| row[..n0].iter())
            .map(|&e| -softplus(beta * (mu - e))),
    );
    particles - holes
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn expand_bracket(bs: &BandStructure, beta: f64, f: &impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let (lowest, highest) = bs
        .bands
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let mut pad = 1.0 + 1.0 / beta;
    for _ in 0..60 {
        let (lo, hi) = (lowest - pad, highest + pad);
        if f(lo) < 0.0 && f(hi) > 0.0 {
            return Ok((lo, hi));
        }
        pad *= 2.0;
    }
    Err(Error::BracketFailure)
}

/// Chemical potential with `density(mu) = rho0`.
///
/// For an integer filling of the sampled bands the root is taken on the logarithmic
/// particle-hole balance, which stays resolvable when the density is flat to machine
/// precision across a gap.
pub fn invert_chemical_potential(bs: &BandStructure, beta: f64, rho0: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(rho0 > 0.0) {
        return Err(Error::InvalidInput(format!("target density must be positive, got {rho0}")));
    }
    let filling = rho0 * bs.cell_volume();
    if filling >= bs.n_bands as f64 {
        return Err(Error::BracketFailure);
    }
    let n0 = filling.round() as usize;
    let mu = if (filling - n0 as f64).abs() < 1e-12 * filling && n0 >= 1 {
        let balance = |mu: f64| particle_hole_balance(bs, n0, beta, mu);
        let (lo, hi) = expand_bracket(bs, beta, &balance)?;
        bisect(lo, hi, balance)
    } else {
        let excess = |mu: f64| {
            let occupied: f64 = bs.bands.iter().flatten().map(|&e| fermi_dirac(beta, mu, e)).sum();
            occupied / bs.k_points.len() as f64 - filling
        };
        let (lo, hi) = expand_bracket(bs, beta, &excess)?;
        bisect(lo, hi, excess)
    };
    let residual = (density(bs, beta, mu)? - rho0).abs();
    if residual > DENSITY_RESIDUAL_TOL * rho0 {
        return Err(Error::ConvergenceFailure(format!(
            "density residual {residual:.3e} at mu = {mu}"
        )));
    }
    Ok(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermiEnergy {
    pub estimate: f64,
    pub gap_midpoint: f64,
    /// `|estimate - gap_midpoint|`.
    pub deviation: f64,
    /// `(beta, mu(beta))` along the schedule.
    pub schedule: Vec<(f64, f64)>,
    pub negative: bool,
}

/// Aitken's delta-squared extrapolation of the last three entries.
pub fn aitken(sequence: &[f64]) -> f64 {
    let [.., x0, x1, x2] = sequence else {
        return sequence.last().copied().unwrap_or(f64::NAN);
    };
    let d1 = x1 - x0;
    let d2 = x2 - x1;
    let denominator = d2 - d1;
    // Only extrapolate a contracting sequence.
    if denominator.abs() <= 1e-300 || d2.abs() >= d1.abs() {
        *x2
    } else {
        x2 - d2 * d2 / denominator
    }
}

/// Zero-temperature limit of the chemical potential at `n0` particles per cell.
pub fn fermi_energy(bs: &BandStructure, n0: usize, beta_schedule: &[f64]) -> Result<FermiEnergy> {
    if beta_schedule.is_empty() {
        return Err(Error::InvalidInput("empty beta schedule".into()));
    }
    if n0 == 0 || n0 >= bs.n_bands {
        return Err(Error::NotInsulating(format!(
            "filling {n0} needs the band above it among the {} computed",
            bs.n_bands
        )));
    }
    let report = band_edges_and_gaps(bs, &[]);
    let gap = report.gap_above(n0).ok_or_else(|| {
        let (_, top) = report.band_edges[n0 - 1];
        let (bottom, _) = report.band_edges[n0];
        Error::NotInsulating(format!("band {n0} reaches {top} above the next band's minimum {bottom}"))
    })?;
    let rho0 = n0 as f64 / bs.cell_volume();
    let schedule = beta_schedule
        .par_iter()
        .map(|&beta| invert_chemical_potential(bs, beta, rho0).map(|mu| (beta, mu)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = schedule.iter().map(|&(_, mu)| mu).collect();
    let estimate = aitken(&values);
    Ok(FermiEnergy {
        estimate,
        gap_midpoint: gap.midpoint(),
        deviation: (estimate - gap.midpoint()).abs(),
        schedule,
        negative: estimate < 0.0,
    })
}

/// `rho0 = n0 / |Omega|` is attained only by integer fillings of an open gap; a fractional
/// count of particles per cell puts the Fermi level inside a band.
pub fn require_integer_filling(particles_per_cell: f64) -> Result<usize> {
    let n0 = particles_per_cell.round();
    if (particles_per_cell - n0).abs() > 1e-12 || n0 < 1.0 {
        return Err(Error::NotInsulating(format!(
            "{particles_per_cell} particles per cell fill a band partially"
        )));
    }
    Ok(n0 as usize)
}

/// Eigenvalues of the Dirichlet box Hamiltonian, the field's minimum and the box volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Whether every eigenvalue of the discrete operator is included.
    pub complete: bool,
    pub potential_min: f64,
    pub volume: f64,
    pub dim: usize,
}

impl BoxSpectrum {
    /// Lowest `n_levels` eigenvalues; all of them when `n_levels` reaches the dimension.
    pub fn compute(h: &dyn HermitianOperator, grid: &Grid, field: &ScalarField, n_levels: usize, opts: &SolveOptions) -> Result<Self> {
        let n = h.dimension();
        let (eigenvalues, complete) = if n_levels + 1 >= n {
            if n > DENSE_LIMIT {
                return Err(Error::DimensionTooLarge(n));
            }
            (dense_decomposition(h)?.eigenvalues.to_vec(), true)
        } else {
            (lowest_eigenpairs(h, n_levels, opts)?.eigenvalues, false)
        };
        Ok(Self {
            eigenvalues,
            complete,
            potential_min: field.min().min(0.0),
            volume: grid.volume(),
            dim: grid.dim(),
        })
    }

    /// Weyl estimate of the pressure carried by the omitted levels; zero when complete.
    ///
    /// Uses `dN/dE` of the free continuum at `E - V_min`; the lattice density of states is
    /// larger near the top of the discrete spectrum, so this is an estimate, not a bound.
    pub fn tail_estimate(&self, beta: f64, mu: f64) -> f64 {
        if self.complete {
            return 0.0;
        }
        let top = *self.eigenvalues.last().expect("nonempty spectrum");
        let kinetic = (top - self.potential_min).max(0.0) + 0.5 * self.dim as f64 / beta;
        // dN/dE for -Lap/2 per unit volume: (2E)^{d/2 - 1} * d * omega_d / (2 pi)^d.
        let unit_ball = match self.dim {
            1 => 2.0,
            2 => PI,
            _ => 4.0 * PI / 3.0,
        };
        let d = self.dim as f64;
        let states_per_energy = d * unit_ball * (2.0 * kinetic).powf(0.5 * d - 1.0) / (2.0 * PI).powf(d);
        (beta * (mu - top)).exp() * states_per_energy / (beta * beta)
    }

    /// `(1/(beta |Lambda|)) sum_j ln(1 + e^{beta(mu - lambda_j)})`.
    pub fn pressure(&self, beta: f64, mu: f64) -> f64 {
        self.eigenvalues.iter().map(|&l| softplus(beta * (mu - l))).sum::<f64>() / (beta * self.volume)
    }

    /// `(1/|Lambda|) sum_j f(lambda_j)`, the mu-derivative of the pressure.
    pub fn density(&self, beta: f64, mu: f64) -> f64 {
        self.eigenvalues.iter().map(|&l| fermi_dirac(beta, mu, l)).sum::<f64>() / self.volume
    }

    /// Pressure, failing when the omitted levels may matter.
    pub fn checked_pressure(&self, beta: f64, mu: f64) -> Result<f64> {
        check_beta(beta)?;
        let pressure = self.pressure(beta, mu);
        let tail = self.tail_estimate(beta, mu);
        if tail > PRESSURE_TAIL_TOL * pressure.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::TailTooLarge(tail));
        }
        Ok(pressure)
    }
}

/// Box pressure of `H(b)` at chemical potential `mu`.
#[allow(clippy::too_many_arguments)]
pub fn finite_volume_pressure(
    grid: &Grid,
    field: &ScalarField,
    beta: f64,
    mu: f64,
    b: f64,
    n_levels: usize,
    magnetic: &MagneticOptions,
    opts: &SolveOptions,
) -> Result<f64> {
    let h = hamiltonian_magnetic_with(grid, field, b, magnetic)?;
    BoxSpectrum::compute(&h, grid, field, n_levels, opts)?.checked_pressure(beta, mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteVolumeSusceptibility {
    /// `kappa * d^2 P / db^2` at zero field.
    pub chi: f64,
    /// `max_j |P(b_j) - P(-b_j)|`.
    pub evenness_residual: f64,
    pub pressure_at_zero: f64,
    /// Zero-field box spectrum, for diagnostics.
    pub spectrum: BoxSpectrum,
}

#[allow(clippy::too_many_arguments)]
pub fn finite_volume_susceptibility(
    grid: &Grid,
    field: &ScalarField,
    beta: f64,
    mu: f64,
    kappa: f64,
    probe: &BFieldProbe,
    n_levels: usize,
    magnetic: &MagneticOptions,
    opts: &SolveOptions,
) -> Result<FiniteVolumeSusceptibility> {
    probe.validate()?;
    let steps = probe.steps();
    let fields: Vec<f64> = std::iter::once(0.0)
        .chain(steps.iter().copied())
        .chain(steps.iter().map(|b| -b))
        .collect();
    let spectra = fields
        .par_iter()
        .map(|&b| {
            let h = hamiltonian_magnetic_with(grid, field, b, magnetic)?;
            BoxSpectrum::compute(&h, grid, field, n_levels, opts).map_err(|e| e.context(format!("at b = {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pressures = spectra
        .iter()
        .map(|s| s.checked_pressure(beta, mu))
        .collect::<Result<Vec<_>>>()?;
    let levels = steps.len();
    let plus = &pressures[1..=levels];
    let minus = &pressures[levels + 1..];
    Ok(FiniteVolumeSusceptibility {
        chi: kappa * probe.second_derivative(pressures[0], plus, minus),
        evenness_residual: plus.iter().zip(minus).map(|(p, m)| (p - m).abs()).fold(0.0, f64::max),
        pressure_at_zero: pressures[0],
        spectrum: spectra.into_iter().next().expect("zero field first"),
    })
}

/// Textbook reference formulas, in the units where `kappa` absorbs the charge and mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReferences {
    /// `-n kappa <r^2> / 4`.
    pub langevin: f64,
    /// `-N kappa sum r^2 / 6`.
    pub pauli: f64,
    /// `N beta M^2 / 3`.
    pub curie: f64,
    /// `-d^2 F / dB^2` with `F = -(1/beta) ln sum_j exp(-N beta E_j(B))`.
    pub helmholtz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalInputs {
    pub density: f64,
    pub mean_r2: f64,
    pub particles: f64,
    pub moment: f64,
    pub beta: f64,
    pub r2_per_electron: Vec<f64>,
    pub kappa: f64,
}

/// `F(B)` for the level sampler.
pub fn helmholtz_free_energy(energies: &[f64], particles: f64, beta: f64) -> f64 {
    let exponents: Vec<f64> = energies.iter().map(|e| -particles * beta * e).collect();
    -log_sum_exp(exponents.into_iter()) / beta
}

pub fn classical_references(
    inputs: &ClassicalInputs,
    levels: impl Fn(f64) -> Vec<f64>,
    step: f64,
) -> Result<ClassicalReferences> {
    check_beta(inputs.beta)?;
    if [inputs.density, inputs.mean_r2, inputs.particles, inputs.kappa].iter().any(|v| *v < 0.0)
        || inputs.r2_per_electron.iter().any(|v| *v < 0.0)
    {
        return Err(Error::InvalidInput("classical reference inputs must be non-negative".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput("difference step must be positive".into()));
    }
    let free = |b: f64| helmholtz_free_energy(&levels(b), inputs.particles, inputs.beta);
    let second = (free(step) - 2.0 * free(0.0) + free(-step)) / (step * step);
    let sum_r2: f64 = inputs.r2_per_electron.iter().sum();
    Ok(ClassicalReferences {
        langevin: -inputs.density * inputs.kappa * inputs.mean_r2 / 4.0,
        pauli: -inputs.particles * inputs.kappa * sum_r2 / 6.0,
        curie: inputs.particles * inputs.beta * inputs.moment * inputs.moment / 3.0,
        helmholtz: -second,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermoTarget {
    ChemicalPotential(f64),
    Density(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoQuery {
    pub beta: f64,
    pub target: ThermoTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoResult {
    pub beta: f64,
    pub density: f64,
    pub mu_solution: f64,
}

/// Density at a given `mu`, or `mu` at a given density.
pub fn solve_query(bs: &BandStructure, query: &ThermoQuery) -> Result<ThermoResult> {
    let (mu, rho) = match query.target {
        ThermoTarget::ChemicalPotential(mu) => (mu, density(bs, query.beta, mu)?),
        ThermoTarget::Density(rho0) => {
            let mu = invert_chemical_potential(bs, query.beta, rho0)?;
            (mu, density(bs, query.beta, mu)?)
        }
    };
    Ok(ThermoResult { beta: query.beta, density: rho, mu_solution: mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::ids_from_bands;
    use crate::eigensolve::dense_spectrum;
    use crate::operators::hamiltonian_single_atom;
    use proptest::prelude::*;

    fn synthetic() -> BandStructure {
        // Two narrow bands and one far above, sampled at four k points in one dimension.
        BandStructure {
            lattice_constant: 2.0,
            dim: 1,
            k_per_axis: 4,
            k_points: (0..4).map(|i| [i as f64, 0.0, 0.0]).collect(),
            bands: vec![
                vec![-3.00, -1.20, 40.0],
                vec![-2.95, -1.10, 40.0],
                vec![-2.90, -1.00, 40.0],
                vec![-2.95, -1.10, 40.0],
            ],
            n_bands: 3,
        }
    }

    #[test]
    fn fermi_dirac_values() {
        assert_eq!(fermi_dirac(3.0, 1.0, 1.0), 0.5);
        assert!((fermi_dirac(1.0, 3f64.ln(), 0.0) - 0.75).abs() < 1e-15);
        let beta = 1e4;
        let value = fermi_dirac(beta, 0.0, 0.05);
        assert!(value <= (-beta * 0.05f64).exp() && value.is_finite());
        assert_eq!(fermi_dirac(1e300, 1.0, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn fermi_dirac_in_unit_interval(beta in 1e-3..1e6f64, mu in -10.0..10.0f64, e in -10.0..10.0f64) {
            let f = fermi_dirac(beta, mu, e);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!((f + fermi_dirac(beta, e, mu) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn density_increases(mu in -4.0..0.0f64, step in 0.01..1.0f64) {
            let bs = synthetic();
            prop_assert!(density(&bs, 5.0, mu + step).unwrap() > density(&bs, 5.0, mu).unwrap());
        }
    }

    #[test]
    fn density_limits() {
        let bs = synthetic();
        let gap_mid = 0.5 * (-2.90 + -1.20);
        assert!((density(&bs, 1e4, gap_mid).unwrap() - 0.5).abs() < 1e-12);
        assert!(density(&bs, 10.0, -20.0).unwrap() < 1e-12);
        assert!(matches!(density(&bs, 1.0, 39.0), Err(Error::TailTooLarge(_))));
        for mu in [-3.5, -2.92, -2.0, -1.05, -0.5] {
            assert!((density(&bs, 1e7, mu).unwrap() - ids_from_bands(&bs, mu)).abs() < 1e-9);
        }
    }

    #[test]
    fn inversion_pins_midpoint() {
        let bs = synthetic();
        let mid = 0.5 * (-2.90 + -1.20);
        let mut previous = f64::INFINITY;
        for beta in [100.0, 200.0, 400.0, 800.0] {
            let mu = invert_chemical_potential(&bs, beta, 0.5).unwrap();
            let distance = (mu - mid).abs();
            assert!(distance <= 0.5 * previous + 1e-15, "{beta}: {distance}");
            previous = distance;
        }
        let mu = invert_chemical_potential(&bs, 1e8, 0.5).unwrap();
        assert!((mu - mid).abs() < 1e-7);
        assert!(matches!(invert_chemical_potential(&bs, 1.0, 2.0), Err(Error::BracketFailure)));
    }

    #[test]
    fn fractional_filling_inverts() {
        let bs = synthetic();
        let mu = invert_chemical_potential(&bs, 50.0, 0.3).unwrap();
        assert!((density(&bs, 50.0, mu).unwrap() - 0.3).abs() < 1e-10 * 0.3);
    }

    #[test]
    fn fermi_energy_is_gap_midpoint() {
        let bs = synthetic();
        let fermi = fermi_energy(&bs, 1, &[1e5, 2e5, 4e5, 8e5]).unwrap();
        assert!(fermi.deviation < 1e-6 * 3.0, "{fermi:?}");
        assert!(fermi.negative);
        let mut overlapping = synthetic();
        overlapping.bands[0][1] = -3.5;
        overlapping.bands[0].sort_by(f64::total_cmp);
        assert!(matches!(fermi_energy(&overlapping, 1, &[1e5]), Err(Error::NotInsulating(_))));
        assert!(matches!(require_integer_filling(1.5), Err(Error::NotInsulating(_))));
    }

    #[test]
    fn aitken_removes_inverse_beta() {
        let values: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|b| -1.5 + 0.3 / b).collect();
        assert!((aitken(&values) + 1.5).abs() < 1e-14);
    }

    fn small_box() -> (Grid, ScalarField) {
        let grid = Grid::dirichlet(2, 3.0, 16).unwrap();
        let field = ScalarField::from_fn(grid, |x| -2.0 * (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp());
        (grid, field)
    }

    #[test]
    fn pressure_matches_dense_and_is_monotone() {
        let (grid, field) = small_box();
        let opts = SolveOptions::default();
        let magnetic = MagneticOptions::default();
        let h = hamiltonian_single_atom(&grid, &field).unwrap();
        let dense = dense_spectrum(&h, &opts).unwrap();
        let beta = 2.0;
        let mu = -0.5;
        let oracle: f64 = dense.eigenvalues.iter().map(|l| (1.0 + (beta * (mu - l)).exp()).ln()).sum::<f64>() / (beta * 36.0);
        let pressure = finite_volume_pressure(&grid, &field, beta, mu, 0.0, 256, &magnetic, &opts).unwrap();
        assert!((pressure - oracle).abs() < 1e-10 * oracle);
        let higher = finite_volume_pressure(&grid, &field, beta, mu + 0.1, 0.0, 256, &magnetic, &opts).unwrap();
        assert!(higher > pressure);
        let dilute = finite_volume_pressure(&grid, &field, beta, -60.0, 0.0, 256, &magnetic, &opts).unwrap();
        let z = (beta * -60.0f64).exp();
        let linear: f64 = dense.eigenvalues.iter().map(|l| (-beta * l).exp()).sum::<f64>() * z / (beta * 36.0);
        assert!((dilute - linear).abs() < 1e-6 * linear);
    }

    #[test]
    fn pressure_derivative_is_density() {
        let (grid, field) = small_box();
        let h = hamiltonian_single_atom(&grid, &field).unwrap();
        let spectrum = BoxSpectrum::compute(&h, &grid, &field, 256, &SolveOptions::default()).unwrap();
        let (beta, mu, step) = (3.0, -0.2, 1e-4);
        let derivative = (spectrum.pressure(beta, mu + step) - spectrum.pressure(beta, mu - step)) / (2.0 * step);
        let rho = spectrum.density(beta, mu);
        assert!((derivative - rho).abs() < 1e-6 * rho);
    }

    #[test]
    fn truncated_spectrum_reports_tail() {
        let (grid, field) = small_box();
        let h = hamiltonian_single_atom(&grid, &field).unwrap();
        let spectrum = BoxSpectrum::compute(&h, &grid, &field, 4, &SolveOptions::default()).unwrap();
        assert!(!spectrum.complete);
        assert!(matches!(spectrum.checked_pressure(0.5, 0.0), Err(Error::TailTooLarge(_))));
        assert!(spectrum.checked_pressure(1e3, spectrum.eigenvalues[1]).is_ok());
    }

    #[test]
    fn free_gas_is_diamagnetic() {
        let grid = Grid::dirichlet(2, 3.0, 16).unwrap();
        let field = ScalarField::zeros(grid);
        let opts = SolveOptions::default();
        let probe = BFieldProbe::new(0.05, 2).unwrap();
        let chi = finite_volume_susceptibility(&grid, &field, 2.0, 0.5, 1.0, &probe, 256, &MagneticOptions::default(), &opts).unwrap();
        assert!(chi.chi < 0.0, "{chi:?}");
        assert!(chi.evenness_residual <= 10.0 * opts.tol);
    }

    #[test]
    fn classical_formulas() {
        let inputs = ClassicalInputs {
            density: 3.0,
            mean_r2: 2.0,
            particles: 3.0,
            moment: 0.0,
            beta: 4.0,
            r2_per_electron: vec![2.0],
            kappa: 1.0,
        };
        let c = 0.35;
        let refs = classical_references(&inputs, |b| vec![-1.0 + c * b * b, 5.0 + c * b * b], 1e-3).unwrap();
        assert!((refs.pauli / refs.langevin - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(refs.curie, 0.0);
        assert!((refs.helmholtz + 2.0 * c * inputs.particles).abs() < 1e-6);
    }
}
