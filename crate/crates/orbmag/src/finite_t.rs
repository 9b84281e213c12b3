//! Perturbative level corrections and the Boltzmann-weighted moment and susceptibility of a
//! discrete level set. Orbital terms only; spin is not modelled.
//!
//! Field convention: the expansion parameter is `b = (q/c) B` and `kappa = (q/c)^2` carries the
//! conversion, so `E_j(b) = E_j + b E1_j + b^2 E2_j`.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{deflated_solve, SolveOptions, SpectralData};
use crate::error::{Error, Result};
use crate::linalg::{dot, project_out};
use crate::operators::{HermitianOperator, ObservableSet, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelData {
    pub energy: f64,
    pub first_order: f64,
    pub second_order: f64,
    pub label: usize,
}

impl LevelData {
    pub fn new(energy: f64, first_order: f64, second_order: f64, label: usize) -> Self {
        Self { energy, first_order, second_order, label }
    }
}

fn apply(op: &dyn HermitianOperator, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut y);
    y
}

/// Coefficients of `E_j(b)` for the simple level `level` (0-based):
/// `E1 = <Phi, L3 Phi>/2` and `E2 = <Phi, r_perp^2 Phi>/8 - <L3 Phi, R L3 Phi>/4`,
/// with `R` the reduced resolvent at `E`.
pub fn level_corrections(
    spectral: &SpectralData,
    level: usize,
    h: &dyn HermitianOperator,
    observables: &ObservableSet,
    opts: &SolveOptions,
) -> Result<LevelData> {
    if level >= spectral.len() {
        return Err(Error::InvalidInput(format!(
            "level {} requested from {} computed pairs",
            level + 1,
            spectral.len()
        )));
    }
    check_simple(spectral, level)?;
    let phi = &spectral.eigenvectors[level];
    let energy = spectral.eigenvalues[level];
    let l3_phi = apply(&observables.angular_momentum, phi);
    let first_order = 0.5 * dot(phi, &l3_phi).re;
    let r2 = dot(phi, &apply(&observables.perpendicular_r2, phi)).re;
    let mut rhs = l3_phi;
    project_out(phi, &mut rhs);
    let (psi, _) = deflated_solve(h, energy, phi, &rhs, opts)?;
    let form = dot(&rhs, &psi).re;
    Ok(LevelData::new(energy, first_order, 0.125 * r2 - 0.25 * form, level + 1))
}

fn check_simple(spectral: &SpectralData, level: usize) -> Result<()> {
    let threshold = spectral.degeneracy_threshold();
    let e = &spectral.eigenvalues;
    let neighbours = [level.checked_sub(1), (level + 1 < e.len()).then_some(level + 1)];
    for other in neighbours.into_iter().flatten() {
        let gap = (e[other] - e[level]).abs();
        if gap < threshold {
            let (first, second) = if other < level { (e[other], e[level]) } else { (e[level], e[other]) };
            return Err(Error::DegeneracyDetected { first, second, gap, threshold });
        }
    }
    Ok(())
}

/// Normalised Boltzmann weights `exp(-beta (E_j - E_min))`.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::InvalidInput("no levels given".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let lowest = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = energies.iter().map(|e| (-beta * (e - lowest)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `<M>(b) = -sum_j E_j'(b) w_j / sum_j w_j` with `w_j = exp(-beta E_j(b))` and the
/// derivative by a central difference of width `2 * step`.
pub fn boltzmann_moment(
    levels: impl Fn(f64) -> Vec<f64>,
    beta: f64,
    field: f64,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput("difference step must be positive".into()));
    }
    let at = levels(field);
    let up = levels(field + step);
    let down = levels(field - step);
    if up.len() != at.len() || down.len() != at.len() {
        return Err(Error::InvalidInput("level sampler changed the number of levels".into()));
    }
    let weights = boltzmann_weights(&at, beta)?;
    Ok(-weights
        .iter()
        .zip(up.iter().zip(&down))
        .map(|(w, (u, d))| w * (u - d) / (2.0 * step))
        .sum::<f64>())
}

/// `chi(beta) = sum_j (beta E1_j^2 - 2 E2_j) w_j / sum_j w_j`, the zero-field derivative of the
/// Boltzmann moment when the zero-field moment vanishes.
pub fn vanvleck_finite_t(levels: &[LevelData], beta: f64) -> Result<f64> {
    let energies: Vec<f64> = levels.iter().map(|l| l.energy).collect();
    let weights = boltzmann_weights(&energies, beta)?;
    Ok(levels
        .iter()
        .zip(&weights)
        .map(|(l, w)| w * (beta * l.first_order * l.first_order - 2.0 * l.second_order))
        .sum())
}

/// Zero-temperature limit keeping only the ground level.
pub fn ground_level_susceptibility(ground: &LevelData, beta: f64) -> f64 {
    beta * ground.first_order * ground.first_order - 2.0 * ground.second_order
}
