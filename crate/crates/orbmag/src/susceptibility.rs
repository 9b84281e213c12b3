//! Larmor and Van Vleck terms of a single well, the eigenvalue-curvature and Feshbach
//! cross-checks, and the contour (Riesz) representations.

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::eigensolve::{
    deflated_solve, dense_decomposition, lowest_eigenpairs, resolvent_apply, ContourSpec,
    DenseVectors, SolveOptions, SpectralData,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, project_out};
use crate::model::{vector_potential_field, Grid, PhysicalParams, ScalarField};
use crate::operators::{
    hamiltonian_magnetic_with, hamiltonian_single_atom, HermitianOperator, MagneticOptions,
    ObservableSet, StencilOperator, C64,
};

fn apply(op: &dyn HermitianOperator, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut y);
    y
}

/// A summed quantity together with its per-level terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSum {
    pub total: f64,
    pub per_level: Vec<f64>,
}

impl LevelSum {
    fn from_terms(per_level: Vec<f64>) -> Self {
        Self {
            total: per_level.iter().sum(),
            per_level,
        }
    }
}

fn check_occupation(spectral: &SpectralData, n0: usize) -> Result<()> {
    if n0 > 0 {
        spectral.require_simple_bound(n0)?;
    }
    Ok(())
}

/// `-kappa/4 sum_{l<=n0} <Phi_l, (x1^2 + x2^2) Phi_l>`, not divided by any cell volume.
pub fn larmor_term(
    spectral: &SpectralData,
    n0: usize,
    observables: &ObservableSet,
    params: &PhysicalParams,
) -> Result<LevelSum> {
    check_occupation(spectral, n0)?;
    let terms = spectral.eigenvectors[..n0]
        .iter()
        .map(|phi| -0.25 * params.kappa() * dot(phi, &apply(&observables.perpendicular_r2, phi)).re)
        .collect();
    Ok(LevelSum::from_terms(terms))
}

/// `<L3 Phi, (P(H - lambda)P)^{-1} L3 Phi>` for one level.
fn reduced_resolvent_form(
    h: &dyn HermitianOperator,
    lambda: f64,
    phi: &[C64],
    source: &[C64],
    opts: &SolveOptions,
) -> Result<f64> {
    let mut rhs = source.to_vec();
    project_out(phi, &mut rhs);
    let (psi, _) = deflated_solve(h, lambda, phi, &rhs, opts)?;
    Ok(dot(&rhs, &psi).re)
}

/// `kappa/2 sum_{l<=n0} <L3 Phi_l, (P_l(H - lambda_l)P_l)^{-1} L3 Phi_l>`.
pub fn vanvleck_term(
    spectral: &SpectralData,
    n0: usize,
    h: &dyn HermitianOperator,
    observables: &ObservableSet,
    params: &PhysicalParams,
    opts: &SolveOptions,
) -> Result<LevelSum> {
    check_occupation(spectral, n0)?;
    let mut terms = Vec::with_capacity(n0);
    for l in 0..n0 {
        let phi = &spectral.eigenvectors[l];
        let source = apply(&observables.angular_momentum, phi);
        let form = reduced_resolvent_form(h, spectral.eigenvalues[l], phi, &source, opts)?;
        let term = 0.5 * params.kappa() * form;
        terms.push(term);
    }
    // Excited levels couple to lower ones with negative denominators, so single terms may be
    // negative; the sum over the occupied levels may not.
    let sum = LevelSum::from_terms(terms);
    if sum.total < -10.0 * opts.tol * params.kappa() * sum.per_level.iter().map(|t| t.abs()).sum::<f64>().max(1.0) {
        return Err(Error::ConvergenceFailure(format!(
            "Van Vleck sum over {n0} levels is negative ({:.3e})",
            sum.total
        )));
    }
    Ok(sum)
}

/// Discrete (bound-to-bound) part of the Van Vleck term and the remainder attributed to the
/// grid's non-bound states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanVleckSplit {
    pub discrete: f64,
    pub continuum: f64,
    pub tau: usize,
}

/// `kappa/2 sum_{l<=n0} sum_{n0<m<=tau} |<Phi_m, L3 Phi_l>|^2 / (lambda_m - lambda_l)`;
/// the continuum part is `vanvleck_total` minus it.
pub fn vanvleck_split(
    spectral_full: &SpectralData,
    n0: usize,
    tau: usize,
    observables: &ObservableSet,
    params: &PhysicalParams,
    vanvleck_total: f64,
) -> Result<VanVleckSplit> {
    if tau > spectral_full.count_negative || n0 > tau {
        return Err(Error::InsufficientBoundStates {
            requested: tau.max(n0),
            found: spectral_full.count_negative,
        });
    }
    spectral_full.require_simple_bound(n0)?;
    let mut discrete = 0.0;
    for l in 0..n0 {
        let source = apply(&observables.angular_momentum, &spectral_full.eigenvectors[l]);
        for m in n0..tau {
            let element = dot(&spectral_full.eigenvectors[m], &source).norm_sqr();
            discrete += element / (spectral_full.eigenvalues[m] - spectral_full.eigenvalues[l]);
        }
    }
    discrete *= 0.5 * params.kappa();
    Ok(VanVleckSplit {
        discrete,
        continuum: vanvleck_total - discrete,
        tau,
    })
}

/// `d^2 lambda_l / db^2 (0) = -2 <A Phi, R A Phi> + <Phi, a^2 Phi>` with
/// `A = a . (-i grad)` built from the vector potential and the momentum operators.
pub fn feshbach_second_order(
    spectral: &SpectralData,
    level: usize,
    h: &dyn HermitianOperator,
    grid: &Grid,
    observables: &ObservableSet,
    opts: &SolveOptions,
) -> Result<f64> {
    check_occupation(spectral, level + 1)?;
    let phi = &spectral.eigenvectors[level];
    let potential = vector_potential_field(grid);
    let mut coupling = vec![C64::new(0.0, 0.0); phi.len()];
    for (axis, momentum) in observables.momentum.iter().enumerate() {
        let p_phi = apply(momentum, phi);
        for ((c, p), a) in coupling.iter_mut().zip(&p_phi).zip(potential.values()) {
            *c += p * a[axis];
        }
    }
    let a2: f64 = phi
        .iter()
        .zip(potential.values())
        .map(|(z, a)| z.norm_sqr() * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]))
        .sum();
    let form = reduced_resolvent_form(h, spectral.eigenvalues[level], phi, &coupling, opts)?;
    Ok(-2.0 * form + a2)
}

/// Finite-field probe: steps `step * 2^j`, `j < levels`, on both sides of zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BFieldProbe {
    pub step: f64,
    pub levels: usize,
}

pub const MIN_PROBE_STEP: f64 = 1e-4;

impl Default for BFieldProbe {
    fn default() -> Self {
        Self { step: 1e-2, levels: 2 }
    }
}

impl BFieldProbe {
    pub fn new(step: f64, levels: usize) -> Result<Self> {
        let probe = Self { step, levels };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step >= MIN_PROBE_STEP) || !self.step.is_finite() {
            return Err(Error::InvalidInput(format!(
                "probe step must be at least {MIN_PROBE_STEP}, got {}",
                self.step
            )));
        }
        if self.levels == 0 || self.levels > 4 {
            return Err(Error::InvalidInput("probe levels must be between 1 and 4".into()));
        }
        Ok(())
    }

    /// Positive probe values in increasing order.
    pub fn steps(&self) -> Vec<f64> {
        (0..self.levels).map(|j| self.step * f64::from(1u32 << j)).collect()
    }

    /// Richardson-extrapolated second derivative at zero from `f(0)` and `f(+-b_j)`.
    pub fn second_derivative(&self, at_zero: f64, plus: &[f64], minus: &[f64]) -> f64 {
        let steps = self.steps();
        let mut table: Vec<f64> = steps
            .iter()
            .zip(plus.iter().zip(minus))
            .map(|(b, (p, m))| (p - 2.0 * at_zero + m) / (b * b))
            .collect();
        // Even error expansion in b with ratio 2 between steps.
        let mut factor = 4.0;
        while table.len() > 1 {
            table = table
                .windows(2)
                .map(|w| (factor * w[0] - w[1]) / (factor - 1.0))
                .collect();
            factor *= 4.0;
        }
        table[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub level: usize,
    pub value: f64,
    /// `max_j |lambda(b_j) - lambda(-b_j)|`.
    pub evenness_residual: f64,
    /// Plain second differences per probe step, before extrapolation.
    pub second_differences: Vec<f64>,
}

/// Curvatures at `b = 0` of the lowest `count` levels of `H(b)`.
pub fn level_curvatures(
    grid: &Grid,
    field: &ScalarField,
    count: usize,
    probe: &BFieldProbe,
    options: &MagneticOptions,
    opts: &SolveOptions,
) -> Result<Vec<CurvatureEstimate>> {
    probe.validate()?;
    let solve = |b: f64| -> Result<SpectralData> {
        let h = hamiltonian_magnetic_with(grid, field, b, options)?;
        let spectral = lowest_eigenpairs(&h, count + 1, opts)?;
        spectral.require_simple_bound(count)?;
        Ok(spectral)
    };
    let at_zero = solve(0.0)?;
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for sign in [1.0, -1.0] {
        let mut previous = at_zero.clone();
        for b in probe.steps() {
            let current = solve(sign * b)?;
            for level in 0..count {
                let overlap = dot(&previous.eigenvectors[level], &current.eigenvectors[level]).norm();
                if overlap < 0.9 {
                    return Err(Error::LevelTrackingLost {
                        level: level + 1,
                        b: sign * b,
                        overlap,
                    });
                }
            }
            if sign > 0.0 {
                plus.push(current.eigenvalues.clone());
            } else {
                minus.push(current.eigenvalues.clone());
            }
            previous = current;
        }
    }
    Ok((0..count)
        .map(|level| {
            let p: Vec<f64> = plus.iter().map(|e| e[level]).collect();
            let m: Vec<f64> = minus.iter().map(|e| e[level]).collect();
            let zero = at_zero.eigenvalues[level];
            CurvatureEstimate {
                level: level + 1,
                value: probe.second_derivative(zero, &p, &m),
                evenness_residual: p.iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
                second_differences: probe
                    .steps()
                    .iter()
                    .zip(p.iter().zip(&m))
                    .map(|(b, (a, c))| (a - 2.0 * zero + c) / (b * b))
                    .collect(),
            }
        })
        .collect())
}

/// Curvature of level `level` (1-based) with the default magnetic scheme.
pub fn eigenvalue_curvature(
    grid: &Grid,
    field: &ScalarField,
    level: usize,
    probe: &BFieldProbe,
    opts: &SolveOptions,
) -> Result<CurvatureEstimate> {
    if level == 0 {
        return Err(Error::InvalidInput("levels are numbered from 1".into()));
    }
    let mut all = level_curvatures(grid, field, level, probe, &MagneticOptions::default(), opts)?;
    Ok(all.swap_remove(level - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub l: usize,
    pub lambda_l: f64,
    pub larmor_l: f64,
    pub vv_l: f64,
    pub vv_discrete_l: f64,
    pub curvature_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityReport {
    pub n0: usize,
    pub tau: usize,
    pub kappa: f64,
    pub chi_larmor: f64,
    pub chi_vanvleck: f64,
    pub chi_vv_discrete: f64,
    pub chi_vv_continuum: f64,
    pub chi_total: f64,
    /// `-kappa sum_l d^2 lambda_l/db^2`, when a probe was run.
    pub chi_curvature: Option<f64>,
    pub evenness_residual: Option<f64>,
    pub per_level: Vec<LevelRow>,
    pub cell_volume: Option<f64>,
}

impl SusceptibilityReport {
    /// `|chi_total - chi_curvature| / |chi_total|`.
    pub fn identity_defect(&self) -> Option<f64> {
        self.chi_curvature
            .map(|c| (self.chi_total - c).abs() / self.chi_total.abs())
    }
}

/// Lowest eigenpairs containing every bound state plus at least one non-bound level.
pub fn bound_spectrum(h: &dyn HermitianOperator, minimum: usize, opts: &SolveOptions) -> Result<SpectralData> {
    let mut count = (minimum + 2).max(4);
    loop {
        let count_now = count.min(h.dimension() - 1);
        let spectral = lowest_eigenpairs(h, count_now, opts)?;
        if spectral.count_negative < spectral.len() || count_now == h.dimension() - 1 {
            return Ok(spectral);
        }
        count *= 2;
    }
}

/// Every quantity of the per-well decomposition for occupation `n0`.
pub fn atomic_report(
    grid: &Grid,
    field: &ScalarField,
    n0: usize,
    params: &PhysicalParams,
    probe: Option<&BFieldProbe>,
    opts: &SolveOptions,
) -> Result<SusceptibilityReport> {
    let h = hamiltonian_single_atom(grid, field)?;
    let spectral = bound_spectrum(&h, n0, opts)?;
    report_from_spectrum(grid, field, &h, &spectral, n0, params, probe, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn report_from_spectrum(
    grid: &Grid,
    field: &ScalarField,
    h: &StencilOperator,
    spectral: &SpectralData,
    n0: usize,
    params: &PhysicalParams,
    probe: Option<&BFieldProbe>,
    opts: &SolveOptions,
) -> Result<SusceptibilityReport> {
    let tau = spectral.count_negative;
    spectral.require_simple_bound(n0)?;
    let observables = crate::operators::observables(grid)?;
    let larmor = larmor_term(spectral, n0, &observables, params)?;
    let vanvleck = vanvleck_term(spectral, n0, h, &observables, params, opts)?;
    let split = vanvleck_split(spectral, n0, tau, &observables, params, vanvleck.total)?;

    let mut discrete_per_level = vec![0.0; n0];
    for (l, slot) in discrete_per_level.iter_mut().enumerate() {
        let source = apply(&observables.angular_momentum, &spectral.eigenvectors[l]);
        for m in n0..tau {
            let element = dot(&spectral.eigenvectors[m], &source).norm_sqr();
            *slot += 0.5 * params.kappa() * element / (spectral.eigenvalues[m] - spectral.eigenvalues[l]);
        }
    }

    let curvatures = match probe {
        Some(p) if n0 > 0 => Some(level_curvatures(grid, field, n0, p, &MagneticOptions::default(), opts)?),
        _ => None,
    };
    let per_level = (0..n0)
        .map(|l| LevelRow {
            l: l + 1,
            lambda_l: spectral.eigenvalues[l],
            larmor_l: larmor.per_level[l],
            vv_l: vanvleck.per_level[l],
            vv_discrete_l: discrete_per_level[l],
            curvature_l: curvatures.as_ref().map(|c| c[l].value),
        })
        .collect();
    let chi_curvature = curvatures
        .as_ref()
        .map(|c| -params.kappa() * c.iter().map(|e| e.value).sum::<f64>());
    let evenness_residual = curvatures
        .as_ref()
        .map(|c| c.iter().map(|e| e.evenness_residual).fold(0.0, f64::max));
    Ok(SusceptibilityReport {
        n0,
        tau,
        kappa: params.kappa(),
        chi_larmor: larmor.total,
        chi_vanvleck: vanvleck.total,
        chi_vv_discrete: split.discrete,
        chi_vv_continuum: split.continuum,
        chi_total: larmor.total + vanvleck.total,
        chi_curvature,
        evenness_residual,
        per_level,
        cell_volume: None,
    })
}

/// Van Vleck sum over every other state of a dense spectrum; an oracle for the deflated solve.
pub fn vanvleck_sum_over_states(
    h: &dyn HermitianOperator,
    n0: usize,
    observables: &ObservableSet,
    params: &PhysicalParams,
) -> Result<LevelSum> {
    let full = dense_decomposition(h)?;
    let n = full.dimension();
    let vectors: Vec<Vec<C64>> = (0..n).map(|j| full.vector(j)).collect();
    let mut terms = Vec::with_capacity(n0);
    for l in 0..n0 {
        let source = apply(&observables.angular_momentum, &vectors[l]);
        let mut term = 0.0;
        for m in 0..n {
            if m != l {
                term += dot(&vectors[m], &source).norm_sqr() / (full.eigenvalues[m] - full.eigenvalues[l]);
            }
        }
        terms.push(0.5 * params.kappa() * term);
    }
    Ok(LevelSum::from_terms(terms))
}

/// Weight `g(xi) = theta - w xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RieszWeight {
    pub theta: C64,
    pub linear: bool,
}

impl RieszWeight {
    /// `w = 0, theta = 1`: the trace counts enclosed eigenvalues.
    pub const RANK: RieszWeight = RieszWeight {
        theta: C64 { re: 1.0, im: 0.0 },
        linear: false,
    };
    /// `w = 1, theta = 0`: the trace is minus the enclosed eigenvalue sum.
    pub const NEGATIVE_SUM: RieszWeight = RieszWeight {
        theta: C64 { re: 0.0, im: 0.0 },
        linear: true,
    };

    pub fn at(&self, xi: C64) -> C64 {
        if self.linear {
            self.theta - xi
        } else {
            self.theta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceMethod {
    /// `Tr (H - xi)^{-1} = sum_j 1/(lambda_j - xi)` from a dense diagonalisation.
    Dense,
    /// Hutchinson estimator with Rademacher probes and one shifted solve per probe and node.
    Stochastic { probes: usize, seed: u64 },
}

/// `(i/2pi) oint g(xi) Tr (H - xi)^{-1} dxi` by the contour's quadrature rule.
///
/// `known_eigenvalues` is used to check that the contour keeps clear of the spectrum; the
/// dense method checks against the full spectrum instead.
pub fn riesz_trace(
    h: &dyn HermitianOperator,
    contour: &ContourSpec,
    weight: RieszWeight,
    method: TraceMethod,
    known_eigenvalues: &[f64],
    opts: &SolveOptions,
) -> Result<C64> {
    let margin = 10.0 * opts.tol;
    let quadrature = contour.quadrature();
    let prefactor = C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI));
    match method {
        TraceMethod::Dense => {
            let full = dense_decomposition(h)?;
            let eigenvalues = full.eigenvalues.to_vec();
            contour.validate(&eigenvalues, margin)?;
            let total: C64 = quadrature
                .iter()
                .map(|&(xi, w)| {
                    let trace: C64 = eigenvalues.iter().map(|&l| 1.0 / (C64::new(l, 0.0) - xi)).sum();
                    w * weight.at(xi) * trace
                })
                .sum();
            Ok(prefactor * total)
        }
        TraceMethod::Stochastic { probes, seed } => {
            contour.validate(known_eigenvalues, margin)?;
            if probes == 0 {
                return Err(Error::InvalidInput("need at least one probe vector".into()));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = h.dimension();
            let vectors: Vec<Vec<C64>> = (0..probes)
                .map(|_| (0..n).map(|_| C64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)).collect())
                .collect();
            let mut total = C64::new(0.0, 0.0);
            for &(xi, w) in &quadrature {
                let mut trace = C64::new(0.0, 0.0);
                for z in &vectors {
                    let (psi, _) = resolvent_apply(h, xi, z, opts)?;
                    trace += dot(z, &psi);
                }
                total += w * weight.at(xi) * trace / probes as f64;
            }
            Ok(prefactor * total)
        }
    }
}

/// Contour representation of the susceptibility and its vanishing companion trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTrace {
    /// `-kappa (i/pi) oint xi Tr{G [T1 T1 - T2]} dxi`.
    pub chi: f64,
    /// The same integral with the weight `xi` replaced by 1; zero in the continuum.
    pub null_trace: f64,
    pub enclosed: usize,
}

/// Centred difference along `axis` applied to the row index of a column-major matrix.
fn difference_rows(grid: &Grid, axis: usize, m: &Array2<f64>) -> Array2<f64> {
    let n = grid.points();
    let stride = grid.stride(axis);
    let scale = 1.0 / (2.0 * grid.spacing());
    let rows = m.nrows();
    let mut out = Array2::<f64>::zeros(m.raw_dim());
    for (mut out_col, col) in out.columns_mut().into_iter().zip(m.columns()) {
        for i in 0..rows {
            let along = grid.axis_index(i, axis);
            let forward = if along + 1 < n { col[i + stride] } else { 0.0 };
            let backward = if along > 0 { col[i - stride] } else { 0.0 };
            out_col[i] = (forward - backward) * scale;
        }
    }
    out
}

/// Dense evaluation of the kernel formula for a real Dirichlet Hamiltonian at zero field.
///
/// With `G = (H - xi)^{-1}` the kernels are
/// `T1[i,j] = a(x_i - x_j) . (i grad G)[i,j]` (gradient on the first index) and
/// `T2[i,j] = a(x_i - x_j)^2 G[i,j] / 2`.
pub fn contour_kernel_susceptibility(
    h: &StencilOperator,
    contour: &ContourSpec,
    params: &PhysicalParams,
    opts: &SolveOptions,
) -> Result<KernelTrace> {
    if !h.is_real() {
        return Err(Error::InvalidInput("the kernel formula is evaluated at zero field".into()));
    }
    let grid = *h.grid();
    let full = dense_decomposition(h)?;
    let enclosed = contour.validate(full.eigenvalues.as_slice().expect("contiguous"), 10.0 * opts.tol)?;
    let u = match &full.vectors {
        DenseVectors::Real(u) => u,
        DenseVectors::Complex(_) => unreachable!("real operators use the real driver"),
    };
    let ut = u.t();
    let positions: Vec<[f64; 3]> = grid.positions().collect();
    let xs = Array1::from_iter(positions.iter().map(|x| x[0]));
    let ys = Array1::from_iter(positions.iter().map(|x| x[1]));

    let mut chi_sum = 0.0;
    let mut null_sum = 0.0;
    // Real H: the integrand at conj(xi) is the conjugate, so each upper node stands for a pair
    // whose combined contribution is 2i Im(w g(xi) val).
    for &(xi, w) in contour.quadrature().iter().take(contour.nodes / 2) {
        let g: Vec<C64> = full.eigenvalues.iter().map(|&l| 1.0 / (C64::new(l, 0.0) - xi)).collect();
        let scaled_re = u * &Array1::from_iter(g.iter().map(|z| z.re));
        let scaled_im = u * &Array1::from_iter(g.iter().map(|z| z.im));
        let g_re = scaled_re.dot(&ut);
        let g_im = scaled_im.dot(&ut);

        let mut t1_re = Array2::<f64>::zeros(g_re.raw_dim());
        let mut t1_im = Array2::<f64>::zeros(g_re.raw_dim());
        for (axis, sign) in [(0usize, -1.0f64), (1usize, 1.0f64)] {
            // T1 += (i/2) * sign * (c_i - c_j) * (D G)[i,j], c = y for axis 0 and x for axis 1.
            let coords = if axis == 0 { &ys } else { &xs };
            let d_re = difference_rows(&grid, axis, &g_re);
            let d_im = difference_rows(&grid, axis, &g_im);
            Zip::indexed(&mut t1_re)
                .and(&mut t1_im)
                .and(&d_re)
                .and(&d_im)
                .for_each(|(i, j), tr, ti, &dr, &di| {
                    let factor = 0.5 * sign * (coords[i] - coords[j]);
                    *tr -= factor * di;
                    *ti += factor * dr;
                });
        }
        // P = G T1.
        let p_re = g_re.dot(&t1_re) - g_im.dot(&t1_im);
        let p_im = g_re.dot(&t1_im) + g_im.dot(&t1_re);
        let mut value = C64::new(0.0, 0.0);
        Zip::indexed(&p_re).and(&p_im).for_each(|(i, j), &pr, &pi| {
            value += C64::new(pr, pi) * C64::new(t1_re[[j, i]], t1_im[[j, i]]);
        });
        Zip::indexed(&g_re).and(&g_im).for_each(|(i, j), &gr, &gi| {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            let gij = C64::new(gr, gi);
            value -= 0.125 * (dx * dx + dy * dy) * gij * gij;
        });
        chi_sum += 2.0 * (w * xi * value).im;
        null_sum += 2.0 * (w * value).im;
    }
    // -kappa (i/pi) * (2i Im(...)) = (2 kappa / pi) Im(...); the factor 2 is already applied.
    let factor = params.kappa() / std::f64::consts::PI;
    Ok(KernelTrace {
        chi: factor * chi_sum,
        null_trace: factor * null_sum,
        enclosed,
    })
}
