//! MINRES for `(A - sigma) x = b` with Hermitian `A` and complex `sigma`, and the deflated
//! variant on the orthogonal complement of one eigenvector.

use super::SolveOptions;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, project_out};
use crate::operators::{HermitianOperator, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinresReport {
    pub iterations: usize,
    /// `||b - (A - sigma) x|| / ||b||`, recomputed explicitly at exit.
    pub relative_residual: f64,
}

/// Givens rotation `[[conj(c), conj(s)], [-s, c]]` zeroing a real subdiagonal entry.
#[derive(Clone, Copy)]
struct Rotation {
    c: C64,
    s: C64,
}

impl Rotation {
    const IDENTITY: Rotation = Rotation {
        c: C64 { re: 1.0, im: 0.0 },
        s: C64 { re: 0.0, im: 0.0 },
    };

    fn apply(&self, x: C64, y: C64) -> (C64, C64) {
        (self.c.conj() * x + self.s.conj() * y, -self.s * x + self.c * y)
    }
}

/// Core iteration. `apply` computes `A v`; `project` is applied to every Lanczos vector.
fn minres_core(
    dimension: usize,
    apply: &dyn Fn(&[C64], &mut [C64]),
    project: &dyn Fn(&mut [C64]),
    shift: C64,
    rhs: &[C64],
    opts: &SolveOptions,
) -> Result<(Vec<C64>, MinresReport)> {
    let zero = C64::new(0.0, 0.0);
    let mut x = vec![zero; dimension];
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok((x, MinresReport { iterations: 0, relative_residual: 0.0 }));
    }

    let mut v_prev = vec![zero; dimension];
    let mut v: Vec<C64> = rhs.iter().map(|z| z / rhs_norm).collect();
    let mut w_prev = vec![zero; dimension];
    let mut w_prev2 = vec![zero; dimension];
    let mut beta = 0.0f64;
    let mut rot_prev = Rotation::IDENTITY;
    let mut rot_prev2 = Rotation::IDENTITY;
    let mut phi = C64::new(rhs_norm, 0.0);
    let mut p = vec![zero; dimension];
    let target = opts.tol * rhs_norm;

    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        apply(&v, &mut p);
        project(&mut p);
        axpy(C64::new(-beta, 0.0), &v_prev, &mut p);
        let alpha = dot(&v, &p).re;
        axpy(C64::new(-alpha, 0.0), &v, &mut p);
        let beta_next = norm(&p);

        let (epsilon, delta_hat) = rot_prev2.apply(zero, C64::new(beta, 0.0));
        let (delta, gamma_bar) = rot_prev.apply(delta_hat, C64::new(alpha, 0.0) - shift);
        let rho = (gamma_bar.norm_sqr() + beta_next * beta_next).sqrt();
        if rho == 0.0 {
            return Err(Error::ConvergenceFailure("MINRES broke down on a singular shift".into()));
        }
        let rotation = Rotation {
            c: gamma_bar / rho,
            s: C64::new(beta_next / rho, 0.0),
        };

        let mut w = v.clone();
        axpy(-delta, &w_prev, &mut w);
        axpy(-epsilon, &w_prev2, &mut w);
        let inv_rho = C64::new(1.0 / rho, 0.0);
        for z in w.iter_mut() {
            *z *= inv_rho;
        }
        let tau = rotation.c.conj() * phi;
        axpy(tau, &w, &mut x);
        phi = -rotation.s * phi;

        w_prev2 = std::mem::replace(&mut w_prev, w);
        rot_prev2 = rot_prev;
        rot_prev = rotation;

        // A vanishing beta means the Krylov space is exhausted; the explicit residual decides.
        if phi.norm() <= target || beta_next <= 1e-14 * (alpha.abs() + beta) {
            break;
        }
        let mut next = p.clone();
        for z in next.iter_mut() {
            *z /= beta_next;
        }
        project(&mut next);
        v_prev = std::mem::replace(&mut v, next);
        beta = beta_next;
    }

    // Explicit residual.
    let mut ax = vec![zero; dimension];
    apply(&x, &mut ax);
    for (r, xi) in ax.iter_mut().zip(&x) {
        *r -= shift * xi;
    }
    project(&mut ax);
    let residual: f64 = ax.iter().zip(rhs).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>().sqrt();
    let relative_residual = residual / rhs_norm;
    if relative_residual > 10.0 * opts.tol {
        return Err(Error::ConvergenceFailure(format!(
            "MINRES reached relative residual {relative_residual:.3e} after {iterations} iterations"
        )));
    }
    Ok((x, MinresReport { iterations, relative_residual }))
}

/// Solves `(A - xi) psi = rhs`.
pub fn resolvent_apply(
    op: &dyn HermitianOperator,
    xi: C64,
    rhs: &[C64],
    opts: &SolveOptions,
) -> Result<(Vec<C64>, MinresReport)> {
    opts.validate()?;
    if rhs.len() != op.dimension() {
        return Err(Error::InvalidInput("right-hand side has the wrong length".into()));
    }
    minres_core(op.dimension(), &|x, y| op.apply(x, y), &|_| {}, xi, rhs, opts)
}

/// Solves `P (A - lambda) P psi = rhs` on the complement of the unit vector `phi`,
/// where `P` projects out `phi`. The result is orthogonal to `phi`.
pub fn deflated_solve(
    op: &dyn HermitianOperator,
    lambda: f64,
    phi: &[C64],
    rhs: &[C64],
    opts: &SolveOptions,
) -> Result<(Vec<C64>, MinresReport)> {
    opts.validate()?;
    let n = op.dimension();
    if rhs.len() != n || phi.len() != n {
        return Err(Error::InvalidInput("vector lengths do not match the operator".into()));
    }
    let overlap = dot(phi, rhs).norm();
    if overlap > 1e-10 * norm(rhs).max(1.0) {
        return Err(Error::NotOrthogonal { overlap });
    }
    let apply = |x: &[C64], y: &mut [C64]| {
        let mut projected = x.to_vec();
        project_out(phi, &mut projected);
        op.apply(&projected, y);
        axpy(C64::new(-lambda, 0.0), &projected, y);
    };
    let project = |x: &mut [C64]| {
        project_out(phi, x);
    };
    let mut clean = rhs.to_vec();
    project_out(phi, &mut clean);
    let (mut psi, report) = minres_core(n, &apply, &project, C64::new(0.0, 0.0), &clean, opts)?;
    project_out(phi, &mut psi);
    Ok((psi, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{dense_spectrum, lowest_eigenpairs};
    use crate::model::{bump_potential, Grid, ScalarField};
    use crate::operators::{hamiltonian_magnetic, hamiltonian_single_atom};

    fn test_operator(b: f64) -> crate::operators::StencilOperator {
        let grid = Grid::dirichlet(2, 5.0, 20).unwrap();
        let field = ScalarField::sample(grid, &bump_potential(10.0, 2.0).unwrap().with_aspect(0.7).unwrap());
        hamiltonian_magnetic(&grid, &field, b).unwrap()
    }

    fn opts() -> SolveOptions {
        SolveOptions { tol: 1e-13, ..Default::default() }
    }

    #[test]
    fn eigenvector_identity_below_spectrum() {
        let op = test_operator(0.0);
        let spec = lowest_eigenpairs(&op, 1, &SolveOptions::default()).unwrap();
        let xi = C64::new(spec.eigenvalues[0] - 1.5, 0.0);
        let (psi, _) = resolvent_apply(&op, xi, &spec.eigenvectors[0], &opts()).unwrap();
        let factor = 1.0 / (spec.eigenvalues[0] - xi.re);
        for (p, v) in psi.iter().zip(&spec.eigenvectors[0]) {
            assert!((p - v * factor).norm() < 1e-9);
        }
    }

    #[test]
    fn matches_dense_resolvent() {
        let op = test_operator(0.35);
        let dense = dense_spectrum(&op, &opts()).unwrap();
        let rhs: Vec<C64> = (0..op.dimension()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let xi = C64::new(-1.0, 0.4);
        let (psi, _) = resolvent_apply(&op, xi, &rhs, &opts()).unwrap();
        let mut exact = vec![C64::new(0.0, 0.0); rhs.len()];
        for (lambda, v) in dense.eigenvalues.iter().zip(&dense.eigenvectors) {
            axpy(dot(v, &rhs) / (lambda - xi), v, &mut exact);
        }
        let err: f64 = psi.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8 * norm(&exact));
    }

    #[test]
    fn singular_shift_fails() {
        let op = test_operator(0.0);
        let spec = lowest_eigenpairs(&op, 1, &SolveOptions::default()).unwrap();
        let rhs: Vec<C64> = (0..op.dimension()).map(|i| C64::new(1.0 + (i % 3) as f64, 0.0)).collect();
        let tight = SolveOptions { max_iter: 400, ..opts() };
        assert!(resolvent_apply(&op, C64::new(spec.eigenvalues[0], 0.0), &rhs, &tight).is_err());
    }

    #[test]
    fn deflated_matches_pseudo_inverse() {
        for b in [0.0, 0.3] {
            let op = test_operator(b);
            let dense = dense_spectrum(&op, &opts()).unwrap();
            for level in [0usize, 2] {
                let phi = &dense.eigenvectors[level];
                let lambda = dense.eigenvalues[level];
                let mut rhs: Vec<C64> = (0..op.dimension()).map(|i| C64::new((i as f64 * 0.7).cos(), 0.0)).collect();
                project_out(phi, &mut rhs);
                let (psi, _) = deflated_solve(&op, lambda, phi, &rhs, &opts()).unwrap();
                let mut exact = vec![C64::new(0.0, 0.0); rhs.len()];
                for (m, (lm, v)) in dense.eigenvalues.iter().zip(&dense.eigenvectors).enumerate() {
                    if m != level {
                        axpy(dot(v, &rhs) / (lm - lambda), v, &mut exact);
                    }
                }
                let err: f64 = psi.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 1e-8 * norm(&exact).max(1.0), "err {err}");
                assert!(dot(phi, &psi).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn deflated_edge_cases() {
        let grid = Grid::dirichlet(2, 5.0, 16).unwrap();
        let field = ScalarField::sample(grid, &bump_potential(10.0, 2.0).unwrap());
        let op = hamiltonian_single_atom(&grid, &field).unwrap();
        let spec = lowest_eigenpairs(&op, 1, &SolveOptions::default()).unwrap();
        let phi = &spec.eigenvectors[0];
        let zero = vec![C64::new(0.0, 0.0); phi.len()];
        let (psi, _) = deflated_solve(&op, spec.eigenvalues[0], phi, &zero, &opts()).unwrap();
        assert!(psi.iter().all(|z| z.norm() == 0.0));
        assert!(matches!(
            deflated_solve(&op, spec.eigenvalues[0], phi, phi, &opts()),
            Err(Error::NotOrthogonal { .. })
        ));
    }
}
