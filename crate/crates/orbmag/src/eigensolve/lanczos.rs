//! Thick-restart Lanczos with full reorthogonalisation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fix_phase, residual_norm, SolveOptions, SpectralData};
use crate::error::{Error, Result};
use crate::linalg::{self, axpy, dot, norm};
use crate::operators::{HermitianOperator, C64};

struct Basis {
    vectors: Vec<Vec<C64>>,
}

impl Basis {
    /// Two passes of classical Gram-Schmidt; returns the accumulated coefficients.
    fn orthogonalize(&self, w: &mut [C64]) -> Vec<C64> {
        let mut coefficients = vec![C64::new(0.0, 0.0); self.vectors.len()];
        for _ in 0..2 {
            for (c, v) in coefficients.iter_mut().zip(&self.vectors) {
                let overlap = dot(v, w);
                axpy(-overlap, v, w);
                *c += overlap;
            }
        }
        coefficients
    }

    fn combine(&self, weights: impl Iterator<Item = C64>) -> Vec<C64> {
        let n = self.vectors[0].len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (w, v) in weights.zip(&self.vectors) {
            if w != C64::new(0.0, 0.0) {
                axpy(w, v, &mut out);
            }
        }
        out
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    // Real start vectors keep every iterate real when the operator is real.
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.0)).collect()
}

/// Projected eigenproblem; real driver when the operator is real.
fn projected_eigen(t: &Array2<C64>, real: bool) -> Result<(Vec<f64>, Array2<C64>)> {
    let m = t.nrows();
    let herm = Array2::from_shape_fn((m, m), |(i, j)| 0.5 * (t[[i, j]] + t[[j, i]].conj()));
    if real {
        let (w, v) = linalg::eigh_real(herm.mapv(|z| z.re))?;
        Ok((w.to_vec(), v.mapv(|x| C64::new(x, 0.0))))
    } else {
        let (w, v) = linalg::eigh_complex(herm)?;
        Ok((w.to_vec(), v))
    }
}

/// The `count` smallest eigenpairs of `op`.
pub fn lowest_eigenpairs(op: &dyn HermitianOperator, count: usize, opts: &SolveOptions) -> Result<SpectralData> {
    opts.validate()?;
    let n = op.dimension();
    if count == 0 {
        return Err(Error::InvalidInput("eigenpair count must be at least 1".into()));
    }
    if count >= n {
        return Err(Error::InvalidInput(format!("requested {count} eigenpairs of a {n}-dimensional operator")));
    }
    let real = op.is_real();
    let mut m = if opts.krylov_dim > 0 { opts.krylov_dim } else { (2 * count + 30).max(48) };
    m = m.min(n).max(count + 2);
    let keep = (count + (m - count) / 2).min(m - 2).max(count);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = random_vector(&mut rng, n);
    let start_norm = norm(&start);
    linalg::scale(C64::new(1.0 / start_norm, 0.0), &mut start);

    let mut basis = Basis { vectors: vec![start] };
    let mut t = Array2::<C64>::zeros((m, m));
    let mut applications = 0usize;
    let mut w = vec![C64::new(0.0, 0.0); n];

    loop {
        // Extend the basis to m vectors.
        let mut beta = 0.0;
        while basis.vectors.len() <= m {
            let p = basis.vectors.len() - 1;
            op.apply(&basis.vectors[p], &mut w);
            applications += 1;
            let coefficients = basis.orthogonalize(&mut w);
            for (i, &c) in coefficients.iter().enumerate() {
                t[[i, p]] = c;
                t[[p, i]] = c.conj();
            }
            t[[p, p]] = C64::new(coefficients[p].re, 0.0);
            beta = norm(&w);
            if basis.vectors.len() == m {
                break;
            }
            let scale_ref = t[[p, p]].norm().max(1.0);
            if beta <= 1e-12 * scale_ref {
                // Invariant subspace: continue with a fresh direction decoupled from the basis.
                let mut fresh = random_vector(&mut rng, n);
                basis.orthogonalize(&mut fresh);
                let fresh_norm = norm(&fresh);
                linalg::scale(C64::new(1.0 / fresh_norm, 0.0), &mut fresh);
                basis.vectors.push(fresh);
                t[[p + 1, p]] = C64::new(0.0, 0.0);
                t[[p, p + 1]] = C64::new(0.0, 0.0);
            } else {
                let next: Vec<C64> = w.iter().map(|z| z / beta).collect();
                basis.vectors.push(next);
                t[[p + 1, p]] = C64::new(beta, 0.0);
                t[[p, p + 1]] = C64::new(beta, 0.0);
            }
            if applications > opts.max_iter {
                break;
            }
        }

        let (theta, s) = projected_eigen(&t, real)?;
        let last = m - 1;
        let estimate = |i: usize| beta * s[[last, i]].norm();
        let converged = (0..count).all(|i| estimate(i) <= opts.tol * theta[i].abs().max(1.0));
        if converged || m == n {
            let mut eigenvalues = Vec::with_capacity(count);
            let mut eigenvectors = Vec::with_capacity(count);
            let mut residuals = Vec::with_capacity(count);
            for i in 0..count {
                let mut y = basis.combine(s.column(i).iter().copied());
                let y_norm = norm(&y);
                linalg::scale(C64::new(1.0 / y_norm, 0.0), &mut y);
                if real {
                    for z in y.iter_mut() {
                        z.im = 0.0;
                    }
                }
                fix_phase(&mut y);
                let r = residual_norm(op, theta[i], &y);
                if r > opts.tol * theta[i].abs().max(1.0) * 10.0 {
                    return Err(Error::ConvergenceFailure(format!(
                        "Lanczos pair {i} has residual {r:.3e} after convergence was signalled"
                    )));
                }
                eigenvalues.push(theta[i]);
                eigenvectors.push(y);
                residuals.push(r);
            }
            return Ok(SpectralData::new(
                eigenvalues,
                eigenvectors,
                residuals,
                opts.edge_margin(),
                opts.degeneracy_gap,
            ));
        }
        if applications > opts.max_iter {
            return Err(Error::ConvergenceFailure(format!(
                "Lanczos did not converge {count} pairs within {} operator applications",
                opts.max_iter
            )));
        }

        // Restart from the lowest `keep` Ritz vectors plus the residual direction.
        let residual_direction: Vec<C64> = w.iter().map(|z| z / beta).collect();
        let mut kept: Vec<Vec<C64>> = (0..keep)
            .map(|i| basis.combine(s.column(i).iter().copied()))
            .collect();
        // Re-orthonormalise the Ritz vectors against round-off.
        let mut fresh = Basis { vectors: Vec::with_capacity(m + 1) };
        for y in kept.iter_mut() {
            fresh.orthogonalize(y);
            let y_norm = norm(y);
            linalg::scale(C64::new(1.0 / y_norm, 0.0), y);
            fresh.vectors.push(std::mem::take(y));
        }
        let mut r = residual_direction;
        fresh.orthogonalize(&mut r);
        let r_norm = norm(&r);
        linalg::scale(C64::new(1.0 / r_norm, 0.0), &mut r);
        fresh.vectors.push(r);
        basis = fresh;

        t.fill(C64::new(0.0, 0.0));
        for i in 0..keep {
            t[[i, i]] = C64::new(theta[i], 0.0);
            let coupling = s[[last, i]] * beta;
            t[[keep, i]] = coupling;
            t[[i, keep]] = coupling.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::dense_spectrum;
    use crate::model::{bump_potential, Grid, ScalarField};
    use crate::operators::{hamiltonian_magnetic, hamiltonian_single_atom};

    #[test]
    fn free_box_ratio() {
        let grid = Grid::dirichlet(2, 1.0, 48).unwrap();
        let op = hamiltonian_single_atom(&grid, &ScalarField::zeros(grid)).unwrap();
        let spec = lowest_eigenpairs(&op, 2, &SolveOptions::default()).unwrap();
        let ratio = spec.eigenvalues[0] / spec.eigenvalues[1];
        assert!((ratio - 0.4).abs() < 2e-3, "ratio {ratio}");
        let exact = std::f64::consts::PI.powi(2) / (2.0 * 4.0) * 2.0;
        assert!((spec.eigenvalues[0] - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn free_box_is_second_order() {
        let error = |points: usize| {
            let grid = Grid::dirichlet(2, 1.0, points).unwrap();
            let op = hamiltonian_single_atom(&grid, &ScalarField::zeros(grid)).unwrap();
            let spec = lowest_eigenpairs(&op, 1, &SolveOptions::default()).unwrap();
            (spec.eigenvalues[0] - std::f64::consts::PI.powi(2) / 4.0).abs()
        };
        let ratio = error(16) / error(32);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn matches_dense_on_shared_pairs() {
        let grid = Grid::dirichlet(2, 5.0, 32).unwrap();
        let field = ScalarField::sample(grid, &bump_potential(10.0, 2.0).unwrap().with_aspect(0.7).unwrap());
        for b in [0.0, 0.3] {
            let op = hamiltonian_magnetic(&grid, &field, b).unwrap();
            let opts = SolveOptions { tol: 1e-11, ..Default::default() };
            let lanczos = lowest_eigenpairs(&op, 4, &opts).unwrap();
            let dense = dense_spectrum(&op, &opts).unwrap();
            for i in 0..4 {
                assert!((lanczos.eigenvalues[i] - dense.eigenvalues[i]).abs() < 1e-8);
                let overlap = dot(&lanczos.eigenvectors[i], &dense.eigenvectors[i]).norm();
                assert!((overlap - 1.0).abs() < 1e-8);
            }
            assert!(lanczos.orthonormality_defect() < 1e-10);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let grid = Grid::dirichlet(2, 5.0, 24).unwrap();
        let field = ScalarField::sample(grid, &bump_potential(8.0, 2.0).unwrap());
        let op = hamiltonian_magnetic(&grid, &field, 0.2).unwrap();
        let opts = SolveOptions { seed: 42, ..Default::default() };
        let a = lowest_eigenpairs(&op, 3, &opts).unwrap();
        let b = lowest_eigenpairs(&op, 3, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_zero_rejected() {
        let grid = Grid::dirichlet(2, 1.0, 8).unwrap();
        let op = hamiltonian_single_atom(&grid, &ScalarField::zeros(grid)).unwrap();
        assert!(lowest_eigenpairs(&op, 0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn real_operators_give_real_vectors() {
        let grid = Grid::dirichlet(2, 5.0, 24).unwrap();
        let field = ScalarField::sample(grid, &bump_potential(8.0, 2.0).unwrap());
        let op = hamiltonian_single_atom(&grid, &field).unwrap();
        let spec = lowest_eigenpairs(&op, 3, &SolveOptions::default()).unwrap();
        assert!(spec.eigenvectors.iter().flatten().all(|z| z.im == 0.0));
    }
}
