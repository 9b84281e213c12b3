//! Low-end eigenpairs, reduced-resolvent solves and complex-shift resolvent applications.

mod contour;
mod lanczos;
mod minres;

pub use contour::{ContourShape, ContourSpec};
pub use lanczos::lowest_eigenpairs;
pub use minres::{deflated_solve, resolvent_apply, MinresReport};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot};
use crate::operators::{HermitianOperator, C64, DENSE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    /// Budget of operator applications.
    pub max_iter: usize,
    pub seed: u64,
    /// Consecutive eigenvalues closer than `degeneracy_gap * max(|lambda_1|, 1e-300)` are flagged.
    pub degeneracy_gap: f64,
    /// Lanczos basis size before a restart; `0` picks a size from the requested count.
    pub krylov_dim: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            seed: 0x5eed,
            degeneracy_gap: 1e-6,
            krylov_dim: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.degeneracy_gap > 0.0) {
            return Err(Error::InvalidInput("degeneracy gap must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("iteration budget must be positive".into()));
        }
        Ok(())
    }

    /// Eigenvalues below `-edge_margin` count as bound states.
    pub fn edge_margin(&self) -> f64 {
        10.0 * self.tol
    }
}

/// Sorted eigenvalues with orthonormal eigenvectors and their residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
    pub count_negative: usize,
    pub degeneracy_gap: f64,
}

impl SpectralData {
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: Vec<Vec<C64>>,
        residuals: Vec<f64>,
        edge_margin: f64,
        degeneracy_gap: f64,
    ) -> Self {
        let count_negative = eigenvalues.iter().filter(|&&v| v < -edge_margin).count();
        Self {
            eigenvalues,
            eigenvectors,
            residuals,
            count_negative,
            degeneracy_gap,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    /// Absolute gap below which two consecutive eigenvalues are treated as degenerate.
    pub fn degeneracy_threshold(&self) -> f64 {
        let scale = self.eigenvalues.first().map_or(1.0, |v| v.abs()).max(1e-300);
        self.degeneracy_gap * scale
    }

    /// Index pairs `(i, i+1)` whose gap is below the degeneracy threshold.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        let threshold = self.degeneracy_threshold();
        self.eigenvalues
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] < threshold)
            .map(|(i, _)| (i, i + 1))
            .collect()
    }

    /// Fails unless the lowest `count` eigenvalues exist, are bound, and are simple
    /// (also against the next returned eigenvalue).
    pub fn require_simple_bound(&self, count: usize) -> Result<()> {
        if count > self.count_negative {
            return Err(Error::InsufficientBoundStates {
                requested: count,
                found: self.count_negative,
            });
        }
        let threshold = self.degeneracy_threshold();
        let upper = (count + 1).min(self.len());
        for i in 1..upper {
            let gap = self.eigenvalues[i] - self.eigenvalues[i - 1];
            if gap < threshold {
                return Err(Error::DegeneracyDetected {
                    first: self.eigenvalues[i - 1],
                    second: self.eigenvalues[i],
                    gap,
                    threshold,
                });
            }
        }
        Ok(())
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, u) in self.eigenvectors.iter().enumerate() {
            for (j, v) in self.eigenvectors.iter().enumerate().skip(i) {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(u, v) - expected).norm());
            }
        }
        worst
    }

    /// Keeps the lowest `count` pairs.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.len());
        Self::new(
            self.eigenvalues[..count].to_vec(),
            self.eigenvectors[..count].to_vec(),
            self.residuals[..count].to_vec(),
            0.0,
            self.degeneracy_gap,
        )
        .with_count_negative(self.count_negative.min(count))
    }

    fn with_count_negative(mut self, count: usize) -> Self {
        self.count_negative = count;
        self
    }
}

/// `||A v - lambda v||`.
pub fn residual_norm(op: &dyn HermitianOperator, lambda: f64, v: &[C64]) -> f64 {
    let mut av = vec![C64::new(0.0, 0.0); v.len()];
    op.apply(v, &mut av);
    av.iter()
        .zip(v)
        .map(|(a, x)| (a - x * lambda).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Rotates `v` so that its largest-modulus entry is real and positive.
pub(crate) fn fix_phase(v: &mut [C64]) {
    let pivot = v
        .iter()
        .enumerate()
        .fold((0usize, -1.0f64), |(bi, bm), (i, z)| {
            // Ties are broken toward the lower index; the tolerance keeps this stable under round-off.
            if z.norm() > bm * (1.0 + 1e-9) {
                (i, z.norm())
            } else {
                (bi, bm)
            }
        })
        .0;
    if let Some(&z) = v.get(pivot) {
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            linalg::scale(phase, v);
        }
    }
}

/// Full dense eigendecomposition.
#[derive(Debug, Clone)]
pub enum DenseVectors {
    Real(Array2<f64>),
    Complex(Array2<C64>),
}

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub eigenvalues: Array1<f64>,
    pub vectors: DenseVectors,
}

impl DenseSpectrum {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, j: usize) -> Vec<C64> {
        match &self.vectors {
            DenseVectors::Real(v) => v.column(j).iter().map(|&x| C64::new(x, 0.0)).collect(),
            DenseVectors::Complex(v) => v.column(j).to_vec(),
        }
    }
}

/// Dense diagonalisation with the real symmetric driver when the operator is real.
pub fn dense_decomposition(op: &dyn HermitianOperator) -> Result<DenseSpectrum> {
    let n = op.dimension();
    if n > DENSE_LIMIT {
        return Err(Error::DimensionTooLarge(n));
    }
    let dense = op.to_dense()?;
    if op.is_real() {
        let (eigenvalues, vectors) = linalg::eigh_real(dense.mapv(|z| z.re))?;
        Ok(DenseSpectrum {
            eigenvalues,
            vectors: DenseVectors::Real(vectors),
        })
    } else {
        let (eigenvalues, vectors) = linalg::eigh_complex(dense)?;
        Ok(DenseSpectrum {
            eigenvalues,
            vectors: DenseVectors::Complex(vectors),
        })
    }
}

/// Every eigenpair of a dense-materialisable operator.
pub fn dense_spectrum(op: &dyn HermitianOperator, opts: &SolveOptions) -> Result<SpectralData> {
    let full = dense_decomposition(op)?;
    let n = full.dimension();
    let mut vectors = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = full.vector(j);
        fix_phase(&mut v);
        residuals.push(residual_norm(op, full.eigenvalues[j], &v));
        vectors.push(v);
    }
    Ok(SpectralData::new(
        full.eigenvalues.to_vec(),
        vectors,
        residuals,
        opts.edge_margin(),
        opts.degeneracy_gap,
    ))
}

/// Lowest `count` pairs through the dense driver; used where the operator is small.
pub fn dense_lowest(op: &dyn HermitianOperator, count: usize, opts: &SolveOptions) -> Result<SpectralData> {
    if count == 0 {
        return Err(Error::InvalidInput("eigenpair count must be at least 1".into()));
    }
    let full = dense_decomposition(op)?;
    let count = count.min(full.dimension());
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for j in 0..count {
        let mut v = full.vector(j);
        fix_phase(&mut v);
        residuals.push(residual_norm(op, full.eigenvalues[j], &v));
        vectors.push(v);
    }
    Ok(SpectralData::new(
        full.eigenvalues.iter().take(count).copied().collect(),
        vectors,
        residuals,
        opts.edge_margin(),
        opts.degeneracy_gap,
    ))
}
