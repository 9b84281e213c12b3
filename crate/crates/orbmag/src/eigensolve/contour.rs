//! Closed contours in the complex plane and their quadrature rules.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operators::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ContourShape {
    Circle { center: f64, radius: f64 },
    /// Axis-aligned rectangle through `(lower, -half_height)` and `(upper, half_height)`.
    Rectangle { lower: f64, upper: f64, half_height: f64 },
}

/// Positively oriented contour with `nodes` quadrature points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub shape: ContourShape,
    pub nodes: usize,
    pub enclosed_hint: Option<usize>,
}

impl ContourSpec {
    pub fn circle(center: f64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("contour radius must be positive".into()));
        }
        Self::checked(ContourShape::Circle { center, radius }, nodes)
    }

    pub fn rectangle(lower: f64, upper: f64, half_height: f64, nodes: usize) -> Result<Self> {
        if !(upper > lower) || !(half_height > 0.0) {
            return Err(Error::InvalidInput("rectangle must have positive width and height".into()));
        }
        if !nodes.is_multiple_of(4) {
            return Err(Error::InvalidInput("rectangle node count must be a multiple of 4".into()));
        }
        Self::checked(ContourShape::Rectangle { lower, upper, half_height }, nodes)
    }

    fn checked(shape: ContourShape, nodes: usize) -> Result<Self> {
        if nodes < 4 || !nodes.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("need an even node count of at least 4, got {nodes}")));
        }
        Ok(Self { shape, nodes, enclosed_hint: None })
    }

    /// Circle around the lowest `count` of the sorted `eigenvalues`, centred at
    /// `(lambda_1 + lambda_count)/2` and reaching the midpoint of the gap above `lambda_count`.
    pub fn around_lowest(eigenvalues: &[f64], count: usize, nodes: usize) -> Result<Self> {
        if count == 0 || count >= eigenvalues.len() {
            return Err(Error::InvalidInput(format!(
                "need the eigenvalue above the enclosed set ({count} of {})",
                eigenvalues.len()
            )));
        }
        let center = 0.5 * (eigenvalues[0] + eigenvalues[count - 1]);
        let edge = 0.5 * (eigenvalues[count - 1] + eigenvalues[count]);
        let mut spec = Self::circle(center, edge - center, nodes)?;
        spec.enclosed_hint = Some(count);
        Ok(spec)
    }

    /// Points `xi_j` and weights `w_j` with `oint f(xi) dxi ~ sum_j w_j f(xi_j)`.
    /// The point set is symmetric under complex conjugation; the first half lies in the upper
    /// half-plane and point `j + nodes/2` is the conjugate of point `j`.
    pub fn quadrature(&self) -> Vec<(C64, C64)> {
        let half = self.nodes / 2;
        let upper: Vec<(C64, C64)> = match self.shape {
            ContourShape::Circle { center, radius } => (0..half)
                .map(|j| {
                    let angle = 2.0 * PI * (j as f64 + 0.5) / self.nodes as f64;
                    let unit = C64::from_polar(1.0, angle);
                    let xi = C64::new(center, 0.0) + unit * radius;
                    let weight = C64::new(0.0, 1.0) * unit * radius * (2.0 * PI / self.nodes as f64);
                    (xi, weight)
                })
                .collect(),
            ContourShape::Rectangle { lower, upper, half_height } => {
                let per_side = self.nodes / 4;
                let (gl_x, gl_w) = gauss_legendre(per_side);
                let mut points = Vec::with_capacity(half);
                // Right side upward from the axis, top side leftward, left side downward to the axis.
                for (x, w) in gl_x.iter().zip(&gl_w) {
                    let t = 0.5 * (x + 1.0);
                    points.push((C64::new(upper, t * half_height), C64::new(0.0, 0.5 * half_height * w)));
                }
                for (x, w) in gl_x.iter().zip(&gl_w) {
                    let t = 0.5 * (x + 1.0);
                    points.push((C64::new(upper - t * (upper - lower), half_height), C64::new(-0.5 * (upper - lower) * w, 0.0)));
                }
                for (x, w) in gl_x.iter().zip(&gl_w) {
                    let t = 0.5 * (x + 1.0);
                    points.push((C64::new(lower, half_height * (1.0 - t)), C64::new(0.0, -0.5 * half_height * w)));
                }
                points
            }
        };
        // Lower half: conjugate points, with weights conj(-w) since the orientation reverses.
        let lower: Vec<(C64, C64)> = upper.iter().map(|&(xi, w)| (xi.conj(), -w.conj())).collect();
        upper.into_iter().chain(lower).collect()
    }

    /// Counts the enclosed real eigenvalues, failing if any lies within `margin` of the contour.
    pub fn validate(&self, eigenvalues: &[f64], margin: f64) -> Result<usize> {
        let mut inside = 0;
        for &lambda in eigenvalues {
            let (distance, enclosed) = match self.shape {
                ContourShape::Circle { center, radius } => {
                    let d = (lambda - center).abs() - radius;
                    (d.abs(), d < 0.0)
                }
                ContourShape::Rectangle { lower, upper, .. } => {
                    let d = (lambda - lower).abs().min((lambda - upper).abs());
                    (d, lambda > lower && lambda < upper)
                }
            };
            if distance < margin {
                return Err(Error::NearSpectrum { re: lambda, im: 0.0, distance });
            }
            if enclosed {
                inside += 1;
            }
        }
        if let Some(hint) = self.enclosed_hint {
            if hint != inside {
                return Err(Error::InvalidInput(format!("contour encloses {inside} eigenvalues, expected {hint}")));
            }
        }
        Ok(inside)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn_minus = if n == 1 { 1.0 } else { p0 };
            derivative = n as f64 * (x * pn - pn_minus) / (x * x - 1.0);
            let step = pn / derivative;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contour_integral(spec: &ContourSpec, f: impl Fn(C64) -> C64) -> C64 {
        spec.quadrature().into_iter().map(|(xi, w)| w * f(xi)).sum()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cauchy_integrals() {
        let circle = ContourSpec::circle(-1.0, 0.5, 64).unwrap();
        let rect = ContourSpec::rectangle(-1.6, -0.4, 0.5, 128).unwrap();
        for spec in [circle, rect] {
            let inside = contour_integral(&spec, |xi| 1.0 / (C64::new(-1.1, 0.0) - xi));
            assert!((inside - C64::new(0.0, -2.0 * PI)).norm() < 1e-8, "{inside}");
            let outside = contour_integral(&spec, |xi| 1.0 / (C64::new(0.5, 0.0) - xi));
            assert!(outside.norm() < 1e-8);
        }
    }

    #[test]
    fn conjugate_layout() {
        let spec = ContourSpec::circle(0.0, 1.0, 8).unwrap();
        let q = spec.quadrature();
        for j in 0..4 {
            assert!(q[j].0.im > 0.0);
            assert_eq!(q[j + 4].0, q[j].0.conj());
        }
    }

    #[test]
    fn validation() {
        let spec = ContourSpec::around_lowest(&[-3.0, -2.0, -1.0], 2, 64).unwrap();
        assert_eq!(spec.validate(&[-3.0, -2.0, -1.0], 1e-9).unwrap(), 2);
        assert!(spec.validate(&[-1.5], 1e-9).is_err());
        assert!(ContourSpec::around_lowest(&[-3.0], 1, 64).is_err());
    }
}
