//! One-sided (Hestenes) Jacobi singular values for small dense complex
//! matrices.
//!
//! Columns are rotated pairwise until every pair is orthogonal to within
//! [`ROTATION_TOLERANCE`] relative to the column norms; the singular values are
//! then the column norms. The method keeps high relative accuracy on small
//! singular values, which the frame spectra need since they span many orders
//! of magnitude.

use num_complex::Complex64;
use thiserror::Error;

pub const MAX_SWEEPS: usize = 100;
pub const ROTATION_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvdError {
    #[error("one-sided Jacobi did not converge in {sweeps} sweeps (off-diagonal ratio {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix data has {len} entries, expected {rows}x{cols}")]
    Shape { len: usize, rows: usize, cols: usize },
}

/// Singular values of a row-major `rows x cols` matrix, sorted nonincreasing.
/// Exact zeros are kept; callers decide on rank truncation.
pub fn singular_values(data: &[Complex64], rows: usize, cols: usize) -> Result<Vec<f64>, SvdError> {
    if data.len() != rows * cols {
        return Err(SvdError::Shape {
            len: data.len(),
            rows,
            cols,
        });
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SvdError::NonFinite);
    }
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    // Orthogonalize the shorter side: columns of A, or columns of A^H.
    let mut columns: Vec<Vec<Complex64>> = if cols <= rows {
        (0..cols)
            .map(|c| (0..rows).map(|r| data[r * cols + c]).collect())
            .collect()
    } else {
        (0..rows)
            .map(|r| (0..cols).map(|c| data[r * cols + c].conj()).collect())
            .collect()
    };
    orthogonalize(&mut columns)?;
    let mut values: Vec<f64> = columns.iter().map(|c| norm_sqr(c).sqrt()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum()
}

fn orthogonalize(columns: &mut [Vec<Complex64>]) -> Result<(), SvdError> {
    let n = columns.len();
    if n < 2 {
        return Ok(());
    }
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        worst = 0.0f64;
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let (left, right) = columns.split_at_mut(j);
                let (a, b) = (&mut left[i], &mut right[0]);
                let alpha = norm_sqr(a);
                let beta = norm_sqr(b);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                let ratio = g / (alpha * beta).sqrt();
                worst = worst.max(ratio);
                if ratio <= ROTATION_TOLERANCE {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let yp = *y * phase.conj();
                    let xi = *x;
                    *x = xi * c - yp * s;
                    *y = xi * s + yp * c;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(SvdError::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_matrix() {
        let data = vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -3.0)];
        let s = singular_values(&data, 2, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 3.0).abs() < 1e-15);
        assert!((s[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_wide_matrix() {
        // u v^H with u = (1, 2), v = (1, i, 1): sigma = |u||v| = sqrt(5)*sqrt(3).
        let u = [c(1.0, 0.0), c(2.0, 0.0)];
        let v = [c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)];
        let data: Vec<_> = u.iter().flat_map(|a| v.iter().map(move |b| a * b.conj())).collect();
        let s = singular_values(&data, 2, 3).unwrap();
        assert!((s[0] - 15f64.sqrt()).abs() < 1e-13);
        assert!(s[1].abs() < 1e-13);
    }

    #[test]
    fn known_two_by_two() {
        // [[1, 1], [0, 1]] has singular values golden ratio and its inverse.
        let data = vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let s = singular_values(&data, 2, 2).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s[0] - phi).abs() < 1e-14);
        assert!((s[1] - 1.0 / phi).abs() < 1e-14);
    }

    #[test]
    fn shape_and_finiteness_checked() {
        assert!(matches!(
            singular_values(&[c(1.0, 0.0)], 2, 2),
            Err(SvdError::Shape { .. })
        ));
        assert_eq!(
            singular_values(&[c(f64::NAN, 0.0)], 1, 1),
            Err(SvdError::NonFinite)
        );
        assert!(singular_values(&[], 0, 3).unwrap().is_empty());
    }
}
