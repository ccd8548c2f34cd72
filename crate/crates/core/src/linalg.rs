//! Small dense helpers: 2x2 matrices and tiny linear systems.

use crate::{Error, Point, Result};

/// Row-major 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn scaled_identity(s: f64) -> Mat2 {
    [[s, 0.0], [0.0, s]]
}

pub fn mat_vec(m: &Mat2, v: Point) -> Point {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat_scale(m: &Mat2, s: f64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

pub fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    mat_add(a, &mat_scale(b, -1.0))
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - rad, mean + rad)
}

/// Spectral norm of a symmetric 2x2 matrix.
pub fn sym_spectral_norm(m: &Mat2) -> f64 {
    let (lo, hi) = sym_eigenvalues(m);
    lo.abs().max(hi.abs())
}

/// Rotation by `angle` radians (counter-clockwise).
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

pub fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is row-major `n x n`. Pivots smaller than `pivot_tol` times the largest
/// absolute entry are reported as rank deficiency.
pub fn solve_dense(a: &[f64], b: &[f64], pivot_tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "dense system: matrix has {} entries, expected {}",
            a.len(),
            n * n
        )));
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if n > 0 && scale == 0.0 {
        return Err(Error::Rank("zero matrix".into()));
    }
    for col in 0..n {
        let (piv, piv_abs) =
            (col..n)
                .map(|r| (r, m[r * n + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if piv_abs <= pivot_tol * scale {
            return Err(Error::Rank(format!(
                "pivot {piv_abs:e} in column {col} below {pivot_tol:e} x {scale:e}"
            )));
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let (lo, hi) = sym_eigenvalues(&[[3.0, 0.0], [0.0, -1.0]]);
        assert_eq!((lo, hi), (-1.0, 3.0));
    }

    #[test]
    fn dense_solve_small() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve_dense(&a, &[3.0, 5.0], 1e-14).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_detects_rank_loss() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(matches!(
            solve_dense(&a, &[1.0, 2.0], 1e-12),
            Err(Error::Rank(_))
        ));
    }
}
