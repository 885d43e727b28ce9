//! Small dense helpers over nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let eps = top * 1e-13 * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps).expect("both factors were computed")
}

/// Orthonormal basis (as columns) of the column span, with the same rank rule
/// as [`numerical_rank`].
pub fn span_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left factor was computed");
    let top = svd.singular_values.iter().fold(0.0f64, |acc, v| acc.max(*v));
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| top > 0.0 && svd.singular_values[i] > rel_tol * top).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// `|v - P v| / |v|` for the orthogonal projector `P` onto the columns of
/// the orthonormal `basis`. A zero vector has residual 0.
pub fn relative_distance(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    if basis.ncols() == 0 {
        return 1.0;
    }
    let proj = basis * (basis.transpose() * v);
    (v - proj).norm() / norm
}

/// `|v - P v| / max(1, |v|)`: like [`relative_distance`] but with a unit
/// floor, so that rounding noise in a vector that should vanish is not
/// magnified into an order-one residual.
pub fn scaled_distance(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let proj = if basis.ncols() == 0 { DVector::zeros(v.len()) } else { basis * (basis.transpose() * v) };
    (v - proj).norm() / v.norm().max(1.0)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 2);
        assert_eq!(numerical_rank(&DMatrix::zeros(4, 2), 1e-10), 0);
        assert_eq!(numerical_rank(&DMatrix::zeros(4, 0), 1e-10), 0);
    }

    #[test]
    fn distance_to_a_plane() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = span_basis(&m, 1e-10);
        assert_eq!(b.ncols(), 2);
        let v = DVector::from_row_slice(&[3.0, 0.0, 4.0]);
        assert!((relative_distance(&b, &v) - 0.8).abs() < 1e-15);
        assert_eq!(relative_distance(&DMatrix::zeros(3, 0), &v), 1.0);
        assert!((scaled_distance(&b, &v) - 0.8).abs() < 1e-15);
        assert_eq!(scaled_distance(&DMatrix::zeros(3, 0), &(&v * 1e-17)), 1e-17 * v.norm());
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = DVector::from_row_slice(&[2.0, -1.0]);
        let got = least_squares(&a, &(&a * &x));
        assert!((got - x).norm() < 1e-14);
    }
}
