//! Small dense linear-algebra helpers for the solver module.
//!
//! The regression designs here have at most a dozen columns, so a cyclic
//! Jacobi sweep on the K x K Gram matrix is all the spectral machinery needed.

use ndarray::Array2;

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations,
/// sorted in descending order.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[[0, 0]]];
    }
    let mut m = a.clone();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[[p, q]].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                m[[p, p]] = app - t * apq;
                m[[q, q]] = aqq + t * apq;
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m[[i, p]];
                    let aiq = m[[i, q]];
                    m[[i, p]] = c * aip - s * aiq;
                    m[[p, i]] = m[[i, p]];
                    m[[i, q]] = s * aip + c * aiq;
                    m[[q, i]] = m[[i, q]];
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    eigs
}

/// Gram matrix `X^T X` of a design matrix.
pub fn gram(design: &Array2<f64>) -> Array2<f64> {
    design.t().dot(design)
}

/// Singular values of a design matrix (square roots of the Gram eigenvalues,
/// clamped at zero), sorted in descending order.
pub fn design_singular_values(design: &Array2<f64>) -> Vec<f64> {
    symmetric_eigenvalues(&gram(design))
        .into_iter()
        .map(|e| e.max(0.0).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let e = symmetric_eigenvalues(&a);
        assert_abs_diff_eq!(e[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_known_symmetric_matrix() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigenvalues(&a);
        assert_abs_diff_eq!(e[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        let a = array![
            [4.0, 1.0, 0.5],
            [1.0, 3.0, 0.2],
            [0.5, 0.2, 1.0]
        ];
        let e = symmetric_eigenvalues(&a);
        assert_abs_diff_eq!(e.iter().sum::<f64>(), 8.0, epsilon = 1e-10);
    }

    #[test]
    fn singular_values_of_identity_design() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let s = design_singular_values(&x);
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_columns_have_zero_smallest_singular_value() {
        let x = array![[0.6, 0.6], [0.4, 0.4]];
        let s = design_singular_values(&x);
        assert!(s[1] < 1e-12 * s[0].max(1.0));
    }
}
