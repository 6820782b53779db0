#![allow(dead_code)]

use sparsense_core::linalg::Matrix;

/// Eigenvalues of the Gram matrix `XᵀX` by cyclic Jacobi rotations, sorted
/// descending. Their square roots are the singular values of `X`.
pub fn gram_eigenvalues(x: &Matrix) -> Vec<f64> {
    let n = x.cols();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = x.col(i).iter().zip(x.col(j)).map(|(a, b)| a * b).sum();
        }
    }
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| g[i][j] * g[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if g[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (gkp, gkq) = (g[k][p], g[k][q]);
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
                for k in 0..n {
                    let (gpk, gqk) = (g[p][k], g[q][k]);
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| g[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn singular_values(x: &Matrix) -> Vec<f64> {
    gram_eigenvalues(x).into_iter().map(|e| e.max(0.0).sqrt()).collect()
}
