//! Independent oracles shared by the integration suites. These deliberately
//! avoid the library's own computation paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Largest singular value of a 2x2 matrix from the characteristic
/// polynomial of `MᵀM`.
pub fn opnorm_2x2_closed_form(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), 2);
    assert_eq!(m.ncols(), 2);
    let g = m.transpose() * m;
    let tr = g[(0, 0)] + g[(1, 1)];
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr + disc) / 2.0).max(0.0).sqrt()
}

/// Spectral radius of a 2x2 matrix from its characteristic polynomial.
pub fn spectral_radius_2x2_closed_form(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), 2);
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
    } else {
        // complex pair: modulus is sqrt(det)
        det.abs().sqrt()
    }
}

/// Batch least squares by accumulating the normal equations over all
/// transitions at once and solving with LU.
pub fn batch_ls(
    transitions: &[(DVector<f64>, DVector<f64>, DVector<f64>)],
) -> DMatrix<f64> {
    let dim = transitions[0].0.len();
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut cross = DMatrix::<f64>::zeros(dim, dim);
    for (x, u, x_next) in transitions {
        gram += x * x.transpose();
        cross += (x_next - u) * x.transpose();
    }
    match gram.clone().try_inverse() {
        Some(inv) => cross * inv,
        None => DMatrix::zeros(dim, dim),
    }
}

/// Wilson half-width oracle (independent arithmetic from the library's).
pub fn wilson_half_width(successes: usize, n: usize) -> f64 {
    let z = 1.959963984540054_f64;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / (1.0 + z2 / n_f)
}
