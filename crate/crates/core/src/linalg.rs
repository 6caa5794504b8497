//! Thin helpers over `nalgebra` for the small `p x p` systems.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_array2(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `sum_i x_i x_i^T` over the rows of `x`, after subtracting column means
/// when `center` is set.
pub fn gram(x: ArrayView2<f64>, center: bool) -> DMatrix<f64> {
    let (n, p) = x.dim();
    let means: Vec<f64> = if center {
        (0..p).map(|j| x.column(j).sum() / n as f64).collect()
    } else {
        vec![0.0; p]
    };
    let mut g = DMatrix::zeros(p, p);
    for row in x.outer_iter() {
        for a in 0..p {
            let ra = row[a] - means[a];
            for b in a..p {
                g[(a, b)] += ra * (row[b] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn inverse_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.inverse());
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem(format!("{what} is not invertible")))
}
