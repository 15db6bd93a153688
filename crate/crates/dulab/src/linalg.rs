//! Dense complex helpers shared by the physics modules.
//!
//! Everything is row-major over composite indices, site 0 being the most
//! significant digit.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Max-abs entry of `A A† − I`.
pub fn unitarity_residual(a: MatRef<'_, c64>) -> f64 {
    let n = a.nrows();
    let g = a * a.adjoint();
    max_abs_diff(g.as_ref(), identity(n).as_ref())
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn frobenius_sq(a: MatRef<'_, c64>) -> f64 {
    a.squared_norm_l2()
}

/// `tr[(A A†)²]`, taken through whichever Gram matrix is smaller.
pub fn gram_purity(a: MatRef<'_, c64>) -> f64 {
    let g = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    g.squared_norm_l2()
}

/// Hermitian Gram matrix of the smaller side.
pub fn gram(a: MatRef<'_, c64>) -> CMat {
    if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    }
}

pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))
}

pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver: {e:?}")))
}

/// Unitary factor `W X†` of the polar decomposition `A = W Σ X†`.
pub fn polar_unitary(a: MatRef<'_, c64>) -> Result<CMat> {
    let svd = a
        .svd()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    Ok(svd.U() * svd.V().adjoint())
}

/// Eigenvalues of a Hermitian matrix mapped through `f`, then reassembled.
pub fn hermitian_function(a: MatRef<'_, c64>, f: impl Fn(f64) -> c64) -> Result<CMat> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))?;
    let u = evd.U();
    let s = evd.S().column_vector();
    let n = a.nrows();
    let scaled = Mat::from_fn(n, n, |i, k| u[(i, k)] * f(s[k].re));
    Ok(&scaled * u.adjoint())
}

pub fn scaled(a: MatRef<'_, c64>, s: f64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// Dagger of an owned matrix.
pub fn adjoint(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn from_rows(rows: &[Vec<c64>]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        Mat::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
            c64::new(a, b)
        })
    }

    #[test]
    fn kron_matches_index_formula() {
        let a = sample(2, 1);
        let b = sample(3, 2);
        let k = kron(a.as_ref(), b.as_ref());
        assert_eq!(k.nrows(), 6);
        for i in 0..6 {
            for j in 0..6 {
                let want = a[(i / 3, j / 3)] * b[(i % 3, j % 3)];
                assert!((k[(i, j)] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn polar_factor_is_unitary() {
        let a = sample(5, 9);
        let w = polar_unitary(a.as_ref()).unwrap();
        assert!(unitarity_residual(w.as_ref()) < 1e-12);
    }

    #[test]
    fn gram_purity_is_side_independent() {
        let a = Mat::from_fn(3, 5, |i, j| c64::new((i + 2 * j) as f64, (i as f64) - (j as f64)));
        let p1 = gram_purity(a.as_ref());
        let p2 = gram_purity(adjoint(a.as_ref()).as_ref());
        assert!((p1 - p2).abs() < 1e-9 * p1);
    }

    #[test]
    fn hermitian_function_exp_of_zero_is_identity() {
        let z = Mat::<c64>::zeros(4, 4);
        let e = hermitian_function(z.as_ref(), |_| ONE).unwrap();
        assert!(max_abs_diff(e.as_ref(), identity(4).as_ref()) < 1e-14);
    }
}
