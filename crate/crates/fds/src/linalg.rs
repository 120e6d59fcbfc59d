//! Thin LAPACK wrapper: divide-and-conquer symmetric eigensolver.
//!
//! `lax` routes `eigh` through `dsyev`, which is several times slower than
//! `dsyevd` at the matrix sizes the CTMRG iteration produces. The corner
//! spectrum is recomputed every step, so the driver choice dominates the
//! wall time of a sweep.

use ndarray::Array2;

use crate::{FdsError, Result};

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn eigh_dc(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(FdsError::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    // Column-major copy; the matrix is symmetric so the raw layout of the
    // input does not matter, only the output interpretation does.
    let mut data: Vec<f64> = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            data.push(a[[i, j]]);
        }
    }
    let mut w = vec![0.0f64; n];
    let ni = n as i32;
    let mut info = 0i32;
    let jobz = b'V' as std::ffi::c_char;
    let uplo = b'L' as std::ffi::c_char;

    let (mut lwork, mut liwork) = (-1i32, -1i32);
    let mut wkopt = [0.0f64];
    let mut iwkopt = [0i32];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            data.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            wkopt.as_mut_ptr(),
            &lwork,
            iwkopt.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(FdsError::Linalg(format!("dsyevd workspace query: info={info}")));
    }
    lwork = wkopt[0] as i32;
    liwork = iwkopt[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            data.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(FdsError::Linalg(format!("dsyevd: info={info}")));
    }
    // Column j of the column-major output is eigenvector j.
    let mut vecs = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            vecs[[i, j]] = data[j * n + i];
        }
    }
    Ok((w, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn matches_hand_computed_spectrum() {
        let a = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let (w, v) = eigh_dc(&a).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - 3.0).abs() < 1e-12);
        // columns are orthonormal eigenvectors
        for j in 0..2 {
            let col = v.column(j);
            let av: Vec<f64> = (0..2).map(|i| a.row(i).dot(&col)).collect();
            for i in 0..2 {
                assert!((av[i] - w[j] * col[i]).abs() < 1e-12);
            }
        }
    }
}
