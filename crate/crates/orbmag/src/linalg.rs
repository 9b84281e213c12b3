//! Small vector kernels and LAPACK eigensolvers.

use ndarray::{Array1, Array2, ShapeBuilder};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

/// `<x, y>`, conjugate-linear in `x`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    C64::new(re, im)
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += alpha x`.
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Removes the component along the unit vector `unit` and returns it.
pub fn project_out(unit: &[C64], x: &mut [C64]) -> C64 {
    let overlap = dot(unit, x);
    axpy(-overlap, unit, x);
    overlap
}

fn lapack_check(info: i32, routine: &str) -> Result<()> {
    if info != 0 {
        return Err(Error::ConvergenceFailure(format!("{routine} returned info = {info}")));
    }
    Ok(())
}

/// Eigen-decomposition of a real symmetric matrix (lower triangle used).
/// Returns ascending eigenvalues and eigenvectors as columns.
pub fn eigh_real(matrix: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let mut a = Array2::<f64>::zeros((n, n).f());
    a.assign(&matrix);
    let mut w = Array1::<f64>::zeros(n);
    if n == 0 {
        return Ok((w, a));
    }
    let order = n as i32;
    let mut info = 0;
    let mut work = vec![0.0f64; 1];
    let mut iwork = vec![0i32; 1];
    let jobz = b'V' as std::os::raw::c_char;
    let uplo = b'L' as std::os::raw::c_char;
    let slice = a.as_slice_memory_order_mut().expect("contiguous");
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &order, slice.as_mut_ptr(), &order, w.as_mut_ptr(),
            work.as_mut_ptr(), &-1, iwork.as_mut_ptr(), &-1, &mut info,
        );
    }
    lapack_check(info, "dsyevd workspace query")?;
    let lwork = work[0] as i32;
    let liwork = iwork[0];
    work = vec![0.0; lwork.max(1) as usize];
    iwork = vec![0; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &order, slice.as_mut_ptr(), &order, w.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    lapack_check(info, "dsyevd")?;
    Ok((w, a))
}

/// Eigen-decomposition of a complex Hermitian matrix (lower triangle used).
pub fn eigh_complex(matrix: Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let mut a = Array2::<C64>::zeros((n, n).f());
    a.assign(&matrix);
    let mut w = Array1::<f64>::zeros(n);
    if n == 0 {
        return Ok((w, a));
    }
    let order = n as i32;
    let mut info = 0;
    let mut work = vec![C64::new(0.0, 0.0); 1];
    let mut rwork = vec![0.0f64; 1];
    let mut iwork = vec![0i32; 1];
    let jobz = b'V' as std::os::raw::c_char;
    let uplo = b'L' as std::os::raw::c_char;
    let slice = a.as_slice_memory_order_mut().expect("contiguous");
    // Complex64 and the bindgen complex type share the (re, im) layout.
    let a_ptr = slice.as_mut_ptr() as *mut lapack_sys::__BindgenComplex<f64>;
    unsafe {
        lapack_sys::zheevd_(
            &jobz, &uplo, &order, a_ptr, &order, w.as_mut_ptr(),
            work.as_mut_ptr() as *mut _, &-1, rwork.as_mut_ptr(), &-1, iwork.as_mut_ptr(), &-1,
            &mut info,
        );
    }
    lapack_check(info, "zheevd workspace query")?;
    let lwork = work[0].re as i32;
    let lrwork = rwork[0] as i32;
    let liwork = iwork[0];
    work = vec![C64::new(0.0, 0.0); lwork.max(1) as usize];
    rwork = vec![0.0; lrwork.max(1) as usize];
    iwork = vec![0; liwork.max(1) as usize];
    unsafe {
        lapack_sys::zheevd_(
            &jobz, &uplo, &order, a_ptr, &order, w.as_mut_ptr(),
            work.as_mut_ptr() as *mut _, &lwork, rwork.as_mut_ptr(), &lrwork, iwork.as_mut_ptr(),
            &liwork, &mut info,
        );
    }
    lapack_check(info, "zheevd")?;
    Ok((w, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn real_two_by_two() {
        let (w, v) = eigh_real(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((w[0] + 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        assert!((v[[0, 0]].abs() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn complex_eigenvectors_satisfy_equation() {
        let i = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        let m = array![[2.0 * one, i, 0.0 * one], [-i, 3.0 * one, 0.5 * one], [0.0 * one, 0.5 * one, -1.0 * one]];
        let (w, v) = eigh_complex(m.clone()).unwrap();
        for k in 0..3 {
            let col = v.column(k).to_owned();
            let mv = m.dot(&col);
            for r in 0..3 {
                assert!((mv[r] - col[r] * w[k]).norm() < 1e-12);
            }
        }
        assert!((w.sum() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dot_is_conjugate_linear_in_first_argument() {
        let x = [C64::new(0.0, 1.0)];
        let y = [C64::new(1.0, 0.0)];
        assert_eq!(dot(&x, &y), C64::new(0.0, -1.0));
        assert_eq!(norm(&[C64::new(3.0, 4.0)]), 5.0);
    }
}
