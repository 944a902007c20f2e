//! Thin strided wrapper over the `matrixmultiply` f64 kernel.

/// C = alpha * A * B + beta * C with explicit strides.
///
/// A is m x k, B is k x n, C is m x n; `rs*`/`cs*` are element strides
/// between consecutive rows/columns. Slices must cover the strided extent;
/// checked in debug builds only.
#[allow(clippy::too_many_arguments)]
pub fn dgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    #[cfg(debug_assertions)]
    {
        let extent = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
            if rows == 0 || cols == 0 {
                return 0;
            }
            ((rows as isize - 1) * rs + (cols as isize - 1) * cs) as usize + 1
        };
        assert!(extent(m, k, rsa, csa) <= a.len());
        assert!(extent(k, n, rsb, csb) <= b.len());
        assert!(extent(m, n, rsc, csc) <= c.len());
    }
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Row-major contiguous case: C[m x n] = alpha * A[m x k] * B[k x n] + beta * C.
pub fn dgemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    dgemm_strided(m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
}
