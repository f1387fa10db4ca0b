//! Dense and iterative linear algebra: LAPACK symmetric eigensolvers, BLAS
//! matrix products, restarted GMRES and a Lanczos eigensolver with full
//! reorthogonalization.

use crate::error::{Error, Result};
use cblas_sys::{cblas_dgemm, CBLAS_LAYOUT, CBLAS_TRANSPOSE};
use lapack_sys::{dstevr_, dsyevd_, dsyevr_};

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

/// Eigen-decomposition of a dense symmetric `n x n` matrix (divide and conquer).
///
/// Returns ascending eigenvalues and, when requested, the eigenvectors stored
/// contiguously: vector `j` occupies `[j n, (j + 1) n)`.
pub fn sym_eig(mut a: Vec<f64>, n: usize, vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    assert_eq!(a.len(), n * n, "matrix size");
    let jobz = if vectors { b'V' } else { b'N' } as std::ffi::c_char;
    let uplo = b'U' as std::ffi::c_char;
    let nn = n as i32;
    let mut w = vec![0.0; n];
    let mut info = 0;
    let (mut wq, mut iwq) = (0.0f64, 0i32);
    let q = -1i32;
    // SAFETY: all pointers reference live buffers of the sizes LAPACK expects;
    // the first call is a workspace query.
    unsafe {
        dsyevd_(&jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(), &mut wq, &q, &mut iwq, &q, &mut info);
    }
    check("dsyevd", info)?;
    let lwork = wq as i32;
    let liwork = iwq;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: workspace sized from the query above.
    unsafe {
        dsyevd_(
            &jobz, &uplo, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    check("dsyevd", info)?;
    Ok((w, if vectors { Some(a) } else { None }))
}

/// Lowest `k` eigenpairs of a dense symmetric matrix (relatively robust representations).
pub fn sym_eig_lowest(mut a: Vec<f64>, n: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n, "matrix size");
    let k = k.min(n).max(1);
    let (jobz, range, uplo) = (b'V' as std::ffi::c_char, b'I' as std::ffi::c_char, b'U' as std::ffi::c_char);
    let nn = n as i32;
    let (vl, vu, il, iu) = (0.0, 0.0, 1i32, k as i32);
    let abstol = 0.0;
    let mut m = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * k];
    let mut isuppz = vec![0i32; 2 * k];
    let mut info = 0;
    let (mut wq, mut iwq) = (0.0f64, 0i32);
    let q = -1i32;
    // SAFETY: workspace query followed by the actual call with sized buffers.
    unsafe {
        dsyevr_(
            &jobz, &range, &uplo, &nn, a.as_mut_ptr(), &nn, &vl, &vu, &il, &iu, &abstol, &mut m,
            w.as_mut_ptr(), z.as_mut_ptr(), &nn, isuppz.as_mut_ptr(), &mut wq, &q, &mut iwq, &q, &mut info,
        );
    }
    check("dsyevr", info)?;
    let lwork = wq as i32;
    let liwork = iwq;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: see above.
    unsafe {
        dsyevr_(
            &jobz, &range, &uplo, &nn, a.as_mut_ptr(), &nn, &vl, &vu, &il, &iu, &abstol, &mut m,
            w.as_mut_ptr(), z.as_mut_ptr(), &nn, isuppz.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    check("dsyevr", info)?;
    w.truncate(m as usize);
    z.truncate(n * m as usize);
    Ok((w, z))
}

/// Lowest `k` eigenpairs of the symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`.
pub fn tridiag_eig_lowest(d: &[f64], e: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    assert_eq!(e.len() + 1, n.max(1), "off-diagonal length");
    let k = k.min(n).max(1);
    let mut dd = d.to_vec();
    let mut ee = e.to_vec();
    ee.push(0.0);
    let (jobz, range) = (b'V' as std::ffi::c_char, b'I' as std::ffi::c_char);
    let nn = n as i32;
    let (vl, vu, il, iu) = (0.0, 0.0, 1i32, k as i32);
    let abstol = 0.0;
    let mut m = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * k];
    let mut isuppz = vec![0i32; 2 * k];
    let mut info = 0;
    let lwork = (20 * n).max(1) as i32;
    let liwork = (10 * n).max(1) as i32;
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    // SAFETY: workspace sizes follow the documented minimums (20n, 10n).
    unsafe {
        dstevr_(
            &jobz, &range, &nn, dd.as_mut_ptr(), ee.as_mut_ptr(), &vl, &vu, &il, &iu, &abstol, &mut m,
            w.as_mut_ptr(), z.as_mut_ptr(), &nn, isuppz.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    check("dstevr", info)?;
    w.truncate(m as usize);
    z.truncate(n * m as usize);
    Ok((w, z))
}

/// `C = A B` for row-major `A (m x k)` and `B (k x n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k, "A shape");
    assert_eq!(b.len(), k * n, "B shape");
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: shapes checked above; row-major leading dimensions are k and n.
    unsafe {
        cblas_dgemm(
            CBLAS_LAYOUT::CblasRowMajor,
            CBLAS_TRANSPOSE::CblasNoTrans,
            CBLAS_TRANSPOSE::CblasNoTrans,
            m as i32,
            n as i32,
            k as i32,
            1.0,
            a.as_ptr(),
            k as i32,
            b.as_ptr(),
            n as i32,
            0.0,
            c.as_mut_ptr(),
            n as i32,
        );
    }
    c
}

/// `C = A B^T` for row-major `A (m x k)` and `B (n x k)`.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k, "A shape");
    assert_eq!(b.len(), n * k, "B shape");
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: shapes checked above.
    unsafe {
        cblas_dgemm(
            CBLAS_LAYOUT::CblasRowMajor,
            CBLAS_TRANSPOSE::CblasNoTrans,
            CBLAS_TRANSPOSE::CblasTrans,
            m as i32,
            n as i32,
            k as i32,
            1.0,
            a.as_ptr(),
            k as i32,
            b.as_ptr(),
            k as i32,
            0.0,
            c.as_mut_ptr(),
            n as i32,
        );
    }
    c
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative linear solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Total inner iterations.
    pub iterations: usize,
    /// Final relative residual `||b - A x|| / ||b||`.
    pub relative_residual: f64,
}

/// Restarted GMRES for `A x = b` with a matrix-free operator.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let ax = apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let mut w = apply(&v[k])?;
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= h[i][k] * vj);
            }
            // Second Gram-Schmidt pass for stability.
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                h[i][k] += c;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= c * vj);
            }
            h[k + 1][k] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || total >= max_iter {
                break;
            }
            let wn = norm(&w);
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&v[j]).for_each(|(xi, vi)| *xi += yj * vi);
        }
        if rel <= tol {
            let ax = apply(&x)?;
            let true_rel = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
            rel = true_rel;
            if true_rel <= tol * 10.0 {
                return Ok((x, SolveReport { iterations: total, relative_residual: true_rel }));
            }
        }
    }
    if rel <= tol {
        return Ok((x, SolveReport { iterations: total, relative_residual: rel }));
    }
    Err(Error::NoConvergence { solver: "gmres", iterations: total, residual: rel })
}

/// Result of a Lanczos run: lowest Ritz pairs and diagnostics.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Ascending Ritz values.
    pub values: Vec<f64>,
    /// Ritz vectors, each of the operator dimension.
    pub vectors: Vec<Vec<f64>>,
    /// Residual norms `||A v - theta v||` computed explicitly.
    pub residuals: Vec<f64>,
    /// Krylov dimension used.
    pub iterations: usize,
}

/// Lowest `k` eigenpairs of a symmetric operator by Lanczos with full reorthogonalization.
///
/// Convergence is declared when every wanted Ritz pair has residual below
/// `tol * (1 + |theta|)`; the residual is estimated from the tridiagonal
/// eigenvectors and confirmed by an explicit operator application.
pub fn lanczos_lowest(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    start: &[f64],
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<LanczosResult> {
    let n = start.len();
    let max_iter = max_iter.min(n);
    let s0 = norm(start);
    if s0 == 0.0 {
        return Err(Error::InvalidArgument("Lanczos start vector is zero".into()));
    }
    let mut q: Vec<Vec<f64>> = vec![start.iter().map(|v| v / s0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut last_est = f64::INFINITY;
    loop {
        let j = alpha.len();
        let mut w = apply(&q[j]);
        let a = dot(&w, &q[j]);
        alpha.push(a);
        for _ in 0..2 {
            for qi in &q {
                let c = dot(&w, qi);
                w.iter_mut().zip(qi).for_each(|(wv, qv)| *wv -= c * qv);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let check_now = m >= k && (m % 10 == 0 || m == max_iter || b < 1e-12);
        if check_now {
            let (theta, s) = tridiag_eig_lowest(&alpha, &beta, k)?;
            let kk = theta.len();
            let est = (0..kk)
                .map(|i| (b * s[i * m + m - 1]).abs() / (1.0 + theta[i].abs()))
                .fold(0.0, f64::max);
            last_est = est;
            if est < tol || m == max_iter || b < 1e-12 {
                let mut vectors = Vec::with_capacity(kk);
                let mut residuals = Vec::with_capacity(kk);
                for i in 0..kk {
                    let mut v = vec![0.0; n];
                    for (jj, qj) in q.iter().enumerate().take(m) {
                        let c = s[i * m + jj];
                        v.iter_mut().zip(qj).for_each(|(vv, qv)| *vv += c * qv);
                    }
                    let vn = norm(&v);
                    v.iter_mut().for_each(|x| *x /= vn);
                    let av = apply(&v);
                    let r: f64 = av
                        .iter()
                        .zip(&v)
                        .map(|(x, y)| (x - theta[i] * y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    residuals.push(r);
                    vectors.push(v);
                }
                let worst = (0..kk)
                    .map(|i| residuals[i] / (1.0 + theta[i].abs()))
                    .fold(0.0, f64::max);
                if worst < tol * 10.0 || m == max_iter || b < 1e-12 {
                    if worst >= tol * 10.0 && m == max_iter {
                        return Err(Error::NoConvergence { solver: "lanczos", iterations: m, residual: worst });
                    }
                    return Ok(LanczosResult { values: theta, vectors, residuals, iterations: m });
                }
            }
        }
        if m >= max_iter {
            return Err(Error::NoConvergence { solver: "lanczos", iterations: m, residual: last_est });
        }
        beta.push(b);
        q.push(w.iter().map(|v| v / b).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { i as f64 } else { 0.0 };
            }
        }
        a
    }

    #[test]
    fn dense_eigenpairs_satisfy_definition() {
        let n = 30;
        let a = test_matrix(n);
        let (w, v) = sym_eig(a.clone(), n, true).unwrap();
        let v = v.unwrap();
        for j in 0..n {
            let x = &v[j * n..(j + 1) * n];
            let ax = matmul(&a, x, n, n, 1);
            let r: f64 = ax.iter().zip(x).map(|(p, q)| (p - w[j] * q).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10, "residual {r}");
        }
        let (wl, _) = sym_eig_lowest(a.clone(), n, 4).unwrap();
        for i in 0..4 {
            assert!((wl[i] - w[i]).abs() < 1e-10);
        }
        let (wn, none) = sym_eig(a, n, false).unwrap();
        assert!(none.is_none());
        assert!((wn[n - 1] - w[n - 1]).abs() < 1e-10);
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 120;
        let a = test_matrix(n);
        let (w, _) = sym_eig(a.clone(), n, false).unwrap();
        let start: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
        let res = lanczos_lowest(|x| matmul(&a, x, n, n, 1), &start, 3, 1e-12, n).unwrap();
        for i in 0..3 {
            assert!((res.values[i] - w[i]).abs() < 1e-9, "{} vs {}", res.values[i], w[i]);
            assert!(res.residuals[i] < 1e-8);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 50;
        let mut a = test_matrix(n);
        for i in 0..n {
            a[i * n + (i + 3) % n] += 0.5;
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let b = matmul(&a, &x_true, n, n, 1);
        let (x, rep) = gmres(|v| Ok(matmul(&a, v, n, n, 1)), &b, 1e-12, 20, 500).unwrap();
        assert!(rep.relative_residual < 1e-10);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn matmul_nt_matches_matmul() {
        let a: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..6).map(|i| (i * i) as f64).collect();
        let bt: Vec<f64> = vec![b[0], b[3], b[1], b[4], b[2], b[5]];
        assert_eq!(matmul_nt(&a, &b, 2, 3, 2), matmul(&a, &bt, 2, 3, 2));
    }
}
