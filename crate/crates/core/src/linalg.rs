//! Dense symmetric linear algebra on top of `faer`.
//!
//! Everything here works on `f64`, returns eigenvalues in descending order,
//! and reports failures through [`crate::Error`].

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_square(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigenvalues: {e:?}")))?;
    values.reverse();
    Ok(values)
}

/// Full symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Mat<f64>,
}

impl SymEigen {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        check_square(a)?;
        #[cfg(feature = "lapack")]
        return lapack_eigen(a);
        #[cfg(not(feature = "lapack"))]
        Self::new_faer(a)
    }

    #[cfg_attr(feature = "lapack", allow(dead_code))]
    fn new_faer(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("symmetric eigendecomposition: {e:?}")))?;
        let s = evd.S();
        let u = evd.U();
        // faer returns ascending order; flip to descending.
        let values = (0..n).map(|j| s[n - 1 - j]).collect();
        let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
        Ok(Self { values, vectors })
    }

    /// Solve `(A + shift I) x = b` using only eigenpairs whose shifted
    /// eigenvalue exceeds `cutoff` (pseudo-inverse when truncation occurs).
    pub fn solve_shifted(&self, b: &[f64], shift: f64, cutoff: f64) -> Vec<f64> {
        let n = self.values.len();
        let u = self.vectors.as_ref();
        let mut out = vec![0.0; n];
        for (j, &lam) in self.values.iter().enumerate() {
            let denom = lam + shift;
            if denom <= cutoff {
                continue;
            }
            let coef: f64 = (0..n).map(|i| u[(i, j)] * b[i]).sum::<f64>() / denom;
            for (i, o) in out.iter_mut().enumerate() {
                *o += coef * u[(i, j)];
            }
        }
        out
    }

    /// Multi-column version of [`SymEigen::solve_shifted`].
    pub fn solve_shifted_mat(&self, b: MatRef<'_, f64>, shift: f64, cutoff: f64) -> Mat<f64> {
        let n = self.values.len();
        let ut_b = self.vectors.transpose() * b;
        let scaled = Mat::from_fn(n, b.ncols(), |j, k| {
            let denom = self.values[j] + shift;
            if denom <= cutoff {
                0.0
            } else {
                ut_b[(j, k)] / denom
            }
        });
        &self.vectors * &scaled
    }
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn sym_op_norm(a: MatRef<'_, f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.into_iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `scale * X Xᵀ`, with the lower triangle mirrored so the result is
/// exactly symmetric.
pub fn outer_gram(x: MatRef<'_, f64>, scale: f64) -> Mat<f64> {
    let g = x * x.transpose();
    let n = g.nrows();
    Mat::from_fn(n, n, |i, j| {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        scale * g[(r, c)]
    })
}

/// Which second-moment matrix of `X` (n×d) to diagonalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSide {
    /// `scale * X Xᵀ` (n×n).
    Rows,
    /// `scale * Xᵀ X` (d×d).
    Cols,
}

/// Eigenvalues (descending) of `scale * X Xᵀ` or `scale * Xᵀ X`.
///
/// Both products share their nonzero spectrum, so the smaller one is
/// diagonalized and the result is zero-padded to the requested size.
pub fn moment_eigenvalues(x: MatRef<'_, f64>, scale: f64, side: MomentSide) -> Result<Vec<f64>> {
    let (n, d) = (x.nrows(), x.ncols());
    let target = match side {
        MomentSide::Rows => n,
        MomentSide::Cols => d,
    };
    let small = if n <= d {
        outer_gram(x, scale)
    } else {
        outer_gram(x.transpose(), scale)
    };
    let mut values = sym_eigenvalues(small.as_ref())?;
    values.resize(target, 0.0);
    Ok(values)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(a: MatRef<'_, f64>) -> Option<Self> {
        a.llt(Side::Lower).ok().map(|llt| Self { llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    /// Smallest eigenvalue estimate by inverse iteration on the factor.
    pub fn min_eigenvalue_estimate(&self, iterations: usize) -> f64 {
        let n = self.llt.L().nrows();
        let mut v = start_vector(n);
        let mut rq = 0.0;
        for _ in 0..iterations {
            let w = self.solve(&v);
            let norm = l2(&w);
            if norm == 0.0 || !norm.is_finite() {
                return 0.0;
            }
            // Rayleigh quotient of A^{-1} at the normalized iterate.
            rq = dot(&v, &w);
            v = w.into_iter().map(|x| x / norm).collect();
        }
        if rq > 0.0 {
            1.0 / rq
        } else {
            0.0
        }
    }
}

/// `dsyevr` on a column-major copy of the lower triangle: the matrix, the
/// copy and the eigenvectors are the only n x n buffers.
#[cfg(feature = "lapack")]
fn lapack_eigen(a: MatRef<'_, f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let order = i32::try_from(n).map_err(|_| Error::Linalg(format!("order {n} is too large for LAPACK")))?;
    let mut buf = vec![0.0; n * n];
    for j in 0..n {
        for i in j..n {
            buf[i + j * n] = a[(i, j)];
        }
    }
    let mut values = vec![0.0; n];
    let mut vectors = Mat::<f64>::zeros(n, n);
    let ldz = vectors.col_stride() as usize;
    // SAFETY: faer stores column j at offset j * col_stride, so this span
    // covers every entry and stays inside the allocation.
    let z = unsafe { std::slice::from_raw_parts_mut(vectors.as_ptr_mut(), ldz * (n - 1) + n) };
    let mut isuppz = vec![0i32; 2 * n];
    let (mut found, mut info) = (0i32, 0i32);
    let (mut lwork, mut liwork) = ([0.0f64], [0i32]);
    // A workspace of length 1 is the size query.
    let mut call = |work: &mut [f64], iwork: &mut [i32], found: &mut i32, info: &mut i32| unsafe {
        let (lw, liw) = if work.len() == 1 {
            (-1, -1)
        } else {
            (work.len() as i32, iwork.len() as i32)
        };
        lapack::dsyevr(
            b'V',
            b'A',
            b'L',
            order,
            &mut buf,
            order,
            0.0,
            0.0,
            0,
            0,
            0.0,
            found,
            &mut values,
            z,
            ldz as i32,
            &mut isuppz,
            work,
            lw,
            iwork,
            liw,
            info,
        );
    };
    call(&mut lwork, &mut liwork, &mut found, &mut info);
    if info == 0 {
        let mut work = vec![0.0; (lwork[0] as usize).max(2)];
        let mut iwork = vec![0i32; liwork[0] as usize];
        call(&mut work, &mut iwork, &mut found, &mut info);
    }
    drop(buf);
    if info != 0 || found as usize != n {
        return Err(Error::Linalg(format!(
            "dsyevr failed (info {info}, {found} of {n} eigenvalues)"
        )));
    }
    // LAPACK returns ascending order; flip to descending.
    values.reverse();
    for j in 0..n / 2 {
        for i in 0..n {
            let t = vectors[(i, j)];
            vectors[(i, j)] = vectors[(i, n - 1 - j)];
            vectors[(i, n - 1 - j)] = t;
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenpairs of the positive definite `a` with eigenvalue at most `cutoff`,
/// ascending, with orthonormal eigenvectors as columns. Block inverse
/// iteration through the Cholesky factor of `a`, so memory stays at a few
/// columns beyond the factor. The block doubles while every Ritz value sits
/// below the cutoff, up to `max_block` columns.
pub fn low_eigenpairs(
    a: MatRef<'_, f64>,
    chol: &Cholesky,
    cutoff: f64,
    max_block: usize,
    max_iters: usize,
) -> Result<(Vec<f64>, Mat<f64>)> {
    check_square(a)?;
    let n = a.nrows();
    // Ritz pairs at or just above the cutoff must be resolved to a small
    // fraction of it, or the split between kept and dropped directions is noise.
    let tol = 1e-2 * cutoff;
    let mut b = 8.min(max_block).min(n);
    loop {
        let start = Mat::from_fn(n, b, |i, j| ((i + 1) as f64 * (0.618_034 + j as f64)).sin() + 0.1);
        let mut q = start.qr().compute_thin_Q();
        let mut grow = false;
        for _ in 0..max_iters {
            q = chol.solve_mat(q.as_ref()).qr().compute_thin_Q();
            let aq = a * &q;
            let h = q.transpose() * &aq;
            let h = Mat::from_fn(b, b, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
            let small = SymEigen::new(h.as_ref())?;
            // Ascending Ritz values and the matching rotation.
            let theta: Vec<f64> = small.values.iter().rev().copied().collect();
            let y = Mat::from_fn(b, b, |i, j| small.vectors[(i, b - 1 - j)]);
            q = &q * &y;
            let av = &aq * &y;
            let m = theta.iter().take_while(|&&t| t <= cutoff).count();
            if m + 2 > b {
                grow = true;
                break;
            }
            let converged = (0..=m).all(|j| {
                let r: f64 = (0..n).map(|i| (av[(i, j)] - theta[j] * q[(i, j)]).powi(2)).sum();
                r.sqrt() <= tol
            });
            if converged {
                let vectors = Mat::from_fn(n, m, |i, j| q[(i, j)]);
                return Ok((theta[..m].to_vec(), vectors));
            }
        }
        if !grow {
            return Err(Error::Linalg(format!(
                "block inverse iteration did not converge in {max_iters} steps (block {b})"
            )));
        }
        if b >= max_block.min(n) {
            return Err(Error::Linalg(format!(
                "more than {} eigenvalues below {cutoff:e}",
                b - 2
            )));
        }
        b = (2 * b).min(max_block).min(n);
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn max_eigenvalue_estimate(a: MatRef<'_, f64>, iterations: usize) -> f64 {
    let n = a.nrows();
    let mut v = start_vector(n);
    let mut rq = 0.0;
    for _ in 0..iterations {
        let w = matvec(a, &v);
        rq = dot(&v, &w);
        let norm = l2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }
    rq
}

fn start_vector(n: usize) -> Vec<f64> {
    // Deterministic, not orthogonal to 1 or to any coordinate axis.
    let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_034).sin()).collect();
    let norm = l2(&v);
    v.into_iter().map(|x| x / norm).collect()
}

pub fn matvec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let rhs = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let out = a * &rhs;
    (0..a.nrows()).map(|i| out[(i, 0)]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_square(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Mat<f64> {
        let b = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let mut a = &b * b.transpose();
        for i in 0..n {
            a[(i, i)] += 0.5;
        }
        a
    }

    #[test]
    fn low_eigenpairs_match_dense_decomposition() {
        // Spectrum 1, 1/2, ..., plus four tiny eigenvalues, in a random basis.
        let n = 60;
        let basis = Mat::from_fn(n, n, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin())
            .qr()
            .compute_thin_Q();
        let vals: Vec<f64> = (0..n)
            .map(|j| {
                if j < 4 {
                    1e-13 * (j + 1) as f64
                } else {
                    1.0 / (j - 3) as f64
                }
            })
            .collect();
        let d = Mat::from_fn(n, n, |i, j| if i == j { vals[i] } else { 0.0 });
        let a = &basis * &d * basis.transpose();
        let a = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let chol = Cholesky::new(a.as_ref()).unwrap();
        let (v, u) = low_eigenpairs(a.as_ref(), &chol, 1e-10, 64, 500).unwrap();
        assert_eq!(v.len(), 4);
        for (k, &lam) in v.iter().enumerate() {
            assert!((lam - vals[k]).abs() < 1e-12, "{lam} vs {}", vals[k]);
        }
        // Same span as the true eigenvectors.
        let proj = basis.subcols(0, 4).transpose() * &u;
        let s = proj.singular_values().unwrap();
        assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-6), "{s:?}");

        // Too small a block budget is reported, not silently truncated.
        assert!(low_eigenpairs(a.as_ref(), &chol, 1e-10, 4, 500).is_err());
    }

    #[test]
    fn eigenvalues_descending_and_match_trace() {
        let a = spd(12);
        let ev = sym_eigenvalues(a.as_ref()).unwrap();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        let tr: f64 = (0..12).map(|i| a[(i, i)]).sum();
        assert!((ev.iter().sum::<f64>() - tr).abs() < 1e-10 * tr);
    }

    #[test]
    fn backends_agree() {
        let a = spd(30);
        let e = SymEigen::new(a.as_ref()).unwrap();
        let f = SymEigen::new_faer(a.as_ref()).unwrap();
        for (p, q) in e.values.iter().zip(&f.values) {
            assert!((p - q).abs() < 1e-10 * f.values[0]);
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        // A U = U diag(values)
        let au = &a * &e.vectors;
        for j in 0..30 {
            for i in 0..30 {
                assert!((au[(i, j)] - e.values[j] * e.vectors[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eigen_solve_matches_cholesky() {
        let a = spd(9);
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let e = SymEigen::new(a.as_ref()).unwrap();
        let x1 = e.solve_shifted(&b, 0.0, 0.0);
        let x2 = Cholesky::new(a.as_ref()).unwrap().solve(&b);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn extreme_eigenvalue_estimates() {
        let a = spd(20);
        let ev = sym_eigenvalues(a.as_ref()).unwrap();
        let max = max_eigenvalue_estimate(a.as_ref(), 200);
        let min = Cholesky::new(a.as_ref()).unwrap().min_eigenvalue_estimate(200);
        assert!((max - ev[0]).abs() < 1e-8 * ev[0]);
        assert!((min - ev[19]).abs() < 1e-6 * ev[0]);
    }

    #[test]
    fn moment_eigenvalues_pad_to_requested_side() {
        let x = Mat::from_fn(3, 5, |i, j| (i + 2 * j) as f64 / 7.0 - 0.4);
        let rows = moment_eigenvalues(x.as_ref(), 1.0, MomentSide::Rows).unwrap();
        let cols = moment_eigenvalues(x.as_ref(), 1.0, MomentSide::Cols).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(cols.len(), 5);
        assert!(cols[3].abs() < 1e-12 && cols[4].abs() < 1e-12);
        for (a, b) in rows.iter().zip(&cols) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
