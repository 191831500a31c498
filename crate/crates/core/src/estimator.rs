//! Minimum-norm interpolation and kernel ridge regression.
//!
//! The fitted function is `f(x) = K(x, X) a` with `(K(X, X) + lambda~ I) a = Y`,
//! where `lambda~` is `lambda` (plain) or `n lambda` (scaled). With
//! `lambda = 0` this is the minimum-RKHS-norm interpolant.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::linalg::{self, Cholesky, SymEigen};

/// Relative eigenvalue threshold below which the Gram matrix is singular.
pub const SINGULAR_RTOL: f64 = 1e-10;

const POWER_ITERS: usize = 60;
const INVERSE_ITERS: usize = 40;
/// Without LAPACK, a singular Gram from this size on is first pseudo-inverted
/// by deflating the Cholesky factor, since the pure-Rust dense
/// eigendecomposition needs about five n x n buffers.
const DEFLATE_MIN_N: usize = 4096;
const DEFLATE_MAX_BLOCK: usize = 256;
const DEFLATE_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeConvention {
    /// `K + lambda I`
    #[default]
    Plain,
    /// `K + n lambda I`
    Scaled,
}

impl RidgeConvention {
    pub fn effective(&self, lambda: f64, n: usize) -> f64 {
        match self {
            RidgeConvention::Plain => lambda,
            RidgeConvention::Scaled => lambda * n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitOptions {
    /// Solve singular interpolation problems by truncated eigendecomposition
    /// instead of failing.
    pub pseudo_inverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Cholesky,
    Eigen,
    PseudoInverse,
}

enum Factor {
    Cholesky(Cholesky),
    Eigen {
        eig: SymEigen,
        shift: f64,
        cutoff: f64,
    },
    /// Cholesky solve with the eigenvectors below the cutoff projected out
    /// on both sides: the truncated pseudo-inverse without a dense
    /// eigendecomposition.
    Deflated {
        chol: Cholesky,
        dropped: Mat<f64>,
    },
}

impl Factor {
    fn solve_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            Factor::Cholesky(c) => c.solve_mat(b),
            Factor::Eigen { eig, shift, cutoff } => eig.solve_shifted_mat(b, *shift, *cutoff),
            Factor::Deflated { chol, dropped } => {
                let project = |m: Mat<f64>| {
                    let coef = dropped.transpose() * &m;
                    m - dropped * &coef
                };
                project(chol.solve_mat(project(b.to_owned()).as_ref()))
            }
        }
    }
}

/// A solved kernel ridge (or interpolation) problem.
pub struct FitState {
    x: Mat<f64>,
    spec: KernelSpec,
    lambda: f64,
    convention: RidgeConvention,
    coefficients: Vec<f64>,
    solver: SolverKind,
    residual: f64,
    factor: Factor,
}

impl std::fmt::Debug for FitState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FitState")
            .field("n", &self.x.nrows())
            .field("d", &self.x.ncols())
            .field("lambda", &self.lambda)
            .field("convention", &self.convention)
            .field("solver", &self.solver)
            .field("residual", &self.residual)
            .finish()
    }
}

impl FitState {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn effective_ridge(&self) -> f64 {
        self.convention.effective(self.lambda, self.x.nrows())
    }
    pub fn convention(&self) -> RidgeConvention {
        self.convention
    }
    pub fn solver(&self) -> SolverKind {
        self.solver
    }
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
    pub fn train(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }
    /// `|(K + lambda~ I) a - Y| / |Y|` measured right after the solve.
    pub fn relative_residual(&self) -> f64 {
        self.residual
    }
}

/// Kernel matrix of a training set, reusable across ridge parameters and
/// response vectors.
pub struct KernelRidge {
    spec: KernelSpec,
    x: Mat<f64>,
    gram: Mat<f64>,
}

impl KernelRidge {
    pub fn new(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<Self> {
        let gram = kernel::gram(spec, x)?;
        Ok(Self {
            spec: *spec,
            x: x.to_owned(),
            gram,
        })
    }

    pub fn gram(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn fit(&mut self, y: &[f64], lambda: f64, convention: RidgeConvention, opts: FitOptions) -> Result<FitState> {
        let n = self.n();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ridge parameter must be finite and nonnegative, got {lambda}"
            )));
        }
        let shift = convention.effective(lambda, n);
        let (factor, solver) = self.factorize(shift, opts)?;
        let rhs = Mat::from_fn(n, 1, |i, _| y[i]);
        let sol = factor.solve_mat(rhs.as_ref());
        let coefficients: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();

        let ka = linalg::matvec(self.gram.as_ref(), &coefficients);
        let res: Vec<f64> = (0..n).map(|i| ka[i] + shift * coefficients[i] - y[i]).collect();
        let ynorm = linalg::l2(y);
        let residual = if ynorm > 0.0 {
            linalg::l2(&res) / ynorm
        } else {
            linalg::l2(&res)
        };

        Ok(FitState {
            x: self.x.clone(),
            spec: self.spec,
            lambda,
            convention,
            coefficients,
            solver,
            residual,
            factor,
        })
    }

    fn factorize(&mut self, shift: f64, opts: FitOptions) -> Result<(Factor, SolverKind)> {
        let n = self.n();
        if shift > 0.0 {
            for i in 0..n {
                self.gram[(i, i)] += shift;
            }
        }
        let chol = Cholesky::new(self.gram.as_ref());
        let condition = match (&chol, shift == 0.0) {
            (Some(c), true) => {
                let max = linalg::max_eigenvalue_estimate(self.gram.as_ref(), POWER_ITERS);
                let min = c.min_eigenvalue_estimate(INVERSE_ITERS);
                Some((min, max))
            }
            _ => None,
        };
        if shift > 0.0 {
            for i in 0..n {
                self.gram[(i, i)] -= shift;
            }
        }
        let Some(c) = chol else {
            // Not numerically positive definite: diagnose with the spectrum.
            return self.eigen_factor(shift, opts.pseudo_inverse && shift == 0.0);
        };
        let Some((min, max)) = condition.filter(|&(min, max)| min <= SINGULAR_RTOL * max) else {
            return Ok((Factor::Cholesky(c), SolverKind::Cholesky));
        };
        if !opts.pseudo_inverse {
            return Err(singular(min, max));
        }
        if cfg!(not(feature = "lapack")) && n >= DEFLATE_MIN_N {
            match self.deflated_factor(c, SINGULAR_RTOL * max) {
                Ok(f) => return Ok(f),
                Err(e) => log::warn!("{e}; falling back to a full eigendecomposition"),
            }
        } else {
            drop(c);
        }
        self.eigen_factor(0.0, true)
    }

    fn deflated_factor(&self, chol: Cholesky, cutoff: f64) -> Result<(Factor, SolverKind)> {
        let (values, dropped) =
            linalg::low_eigenpairs(self.gram.as_ref(), &chol, cutoff, DEFLATE_MAX_BLOCK, DEFLATE_ITERS)?;
        log::warn!(
            "Gram matrix is singular ({} eigenvalues below {cutoff:e}, smallest {:e}); using truncated pseudo-inverse",
            values.len(),
            values.first().copied().unwrap_or(f64::NAN)
        );
        Ok((Factor::Deflated { chol, dropped }, SolverKind::PseudoInverse))
    }

    fn eigen_factor(&self, shift: f64, allow_truncation: bool) -> Result<(Factor, SolverKind)> {
        let eig = SymEigen::new(self.gram.as_ref())?;
        let max = eig.values.first().copied().unwrap_or(0.0) + shift;
        let min = eig.values.last().copied().unwrap_or(0.0) + shift;
        let cutoff = SINGULAR_RTOL * max.abs();
        let singular_system = min <= cutoff;
        if singular_system && !allow_truncation {
            return Err(singular(min, max));
        }
        let kind = if singular_system {
            log::warn!("Gram matrix is singular (min {min:e}, max {max:e}); using truncated pseudo-inverse");
            SolverKind::PseudoInverse
        } else {
            SolverKind::Eigen
        };
        Ok((Factor::Eigen { eig, shift, cutoff }, kind))
    }
}

fn singular(min: f64, max: f64) -> Error {
    Error::SingularGram {
        min_eigenvalue: min,
        max_eigenvalue: max,
        condition: if min > 0.0 { max / min } else { f64::INFINITY },
    }
}

/// Fit kernel ridge regression (`lambda > 0`) or the minimum-norm
/// interpolant (`lambda = 0`).
pub fn fit(
    x: MatRef<'_, f64>,
    y: &[f64],
    spec: &KernelSpec,
    lambda: f64,
    convention: RidgeConvention,
    opts: FitOptions,
) -> Result<FitState> {
    KernelRidge::new(spec, x)?.fit(y, lambda, convention, opts)
}

const PREDICT_CHUNK: usize = 1024;

/// `K(X_test, X) a`
pub fn predict(state: &FitState, xtest: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if xtest.ncols() != state.x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: state.x.ncols(),
            found: xtest.ncols(),
        });
    }
    let n = state.x.nrows();
    let a = Mat::from_fn(n, 1, |i, _| state.coefficients[i]);
    let mut out = Vec::with_capacity(xtest.nrows());
    let mut start = 0;
    while start < xtest.nrows() {
        let len = PREDICT_CHUNK.min(xtest.nrows() - start);
        let block = xtest.subrows(start, len);
        let k = kernel::cross_gram(&state.spec, block, state.x.as_ref())?;
        let p = &k * &a;
        out.extend((0..len).map(|i| p[(i, 0)]));
        start += len;
    }
    Ok(out)
}

/// `sum (pred - target)^2 / sum (mean(baseline) - baseline)^2`
pub fn normalized_test_error(predictions: &[f64], targets: &[f64], baseline: &[f64]) -> Result<f64> {
    let m = predictions.len();
    if targets.len() != m || baseline.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: targets.len().min(baseline.len()),
        });
    }
    if m < 2 {
        return Err(Error::InvalidInput("normalized error needs at least two points".into()));
    }
    let mean = baseline.iter().sum::<f64>() / m as f64;
    let denom: f64 = baseline.iter().map(|y| (y - mean).powi(2)).sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroBaselineVariance);
    }
    let num: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub risk: f64,
    pub variance_part: f64,
    pub bias_part: f64,
}

/// Exact conditional risk `E_{Y|X} |f - f*|^2` of the interpolant, averaged
/// over the rows of `xtest`, split into variance and bias. The noise has
/// variance `sigma^2`; `f_train` and `f_test` are `f*` at the training and
/// test points.
pub fn analytic_conditional_risk(
    state: &FitState,
    f_train: &[f64],
    f_test: &[f64],
    sigma: f64,
    xtest: MatRef<'_, f64>,
) -> Result<RiskDecomposition> {
    if state.effective_ridge() != 0.0 {
        return Err(Error::InvalidInput(
            "analytic conditional risk is defined for the interpolating fit (lambda = 0)".into(),
        ));
    }
    let n = state.x.nrows();
    let m = xtest.nrows();
    if f_train.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f_train.len(),
        });
    }
    if f_test.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: f_test.len(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidInput("need at least one evaluation point".into()));
    }
    let kxt = kernel::cross_gram(&state.spec, state.x.as_ref(), xtest)?;
    // Column j holds K(X,X)^{-1} K(X, x_j).
    let w = state.factor.solve_mat(kxt.as_ref());
    let s2 = sigma * sigma;
    let (mut var, mut bias, mut total) = (0.0, 0.0, 0.0);
    for j in 0..m {
        let (mut norm2, mut fit) = (0.0, 0.0);
        for i in 0..n {
            let wij = w[(i, j)];
            norm2 += wij * wij;
            fit += wij * f_train[i];
        }
        let v = s2 * norm2;
        let b = (fit - f_test[j]).powi(2);
        var += v;
        bias += b;
        total += v + b;
    }
    let mf = m as f64;
    Ok(RiskDecomposition {
        risk: total / mf,
        variance_part: var / mf,
        bias_part: bias / mf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;

    fn data(n: usize, d: usize) -> Mat<f64> {
        Mat::from_fn(n, d, |i, j| ((i * 13 + j * 7) % 17) as f64 / 4.0 - 2.0)
    }

    #[test]
    fn single_point_prediction() {
        let x = Mat::from_fn(1, 2, |_, j| j as f64);
        let spec = KernelSpec::gaussian();
        for (lambda, conv) in [
            (0.0, RidgeConvention::Plain),
            (0.5, RidgeConvention::Plain),
            (0.5, RidgeConvention::Scaled),
        ] {
            let st = fit(x.as_ref(), &[3.0], &spec, lambda, conv, FitOptions::default()).unwrap();
            let q = Mat::from_fn(1, 2, |_, j| 0.3 + j as f64);
            let p = predict(&st, q.as_ref()).unwrap()[0];
            let k = spec.eval(&[0.3, 1.3], &[0.0, 1.0]);
            assert_relative_eq!(p, k * 3.0 / (1.0 + conv.effective(lambda, 1)), epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let x = data(10, 3);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let st = fit(
            x.as_ref(),
            &y,
            &KernelSpec::gaussian(),
            1e8,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        let p = predict(&st, x.as_ref()).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let x = data(5, 3);
        let st = fit(
            x.as_ref(),
            &[0.0; 5],
            &KernelSpec::gaussian(),
            0.0,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        assert!(st.coefficients().iter().all(|&a| a == 0.0));
        assert!(predict(&st, x.as_ref()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deflated_pseudo_inverse_matches_dense() {
        // Near-duplicate rows leave a few eigenvalues far below the cutoff
        // while the Cholesky factorization still succeeds.
        let (n, d) = (60, 10);
        let hash = |k: usize| {
            let v = (k as f64 * 12.9898).sin() * 43758.5453;
            (v - v.floor()) * 2.0 - 1.0
        };
        let x = Mat::from_fn(n, d, |i, j| {
            let (base, jitter) = if i >= 56 {
                (i - 56, 1e-6 * (j + 1) as f64)
            } else {
                (i, 0.0)
            };
            hash(base * d + j) * 3f64.sqrt() + jitter
        });
        let y: Vec<f64> = (0..n).map(|i| ((i * 7) as f64 * 0.3).cos()).collect();
        let kr = KernelRidge::new(&KernelSpec::gaussian(), x.as_ref()).unwrap();
        let chol = Cholesky::new(kr.gram()).expect("positive definite in floating point");
        let max = linalg::sym_eigenvalues(kr.gram()).unwrap()[0];
        let cutoff = SINGULAR_RTOL * max;
        let (deflated, kind) = kr.deflated_factor(chol, cutoff).unwrap();
        assert_eq!(kind, SolverKind::PseudoInverse);
        let (dense, _) = kr.eigen_factor(0.0, true).unwrap();
        let rhs = Mat::from_fn(n, 1, |i, _| y[i]);
        let a = deflated.solve_mat(rhs.as_ref());
        let b = dense.solve_mat(rhs.as_ref());
        let scale = (0..n).map(|i| b[(i, 0)].abs()).fold(0.0, f64::max);
        for i in 0..n {
            assert!(
                (a[(i, 0)] - b[(i, 0)]).abs() <= 1e-6 * scale,
                "{} vs {}",
                a[(i, 0)],
                b[(i, 0)]
            );
        }
        match deflated {
            Factor::Deflated { dropped, .. } => assert_eq!(dropped.ncols(), 4),
            _ => unreachable!(),
        }
    }

    #[test]
    fn singular_gram_is_rejected_unless_pseudo_inverse() {
        // Duplicate rows make the Gram matrix exactly singular.
        let x = Mat::from_fn(4, 2, |i, j| ((i % 2) + j) as f64);
        let y = [1.0, 2.0, 1.0, 2.0];
        let err = fit(
            x.as_ref(),
            &y,
            &KernelSpec::gaussian(),
            0.0,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularGram { .. }), "{err:?}");
        let st = fit(
            x.as_ref(),
            &y,
            &KernelSpec::gaussian(),
            0.0,
            RidgeConvention::Plain,
            FitOptions { pseudo_inverse: true },
        )
        .unwrap();
        assert_eq!(st.solver(), SolverKind::PseudoInverse);
        let p = predict(&st, x.as_ref()).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rbf_prediction_vanishes_far_away() {
        let x = data(6, 2);
        let y = [1.0, -1.0, 2.0, 0.5, 0.0, 3.0];
        let st = fit(
            x.as_ref(),
            &y,
            &KernelSpec::gaussian(),
            0.0,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        let far = Mat::from_fn(1, 2, |_, _| 1e4);
        assert_eq!(predict(&st, far.as_ref()).unwrap()[0], 0.0);
    }

    #[test]
    fn normalized_error_cases() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(normalized_test_error(&t, &t, &t).unwrap(), 0.0);
        let mean = 7.0 / 3.0;
        assert_relative_eq!(normalized_test_error(&[mean; 3], &t, &t).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            normalized_test_error(&t, &t, &[1.0; 3]),
            Err(Error::ZeroBaselineVariance)
        ));
        assert!(normalized_test_error(&[1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn risk_parts() {
        let x = data(8, 3);
        let f: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let st = fit(
            x.as_ref(),
            &f,
            &KernelSpec::gaussian(),
            0.0,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        let xt = Mat::from_fn(5, 3, |i, j| (i as f64) * 0.3 - j as f64 * 0.2);
        let ft: Vec<f64> = (0..5).map(|i| (i as f64).cos()).collect();
        let r0 = analytic_conditional_risk(&st, &f, &ft, 0.0, xt.as_ref()).unwrap();
        assert_eq!(r0.variance_part, 0.0);
        let rz = analytic_conditional_risk(&st, &[0.0; 8], &[0.0; 5], 0.3, xt.as_ref()).unwrap();
        assert_eq!(rz.bias_part, 0.0);
        let r = analytic_conditional_risk(&st, &f, &ft, 0.3, xt.as_ref()).unwrap();
        assert!((r.risk - (r.variance_part + r.bias_part)).abs() < 1e-12);

        let ridge = fit(
            x.as_ref(),
            &f,
            &KernelSpec::gaussian(),
            0.1,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        assert!(analytic_conditional_risk(&ridge, &f, &ft, 0.3, xt.as_ref()).is_err());
    }

    #[test]
    fn input_validation() {
        let x = data(4, 2);
        let spec = KernelSpec::gaussian();
        assert!(fit(
            x.as_ref(),
            &[1.0; 3],
            &spec,
            0.0,
            RidgeConvention::Plain,
            FitOptions::default()
        )
        .is_err());
        assert!(fit(
            x.as_ref(),
            &[1.0; 4],
            &spec,
            -1.0,
            RidgeConvention::Plain,
            FitOptions::default()
        )
        .is_err());
        let st = fit(
            x.as_ref(),
            &[1.0, 2.0, 3.0, 4.0],
            &spec,
            0.1,
            RidgeConvention::Plain,
            FitOptions::default(),
        )
        .unwrap();
        let bad = Mat::<f64>::zeros(2, 3);
        assert!(predict(&st, bad.as_ref()).is_err());
    }
}
