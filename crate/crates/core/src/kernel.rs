//! Kernel profiles, Gram and cross-kernel evaluation, curvature constants,
//! and the linearized-kernel surrogate.
//!
//! Inner-product kernels are `K(x, x') = h(<x, x'> / d)` and RBF kernels are
//! `K(x, x') = h(|x - x'|^2 / d)`, where `h` is a scalar profile that is smooth
//! at zero.

use std::sync::OnceLock;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    InnerProduct,
    Rbf,
}

/// Scalar profile `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Profile {
    /// `h(t) = exp(2t)`
    Exp2t,
    /// `h(t) = exp(-t)`
    ExpNegT,
    /// `h(t) = t`
    Linear,
    /// Second-order polynomial with `h(0) = h0`, `h'(0) = h1`, `h''(0) = h2`.
    Taylor { h0: f64, h1: f64, h2: f64 },
}

impl Profile {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Profile::Exp2t => (2.0 * t).exp(),
            Profile::ExpNegT => (-t).exp(),
            Profile::Linear => t,
            Profile::Taylor { h0, h1, h2 } => h0 + h1 * t + 0.5 * h2 * t * t,
        }
    }

    /// `(h(0), h'(0), h''(0))`
    pub fn derivatives_at_zero(&self) -> (f64, f64, f64) {
        match *self {
            Profile::Exp2t => (1.0, 2.0, 4.0),
            Profile::ExpNegT => (1.0, -1.0, 1.0),
            Profile::Linear => (0.0, 1.0, 0.0),
            Profile::Taylor { h0, h1, h2 } => (h0, h1, h2),
        }
    }
}

/// A kernel: family, profile and an upper bound `M` on `K(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub profile: Profile,
    pub bound: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, profile: Profile, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel bound M must be positive and finite, got {bound}"
            )));
        }
        Ok(Self { family, profile, bound })
    }

    /// `exp(-|x - x'|^2 / d)`, the Gaussian kernel used in the experiments.
    pub fn gaussian() -> Self {
        Self {
            family: KernelFamily::Rbf,
            profile: Profile::ExpNegT,
            bound: 1.0,
        }
    }

    /// `exp(2 <x, x'> / d)`. The bound assumes `|x|^2 / d <= 1`.
    pub fn exp_inner_product() -> Self {
        Self {
            family: KernelFamily::InnerProduct,
            profile: Profile::Exp2t,
            bound: std::f64::consts::E * std::f64::consts::E,
        }
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::InnerProduct,
            profile: Profile::Linear,
            bound: 1.0,
        }
    }

    /// Kernel value from the inner product and squared norms of two points.
    #[inline]
    fn eval_products(&self, xx: f64, yy: f64, xy: f64, d: f64) -> f64 {
        match self.family {
            KernelFamily::InnerProduct => self.profile.value(xy / d),
            KernelFamily::Rbf => self.profile.value((xx + yy - 2.0 * xy).max(0.0) / d),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = x.len() as f64;
        let xy = linalg::dot(x, y);
        match self.family {
            KernelFamily::InnerProduct => self.profile.value(xy / d),
            KernelFamily::Rbf => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                self.profile.value(sq / d)
            }
        }
    }
}

/// How the implicit regularization `r` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// `r = gamma / beta`
    Exact,
    /// `r = (Tr(Sigma) / d)^2`
    TraceProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Implicit regularization.
    pub r: f64,
    pub r_mode: RegMode,
}

impl CurvatureConstants {
    /// `alpha / beta`, the weight of the rank-one `11ᵀ` term.
    pub fn alpha_over_beta(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Curvature constants of `h` given covariance trace statistics.
///
/// `trace_ratio` is `Tr(Sigma)/d` and `sq_trace_ratio` is `Tr(Sigma^2)/d^2`.
/// For RBF kernels only the trace proxy is available; `alpha`, `beta` and
/// `gamma` are then the inner-product formulas evaluated on the profile.
pub fn curvature_constants(
    spec: &KernelSpec,
    trace_ratio: f64,
    sq_trace_ratio: f64,
    d: usize,
    mode: RegMode,
) -> Result<CurvatureConstants> {
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    if !(trace_ratio > 0.0 && trace_ratio <= 1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "Tr(Sigma)/d must lie in (0, 1], got {trace_ratio}"
        )));
    }
    if !(sq_trace_ratio >= 0.0) || !sq_trace_ratio.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Tr(Sigma^2)/d^2 must be finite and nonnegative, got {sq_trace_ratio}"
        )));
    }
    let h = &spec.profile;
    let (h0, h1, h2) = h.derivatives_at_zero();
    let alpha = h0 + h2 * sq_trace_ratio;
    let beta = h1;
    let gamma = h.value(trace_ratio) - h0 - h1 * trace_ratio;
    let r = match mode {
        RegMode::Exact => {
            if spec.family == KernelFamily::Rbf {
                return Err(Error::UnsupportedFamily);
            }
            if beta == 0.0 {
                return Err(Error::DegenerateKernel);
            }
            gamma / beta
        }
        RegMode::TraceProxy => trace_ratio * trace_ratio,
    };
    Ok(CurvatureConstants {
        alpha,
        beta,
        gamma,
        r,
        r_mode: mode,
    })
}

/// Kernel matrix together with lazily computed spectrum.
#[derive(Debug)]
pub struct GramSystem {
    gram: Mat<f64>,
    eigenvalues: OnceLock<Vec<f64>>,
}

impl GramSystem {
    pub fn new(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<Self> {
        Ok(Self::from_matrix(gram(spec, x)?))
    }

    pub fn from_matrix(gram: Mat<f64>) -> Self {
        Self {
            gram,
            eigenvalues: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.gram
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.nrows() == 0
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Result<&[f64]> {
        if let Some(v) = self.eigenvalues.get() {
            return Ok(v);
        }
        let v = linalg::sym_eigenvalues(self.gram.as_ref())?;
        Ok(self.eigenvalues.get_or_init(|| v))
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.gram[(i, i)]).sum()
    }

    /// `sum_i K(x_i, x_i)^2 / n`
    pub fn diag_sq_mean(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| self.gram[(i, i)].powi(2)).sum::<f64>() / n as f64
    }
}

/// `K(X, X)`. The upper triangle is evaluated and mirrored.
pub fn gram(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (n, d) = (x.nrows(), x.ncols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("gram needs n >= 1 and d >= 1".into()));
    }
    let g = x * x.transpose();
    let df = d as f64;
    let mut out = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_products(g[(i, i)], g[(j, j)], g[(i, j)], df);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `K(A, B)` as an `m x n` matrix, rows of `a` against rows of `b`.
pub fn cross_gram(spec: &KernelSpec, a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            found: a.ncols(),
        });
    }
    let d = a.ncols() as f64;
    let ab = a * b.transpose();
    let aa: Vec<f64> = (0..a.nrows()).map(|i| row_sq_norm(a, i)).collect();
    let bb: Vec<f64> = (0..b.nrows()).map(|j| row_sq_norm(b, j)).collect();
    Ok(Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
        spec.eval_products(aa[i], bb[j], ab[(i, j)], d)
    }))
}

/// `K(x, X)` for a single point.
pub fn cross_kernel(spec: &KernelSpec, x: &[f64], data: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if x.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            found: x.len(),
        });
    }
    let row = Mat::from_fn(1, x.len(), |_, j| x[j]);
    let k = cross_gram(spec, row.as_ref(), data)?;
    Ok((0..data.nrows()).map(|j| k[(0, j)]).collect())
}

fn row_sq_norm(a: MatRef<'_, f64>, i: usize) -> f64 {
    (0..a.ncols()).map(|j| a[(i, j)] * a[(i, j)]).sum()
}

/// `gamma I + alpha 11ᵀ + beta X Xᵀ / d`
pub fn linearized_gram(x: MatRef<'_, f64>, c: &CurvatureConstants) -> Mat<f64> {
    let d = x.ncols().max(1) as f64;
    let mut k = linalg::outer_gram(x, c.beta / d);
    let n = k.nrows();
    for j in 0..n {
        for i in 0..n {
            k[(i, j)] += c.alpha;
        }
        k[(j, j)] += c.gamma;
    }
    k
}

/// Operator norm `|K(X, X) - K_lin(X, X)|`.
pub fn linearization_error(spec: &KernelSpec, x: MatRef<'_, f64>, c: &CurvatureConstants) -> Result<f64> {
    if spec.family != KernelFamily::InnerProduct {
        return Err(Error::UnsupportedFamily);
    }
    let k = gram(spec, x)?;
    let lin = linearized_gram(x, c);
    linalg::sym_op_norm((&k - &lin).as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp2t_curvature_constants() {
        let d = 100;
        let c = curvature_constants(&KernelSpec::exp_inner_product(), 1.0, 1.0 / d as f64, d, RegMode::Exact).unwrap();
        assert_eq!(c.beta, 2.0);
        assert_relative_eq!(c.alpha, 1.0 + 4.0 / 100.0, epsilon = 1e-15);
        let e2 = std::f64::consts::E.powi(2);
        assert_relative_eq!(c.gamma, e2 - 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.gamma, 4.389_056, epsilon = 1e-6);
        assert_relative_eq!(c.r, c.gamma / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_kernel_has_no_curvature() {
        for s in [0.1, 0.5, 1.0] {
            let c = curvature_constants(&KernelSpec::linear(), s, 0.3, 10, RegMode::Exact).unwrap();
            assert_eq!(c.gamma, 0.0);
            assert_eq!(c.alpha, 0.0);
            assert_eq!(c.beta, 1.0);
        }
    }

    #[test]
    fn trace_proxy_uses_squared_trace_ratio() {
        let c = curvature_constants(&KernelSpec::gaussian(), 0.5, 0.01, 100, RegMode::TraceProxy).unwrap();
        assert_eq!(c.r, 0.25);
        assert_eq!(c.r_mode, RegMode::TraceProxy);
    }

    #[test]
    fn curvature_errors() {
        let flat = KernelSpec::new(
            KernelFamily::InnerProduct,
            Profile::Taylor {
                h0: 1.0,
                h1: 0.0,
                h2: 1.0,
            },
            2.0,
        )
        .unwrap();
        assert!(matches!(
            curvature_constants(&flat, 0.5, 0.1, 4, RegMode::Exact),
            Err(Error::DegenerateKernel)
        ));
        assert!(matches!(
            curvature_constants(&KernelSpec::gaussian(), 0.5, 0.1, 4, RegMode::Exact),
            Err(Error::UnsupportedFamily)
        ));
        assert!(curvature_constants(&flat, 0.0, 0.1, 4, RegMode::TraceProxy).is_err());
        assert!(curvature_constants(&flat, 0.5, 0.1, 0, RegMode::TraceProxy).is_err());
        assert!(KernelSpec::new(KernelFamily::Rbf, Profile::ExpNegT, 0.0).is_err());
    }

    #[test]
    fn rbf_gram_has_unit_diagonal_and_is_symmetric() {
        let x = Mat::from_fn(7, 3, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let k = gram(&KernelSpec::gaussian(), x.as_ref()).unwrap();
        for i in 0..7 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..7 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn linear_gram_single_row() {
        let x = Mat::from_fn(1, 4, |_, _| 1.0);
        let k = gram(&KernelSpec::linear(), x.as_ref()).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn orthogonal_rows_give_h0_off_diagonal() {
        let x = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let k = gram(&KernelSpec::exp_inner_product(), x.as_ref()).unwrap();
        assert_eq!(k[(0, 1)], 1.0);
        assert_eq!(k[(1, 0)], 1.0);
    }

    #[test]
    fn gram_reports_overflow_position() {
        let x = Mat::from_fn(3, 1, |i, _| if i == 2 { 1e3 } else { 0.1 });
        match gram(&KernelSpec::exp_inner_product(), x.as_ref()) {
            Err(Error::NonFinite { row: 2, col: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_kernel_cases() {
        let x = Mat::from_fn(4, 3, |i, j| (i as f64) - (j as f64) * 0.5);
        let spec = KernelSpec::gaussian();
        let first: Vec<f64> = (0..3).map(|j| x[(0, j)]).collect();
        let k = cross_kernel(&spec, &first, x.as_ref()).unwrap();
        assert_eq!(k[0], 1.0);

        let far = vec![1e4; 3];
        let k = cross_kernel(&spec, &far, x.as_ref()).unwrap();
        assert!(k.iter().all(|&v| v == 0.0));

        let rows = Mat::from_fn(2, 3, |i, j| if j == i { 1.0 } else { 0.0 });
        let ortho = vec![0.0, 0.0, 5.0];
        let k = cross_kernel(&KernelSpec::linear(), &ortho, rows.as_ref()).unwrap();
        assert_eq!(k, vec![0.0, 0.0]);
    }

    #[test]
    fn linearized_gram_cases() {
        let c = CurvatureConstants {
            alpha: 0.7,
            beta: 2.0,
            gamma: 0.3,
            r: 0.15,
            r_mode: RegMode::Exact,
        };
        let zero = Mat::<f64>::zeros(3, 5);
        let k = linearized_gram(zero.as_ref(), &c);
        for i in 0..3 {
            for j in 0..3 {
                let expect = 0.7 + if i == j { 0.3 } else { 0.0 };
                assert_relative_eq!(k[(i, j)], expect, epsilon = 1e-15);
            }
        }
        let row = Mat::from_fn(1, 4, |_, j| j as f64);
        let k = linearized_gram(row.as_ref(), &c);
        assert_relative_eq!(k[(0, 0)], 0.3 + 0.7 + 2.0 * 14.0 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_kernel_is_its_own_linearization() {
        let x = Mat::from_fn(6, 4, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
        let spec = KernelSpec::linear();
        let c = curvature_constants(&spec, 0.5, 0.1, 4, RegMode::Exact).unwrap();
        assert!(linearization_error(&spec, x.as_ref(), &c).unwrap() < 1e-12);
    }

    #[test]
    fn zero_data_linearization_error() {
        // X = 0 and Tr(Sigma^2) = 0: K = h(0) 11ᵀ and alpha = h(0); only gamma I remains.
        let x = Mat::<f64>::zeros(5, 10);
        let spec = KernelSpec::exp_inner_product();
        let c = curvature_constants(&spec, 1e-300, 0.0, 10, RegMode::Exact).unwrap();
        assert!(c.gamma.abs() < 1e-290);
        assert!(linearization_error(&spec, x.as_ref(), &c).unwrap() < 1e-14);
    }
}
