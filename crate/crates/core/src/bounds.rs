//! Data-dependent variance and bias bounds for the interpolant, and the
//! closed-form rates they imply for a few spectrum families.

use std::io::Write;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{CurvatureConstants, GramSystem, KernelFamily, KernelSpec, RegMode};
use crate::linalg::{self, MomentSide};
use crate::spectra::SpectrumModel;

/// Model assumptions that enter the bounds as prefactors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionProfile {
    /// Noise standard deviation.
    pub sigma: f64,
    /// RKHS norm of the target.
    pub f_norm: f64,
    /// Upper bound on the kernel.
    pub bound_m: f64,
    /// Moment exponent of the coordinates. Only enters remainder terms,
    /// which are not computed.
    pub m_moments: Option<f64>,
    /// `d / n`
    pub ratio: f64,
}

impl AssumptionProfile {
    pub fn new(sigma: f64, f_norm: f64, bound_m: f64, n: usize, d: usize) -> Result<Self> {
        let p = Self {
            sigma,
            f_norm,
            bound_m,
            m_moments: None,
            ratio: d as f64 / n.max(1) as f64,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.f_norm >= 0.0 && self.f_norm.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "f_norm must be finite and >= 0, got {}",
                self.f_norm
            )));
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidInput(format!("d/n must be positive, got {}", self.ratio)));
        }
        Ok(())
    }
}

/// `sum_j t_j / (r + t_j)^2`
pub fn effective_rank_sum(eigs: &[f64], r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(eigs.iter().map(|&t| f_r(t.max(0.0), r)).sum())
}

/// `t / (r + t)^2`, at most `1 / (4r)`.
pub fn f_r(t: f64, r: f64) -> f64 {
    t / ((r + t) * (r + t))
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::NonPositiveRegularization { r });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceBound {
    pub value: f64,
    /// Contribution of each eigenvalue, prefactor included.
    pub terms: Vec<f64>,
    /// Whether the rank-one `11ᵀ` term was part of the spectrum.
    pub rank_one_included: bool,
}

/// Variance bound from the spectrum of `X Xᵀ / d`.
///
/// Normalized: `(1/d) sum_j f_r(lambda_j(X Xᵀ/d))`.
/// Full: `(8 sigma^2 |Sigma| / d) sum_j f_r(lambda_j(X Xᵀ/d + (alpha/beta) 11ᵀ))`.
/// The rank-one term needs exact constants; with the trace proxy it is dropped.
pub fn variance_bound(
    x: MatRef<'_, f64>,
    c: &CurvatureConstants,
    profile: &AssumptionProfile,
    sigma_op: f64,
    normalized: bool,
) -> Result<VarianceBound> {
    let (n, d) = (x.nrows(), x.ncols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("variance bound needs n, d >= 1".into()));
    }
    let r = c.r;
    check_r(r)?;
    let df = d as f64;
    let with_rank_one = !normalized && c.r_mode == RegMode::Exact;
    let eigs = if with_rank_one {
        shifted_moment_eigenvalues(x, c.alpha_over_beta())?
    } else {
        linalg::moment_eigenvalues(x, 1.0 / df, MomentSide::Rows)?
    };
    let prefactor = if normalized {
        1.0 / df
    } else {
        8.0 * profile.sigma * profile.sigma * sigma_op / df
    };
    let terms: Vec<f64> = eigs.iter().map(|&t| prefactor * f_r(t.max(0.0), r)).collect();
    Ok(VarianceBound {
        value: terms.iter().sum(),
        terms,
        rank_one_included: with_rank_one,
    })
}

/// Eigenvalues of `X Xᵀ/d + w 11ᵀ`.
fn shifted_moment_eigenvalues(x: MatRef<'_, f64>, w: f64) -> Result<Vec<f64>> {
    let (n, d) = (x.nrows(), x.ncols());
    let df = d as f64;
    if w >= 0.0 {
        // Append the column sqrt(d w) 1 so the sum is a single Gram product.
        let c = (df * w).sqrt();
        let aug = Mat::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { c });
        linalg::moment_eigenvalues(aug.as_ref(), 1.0 / df, MomentSide::Rows)
    } else {
        let mut a = linalg::outer_gram(x, 1.0 / df);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += w;
            }
        }
        linalg::sym_eigenvalues(a.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasBound {
    pub value: f64,
    /// `B(k)` for `k = 0..=k_max`, without the `|f*|^2` prefactor.
    pub curve: Vec<f64>,
    pub k_star: usize,
}

/// `|f*|^2 min_k [ (1/n) sum_{j>k} lambda_j(K) + 2 sqrt(k/n) sqrt(diag_sq_mean) ]`.
/// The prefactor is dropped when `normalized`.
pub fn bias_bound(
    gram_eigs: &[f64],
    diag_sq_mean: f64,
    f_norm: f64,
    normalized: bool,
    k_max: Option<usize>,
) -> Result<BiasBound> {
    let n = gram_eigs.len();
    if n == 0 {
        return Err(Error::InvalidInput("bias bound needs a nonempty spectrum".into()));
    }
    if gram_eigs.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("Gram eigenvalues must be sorted descending".into()));
    }
    let k_max = k_max.unwrap_or(n);
    if k_max > n {
        return Err(Error::InvalidInput(format!("k_max = {k_max} exceeds n = {n}")));
    }
    let nf = n as f64;
    let root_diag = diag_sq_mean.max(0.0).sqrt();
    // tail[k] = sum_{j >= k} lambda_j, clipping round-off negatives.
    let mut tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tail[j] = tail[j + 1] + gram_eigs[j].max(0.0);
    }
    let curve: Vec<f64> = (0..=k_max)
        .map(|k| tail[k] / nf + 2.0 * (k as f64 / nf).sqrt() * root_diag)
        .collect();
    let (k_star, best) = argmin(&curve);
    let scale = if normalized { 1.0 } else { f_norm * f_norm };
    Ok(BiasBound {
        value: scale * best,
        curve,
        k_star,
    })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |(bk, bv), (k, x)| if x < bv { (k, x) } else { (bk, bv) },
    )
}

/// Bias of the linearized kernel with `k = 0`: `r + Tr(X Xᵀ)/(d n)`.
pub fn linearized_bias(x: MatRef<'_, f64>, r: f64) -> f64 {
    let (n, d) = (x.nrows(), x.ncols());
    let mut tr = 0.0;
    for j in 0..d {
        for i in 0..n {
            tr += x[(i, j)] * x[(i, j)];
        }
    }
    r + tr / (d as f64 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    /// Drop absolute constants and the noise and target prefactors.
    pub normalized: bool,
    /// Largest `k` in the bias infimum (default `n`).
    pub k_max: Option<usize>,
    /// Operator norm of the covariance (default 1, the assumed upper bound).
    pub sigma_op: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            normalized: true,
            k_max: None,
            sigma_op: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub v: f64,
    pub b: f64,
    pub phi: f64,
    pub k_star: usize,
    pub bias_curve: Vec<f64>,
    pub variance_terms: Vec<f64>,
    pub normalized: bool,
    pub r_used: f64,
    pub r_mode: RegMode,
    pub n: usize,
    pub d: usize,
    /// The high-probability remainder term is never included in `phi`.
    pub residual_omitted: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "n,d,V,B,phi,k_star,r,r_mode,normalized,residual_omitted";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.v,
            self.b,
            self.phi,
            self.k_star,
            self.r_used,
            match self.r_mode {
                RegMode::Exact => "exact",
                RegMode::TraceProxy => "trace_proxy",
            },
            self.normalized,
            self.residual_omitted
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())
    }
}

/// Assemble `phi = V + B` for a design `X`.
///
/// Normalized reports use the linearized `k = 0` bias; full reports take the
/// infimum over `k` using the spectrum of `K(X, X)`.
pub fn certificate(
    x: MatRef<'_, f64>,
    spec: &KernelSpec,
    c: &CurvatureConstants,
    profile: &AssumptionProfile,
    opts: &CertificateOptions,
) -> Result<BoundReport> {
    profile.validate()?;
    let (n, d) = (x.nrows(), x.ncols());
    let var = variance_bound(x, c, profile, opts.sigma_op, opts.normalized)?;
    let mut notes = Vec::new();
    if !opts.normalized && !var.rank_one_included {
        notes.push("rank-one term omitted from the variance spectrum (trace-proxy r)".to_string());
    }
    let bias = if opts.normalized {
        let b = linearized_bias(x, c.r);
        BiasBound {
            value: b,
            curve: vec![b],
            k_star: 0,
        }
    } else {
        let g = GramSystem::new(spec, x)?;
        bias_bound(g.eigenvalues()?, g.diag_sq_mean(), profile.f_norm, false, opts.k_max)?
    };
    if spec.family == KernelFamily::Rbf && c.r_mode == RegMode::TraceProxy {
        notes.push("r is the trace proxy (Tr(Sigma)/d)^2".to_string());
    }
    Ok(BoundReport {
        v: var.value,
        b: bias.value,
        phi: var.value + bias.value,
        k_star: bias.k_star,
        bias_curve: bias.curve,
        variance_terms: var.terms,
        normalized: opts.normalized,
        r_used: c.r,
        r_mode: c.r_mode,
        n,
        d,
        residual_omitted: true,
        notes,
    })
}

/// `(Tr(Sigma_hat)/d, Tr(Sigma_hat^2)/d^2)` with `Sigma_hat = Xᵀ X / n`.
pub fn empirical_trace_stats(x: MatRef<'_, f64>) -> Result<(f64, f64)> {
    let (n, d) = (x.nrows(), x.ncols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("trace statistics need n, d >= 1".into()));
    }
    let eig = linalg::moment_eigenvalues(x, 1.0 / n as f64, MomentSide::Cols)?;
    let df = d as f64;
    let tr = eig.iter().map(|v| v.max(0.0)).sum::<f64>() / df;
    let tr2 = eig.iter().map(|v| v * v).sum::<f64>() / (df * df);
    Ok((tr, tr2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NGtD,
    DGtN,
}

/// Closed-form `(V_hat, B_hat)` from the population spectrum.
///
/// `n > d`: `V_hat = Tr(Sigma^-1)/n`. `d > n`: `V_hat = (n/d)/(4r)`.
/// In both, `B_hat = r + Tr(Sigma)/d`.
pub fn closed_form_estimates(model: &SpectrumModel, n: usize, regime: Regime, r: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let d = model.d as f64;
    let b = r + model.trace_ratio();
    let v = match regime {
        Regime::NGtD => {
            let inv = model.inverse_trace().ok_or_else(|| {
                Error::InvalidInput("Tr(Sigma^-1) is undefined: the spectrum has zero eigenvalues".into())
            })?;
            inv / n as f64
        }
        Regime::DGtN => {
            check_r(r)?;
            (n as f64 / d) / (4.0 * r)
        }
    };
    Ok((v, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScalingExample {
    LowRank { eps: f64 },
    ApproxLowRank { eps: f64 },
    PowerLaw { a: f64 },
}

/// Orders of magnitude of the two terms for the standard examples with
/// `n > d`.
pub fn example_scalings(example: ScalingExample, n: usize, d: usize) -> (f64, f64) {
    let (nf, df) = (n as f64, d as f64);
    match example {
        ScalingExample::LowRank { eps } => (df / nf * eps, eps * eps + eps),
        ScalingExample::ApproxLowRank { eps } => (df / nf / eps, eps * eps + eps),
        ScalingExample::PowerLaw { a } => (df.powf(a + 1.0) / nf, df.powf(-2.0 * a) + df.powf(-a)),
    }
}
