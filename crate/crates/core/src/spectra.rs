//! Population covariance spectra, Gaussian sampling under a diagonal
//! covariance, empirical spectra and histograms.

use std::io::Write;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, MomentSide};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpectrumKind {
    /// `lambda_j = (1 - ((j-1)/d)^kappa)^(1/kappa)`
    KappaDecay { kappa: f64 },
    /// `ceil(eps d)` ones followed by zeros.
    LowRank { eps: f64 },
    /// One leading `1`, then `eps` repeated.
    ApproxLowRank { eps: f64 },
    /// `lambda_j = j^(-a)`
    PowerLaw { a: f64 },
    /// Explicit nonincreasing values in `[0, 1]`.
    Explicit { values: Vec<f64> },
}

/// Diagonal population covariance `Sigma_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub kind: SpectrumKind,
    pub d: usize,
}

impl SpectrumModel {
    pub fn new(kind: SpectrumKind, d: usize) -> Result<Self> {
        let m = Self { kind, d };
        m.validate()?;
        Ok(m)
    }

    pub fn kappa(kappa: f64, d: usize) -> Result<Self> {
        Self::new(SpectrumKind::KappaDecay { kappa }, d)
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(SpectrumKind::Explicit { values: vec![1.0; d] }, d)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("spectrum dimension d must be >= 1".into()));
        }
        match &self.kind {
            SpectrumKind::KappaDecay { kappa } => {
                if !(*kappa > 0.0) || !kappa.is_finite() {
                    return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
                }
            }
            SpectrumKind::LowRank { eps } => {
                if !(*eps > 0.0 && *eps < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "low-rank eps must lie in (0,1), got {eps}"
                    )));
                }
            }
            SpectrumKind::ApproxLowRank { eps } => {
                if !(*eps > 0.0 && *eps <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "approx-low-rank eps must lie in (0,1], got {eps}"
                    )));
                }
            }
            SpectrumKind::PowerLaw { a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "power-law exponent must lie in (0,1), got {a}"
                    )));
                }
            }
            SpectrumKind::Explicit { values } => {
                if values.len() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        found: values.len(),
                    });
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidInput("explicit eigenvalues must lie in [0, 1]".into()));
                }
                if values.windows(2).any(|w| w[0] < w[1]) {
                    return Err(Error::InvalidInput("explicit eigenvalues must be nonincreasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Population eigenvalues, nonincreasing, length `d`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.d;
        match &self.kind {
            SpectrumKind::KappaDecay { kappa } => (0..d)
                .map(|j| {
                    let t = (j as f64 / d as f64).powf(*kappa);
                    (1.0 - t).max(0.0).powf(1.0 / kappa)
                })
                .collect(),
            SpectrumKind::LowRank { eps } => {
                let ones = ((eps * d as f64).ceil() as usize).min(d);
                (0..d).map(|j| if j < ones { 1.0 } else { 0.0 }).collect()
            }
            SpectrumKind::ApproxLowRank { eps } => (0..d).map(|j| if j == 0 { 1.0 } else { *eps }).collect(),
            SpectrumKind::PowerLaw { a } => (1..=d).map(|j| (j as f64).powf(-a)).collect(),
            SpectrumKind::Explicit { values } => values.clone(),
        }
    }

    /// `Tr(Sigma)/d`
    pub fn trace_ratio(&self) -> f64 {
        self.eigenvalues().iter().sum::<f64>() / self.d as f64
    }

    /// `Tr(Sigma^2)/d^2`
    pub fn trace_sq_ratio(&self) -> f64 {
        let d = self.d as f64;
        self.eigenvalues().iter().map(|v| v * v).sum::<f64>() / (d * d)
    }

    /// `Tr(Sigma^{-1})`, `None` when some eigenvalue is zero.
    pub fn inverse_trace(&self) -> Option<f64> {
        let ev = self.eigenvalues();
        if ev.iter().any(|&v| v <= 0.0) {
            None
        } else {
            Some(ev.iter().map(|v| 1.0 / v).sum())
        }
    }

    pub fn op_norm(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(0.0, f64::max)
    }

    /// Draw `n` rows `x_i = Sigma^{1/2} z_i`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, noise: NoiseKind, rng: &mut R) -> Mat<f64> {
        let scale: Vec<f64> = self.eigenvalues().iter().map(|v| v.sqrt()).collect();
        sample_scaled(n, &scale, noise, rng)
    }
}

/// Entry distribution for `z`. Both have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    BoundedUniform,
}

/// Rows are filled in order, so a prefix of `n` rows does not depend on
/// how many rows are drawn after it.
pub fn sample_scaled<R: Rng + ?Sized>(n: usize, scale: &[f64], noise: NoiseKind, rng: &mut R) -> Mat<f64> {
    let d = scale.len();
    let mut z = vec![0.0; n * d];
    match noise {
        NoiseKind::Gaussian => {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
        }
        NoiseKind::BoundedUniform => {
            let s3 = 3.0_f64.sqrt();
            let u = Uniform::new_inclusive(-s3, s3).expect("valid uniform bounds");
            for v in z.iter_mut() {
                *v = u.sample(rng);
            }
        }
    }
    Mat::from_fn(n, d, |i, j| z[i * d + j] * scale[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Eigenvalues of `Xᵀ X / n` (length d).
    ColsOverN,
    /// Eigenvalues of `X Xᵀ / d` (length n).
    RowsOverD,
}

/// Empirical second-moment spectrum, descending.
pub fn empirical_spectrum(x: MatRef<'_, f64>, convention: Convention) -> Result<Vec<f64>> {
    let (n, d) = (x.nrows(), x.ncols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("empirical spectrum needs n, d >= 1".into()));
    }
    match convention {
        Convention::ColsOverN => linalg::moment_eigenvalues(x, 1.0 / n as f64, MomentSide::Cols),
        Convention::RowsOverD => linalg::moment_eigenvalues(x, 1.0 / d as f64, MomentSide::Rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges from 0 to the maximum value.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram on `[0, max]`. Bins are closed on the left, the
/// last bin is also closed on the right. Negative round-off goes to bin 0.
pub fn spectrum_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::InvalidInput("histogram of an empty spectrum".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges = (0..=bins)
        .map(|k| if k == bins && max > 0.0 { max } else { k as f64 * width })
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let idx = if v <= 0.0 {
            0
        } else if v >= max {
            bins - 1
        } else {
            ((v / width) as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// `index,value` with 1-based index.
pub fn write_spectrum_csv<W: Write>(mut w: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, v)?;
    }
    Ok(())
}

/// `bin_lo,bin_hi,count`
pub fn write_histogram_csv<W: Write>(mut w: W, h: &Histogram) -> std::io::Result<()> {
    writeln!(w, "bin_lo,bin_hi,count")?;
    for (k, c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", h.edges[k], h.edges[k + 1], c)?;
    }
    Ok(())
}
