//! IDX ingestion and digit-pair kernel ridge experiments on MNIST.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxErrorKind, Result};
use crate::estimator::{self, FitOptions, KernelRidge, RidgeConvention, SolverKind};
use crate::kernel::{self, GramSystem, KernelSpec};
use crate::linalg::{self, MomentSide};
use crate::rng::{substream_raw, Stream};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Environment variable naming the directory that holds the IDX files.
pub const DIR_ENV: &str = "RIDGELESS_MNIST_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major, row-major within an image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, k: usize) -> &[u8] {
        let p = self.dim();
        &self.pixels[k * p..(k + 1) * p]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(IdxImages),
    Labels(Vec<u8>),
}

fn idx_err(offset: u64, kind: IdxErrorKind) -> Error {
    Error::Idx { offset, kind }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(idx_err(
            offset as u64,
            IdxErrorKind::Truncated {
                needed: 4,
                available: bytes.len().saturating_sub(offset) as u64,
            },
        )),
    }
}

/// Parse an IDX file, gunzipping first when it starts with the gzip magic.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        flate2::read::GzDecoder::new(bytes).read_to_end(&mut raw)?;
        return parse_raw(&raw);
    }
    parse_raw(bytes)
}

fn parse_raw(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0)?;
    match magic {
        IMAGES_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            if rows == 0 || cols == 0 {
                return Err(idx_err(
                    8,
                    IdxErrorKind::DimMismatch(format!("image size {rows}x{cols}")),
                ));
            }
            let len = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or_else(|| idx_err(4, IdxErrorKind::DimMismatch(format!("{count}x{rows}x{cols} overflows"))))?;
            let payload = payload(bytes, 16, len)?;
            Ok(IdxData::Images(IdxImages {
                rows,
                cols,
                pixels: payload.to_vec(),
            }))
        }
        LABELS_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let payload = payload(bytes, 8, count)?;
            if let Some(k) = payload.iter().position(|&l| l > 9) {
                return Err(idx_err((8 + k) as u64, IdxErrorKind::BadLabel(payload[k])));
            }
            Ok(IdxData::Labels(payload.to_vec()))
        }
        other => Err(idx_err(0, IdxErrorKind::UnsupportedMagic(other))),
    }
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let available = bytes.len() - header;
    if available < len {
        return Err(idx_err(
            header as u64,
            IdxErrorKind::Truncated {
                needed: len as u64,
                available: available as u64,
            },
        ));
    }
    if available > len {
        return Err(idx_err(
            (header + len) as u64,
            IdxErrorKind::DimMismatch(format!("{} trailing bytes after payload", available - len)),
        ));
    }
    Ok(&bytes[header..])
}

pub fn read_idx(path: &Path) -> Result<IdxData> {
    parse_idx(&std::fs::read(path)?)
}

pub fn write_idx_images<W: Write>(mut w: W, images: &IdxImages) -> std::io::Result<()> {
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [images.count(), images.rows, images.cols] {
        w.write_all(&(v as u32).to_be_bytes())?;
    }
    w.write_all(&images.pixels)
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> std::io::Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)
}

/// `$RIDGELESS_MNIST_DIR`, else `$HOME/.cache/ridgeless/mnist`.
pub fn default_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(DIR_ENV) {
        return PathBuf::from(d);
    }
    let home = std::env::var_os("HOME")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("ridgeless").join("mnist")
}

/// Path of `name` or `name.gz` inside `dir`, whichever exists.
pub fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train_images: IdxImages,
    pub train_labels: Vec<u8>,
    pub test_images: IdxImages,
    pub test_labels: Vec<u8>,
}

impl Mnist {
    pub fn load(dir: &Path) -> Result<Self> {
        let images = |name: &str| -> Result<IdxImages> {
            match read_idx(&find(dir, name)?)? {
                IdxData::Images(i) => Ok(i),
                IdxData::Labels(_) => Err(Error::InvalidInput(format!("{name} holds labels, expected images"))),
            }
        };
        let labels = |name: &str| -> Result<Vec<u8>> {
            match read_idx(&find(dir, name)?)? {
                IdxData::Labels(l) => Ok(l),
                IdxData::Images(_) => Err(Error::InvalidInput(format!("{name} holds images, expected labels"))),
            }
        };
        let m = Self {
            train_images: images(TRAIN_IMAGES)?,
            train_labels: labels(TRAIN_LABELS)?,
            test_images: images(TEST_IMAGES)?,
            test_labels: labels(TEST_LABELS)?,
        };
        for (imgs, labs, what) in [
            (&m.train_images, &m.train_labels, "train"),
            (&m.test_images, &m.test_labels, "test"),
        ] {
            if imgs.count() != labs.len() {
                return Err(idx_err(
                    4,
                    IdxErrorKind::DimMismatch(format!("{what}: {} images but {} labels", imgs.count(), labs.len())),
                ));
            }
        }
        Ok(m)
    }
}

fn find(dir: &Path, name: &str) -> Result<PathBuf> {
    locate(dir, name).ok_or_else(|| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{name}(.gz) not found in {}", dir.display()),
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelScale {
    /// Pixels divided by 255.
    #[default]
    Unit,
    /// Pixels as 0..=255.
    Raw,
}

impl PixelScale {
    pub fn factor(&self) -> f64 {
        match self {
            PixelScale::Unit => 1.0 / 255.0,
            PixelScale::Raw => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PixelScale::Unit => "unit",
            PixelScale::Raw => "raw",
        }
    }
}

/// Images of digits `i` (label `+1`) and `j` (label `-1`), in file order.
pub fn pair_data(images: &IdxImages, labels: &[u8], i: u8, j: u8, scale: PixelScale) -> (Mat<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..labels.len())
        .filter(|&k| labels[k] == i || labels[k] == j)
        .collect();
    select(images, labels, &idx, i, scale)
}

fn select(images: &IdxImages, labels: &[u8], idx: &[usize], i: u8, scale: PixelScale) -> (Mat<f64>, Vec<f64>) {
    let f = scale.factor();
    let x = Mat::from_fn(idx.len(), images.dim(), |r, c| images.image(idx[r])[c] as f64 * f);
    let y = idx.iter().map(|&k| if labels[k] == i { 1.0 } else { -1.0 }).collect();
    (x, y)
}

pub const DEFAULT_LAMBDAS: [f64; 9] = [0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28];
pub const REPORT_LAMBDAS: [f64; 3] = [0.0, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExperiment {
    pub lambdas: Vec<f64>,
    /// Cap on the training size per pair, drawn without replacement.
    pub subsample: Option<usize>,
    pub pixel_scale: PixelScale,
    pub convention: RidgeConvention,
    pub seed: u64,
    /// Retry a singular interpolation problem with the pseudo-inverse.
    pub pseudo_inverse_fallback: bool,
    /// Refuse Gram systems whose matrix plus factor exceed this many bytes.
    pub max_gram_bytes: Option<u64>,
}

impl Default for PairExperiment {
    fn default() -> Self {
        Self {
            lambdas: REPORT_LAMBDAS.to_vec(),
            subsample: None,
            pixel_scale: PixelScale::Unit,
            convention: RidgeConvention::Plain,
            seed: 0,
            pseudo_inverse_fallback: true,
            max_gram_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub i: u8,
    pub j: u8,
    pub lambda: f64,
    pub error_pct: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub pixel_scale: PixelScale,
    pub convention: RidgeConvention,
    pub solver: SolverKind,
}

pub const PAIRS_HEADER: &str = "i,j,lambda,error_pct,n_train,n_test,pixel_scale,convention";

pub fn write_pairs_csv<W: Write>(mut w: W, rows: &[PairRow]) -> std::io::Result<()> {
    writeln!(w, "{PAIRS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.i,
            r.j,
            r.lambda,
            r.error_pct,
            r.n_train,
            r.n_test,
            r.pixel_scale.name(),
            match r.convention {
                RidgeConvention::Plain => "plain",
                RidgeConvention::Scaled => "scaled",
            }
        )?;
    }
    Ok(())
}

/// Gaussian kernel on 784-dimensional pixel vectors.
pub fn pair_kernel() -> KernelSpec {
    KernelSpec::gaussian()
}

/// Training (possibly subsampled) and test sets for a digit pair.
pub fn pair_split(data: &Mnist, i: u8, j: u8, exp: &PairExperiment) -> Result<PairSplit> {
    check_pair(i, j)?;
    let mut idx: Vec<usize> = (0..data.train_labels.len())
        .filter(|&k| data.train_labels[k] == i || data.train_labels[k] == j)
        .collect();
    if let Some(cap) = exp.subsample {
        if cap == 0 {
            return Err(Error::InvalidInput("subsample must be >= 1".into()));
        }
        if cap < idx.len() {
            let mut rng = substream_raw(exp.seed, pair_stream(i, j));
            let mut pick = rand::seq::index::sample(&mut rng, idx.len(), cap).into_vec();
            pick.sort_unstable();
            idx = pick.into_iter().map(|p| idx[p]).collect();
        }
    }
    let (x, y) = select(&data.train_images, &data.train_labels, &idx, i, exp.pixel_scale);
    let (xt, yt) = pair_data(&data.test_images, &data.test_labels, i, j, exp.pixel_scale);
    Ok(PairSplit { i, j, x, y, xt, yt })
}

fn pair_stream(i: u8, j: u8) -> u64 {
    ((Stream::Subsample as u64) << 8) | (10 * i as u64 + j as u64)
}

fn check_pair(i: u8, j: u8) -> Result<()> {
    if i > 9 || j > 9 || i == j {
        return Err(Error::InvalidInput(format!(
            "digit pair ({i}, {j}) must be two distinct digits 0-9"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PairSplit {
    pub i: u8,
    pub j: u8,
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub xt: Mat<f64>,
    pub yt: Vec<f64>,
}

/// Kernel ridge regression on one split for every lambda in the grid. The
/// Gram matrix and test kernel are built once. Errors are percentages of
/// the test-set variance of the labels.
pub fn run_split(split: &PairSplit, exp: &PairExperiment) -> Result<Vec<PairRow>> {
    let n = split.x.nrows();
    if let Some(budget) = exp.max_gram_bytes {
        let need = 2 * (n as u64) * (n as u64) * 8;
        if need > budget {
            return Err(Error::InvalidInput(format!(
                "pair ({}, {}): n = {n} needs about {} MB for the Gram system, over the {} MB budget; use a subsample",
                split.i,
                split.j,
                need >> 20,
                budget >> 20
            )));
        }
    }
    if exp.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("lambda grid must be finite and nonnegative".into()));
    }
    let spec = pair_kernel();
    let mut kr = KernelRidge::new(&spec, split.x.as_ref())?;
    let kt = kernel::cross_gram(&spec, split.xt.as_ref(), split.x.as_ref())?;
    let mut rows = Vec::with_capacity(exp.lambdas.len());
    for &lambda in &exp.lambdas {
        let state = match kr.fit(&split.y, lambda, exp.convention, FitOptions::default()) {
            Err(Error::SingularGram { condition, .. }) if exp.pseudo_inverse_fallback => {
                log::warn!(
                    "mnist pair ({}, {}) lambda={lambda}: singular Gram (condition {condition:e}), using pseudo-inverse",
                    split.i,
                    split.j
                );
                kr.fit(&split.y, lambda, exp.convention, FitOptions { pseudo_inverse: true })?
            }
            other => other?,
        };
        let pred = linalg::matvec(kt.as_ref(), state.coefficients());
        let err = estimator::normalized_test_error(&pred, &split.yt, &split.yt)?;
        rows.push(PairRow {
            i: split.i,
            j: split.j,
            lambda,
            error_pct: 100.0 * err,
            n_train: n,
            n_test: split.xt.nrows(),
            pixel_scale: exp.pixel_scale,
            convention: exp.convention,
            solver: state.solver(),
        });
    }
    Ok(rows)
}

pub fn run_pair(data: &Mnist, i: u8, j: u8, exp: &PairExperiment) -> Result<Vec<PairRow>> {
    run_split(&pair_split(data, i, j, exp)?, exp)
}

/// All 45 pairs `i < j`.
pub fn all_pairs() -> Vec<(u8, u8)> {
    (0..10u8).flat_map(|i| (i + 1..10).map(move |j| (i, j))).collect()
}

/// Rows in the layout of the published table: one line per pair, errors in
/// percent for each lambda.
pub fn pair_error_report(rows: &[PairRow]) -> String {
    let mut lambdas: Vec<f64> = Vec::new();
    for r in rows {
        if !lambdas.contains(&r.lambda) {
            lambdas.push(r.lambda);
        }
    }
    let mut out = String::from("Digits pair: [i, j] Error: [");
    let heads: Vec<String> = lambdas.iter().map(|l| format!("Lambda={l}")).collect();
    out.push_str(&heads.join(" "));
    out.push_str("]\n");
    let mut pairs: Vec<(u8, u8)> = Vec::new();
    for r in rows {
        if !pairs.contains(&(r.i, r.j)) {
            pairs.push((r.i, r.j));
        }
    }
    for (i, j) in pairs {
        let errs: Vec<String> = lambdas
            .iter()
            .map(|l| {
                rows.iter()
                    .find(|r| r.i == i && r.j == j && r.lambda == *l)
                    .map(|r| format!("{:<10.3}", r.error_pct))
                    .unwrap_or_else(|| format!("{:<10}", "-"))
            })
            .collect();
        let _ = writeln!(out, "digits pair: [{i}, {j}] error: [{}]", errs.join(" ").trim_end());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Eigenvalues of `K(X, X)/n`, descending.
    pub gram: Vec<f64>,
    /// Eigenvalues of `Xᵀ X / n`, descending.
    pub covariance: Vec<f64>,
}

pub fn spectral_report(x: MatRef<'_, f64>) -> Result<SpectralReport> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("spectral report needs at least one image".into()));
    }
    let g = GramSystem::new(&pair_kernel(), x)?;
    let nf = n as f64;
    let gram = g.eigenvalues()?.iter().map(|v| (v / nf).max(0.0)).collect();
    let covariance = linalg::moment_eigenvalues(x, 1.0 / nf, MomentSide::Cols)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    Ok(SpectralReport { gram, covariance })
}

pub fn write_spectral_csv<W: Write>(mut w: W, r: &SpectralReport) -> std::io::Result<()> {
    writeln!(w, "index,gram,covariance")?;
    let len = r.gram.len().max(r.covariance.len());
    for k in 0..len {
        let cell = |v: &[f64]| v.get(k).map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", k + 1, cell(&r.gram), cell(&r.covariance))?;
    }
    Ok(())
}
