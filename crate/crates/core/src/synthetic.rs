//! Gaussian designs under a covariance model, an RKHS target, and the
//! kappa sweep and table reproductions built on them.

use std::io::Write;
use web_time::Instant;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{self, AssumptionProfile, CertificateOptions};
use crate::error::{Error, Result};
use crate::estimator::{self, FitOptions, KernelRidge, RidgeConvention};
use crate::kernel::{self, curvature_constants, KernelSpec, RegMode};
use crate::rng::{substream, Stream};
use crate::spectra::{NoiseKind, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub model: SpectrumModel,
    pub spec: KernelSpec,
    pub sigma: f64,
    /// Number of RKHS centers in the target.
    pub centers: usize,
    pub n_test: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseKind,
}

impl SyntheticConfig {
    pub fn new(n: usize, model: SpectrumModel, seed: u64) -> Self {
        Self {
            n,
            model,
            spec: KernelSpec::gaussian(),
            sigma: 0.1,
            centers: 100,
            n_test: 2000,
            seed,
            noise: NoiseKind::Gaussian,
        }
    }

    pub fn d(&self) -> usize {
        self.model.d
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_test == 0 || self.centers == 0 || self.model.d == 0 {
            return Err(Error::InvalidInput("n, n_test, centers and d must all be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `f*(x) = sum_l K(x, theta_l)`
#[derive(Debug, Clone)]
pub struct RkhsTarget {
    pub spec: KernelSpec,
    pub centers: Mat<f64>,
}

impl RkhsTarget {
    pub fn values(&self, x: MatRef<'_, f64>) -> Result<Vec<f64>> {
        let k = kernel::cross_gram(&self.spec, x, self.centers.as_ref())?;
        Ok((0..x.nrows())
            .map(|i| (0..k.ncols()).map(|l| k[(i, l)]).sum())
            .collect())
    }

    /// `|f*|_H^2 = sum_{l,l'} K(theta_l, theta_l')`
    pub fn norm_sq(&self) -> Result<f64> {
        let g = kernel::gram(&self.spec, self.centers.as_ref())?;
        let mut s = 0.0;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                s += g[(i, j)];
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub xtest: Mat<f64>,
    pub ytest: Vec<f64>,
    pub f_train: Vec<f64>,
    pub f_test: Vec<f64>,
    pub target: RkhsTarget,
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let d = config.d();
    let seed = config.seed;
    let x = config
        .model
        .sample(config.n, config.noise, &mut substream(seed, Stream::Design));
    let xtest = config
        .model
        .sample(config.n_test, config.noise, &mut substream(seed, Stream::TestDesign));
    let centers = fill_normal(Mat::zeros(config.centers, d), &mut substream(seed, Stream::Centers));
    let target = RkhsTarget {
        spec: config.spec,
        centers,
    };
    let f_train = target.values(x.as_ref())?;
    let f_test = target.values(xtest.as_ref())?;
    let y = add_noise(&f_train, config.sigma, &mut substream(seed, Stream::TrainNoise));
    let ytest = add_noise(&f_test, config.sigma, &mut substream(seed, Stream::TestNoise));
    Ok(SyntheticData {
        x,
        y,
        xtest,
        ytest,
        f_train,
        f_test,
        target,
    })
}

fn fill_normal<R: Rng>(mut m: Mat<f64>, rng: &mut R) -> Mat<f64> {
    // Row-major, like the design.
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn add_noise<R: Rng>(f: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    f.iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + sigma * e
        })
        .collect()
}

/// Normalized variance and bias with the trace-proxy `r` of the model.
pub fn normalized_bounds(x: MatRef<'_, f64>, model: &SpectrumModel, spec: &KernelSpec) -> Result<(f64, f64, f64)> {
    let c = curvature_constants(
        spec,
        model.trace_ratio(),
        model.trace_sq_ratio(),
        model.d,
        RegMode::TraceProxy,
    )?;
    let profile = AssumptionProfile::new(1.0, 1.0, spec.bound, x.nrows(), x.ncols())?;
    let report = bounds::certificate(x, spec, &c, &profile, &CertificateOptions::default())?;
    Ok((report.v, report.b, c.r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// `NaN` when the interpolant could not be computed.
    pub error: f64,
    pub v: f64,
    pub b: f64,
    pub r: f64,
    pub runtime_s: f64,
    /// Empty on success, otherwise the failure message.
    pub status: String,
}

pub const SWEEP_HEADER: &str = "kappa,n,d,seed,error,V,B,r";

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.kappa, r.n, r.d, r.seed, r.error, r.v, r.b, r.r
        )?;
    }
    Ok(())
}

/// Fit the interpolant on one synthetic draw and score it on fresh points
/// against the noiseless target.
pub fn interpolation_error(data: &SyntheticData, spec: &KernelSpec, opts: FitOptions) -> Result<f64> {
    let mut kr = KernelRidge::new(spec, data.x.as_ref())?;
    let state = kr.fit(&data.y, 0.0, RidgeConvention::Plain, opts)?;
    let pred = estimator::predict(&state, data.xtest.as_ref())?;
    estimator::normalized_test_error(&pred, &data.f_test, &data.ytest)
}

/// One row per `(size, kappa, seed)`, in that nesting order. Every cell of a
/// given seed shares the same underlying Gaussian draws. Failed cells get
/// `error = NaN` and a status message; the sweep continues.
pub fn kappa_sweep(
    base: &SyntheticConfig,
    kappa_grid: &[f64],
    sizes: &[(usize, usize)],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if kappa_grid.is_empty() || sizes.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput(
            "sweep grid, sizes and seeds must be nonempty".into(),
        ));
    }
    let mut cells = Vec::new();
    for &(n, d) in sizes {
        for &kappa in kappa_grid {
            let model = SpectrumModel::kappa(kappa, d)?;
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.n = n;
                cfg.model = model.clone();
                cfg.seed = seed;
                cfg.validate()?;
                cells.push((kappa, cfg));
            }
        }
    }
    Ok(run_cells(&cells, jobs, |(kappa, cfg)| sweep_cell(*kappa, cfg)))
}

fn sweep_cell(kappa: f64, cfg: &SyntheticConfig) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        kappa,
        n: cfg.n,
        d: cfg.d(),
        seed: cfg.seed,
        error: f64::NAN,
        v: f64::NAN,
        b: f64::NAN,
        r: f64::NAN,
        runtime_s: 0.0,
        status: String::new(),
    };
    let outcome = generate(cfg).and_then(|data| {
        let (v, b, r) = normalized_bounds(data.x.as_ref(), &cfg.model, &cfg.spec)?;
        row.v = v;
        row.b = b;
        row.r = r;
        interpolation_error(&data, &cfg.spec, FitOptions::default())
    });
    match outcome {
        Ok(e) => {
            row.error = e;
            log::info!(
                "kappa={kappa:.4} n={} seed={}: error {e:.4e}, V {:.4e}, B {:.4e}",
                cfg.n,
                cfg.seed,
                row.v,
                row.b
            );
        }
        Err(e) => {
            log::warn!("kappa sweep cell (kappa={kappa}, n={}, seed={}): {e}", cfg.n, cfg.seed);
            row.status = e.to_string();
        }
    }
    row.runtime_s = start.elapsed().as_secs_f64();
    row
}

/// Map over cells on a pool of `jobs` workers; output order follows input.
pub fn run_cells<T, R, F>(cells: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if jobs > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                return pool.install(|| cells.par_iter().map(&f).collect());
            }
        }
    }
    let _ = jobs;
    cells.iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    /// `n > d`: d = 100, n in {500, 2000}.
    Table1,
    /// `d > n`: d = 2000, n in {400, 100}.
    Table2,
}

impl Table {
    pub fn d(&self) -> usize {
        match self {
            Table::Table1 => 100,
            Table::Table2 => 2000,
        }
    }

    pub fn sizes(&self) -> [usize; 2] {
        match self {
            Table::Table1 => [500, 2000],
            Table::Table2 => [400, 100],
        }
    }

    /// `n/d` for the first table, `d/n` for the second.
    pub fn ratio(&self, n: usize) -> f64 {
        match self {
            Table::Table1 => n as f64 / self.d() as f64,
            Table::Table2 => self.d() as f64 / n as f64,
        }
    }

    pub fn kappas() -> [f64; 3] {
        [(-1.0_f64).exp(), 1.0, 1.0_f64.exp()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kappa: f64,
    pub ratio: f64,
    pub n: usize,
    pub d: usize,
    pub r: f64,
    pub v_mean: f64,
    pub v_sd: f64,
    pub b_mean: f64,
    pub b_sd: f64,
    pub seeds: usize,
}

pub const TABLE_HEADER: &str = "kappa,ratio,n,d,r,V_mean,V_sd,B_mean,B_sd,seeds";

pub fn write_table_csv<W: Write>(mut w: W, rows: &[TableRow]) -> std::io::Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.kappa, r.ratio, r.n, r.d, r.r, r.v_mean, r.v_sd, r.b_mean, r.b_sd, r.seeds
        )?;
    }
    Ok(())
}

/// Normalized variance and bias bounds on Gaussian designs, averaged over
/// `seeds` consecutive seeds starting at `base_seed`. Rows are ordered by
/// kappa, then by `n` as listed in [`Table::sizes`].
pub fn table_run(table: Table, seeds: usize, base_seed: u64, jobs: usize) -> Result<Vec<TableRow>> {
    if seeds == 0 {
        return Err(Error::InvalidInput("table run needs at least one seed".into()));
    }
    let d = table.d();
    let spec = KernelSpec::gaussian();
    let mut cells = Vec::new();
    for kappa in Table::kappas() {
        let model = SpectrumModel::kappa(kappa, d)?;
        for n in table.sizes() {
            for s in 0..seeds as u64 {
                cells.push((kappa, n, model.clone(), base_seed + s));
            }
        }
    }
    let results = run_cells(&cells, jobs, |(_, n, model, seed)| {
        let x = model.sample(*n, NoiseKind::Gaussian, &mut substream(*seed, Stream::Design));
        normalized_bounds(x.as_ref(), model, &spec)
    });
    let mut results = results.into_iter();
    let mut rows = Vec::new();
    for chunk in cells.chunks(seeds) {
        let (kappa, n, _, _) = &chunk[0];
        let mut vs = Vec::with_capacity(seeds);
        let mut bs = Vec::with_capacity(seeds);
        let mut r = 0.0;
        for item in results.by_ref().take(seeds) {
            let (v, b, rr) = item?;
            vs.push(v);
            bs.push(b);
            r = rr;
        }
        let (v_mean, v_sd) = mean_sd(&vs);
        let (b_mean, b_sd) = mean_sd(&bs);
        rows.push(TableRow {
            kappa: *kappa,
            ratio: table.ratio(*n),
            n: *n,
            d,
            r,
            v_mean,
            v_sd,
            b_mean,
            b_sd,
            seeds,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRun {
    pub seed: u64,
    pub phi: f64,
    pub risk: f64,
    pub covered: bool,
}

/// Compare the full-prefactor certificate with the exact conditional risk of
/// the interpolant, one run per seed. Runs with a singular Gram are skipped.
pub fn certificate_coverage(config: &SyntheticConfig, seeds: &[u64]) -> Result<Vec<CoverageRun>> {
    let model = &config.model;
    let c = curvature_constants(
        &config.spec,
        model.trace_ratio(),
        model.trace_sq_ratio(),
        model.d,
        RegMode::TraceProxy,
    )?;
    let mut out = Vec::new();
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let data = generate(&cfg)?;
        let profile = AssumptionProfile::new(cfg.sigma, data.target.norm_sq()?.sqrt(), cfg.spec.bound, cfg.n, cfg.d())?;
        let opts = CertificateOptions {
            normalized: false,
            k_max: None,
            sigma_op: model.op_norm(),
        };
        let report = bounds::certificate(data.x.as_ref(), &cfg.spec, &c, &profile, &opts)?;
        let state = match estimator::fit(
            data.x.as_ref(),
            &data.y,
            &cfg.spec,
            0.0,
            RidgeConvention::Plain,
            FitOptions::default(),
        ) {
            Ok(s) => s,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        };
        let risk =
            estimator::analytic_conditional_risk(&state, &data.f_train, &data.f_test, cfg.sigma, data.xtest.as_ref())?;
        out.push(CoverageRun {
            seed,
            phi: report.phi,
            risk: risk.risk,
            covered: report.phi >= risk.risk,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationRow {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Operator norm of `K - K_lin`.
    pub error: f64,
}

/// `|K(X, X) - K_lin(X, X)|` on isotropic Gaussian designs for an
/// inner-product kernel, one row per `(size, seed)`.
pub fn linearization_check(
    spec: &KernelSpec,
    sizes: &[(usize, usize)],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<LinearizationRow>> {
    let mut cells = Vec::new();
    for &(n, d) in sizes {
        let model = SpectrumModel::identity(d)?;
        for &seed in seeds {
            cells.push((n, model.clone(), seed));
        }
    }
    run_cells(&cells, jobs, |(n, model, seed)| {
        let c = curvature_constants(
            spec,
            model.trace_ratio(),
            model.trace_sq_ratio(),
            model.d,
            RegMode::Exact,
        )?;
        let x = model.sample(*n, NoiseKind::Gaussian, &mut substream(*seed, Stream::Design));
        Ok(LinearizationRow {
            n: *n,
            d: model.d,
            seed: *seed,
            error: kernel::linearization_error(spec, x.as_ref(), &c)?,
        })
    })
    .into_iter()
    .collect()
}

/// Median of a nonempty slice (mean of the middle pair for even length).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}
