mod fetch;
mod manifest;
mod matrix;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ridgeless::bounds::{self, AssumptionProfile, CertificateOptions};
use ridgeless::estimator::{self, FitOptions, RidgeConvention};
use ridgeless::kernel::{curvature_constants, KernelSpec, RegMode};
use ridgeless::mnist::{self, Mnist, PairExperiment, PixelScale};
use ridgeless::rng::{substream, Stream};
use ridgeless::spectra::{self, Convention, NoiseKind, SpectrumKind, SpectrumModel};
use ridgeless::synthetic::{self, SyntheticConfig, Table};

use manifest::Run;

#[derive(Parser)]
#[command(
    name = "ridgeless",
    version,
    about = "Minimum-norm kernel interpolation: fits, bounds and experiments"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Seed for every stochastic quantity.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps and pairs (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Solve singular interpolation problems with a truncated pseudo-inverse.
    #[arg(long, global = true)]
    pseudo_inverse: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance and bias bounds for a design matrix.
    Certificate(CertificateArgs),
    /// Fit the interpolant or kernel ridge regression on CSV data.
    Fit(FitArgs),
    /// Test error and bounds across spectral decays.
    SweepKappa(SweepArgs),
    /// Bounds for the n > d table.
    Table1(TableArgs),
    /// Bounds for the d > n table.
    Table2(TableArgs),
    /// Operator-norm distance between a kernel matrix and its linearization.
    LinearizationCheck(LinearizationArgs),
    /// MNIST digit-pair experiments.
    #[command(subcommand)]
    Mnist(MnistCommand),
    /// Population and empirical covariance spectra.
    Spectra(SpectraArgs),
}

#[derive(Subcommand)]
enum MnistCommand {
    /// Download the IDX archives into the cache directory.
    Fetch(FetchArgs),
    /// Kernel ridge regression for digit pairs over a lambda grid.
    Pairs(PairsArgs),
    /// Eigenvalue decay of the Gram and covariance matrices of a pair.
    Spectra(MnistSpectraArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KernelChoice {
    /// exp(-|x - x'|^2 / d)
    Gaussian,
    /// exp(2 <x, x'> / d)
    ExpInner,
    /// <x, x'> / d
    Linear,
}

impl KernelChoice {
    fn spec(self) -> KernelSpec {
        match self {
            KernelChoice::Gaussian => KernelSpec::gaussian(),
            KernelChoice::ExpInner => KernelSpec::exp_inner_product(),
            KernelChoice::Linear => KernelSpec::linear(),
        }
    }

    fn default_mode(self) -> RegMode {
        match self {
            KernelChoice::Gaussian => RegMode::TraceProxy,
            _ => RegMode::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeChoice {
    Exact,
    TraceProxy,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ConventionChoice {
    /// K + lambda I
    Plain,
    /// K + n lambda I
    Scaled,
}

impl From<ConventionChoice> for RidgeConvention {
    fn from(c: ConventionChoice) -> Self {
        match c {
            ConventionChoice::Plain => RidgeConvention::Plain,
            ConventionChoice::Scaled => RidgeConvention::Scaled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScaleChoice {
    Unit,
    Raw,
}

impl From<ScaleChoice> for PixelScale {
    fn from(c: ScaleChoice) -> Self {
        match c {
            ScaleChoice::Unit => PixelScale::Unit,
            ScaleChoice::Raw => PixelScale::Raw,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NoiseChoice {
    Gaussian,
    BoundedUniform,
}

impl From<NoiseChoice> for NoiseKind {
    fn from(c: NoiseChoice) -> Self {
        match c {
            NoiseChoice::Gaussian => NoiseKind::Gaussian,
            NoiseChoice::BoundedUniform => NoiseKind::BoundedUniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SpectrumChoice {
    Kappa,
    LowRank,
    ApproxLowRank,
    PowerLaw,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ConventionSide {
    /// Eigenvalues of Xᵀ X / n
    ColsOverN,
    /// Eigenvalues of X Xᵀ / d
    RowsOverD,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct CertificateArgs {
    /// Design matrix as CSV, one row per sample. Without it a Gaussian
    /// design is drawn from the kappa model.
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelChoice,
    /// How r is computed (default: trace proxy for gaussian, exact otherwise).
    #[arg(long, value_enum)]
    r_mode: Option<ModeChoice>,
    /// Keep the noise, norm and absolute-constant prefactors.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// RKHS norm of the target.
    #[arg(long, default_value_t = 1.0)]
    f_norm: f64,
    /// Operator norm of the covariance (default 1).
    #[arg(long)]
    sigma_op: Option<f64>,
    /// Largest k in the bias infimum (default n).
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    xtest: Option<PathBuf>,
    /// Test responses; with them the normalized test error is reported.
    #[arg(long)]
    ytest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelChoice,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "plain")]
    convention: ConventionChoice,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SweepArgs {
    /// `a:b:k`: k values of kappa with ln(kappa) evenly spaced from a to b.
    #[arg(long, default_value = "-2:2:9", allow_hyphen_values = true)]
    grid_log: String,
    #[arg(long, default_value_t = 200)]
    d: usize,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n: Vec<usize>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    /// RKHS centers in the target function.
    #[arg(long, default_value_t = 100)]
    centers: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseChoice,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TableArgs {
    #[arg(long, default_value_t = 5)]
    seeds: usize,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct LinearizationArgs {
    /// `NxD` sizes.
    #[arg(long, value_delimiter = ',', default_value = "50x100,200x400,800x1600")]
    sizes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FetchArgs {
    /// Cache directory (default: $RIDGELESS_MNIST_DIR or ~/.cache/ridgeless/mnist).
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = fetch::DEFAULT_BASE_URL)]
    base_url: String,
    /// Copy IDX files from a local directory instead of downloading.
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PairsArgs {
    #[arg(long)]
    dir: Option<PathBuf>,
    /// `i-j` pairs, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pairs: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,1")]
    lambdas: Vec<f64>,
    /// Training points per pair.
    #[arg(long, default_value_t = 4000)]
    subsample: usize,
    /// Use every training image of the pair.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum, default_value = "unit")]
    pixel_scale: ScaleChoice,
    #[arg(long, value_enum, default_value = "plain")]
    convention: ConventionChoice,
    /// Refuse Gram systems larger than this (matrix plus factor).
    #[arg(long, default_value_t = 4096)]
    max_gram_mb: u64,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct MnistSpectraArgs {
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = "0-1")]
    pair: String,
    #[arg(long, default_value_t = 4000)]
    subsample: usize,
    #[arg(long, value_enum, default_value = "unit")]
    pixel_scale: ScaleChoice,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SpectraArgs {
    #[arg(long, value_enum, default_value = "kappa")]
    kind: SpectrumChoice,
    /// kappa, eps or the power-law exponent, depending on --kind.
    #[arg(long, default_value_t = 1.0)]
    param: f64,
    #[arg(long, default_value_t = 100)]
    d: usize,
    /// Also sample n rows and report their empirical spectrum.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value = "cols-over-n")]
    convention: ConventionSide,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = match params::expand(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cli::params: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for numerical failures, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<ridgeless::Error>())
        .any(|c| c.is_numerical());
    if numerical {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let start = Instant::now();
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        bail!("cli: --jobs must be at least 1");
    }
    let mut run = Run::new(cli.out, cli.seed, jobs, cli.pseudo_inverse);
    let (name, params) = match &cli.command {
        Command::Certificate(a) => (
            "certificate",
            cmd_certificate(a, &mut run).context("bounds::certificate")?,
        ),
        Command::Fit(a) => ("fit", cmd_fit(a, &mut run).context("estimator::fit")?),
        Command::SweepKappa(a) => ("sweep-kappa", cmd_sweep(a, &mut run).context("synthetic::kappa_sweep")?),
        Command::Table1(a) => (
            "table1",
            cmd_table(Table::Table1, a, &mut run).context("synthetic::table_run")?,
        ),
        Command::Table2(a) => (
            "table2",
            cmd_table(Table::Table2, a, &mut run).context("synthetic::table_run")?,
        ),
        Command::LinearizationCheck(a) => (
            "linearization-check",
            cmd_linearization(a, &mut run).context("kernel::linearization_error")?,
        ),
        Command::Mnist(MnistCommand::Fetch(a)) => ("mnist fetch", cmd_fetch(a).context("mnist::fetch")?),
        Command::Mnist(MnistCommand::Pairs(a)) => ("mnist pairs", cmd_pairs(a, &mut run).context("mnist::run_pair")?),
        Command::Mnist(MnistCommand::Spectra(a)) => (
            "mnist spectra",
            cmd_mnist_spectra(a, &mut run).context("mnist::spectral_report")?,
        ),
        Command::Spectra(a) => ("spectra", cmd_spectra(a, &mut run).context("spectra::eigenvalues")?),
    };
    run.finish(name, params, start.elapsed().as_secs_f64())
}

fn to_params<T: Serialize>(a: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(a)?)
}

fn cmd_certificate(a: &CertificateArgs, run: &mut Run) -> Result<serde_json::Value> {
    let spec = a.kernel.spec();
    let mode = match a.r_mode {
        Some(ModeChoice::Exact) => RegMode::Exact,
        Some(ModeChoice::TraceProxy) => RegMode::TraceProxy,
        None => a.kernel.default_mode(),
    };
    let (x, stats, sigma_op) = match &a.x {
        Some(path) => {
            let x = matrix::read_matrix(path)?;
            let stats = bounds::empirical_trace_stats(x.as_ref())?;
            (x, stats, a.sigma_op.unwrap_or(1.0))
        }
        None => {
            let model = SpectrumModel::kappa(a.kappa, a.d)?;
            let x = model.sample(a.n, NoiseKind::Gaussian, &mut substream(run.seed, Stream::Design));
            let stats = (model.trace_ratio(), model.trace_sq_ratio());
            (x, stats, a.sigma_op.unwrap_or(model.op_norm()))
        }
    };
    let (n, d) = (x.nrows(), x.ncols());
    let c = curvature_constants(&spec, stats.0, stats.1, d, mode)?;
    let profile = AssumptionProfile::new(a.sigma, a.f_norm, spec.bound, n, d)?;
    let opts = CertificateOptions {
        normalized: !a.full,
        k_max: a.k_max,
        sigma_op,
    };
    let report = bounds::certificate(x.as_ref(), &spec, &c, &profile, &opts)?;
    log::info!(
        "V = {}, B = {}, phi = {}, r = {}",
        report.v,
        report.b,
        report.phi,
        report.r_used
    );
    run.write_json(
        "certificate.json",
        &serde_json::json!({ "constants": c, "report": report }),
    )?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    run.write("certificate.csv", &csv)?;
    to_params(a)
}

fn cmd_fit(a: &FitArgs, run: &mut Run) -> Result<serde_json::Value> {
    let spec = a.kernel.spec();
    let x = matrix::read_matrix(&a.x)?;
    let y = matrix::read_vector(&a.y)?;
    let opts = FitOptions {
        pseudo_inverse: run.pseudo_inverse,
    };
    let state = estimator::fit(x.as_ref(), &y, &spec, a.lambda, a.convention.into(), opts)?;
    run.write(
        "coefficients.csv",
        matrix::vector_csv("coefficient", state.coefficients()).as_bytes(),
    )?;
    let mut summary = serde_json::json!({
        "n": x.nrows(),
        "d": x.ncols(),
        "lambda": a.lambda,
        "effective_ridge": state.effective_ridge(),
        "convention": state.convention(),
        "solver": state.solver(),
        "relative_residual": state.relative_residual(),
    });
    if let Some(xt) = &a.xtest {
        let xt = matrix::read_matrix(xt)?;
        let pred = estimator::predict(&state, xt.as_ref())?;
        run.write("predictions.csv", matrix::vector_csv("prediction", &pred).as_bytes())?;
        if let Some(yt) = &a.ytest {
            let yt = matrix::read_vector(yt)?;
            let err = estimator::normalized_test_error(&pred, &yt, &yt)?;
            log::info!("normalized test error {err}");
            summary["test_error"] = err.into();
        }
    } else if a.ytest.is_some() {
        bail!("--ytest needs --xtest");
    }
    run.write_json("fit.json", &summary)?;
    to_params(a)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, k] = parts[..] else {
        bail!("--grid-log expects a:b:k, got {spec}");
    };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let k: usize = k.parse()?;
    if k == 0 {
        bail!("--grid-log needs at least one point");
    }
    if k == 1 {
        return Ok(vec![a.exp()]);
    }
    Ok((0..k)
        .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
        .collect())
}

fn cmd_sweep(a: &SweepArgs, run: &mut Run) -> Result<serde_json::Value> {
    let grid = parse_grid(&a.grid_log)?;
    let mut base = SyntheticConfig::new(a.n[0], SpectrumModel::identity(a.d)?, run.seed);
    base.sigma = a.sigma;
    base.n_test = a.n_test;
    base.centers = a.centers;
    base.noise = a.noise.into();
    let sizes: Vec<(usize, usize)> = a.n.iter().map(|&n| (n, a.d)).collect();
    let seeds: Vec<u64> = (0..a.seeds).map(|s| run.seed + s).collect();
    let rows = synthetic::kappa_sweep(&base, &grid, &sizes, &seeds, run.jobs)?;
    let failed = rows.iter().filter(|r| !r.status.is_empty()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; their error is NaN", rows.len());
    }
    let mut csv = Vec::new();
    synthetic::write_sweep_csv(&mut csv, &rows)?;
    run.write("sweep.csv", &csv)?;
    run.write_json("sweep.json", &rows)?;
    to_params(a)
}

fn cmd_table(table: Table, a: &TableArgs, run: &mut Run) -> Result<serde_json::Value> {
    let rows = synthetic::table_run(table, a.seeds, run.seed, run.jobs)?;
    let mut csv = Vec::new();
    synthetic::write_table_csv(&mut csv, &rows)?;
    let name = match table {
        Table::Table1 => "table1.csv",
        Table::Table2 => "table2.csv",
    };
    run.write(name, &csv)?;
    to_params(a)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (n, d) = s
        .split_once('x')
        .with_context(|| format!("size {s} is not of the form NxD"))?;
    Ok((n.trim().parse()?, d.trim().parse()?))
}

fn cmd_linearization(a: &LinearizationArgs, run: &mut Run) -> Result<serde_json::Value> {
    let sizes: Vec<(usize, usize)> = a.sizes.iter().map(|s| parse_size(s)).collect::<Result<_>>()?;
    let seeds: Vec<u64> = (0..a.seeds).map(|s| run.seed + s).collect();
    let rows = synthetic::linearization_check(&KernelSpec::exp_inner_product(), &sizes, &seeds, run.jobs)?;
    let mut csv = String::from("n,d,seed,error\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.n, r.d, r.seed, r.error));
    }
    for &(n, d) in &sizes {
        let v: Vec<f64> = rows.iter().filter(|r| r.n == n && r.d == d).map(|r| r.error).collect();
        log::info!("n={n} d={d}: median |K - K_lin| = {}", synthetic::median(&v));
    }
    run.write("linearization.csv", csv.as_bytes())?;
    to_params(a)
}

fn cmd_fetch(a: &FetchArgs) -> Result<serde_json::Value> {
    let dir = a.dir.clone().unwrap_or_else(mnist::default_dir);
    match &a.from {
        Some(src) => fetch::copy_from(src, &dir)?,
        None => fetch::fetch(&dir, &a.base_url)?,
    }
    Mnist::load(&dir)?;
    log::info!("MNIST ready in {}", dir.display());
    to_params(a)
}

fn parse_pair(s: &str) -> Result<(u8, u8)> {
    let (i, j) = s
        .split_once('-')
        .with_context(|| format!("pair {s} is not of the form i-j"))?;
    let (i, j): (u8, u8) = (i.trim().parse()?, j.trim().parse()?);
    Ok(if i < j { (i, j) } else { (j, i) })
}

fn load_mnist(dir: &Option<PathBuf>) -> Result<Mnist> {
    let dir = dir.clone().unwrap_or_else(mnist::default_dir);
    Mnist::load(&dir).with_context(|| format!("loading MNIST from {} (run `ridgeless mnist fetch`)", dir.display()))
}

fn cmd_pairs(a: &PairsArgs, run: &mut Run) -> Result<serde_json::Value> {
    let pairs = if a.pairs.iter().any(|p| p == "all") {
        mnist::all_pairs()
    } else {
        a.pairs.iter().map(|p| parse_pair(p)).collect::<Result<_>>()?
    };
    let data = load_mnist(&a.dir)?;
    let exp = PairExperiment {
        lambdas: a.lambdas.clone(),
        subsample: if a.full { None } else { Some(a.subsample) },
        pixel_scale: a.pixel_scale.into(),
        convention: a.convention.into(),
        seed: run.seed,
        pseudo_inverse_fallback: true,
        max_gram_bytes: Some(a.max_gram_mb << 20),
    };
    let results = synthetic::run_cells(&pairs, run.jobs, |&(i, j)| {
        let t = Instant::now();
        let r = mnist::run_pair(&data, i, j, &exp);
        if let Ok(rows) = &r {
            let errs: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.error_pct)).collect();
            log::info!(
                "pair ({i}, {j}) n={} errors [{}]% in {:.1}s",
                rows.first().map_or(0, |r| r.n_train),
                errs.join(", "),
                t.elapsed().as_secs_f64()
            );
        }
        r
    });
    let mut rows = Vec::new();
    for (r, (i, j)) in results.into_iter().zip(&pairs) {
        rows.extend(r.with_context(|| format!("pair ({i}, {j})"))?);
    }
    let mut csv = Vec::new();
    mnist::write_pairs_csv(&mut csv, &rows)?;
    run.write("mnist_pairs.csv", &csv)?;
    run.write("mnist_report.txt", mnist::pair_error_report(&rows).as_bytes())?;
    to_params(a)
}

fn cmd_mnist_spectra(a: &MnistSpectraArgs, run: &mut Run) -> Result<serde_json::Value> {
    let (i, j) = parse_pair(&a.pair)?;
    let data = load_mnist(&a.dir)?;
    let exp = PairExperiment {
        subsample: Some(a.subsample),
        pixel_scale: a.pixel_scale.into(),
        seed: run.seed,
        ..PairExperiment::default()
    };
    let split = mnist::pair_split(&data, i, j, &exp)?;
    let report = mnist::spectral_report(split.x.as_ref())?;
    let mut csv = Vec::new();
    mnist::write_spectral_csv(&mut csv, &report)?;
    run.write("mnist_spectra.csv", &csv)?;
    to_params(a)
}

fn cmd_spectra(a: &SpectraArgs, run: &mut Run) -> Result<serde_json::Value> {
    let kind = match a.kind {
        SpectrumChoice::Kappa => SpectrumKind::KappaDecay { kappa: a.param },
        SpectrumChoice::LowRank => SpectrumKind::LowRank { eps: a.param },
        SpectrumChoice::ApproxLowRank => SpectrumKind::ApproxLowRank { eps: a.param },
        SpectrumChoice::PowerLaw => SpectrumKind::PowerLaw { a: a.param },
    };
    let model = SpectrumModel::new(kind, a.d)?;
    let eig = model.eigenvalues();
    let mut csv = Vec::new();
    spectra::write_spectrum_csv(&mut csv, &eig)?;
    run.write("spectrum.csv", &csv)?;
    let hist = spectra::spectrum_histogram(&eig, a.bins)?;
    let mut csv = Vec::new();
    spectra::write_histogram_csv(&mut csv, &hist)?;
    run.write("histogram.csv", &csv)?;
    if let Some(n) = a.n {
        let x = model.sample(n, NoiseKind::Gaussian, &mut substream(run.seed, Stream::Design));
        let conv = match a.convention {
            ConventionSide::ColsOverN => Convention::ColsOverN,
            ConventionSide::RowsOverD => Convention::RowsOverD,
        };
        let emp = spectra::empirical_spectrum(x.as_ref(), conv)?;
        let mut csv = Vec::new();
        spectra::write_spectrum_csv(&mut csv, &emp)?;
        run.write("empirical_spectrum.csv", &csv)?;
    }
    log::info!(
        "Tr(Sigma)/d = {}, trace-proxy r = {}",
        model.trace_ratio(),
        model.trace_ratio().powi(2)
    );
    to_params(a)
}
