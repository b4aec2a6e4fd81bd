//! Command-line front end.
//!
//! Every subcommand reads an optional JSON `--config` file whose keys are the
//! snake_case flag names. Values are layered as built-in defaults, then the
//! `RANDSMAP_SEED` environment variable (for `seed`), then the file, then
//! explicit flags. Unknown file keys are rejected.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 generation failure,
//! 4 missing or corrupt input, 5 numerical failure.

use crate::bench::{
    effective_p, feature_map, kernel_bound_check, run_table, tune, BenchmarkConfig, BenchmarkId, FitOptions, Method,
    Spread, TrainSet, DEFAULT_P_LADDER,
};
use crate::decoders::{
    conservation_residual, ddm_fit, pod_encode, pod_fit, randsmap_fit_with, residual_bound_holds, rfnn_fit,
    rfnn_fit_svd, DecoderModel, KnnModel, KnnOptions, RandsmapOptions,
};
use crate::dmap::{dm_encode, dm_fit_with, DmModel, DmParams, EigenNorm};
use crate::error::Error;
use crate::pdesolvers::{hughes_generate, lwr_generate, Hughes2dConfig, Lwr1dConfig, LwrFlux};
use crate::randfeat::{feature_matrix, FeatureKind, FeatureParams};
use crate::rng::SeededRng;
use crate::synthdata::{
    gen_phantom, gen_rotated_images, gen_scurve_20d, gen_swiss_roll, load_grayscale, max_mass_defect, DataSet,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_GENERATION: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "RANDSMAP_SEED";

#[derive(Parser, Debug)]
#[command(name = "randsmap", version, about = "Mass-preserving random-feature decoders and benchmarks")]
struct Cli {
    /// Worker threads for runs and grid cells
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset container (+ JSON sidecar)
    Gen(GenArgs),
    /// Fit a diffusion-map encoder or apply one to new data
    Encode(EncodeArgs),
    /// Fit a decoder on training snapshots and their latent coordinates
    Fit(FitArgs),
    /// Reconstruct ambient snapshots from latent coordinates
    Decode(DecodeArgs),
    /// Reconstruction errors of a decoded set against the truth
    Eval(EvalArgs),
    /// Grid-search one decoder's hyperparameter on a benchmark
    Tune(TuneArgs),
    /// Reproduce a full benchmark table as CSV/JSON
    Repro(ReproArgs),
    /// Random-feature kernel error against the concentration bound
    KernelBench(KernelArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// swiss | scurve | lwr | hughes | mri [default: swiss]
    #[arg(long)]
    benchmark: Option<BenchmarkId>,
    /// Number of points for swiss, scurve and mri [default: 1000]
    #[arg(long)]
    n: Option<usize>,
    /// Noise level; swiss/scurve ambient noise, lwr initial-condition noise [default: 0.05 / 0.01 / 0.02]
    #[arg(long)]
    noise: Option<f64>,
    /// Random seed [default: $RANDSMAP_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// PDE trajectories [default: 10]
    #[arg(long)]
    traj: Option<usize>,
    /// Snapshots per PDE trajectory [default: 50]
    #[arg(long)]
    snaps: Option<usize>,
    /// LWR cells [default: 400]
    #[arg(long)]
    cells: Option<usize>,
    /// Time step [default: 0.005 lwr, 0.025 hughes]
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 20 lwr, 70 hughes]
    #[arg(long)]
    t_end: Option<f64>,
    /// Free-flow speed [default: 2 lwr, 1 hughes]
    #[arg(long)]
    v_max: Option<f64>,
    /// Jam density [default: 1 lwr, 5 hughes]
    #[arg(long)]
    rho_max: Option<f64>,
    /// LWR numerical flux: godunov | roe [default: godunov]
    #[arg(long)]
    flux: Option<String>,
    /// Hughes cells along the corridor [default: 200]
    #[arg(long)]
    nx: Option<usize>,
    /// Hughes cells across the corridor [default: 50]
    #[arg(long)]
    ny: Option<usize>,
    /// Hughes without the obstacle
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    no_obstacle: bool,
    /// Grayscale image for mri [default: synthetic phantom]
    #[arg(long)]
    image: Option<PathBuf>,
    /// Phantom side length in pixels [default: 128]
    #[arg(long)]
    size: Option<usize>,
    /// Output container path (required)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a CSV export here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    benchmark: BenchmarkId,
    n: usize,
    noise: Option<f64>,
    seed: u64,
    traj: usize,
    snaps: usize,
    cells: usize,
    dt: Option<f64>,
    t_end: Option<f64>,
    v_max: Option<f64>,
    rho_max: Option<f64>,
    flux: LwrFlux,
    nx: usize,
    ny: usize,
    no_obstacle: bool,
    image: Option<PathBuf>,
    size: usize,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkId::Swiss,
            n: 1000,
            noise: None,
            seed: 0,
            traj: 10,
            snaps: 50,
            cells: 400,
            dt: None,
            t_end: None,
            v_max: None,
            rho_max: None,
            flux: LwrFlux::Godunov,
            nx: 200,
            ny: 50,
            no_obstacle: false,
            image: None,
            size: 128,
            out: None,
            csv: None,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Input dataset container (required)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Existing diffusion-map bundle to apply instead of fitting
    #[arg(long)]
    dm: Option<PathBuf>,
    /// Existing POD bundle; writes POD coefficients instead
    #[arg(long)]
    pod: Option<PathBuf>,
    /// Where to save a newly fitted diffusion-map bundle
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Density normalization exponent in [0, 1] [default: 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Bandwidth multiplier of the median pairwise distance [default: 1]
    #[arg(long)]
    w1: Option<f64>,
    /// Latent dimension [default: 2]
    #[arg(long)]
    dim: Option<usize>,
    /// Eigenvector scaling: unit | stationary [default: stationary]
    #[arg(long)]
    norm: Option<String>,
    /// Output latent container (required)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodeConfig {
    data: Option<PathBuf>,
    dm: Option<PathBuf>,
    pod: Option<PathBuf>,
    model_out: Option<PathBuf>,
    alpha: f64,
    w1: f64,
    dim: usize,
    norm: EigenNorm,
    out: Option<PathBuf>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            data: None,
            dm: None,
            pod: None,
            model_out: None,
            alpha: 1.0,
            w1: 1.0,
            dim: 2,
            norm: EigenNorm::Stationary,
            out: None,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// randsmap-{rff,msrff,sig} | rfnn-{rff,msrff,sig} | ddm | knn | pod [default: randsmap-rff]
    #[arg(long)]
    decoder: Option<String>,
    /// Training snapshots (required)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training latent coordinates (or give --dm)
    #[arg(long)]
    latent: Option<PathBuf>,
    /// Diffusion-map bundle; its embedding is used as latent coordinates (required for knn)
    #[arg(long)]
    dm: Option<PathBuf>,
    /// Feature count: an integer, `N` or `N/k` with N the training size [default: N]
    #[arg(long)]
    features: Option<String>,
    /// Decoder hyperparameter: RFF bandwidth, MSRFF scale bound, sigmoid weight bound, DDM w2 or kNN k [default: 1, 10, 10, 0.6, 5]
    #[arg(long)]
    hyper: Option<f64>,
    /// Tikhonov parameter [default: 1e-3]
    #[arg(long)]
    lambda: Option<f64>,
    /// RANDSMAP relative singular-value cutoff [default: 1e-8]
    #[arg(long)]
    delta_s: Option<f64>,
    /// Explicit truncation rank (RANDSMAP and DDM)
    #[arg(long)]
    rank: Option<usize>,
    /// MSRFF scale count [default: 10]
    #[arg(long)]
    q: Option<usize>,
    /// Feature-map seed [default: $RANDSMAP_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Solve RFNN through the SVD instead of the normal equations
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    svd: bool,
    /// kNN optimizer tolerance [default: 1e-8]
    #[arg(long)]
    knn_tol: Option<f64>,
    /// kNN optimizer iteration cap [default: 500]
    #[arg(long)]
    knn_max_iter: Option<usize>,
    /// POD modes [default: 2]
    #[arg(long)]
    dim: Option<usize>,
    /// Output decoder bundle (required)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    decoder: String,
    data: Option<PathBuf>,
    latent: Option<PathBuf>,
    dm: Option<PathBuf>,
    features: String,
    hyper: Option<f64>,
    lambda: f64,
    delta_s: f64,
    rank: Option<usize>,
    q: usize,
    seed: u64,
    svd: bool,
    knn_tol: f64,
    knn_max_iter: usize,
    dim: usize,
    out: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            decoder: "randsmap-rff".into(),
            data: None,
            latent: None,
            dm: None,
            features: "N".into(),
            hyper: None,
            lambda: f.lambda,
            delta_s: f.delta_s,
            rank: None,
            q: f.msrff_q,
            seed: 0,
            svd: false,
            knn_tol: f.knn_tol,
            knn_max_iter: f.knn_max_iter,
            dim: 2,
            out: None,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Decoder bundle (required)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent coordinates to decode (required)
    #[arg(long)]
    latent: Option<PathBuf>,
    /// Regenerate the feature map with this seed instead of the stored one
    #[arg(long)]
    feature_seed: Option<u64>,
    /// Output container (required)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeConfig {
    model: Option<PathBuf>,
    latent: Option<PathBuf>,
    feature_seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Ground-truth container (required); its mass flag enables the conservation column
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Reconstructed container
    #[arg(long)]
    recon: Option<PathBuf>,
    /// Decoder bundle to decode --latent with, instead of --recon
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent coordinates for --model
    #[arg(long)]
    latent: Option<PathBuf>,
    /// JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-point CSV path
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    truth: Option<PathBuf>,
    recon: Option<PathBuf>,
    model: Option<PathBuf>,
    latent: Option<PathBuf>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
}

/// Flags shared by the benchmark-level commands. Any further
/// `BenchmarkConfig` field may be set through `--config`.
#[derive(Args, Debug, Serialize)]
struct BenchFlags {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// swiss | scurve | lwr | mri | hughes [default: swiss]
    #[arg(long)]
    #[serde(skip)]
    benchmark: Option<BenchmarkId>,
    /// Fraction of the paper's train/validation/test sizes [default: 1]
    #[arg(long)]
    #[serde(skip)]
    scale: Option<f64>,
    /// Repeated runs per stochastic configuration [default: 100]
    #[arg(long)]
    n_runs: Option<usize>,
    /// Base seed [default: $RANDSMAP_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Values per hyperparameter grid [default: 10]
    #[arg(long)]
    grid_size: Option<usize>,
    /// Evaluate at most this many test points [default: all]
    #[arg(long)]
    max_test: Option<usize>,
    /// Points reconstructed by kNN per split [default: 200]
    #[arg(long)]
    knn_max_points: Option<usize>,
    /// Grayscale image for mri [default: synthetic phantom]
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    bench: BenchFlags,
    /// Decoder to tune, e.g. rfnn-sig or ddm [default: randsmap-rff]
    #[arg(long)]
    #[serde(skip)]
    decoder: Option<String>,
    /// Feature count P = N / divisor [default: 1]
    #[arg(long)]
    #[serde(skip)]
    p_divisor: Option<usize>,
    /// JSON report path
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReproArgs {
    #[command(flatten)]
    #[serde(flatten)]
    bench: BenchFlags,
    /// Report directory [default: results]
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct KernelArgs {
    /// JSON file with parameter values (overridden by flags)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// rff | msrff [default: rff]
    #[arg(long)]
    kind: Option<String>,
    /// RFF frequency scale (standard deviation of the sampled frequencies) [default: 1]
    #[arg(long)]
    sigma_w: Option<f64>,
    /// MSRFF scale upper bound [default: 10]
    #[arg(long)]
    sigma_ub: Option<f64>,
    /// MSRFF scale count [default: 10]
    #[arg(long)]
    q: Option<usize>,
    /// Number of latent points [default: 40]
    #[arg(long)]
    points: Option<usize>,
    /// Latent dimension [default: 2]
    #[arg(long)]
    dim: Option<usize>,
    /// Feature draws per feature count [default: 20]
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated feature counts, rounded down to a multiple of Q for MSRFF [default: 512,2048,8192]
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    /// Seed for the points and the first feature draw [default: $RANDSMAP_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelConfig {
    kind: FeatureKind,
    sigma_w: f64,
    sigma_ub: f64,
    q: usize,
    points: usize,
    dim: usize,
    seeds: usize,
    p: Vec<usize>,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Rff,
            sigma_w: 1.0,
            sigma_ub: 10.0,
            q: 10,
            points: 40,
            dim: 2,
            seeds: 20,
            p: DEFAULT_P_LADDER.to_vec(),
            seed: 0,
            out: None,
        }
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID, message)
    }
}

/// Exit code for a library error outside of data generation.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_INVALID,
        Error::Io(_) | Error::Format(_) | Error::Json(_) => EXIT_INPUT,
        _ => EXIT_NUMERICAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(exit_code(&e), e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_json_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::invalid(format!("config {} is not a JSON object", path.display()))),
        Err(e) => Err(Failure::new(EXIT_INPUT, format!("corrupt config {}: {e}", path.display()))),
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::invalid(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>, check_keys: bool) -> CliResult<()> {
    for (k, v) in top {
        if check_keys && !base.contains_key(&k) {
            return Err(Failure::invalid(format!("unknown config key `{k}`")));
        }
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    Ok(())
}

/// Defaults < `RANDSMAP_SEED` < config file < explicit flags.
fn merge<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<Map<String, Value>>,
    flags: &impl Serialize,
) -> CliResult<T> {
    let Value::Object(mut base) = serde_json::to_value(defaults).map_err(Error::from)? else {
        unreachable!("configs serialize to objects")
    };
    if base.contains_key("seed") {
        if let Some(s) = env_seed()? {
            base.insert("seed".into(), s.into());
        }
    }
    if let Some(f) = file {
        overlay(&mut base, f, true)?;
    }
    if let Value::Object(fl) = serde_json::to_value(flags).map_err(Error::from)? {
        overlay(&mut base, fl, false)?;
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Failure::invalid(format!("invalid configuration: {e}")))
}

fn load_config(path: &Option<PathBuf>) -> CliResult<Option<Map<String, Value>>> {
    path.as_deref().map(read_json_file).transpose()
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    v.as_deref().ok_or_else(|| Failure::invalid(format!("--{flag} is required")))
}

fn load_dataset(path: &Path) -> CliResult<DataSet> {
    DataSet::load(path).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn load_bundle_err(path: &Path, e: Error) -> Failure {
    Failure::new(EXIT_INPUT, format!("{}: {e}", path.display()))
}

fn gen_failure(e: Error) -> Failure {
    match e {
        Error::InvalidArgument(_) => Failure::invalid(e.to_string()),
        _ => Failure::new(EXIT_GENERATION, format!("generation failed: {e}")),
    }
}

fn lower(v: &mut Option<String>) {
    if let Some(s) = v {
        *s = s.to_ascii_lowercase();
    }
}

fn cmd_gen(mut a: GenArgs) -> CliResult<()> {
    lower(&mut a.flux);
    let file = load_config(&a.config)?;
    gen_with(merge(&GenConfig::default(), file, &a)?)
}

fn gen_with(c: GenConfig) -> CliResult<()> {
    let out = required(&c.out, "out")?;
    let noise = |d: f64| c.noise.unwrap_or(d);
    let ds = match c.benchmark {
        BenchmarkId::Swiss => gen_swiss_roll(c.n, noise(0.05), c.seed),
        BenchmarkId::Scurve => gen_scurve_20d(c.n, noise(0.01), c.seed),
        BenchmarkId::Lwr => {
            let d = Lwr1dConfig::default();
            let cfg = Lwr1dConfig {
                m_cells: c.cells,
                dt: c.dt.unwrap_or(d.dt),
                t_end: c.t_end.unwrap_or(d.t_end),
                v_max: c.v_max.unwrap_or(d.v_max),
                rho_max: c.rho_max.unwrap_or(d.rho_max),
                noise_sigma: noise(d.noise_sigma),
                flux: c.flux,
                seed: c.seed,
                ..d
            };
            lwr_generate(&cfg, c.traj, c.snaps)
        }
        BenchmarkId::Hughes => {
            let d = Hughes2dConfig::default();
            let cfg = Hughes2dConfig {
                nx: c.nx,
                ny: c.ny,
                dt: c.dt.unwrap_or(d.dt),
                t_end: c.t_end.unwrap_or(d.t_end),
                v_max: c.v_max.unwrap_or(d.v_max),
                rho_max: c.rho_max.unwrap_or(d.rho_max),
                obstacle: if c.no_obstacle { None } else { d.obstacle },
                seed: c.seed,
                ..d
            };
            hughes_generate(&cfg, c.traj, c.snaps)
        }
        BenchmarkId::Mri => {
            let base = match &c.image {
                Some(p) => load_grayscale(p).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", p.display())))?,
                None => gen_phantom(c.size).map_err(gen_failure)?,
            };
            gen_rotated_images(&base, c.n, c.seed)
        }
    }
    .map_err(gen_failure)?;
    ds.validate().map_err(gen_failure)?;
    ds.save(out).map_err(|e| Failure::new(EXIT_GENERATION, format!("cannot write {}: {e}", out.display())))?;
    if let Some(p) = &c.csv {
        ds.write_csv(p).map_err(|e| Failure::new(EXIT_GENERATION, format!("cannot write {}: {e}", p.display())))?;
    }
    println!("benchmark {}", c.benchmark.name());
    println!("M {}", ds.m());
    println!("N {}", ds.n());
    println!("mass_preserving {}", ds.mass_preserving);
    match ds.meta.get("max_mass_drift").and_then(Value::as_f64) {
        Some(d) => println!("mass_drift {d:e}"),
        None if ds.mass_preserving => println!("mass_defect {:e}", max_mass_defect(&ds.x)),
        None => {}
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_encode(mut a: EncodeArgs) -> CliResult<()> {
    lower(&mut a.norm);
    let file = load_config(&a.config)?;
    let c: EncodeConfig = merge(&EncodeConfig::default(), file, &a)?;
    let data = load_dataset(required(&c.data, "data")?)?;
    let out = required(&c.out, "out")?;
    let y = match (&c.dm, &c.pod) {
        (Some(_), Some(_)) => return Err(Failure::invalid("give at most one of --dm and --pod")),
        (Some(p), None) => {
            let dm = DmModel::load(p).map_err(|e| load_bundle_err(p, e))?;
            dm_encode(&dm, &data.x)?
        }
        (None, Some(p)) => match DecoderModel::load(p).map_err(|e| load_bundle_err(p, e))? {
            DecoderModel::Pod(m) => pod_encode(&m, &data.x)?,
            other => {
                return Err(Failure::invalid(format!("{} is a {} bundle, not pod", p.display(), other.kind().name())))
            }
        },
        (None, None) => {
            let model_out = required(&c.model_out, "model-out")?;
            let dm = dm_fit_with(&data.x, &DmParams { alpha: c.alpha, w1: c.w1, d: c.dim, norm: c.norm })?;
            dm.save(model_out)?;
            println!("epsilon1 {:e}", dm.epsilon1);
            println!("xi {:?}", dm.xi);
            if dm.degenerate_gap {
                println!("warning: no spectral gap after the last retained eigenvalue");
            }
            println!("wrote {}", model_out.display());
            dm.embedding()
        }
    };
    println!("wrote {} ({}x{})", out.display(), y.ncols(), y.nrows());
    DataSet::new(y, false).with_meta("kind", "latent").save(out)?;
    Ok(())
}

/// `N`, `N/k` or a plain integer.
pub fn parse_features(s: &str, n: usize) -> crate::Result<usize> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("bad feature count `{s}`"));
    let p = if s.eq_ignore_ascii_case("n") {
        n
    } else if let Some(k) = s.strip_prefix("N/").or_else(|| s.strip_prefix("n/")) {
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        n / k
    } else {
        s.parse().map_err(|_| bad())?
    };
    if p == 0 {
        return Err(bad());
    }
    Ok(p)
}

fn default_hyper(method: Method) -> f64 {
    match method {
        Method::Randsmap(FeatureKind::Rff) | Method::Rfnn(FeatureKind::Rff) => 1.0,
        Method::Randsmap(_) | Method::Rfnn(_) => 10.0,
        Method::Ddm => 0.6,
        Method::Knn => 5.0,
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let file = load_config(&a.config)?;
    let c: FitConfig = merge(&FitConfig::default(), file, &a)?;
    let out = required(&c.out, "out")?;
    let data = load_dataset(required(&c.data, "data")?)?;
    let model = if c.decoder.eq_ignore_ascii_case("pod") {
        DecoderModel::Pod(pod_fit(&data.x, c.dim)?)
    } else {
        let method: Method = c.decoder.parse()?;
        let dm = c.dm.as_deref().map(|p| DmModel::load(p).map_err(|e| load_bundle_err(p, e))).transpose()?;
        let y = match (&c.latent, &dm) {
            (Some(p), _) => load_dataset(p)?.x,
            (None, Some(dm)) => dm.embedding(),
            (None, None) => return Err(Failure::invalid("--latent or --dm is required")),
        };
        if y.ncols() != data.n() {
            return Err(Failure::invalid(format!("{} latent points for {} snapshots", y.ncols(), data.n())));
        }
        let h = c.hyper.unwrap_or_else(|| default_hyper(method));
        match method {
            Method::Randsmap(kind) | Method::Rfnn(kind) => {
                let p = parse_features(&c.features, data.n())?;
                let map = feature_map(kind, p, h, &y, c.q, c.seed)?;
                let phi = feature_matrix(&map, &y)?;
                let fitted = match method {
                    Method::Randsmap(_) => {
                        if !data.mass_preserving {
                            log::warn!("training data is not flagged mass-preserving");
                        }
                        randsmap_fit_with(
                            &phi,
                            &data.x,
                            &RandsmapOptions { lambda: c.lambda, delta_s: c.delta_s, rank: c.rank },
                        )?
                    }
                    _ if c.svd => rfnn_fit_svd(&phi, &data.x, c.lambda)?,
                    _ => rfnn_fit(&phi, &data.x, c.lambda)?,
                };
                let fitted = fitted.with_features(&map);
                println!("features {}", map.p());
                if let Some(t) = &fitted.trunc {
                    let (res, next) = conservation_residual(&fitted)?;
                    println!("rank {}", t.rank);
                    println!("residual {res:e}");
                    println!("sigma_next {next:e}");
                    println!("bound_holds {}", residual_bound_holds(res, next, data.x.ncols()));
                }
                DecoderModel::Linear(fitted)
            }
            Method::Ddm => {
                let m = ddm_fit(&y, &data.x, h, c.rank)?;
                println!("rank {}", m.rank);
                DecoderModel::Ddm(m)
            }
            Method::Knn => {
                let dm = dm.ok_or_else(|| Failure::invalid("knn needs --dm"))?;
                if dm.x_train.shape() != data.x.shape() {
                    return Err(Failure::invalid("--dm was fitted on a different training set"));
                }
                if !(h >= 1.0) {
                    return Err(Failure::invalid("k must be at least 1"));
                }
                let opts = KnnOptions { k: h.round() as usize, tol: c.knn_tol, max_iter: c.knn_max_iter };
                DecoderModel::Knn(KnnModel { dm, opts })
            }
        }
    };
    model.save(out)?;
    println!("decoder {}", model.kind().name());
    println!("wrote {}", out.display());
    Ok(())
}

fn reconstruct_with(
    model_path: &Path,
    latent: &Path,
    feature_seed: Option<u64>,
) -> CliResult<(DMatrix<f64>, DecoderModel)> {
    let model = DecoderModel::load(model_path).map_err(|e| load_bundle_err(model_path, e))?;
    let y = load_dataset(latent)?.x;
    let x = match (&model, feature_seed) {
        (DecoderModel::Linear(l), Some(seed)) => {
            let mut spec =
                l.feature.clone().ok_or_else(|| Failure::new(EXIT_NUMERICAL, "decoder carries no feature-map spec"))?;
            spec.seed = seed;
            model.reconstruct(&y, Some(&spec.sample()?))?
        }
        _ => model.reconstruct(&y, None)?,
    };
    Ok((x, model))
}

fn cmd_decode(a: DecodeArgs) -> CliResult<()> {
    let file = load_config(&a.config)?;
    let c: DecodeConfig = merge(&DecodeConfig::default(), file, &a)?;
    let out = required(&c.out, "out")?;
    let (x, model) = reconstruct_with(required(&c.model, "model")?, required(&c.latent, "latent")?, c.feature_seed)?;
    DataSet::new(x.clone(), false).with_meta("decoder", model.kind().name()).save(out)?;
    println!("decoded {} points", x.ncols());
    println!("max_mass_defect {:e}", max_mass_defect(&x));
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricSummary {
    mean: f64,
    #[serde(flatten)]
    spread: Spread,
}

impl MetricSummary {
    fn of(v: &[f64]) -> Self {
        Self { mean: v.iter().sum::<f64>() / v.len() as f64, spread: Spread::of(v) }
    }
}

#[derive(Serialize)]
struct EvalSummary {
    n_points: usize,
    e2: MetricSummary,
    einf: MetricSummary,
    econ: Option<MetricSummary>,
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let file = load_config(&a.config)?;
    let c: EvalConfig = merge(&EvalConfig::default(), file, &a)?;
    let truth = load_dataset(required(&c.truth, "truth")?)?;
    let x_hat = match (&c.recon, &c.model, &c.latent) {
        (Some(p), None, None) => load_dataset(p)?.x,
        (None, Some(m), Some(l)) => {
            let t = Instant::now();
            let (x, _) = reconstruct_with(m, l, None)?;
            println!("infer_time {:.3}s", t.elapsed().as_secs_f64());
            x
        }
        _ => return Err(Failure::invalid("give either --recon or both --model and --latent")),
    };
    let r = crate::bench::errors(&truth.x, &x_hat, truth.mass_preserving)?;
    let summary = EvalSummary {
        n_points: r.e2.len(),
        e2: MetricSummary::of(&r.e2),
        einf: MetricSummary::of(&r.einf),
        econ: r.econ.as_deref().map(MetricSummary::of),
    };
    let line = |name: &str, m: &MetricSummary| {
        println!(
            "{name:<5} mean {:.6e} median {:.6e} p5 {:.6e} p95 {:.6e}",
            m.mean, m.spread.median, m.spread.p5, m.spread.p95
        )
    };
    println!("points {}", summary.n_points);
    line("e2", &summary.e2);
    line("einf", &summary.einf);
    if let Some(m) = &summary.econ {
        line("econ", m);
    }
    if let Some(p) = &c.out {
        std::fs::write(p, serde_json::to_vec_pretty(&summary).map_err(Error::from)?).map_err(Error::from)?;
    }
    if let Some(p) = &c.csv {
        let mut w = csv::Writer::from_path(p).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
        let mut header = vec!["index", "e2", "einf"];
        if r.econ.is_some() {
            header.push("econ");
        }
        w.write_record(&header).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
        for j in 0..r.e2.len() {
            let mut rec = vec![j.to_string(), format!("{:e}", r.e2[j]), format!("{:e}", r.einf[j])];
            if let Some(e) = &r.econ {
                rec.push(format!("{:e}", e[j]));
            }
            w.write_record(&rec).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
        }
        w.flush().map_err(Error::from)?;
    }
    Ok(())
}

/// Builds a benchmark configuration: paper defaults for the chosen benchmark
/// and scale, then the seed variable, the config file and the flags.
fn bench_config(flags: &BenchFlags, extra: &[&str]) -> CliResult<(BenchmarkConfig, Map<String, Value>)> {
    let mut file = load_config(&flags.config)?.unwrap_or_default();
    let mut run_keys = Map::new();
    for k in ["benchmark", "scale"].iter().chain(extra) {
        if let Some(v) = file.remove(*k) {
            run_keys.insert((*k).to_owned(), v);
        }
    }
    let id = match flags.benchmark {
        Some(id) => id,
        None => match run_keys.get("benchmark") {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|_| Failure::invalid(format!("unknown benchmark {v}")))?
            }
            None => BenchmarkId::Swiss,
        },
    };
    let scale = match flags.scale {
        Some(s) => s,
        None => match run_keys.get("scale") {
            Some(v) => v.as_f64().ok_or_else(|| Failure::invalid("scale must be a number"))?,
            None => 1.0,
        },
    };
    let defaults = BenchmarkConfig::new(id, scale)?;
    file.remove("id");
    let cfg: BenchmarkConfig = merge(&defaults, Some(file), flags)?;
    if cfg.n_runs == 0 || cfg.grid_size == 0 {
        return Err(Failure::invalid("n_runs and grid_size must be positive"));
    }
    Ok((cfg, run_keys))
}

fn cmd_tune(a: TuneArgs) -> CliResult<()> {
    let (cfg, keys) = bench_config(&a.bench, &["decoder", "p_divisor", "out"])?;
    let str_key = |k: &str| keys.get(k).and_then(Value::as_str).map(str::to_owned);
    let decoder = a.decoder.clone().or_else(|| str_key("decoder")).unwrap_or_else(|| "randsmap-rff".into());
    let method: Method = decoder.parse()?;
    let divisor =
        a.p_divisor.or_else(|| keys.get("p_divisor").and_then(Value::as_u64).map(|v| v as usize)).unwrap_or(1).max(1);
    let out = a.out.clone().or_else(|| str_key("out").map(PathBuf::from));
    let prep = crate::bench::prepare(&cfg).map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::from(e),
        e => gen_failure(e),
    })?;
    let n = prep.train.x.ncols();
    let p = effective_p(
        match method {
            Method::Randsmap(k) | Method::Rfnn(k) => k,
            _ => FeatureKind::Rff,
        },
        (n / divisor).max(1),
        cfg.fit.msrff_q,
    );
    let grid = cfg.grid(method);
    let (y_val, x_val) = if matches!(method, Method::Knn) {
        let m = cfg.knn_max_points.min(prep.y_val.ncols());
        (prep.y_val.columns(0, m).into_owned(), prep.x_val.columns(0, m).into_owned())
    } else {
        (prep.y_val.clone(), prep.x_val.clone())
    };
    let train: &TrainSet = &prep.train;
    let (result, _) = tune(method, p, &grid, train, (&y_val, &x_val), &cfg.fit, cfg.seed)?;
    println!("{} on {} (P={p}), {}:", method.label(), cfg.id.name(), method.hyper_name());
    for (h, e) in result.grid.iter().zip(&result.val_errors) {
        match e {
            Some(e) => println!("  {h:>10.4} {e:.6e}"),
            None => println!("  {h:>10.4} failed"),
        }
    }
    println!("best {}", result.best);
    if let Some(path) = out {
        let report = serde_json::json!({
            "benchmark": cfg.id,
            "decoder": method.slug(),
            "p": p_or_none(method, p),
            "hyper_name": method.hyper_name(),
            "tune": result,
        });
        std::fs::write(&path, serde_json::to_vec_pretty(&report).map_err(Error::from)?).map_err(Error::from)?;
    }
    Ok(())
}

fn p_or_none(method: Method, p: usize) -> Option<usize> {
    method.stochastic().then_some(p)
}

fn cmd_repro(a: ReproArgs) -> CliResult<()> {
    let (cfg, keys) = bench_config(&a.bench, &["out"])?;
    let dir = a
        .out
        .clone()
        .or_else(|| keys.get("out").and_then(Value::as_str).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let report = run_table(&cfg)?;
    let files = report.write(&dir)?;
    println!(
        "{:<18} {:>6} {:>9} {:>10} {:>12} {:>12} {:>12}",
        "decoder", "P", "hyper", "value", "train e2", "test e2", "test econ"
    );
    for r in &report.results {
        println!(
            "{:<18} {:>6} {:>9} {:>10.4} {:>12.4e} {:>12.4e} {:>12}",
            r.decoder,
            r.p_label.as_deref().unwrap_or("-"),
            r.hyper_name,
            r.tune.best,
            r.train.e2.median,
            r.test.e2.median,
            r.test.econ.map_or("-".to_owned(), |c| format!("{:.4e}", c.median)),
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_kernel(mut a: KernelArgs) -> CliResult<()> {
    lower(&mut a.kind);
    let file = load_config(&a.config)?;
    let c: KernelConfig = merge(&KernelConfig::default(), file, &a)?;
    let params = match c.kind {
        FeatureKind::Rff => FeatureParams::Rff { sigma_w: c.sigma_w },
        FeatureKind::Msrff => FeatureParams::Msrff { q: c.q, sigma_ub: c.sigma_ub },
        FeatureKind::Sigmoid => return Err(Failure::invalid("sigmoid features have no closed-form limit kernel")),
    };
    if c.points < 2 || c.dim == 0 {
        return Err(Failure::invalid("need at least two points of positive dimension"));
    }
    let mut rng = SeededRng::new(c.seed);
    let y = DMatrix::from_fn(c.dim, c.points, |_, _| rng.uniform_in(-1.0, 1.0));
    let p: Vec<usize> = c.p.iter().map(|&p| effective_p(c.kind, p, c.q)).collect();
    let table = kernel_bound_check(params, &y, &p, c.seeds, c.seed)?;
    println!("{:>7} {:>12} {:>12} {:>12} {:>12} {:>8}", "P", "median err", "p5", "p95", "median rhs", "within");
    for r in &table.rows {
        println!(
            "{:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2}",
            r.p, r.error.median, r.error.p5, r.error.p95, r.median_rhs, r.fraction_within
        );
    }
    println!("monotone {}", table.monotone);
    println!("all_within {}", table.all_within);
    if let Some(p) = &c.out {
        std::fs::write(p, serde_json::to_vec_pretty(&table).map_err(Error::from)?).map_err(Error::from)?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Repro(a) => cmd_repro(a),
        Command::KernelBench(a) => cmd_kernel(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_INVALID;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_INVALID;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
