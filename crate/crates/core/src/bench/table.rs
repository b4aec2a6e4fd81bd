use super::metrics::{errors, EvalReport, Spread};
use super::pipeline::{effective_p, fit, int_grid, linspace, tune, FitOptions, Fitted, Method, TrainSet, TuneResult};
use crate::decoders::{conservation_residual, residual_bound_holds};
use crate::dmap::{dm_encode, dm_fit_with, DmParams, EigenNorm};
use crate::error::{Error, Result};
use crate::pdesolvers::{hughes_generate, lwr_generate, Hughes2dConfig, Lwr1dConfig};
use crate::randfeat::FeatureKind;
use crate::synthdata::{
    gen_phantom, gen_rotated_images, gen_scurve_20d, gen_swiss_roll, load_grayscale, split, DataSet, SplitSpec,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkId {
    Swiss,
    Scurve,
    Lwr,
    Mri,
    Hughes,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 5] =
        [BenchmarkId::Swiss, BenchmarkId::Scurve, BenchmarkId::Lwr, BenchmarkId::Mri, BenchmarkId::Hughes];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Swiss => "swiss",
            BenchmarkId::Scurve => "scurve",
            BenchmarkId::Lwr => "lwr",
            BenchmarkId::Mri => "mri",
            BenchmarkId::Hughes => "hughes",
        }
    }

    pub fn mass_preserving(self) -> bool {
        matches!(self, BenchmarkId::Lwr | BenchmarkId::Mri | BenchmarkId::Hughes)
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark `{s}`")))
    }
}

/// Hyperparameter search intervals, ten values each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranges {
    /// RFF kernel bandwidth.
    pub sigma_w: [f64; 2],
    pub sigma_ub: [f64; 2],
    pub c: [f64; 2],
    pub w2: [f64; 2],
    pub k: [usize; 2],
}

/// Full description of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub id: BenchmarkId,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Evaluate at most this many test points (all when absent).
    #[serde(default)]
    pub max_test: Option<usize>,
    /// Cap on the number of points the kNN decoder reconstructs per split.
    pub knn_max_points: usize,
    pub noise: f64,
    pub dm: DmParams,
    pub ranges: Ranges,
    pub grid_size: usize,
    /// `P = N / f` for every entry.
    pub p_divisors: Vec<usize>,
    pub n_runs: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Snapshots drawn per PDE trajectory.
    pub snaps_per_traj: usize,
    /// Grayscale source image for `mri`; a synthetic phantom when absent.
    #[serde(default)]
    pub image: Option<PathBuf>,
    pub image_size: usize,
}

impl BenchmarkConfig {
    /// Paper-sized settings scaled by `scale` (train, validation and test
    /// counts; PDE benchmarks scale the number of trajectories).
    pub fn new(id: BenchmarkId, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        let dm = |alpha, w1, d| DmParams { alpha, w1, d, norm: EigenNorm::Stationary };
        let r = |sigma_w, sigma_ub, c, w2, k| Ranges { sigma_w, sigma_ub, c, w2, k };
        let (n, l, noise, dmp, ranges, snaps) = match id {
            BenchmarkId::Swiss => {
                (1000, 8000, 0.05, dm(1.0, 0.12, 2), r([0.1, 1.0], [1.0, 10.0], [1.0, 20.0], [0.3, 0.9], [2, 11]), 0)
            }
            BenchmarkId::Scurve => {
                (1000, 8000, 0.01, dm(1.0, 0.2, 2), r([0.1, 1.0], [2.0, 10.0], [5.0, 18.0], [0.3, 0.9], [2, 11]), 0)
            }
            BenchmarkId::Lwr => {
                (2000, 8000, 0.02, dm(0.0, 1.0, 2), r([0.1, 1.0], [2.0, 15.0], [1.0, 20.0], [0.2, 1.0], [2, 11]), 120)
            }
            BenchmarkId::Mri => {
                (720, 2160, 0.0, dm(1.0, 0.5, 2), r([0.02, 0.1], [35.0, 65.0], [45.0, 120.0], [0.2, 1.0], [2, 11]), 0)
            }
            BenchmarkId::Hughes => {
                (5000, 20000, 0.0, dm(1.0, 0.4, 10), r([0.2, 1.0], [1.0, 10.0], [1.0, 20.0], [0.1, 1.0], [2, 18]), 375)
            }
        };
        let sc = |v: usize| ((v as f64 * scale).round() as usize).max(16);
        Ok(Self {
            id,
            n_train: sc(n),
            n_val: sc(n),
            n_test: sc(l),
            max_test: None,
            knn_max_points: 200,
            noise,
            dm: dmp,
            ranges,
            grid_size: 10,
            p_divisors: vec![1, 2, 4],
            n_runs: 100,
            seed: 0,
            fit: FitOptions::default(),
            snaps_per_traj: snaps,
            image: None,
            image_size: 128,
        })
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    /// Decoder families reported for this benchmark.
    pub fn methods(&self) -> Vec<Method> {
        use FeatureKind::*;
        let mut m: Vec<Method> = if self.id.mass_preserving() {
            vec![Method::Randsmap(Rff), Method::Randsmap(Msrff), Method::Randsmap(Sigmoid), Method::Rfnn(Sigmoid)]
        } else {
            vec![Method::Rfnn(Rff), Method::Rfnn(Msrff), Method::Rfnn(Sigmoid)]
        };
        m.extend([Method::Ddm, Method::Knn]);
        m
    }

    pub fn grid(&self, method: Method) -> Vec<f64> {
        let g = self.grid_size;
        let r = &self.ranges;
        match method {
            Method::Randsmap(k) | Method::Rfnn(k) => match k {
                FeatureKind::Rff => linspace(r.sigma_w[0], r.sigma_w[1], g),
                FeatureKind::Msrff => linspace(r.sigma_ub[0], r.sigma_ub[1], g),
                FeatureKind::Sigmoid => linspace(r.c[0], r.c[1], g),
            },
            Method::Ddm => linspace(r.w2[0], r.w2[1], g),
            Method::Knn => int_grid(r.k[0], r.k[1], g),
        }
    }

    /// Generates the full (unsplit) dataset.
    pub fn generate(&self) -> Result<DataSet> {
        let total = self.total();
        let seed = self.seed;
        match self.id {
            BenchmarkId::Swiss => gen_swiss_roll(total, self.noise, seed),
            BenchmarkId::Scurve => gen_scurve_20d(total, self.noise, seed),
            BenchmarkId::Lwr => {
                let cfg = Lwr1dConfig { seed, noise_sigma: self.noise, ..Default::default() };
                lwr_generate(&cfg, total.div_ceil(self.snaps_per_traj), self.snaps_per_traj)
            }
            BenchmarkId::Hughes => {
                let cfg = Hughes2dConfig { seed, ..Default::default() };
                hughes_generate(&cfg, total.div_ceil(self.snaps_per_traj), self.snaps_per_traj)
            }
            BenchmarkId::Mri => {
                let base = match &self.image {
                    Some(p) => load_grayscale(p)?,
                    None => gen_phantom(self.image_size)?,
                };
                gen_rotated_images(&base, total, seed)
            }
        }
    }
}

/// Encoded splits ready for decoder fitting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: TrainSet,
    pub y_val: DMatrix<f64>,
    pub x_val: DMatrix<f64>,
    pub y_test: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
    pub mass: bool,
    pub encoder_time: f64,
    pub test_encode_time: f64,
}

/// Generate, split, fit the encoder and encode the validation and test sets.
pub fn prepare(cfg: &BenchmarkConfig) -> Result<Prepared> {
    let ds = cfg.generate()?;
    prepare_from(cfg, &ds)
}

pub fn prepare_from(cfg: &BenchmarkConfig, ds: &DataSet) -> Result<Prepared> {
    let spec = SplitSpec { n_train: cfg.n_train, n_val: cfg.n_val, n_test: cfg.n_test, seed: cfg.seed };
    let (tr, va, te) = split(ds, &spec)?;
    let n_test = cfg.max_test.map_or(te.n(), |m| m.min(te.n()));
    let x_test = te.x.columns(0, n_test).into_owned();
    let t0 = Instant::now();
    let dm = dm_fit_with(&tr.x, &cfg.dm)?;
    let y_train = dm.embedding();
    let y_val = dm_encode(&dm, &va.x)?;
    let encoder_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let y_test = dm_encode(&dm, &x_test)?;
    let test_encode_time = t1.elapsed().as_secs_f64();
    Ok(Prepared {
        train: TrainSet { x: tr.x.clone(), y: y_train, dm },
        y_val,
        x_val: va.x,
        y_test,
        x_test,
        mass: ds.mass_preserving,
        encoder_time,
        test_encode_time,
    })
}

/// Metric spreads of one split over the runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub e2: Spread,
    pub einf: Spread,
    pub econ: Option<Spread>,
    /// Training time for the train split, inference time for the test split.
    pub time: Spread,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub method: Method,
    pub decoder: String,
    /// Feature count and its label (`N`, `N/2`, ...) for random-feature decoders.
    pub p: Option<usize>,
    pub p_label: Option<String>,
    pub hyper_name: String,
    pub tune: TuneResult,
    pub runs: usize,
    pub train: SplitStats,
    pub test: SplitStats,
    /// RANDSMAP only: `‖(I − U U ᵀ)1‖` and `σ_{tr+1}` spreads and whether the bound held in every run.
    pub residual: Option<Spread>,
    pub sigma_next: Option<Spread>,
    pub bound_holds: Option<bool>,
}

struct RunOutcome {
    train: EvalReport,
    test: EvalReport,
    residual: Option<(f64, f64)>,
}

fn cap(y: &DMatrix<f64>, x: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = n.min(y.ncols());
    (y.columns(0, n).into_owned(), x.columns(0, n).into_owned())
}

fn stats(reports: &[&EvalReport], time: impl Fn(&EvalReport) -> f64) -> SplitStats {
    let col = |f: &dyn Fn(&EvalReport) -> f64| Spread::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    SplitStats {
        e2: col(&|r| r.mean_e2()),
        einf: col(&|r| r.mean_einf()),
        econ: reports[0].econ.is_some().then(|| col(&|r| r.mean_econ().unwrap_or(f64::NAN))),
        time: col(&|r| time(r)),
        n_points: reports[0].e2.len(),
    }
}

/// Tunes one decoder configuration on the validation split, then evaluates
/// it on train and test over `cfg.n_runs` feature draws (one run for the
/// deterministic decoders).
pub fn evaluate_config(
    cfg: &BenchmarkConfig,
    prep: &Prepared,
    method: Method,
    p_divisor: usize,
) -> Result<ConfigResult> {
    let n = prep.train.x.ncols();
    let p = method.stochastic().then(|| {
        let raw = (n / p_divisor.max(1)).max(1);
        match method {
            Method::Randsmap(k) | Method::Rfnn(k) => effective_p(k, raw, cfg.fit.msrff_q),
            _ => raw,
        }
    });
    let knn = matches!(method, Method::Knn);
    let limit = if knn { cfg.knn_max_points } else { usize::MAX };
    let (y_val, x_val) = cap(&prep.y_val, &prep.x_val, limit);
    let (y_tr, x_tr) = cap(&prep.train.y, &prep.train.x, limit);
    let (y_te, x_te) = cap(&prep.y_test, &prep.x_test, limit);

    let grid = cfg.grid(method);
    let t0 = Instant::now();
    let (tuned, _) = tune(method, p.unwrap_or(0), &grid, &prep.train, (&y_val, &x_val), &cfg.fit, cfg.seed)?;
    let tune_time = t0.elapsed().as_secs_f64();
    let runs = if method.stochastic() { cfg.n_runs.max(1) } else { 1 };

    let run = |i: usize| -> Result<RunOutcome> {
        let seed = cfg.seed.wrapping_add(1 + i as u64);
        let t = Instant::now();
        let fitted = fit(method, p.unwrap_or(0), tuned.best, &prep.train, &cfg.fit, seed)?;
        let fit_time = t.elapsed().as_secs_f64();
        let mut train = errors(&x_tr, &fitted.reconstruct(&prep.train, &y_tr)?, prep.mass)?;
        let t = Instant::now();
        let xh = fitted.reconstruct(&prep.train, &y_te)?;
        let decode_time = t.elapsed().as_secs_f64();
        let mut test = errors(&x_te, &xh, prep.mass)?;
        train.fit_time = prep.encoder_time + tune_time + fit_time;
        train.run_seed = seed;
        // the test encoding time scales with the number of evaluated points
        let enc_share = prep.test_encode_time * y_te.ncols() as f64 / prep.y_test.ncols().max(1) as f64;
        test.infer_time = enc_share + decode_time;
        test.run_seed = seed;
        let residual = match (&fitted, method) {
            (Fitted::Linear { model, .. }, Method::Randsmap(_)) => Some(conservation_residual(model)?),
            _ => None,
        };
        Ok(RunOutcome { train, test, residual })
    };
    let outcomes: Vec<RunOutcome> = (0..runs).into_par_iter().map(run).collect::<Result<_>>()?;

    let trains: Vec<&EvalReport> = outcomes.iter().map(|o| &o.train).collect();
    let tests: Vec<&EvalReport> = outcomes.iter().map(|o| &o.test).collect();
    let res: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.residual).collect();
    let (residual, sigma_next, bound_holds) = if res.is_empty() {
        (None, None, None)
    } else {
        let e: Vec<f64> = res.iter().map(|r| r.0).collect();
        let s: Vec<f64> = res.iter().map(|r| r.1).collect();
        (Some(Spread::of(&e)), Some(Spread::of(&s)), Some(res.iter().all(|(e, s)| residual_bound_holds(*e, *s, n))))
    };
    Ok(ConfigResult {
        method,
        decoder: method.label(),
        p,
        p_label: p.map(|_| if p_divisor <= 1 { "N".to_owned() } else { format!("N/{p_divisor}") }),
        hyper_name: method.hyper_name().to_owned(),
        tune: tuned,
        runs,
        train: stats(&trains, |r| r.fit_time),
        test: stats(&tests, |r| r.infer_time),
        residual,
        sigma_next,
        bound_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub benchmark: BenchmarkId,
    pub config: BenchmarkConfig,
    pub m: usize,
    pub mass_preserving: bool,
    pub results: Vec<ConfigResult>,
}

/// Runs every decoder configuration of a benchmark.
pub fn run_table(cfg: &BenchmarkConfig) -> Result<TableReport> {
    let prep = prepare(cfg)?;
    let mut results = Vec::new();
    for method in cfg.methods() {
        let divisors: &[usize] = if method.stochastic() { &cfg.p_divisors } else { &[1] };
        for &f in divisors {
            log::info!("{}: {} P=N/{f}", cfg.id.name(), method.label());
            results.push(evaluate_config(cfg, &prep, method, f)?);
        }
    }
    Ok(TableReport {
        benchmark: cfg.id,
        config: cfg.clone(),
        m: prep.train.x.nrows(),
        mass_preserving: prep.mass,
        results,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    decoder: &'a str,
    p: String,
    hyper_name: &'a str,
    hyper: f64,
    e2_median: f64,
    e2_p5: f64,
    e2_p95: f64,
    einf_median: f64,
    einf_p5: f64,
    einf_p95: f64,
    econ_median: Option<f64>,
    econ_p5: Option<f64>,
    econ_p95: Option<f64>,
    time_median: f64,
    time_p5: f64,
    time_p95: f64,
    runs: usize,
    n_points: usize,
}

fn csv_row<'a>(r: &'a ConfigResult, s: &SplitStats) -> CsvRow<'a> {
    CsvRow {
        decoder: &r.decoder,
        p: r.p_label.clone().unwrap_or_else(|| "-".into()),
        hyper_name: &r.hyper_name,
        hyper: r.tune.best,
        e2_median: s.e2.median,
        e2_p5: s.e2.p5,
        e2_p95: s.e2.p95,
        einf_median: s.einf.median,
        einf_p5: s.einf.p5,
        einf_p95: s.einf.p95,
        econ_median: s.econ.map(|c| c.median),
        econ_p5: s.econ.map(|c| c.p5),
        econ_p95: s.econ.map(|c| c.p95),
        time_median: s.time.median,
        time_p5: s.time.p5,
        time_p95: s.time.p95,
        runs: r.runs,
        n_points: s.n_points,
    }
}

fn write_csv(path: &Path, rows: &[&ConfigResult], train: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(csv_row(r, if train { &r.train } else { &r.test })).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("{other:?}")),
    }
}

impl TableReport {
    /// Writes `<benchmark>_<decoder>_<split>.csv` per decoder, the combined
    /// `<benchmark>_<split>.csv` tables and `<benchmark>.json`. Returns the
    /// written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.benchmark.name();
        let mut out = Vec::new();
        let mut slugs: Vec<String> = self.results.iter().map(|r| r.method.slug()).collect();
        slugs.dedup();
        for split in ["train", "test"] {
            let all: Vec<&ConfigResult> = self.results.iter().collect();
            let p = dir.join(format!("{name}_{split}.csv"));
            write_csv(&p, &all, split == "train")?;
            out.push(p);
            for slug in &slugs {
                let rows: Vec<&ConfigResult> = self.results.iter().filter(|r| &r.method.slug() == slug).collect();
                let p = dir.join(format!("{name}_{slug}_{split}.csv"));
                write_csv(&p, &rows, split == "train")?;
                out.push(p);
            }
        }
        let p = dir.join(format!("{name}.json"));
        std::fs::write(&p, serde_json::to_vec_pretty(self)?)?;
        out.push(p);
        Ok(out)
    }
}

/// Runs a benchmark at `scale` of the paper's sizes and writes its reports into `dir`.
pub fn reproduce_table(id: BenchmarkId, scale: f64, dir: &Path) -> Result<TableReport> {
    let cfg = BenchmarkConfig::new(id, scale)?;
    let report = run_table(&cfg)?;
    report.write(dir)?;
    Ok(report)
}
