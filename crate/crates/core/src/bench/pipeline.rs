use super::metrics::errors;
use crate::decoders::{
    ddm_decode, ddm_fit, decode, knn_decode_batch, randsmap_fit_with, rfnn_fit, DdmModel, KnnOptions, LinearDecoder,
    RandsmapOptions, DEFAULT_DELTA_S, DEFAULT_LAMBDA,
};
use crate::dmap::DmModel;
use crate::error::{Error, Result};
use crate::randfeat::{feature_matrix, sample_msrff, sample_rff, sample_sigmoid, FeatureKind, FeatureMap};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// A decoder family with its single tunable hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Randsmap(FeatureKind),
    Rfnn(FeatureKind),
    Ddm,
    Knn,
}

fn kind_slug(k: FeatureKind) -> &'static str {
    match k {
        FeatureKind::Rff => "rff",
        FeatureKind::Msrff => "msrff",
        FeatureKind::Sigmoid => "sig",
    }
}

fn kind_label(k: FeatureKind) -> &'static str {
    match k {
        FeatureKind::Rff => "RFF",
        FeatureKind::Msrff => "MS-RFF",
        FeatureKind::Sigmoid => "Sig",
    }
}

impl Method {
    /// File-name form, e.g. `randsmap-msrff`.
    pub fn slug(self) -> String {
        match self {
            Method::Randsmap(k) => format!("randsmap-{}", kind_slug(k)),
            Method::Rfnn(k) => format!("rfnn-{}", kind_slug(k)),
            Method::Ddm => "ddm".into(),
            Method::Knn => "knn".into(),
        }
    }

    /// Table form, e.g. `RANDSMAP-MS-RFF`.
    pub fn label(self) -> String {
        match self {
            Method::Randsmap(k) => format!("RANDSMAP-{}", kind_label(k)),
            Method::Rfnn(k) => format!("RFNN-{}", kind_label(k)),
            Method::Ddm => "DDM".into(),
            Method::Knn => "k-NN".into(),
        }
    }

    pub fn hyper_name(self) -> &'static str {
        match self {
            Method::Randsmap(k) | Method::Rfnn(k) => match k {
                FeatureKind::Rff => "sigma_w",
                FeatureKind::Msrff => "sigma_ub",
                FeatureKind::Sigmoid => "c",
            },
            Method::Ddm => "w2",
            Method::Knn => "k",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Method::Randsmap(_) | Method::Rfnn(_))
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let kind = |k: &str| match k {
            "rff" => Ok(FeatureKind::Rff),
            "msrff" | "ms-rff" => Ok(FeatureKind::Msrff),
            "sig" | "sigmoid" => Ok(FeatureKind::Sigmoid),
            _ => Err(Error::InvalidArgument(format!("unknown feature kind `{k}`"))),
        };
        match s.as_str() {
            "ddm" => Ok(Method::Ddm),
            "knn" | "k-nn" => Ok(Method::Knn),
            _ => {
                if let Some(k) = s.strip_prefix("randsmap-") {
                    Ok(Method::Randsmap(kind(k)?))
                } else if let Some(k) = s.strip_prefix("rfnn-") {
                    Ok(Method::Rfnn(kind(k)?))
                } else {
                    Err(Error::InvalidArgument(format!("unknown decoder `{s}`")))
                }
            }
        }
    }
}

/// Solver settings shared by every fit in a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub lambda: f64,
    pub delta_s: f64,
    pub msrff_q: usize,
    pub knn_tol: f64,
    pub knn_max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, delta_s: DEFAULT_DELTA_S, msrff_q: 10, knn_tol: 1e-8, knn_max_iter: 500 }
    }
}

/// Encoder and training pairs a decoder is fitted against.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub dm: DmModel,
    /// `d × N` latent coordinates.
    pub y: DMatrix<f64>,
    /// `M × N` ambient snapshots.
    pub x: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Linear { model: LinearDecoder, map: FeatureMap },
    Ddm(DdmModel),
    Knn(KnnOptions),
}

/// The sampled RFF frequency scale for a kernel bandwidth `σ_w`.
pub fn rff_frequency(sigma_w: f64) -> f64 {
    1.0 / sigma_w
}

/// Feature counts for MSRFF are rounded down to a multiple of `Q`.
pub fn effective_p(kind: FeatureKind, p: usize, q: usize) -> usize {
    match kind {
        FeatureKind::Msrff => (p / q).max(1) * q,
        _ => p,
    }
}

/// Samples the feature map of one random-feature decoder. `h` is the tuned
/// hyperparameter: the kernel bandwidth for RFF, the scale upper bound for
/// MSRFF and the weight bound for sigmoids.
pub fn feature_map(
    kind: FeatureKind,
    p: usize,
    h: f64,
    y_train: &DMatrix<f64>,
    q: usize,
    seed: u64,
) -> Result<FeatureMap> {
    let d = y_train.nrows();
    match kind {
        FeatureKind::Rff => {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("sigma_w must be positive".into()));
            }
            sample_rff(d, p, rff_frequency(h), seed)
        }
        FeatureKind::Msrff => sample_msrff(d, effective_p(kind, p, q), q, h, seed),
        FeatureKind::Sigmoid => sample_sigmoid(y_train, p, h, seed),
    }
}

/// Fits one decoder. `p` is ignored by the deterministic methods.
pub fn fit(method: Method, p: usize, h: f64, train: &TrainSet, opts: &FitOptions, seed: u64) -> Result<Fitted> {
    match method {
        Method::Randsmap(kind) | Method::Rfnn(kind) => {
            let map = feature_map(kind, p, h, &train.y, opts.msrff_q, seed)?;
            let phi = feature_matrix(&map, &train.y)?;
            let model = if matches!(method, Method::Randsmap(_)) {
                randsmap_fit_with(
                    &phi,
                    &train.x,
                    &RandsmapOptions { lambda: opts.lambda, delta_s: opts.delta_s, rank: None },
                )?
            } else {
                rfnn_fit(&phi, &train.x, opts.lambda)?
            };
            Ok(Fitted::Linear { model: model.with_features(&map), map })
        }
        Method::Ddm => Ok(Fitted::Ddm(ddm_fit(&train.y, &train.x, h, None)?)),
        Method::Knn => {
            let k = h.round();
            if !(k >= 1.0) {
                return Err(Error::InvalidArgument(format!("k must be a positive integer, got {h}")));
            }
            Ok(Fitted::Knn(KnnOptions { k: k as usize, tol: opts.knn_tol, max_iter: opts.knn_max_iter }))
        }
    }
}

impl Fitted {
    pub fn reconstruct(&self, train: &TrainSet, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Fitted::Linear { model, map } => decode(model, map, y),
            Fitted::Ddm(m) => ddm_decode(m, y),
            Fitted::Knn(o) => {
                let (x, unconverged) = knn_decode_batch(&train.dm, &train.y, &train.x, y, o)?;
                if unconverged > 0 {
                    log::info!("{unconverged} of {} kNN reconstructions hit the iteration cap", y.ncols());
                }
                Ok(x)
            }
        }
    }

    pub fn linear(&self) -> Option<&LinearDecoder> {
        match self {
            Fitted::Linear { model, .. } => Some(model),
            _ => None,
        }
    }
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub grid: Vec<f64>,
    /// Mean validation `e2` per grid value; `None` where the fit failed.
    pub val_errors: Vec<Option<f64>>,
    pub best: f64,
}

/// `n` evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Integer grid over `[lo, hi]` with at most `n` distinct values.
pub fn int_grid(lo: usize, hi: usize, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = linspace(lo as f64, hi as f64, n).into_iter().map(f64::round).collect();
    g.dedup();
    g
}

/// Grid search on validation `e2`. Failed fits are skipped; ties go to the
/// smaller hyperparameter. The returned `best` is meant to be refitted on the
/// training set by the caller.
pub fn tune_with<F>(grid: &[f64], mut score: F) -> Result<TuneResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty tuning grid".into()));
    }
    let val_errors: Vec<Option<f64>> = grid
        .iter()
        .map(|&h| match score(h) {
            Ok(e) if e.is_finite() => Some(e),
            Ok(_) => None,
            Err(e) => {
                log::debug!("grid value {h} failed: {e}");
                None
            }
        })
        .collect();
    let best = grid
        .iter()
        .zip(&val_errors)
        .filter_map(|(h, e)| e.map(|e| (e, *h)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|(_, h)| h)
        .ok_or_else(|| Error::Tuning("every grid value failed".into()))?;
    Ok(TuneResult { grid: grid.to_vec(), val_errors, best })
}

/// Fits `method` on `train` for every grid value and scores it on the
/// validation pair, then refits at the optimum.
pub fn tune(
    method: Method,
    p: usize,
    grid: &[f64],
    train: &TrainSet,
    val: (&DMatrix<f64>, &DMatrix<f64>),
    opts: &FitOptions,
    seed: u64,
) -> Result<(TuneResult, Fitted)> {
    let (y_val, x_val) = val;
    let result = tune_with(grid, |h| {
        let f = fit(method, p, h, train, opts, seed)?;
        let xh = f.reconstruct(train, y_val)?;
        Ok(errors(x_val, &xh, false)?.mean_e2())
    })?;
    let fitted = fit(method, p, result.best, train, opts, seed)?;
    Ok((result, fitted))
}
