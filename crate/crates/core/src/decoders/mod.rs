//! Pre-image decoders from latent coordinates back to ambient snapshots.
//!
//! * [`rfnn_fit`] / [`rfnn_fit_svd`]: ridge regression on random features.
//! * [`randsmap_fit`]: the same with the reconstructions constrained to sum to one.
//! * [`ddm_fit`]: Double Diffusion Maps lifting.
//! * [`knn_decode`]: convex combination of nearest training snapshots.
//! * [`pod_fit`]: linear projection baseline.
//!
//! [`DecoderModel`] wraps any fitted decoder for storage as a bundle.

mod ddm;
mod knn;
mod linear;
mod pod;

pub use ddm::{ddm_decode, ddm_fit, DdmModel};
pub use knn::{knn_decode, knn_decode_batch, nearest, objective_and_gradient, project_simplex, KnnOptions, KnnResult};
pub use linear::{
    conservation_residual, decode, randsmap_fit, randsmap_fit_with, residual_bound_holds, rfnn_fit, rfnn_fit_svd,
    LinearDecoder, RandsmapOptions, Truncation, DEFAULT_DELTA_S, DEFAULT_LAMBDA, MASS_PRECONDITION_TOL,
};
pub use pod::{pod_decode, pod_encode, pod_fit, pod_reconstruct, PodModel};

use crate::dmap::DmModel;
use crate::error::{Error, Result};
use crate::io::Bundle;
use crate::randfeat::{FeatureMap, FeatureSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Rfnn,
    Randsmap,
    Ddm,
    Knn,
    Pod,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Rfnn => "rfnn",
            DecoderKind::Randsmap => "randsmap",
            DecoderKind::Ddm => "ddm",
            DecoderKind::Knn => "knn",
            DecoderKind::Pod => "pod",
        }
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rfnn" => Ok(DecoderKind::Rfnn),
            "randsmap" => Ok(DecoderKind::Randsmap),
            "ddm" => Ok(DecoderKind::Ddm),
            "knn" => Ok(DecoderKind::Knn),
            "pod" => Ok(DecoderKind::Pod),
            _ => Err(Error::InvalidArgument(format!("unknown decoder `{s}`"))),
        }
    }
}

/// A kNN decoder is the encoder plus its optimizer settings.
#[derive(Debug, Clone)]
pub struct KnnModel {
    pub dm: DmModel,
    pub opts: KnnOptions,
}

#[derive(Debug, Clone)]
pub enum DecoderModel {
    Linear(LinearDecoder),
    Ddm(DdmModel),
    Knn(KnnModel),
    Pod(PodModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Header {
    Rfnn { lambda: f64, feature: Option<FeatureSpec> },
    Randsmap { lambda: f64, feature: Option<FeatureSpec>, rank: usize, sigma_first: f64, sigma_next: f64 },
    Ddm { epsilon2: f64, eigenvalues: Vec<f64> },
    Knn { opts: KnnOptions, dm: serde_json::Value },
    Pod { singular_values: Vec<f64> },
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

impl DecoderModel {
    pub fn kind(&self) -> DecoderKind {
        match self {
            DecoderModel::Linear(l) => l.kind,
            DecoderModel::Ddm(_) => DecoderKind::Ddm,
            DecoderModel::Knn(_) => DecoderKind::Knn,
            DecoderModel::Pod(_) => DecoderKind::Pod,
        }
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        match self {
            DecoderModel::Linear(l) => {
                let header = match (&l.trunc, l.kind) {
                    (Some(t), DecoderKind::Randsmap) => Header::Randsmap {
                        lambda: l.lambda,
                        feature: l.feature.clone(),
                        rank: t.rank,
                        sigma_first: t.sigma_first,
                        sigma_next: t.sigma_next,
                    },
                    _ => Header::Rfnn { lambda: l.lambda, feature: l.feature.clone() },
                };
                let mut b = Bundle::new(&header)?;
                b.push("a", l.a.clone());
                if let (Some(t), DecoderKind::Randsmap) = (&l.trunc, l.kind) {
                    b.push("u_tr", t.u.clone());
                }
                Ok(b)
            }
            DecoderModel::Ddm(d) => {
                let mut b = Bundle::new(&Header::Ddm { epsilon2: d.epsilon2, eigenvalues: d.eigenvalues.clone() })?;
                b.push("y_train", d.y_train.clone());
                b.push("lift", d.lift.clone());
                Ok(b)
            }
            DecoderModel::Knn(k) => {
                let inner = k.dm.to_bundle()?;
                let mut b = Bundle::new(&Header::Knn { opts: k.opts, dm: inner.header })?;
                b.blobs = inner.blobs;
                Ok(b)
            }
            DecoderModel::Pod(p) => {
                let mut b = Bundle::new(&Header::Pod { singular_values: p.singular_values.clone() })?;
                b.push("mean", column(p.mean.as_slice()));
                b.push("basis", p.basis.clone());
                Ok(b)
            }
        }
    }

    pub fn from_bundle(mut b: Bundle) -> Result<Self> {
        let header: Header = b.header_as().map_err(|e| Error::Format(format!("not a decoder bundle: {e}")))?;
        let bad = || Error::Format("inconsistent decoder bundle".into());
        Ok(match header {
            Header::Rfnn { lambda, feature } => {
                let a = b.take("a")?;
                DecoderModel::Linear(LinearDecoder { kind: DecoderKind::Rfnn, a, lambda, feature, trunc: None })
            }
            Header::Randsmap { lambda, feature, rank, sigma_first, sigma_next } => {
                let a = b.take("a")?;
                let u = b.take("u_tr")?;
                if u.ncols() != rank {
                    return Err(bad());
                }
                DecoderModel::Linear(LinearDecoder {
                    kind: DecoderKind::Randsmap,
                    a,
                    lambda,
                    feature,
                    trunc: Some(Truncation { rank, sigma_first, sigma_next, u }),
                })
            }
            Header::Ddm { epsilon2, eigenvalues } => {
                let y_train = b.take("y_train")?;
                let lift = b.take("lift")?;
                if lift.ncols() != y_train.ncols() {
                    return Err(bad());
                }
                DecoderModel::Ddm(DdmModel { y_train, epsilon2, rank: eigenvalues.len(), eigenvalues, lift })
            }
            Header::Knn { opts, dm } => {
                let dm = DmModel::from_bundle(Bundle { header: dm, blobs: b.blobs })?;
                DecoderModel::Knn(KnnModel { dm, opts })
            }
            Header::Pod { singular_values } => {
                let mean = b.take("mean")?;
                let basis = b.take("basis")?;
                if mean.ncols() != 1 || mean.nrows() != basis.nrows() {
                    return Err(bad());
                }
                DecoderModel::Pod(PodModel { mean: mean.column(0).into_owned(), basis, singular_values })
            }
        })
    }

    /// Reconstructs ambient points from latent ones. Random-feature decoders
    /// regenerate their map from the stored spec unless `map` is given; a map
    /// that differs from the one used at fit time is rejected.
    pub fn reconstruct(&self, y: &DMatrix<f64>, map: Option<&FeatureMap>) -> Result<DMatrix<f64>> {
        match self {
            DecoderModel::Linear(l) => match map {
                Some(m) => decode(l, m, y),
                None => {
                    let spec = l
                        .feature
                        .as_ref()
                        .ok_or_else(|| Error::InvalidState("decoder carries no feature-map spec".into()))?;
                    decode(l, &spec.sample()?, y)
                }
            },
            DecoderModel::Ddm(d) => ddm_decode(d, y),
            DecoderModel::Knn(k) => {
                let (x, unconverged) = knn_decode_batch(&k.dm, &k.dm.embedding(), &k.dm.x_train, y, &k.opts)?;
                if unconverged > 0 {
                    log::warn!("{unconverged} of {} kNN reconstructions hit the iteration cap", y.ncols());
                }
                Ok(x)
            }
            DecoderModel::Pod(p) => pod_decode(p, y),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(Bundle::load(path)?)
    }
}

/// `1ᵀx̂ − 1` for every reconstructed column.
pub fn conservation_errors(x_hat: &DMatrix<f64>) -> Vec<f64> {
    x_hat.column_iter().map(|c| c.sum() - 1.0).collect()
}
