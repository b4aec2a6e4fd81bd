//! Random-feature maps: Fourier (RFF), multi-scale Fourier (MSRFF) and
//! sigmoidal features, with the bias-augmented feature matrix `[1 | Φ̃]`.
//!
//! A map is fully determined by its [`FeatureSpec`] (kind, sizes, parameters,
//! seed and, for sigmoids, the training bounding box); [`FeatureSpec::sample`]
//! regenerates `W` and `b` bit-exactly.

use crate::error::{invalid, Error, Result};
use crate::linalg::sq_dists_self;
use crate::rng::SeededRng;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Lower end of the MSRFF scale distribution.
pub const MSRFF_SCALE_LO: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Rff,
    Msrff,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureParams {
    Rff { sigma_w: f64 },
    Msrff { q: usize, sigma_ub: f64 },
    Sigmoid { c: f64 },
}

impl FeatureParams {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureParams::Rff { .. } => FeatureKind::Rff,
            FeatureParams::Msrff { .. } => FeatureKind::Msrff,
            FeatureParams::Sigmoid { .. } => FeatureKind::Sigmoid,
        }
    }
}

/// Everything needed to regenerate a feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub d: usize,
    pub p: usize,
    pub params: FeatureParams,
    pub seed: u64,
    /// Sigmoid only: component-wise training minimum and maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub spec: FeatureSpec,
    /// `P × d` frequencies or weights.
    pub w: DMatrix<f64>,
    /// Phases or biases.
    pub b: DVector<f64>,
    /// MSRFF only: the sampled `σ_q`, one per block of `P/Q` rows.
    pub scales: Vec<f64>,
    /// Sigmoid only: `P × d` inflection centers.
    pub centers: Option<DMatrix<f64>>,
}

pub fn sample_rff(d: usize, p: usize, sigma_w: f64, seed: u64) -> Result<FeatureMap> {
    FeatureSpec { d, p, params: FeatureParams::Rff { sigma_w }, seed, bbox: None }.sample()
}

pub fn sample_msrff(d: usize, p: usize, q: usize, sigma_ub: f64, seed: u64) -> Result<FeatureMap> {
    FeatureSpec { d, p, params: FeatureParams::Msrff { q, sigma_ub }, seed, bbox: None }.sample()
}

/// Sigmoid features whose inflection points are uniform in the bounding box
/// of `y_train` (`d × n`).
pub fn sample_sigmoid(y_train: &DMatrix<f64>, p: usize, c: f64, seed: u64) -> Result<FeatureMap> {
    if y_train.ncols() == 0 {
        return Err(invalid("training embedding is empty"));
    }
    let lo: Vec<f64> = y_train.row_iter().map(|r| r.min()).collect();
    let hi: Vec<f64> = y_train.row_iter().map(|r| r.max()).collect();
    FeatureSpec { d: y_train.nrows(), p, params: FeatureParams::Sigmoid { c }, seed, bbox: Some((lo, hi)) }.sample()
}

impl FeatureSpec {
    pub fn kind(&self) -> FeatureKind {
        self.params.kind()
    }

    pub fn sample(&self) -> Result<FeatureMap> {
        let (d, p) = (self.d, self.p);
        if d == 0 || p == 0 {
            return Err(invalid("feature map needs d >= 1 and P >= 1"));
        }
        let mut rng = SeededRng::new(self.seed);
        let mut w = DMatrix::zeros(p, d);
        let mut scales = Vec::new();
        let mut centers = None;
        let b = match self.params {
            FeatureParams::Rff { sigma_w } => {
                if !(sigma_w > 0.0 && sigma_w.is_finite()) {
                    return Err(invalid(format!("sigma_w must be positive, got {sigma_w}")));
                }
                fill_normal_rows(&mut w, 0..p, sigma_w, &mut rng);
                DVector::from_fn(p, |_, _| rng.uniform_in(0.0, 2.0 * PI))
            }
            FeatureParams::Msrff { q, sigma_ub } => {
                if q == 0 || p % q != 0 {
                    return Err(invalid(format!("Q = {q} must divide P = {p}")));
                }
                if !(sigma_ub > MSRFF_SCALE_LO && sigma_ub.is_finite()) {
                    return Err(invalid(format!("sigma_ub must exceed {MSRFF_SCALE_LO}")));
                }
                scales = (0..q).map(|_| rng.uniform_in(MSRFF_SCALE_LO, sigma_ub)).collect();
                let l = p / q;
                for (k, &s) in scales.iter().enumerate() {
                    fill_normal_rows(&mut w, k * l..(k + 1) * l, s, &mut rng);
                }
                DVector::from_fn(p, |_, _| rng.uniform_in(0.0, 2.0 * PI))
            }
            FeatureParams::Sigmoid { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(invalid(format!("c must be positive, got {c}")));
                }
                let (lo, hi) =
                    self.bbox.as_ref().ok_or_else(|| invalid("sigmoid features need a training bounding box"))?;
                if lo.len() != d || hi.len() != d {
                    return Err(invalid("bounding box dimension mismatch"));
                }
                if lo.iter().zip(hi).all(|(a, b)| a >= b) {
                    return Err(invalid("degenerate training bounding box"));
                }
                let mut mu = DMatrix::zeros(p, d);
                let mut b = DVector::zeros(p);
                for k in 0..p {
                    for j in 0..d {
                        w[(k, j)] = rng.uniform_in(-c, c);
                    }
                    for j in 0..d {
                        mu[(k, j)] = if hi[j] > lo[j] { rng.uniform_in(lo[j], hi[j]) } else { lo[j] };
                    }
                    b[k] = -(0..d).map(|j| w[(k, j)] * mu[(k, j)]).sum::<f64>();
                }
                centers = Some(mu);
                b
            }
        };
        Ok(FeatureMap { spec: self.clone(), w, b, scales, centers })
    }
}

fn fill_normal_rows(w: &mut DMatrix<f64>, rows: std::ops::Range<usize>, sigma: f64, rng: &mut SeededRng) {
    for k in rows {
        for j in 0..w.ncols() {
            w[(k, j)] = sigma * rng.normal();
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl FeatureMap {
    pub fn kind(&self) -> FeatureKind {
        self.spec.kind()
    }

    pub fn p(&self) -> usize {
        self.spec.p
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    /// Non-bias features `Φ̃`, `m × P`.
    pub fn features(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.d() {
            return Err(invalid(format!("points have dimension {}, map expects {}", y.nrows(), self.d())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite latent coordinate"));
        }
        let mut z = y.transpose() * self.w.transpose();
        let amp = (2.0 / self.p() as f64).sqrt();
        for k in 0..self.p() {
            let bk = self.b[k];
            let mut col = z.column_mut(k);
            match self.kind() {
                FeatureKind::Rff | FeatureKind::Msrff => col.apply(|t| *t = amp * (*t + bk).cos()),
                FeatureKind::Sigmoid => col.apply(|t| *t = sigmoid(*t + bk)),
            }
        }
        Ok(z)
    }
}

/// `[1 | Φ̃]`, `m × (P + 1)`; the bias column is at index 0.
pub fn feature_matrix(map: &FeatureMap, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let phi = map.features(y)?;
    let m = phi.nrows();
    let mut out = DMatrix::from_element(m, map.p() + 1, 1.0);
    out.columns_mut(1, map.p()).copy_from(&phi);
    Ok(out)
}

/// `Φ̃ Φ̃ᵀ` without the bias column.
pub fn induced_kernel(map: &FeatureMap, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let phi = map.features(y)?;
    Ok(&phi * phi.transpose())
}

/// Closed-form expectation of the induced kernel: the Gaussian
/// `exp(−σ²‖Δ‖²/2)` for RFF, the uniform mixture over the sampled scales for
/// MSRFF. Sigmoid features have no shift-invariant limit.
pub fn expected_kernel(map: &FeatureMap, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d2 = sq_dists_self(y);
    match map.spec.params {
        FeatureParams::Rff { sigma_w } => Ok(d2.map(|d| (-0.5 * sigma_w * sigma_w * d).exp())),
        FeatureParams::Msrff { .. } => {
            let q = map.scales.len() as f64;
            Ok(d2.map(|d| map.scales.iter().map(|s| (-0.5 * s * s * d).exp()).sum::<f64>() / q))
        }
        FeatureParams::Sigmoid { .. } => {
            Err(Error::InvalidArgument("sigmoid features have no closed-form expected kernel".into()))
        }
    }
}

/// Per-scale expected kernels `exp(−σ_q²‖Δ‖²/2)` of an MSRFF map.
pub fn scale_kernels(map: &FeatureMap, y: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let d2 = sq_dists_self(y);
    map.scales.iter().map(|s| d2.map(|d| (-0.5 * s * s * d).exp())).collect()
}
