//! Linear baseline: projection onto the leading principal directions.

use crate::error::{invalid, Result};
use crate::linalg::svd_desc;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct PodModel {
    pub mean: DVector<f64>,
    /// `M × d` orthonormal basis.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

pub fn pod_fit(x_train: &DMatrix<f64>, d: usize) -> Result<PodModel> {
    let (m, n) = x_train.shape();
    if n == 0 || m == 0 {
        return Err(invalid("empty training set"));
    }
    let mean = x_train.column_mean();
    let mut c = x_train.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    let svd = svd_desc(&c);
    let s1 = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd.s.iter().take_while(|&&s| s > m.max(n) as f64 * f64::EPSILON * s1).count();
    if d == 0 || d > rank {
        return Err(invalid(format!("POD dimension {d} outside 1..={rank} (numerical rank)")));
    }
    Ok(PodModel { mean, basis: svd.u.columns(0, d).into_owned(), singular_values: svd.s })
}

/// Coefficients `U_dᵀ(x − μ)`, `d × L`.
pub fn pod_encode(model: &PodModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != model.mean.len() {
        return Err(invalid("ambient dimension mismatch"));
    }
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= &model.mean;
    }
    Ok(model.basis.tr_mul(&c))
}

/// `U_d z + μ`.
pub fn pod_decode(model: &PodModel, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.nrows() != model.basis.ncols() {
        return Err(invalid("coefficient dimension mismatch"));
    }
    let mut x = &model.basis * z;
    for mut col in x.column_iter_mut() {
        col += &model.mean;
    }
    Ok(x)
}

/// Projection of ambient snapshots onto the affine POD subspace.
pub fn pod_reconstruct(model: &PodModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pod_decode(model, &pod_encode(model, x)?)
}
