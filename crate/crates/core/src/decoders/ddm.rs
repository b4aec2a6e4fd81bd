//! Double Diffusion Maps lifting: a truncated eigen-expansion of a Gaussian
//! kernel on the latent coordinates, applied to the ambient data.

use crate::dmap::{gaussian_kernel, gaussian_kernel_self, median_pairwise_distance};
use crate::error::{invalid, Error, Result};
use crate::linalg::sym_eigen_desc;
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DdmModel {
    /// `d × N` latent training coordinates.
    pub y_train: DMatrix<f64>,
    pub epsilon2: f64,
    pub rank: usize,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `M × N` precomputed `X V_r Λ_r⁻¹ V_rᵀ`.
    pub lift: DMatrix<f64>,
}

/// `ε₂ = w2 · median(latent pairwise distance)`; eigenpairs with
/// `λ_i > δ λ_1`, `δ = N ‖K‖₂ 2⁻⁵³`, are kept unless `rank` is given.
pub fn ddm_fit(y_train: &DMatrix<f64>, x_train: &DMatrix<f64>, w2: f64, rank: Option<usize>) -> Result<DdmModel> {
    if y_train.ncols() != x_train.ncols() {
        return Err(invalid("latent and ambient training sets differ in size"));
    }
    if !(w2 > 0.0 && w2.is_finite()) {
        return Err(invalid("w2 must be positive"));
    }
    let epsilon2 = w2 * median_pairwise_distance(y_train)?;
    if !(epsilon2 > 0.0) {
        return Err(Error::DegenerateInput("latent points coincide".into()));
    }
    let n = y_train.ncols();
    let k = gaussian_kernel_self(y_train, epsilon2)?;
    let (vals, vecs) = sym_eigen_desc(k);
    let l1 = vals[0];
    let delta = n as f64 * l1 * f64::EPSILON / 2.0;
    let positive = vals.iter().take_while(|&&v| v > 0.0).count();
    let r = match rank {
        Some(r) if r == 0 || r > positive => {
            return Err(invalid(format!("rank {r} outside 1..={positive}")));
        }
        Some(r) => r,
        None => vals.iter().take_while(|&&v| v > delta * l1).count().max(1),
    };
    let v = vecs.columns(0, r);
    let mut xv = x_train * v;
    for i in 0..r {
        xv.column_mut(i).scale_mut(1.0 / vals[i]);
    }
    let lift = xv * v.transpose();
    Ok(DdmModel { y_train: y_train.clone(), epsilon2, rank: r, eigenvalues: vals[..r].to_vec(), lift })
}

/// `X̂* = X V_r Λ_r⁻¹ V_rᵀ K(Y, Y*)`.
pub fn ddm_decode(model: &DdmModel, y_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y_star.nrows() != model.y_train.nrows() {
        return Err(invalid("latent dimension mismatch"));
    }
    let k = gaussian_kernel(&model.y_train, y_star, model.epsilon2)?;
    Ok(&model.lift * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;

    #[test]
    fn full_rank_interpolates_training_set() {
        let y = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 2.5, 4.0, 6.0]);
        let x = DMatrix::from_fn(3, 5, |i, j| ((i + 1) * (j + 2)) as f64 / 10.0);
        let m = ddm_fit(&y, &x, 0.5, Some(5)).unwrap();
        assert!(rel_diff(&ddm_decode(&m, &y).unwrap(), &x) < 1e-6);
    }

    #[test]
    fn default_truncation_and_rank_bounds() {
        let y = DMatrix::from_fn(2, 40, |i, j| ((j * (i + 3)) as f64 * 0.37).sin());
        let x = DMatrix::from_fn(4, 40, |i, j| (i + j) as f64);
        let m = ddm_fit(&y, &x, 0.5, None).unwrap();
        assert!(m.rank >= 1 && m.rank <= 40);
        assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(ddm_fit(&y, &x, 0.5, Some(0)).is_err());
        assert!(ddm_fit(&y, &x, 0.5, Some(41)).is_err());
    }
}
