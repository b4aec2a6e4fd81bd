//! Random-feature decoders: unconstrained ridge (RFNN) and the
//! sum-to-one constrained solution (RANDSMAP).
//!
//! Both produce a `(P+1) × M` coefficient matrix `A` with `X̂ = Aᵀ Φ*ᵀ`.

use super::DecoderKind;
use crate::error::{invalid, Error, Result};
use crate::linalg::svd_desc;
use crate::randfeat::{feature_matrix, FeatureMap, FeatureSpec};
use nalgebra::{DMatrix, DVector};

/// Default regularization shared by both decoders.
pub const DEFAULT_LAMBDA: f64 = 1e-3;
/// Default relative SVD truncation for RANDSMAP.
pub const DEFAULT_DELTA_S: f64 = 1e-8;
/// Column sums of conservative training data must match 1 this closely.
pub const MASS_PRECONDITION_TOL: f64 = 1e-10;

/// SVD truncation record of a RANDSMAP fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub rank: usize,
    pub sigma_first: f64,
    /// First omitted singular value (0 when nothing was dropped).
    pub sigma_next: f64,
    /// `n × rank` retained left singular vectors.
    pub u: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    pub kind: DecoderKind,
    /// `(P+1) × M`, bias row first.
    pub a: DMatrix<f64>,
    pub lambda: f64,
    pub feature: Option<FeatureSpec>,
    pub trunc: Option<Truncation>,
}

impl LinearDecoder {
    /// Attaches the feature map used to build `Φ`, enabling the mismatch guard.
    pub fn with_features(mut self, map: &FeatureMap) -> Self {
        self.feature = Some(map.spec.clone());
        self
    }
}

fn check_shapes(phi: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<()> {
    if phi.nrows() != x.ncols() {
        return Err(invalid(format!("feature matrix has {} rows but data has {} columns", phi.nrows(), x.ncols())));
    }
    if phi.nrows() == 0 || phi.ncols() == 0 {
        return Err(invalid("empty training set"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda must be finite and nonnegative"));
    }
    Ok(())
}

/// Cholesky solve of `G Z = R`; a singular or numerically singular `G`
/// becomes a rank-deficiency error.
fn spd_solve(g: DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let chol = g.cholesky().ok_or_else(|| Error::RankDeficient("normal equations are not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo * lo > hi * hi * n as f64 * f64::EPSILON) {
        return Err(Error::RankDeficient("normal equations are numerically singular".into()));
    }
    Ok(chol.solve(r))
}

/// Tikhonov-regularized least squares: primal `(ΦᵀΦ + λI)⁻¹ΦᵀXᵀ` when
/// `n ≥ P+1`, dual `Φᵀ(ΦΦᵀ + λI)⁻¹Xᵀ` otherwise.
pub fn rfnn_fit(phi: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<LinearDecoder> {
    check_shapes(phi, x, lambda)?;
    let (n, p1) = phi.shape();
    let a = if n >= p1 {
        let mut g = phi.tr_mul(phi);
        for i in 0..p1 {
            g[(i, i)] += lambda;
        }
        let rhs = phi.tr_mul(&x.transpose());
        spd_solve(g, &rhs)?
    } else {
        let mut g = phi * phi.transpose();
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        let z = spd_solve(g, &x.transpose())?;
        phi.tr_mul(&z)
    };
    Ok(LinearDecoder { kind: DecoderKind::Rfnn, a, lambda, feature: None, trunc: None })
}

/// Spectral-filter form `V_r (Σ_r² + λI)⁻¹ Σ_r U_rᵀ Xᵀ` over the numeric rank;
/// `λ = 0` gives the minimum-norm pseudo-inverse solution.
pub fn rfnn_fit_svd(phi: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<LinearDecoder> {
    check_shapes(phi, x, lambda)?;
    let svd = svd_desc(phi);
    let tol = phi.nrows().max(phi.ncols()) as f64 * f64::EPSILON * svd.s.first().copied().unwrap_or(0.0);
    let r = svd.s.iter().take_while(|&&s| s > tol).count();
    let u = svd.u.columns(0, r);
    let v = svd.v.columns(0, r);
    let mut c = u.tr_mul(&x.transpose());
    for i in 0..r {
        let s = svd.s[i];
        c.row_mut(i).scale_mut(s / (s * s + lambda));
    }
    Ok(LinearDecoder { kind: DecoderKind::Rfnn, a: v * c, lambda, feature: None, trunc: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandsmapOptions {
    pub lambda: f64,
    pub delta_s: f64,
    /// Forces the truncation rank (capped by the number of nonzero singular values).
    pub rank: Option<usize>,
}

impl Default for RandsmapOptions {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, delta_s: DEFAULT_DELTA_S, rank: None }
    }
}

pub fn randsmap_fit(phi: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64, delta_s: f64) -> Result<LinearDecoder> {
    randsmap_fit_with(phi, x, &RandsmapOptions { lambda, delta_s, rank: None })
}

/// Closed-form sum-to-one constrained ridge solution on the truncated SVD of `Φ`:
///
/// `A = V_r (Σ² + λ)⁻¹ Σ [U_rᵀXᵀ + (λ/M) Σ⁻² U_rᵀ1_n 1_Mᵀ]`,
///
/// which is the constrained optimum written with `U_rᵀ(I − U_r(I + λΣ⁻²)U_rᵀ)1 = −λΣ⁻²U_rᵀ1`.
pub fn randsmap_fit_with(phi: &DMatrix<f64>, x: &DMatrix<f64>, opts: &RandsmapOptions) -> Result<LinearDecoder> {
    let lambda = opts.lambda;
    check_shapes(phi, x, lambda)?;
    if !(opts.delta_s > 0.0) {
        return Err(invalid("delta_S must be positive"));
    }
    let worst = x.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max);
    if !(worst <= MASS_PRECONDITION_TOL) {
        return Err(Error::Precondition(format!("training columns must sum to 1 (worst deviation {worst:e})")));
    }
    let (n, m) = (phi.nrows(), x.nrows());
    let svd = svd_desc(phi);
    let s1 = svd.s[0];
    if !(s1 > 0.0) {
        return Err(Error::RankDeficient("feature matrix is zero".into()));
    }
    let auto = svd.s.iter().take_while(|&&s| s > opts.delta_s * s1).count();
    let positive = svd.s.iter().take_while(|&&s| s > 0.0).count();
    let r = opts.rank.map_or(auto, |k| k.clamp(1, positive));
    let sigma_next = svd.s.get(r).copied().unwrap_or(0.0);

    let u = svd.u.columns(0, r).into_owned();
    let v = svd.v.columns(0, r);
    let u1: DVector<f64> = u.tr_mul(&DVector::from_element(n, 1.0));
    let mut c = u.tr_mul(&x.transpose());
    for i in 0..r {
        let s = svd.s[i];
        let filt = s / (s * s + lambda);
        // the filter times λΣ⁻² folded into one factor
        let corr = lambda / (m as f64 * s * (s * s + lambda)) * u1[i];
        c.row_mut(i).apply(|t| *t = filt * *t + corr);
    }
    Ok(LinearDecoder {
        kind: DecoderKind::Randsmap,
        a: v * c,
        lambda,
        feature: None,
        trunc: Some(Truncation { rank: r, sigma_first: s1, sigma_next, u }),
    })
}

/// `X̂* = Aᵀ Φ*ᵀ` for latent points `y_star` (`d × L`).
pub fn decode(model: &LinearDecoder, map: &FeatureMap, y_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(spec) = &model.feature {
        if spec != &map.spec {
            return Err(Error::FeatureMapMismatch(format!(
                "model was fitted with {:?} (seed {}), got {:?} (seed {})",
                spec.params, spec.seed, map.spec.params, map.spec.seed
            )));
        }
    }
    if model.a.nrows() != map.p() + 1 {
        return Err(Error::FeatureMapMismatch(format!(
            "model has {} coefficient rows, map produces {} features",
            model.a.nrows(),
            map.p() + 1
        )));
    }
    let phi = feature_matrix(map, y_star)?;
    Ok(model.a.tr_mul(&phi.transpose()))
}

/// `(‖(I − U_tr U_trᵀ) 1_n‖₂, σ_{tr+1})` for a RANDSMAP model.
pub fn conservation_residual(model: &LinearDecoder) -> Result<(f64, f64)> {
    let t = model.trunc.as_ref().ok_or_else(|| Error::InvalidArgument("model carries no truncation record".into()))?;
    let n = t.u.nrows();
    let ones = DVector::from_element(n, 1.0);
    let e = &ones - &t.u * t.u.tr_mul(&ones);
    Ok((e.norm(), t.sigma_next))
}

/// `residual ≤ σ_{tr+1}`, with a floor of `n^{3/2}ε` for the rounding left
/// after projecting `1_n` (the whole residual at full rank, where `σ_{tr+1} = 0`).
pub fn residual_bound_holds(residual: f64, sigma_next: f64, n: usize) -> bool {
    let n = n as f64;
    residual <= sigma_next.max(n * n.sqrt() * f64::EPSILON)
}
