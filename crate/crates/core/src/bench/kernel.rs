use super::metrics::Spread;
use crate::error::{Error, Result};
use crate::linalg::sym_spectral_norm;
use crate::randfeat::{expected_kernel, induced_kernel, scale_kernels, FeatureParams, FeatureSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default feature-count ladder.
pub const DEFAULT_P_LADDER: [usize; 3] = [512, 2048, 8192];

/// `2√(n‖K̄‖log(2n)/P) + 4n·log(2n)/(3P)`.
pub fn bernstein_rhs(n: usize, kbar_norm: f64, p: usize) -> f64 {
    let (n, p) = (n as f64, p as f64);
    let l = (2.0 * n).ln();
    2.0 * (n * kbar_norm * l / p).sqrt() + 4.0 * n * l / (3.0 * p)
}

/// Multi-scale version with `c = max_q ‖K̄_q‖` and `Q` scales.
pub fn multiscale_rhs(n: usize, c: f64, q: usize, p: usize) -> f64 {
    let (n, q, p) = (n as f64, q as f64, p as f64);
    let l = (2.0 * n).ln();
    2.0 * (n * c * q * l / p).sqrt() + 4.0 * n * q * l / (3.0 * p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub p: usize,
    /// `‖K_S − K̄_S‖₂` for every seed.
    pub errors: Vec<f64>,
    /// Bound right-hand side for every seed (MSRFF bounds depend on the sampled scales).
    pub rhs: Vec<f64>,
    pub error: Spread,
    pub median_rhs: f64,
    /// Share of seeds with error below its bound.
    pub fraction_within: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub params: FeatureParams,
    pub n_points: usize,
    pub rows: Vec<BoundRow>,
    /// Median error non-increasing along the ladder.
    pub monotone: bool,
    pub all_within: bool,
}

/// Spectral-norm error of the induced kernel against its closed-form
/// expectation for each `P` in `p_list`, over `n_seeds` feature draws
/// (seeds `base_seed..base_seed + n_seeds`).
pub fn kernel_bound_check(
    params: FeatureParams,
    points: &DMatrix<f64>,
    p_list: &[usize],
    n_seeds: usize,
    base_seed: u64,
) -> Result<BoundTable> {
    let n = points.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if n_seeds == 0 || p_list.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed and one feature count".into()));
    }
    if matches!(params, FeatureParams::Sigmoid { .. }) {
        return Err(Error::InvalidArgument("sigmoid features have no closed-form limit kernel".into()));
    }
    let mut rows = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let pairs: Vec<(f64, f64)> = (0..n_seeds as u64)
            .into_par_iter()
            .map(|s| {
                let spec = FeatureSpec { d: points.nrows(), p, params, seed: base_seed + s, bbox: None };
                let map = spec.sample()?;
                let kbar = expected_kernel(&map, points)?;
                let err = sym_spectral_norm(&(induced_kernel(&map, points)? - &kbar));
                let rhs = match params {
                    FeatureParams::Msrff { q, .. } => {
                        let c = scale_kernels(&map, points).iter().map(sym_spectral_norm).fold(0.0, f64::max);
                        multiscale_rhs(n, c, q, p)
                    }
                    _ => bernstein_rhs(n, sym_spectral_norm(&kbar), p),
                };
                Ok((err, rhs))
            })
            .collect::<Result<_>>()?;
        let errors: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let within = pairs.iter().filter(|(e, r)| e <= r).count();
        rows.push(BoundRow {
            p,
            error: Spread::of(&errors),
            median_rhs: Spread::of(&rhs).median,
            fraction_within: within as f64 / n_seeds as f64,
            errors,
            rhs,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].error.median <= w[0].error.median);
    let all_within = rows.iter().all(|r| r.fraction_within == 1.0);
    Ok(BoundTable { params, n_points: n, rows, monotone, all_within })
}
