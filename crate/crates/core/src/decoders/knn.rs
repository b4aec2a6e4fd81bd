//! k-nearest-neighbor pre-image by convex combination of training points,
//! with weights optimized on the probability simplex so that the Nyström
//! encoding of the reconstruction matches the target latent point.

use crate::dmap::DmModel;
use crate::error::{invalid, Result};
use crate::linalg::select_columns;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnOptions {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KnnOptions {
    fn default() -> Self {
        Self { k: 5, tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub x: DVector<f64>,
    pub alpha: DVector<f64>,
    /// Training indices of the neighbors, nearest first.
    pub neighbors: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto `{α ≥ 0, Σα = 1}` by the sort-and-threshold rule.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Indices of the `k` training latents closest to `y`; ties go to the lower index.
pub fn nearest(y_train: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> =
        y_train.column_iter().enumerate().map(|(i, c)| ((c - y).norm_squared(), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Objective `‖y* − E(X_S α)‖²` and its gradient in `α`, differentiating
/// through the Nyström weights.
pub fn objective_and_gradient(
    dm: &DmModel,
    x_s: &DMatrix<f64>,
    y_star: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let x = x_s * alpha;
    let train = &dm.x_train;
    let d2: Vec<f64> = train.column_iter().map(|c| (c - &x).norm_squared()).collect();
    let t = dm.nystrom_weights(&d2)?;
    let e = dm.v.tr_mul(&t);
    let r = y_star - &e;
    // s_i = (v_i − E)·r
    let s = &dm.v * &r - DVector::from_element(t.len(), e.dot(&r));
    let ts = t.component_mul(&s);
    let e2 = dm.epsilon1 * dm.epsilon1;
    let grad_x = (&x * ts.sum() - train * &ts) * (4.0 / e2);
    Ok((r.norm_squared(), x_s.tr_mul(&grad_x)))
}

fn objective(dm: &DmModel, x_s: &DMatrix<f64>, y_star: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    let x = x_s * alpha;
    let d2: Vec<f64> = dm.x_train.column_iter().map(|c| (c - &x).norm_squared()).collect();
    let t = dm.nystrom_weights(&d2)?;
    Ok((y_star - dm.v.tr_mul(&t)).norm_squared())
}

/// Reconstructs one point. `y_train` and `x_train` are the latent and
/// ambient training sets matching `dm`.
pub fn knn_decode(
    dm: &DmModel,
    y_train: &DMatrix<f64>,
    x_train: &DMatrix<f64>,
    y_star: &DVector<f64>,
    opts: &KnnOptions,
) -> Result<KnnResult> {
    let n = y_train.ncols();
    if x_train.ncols() != n || dm.x_train.ncols() != n {
        return Err(invalid("training sets differ in size"));
    }
    if opts.k == 0 || opts.k > n {
        return Err(invalid(format!("k must lie in 1..={n}")));
    }
    if y_star.len() != y_train.nrows() {
        return Err(invalid("latent dimension mismatch"));
    }
    let neighbors = nearest(y_train, y_star, opts.k);
    let x_s = select_columns(x_train, &neighbors);
    let k = opts.k;
    let mut alpha = DVector::from_element(k, 1.0 / k as f64);
    let (mut f, mut g) = objective_and_gradient(dm, &x_s, y_star, &alpha)?;
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let mapping = (&alpha - project_simplex(&(&alpha - &g))).norm();
        if mapping <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project_simplex(&(&alpha - &g * step));
            let delta = &cand - &alpha;
            let fc = objective(dm, &x_s, y_star, &cand)?;
            if fc <= f + g.dot(&delta) + delta.norm_squared() / (2.0 * step) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, _)) = accepted else {
            break;
        };
        alpha = cand;
        (f, g) = objective_and_gradient(dm, &x_s, y_star, &alpha)?;
        step *= 2.0;
    }
    if !converged {
        log::debug!("kNN weights did not converge after {iterations} iterations (objective {f:e})");
    }
    Ok(KnnResult { x: &x_s * &alpha, alpha, neighbors, objective: f, iterations, converged })
}

/// Column-wise [`knn_decode`] over a batch, in parallel.
pub fn knn_decode_batch(
    dm: &DmModel,
    y_train: &DMatrix<f64>,
    x_train: &DMatrix<f64>,
    y_star: &DMatrix<f64>,
    opts: &KnnOptions,
) -> Result<(DMatrix<f64>, usize)> {
    use rayon::prelude::*;
    let cols: Vec<Result<KnnResult>> = (0..y_star.ncols())
        .into_par_iter()
        .map(|j| knn_decode(dm, y_train, x_train, &y_star.column(j).into_owned(), opts))
        .collect();
    let mut out = DMatrix::zeros(x_train.nrows(), y_star.ncols());
    let mut unconverged = 0;
    for (j, c) in cols.into_iter().enumerate() {
        let c = c?;
        unconverged += usize::from(!c.converged);
        out.set_column(j, &c.x);
    }
    Ok((out, unconverged))
}
