//! Diffusion-Maps encoder with Nyström out-of-sample extension.
//!
//! The α-normalized kernel `K_a = D^{−α} K D^{−α}` is row-normalized into the
//! Markov matrix `T = D_a^{−1} K_a`. Its spectrum is computed through the
//! symmetric conjugate `S = D_a^{−1/2} K_a D_a^{−1/2}`; right eigenvectors are
//! recovered as `v = D_a^{−1/2} ψ`. Coordinates are `y_i = (ξ_1 v_{1i}, …, ξ_d v_{di})`.

use crate::error::{invalid, Error, Result};
use crate::io::Bundle;
use crate::linalg::{lower_median, sq_dists, sq_dists_self, sym_eigen_desc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `d × L` latent coordinates, one column per point.
pub type Embedding = DMatrix<f64>;

/// Kernel rows whose largest raw entry falls below this are treated as isolated.
const ISOLATION_FLOOR: f64 = 1e-300;
const GAP_TOL: f64 = 1e-12;

/// Scaling applied to the stored right eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EigenNorm {
    /// Unit Euclidean norm; coordinates shrink like `1/√N`.
    #[default]
    Unit,
    /// Unit norm under the stationary distribution (`Σ π_i v_i² = 1`); the
    /// trivial eigenvector is exactly the all-ones vector and coordinates are
    /// O(1) independently of `N`.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmParams {
    pub alpha: f64,
    pub w1: f64,
    pub d: usize,
    #[serde(default)]
    pub norm: EigenNorm,
}

#[derive(Debug, Clone)]
pub struct DmModel {
    pub x_train: DMatrix<f64>,
    pub epsilon1: f64,
    pub params: DmParams,
    /// Leading nontrivial eigenvalues, descending.
    pub xi: Vec<f64>,
    /// `N × d` right eigenvectors.
    pub v: DMatrix<f64>,
    /// Degrees of the raw kernel.
    pub deg1: DVector<f64>,
    /// Degrees of the α-normalized kernel.
    pub deg1a: DVector<f64>,
    /// Set when `ξ_d` and `ξ_{d+1}` coincide within 1e-12.
    pub degenerate_gap: bool,
}

/// Median of all `N(N−1)/2` pairwise distances (lower median for even counts).
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.ncols();
    if n < 2 {
        return Err(invalid("need at least two points for a pairwise median"));
    }
    let d2 = sq_dists_self(x);
    let mut vals = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in 0..j {
            vals.push(d2[(i, j)]);
        }
    }
    // sqrt is monotone, so take the median of squared distances
    Ok(lower_median(&mut vals).expect("nonempty").sqrt())
}

/// `K_ij = exp(−‖a_i − b_j‖² / ε²)`.
pub fn gaussian_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    check_eps(epsilon)?;
    if a.nrows() != b.nrows() {
        return Err(invalid("kernel inputs have different dimensions"));
    }
    let e2 = epsilon * epsilon;
    Ok(sq_dists(a, b).map(|d| (-d / e2).exp()))
}

/// Kernel of a point set with itself, exactly symmetric with unit diagonal.
pub fn gaussian_kernel_self(a: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    check_eps(epsilon)?;
    let e2 = epsilon * epsilon;
    Ok(sq_dists_self(a).map(|d| (-d / e2).exp()))
}

fn check_eps(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("kernel bandwidth must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Row-stochastic `T` and the two degree vectors for a given kernel.
fn markov(k: &DMatrix<f64>, alpha: f64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = k.nrows();
    let deg = DVector::from_fn(n, |i, _| k.row(i).sum());
    let qa = deg.map(|q| q.powf(-alpha));
    let ka = DMatrix::from_fn(n, n, |i, j| qa[i] * k[(i, j)] * qa[j]);
    let dega = DVector::from_fn(n, |i, _| ka.row(i).sum());
    (ka, deg, dega)
}

pub fn dm_fit(x_train: &DMatrix<f64>, alpha: f64, w1: f64, d: usize) -> Result<DmModel> {
    dm_fit_with(x_train, &DmParams { alpha, w1, d, norm: EigenNorm::Unit })
}

pub fn dm_fit_with(x_train: &DMatrix<f64>, p: &DmParams) -> Result<DmModel> {
    let n = x_train.ncols();
    if !(0.0..=1.0).contains(&p.alpha) {
        return Err(invalid("alpha must lie in [0, 1]"));
    }
    if p.d == 0 || n < p.d + 2 {
        return Err(invalid(format!("need N >= d + 2 (N = {n}, d = {})", p.d)));
    }
    if !(p.w1 > 0.0) {
        return Err(invalid("w1 must be positive"));
    }
    let eps = p.w1 * median_pairwise_distance(x_train)?;
    if !(eps > 0.0) {
        return Err(Error::DegenerateInput("median pairwise distance is zero".into()));
    }
    let k = gaussian_kernel_self(x_train, eps)?;
    let (ka, deg1, deg1a) = markov(&k, p.alpha);
    let isq = deg1a.map(|q| 1.0 / q.sqrt());
    let s = DMatrix::from_fn(n, n, |i, j| isq[i] * ka[(i, j)] * isq[j]);
    let s = (&s + s.transpose()) * 0.5;
    let (vals, vecs) = sym_eigen_desc(s);

    let total_deg: f64 = deg1a.sum();
    let mut v = DMatrix::zeros(n, p.d);
    for c in 0..p.d {
        let mut col = vecs.column(c + 1).component_mul(&isq);
        match p.norm {
            EigenNorm::Unit => col /= col.norm(),
            EigenNorm::Stationary => {
                let w: f64 = (0..n).map(|i| deg1a[i] / total_deg * col[i] * col[i]).sum();
                col /= w.sqrt();
            }
        }
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        v.set_column(c, &col);
    }
    let xi: Vec<f64> = vals[1..=p.d].to_vec();
    let degenerate_gap = vals.len() > p.d + 1 && (vals[p.d] - vals[p.d + 1]).abs() <= GAP_TOL;
    if degenerate_gap {
        log::warn!("diffusion-map spectrum has no gap after eigenvalue {}", p.d);
    }
    Ok(DmModel { x_train: x_train.clone(), epsilon1: eps, params: *p, xi, v, deg1, deg1a, degenerate_gap })
}

impl DmModel {
    pub fn d(&self) -> usize {
        self.params.d
    }

    /// Training coordinates `ξ_j v_{ji}` as a `d × N` matrix.
    pub fn embedding(&self) -> Embedding {
        let mut y = self.v.transpose();
        for (j, xi) in self.xi.iter().enumerate() {
            y.row_mut(j).scale_mut(*xi);
        }
        y
    }

    /// Row-stochastic extension weights for one new point from its squared
    /// distances to the training set.
    pub(crate) fn nystrom_weights(&self, d2: &[f64]) -> Result<DVector<f64>> {
        let e2 = self.epsilon1 * self.epsilon1;
        let alpha = self.params.alpha;
        let max_raw = d2.iter().map(|d| -d / e2).fold(f64::NEG_INFINITY, f64::max);
        if !(max_raw >= ISOLATION_FLOOR.ln()) {
            return Err(Error::Encoding("point is isolated from the training set".into()));
        }
        // c_i = k_i q_i^{−α}; the new point's own degree cancels in the row sum
        let logs: Vec<f64> = d2.iter().zip(self.deg1.iter()).map(|(d, q)| -d / e2 - alpha * q.ln()).collect();
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w = DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - shift).exp()));
        let total = w.sum();
        w /= total;
        Ok(w)
    }

    /// Row-normalized `T*` for a batch, `N × L`.
    pub fn transition_rows(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.nrows() != self.x_train.nrows() {
            return Err(invalid(format!("points have {} rows, model expects {}", x_new.nrows(), self.x_train.nrows())));
        }
        let d2 = sq_dists(&self.x_train, x_new);
        let mut t = DMatrix::zeros(self.x_train.ncols(), x_new.ncols());
        for l in 0..x_new.ncols() {
            let col: Vec<f64> = d2.column(l).iter().copied().collect();
            t.set_column(l, &self.nystrom_weights(&col)?);
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(Bundle::load(path)?)
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let header = DmHeader {
            kind: "dm".into(),
            epsilon1: self.epsilon1,
            params: self.params,
            xi: self.xi.clone(),
            degenerate_gap: self.degenerate_gap,
        };
        let mut b = Bundle::new(&header)?;
        b.push("x_train", self.x_train.clone());
        b.push("v", self.v.clone());
        b.push("deg1", DMatrix::from_column_slice(self.deg1.len(), 1, self.deg1.as_slice()));
        b.push("deg1a", DMatrix::from_column_slice(self.deg1a.len(), 1, self.deg1a.as_slice()));
        Ok(b)
    }

    pub fn from_bundle(mut b: Bundle) -> Result<Self> {
        let h: DmHeader = b.header_as()?;
        if h.kind != "dm" {
            return Err(Error::Format(format!("expected a diffusion-map bundle, found `{}`", h.kind)));
        }
        let x_train = b.take("x_train")?;
        let v = b.take("v")?;
        let deg1 = b.take("deg1")?.column(0).into_owned();
        let deg1a = b.take("deg1a")?.column(0).into_owned();
        let n = x_train.ncols();
        if v.shape() != (n, h.params.d) || deg1.len() != n || deg1a.len() != n || h.xi.len() != h.params.d {
            return Err(Error::Format("inconsistent diffusion-map bundle".into()));
        }
        Ok(Self {
            x_train,
            epsilon1: h.epsilon1,
            params: h.params,
            xi: h.xi,
            v,
            deg1,
            deg1a,
            degenerate_gap: h.degenerate_gap,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DmHeader {
    kind: String,
    epsilon1: f64,
    params: DmParams,
    xi: Vec<f64>,
    degenerate_gap: bool,
}

/// Nyström extension: coordinate `j` of a new point is `Σ_i T*_i v_{ji}`.
pub fn dm_encode(model: &DmModel, x_new: &DMatrix<f64>) -> Result<Embedding> {
    let t = model.transition_rows(x_new)?;
    Ok(model.v.transpose() * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::gen_swiss_roll;

    #[test]
    fn median_hand_values() {
        let two = DMatrix::from_row_slice(1, 2, &[0.0, 3.0]);
        assert!((median_pairwise_distance(&two).unwrap() - 3.0).abs() < 1e-15);
        let three = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 3.0]);
        assert!((median_pairwise_distance(&three).unwrap() - 2.0).abs() < 1e-15);
        let dup = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0]);
        // pairs: three zeros and three ones, lower median is 0
        assert_eq!(median_pairwise_distance(&dup).unwrap(), 0.0);
        assert!(median_pairwise_distance(&DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn kernel_values() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let k = gaussian_kernel(&a, &a, 1.0).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&a, &a, 0.0).is_err());
        let ks = gaussian_kernel_self(&DMatrix::from_fn(3, 9, |i, j| ((i + 1) * j) as f64 * 0.37), 2.0).unwrap();
        assert_eq!(ks, ks.transpose());
    }

    fn roll() -> DMatrix<f64> {
        gen_swiss_roll(300, 0.0, 5).unwrap().x
    }

    #[test]
    fn markov_matrix_and_eigen_residuals() {
        let x = roll();
        let m = dm_fit(&x, 1.0, 0.5, 3).unwrap();
        let k = gaussian_kernel_self(&x, m.epsilon1).unwrap();
        let (ka, _, dega) = markov(&k, 1.0);
        let t = DMatrix::from_fn(300, 300, |i, j| ka[(i, j)] / dega[i]);
        for i in 0..300 {
            assert!((t.row(i).sum() - 1.0).abs() < 1e-12);
        }
        for j in 0..3 {
            let v = m.v.column(j);
            assert!((&t * v - v * m.xi[j]).norm() <= 1e-8 * v.norm());
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v[v.iamax()] > 0.0);
        }
        assert!(m.xi.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.xi.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn nystrom_reproduces_training_coordinates() {
        let x = roll();
        for norm in [EigenNorm::Unit, EigenNorm::Stationary] {
            let m = dm_fit_with(&x, &DmParams { alpha: 1.0, w1: 0.3, d: 2, norm }).unwrap();
            let y = m.embedding();
            let y2 = dm_encode(&m, &x).unwrap();
            assert!((&y2 - &y).amax() <= 1e-6 * y.amax());
        }
    }

    #[test]
    fn three_point_oracle() {
        // brute force on the 3×3 Markov matrix
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.5]);
        let m = dm_fit(&x, 0.5, 1.2, 1).unwrap();
        let eps = 1.2 * 1.5;
        let k = DMatrix::from_fn(3, 3, |i, j| (-(x[i] - x[j]).powi(2) / (eps * eps)).exp());
        let q: Vec<f64> = (0..3).map(|i| k.row(i).sum()).collect();
        let ka = DMatrix::from_fn(3, 3, |i, j| k[(i, j)] / (q[i] * q[j]).sqrt());
        let t = DMatrix::from_fn(3, 3, |i, j| ka[(i, j)] / ka.row(i).sum());
        // non-symmetric eigen problem solved via the characteristic cubic's
        // deflated quadratic: trace and determinant of T minus the unit root
        let tr = t.trace() - 1.0;
        let det = t.determinant();
        let disc = (tr * tr - 4.0 * det).sqrt();
        let lam = 0.5 * (tr + disc);
        assert!((m.xi[0] - lam).abs() < 1e-10);
        let mut v = (&t - DMatrix::identity(3, 3) * lam).svd(false, true).v_t.unwrap();
        // null vector of (T − λI): last right singular vector
        let mut nv = DVector::from_fn(3, |i, _| v[(2, i)]);
        nv /= nv.norm();
        if nv[nv.iamax()] < 0.0 {
            nv = -nv;
        }
        v = DMatrix::from_column_slice(3, 1, nv.as_slice());
        assert!((m.v.column(0) - v.column(0)).amax() < 1e-10);
    }

    #[test]
    fn symmetric_midpoint_is_equidistant() {
        // square in the plane; the center is symmetric with respect to points 0 and 2
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let m = dm_fit(&x, 1.0, 1.0, 2).unwrap();
        let y = m.embedding();
        let mid = dm_encode(&m, &DMatrix::from_column_slice(2, 1, &[0.0, 0.0])).unwrap();
        let d0 = (mid.column(0) - y.column(0)).norm();
        let d2 = (mid.column(0) - y.column(2)).norm();
        assert!((d0 - d2).abs() < 1e-8);
    }

    #[test]
    fn isolated_point_fails_and_shapes() {
        let x = roll();
        let m = dm_fit(&x, 1.0, 0.2, 2).unwrap();
        let far = DMatrix::from_element(3, 1, 1e6);
        assert!(matches!(dm_encode(&m, &far), Err(Error::Encoding(_))));
        assert_eq!(dm_encode(&m, &x.columns(0, 7).into_owned()).unwrap().shape(), (2, 7));
    }

    #[test]
    fn bundle_roundtrip() {
        let m = dm_fit(&roll(), 1.0, 0.3, 2).unwrap();
        let mut buf = Vec::new();
        m.to_bundle().unwrap().write_to(&mut buf).unwrap();
        let back = DmModel::from_bundle(Bundle::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.v, m.v);
        assert_eq!(back.xi, m.xi);
        assert_eq!(back.epsilon1, m.epsilon1);
    }
}
