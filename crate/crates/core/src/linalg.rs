//! Dense helpers shared by the encoder, the feature maps and the decoders.
//!
//! Point sets are stored column-wise (`dim × count`), matching the data
//! matrices used throughout the crate.

use nalgebra::{DMatrix, DVector};

/// Above this ambient dimension squared distances go through one GEMM
/// (`‖a‖² + ‖b‖² − 2aᵀb`) instead of the direct difference loop.
const GRAM_TRICK_MIN_DIM: usize = 64;

/// Squared Euclidean distances between the columns of `a` and `b`,
/// returned as a `a.ncols() × b.ncols()` matrix.
pub fn sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "dimension mismatch");
    let (na, nb, dim) = (a.ncols(), b.ncols(), a.nrows());
    if dim >= GRAM_TRICK_MIN_DIM {
        let na2: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
        let nb2: Vec<f64> = b.column_iter().map(|c| c.norm_squared()).collect();
        let mut g = a.transpose() * b;
        for j in 0..nb {
            for i in 0..na {
                let v = na2[i] + nb2[j] - 2.0 * g[(i, j)];
                g[(i, j)] = v.max(0.0);
            }
        }
        g
    } else {
        DMatrix::from_fn(na, nb, |i, j| {
            let (ca, cb) = (a.column(i), b.column(j));
            (0..dim).map(|k| (ca[k] - cb[k]).powi(2)).sum()
        })
    }
}

/// Squared distances within one point set; exactly symmetric with a zero
/// diagonal.
pub fn sq_dists_self(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = sq_dists(a, a);
    let n = d.nrows();
    for i in 0..n {
        d[(i, i)] = 0.0;
        for j in (i + 1)..n {
            let v = 0.5 * (d[(i, j)] + d[(j, i)]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Lower median (element `(len − 1) / 2` of the sorted values). Empty input
/// yields `None`.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, |x, y| x.total_cmp(y));
    Some(*m)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvectors permuted to match.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd_desc(a: &DMatrix<f64>) -> Svd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let mut uu = DMatrix::zeros(u.nrows(), k);
    let mut vv = DMatrix::zeros(vt.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &vt.row(src).transpose());
        s.push(svd.singular_values[src]);
    }
    Svd { u: uu, s, v: vv }
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Columns `idx` of `m`, in order.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), idx.len());
    for (dst, &src) in idx.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

pub fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute norm when `b` vanishes.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
