use super::DataSet;
use crate::error::{invalid, Result};
use crate::linalg::svd_desc;
use crate::rng::SeededRng;
use nalgebra::{DMatrix, Vector3};
use std::f64::consts::PI;

const SCURVE_DIM: usize = 20;

pub fn swiss_roll_point(theta: f64, z: f64) -> [f64; 3] {
    let r = (theta + 0.1 * z) / 4.0;
    [r * theta.sin(), r * theta.cos(), z]
}

fn check_sizes(n: usize, sigma: f64) -> Result<()> {
    if n < 4 {
        return Err(invalid(format!("need at least 4 points, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("noise sigma must be finite and nonnegative"));
    }
    Ok(())
}

/// Swiss roll with `θ ~ U[π, 4π)`, `z ~ U[−5, 5)` and i.i.d. Gaussian noise.
pub fn gen_swiss_roll(n: usize, noise_sigma: f64, seed: u64) -> Result<DataSet> {
    check_sizes(n, noise_sigma)?;
    let mut rng = SeededRng::new(seed);
    let mut theta = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        theta.push(rng.uniform_in(PI, 4.0 * PI));
        z.push(rng.uniform_in(-5.0, 5.0));
    }
    swiss_roll_from_params(&theta, &z, noise_sigma, seed)
}

/// Swiss roll at prescribed parameters. Noise is drawn from a stream derived
/// from `seed`.
pub fn swiss_roll_from_params(theta: &[f64], z: &[f64], noise_sigma: f64, seed: u64) -> Result<DataSet> {
    if theta.len() != z.len() || theta.is_empty() {
        return Err(invalid("theta and z must be nonempty and of equal length"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(invalid("noise sigma must be nonnegative"));
    }
    let n = theta.len();
    let mut noise = SeededRng::derive(seed, 1);
    let mut x = DMatrix::zeros(3, n);
    for j in 0..n {
        let p = swiss_roll_point(theta[j], z[j]);
        for i in 0..3 {
            x[(i, j)] = p[i] + if noise_sigma > 0.0 { noise_sigma * noise.normal() } else { 0.0 };
        }
    }
    let mut ds = DataSet::new(x, false)
        .with_meta("generator", "swiss_roll")
        .with_meta("seed", seed)
        .with_meta("noise_sigma", noise_sigma)
        .with_meta("theta_range", vec![PI, 4.0 * PI])
        .with_meta("z_range", vec![-5.0, 5.0]);
    ds.intrinsic = Some(DMatrix::from_fn(2, n, |i, j| if i == 0 { theta[j] } else { z[j] }));
    Ok(ds)
}

pub fn scurve_point(theta: f64, w: f64) -> [f64; 3] {
    let s = if theta > 0.0 {
        1.0
    } else if theta < 0.0 {
        -1.0
    } else {
        0.0
    };
    [theta.sin(), w, s * (theta.cos() - 1.0)]
}

/// `20 × 3` matrix with orthonormal columns: left singular vectors of a
/// seeded standard Gaussian matrix.
pub fn scurve_projection(seed: u64) -> DMatrix<f64> {
    let mut rng = SeededRng::derive(seed, 2);
    let g = DMatrix::from_fn(SCURVE_DIM, 3, |_, _| rng.normal());
    svd_desc(&g).u.columns(0, 3).into_owned()
}

/// S-curve with `θ ~ U[−3π/2, 3π/2)`, `w ~ U[0, 1)`, projected into 20-D.
pub fn gen_scurve_20d(n: usize, noise_sigma: f64, seed: u64) -> Result<DataSet> {
    check_sizes(n, noise_sigma)?;
    let mut rng = SeededRng::new(seed);
    let mut theta = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        theta.push(rng.uniform_in(-1.5 * PI, 1.5 * PI));
        w.push(rng.uniform_in(0.0, 1.0));
    }
    scurve_from_params(&theta, &w, noise_sigma, seed)
}

pub fn scurve_from_params(theta: &[f64], w: &[f64], noise_sigma: f64, seed: u64) -> Result<DataSet> {
    if theta.len() != w.len() || theta.is_empty() {
        return Err(invalid("theta and w must be nonempty and of equal length"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(invalid("noise sigma must be nonnegative"));
    }
    let n = theta.len();
    let r = scurve_projection(seed);
    let mut noise = SeededRng::derive(seed, 1);
    let mut x = DMatrix::zeros(SCURVE_DIM, n);
    for j in 0..n {
        let p = scurve_point(theta[j], w[j]);
        let mut z = Vector3::new(p[0], p[1], p[2]);
        if noise_sigma > 0.0 {
            for k in 0..3 {
                z[k] += noise_sigma * noise.normal();
            }
        }
        x.set_column(j, &(&r * z));
    }
    let mut ds = DataSet::new(x, false)
        .with_meta("generator", "scurve_20d")
        .with_meta("seed", seed)
        .with_meta("noise_sigma", noise_sigma)
        .with_meta("theta_range", vec![-1.5 * PI, 1.5 * PI])
        .with_meta("w_range", vec![0.0, 1.0]);
    ds.intrinsic = Some(DMatrix::from_fn(2, n, |i, j| if i == 0 { theta[j] } else { w[j] }));
    Ok(ds)
}
