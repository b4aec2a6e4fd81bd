use super::DataSet;
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::path::Path;

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    /// Column-major flattening (column `c` occupies `c·H .. (c+1)·H`).
    pub fn flatten_colmajor(&self) -> DVector<f64> {
        DVector::from_fn(self.height * self.width, |k, _| self.get(k % self.height, k / self.height))
    }

    pub fn from_colmajor(height: usize, width: usize, v: &[f64]) -> Self {
        let mut img = Self::zeros(height, width);
        for (k, &x) in v.iter().enumerate() {
            img.set(k % height, k / height, x);
        }
        img
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Reads any PNG/PNM file as grayscale in `[0, 1]`.
pub fn load_grayscale(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("cannot read image {}: {e}", path.display())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect();
    Ok(GrayImage { height: h as usize, width: w as usize, data })
}

fn bilinear(img: &GrayImage, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let (fy, fx) = (y - y0, x - x0);
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= img.height as f64 || c >= img.width as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let mut v = (1.0 - fy) * (1.0 - fx) * at(y0, x0);
    if fx != 0.0 {
        v += (1.0 - fy) * fx * at(y0, x0 + 1.0);
    }
    if fy != 0.0 {
        v += fy * (1.0 - fx) * at(y0 + 1.0, x0);
        if fx != 0.0 {
            v += fy * fx * at(y0 + 1.0, x0 + 1.0);
        }
    }
    v
}

/// Rotates counter-clockwise by `theta` about the image center (inverse
/// mapping, bilinear, zero outside), then scales to unit total intensity.
pub fn rotate_normalized(base: &GrayImage, theta: f64) -> Result<GrayImage> {
    let (h, w) = (base.height, base.width);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = theta.sin_cos();
    let mut out = GrayImage::zeros(h, w);
    for r in 0..h {
        for col in 0..w {
            let (dx, dy) = (col as f64 - cx, r as f64 - cy);
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            out.set(r, col, bilinear(base, sy, sx));
        }
    }
    let total = out.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput(format!("rotation by {theta} left no intensity")));
    }
    out.data.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

fn check_base(base: &GrayImage) -> Result<()> {
    if base.height == 0 || base.width == 0 || base.data.len() != base.height * base.width {
        return Err(invalid("malformed image"));
    }
    if base.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("image must be finite and nonnegative"));
    }
    if base.data.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("image is identically zero".into()));
    }
    Ok(())
}

/// Rotations of `base` at the given angles, one flattened image per column.
pub fn rotated_images_at(base: &GrayImage, angles: &[f64]) -> Result<DataSet> {
    check_base(base)?;
    let m = base.height * base.width;
    let mut x = DMatrix::zeros(m, angles.len());
    for (j, &t) in angles.iter().enumerate() {
        x.set_column(j, &rotate_normalized(base, t)?.flatten_colmajor());
    }
    let mut ds = DataSet::new(x, true)
        .with_meta("generator", "rotated_images")
        .with_meta("height", base.height)
        .with_meta("width", base.width);
    ds.intrinsic = Some(DMatrix::from_row_slice(1, angles.len(), angles));
    Ok(ds)
}

/// `n_angles` rotations with angles drawn uniformly from `[0, 2π)`.
pub fn gen_rotated_images(base: &GrayImage, n_angles: usize, seed: u64) -> Result<DataSet> {
    if n_angles == 0 {
        return Err(invalid("n_angles must be positive"));
    }
    let mut rng = SeededRng::new(seed);
    let angles: Vec<f64> = (0..n_angles).map(|_| rng.uniform_in(0.0, 2.0 * PI)).collect();
    Ok(rotated_images_at(base, &angles)?.with_meta("seed", seed))
}

/// (intensity, center x, center y, semi-axis a, semi-axis b, tilt degrees)
/// in normalized coordinates on `[−1, 1]²`, `y` pointing down.
const PHANTOM_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 9] = [
    (1.0, 0.0, 0.0, 0.69, 0.92, 0.0),
    (-0.8, 0.0, -0.0184, 0.6624, 0.874, 0.0),
    (-0.2, 0.22, 0.0, 0.11, 0.31, -18.0),
    (-0.2, -0.22, 0.0, 0.16, 0.41, 18.0),
    (0.1, 0.0, -0.35, 0.21, 0.25, 0.0),
    (0.1, 0.0, -0.1, 0.046, 0.046, 0.0),
    (0.1, -0.08, 0.605, 0.046, 0.023, 0.0),
    (0.3, 0.35, 0.45, 0.12, 0.06, 35.0),
    (0.25, -0.4, -0.5, 0.07, 0.15, -25.0),
];

/// Deterministic head-like phantom, max intensity 1, no rotational symmetry.
pub fn gen_phantom(size: usize) -> Result<GrayImage> {
    if size < 16 {
        return Err(invalid("phantom size must be at least 16"));
    }
    let mut img = GrayImage::zeros(size, size);
    let half = (size as f64 - 1.0) / 2.0;
    for r in 0..size {
        for c in 0..size {
            let px = (c as f64 - half) / half;
            let py = (r as f64 - half) / half;
            let mut v = 0.0;
            for &(a, x0, y0, sa, sb, deg) in &PHANTOM_ELLIPSES {
                let (s, co) = deg.to_radians().sin_cos();
                let (dx, dy) = (px - x0, py - y0);
                let u = co * dx + s * dy;
                let w = -s * dx + co * dy;
                if (u / sa).powi(2) + (w / sb).powi(2) <= 1.0 {
                    v += a;
                }
            }
            img.set(r, c, v.max(0.0));
        }
    }
    let max = img.data.iter().copied().fold(0.0, f64::max);
    img.data.iter_mut().for_each(|v| *v /= max);
    Ok(img)
}
