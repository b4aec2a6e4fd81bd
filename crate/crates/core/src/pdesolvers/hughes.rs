//! Hughes crowd model on a corridor with a rectangular obstacle.
//!
//! Fields are `nx × ny` matrices indexed `(i, j)` with `i` along the corridor.
//! Flattening is column-major, so `i` runs fastest.
//!
//! The eikonal solve treats the right end of the corridor (`x = x_hi`) as the
//! walking target (`φ = 0` on that face) and the left end as a closed edge.
//! Density transport is periodic in `x` regardless, so pedestrians leaving
//! through the right seam re-enter on the left, far from the target.

use super::{sample_snapshot_levels, TrajectorySample};
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::synthdata::DataSet;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Speed floor keeping the eikonal right-hand side finite.
pub const SPEED_FLOOR: f64 = 1e-10;
/// Largest admissible per-direction CFL number.
pub const HUGHES_CFL_MAX: f64 = 0.45;
const SWEEP_TOL: f64 = 1e-8;
const MAX_SWEEP_ROUNDS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hughes2dConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// `[x_lo, x_hi, y_lo, y_hi]`; `None` for a free corridor.
    pub obstacle: Option<[f64; 4]>,
    pub v_max: f64,
    pub rho_max: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub amp_range: [f64; 2],
    pub width_range: [f64; 2],
    pub center_range: [f64; 2],
}

impl Default for Hughes2dConfig {
    fn default() -> Self {
        Self {
            nx: 200,
            ny: 50,
            x_range: [0.0, 20.0],
            y_range: [0.0, 5.0],
            obstacle: Some([10.0, 11.0, 2.0, 3.0]),
            v_max: 1.0,
            rho_max: 5.0,
            dt: 0.025,
            t_end: 70.0,
            seed: 0,
            amp_range: [1.2, 2.1],
            width_range: [1.6, 2.0],
            center_range: [1.5, 3.5],
        }
    }
}

impl Hughes2dConfig {
    pub fn hx(&self) -> f64 {
        (self.x_range[1] - self.x_range[0]) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_range[1] - self.y_range[0]) / self.ny as f64
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x_range[0] + (i as f64 + 0.5) * self.hx(), self.y_range[0] + (j as f64 + 0.5) * self.hy())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Cells whose centers lie inside the obstacle rectangle.
    pub fn obstacle_mask(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.nx, self.ny, |i, j| match self.obstacle {
            Some([x0, x1, y0, y1]) => {
                let (x, y) = self.center(i, j);
                x >= x0 && x <= x1 && y >= y0 && y <= y1
            }
            None => false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 1 {
            return Err(invalid("Hughes grid needs nx >= 2 and ny >= 1"));
        }
        if !(self.x_range[1] > self.x_range[0] && self.y_range[1] > self.y_range[0]) {
            return Err(invalid("empty Hughes domain"));
        }
        if !(self.v_max > 0.0 && self.rho_max > 0.0 && self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(invalid("v_max, rho_max and dt must be positive"));
        }
        if let Some([x0, x1, y0, y1]) = self.obstacle {
            let inside = x0 > self.x_range[0] && x1 < self.x_range[1] && y0 > self.y_range[0] && y1 < self.y_range[1];
            if !(inside && x0 < x1 && y0 < y1) {
                return Err(invalid("obstacle must lie strictly inside the domain"));
            }
            if !self.obstacle_mask().iter().any(|&b| b) {
                return Err(invalid("obstacle covers no cell center"));
            }
        }
        Ok(())
    }
}

fn speed(rho: f64, cfg: &Hughes2dConfig) -> f64 {
    (cfg.v_max * (1.0 - rho / cfg.rho_max)).max(SPEED_FLOOR)
}

fn check_field(rho: &DMatrix<f64>, cfg: &Hughes2dConfig) -> Result<()> {
    if rho.shape() != (cfg.nx, cfg.ny) {
        return Err(invalid(format!("field shape {:?} does not match grid", rho.shape())));
    }
    if rho.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("non-finite density".into()));
    }
    Ok(())
}

/// Solves `‖∇φ‖ = 1/f(ρ)` by fast sweeping. Obstacle cells stay `+∞`.
pub fn hughes_eikonal(rho: &DMatrix<f64>, cfg: &Hughes2dConfig) -> Result<DMatrix<f64>> {
    check_field(rho, cfg)?;
    let mask = cfg.obstacle_mask();
    Ok(eikonal_with_mask(rho, &mask, cfg))
}

fn eikonal_with_mask(rho: &DMatrix<f64>, mask: &DMatrix<bool>, cfg: &Hughes2dConfig) -> DMatrix<f64> {
    let (nx, ny) = (cfg.nx, cfg.ny);
    let (hx, hy) = (cfg.hx(), cfg.hy());
    let slow = DMatrix::from_fn(nx, ny, |i, j| 1.0 / speed(rho[(i, j)], cfg));
    let mut phi = DMatrix::from_element(nx, ny, f64::INFINITY);
    let update = |phi: &DMatrix<f64>, i: usize, j: usize| -> f64 {
        let s = slow[(i, j)];
        let get = |ii: usize, jj: usize| if mask[(ii, jj)] { f64::INFINITY } else { phi[(ii, jj)] };
        let left = if i > 0 { get(i - 1, j) } else { f64::INFINITY };
        // ghost value beyond the target face, φ = 0 on the face itself
        let right = if i + 1 < nx { get(i + 1, j) } else { -0.5 * hx * s };
        let down = if j > 0 { get(i, j - 1) } else { f64::INFINITY };
        let up = if j + 1 < ny { get(i, j + 1) } else { f64::INFINITY };
        let a = left.min(right);
        let b = down.min(up);
        let one_sided = (a + s * hx).min(b + s * hy);
        if a.is_finite() && b.is_finite() {
            let (ix, iy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
            let qa = ix + iy;
            let qb = -2.0 * (a * ix + b * iy);
            let qc = a * a * ix + b * b * iy - s * s;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let root = (-qb + disc.sqrt()) / (2.0 * qa);
                if root >= a.max(b) {
                    return root;
                }
            }
        }
        one_sided
    };
    for _ in 0..MAX_SWEEP_ROUNDS {
        let mut change = 0.0_f64;
        for order in 0..4 {
            let (rev_i, rev_j) = (order & 1 == 1, order & 2 == 2);
            for jj in 0..ny {
                let j = if rev_j { ny - 1 - jj } else { jj };
                for ii in 0..nx {
                    let i = if rev_i { nx - 1 - ii } else { ii };
                    if mask[(i, j)] {
                        continue;
                    }
                    let cand = update(&phi, i, j);
                    let old = phi[(i, j)];
                    if cand < old {
                        change = change.max(if old.is_finite() { old - cand } else { f64::INFINITY });
                        phi[(i, j)] = cand;
                    }
                }
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    phi
}

/// Cell-center walking directions `−∇φ/‖∇φ‖` as `(ux, uy)`.
fn directions(
    phi: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    rho: &DMatrix<f64>,
    cfg: &Hughes2dConfig,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, ny) = (cfg.nx, cfg.ny);
    let (hx, hy) = (cfg.hx(), cfg.hy());
    let mut ux = DMatrix::zeros(nx, ny);
    let mut uy = DMatrix::zeros(nx, ny);
    let val = |i: usize, j: usize| if mask[(i, j)] { f64::INFINITY } else { phi[(i, j)] };
    let diff = |lo: f64, c: f64, hi: f64, h: f64| -> f64 {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (hi - lo) / (2.0 * h),
            (true, false) => (c - lo) / h,
            (false, true) => (hi - c) / h,
            (false, false) => 0.0,
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            if mask[(i, j)] {
                continue;
            }
            let c = phi[(i, j)];
            let left = if i > 0 { val(i - 1, j) } else { f64::INFINITY };
            let right = if i + 1 < nx { val(i + 1, j) } else { -0.5 * hx / speed(rho[(i, j)], cfg) };
            let down = if j > 0 { val(i, j - 1) } else { f64::INFINITY };
            let up = if j + 1 < ny { val(i, j + 1) } else { f64::INFINITY };
            let gx = diff(left, c, right, hx);
            let gy = diff(down, c, up, hy);
            let norm = (gx * gx + gy * gy).sqrt();
            if norm > 0.0 {
                ux[(i, j)] = -gx / norm;
                uy[(i, j)] = -gy / norm;
            }
        }
    }
    (ux, uy)
}

fn density_flux(rho_up: f64, rho_down: f64, cfg: &Hughes2dConfig) -> f64 {
    // Godunov flux of q(ρ) = ρ f(ρ), concave with maximum at ρ_max / 2
    let q = |r: f64| r * cfg.v_max * (1.0 - r / cfg.rho_max);
    let crit = 0.5 * cfg.rho_max;
    if rho_up <= rho_down {
        q(rho_up).min(q(rho_down))
    } else if rho_down <= crit && crit <= rho_up {
        q(crit)
    } else {
        q(rho_up).max(q(rho_down))
    }
}

/// One dimension-unsplit first-order upwind update driven by `phi`.
pub fn hughes_step(rho: &DMatrix<f64>, phi: &DMatrix<f64>, cfg: &Hughes2dConfig) -> Result<DMatrix<f64>> {
    check_field(rho, cfg)?;
    if phi.shape() != rho.shape() {
        return Err(invalid("potential and density shapes differ"));
    }
    let mask = cfg.obstacle_mask();
    step_with_mask(rho, phi, &mask, cfg)
}

fn step_with_mask(
    rho: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    cfg: &Hughes2dConfig,
) -> Result<DMatrix<f64>> {
    let (nx, ny) = (cfg.nx, cfg.ny);
    let (hx, hy) = (cfg.hx(), cfg.hy());
    let (ux, uy) = directions(phi, mask, rho, cfg);

    let wave = rho.iter().map(|&r| (cfg.v_max * (1.0 - 2.0 * r / cfg.rho_max)).abs()).fold(0.0, f64::max);
    let cfl_x = wave * ux.amax() * cfg.dt / hx;
    let cfl_y = wave * uy.amax() * cfg.dt / hy;
    if cfl_x > HUGHES_CFL_MAX || cfl_y > HUGHES_CFL_MAX {
        return Err(Error::Stability(format!("CFL numbers ({cfl_x}, {cfl_y}) exceed {HUGHES_CFL_MAX}")));
    }

    let face = |u: f64, a: f64, b: f64| {
        if u >= 0.0 {
            u * density_flux(a, b, cfg)
        } else {
            u * density_flux(b, a, cfg)
        }
    };
    // fx[(i, j)]: face between (i, j) and (i+1 mod nx, j)
    let mut fx = DMatrix::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = (i + 1) % nx;
            if mask[(i, j)] || mask[(k, j)] {
                continue;
            }
            let u = 0.5 * (ux[(i, j)] + ux[(k, j)]);
            fx[(i, j)] = face(u, rho[(i, j)], rho[(k, j)]);
        }
    }
    // fy[(i, j)]: face between (i, j) and (i, j+1); top wall closed
    let mut fy = DMatrix::zeros(nx, ny);
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx {
            if mask[(i, j)] || mask[(i, j + 1)] {
                continue;
            }
            let u = 0.5 * (uy[(i, j)] + uy[(i, j + 1)]);
            fy[(i, j)] = face(u, rho[(i, j)], rho[(i, j + 1)]);
        }
    }
    let (lx, ly) = (cfg.dt / hx, cfg.dt / hy);
    let mut out = rho.clone();
    for j in 0..ny {
        for i in 0..nx {
            if mask[(i, j)] {
                continue;
            }
            let west = fx[((i + nx - 1) % nx, j)];
            let south = if j > 0 { fy[(i, j - 1)] } else { 0.0 };
            out[(i, j)] -= lx * (fx[(i, j)] - west) + ly * (fy[(i, j)] - south);
        }
    }
    Ok(out)
}

/// Normalized 2-D Gaussian bump with zero density inside the obstacle.
pub fn hughes_initial_condition(
    cfg: &Hughes2dConfig,
    amp: f64,
    wx: f64,
    wy: f64,
    xc: f64,
    yc: f64,
) -> Result<DMatrix<f64>> {
    let mask = cfg.obstacle_mask();
    let mut rho = DMatrix::from_fn(cfg.nx, cfg.ny, |i, j| {
        if mask[(i, j)] {
            return 0.0;
        }
        let (x, y) = cfg.center(i, j);
        amp * (-(x - xc).powi(2) / (2.0 * wx * wx) - (y - yc).powi(2) / (2.0 * wy * wy)).exp()
    });
    let total = rho.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("initial condition has no mass".into()));
    }
    rho /= total;
    Ok(rho)
}

/// Integrates with a fresh eikonal solve every step, recording the given
/// ascending time levels. Snapshot columns are flattened fields.
pub fn hughes_trajectory(cfg: &Hughes2dConfig, rho0: &DMatrix<f64>, levels: &[usize]) -> Result<TrajectorySample> {
    cfg.validate()?;
    check_field(rho0, cfg)?;
    let mask = cfg.obstacle_mask();
    let m = cfg.nx * cfg.ny;
    let mut snaps = DMatrix::zeros(m, levels.len());
    let mut times = Vec::with_capacity(levels.len());
    let mut cur = rho0.clone();
    let mut k = 0;
    let last = levels.last().copied().unwrap_or(0);
    for step in 0..=last {
        while k < levels.len() && levels[k] == step {
            snaps.column_mut(k).copy_from_slice(cur.as_slice());
            times.push(step as f64 * cfg.dt);
            k += 1;
        }
        if step == last {
            break;
        }
        let phi = eikonal_with_mask(&cur, &mask, cfg);
        cur = step_with_mask(&cur, &phi, &mask, cfg)?;
    }
    if k != levels.len() {
        return Err(invalid("snapshot levels must be ascending"));
    }
    Ok(TrajectorySample { snapshots: snaps, times })
}

/// Random trajectories flattened to `M = nx·ny`. Intrinsic rows: amplitude,
/// `w_x`, `w_y`, `x_c`, `y_c`, time, trajectory index.
pub fn hughes_generate(cfg: &Hughes2dConfig, n_traj: usize, snaps_per_traj: usize) -> Result<DataSet> {
    cfg.validate()?;
    let n_levels = cfg.n_steps() + 1;
    if snaps_per_traj > n_levels {
        return Err(invalid(format!("only {n_levels} time levels available")));
    }
    let runs: Vec<Result<(TrajectorySample, [f64; 5], f64)>> = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::derive(cfg.seed, t as u64);
            let a = rng.uniform_in(cfg.amp_range[0], cfg.amp_range[1]);
            let wx = rng.uniform_in(cfg.width_range[0], cfg.width_range[1]);
            let wy = rng.uniform_in(cfg.width_range[0], cfg.width_range[1]);
            let xc = rng.uniform_in(cfg.center_range[0], cfg.center_range[1]);
            let yc = rng.uniform_in(cfg.center_range[0], cfg.center_range[1]);
            let rho0 = hughes_initial_condition(cfg, a, wx, wy, xc, yc)?;
            let levels = sample_snapshot_levels(n_levels, snaps_per_traj, &mut rng);
            let traj = hughes_trajectory(cfg, &rho0, &levels)?;
            let m0 = rho0.sum();
            let drift = traj.snapshots.column_iter().map(|c| ((c.sum() - m0) / m0).abs()).fold(0.0, f64::max);
            Ok((traj, [a, wx, wy, xc, yc], drift))
        })
        .collect();
    let n = n_traj * snaps_per_traj;
    let mut x = DMatrix::zeros(cfg.nx * cfg.ny, n);
    let mut intrinsic = DMatrix::zeros(7, n);
    let mut max_drift = 0.0_f64;
    for (t, run) in runs.into_iter().enumerate() {
        let (traj, p, drift) = run?;
        max_drift = max_drift.max(drift);
        for (k, time) in traj.times.iter().enumerate() {
            let col = t * snaps_per_traj + k;
            x.set_column(col, &traj.snapshots.column(k));
            let mut row = p.to_vec();
            row.extend([*time, t as f64]);
            intrinsic.set_column(col, &DVector::from_vec(row));
        }
    }
    let mut ds = DataSet::new(x, true)
        .with_meta("generator", "hughes")
        .with_meta("config", serde_json::to_value(cfg)?)
        .with_meta("n_traj", n_traj)
        .with_meta("snaps_per_traj", snaps_per_traj)
        .with_meta("max_mass_drift", max_drift);
    ds.intrinsic = Some(intrinsic);
    Ok(ds)
}
