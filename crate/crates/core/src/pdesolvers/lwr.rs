use super::{sample_snapshot_levels, TrajectorySample};
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::synthdata::DataSet;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest admissible `max|f'(ρ)|·dt/Δx`.
pub const LWR_CFL_MAX: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LwrFlux {
    /// Exact Riemann solution of the concave flux.
    #[default]
    Godunov,
    /// Roe linearization with the Harten–Hyman entropy fix.
    Roe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lwr1dConfig {
    pub m_cells: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub v_max: f64,
    pub rho_max: f64,
    pub dt: f64,
    pub t_end: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub flux: LwrFlux,
    pub amp_range: [f64; 2],
    pub width_range: [f64; 2],
    pub center_range: [f64; 2],
}

impl Default for Lwr1dConfig {
    fn default() -> Self {
        Self {
            m_cells: 400,
            x_lo: -5.0,
            x_hi: 5.0,
            v_max: 2.0,
            rho_max: 1.0,
            dt: 0.005,
            t_end: 20.0,
            noise_sigma: 0.02,
            seed: 0,
            flux: LwrFlux::Godunov,
            amp_range: [0.5, 1.5],
            width_range: [0.2, 0.8],
            center_range: [-3.0, 3.0],
        }
    }
}

impl Lwr1dConfig {
    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.m_cells as f64
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.m_cells).map(|i| self.x_lo + (i as f64 + 0.5) * dx).collect()
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_cells < 2 {
            return Err(invalid("LWR needs at least 2 cells"));
        }
        if !(self.x_hi > self.x_lo) {
            return Err(invalid("empty LWR domain"));
        }
        if !(self.rho_max > 0.0 && self.v_max > 0.0 && self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(invalid("rho_max, v_max and dt must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(invalid("noise sigma must be nonnegative"));
        }
        // worst case |f'| = v_max at ρ = 0 or ρ = ρ_max
        let cfl = self.v_max * self.dt / self.dx();
        if cfl > LWR_CFL_MAX {
            return Err(Error::Stability(format!("CFL number {cfl} exceeds {LWR_CFL_MAX}")));
        }
        Ok(())
    }
}

fn flux(rho: f64, v_max: f64, rho_max: f64) -> f64 {
    v_max * rho * (1.0 - rho / rho_max)
}

fn check_density(rho: f64, rho_max: f64) -> Result<()> {
    let slack = 1e-12 * rho_max;
    if !(rho >= -slack && rho <= rho_max + slack) {
        return Err(Error::InvalidState(format!("density {rho} outside [0, {rho_max}]")));
    }
    Ok(())
}

/// Exact Godunov flux of `f(ρ) = v_max ρ (1 − ρ/ρ_max)`.
pub fn lwr_godunov_flux(rho_l: f64, rho_r: f64, v_max: f64, rho_max: f64) -> Result<f64> {
    check_density(rho_l, rho_max)?;
    check_density(rho_r, rho_max)?;
    Ok(godunov_unchecked(rho_l, rho_r, v_max, rho_max))
}

fn godunov_unchecked(rho_l: f64, rho_r: f64, v_max: f64, rho_max: f64) -> f64 {
    let crit = 0.5 * rho_max;
    if rho_l <= rho_r {
        flux(rho_l, v_max, rho_max).min(flux(rho_r, v_max, rho_max))
    } else if rho_r <= crit && crit <= rho_l {
        flux(crit, v_max, rho_max)
    } else {
        flux(rho_l, v_max, rho_max).max(flux(rho_r, v_max, rho_max))
    }
}

/// Roe flux with the Harten–Hyman entropy fix.
pub fn lwr_roe_flux(rho_l: f64, rho_r: f64, v_max: f64, rho_max: f64) -> Result<f64> {
    check_density(rho_l, rho_max)?;
    check_density(rho_r, rho_max)?;
    Ok(roe_unchecked(rho_l, rho_r, v_max, rho_max))
}

fn roe_unchecked(rho_l: f64, rho_r: f64, v_max: f64, rho_max: f64) -> f64 {
    let fl = flux(rho_l, v_max, rho_max);
    let fr = flux(rho_r, v_max, rho_max);
    let dfdr = |r: f64| v_max * (1.0 - 2.0 * r / rho_max);
    // for a quadratic flux the Roe speed is f' at the mean state
    let a = dfdr(0.5 * (rho_l + rho_r));
    let delta = (a - dfdr(rho_l)).max(dfdr(rho_r) - a).max(0.0);
    let abs_a = if a.abs() < delta { 0.5 * (a * a / delta + delta) } else { a.abs() };
    0.5 * (fl + fr) - 0.5 * abs_a * (rho_r - rho_l)
}

fn van_leer_slope(dm: f64, dp: f64) -> f64 {
    let prod = dm * dp;
    if prod > 0.0 {
        2.0 * prod / (dm + dp)
    } else {
        0.0
    }
}

/// One MUSCL step (van Leer slopes, forward Euler) on the periodic grid.
pub fn lwr_step(state: &DVector<f64>, cfg: &Lwr1dConfig) -> Result<DVector<f64>> {
    let m = state.len();
    if m != cfg.m_cells {
        return Err(invalid(format!("state has {m} cells, config {}", cfg.m_cells)));
    }
    cfg.validate()?;
    let mut out = DVector::zeros(m);
    lwr_step_into(state.as_slice(), out.as_mut_slice(), cfg, &mut vec![0.0; m])?;
    Ok(out)
}

fn lwr_step_into(rho: &[f64], out: &mut [f64], cfg: &Lwr1dConfig, fluxes: &mut [f64]) -> Result<()> {
    let m = rho.len();
    for &r in rho {
        check_density(r, cfg.rho_max)?;
    }
    let slope = |i: usize| {
        let l = rho[(i + m - 1) % m];
        let r = rho[(i + 1) % m];
        van_leer_slope(rho[i] - l, r - rho[i])
    };
    let nf = match cfg.flux {
        LwrFlux::Godunov => godunov_unchecked,
        LwrFlux::Roe => roe_unchecked,
    };
    // fluxes[i] sits at the face between cell i and cell i+1
    let mut s_cur = slope(0);
    for i in 0..m {
        let j = (i + 1) % m;
        let s_next = slope(j);
        let left = rho[i] + 0.5 * s_cur;
        let right = rho[j] - 0.5 * s_next;
        fluxes[i] = nf(left, right, cfg.v_max, cfg.rho_max);
        s_cur = s_next;
    }
    let lam = cfg.dt / cfg.dx();
    for i in 0..m {
        out[i] = rho[i] - lam * (fluxes[i] - fluxes[(i + m - 1) % m]);
    }
    Ok(())
}

/// Gaussian bump plus clipped noise, normalized to unit sum.
pub fn lwr_initial_condition(
    cfg: &Lwr1dConfig,
    amp: f64,
    width: f64,
    center: f64,
    rng: &mut SeededRng,
) -> Result<DVector<f64>> {
    let xs = cfg.cell_centers();
    let mut rho = DVector::from_iterator(
        xs.len(),
        xs.iter().map(|x| {
            let base = amp * (-(x - center).powi(2) / (2.0 * width * width)).exp();
            let noise = if cfg.noise_sigma > 0.0 { cfg.noise_sigma * rng.normal() } else { 0.0 };
            (base + noise).max(0.0)
        }),
    );
    let total = rho.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("initial condition has no mass".into()));
    }
    rho /= total;
    if rho.iter().any(|&r| r > cfg.rho_max) {
        return Err(Error::InvalidState("initial density exceeds rho_max".into()));
    }
    Ok(rho)
}

/// Integrates from `rho0`, recording the states at the given time levels
/// (step indices, ascending, level 0 being the initial state).
pub fn lwr_trajectory(cfg: &Lwr1dConfig, rho0: &DVector<f64>, levels: &[usize]) -> Result<TrajectorySample> {
    cfg.validate()?;
    if rho0.len() != cfg.m_cells {
        return Err(invalid("initial state length does not match m_cells"));
    }
    let m = cfg.m_cells;
    let mut cur = rho0.as_slice().to_vec();
    let mut next = vec![0.0; m];
    let mut fluxes = vec![0.0; m];
    let mut snaps = DMatrix::zeros(m, levels.len());
    let mut times = Vec::with_capacity(levels.len());
    let mut k = 0;
    let last = levels.last().copied().unwrap_or(0);
    for step in 0..=last {
        while k < levels.len() && levels[k] == step {
            snaps.column_mut(k).copy_from_slice(&cur);
            times.push(step as f64 * cfg.dt);
            k += 1;
        }
        if step == last {
            break;
        }
        lwr_step_into(&cur, &mut next, cfg, &mut fluxes)?;
        std::mem::swap(&mut cur, &mut next);
    }
    if k != levels.len() {
        return Err(invalid("snapshot levels must be ascending"));
    }
    Ok(TrajectorySample { snapshots: snaps, times })
}

/// `n_traj` random trajectories, `snaps_per_traj` random snapshots each.
/// Intrinsic rows: amplitude, width, center, time, trajectory index.
pub fn lwr_generate(cfg: &Lwr1dConfig, n_traj: usize, snaps_per_traj: usize) -> Result<DataSet> {
    cfg.validate()?;
    let n_levels = cfg.n_steps() + 1;
    if snaps_per_traj > n_levels {
        return Err(invalid(format!("only {n_levels} time levels available")));
    }
    let runs: Vec<Result<(TrajectorySample, [f64; 3], f64)>> = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::derive(cfg.seed, t as u64);
            let a = rng.uniform_in(cfg.amp_range[0], cfg.amp_range[1]);
            let w = rng.uniform_in(cfg.width_range[0], cfg.width_range[1]);
            let xc = rng.uniform_in(cfg.center_range[0], cfg.center_range[1]);
            let rho0 = lwr_initial_condition(cfg, a, w, xc, &mut rng)?;
            let levels = sample_snapshot_levels(n_levels, snaps_per_traj, &mut rng);
            let traj = lwr_trajectory(cfg, &rho0, &levels)?;
            let m0 = rho0.sum();
            let drift = traj.snapshots.column_iter().map(|c| ((c.sum() - m0) / m0).abs()).fold(0.0, f64::max);
            Ok((traj, [a, w, xc], drift))
        })
        .collect();
    let n = n_traj * snaps_per_traj;
    let mut x = DMatrix::zeros(cfg.m_cells, n);
    let mut intrinsic = DMatrix::zeros(5, n);
    let mut max_drift = 0.0_f64;
    for (t, run) in runs.into_iter().enumerate() {
        let (traj, p, drift) = run?;
        max_drift = max_drift.max(drift);
        for (k, time) in traj.times.iter().enumerate() {
            let col = t * snaps_per_traj + k;
            x.set_column(col, &traj.snapshots.column(k));
            intrinsic.set_column(col, &DVector::from_vec(vec![p[0], p[1], p[2], *time, t as f64]));
        }
    }
    let mut ds = DataSet::new(x, true)
        .with_meta("generator", "lwr")
        .with_meta("config", serde_json::to_value(cfg)?)
        .with_meta("n_traj", n_traj)
        .with_meta("snaps_per_traj", snaps_per_traj)
        .with_meta("max_mass_drift", max_drift);
    ds.intrinsic = Some(intrinsic);
    Ok(ds)
}
