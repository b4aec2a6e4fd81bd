//! Conservative finite-volume solvers producing the traffic (LWR) and crowd
//! (Hughes) density datasets.

mod hughes;
mod lwr;

pub use hughes::{
    hughes_eikonal, hughes_generate, hughes_initial_condition, hughes_step, hughes_trajectory, Hughes2dConfig,
    HUGHES_CFL_MAX, SPEED_FLOOR,
};
pub use lwr::{
    lwr_generate, lwr_godunov_flux, lwr_initial_condition, lwr_roe_flux, lwr_step, lwr_trajectory, Lwr1dConfig,
    LwrFlux, LWR_CFL_MAX,
};

use crate::rng::SeededRng;
use nalgebra::DMatrix;

/// Flattened density snapshots of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub snapshots: DMatrix<f64>,
    pub times: Vec<f64>,
}

/// `k` distinct time levels out of `0..n_levels`, ascending.
pub(crate) fn sample_snapshot_levels(n_levels: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n_levels).collect();
    // partial Fisher–Yates: the first k slots are a uniform sample
    for i in 0..k.min(n_levels) {
        let j = i + rng.below((n_levels - i) as u64) as usize;
        all.swap(i, j);
    }
    let mut picked = all[..k.min(n_levels)].to_vec();
    picked.sort_unstable();
    picked
}
