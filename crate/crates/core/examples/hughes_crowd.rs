//! Crowd evacuation around an obstacle on a coarse grid: generate
//! trajectories, check mass conservation and compare POD with RANDSMAP.
//!
//! `cargo run --release --example hughes_crowd`

use randsmap::bench::{errors, feature_map};
use randsmap::decoders::{decode, pod_fit, pod_reconstruct, randsmap_fit};
use randsmap::dmap::{dm_encode, dm_fit_with, DmParams, EigenNorm};
use randsmap::pdesolvers::{hughes_generate, Hughes2dConfig};
use randsmap::randfeat::{feature_matrix, FeatureKind};
use randsmap::synthdata::{split, SplitSpec};

fn main() -> randsmap::Result<()> {
    let cfg = Hughes2dConfig { nx: 80, ny: 20, dt: 0.05, t_end: 30.0, seed: 11, ..Default::default() };
    let ds = hughes_generate(&cfg, 8, 60)?;
    println!(
        "generated {} x {}, max mass drift {:.2e}",
        ds.m(),
        ds.n(),
        ds.meta["max_mass_drift"].as_f64().unwrap_or(f64::NAN)
    );
    let (train, _, test) = split(&ds, &SplitSpec { n_train: 240, n_val: 0, n_test: 240, seed: 1 })?;

    let pod = pod_fit(&train.x, 4)?;
    let r = errors(&test.x, &pod_reconstruct(&pod, &test.x)?, true)?;
    println!("POD (4 modes):  test e2 {:.4}, econ {:.2e}", r.mean_e2(), r.mean_econ().unwrap());

    let dm = dm_fit_with(&train.x, &DmParams { alpha: 1.0, w1: 0.4, d: 4, norm: EigenNorm::Stationary })?;
    let (y, y_test) = (dm.embedding(), dm_encode(&dm, &test.x)?);
    let map = feature_map(FeatureKind::Sigmoid, train.n(), 10.0, &y, 10, 0)?;
    let model = randsmap_fit(&feature_matrix(&map, &y)?, &train.x, 1e-3, 1e-8)?.with_features(&map);
    let r = errors(&test.x, &decode(&model, &map, &y_test)?, true)?;
    println!("RANDSMAP-Sig:   test e2 {:.4}, econ {:.2e}", r.mean_e2(), r.mean_econ().unwrap());
    Ok(())
}
