//! Traffic-flow snapshots: RANDSMAP conserves total mass to roundoff while
//! the unconstrained RFNN and Double Diffusion Maps do not. Also checks the
//! truncation bound `‖(I − UUᵀ)1‖ ≤ σ_{tr+1}` for every fitted model.
//!
//! `cargo run --release --example lwr_conservation`

use randsmap::bench::{errors, feature_map};
use randsmap::decoders::{conservation_residual, ddm_decode, ddm_fit, decode, randsmap_fit, rfnn_fit};
use randsmap::dmap::{dm_encode, dm_fit_with, DmParams, EigenNorm};
use randsmap::pdesolvers::{lwr_generate, Lwr1dConfig};
use randsmap::randfeat::{feature_matrix, FeatureKind};
use randsmap::synthdata::{split, SplitSpec};

fn main() -> randsmap::Result<()> {
    let cfg = Lwr1dConfig { seed: 3, ..Default::default() };
    let ds = lwr_generate(&cfg, 10, 60)?;
    println!(
        "generated {} x {}, max mass drift {:.2e}",
        ds.m(),
        ds.n(),
        ds.meta["max_mass_drift"].as_f64().unwrap_or(f64::NAN)
    );
    let (train, _, test) = split(&ds, &SplitSpec { n_train: 300, n_val: 0, n_test: 300, seed: 3 })?;

    let dm = dm_fit_with(&train.x, &DmParams { alpha: 0.0, w1: 1.0, d: 2, norm: EigenNorm::Stationary })?;
    let (y, y_test) = (dm.embedding(), dm_encode(&dm, &test.x)?);
    let n = train.n();

    for (kind, h) in [(FeatureKind::Rff, 0.2), (FeatureKind::Msrff, 8.0), (FeatureKind::Sigmoid, 15.0)] {
        let map = feature_map(kind, n, h, &y, 10, 0)?;
        let phi = feature_matrix(&map, &y)?;
        let rs = randsmap_fit(&phi, &train.x, 1e-3, 1e-8)?.with_features(&map);
        let (res, next) = conservation_residual(&rs)?;
        let r = errors(&test.x, &decode(&rs, &map, &y_test)?, true)?;
        println!(
            "RANDSMAP-{kind:?}: test e2 {:.4}, econ {:.2e}, residual {res:.2e} <= sigma_next {next:.2e}",
            r.mean_e2(),
            r.mean_econ().unwrap()
        );
        if kind == FeatureKind::Sigmoid {
            let rf = rfnn_fit(&phi, &train.x, 1e-3)?;
            let r = errors(&test.x, &decode(&rf, &map, &y_test)?, true)?;
            println!("RFNN-Sig:         test e2 {:.4}, econ {:.2e}", r.mean_e2(), r.mean_econ().unwrap());
        }
    }
    let ddm = ddm_fit(&y, &train.x, 0.6, None)?;
    let r = errors(&test.x, &ddm_decode(&ddm, &y_test)?, true)?;
    println!("DDM (rank {}):     test e2 {:.4}, econ {:.2e}", ddm.rank, r.mean_e2(), r.mean_econ().unwrap());
    Ok(())
}
