//! Rotated grayscale images normalized to unit mass. Uses the built-in
//! phantom unless a PNG/PGM path is given.
//!
//! `cargo run --release --example rotated_images -- [image]`

use randsmap::bench::{errors, feature_map};
use randsmap::decoders::{decode, randsmap_fit};
use randsmap::dmap::{dm_encode, dm_fit_with, DmParams, EigenNorm};
use randsmap::randfeat::{feature_matrix, FeatureKind};
use randsmap::synthdata::{gen_phantom, gen_rotated_images, load_grayscale, split, SplitSpec};

fn main() -> randsmap::Result<()> {
    let base = match std::env::args().nth(1) {
        Some(p) => load_grayscale(p.as_ref())?,
        None => gen_phantom(48)?,
    };
    let ds = gen_rotated_images(&base, 600, 5)?;
    let (train, _, test) = split(&ds, &SplitSpec { n_train: 300, n_val: 0, n_test: 300, seed: 5 })?;

    let dm = dm_fit_with(&train.x, &DmParams { alpha: 1.0, w1: 0.5, d: 2, norm: EigenNorm::Stationary })?;
    let (y, y_test) = (dm.embedding(), dm_encode(&dm, &test.x)?);
    // the rotation angle traces a circle in the first two coordinates
    let radius: Vec<f64> = y.column_iter().map(|c| c.norm()).collect();
    let (lo, hi) = radius.iter().fold((f64::MAX, 0.0_f64), |(a, b), r| (a.min(*r), b.max(*r)));
    println!("latent radius in [{lo:.3}, {hi:.3}]");

    for c in [45.0, 80.0, 120.0] {
        let map = feature_map(FeatureKind::Sigmoid, train.n(), c, &y, 10, 0)?;
        let model = randsmap_fit(&feature_matrix(&map, &y)?, &train.x, 1e-3, 1e-8)?.with_features(&map);
        let r = errors(&test.x, &decode(&model, &map, &y_test)?, true)?;
        println!("RANDSMAP-Sig c = {c:>5}: test e2 {:.4}, econ {:.2e}", r.mean_e2(), r.mean_econ().unwrap());
    }
    Ok(())
}
