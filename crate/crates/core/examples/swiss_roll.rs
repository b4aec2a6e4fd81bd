//! Swiss roll: encode with diffusion maps, decode with sigmoidal random
//! features and report reconstruction errors on held-out points.
//!
//! `cargo run --release --example swiss_roll -- [n_train]`

use randsmap::bench::{errors, feature_map};
use randsmap::decoders::{decode, rfnn_fit};
use randsmap::dmap::{dm_encode, dm_fit_with, DmParams, EigenNorm};
use randsmap::randfeat::{feature_matrix, FeatureKind};
use randsmap::synthdata::{gen_swiss_roll, split, SplitSpec};

fn main() -> randsmap::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let ds = gen_swiss_roll(3 * n, 0.05, 7)?;
    let (train, _, test) = split(&ds, &SplitSpec { n_train: n, n_val: 0, n_test: 2 * n, seed: 7 })?;

    let dm = dm_fit_with(&train.x, &DmParams { alpha: 1.0, w1: 0.12, d: 2, norm: EigenNorm::Stationary })?;
    println!("epsilon1 = {:.4}, xi = {:?}", dm.epsilon1, dm.xi);
    let y_train = dm.embedding();
    let y_test = dm_encode(&dm, &test.x)?;

    for c in [2.0, 5.0, 10.0, 20.0] {
        let map = feature_map(FeatureKind::Sigmoid, n, c, &y_train, 10, 1)?;
        let model = rfnn_fit(&feature_matrix(&map, &y_train)?, &train.x, 1e-3)?.with_features(&map);
        let tr = errors(&train.x, &decode(&model, &map, &y_train)?, false)?;
        let te = errors(&test.x, &decode(&model, &map, &y_test)?, false)?;
        println!(
            "RFNN-Sig c = {c:>4}: train e2 {:.4}  test e2 {:.4}  test einf {:.4}",
            tr.mean_e2(),
            te.mean_e2(),
            te.mean_einf()
        );
    }
    Ok(())
}
