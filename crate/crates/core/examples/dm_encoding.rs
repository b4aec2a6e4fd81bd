//! Diffusion-map encoding of the 20-dimensional S-curve, the Nyström
//! extension to new points and a save/load round trip.
//!
//! `cargo run --release --example dm_encoding`

use randsmap::dmap::{dm_encode, dm_fit_with, DmModel, DmParams, EigenNorm};
use randsmap::synthdata::gen_scurve_20d;

fn main() -> randsmap::Result<()> {
    let ds = gen_scurve_20d(1500, 0.01, 2)?;
    let train = ds.x.columns(0, 1000).into_owned();
    let new = ds.x.columns(1000, 500).into_owned();

    let dm = dm_fit_with(&train, &DmParams { alpha: 1.0, w1: 0.2, d: 2, norm: EigenNorm::Stationary })?;
    println!("epsilon1 = {:.4}", dm.epsilon1);
    println!("xi = {:?}, gap warning: {}", dm.xi, dm.degenerate_gap);

    // extending the training points reproduces their own coordinates
    let again = dm_encode(&dm, &train)?;
    println!("max |nystrom - embedding| on training points: {:.2e}", (again - dm.embedding()).amax());

    let y_new = dm_encode(&dm, &new)?;
    println!("encoded {} new points, coordinate range {:.3} .. {:.3}", y_new.ncols(), y_new.min(), y_new.max());

    let path = std::env::temp_dir().join("scurve_dm.mdcb");
    dm.save(&path)?;
    let back = DmModel::load(&path)?;
    println!("reloaded model reproduces encodings: {}", dm_encode(&back, &new)? == y_new);
    Ok(())
}
