//! Induced random-feature kernels converge to their closed-form limits at the
//! rate predicted by the matrix Bernstein inequality.
//!
//! `cargo run --release --example kernel_bound`

use nalgebra::DMatrix;
use randsmap::bench::{kernel_bound_check, BoundTable, DEFAULT_P_LADDER};
use randsmap::randfeat::FeatureParams;
use randsmap::rng::SeededRng;

fn show(name: &str, t: &BoundTable) {
    println!("{name}");
    for r in &t.rows {
        println!(
            "  P = {:>5}: error {:.3e} ({:.3e} .. {:.3e}), bound {:.3e}, within {:.0}%",
            r.p,
            r.error.median,
            r.error.p5,
            r.error.p95,
            r.median_rhs,
            100.0 * r.fraction_within
        );
    }
}

fn main() -> randsmap::Result<()> {
    let mut rng = SeededRng::new(0);
    let y = DMatrix::from_fn(2, 40, |_, _| rng.uniform_in(-1.0, 1.0));
    show("RFF, sigma_w = 2", &kernel_bound_check(FeatureParams::Rff { sigma_w: 2.0 }, &y, &DEFAULT_P_LADDER, 20, 0)?);
    show(
        "MSRFF, Q = 10",
        &kernel_bound_check(FeatureParams::Msrff { q: 10, sigma_ub: 5.0 }, &y, &[500, 2000, 10000], 20, 0)?,
    );
    Ok(())
}
