//! Reproduces one benchmark table at a reduced scale and writes the CSV and
//! JSON reports.
//!
//! `cargo run --release --example bench_table -- [benchmark] [scale] [runs] [out_dir]`

use randsmap::bench::{run_table, BenchmarkConfig, BenchmarkId};
use std::path::PathBuf;

fn main() -> randsmap::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: BenchmarkId = args.next().as_deref().unwrap_or("swiss").parse()?;
    let scale: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let runs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "results".into()));

    let mut cfg = BenchmarkConfig::new(id, scale)?;
    cfg.n_runs = runs;
    cfg.knn_max_points = 50;
    let report = run_table(&cfg)?;
    for r in &report.results {
        println!(
            "{:<16} {:>4}  {} = {:<8.4} train e2 {:.4e}  test e2 {:.4e}{}",
            r.decoder,
            r.p_label.as_deref().unwrap_or("-"),
            r.hyper_name,
            r.tune.best,
            r.train.e2.median,
            r.test.e2.median,
            r.test.econ.map_or(String::new(), |c| format!("  econ {:.2e}", c.median))
        );
    }
    for f in report.write(&dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
