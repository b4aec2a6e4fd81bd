use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-point reconstruction errors of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub e2: Vec<f64>,
    pub einf: Vec<f64>,
    /// Present only for mass-preserving sources.
    pub econ: Option<Vec<f64>>,
    pub fit_time: f64,
    pub infer_time: f64,
    pub run_seed: u64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl EvalReport {
    pub fn mean_e2(&self) -> f64 {
        mean(&self.e2)
    }

    pub fn mean_einf(&self) -> f64 {
        mean(&self.einf)
    }

    pub fn mean_econ(&self) -> Option<f64> {
        self.econ.as_deref().map(mean)
    }

    /// Summary of one run as named scalars, the unit consumed by [`repeat_runs`].
    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("e2".to_owned(), self.mean_e2());
        m.insert("einf".to_owned(), self.mean_einf());
        if let Some(c) = self.mean_econ() {
            m.insert("econ".to_owned(), c);
        }
        m.insert("fit_time".to_owned(), self.fit_time);
        m.insert("infer_time".to_owned(), self.infer_time);
        m
    }
}

/// Relative `L2` and `L∞` errors per column, plus `|1ᵀx̂ − 1|` when `mass` is set.
pub fn errors(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>, mass: bool) -> Result<EvalReport> {
    if x_true.shape() != x_hat.shape() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: truth {:?}, reconstruction {:?}",
            x_true.shape(),
            x_hat.shape()
        )));
    }
    let l = x_true.ncols();
    let mut e2 = Vec::with_capacity(l);
    let mut einf = Vec::with_capacity(l);
    for j in 0..l {
        let t = x_true.column(j);
        let diff = x_hat.column(j) - t;
        let (n2, ninf) = (t.norm(), t.amax());
        if !(n2 > 0.0) {
            return Err(Error::UndefinedMetric(format!("truth column {j} has zero norm")));
        }
        e2.push(diff.norm() / n2);
        einf.push(diff.amax() / ninf);
    }
    let econ = mass.then(|| x_hat.column_iter().map(|c| (c.sum() - 1.0).abs()).collect());
    Ok(EvalReport { e2, einf, econ, fit_time: 0.0, infer_time: 0.0, run_seed: 0 })
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank `⌈p/100 · n⌉` (at least 1).
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Median with the 5–95 % band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            median: percentile_nearest_rank(&v, 50.0),
            p5: percentile_nearest_rank(&v, 5.0),
            p95: percentile_nearest_rank(&v, 95.0),
        }
    }
}

/// Runs `pipeline(base_seed + i)` for `i < n_runs` and summarizes every
/// metric. Runs are spread over the current rayon pool; results are combined
/// in seed order so the outcome does not depend on scheduling.
pub fn repeat_runs<F>(pipeline: F, n_runs: usize, base_seed: u64) -> Result<BTreeMap<String, Spread>>
where
    F: Fn(u64) -> Result<BTreeMap<String, f64>> + Sync,
{
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be positive".into()));
    }
    let runs: Vec<BTreeMap<String, f64>> =
        (0..n_runs as u64).into_par_iter().map(|i| pipeline(base_seed.wrapping_add(i))).collect::<Result<_>>()?;
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in r {
            cols.entry(k.clone()).or_default().push(*v);
        }
    }
    Ok(cols.into_iter().map(|(k, v)| (k, Spread::of(&v))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let t = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let h = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let r = errors(&t, &h, true).unwrap();
        assert!((r.e2[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.einf[0], 1.0);
        assert_eq!(r.econ.unwrap()[0], 0.0);
        assert!(errors(&t, &t, false).unwrap().e2.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn zero_truth_is_undefined() {
        let t = DMatrix::zeros(3, 2);
        assert!(matches!(errors(&t, &t, false), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn doubling_reconstruction_doubles_mass_excess() {
        let t = DMatrix::from_column_slice(2, 1, &[0.25, 0.75]);
        let r = errors(&t, &(&t * 2.0), true).unwrap();
        assert!((r.econ.unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_rank_against_hand_table() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile_nearest_rank(&v, 5.0), 1.0);
        assert_eq!(percentile_nearest_rank(&v, 50.0), 10.0);
        assert_eq!(percentile_nearest_rank(&v, 95.0), 19.0);
        assert_eq!(percentile_nearest_rank(&v, 100.0), 20.0);
        assert_eq!(percentile_nearest_rank(&[3.5], 5.0), 3.5);
    }

    #[test]
    fn constant_and_single_runs() {
        let s = repeat_runs(|_| Ok(BTreeMap::from([("x".to_owned(), 2.0)])), 7, 0).unwrap();
        assert_eq!(s["x"], Spread { median: 2.0, p5: 2.0, p95: 2.0 });
        let one = repeat_runs(|seed| Ok(BTreeMap::from([("s".to_owned(), seed as f64)])), 1, 41).unwrap();
        assert_eq!(one["s"].median, 41.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let f = |seed: u64| {
            let mut rng = crate::rng::SeededRng::new(seed);
            Ok(BTreeMap::from([("u".to_owned(), rng.uniform())]))
        };
        assert_eq!(repeat_runs(f, 30, 5).unwrap(), repeat_runs(f, 30, 5).unwrap());
    }
}
