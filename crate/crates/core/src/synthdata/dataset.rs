use crate::error::{invalid, Error, Result};
use crate::io::{read_matrix, write_matrix};
use crate::linalg::select_columns;
use crate::rng::SeededRng;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Tolerance on column sums for data flagged as mass-preserving.
pub const MASS_TOL: f64 = 1e-12;

pub type Meta = BTreeMap<String, serde_json::Value>;

/// Column-wise ambient data (`M × N`) with generator metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub x: DMatrix<f64>,
    pub mass_preserving: bool,
    /// Per-point generative parameters, one column per point.
    pub intrinsic: Option<DMatrix<f64>>,
    pub meta: Meta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    m: usize,
    n: usize,
    mass_preserving: bool,
    meta: Meta,
    /// Row-major rows of the intrinsic matrix.
    intrinsic: Option<Vec<Vec<f64>>>,
}

impl DataSet {
    pub fn new(x: DMatrix<f64>, mass_preserving: bool) -> Self {
        Self { x, mass_preserving, intrinsic: None, meta: Meta::new() }
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.to_owned(), value.into());
        self
    }

    /// Checks finiteness and, when flagged, the sum-to-one law.
    pub fn validate(&self) -> Result<()> {
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite entry in data matrix".into()));
        }
        if let Some(t) = &self.intrinsic {
            if t.ncols() != self.n() {
                return Err(Error::InvalidState("intrinsic column count mismatch".into()));
            }
        }
        if self.mass_preserving {
            let worst = max_mass_defect(&self.x);
            if worst > MASS_TOL {
                return Err(Error::InvalidState(format!(
                    "mass-preserving flag set but a column sum is off by {worst:e}"
                )));
            }
        }
        Ok(())
    }

    /// Subset of columns in the given order; metadata is copied.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: select_columns(&self.x, idx),
            mass_preserving: self.mass_preserving,
            intrinsic: self.intrinsic.as_ref().map(|t| select_columns(t, idx)),
            meta: self.meta.clone(),
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_matrix(&mut w, &self.x, self.mass_preserving)?;
        w.flush()?;
        let sidecar = Sidecar {
            m: self.m(),
            n: self.n(),
            mass_preserving: self.mass_preserving,
            meta: self.meta.clone(),
            intrinsic: self.intrinsic.as_ref().map(|t| t.row_iter().map(|r| r.iter().copied().collect()).collect()),
        };
        let mut f = BufWriter::new(File::create(Self::sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.flush()?;
        Ok(())
    }

    /// Loads the binary container; the sidecar is optional.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let (x, mass) = read_matrix(&mut r)?;
        let mut ds = DataSet::new(x, mass);
        let side = Self::sidecar_path(path);
        if side.exists() {
            let sc: Sidecar = serde_json::from_reader(BufReader::new(File::open(side)?))
                .map_err(|e| Error::Format(format!("bad sidecar: {e}")))?;
            if sc.m != ds.m() || sc.n != ds.n() {
                return Err(Error::Format("sidecar shape does not match container".into()));
            }
            ds.meta = sc.meta;
            if let Some(rows) = sc.intrinsic {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != ds.n()) {
                    return Err(Error::Format("intrinsic rows have wrong length".into()));
                }
                ds.intrinsic = Some(DMatrix::from_fn(k, ds.n(), |i, j| rows[i][j]));
            }
        }
        if ds.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite payload".into()));
        }
        Ok(ds)
    }

    /// One row per point: ambient coordinates `x0..`, then intrinsic `t0..`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let k = self.intrinsic.as_ref().map_or(0, |t| t.nrows());
        let header: Vec<String> =
            (0..self.m()).map(|i| format!("x{i}")).chain((0..k).map(|i| format!("t{i}"))).collect();
        w.write_record(&header).map_err(csv_err)?;
        for j in 0..self.n() {
            let mut rec: Vec<String> = self.x.column(j).iter().map(|v| format!("{v:e}")).collect();
            if let Some(t) = &self.intrinsic {
                rec.extend(t.column(j).iter().map(|v| format!("{v:e}")));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Largest `|1ᵀx_i − 1|` over columns.
pub fn max_mass_defect(x: &DMatrix<f64>) -> f64 {
    x.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Random disjoint train/validation/test subsets. The counts may sum to less
/// than `N`, in which case the remaining points are left out.
pub fn split(ds: &DataSet, spec: &SplitSpec) -> Result<(DataSet, DataSet, DataSet)> {
    let (idx_tr, idx_vl, idx_ts) = split_indices(ds.n(), spec)?;
    let tag = |d: DataSet, idx: &[usize], name: &str| {
        d.with_meta("split", name).with_meta("split_seed", spec.seed).with_meta("source_indices", idx.to_vec())
    };
    Ok((
        tag(ds.select(&idx_tr), &idx_tr, "train"),
        tag(ds.select(&idx_vl), &idx_vl, "val"),
        tag(ds.select(&idx_ts), &idx_ts, "test"),
    ))
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let total = spec
        .n_train
        .checked_add(spec.n_val)
        .and_then(|s| s.checked_add(spec.n_test))
        .ok_or_else(|| invalid("split counts overflow"))?;
    if total > n {
        return Err(invalid(format!("split counts sum to {total} but only {n} points")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    SeededRng::new(spec.seed).shuffle(&mut perm);
    let a = spec.n_train;
    let b = a + spec.n_val;
    Ok((perm[..a].to_vec(), perm[a..b].to_vec(), perm[b..total].to_vec()))
}
