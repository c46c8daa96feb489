use std::io::{BufRead, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DATASET_MAGIC: &[u8; 8] = b"DBCDATA\0";
const DATASET_VERSION: u32 = 1;

/// Per-dimension affine map from `[lo, hi]` to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn fit(actions: ArrayView2<f64>) -> Self {
        let d = actions.ncols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in actions.rows() {
            for j in 0..d {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        Self { lo, hi }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn half_range(&self, j: usize) -> f64 {
        let h = 0.5 * (self.hi[j] - self.lo[j]);
        if h > 0.0 {
            h
        } else {
            1.0
        }
    }

    fn mid(&self, j: usize) -> f64 {
        0.5 * (self.hi[j] + self.lo[j])
    }

    pub fn normalize(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(j, x)| (x - self.mid(j)) / self.half_range(j))
            .collect()
    }

    pub fn denormalize(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(j, x)| x * self.half_range(j) + self.mid(j))
            .collect()
    }

    pub fn normalize_rows(&self, a: ArrayView2<f64>) -> Array2<f64> {
        let mut out = a.to_owned();
        for mut r in out.rows_mut() {
            let v = self.normalize(r.as_slice().expect("contiguous"));
            r.assign(&ArrayView1::from(&v));
        }
        out
    }

    pub fn denormalize_rows(&self, a: ArrayView2<f64>) -> Array2<f64> {
        let mut out = a.to_owned();
        for mut r in out.rows_mut() {
            let v = self.denormalize(r.as_slice().expect("contiguous"));
            r.assign(&ArrayView1::from(&v));
        }
        out
    }
}

/// Aligned observation and action rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    obs: Array2<f64>,
    actions: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    obs: Vec<f64>,
    action: Vec<f64>,
}

impl DemoDataset {
    pub fn new(obs: Array2<f64>, actions: Array2<f64>) -> Result<Self> {
        if obs.nrows() != actions.nrows() {
            return Err(Error::Shape(format!(
                "{} observation rows but {} action rows",
                obs.nrows(),
                actions.nrows()
            )));
        }
        if obs.iter().chain(actions.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        Ok(Self {
            obs: obs.as_standard_layout().to_owned(),
            actions: actions.as_standard_layout().to_owned(),
        })
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn observations(&self) -> ArrayView2<'_, f64> {
        self.obs.view()
    }

    pub fn actions(&self) -> ArrayView2<'_, f64> {
        self.actions.view()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        let d = self.obs_dim();
        &self.obs.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        let d = self.action_dim();
        &self.actions.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Argmax of each one-hot observation row.
    pub fn scene_ids(&self) -> Vec<usize> {
        self.obs
            .rows()
            .into_iter()
            .map(|r| crate::samplers::argmax_first(r.as_slice().expect("contiguous")).unwrap_or(0))
            .collect()
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::fit(self.actions.view())
    }

    /// Splits off the last `n_tail` rows.
    pub fn split_tail(&self, n_tail: usize) -> Result<(DemoDataset, DemoDataset)> {
        if n_tail >= self.len() {
            return Err(Error::config("data.holdout", "hold-out must leave training rows"));
        }
        let cut = self.len() - n_tail;
        let head = DemoDataset::new(
            self.obs.slice(ndarray::s![..cut, ..]).to_owned(),
            self.actions.slice(ndarray::s![..cut, ..]).to_owned(),
        )?;
        let tail = DemoDataset::new(
            self.obs.slice(ndarray::s![cut.., ..]).to_owned(),
            self.actions.slice(ndarray::s![cut.., ..]).to_owned(),
        )?;
        Ok((head, tail))
    }

    /// Binary layout: magic, version, |o|, |a|, N, then row-major little-endian
    /// f64 observation and action blocks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * (self.obs.len() + self.actions.len()));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.obs_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.action_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self.obs.iter().chain(self.actions.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |m: &str| Error::corrupt(path, m);
        if bytes.len() < 28 || &bytes[..8] != DATASET_MAGIC {
            return Err(corrupt("not a dataset file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != DATASET_VERSION {
            return Err(corrupt(&format!("unsupported dataset version {version}")));
        }
        let od = u32_at(12) as usize;
        let ad = u32_at(16) as usize;
        let n = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
        let want = n
            .checked_mul(od + ad)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(28))
            .ok_or_else(|| corrupt("size overflow"))?;
        if bytes.len() != want {
            return Err(corrupt(&format!("expected {want} bytes, found {}", bytes.len())));
        }
        let vals: Vec<f64> = bytes[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (o, a) = vals.split_at(n * od);
        let obs = Array2::from_shape_vec((n, od), o.to_vec()).map_err(|e| corrupt(&e.to_string()))?;
        let act = Array2::from_shape_vec((n, ad), a.to_vec()).map_err(|e| corrupt(&e.to_string()))?;
        DemoDataset::new(obs, act).map_err(|e| corrupt(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// One `{"obs": [...], "action": [...]}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.len() {
            let row = JsonRow {
                obs: self.observation(i).to_vec(),
                action: self.action(i).to_vec(),
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut obs = Vec::new();
        let mut act = Vec::new();
        let (mut od, mut ad) = (None, None);
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonRow =
                serde_json::from_str(&line).map_err(|e| Error::corrupt("<jsonl>", format!("line {}: {e}", i + 1)))?;
            if *od.get_or_insert(row.obs.len()) != row.obs.len() || *ad.get_or_insert(row.action.len()) != row.action.len() {
                return Err(Error::Shape(format!("line {} has inconsistent widths", i + 1)));
            }
            obs.extend(row.obs);
            act.extend(row.action);
        }
        let (od, ad) = (od.unwrap_or(0), ad.unwrap_or(0));
        let n = if od > 0 { obs.len() / od } else { act.len() / ad.max(1) };
        let obs = Array2::from_shape_vec((n, od), obs).map_err(|e| Error::Shape(e.to_string()))?;
        let act = Array2::from_shape_vec((n, ad), act).map_err(|e| Error::Shape(e.to_string()))?;
        DemoDataset::new(obs, act)
    }
}
