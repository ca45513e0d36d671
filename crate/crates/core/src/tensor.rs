//! Rank-3 `[increments x points x features]` arrays and their on-disk form.
//!
//! File layout: the 8-byte magic `IFTENSOR`, a little-endian `u32` header
//! length, a UTF-8 JSON header, then the values as little-endian `f64` in
//! row-major order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const TENSOR_MAGIC: &[u8; 8] = b"IFTENSOR";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not a tensor file (bad magic)")]
    Magic,
    #[error("unsupported tensor file version {0}")]
    Version(u32),
    #[error("tensor header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTensor {
    increments: usize,
    points: usize,
    features: usize,
    pub data: Vec<f64>,
    pub feature_names: Vec<String>,
    /// `true` for increments holding real data, `false` for zero padding.
    pub mask: Vec<bool>,
}

impl SequenceTensor {
    pub fn zeros(increments: usize, points: usize, feature_names: &[&str]) -> Self {
        let features = feature_names.len();
        SequenceTensor {
            increments,
            points,
            features,
            data: vec![0.0; increments * points * features],
            feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
            mask: vec![true; increments],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>, feature_names: Vec<String>) -> Result<Self, TensorError> {
        let [t, p, f] = shape;
        if data.len() != t * p * f {
            return Err(TensorError::Shape(format!("{} values for shape {t}x{p}x{f}", data.len())));
        }
        if feature_names.len() != f {
            return Err(TensorError::Shape(format!("{} feature names for {f} features", feature_names.len())));
        }
        Ok(SequenceTensor { increments: t, points: p, features: f, data, feature_names, mask: vec![true; t] })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.increments, self.points, self.features]
    }

    pub fn increments(&self) -> usize {
        self.increments
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn features(&self) -> usize {
        self.features
    }

    #[inline]
    pub fn index(&self, t: usize, p: usize, f: usize) -> usize {
        (t * self.points + p) * self.features + f
    }

    #[inline]
    pub fn get(&self, t: usize, p: usize, f: usize) -> f64 {
        self.data[self.index(t, p, f)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, p: usize, f: usize, v: f64) {
        let i = self.index(t, p, f);
        self.data[i] = v;
    }

    /// All features of one increment, `[points x features]`.
    pub fn increment(&self, t: usize) -> &[f64] {
        let n = self.points * self.features;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn increment_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.points * self.features;
        &mut self.data[t * n..(t + 1) * n]
    }

    /// Values of feature `f` at increment `t` for every point.
    pub fn column(&self, t: usize, f: usize) -> Vec<f64> {
        (0..self.points).map(|p| self.get(t, p, f)).collect()
    }

    /// Copy of the first `keep` increments followed by zero rows up to the
    /// full length.
    pub fn truncated(&self, keep: usize) -> Self {
        let mut out = self.clone();
        let n = self.points * self.features;
        for v in &mut out.data[keep.min(self.increments) * n..] {
            *v = 0.0;
        }
        for (t, m) in out.mask.iter_mut().enumerate() {
            *m = t < keep;
        }
        out
    }

    /// Sub-tensor with the given point rows.
    pub fn select_points(&self, rows: std::ops::Range<usize>) -> Self {
        let mut data = Vec::with_capacity(self.increments * rows.len() * self.features);
        for t in 0..self.increments {
            for p in rows.clone() {
                let i = self.index(t, p, 0);
                data.extend_from_slice(&self.data[i..i + self.features]);
            }
        }
        SequenceTensor {
            increments: self.increments,
            points: rows.len(),
            features: self.features,
            data,
            feature_names: self.feature_names.clone(),
            mask: self.mask.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub version: u32,
    pub kind: String,
    pub shape: [usize; 3],
    pub feature_names: Vec<String>,
    pub increments: usize,
    pub mask: Vec<bool>,
    pub mesh_checksum: String,
    /// Free-form metadata (for example loadfactors or boundary normals).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn write_tensor(path: &Path, kind: &str, tensor: &SequenceTensor, mesh_checksum: &str, meta: serde_json::Value) -> Result<(), TensorError> {
    let header = TensorHeader {
        version: TENSOR_VERSION,
        kind: kind.to_string(),
        shape: tensor.shape(),
        feature_names: tensor.feature_names.clone(),
        increments: tensor.increments,
        mask: tensor.mask.clone(),
        mesh_checksum: mesh_checksum.to_string(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let io_err = |source| TensorError::Io { path: path.display().to_string(), source };
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * tensor.data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in &tensor.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)
}

pub fn read_tensor(path: &Path) -> Result<(TensorHeader, SequenceTensor), TensorError> {
    let io_err = |source| TensorError::Io { path: path.display().to_string(), source };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io_err)?.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() < 12 || &bytes[..8] != TENSOR_MAGIC {
        return Err(TensorError::Magic);
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| TensorError::Shape("truncated header".into()))?;
    let header: TensorHeader = serde_json::from_slice(body)?;
    if header.version != TENSOR_VERSION {
        return Err(TensorError::Version(header.version));
    }
    let payload = &bytes[12 + hlen..];
    if payload.len() % 8 != 0 {
        return Err(TensorError::Shape("payload is not a whole number of f64 values".into()));
    }
    let data: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut tensor = SequenceTensor::from_vec(header.shape, data, header.feature_names.clone())?;
    if header.mask.len() == tensor.increments {
        tensor.mask = header.mask.clone();
    }
    Ok((header, tensor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mut t = SequenceTensor::zeros(3, 2, &["a", "b"]);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = i as f64 * 0.5 - 1.0;
        }
        assert_eq!(t.get(1, 1, 0), t.data[6]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tensor");
        write_tensor(&path, "test", &t, "abc", serde_json::json!({"lf": [0.1, 0.2, 0.3]})).unwrap();
        let (h, back) = read_tensor(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(h.mesh_checksum, "abc");
        assert_eq!(h.shape, [3, 2, 2]);
        let tr = t.truncated(1);
        assert!(tr.increment(1).iter().chain(tr.increment(2)).all(|v| *v == 0.0));
        assert_eq!(tr.increment(0), t.increment(0));
        assert_eq!(tr.mask, vec![true, false, false]);
        let sel = t.select_points(1..2);
        assert_eq!(sel.shape(), [3, 1, 2]);
        assert_eq!(sel.get(2, 0, 1), t.get(2, 1, 1));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        std::fs::write(&path, b"not a tensor file").unwrap();
        assert!(matches!(read_tensor(&path), Err(TensorError::Magic)));
        assert!(SequenceTensor::from_vec([1, 2, 3], vec![0.0; 5], vec!["a".into(); 3]).is_err());
    }
}
