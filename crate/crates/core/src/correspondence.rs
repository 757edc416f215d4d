//! Soft correspondence matrices, hard maps, fusion and anchors.

use std::fs;
use std::path::Path;

use crate::geometry::{fps, GeometryError, Shape};
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry: {0}")]
    NonFinite(String),
    #[error("bad format: {0}")]
    Format(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<GeometryError> for CorrError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::OutOfRange(m) => CorrError::OutOfRange(m),
            GeometryError::Index(m) => CorrError::Index(m),
            other => CorrError::Dimension(other.to_string()),
        }
    }
}

/// N×M matrix of match scores. Rows are source (primal) features, columns
/// target (dual) features. No normalization is imposed.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCorrespondence {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl SoftCorrespondence {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self, CorrError> {
        if n == 0 || m == 0 {
            return Err(CorrError::Dimension(format!("{n}×{m} correspondence is empty")));
        }
        if data.len() != n * m {
            return Err(CorrError::Dimension(format!("{} values for a {n}×{m} matrix", data.len())));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(CorrError::NonFinite(format!("entry ({}, {})", k / m, k % m)));
        }
        Ok(SoftCorrespondence { n, m, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, CorrError> {
        if t.rank() != 2 {
            return Err(CorrError::Dimension(format!("tensor of shape {:?} is not a matrix", t.shape())));
        }
        Self::new(t.rows(), t.cols(), t.data().to_vec())
    }

    pub fn identity(n: usize) -> Result<Self, CorrError> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(n, n, data)
    }

    pub fn source_n(&self) -> usize {
        self.n
    }

    pub fn target_m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n, self.m, self.data.clone()).expect("validated at construction")
    }

    /// The dual view `Pᵀ`.
    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.n {
            for j in 0..self.m {
                data[j * self.n + i] = self.data[i * self.m + j];
            }
        }
        SoftCorrespondence { n: self.m, m: self.n, data }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        out.extend_from_slice(CORR_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorrError> {
        if bytes.len() < 12 {
            return Err(CorrError::Truncated(format!("{} bytes, header needs 12", bytes.len())));
        }
        if &bytes[..4] != CORR_MAGIC {
            return Err(CorrError::Format(format!("magic {:?} is not CORR", &bytes[..4])));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let want = n
            .checked_mul(m)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| CorrError::Format(format!("header {n}×{m} overflows")))?;
        let body = &bytes[12..];
        if body.len() < want {
            return Err(CorrError::Truncated(format!("{n}×{m} needs {want} bytes, found {}", body.len())));
        }
        if body.len() > want {
            return Err(CorrError::Format(format!("{} trailing bytes after {n}×{m} matrix", body.len() - want)));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(n, m, data)
    }

    pub fn write(&self, path: &Path) -> Result<(), CorrError> {
        fs::write(path, self.to_bytes()).map_err(|e| CorrError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CorrError> {
        let bytes = fs::read(path).map_err(|e| CorrError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

const CORR_MAGIC: &[u8; 4] = b"CORR";

/// Hard map: target index per source vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexMap(pub Vec<usize>);

impl VertexMap {
    pub fn identity(n: usize) -> Self {
        VertexMap((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn targets(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, m: usize) -> Result<(), CorrError> {
        match self.0.iter().position(|&t| t >= m) {
            Some(i) => Err(CorrError::Index(format!("vertex {i} maps to {} but target has {m} vertices", self.0[i]))),
            None => Ok(()),
        }
    }

    /// Fraction of entries that agree with `other`.
    pub fn agreement(&self, other: &VertexMap) -> f64 {
        let hits = self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count();
        hits as f64 / self.0.len().max(1) as f64
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, CorrError> {
        let mut out = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            out.push(s.parse().map_err(|_| CorrError::Format(format!("line {}: {s:?} is not an index", k + 1)))?);
        }
        Ok(VertexMap(out))
    }

    pub fn write(&self, path: &Path) -> Result<(), CorrError> {
        fs::write(path, self.to_text()).map_err(|e| CorrError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CorrError> {
        let text = fs::read_to_string(path).map_err(|e| CorrError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub source: usize,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet(pub Vec<Anchor>);

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Anchor> {
        self.0.iter()
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), CorrError> {
        let mut seen = vec![false; n];
        for a in &self.0 {
            if a.source >= n || a.label >= m {
                return Err(CorrError::Index(format!("anchor {}→{} outside {n}×{m}", a.source, a.label)));
            }
            if std::mem::replace(&mut seen[a.source], true) {
                return Err(CorrError::Dimension(format!("anchor source {} repeated", a.source)));
            }
            if !a.confidence.is_finite() {
                return Err(CorrError::NonFinite(format!("confidence of anchor {}", a.source)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    Mean,
    Max,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Row-wise argmax, lowest index on ties.
pub fn mle_map(p: &SoftCorrespondence) -> VertexMap {
    VertexMap((0..p.n).map(|i| argmax(p.row(i))).collect())
}

/// Combines the primal output (N×M) with the dual output (M×N).
pub fn fuse(primal: &SoftCorrespondence, dual: &SoftCorrespondence, mode: FusionMode) -> Result<SoftCorrespondence, CorrError> {
    if primal.n != dual.m || primal.m != dual.n {
        return Err(CorrError::Dimension(format!(
            "primal {}×{} vs dual {}×{}",
            primal.n, primal.m, dual.n, dual.m
        )));
    }
    let dt = dual.transpose();
    let data = primal
        .data
        .iter()
        .zip(&dt.data)
        .map(|(&a, &b)| match mode {
            FusionMode::Mean => (a + b) / 2.0,
            FusionMode::Max => a.max(b),
        })
        .collect();
    SoftCorrespondence::new(primal.n, primal.m, data)
}

/// `⌈fraction·n⌉`, at least 1 and at most n.
pub fn anchor_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// FPS-spread anchors labelled by their row argmax, confidence = that row's maximum.
pub fn select_anchors(p: &SoftCorrespondence, shape: &Shape, k: usize, start: usize) -> Result<AnchorSet, CorrError> {
    if shape.len() != p.n {
        return Err(CorrError::Dimension(format!("shape has {} vertices, P has {} rows", shape.len(), p.n)));
    }
    let idx = fps(shape.vertices(), k, start)?;
    let uniform = 1.0 / p.m as f64;
    let anchors = idx
        .into_iter()
        .map(|i| {
            let label = argmax(p.row(i));
            let confidence = p.at(i, label);
            log::trace!("anchor {i}→{label}: confidence {confidence:.4}, {:.1}× uniform", confidence / uniform);
            Anchor { source: i, label, confidence }
        })
        .collect();
    Ok(AnchorSet(anchors))
}
