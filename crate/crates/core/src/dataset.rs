//! Embeddings, per-sample metadata and dataset-level validation.
//!
//! Rows of an [`EmbeddingSet`] are expected to be L2-normalised before any
//! clustering; [`EmbeddingSet::normalized`] performs the ingestion step and
//! [`validate_dataset`] reports every violated invariant at once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row norms after ingestion normalisation.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Coarse camera-relative vehicle orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viewpoint {
    Front,
    FrontSide,
    Side,
    RearSide,
    Rear,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 5] = [
        Viewpoint::Front,
        Viewpoint::FrontSide,
        Viewpoint::Side,
        Viewpoint::RearSide,
        Viewpoint::Rear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Viewpoint::Front => "front",
            Viewpoint::FrontSide => "front_side",
            Viewpoint::Side => "side",
            Viewpoint::RearSide => "rear_side",
            Viewpoint::Rear => "rear",
        }
    }

    /// Position in [`Viewpoint::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Viewpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownViewpoint(pub String);

impl fmt::Display for UnknownViewpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown viewpoint {:?}", self.0)
    }
}

impl std::error::Error for UnknownViewpoint {}

impl FromStr for Viewpoint {
    type Err = UnknownViewpoint;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Viewpoint::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| UnknownViewpoint(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Metadata attached to one embedding row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub index: usize,
    pub camera: String,
    /// Required for train samples, optional elsewhere.
    pub viewpoint: Option<Viewpoint>,
    pub gt_id: Option<String>,
    pub split: Split,
}

impl SampleMeta {
    pub fn train(index: usize, camera: impl Into<String>, viewpoint: Viewpoint) -> Self {
        Self {
            index,
            camera: camera.into(),
            viewpoint: Some(viewpoint),
            gt_id: None,
            split: Split::Train,
        }
    }

    pub fn with_gt(mut self, id: impl Into<String>) -> Self {
        self.gt_id = Some(id.into());
        self
    }
}

/// Dense row-major matrix of `n` feature vectors of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingSet {
    /// Wraps a row-major buffer. Only the shape is checked here; content
    /// invariants are the business of [`validate_dataset`].
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Shape("feature dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::Shape(
                "embedding set must hold at least one row".into(),
            ));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "buffer of {} values is not a multiple of dimension {d}",
                data.len()
            )));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::Shape(format!(
                    "row {i} has {} components, expected {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(d, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Returns a copy with every row scaled to unit L2 norm. Rows with zero or
    /// non-finite norm are copied unchanged.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.n {
            normalize_in_place(out.row_mut(i));
        }
        out
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: indices.len(),
            d: self.d,
            data,
        }
    }
}

/// Scales `v` to unit norm; returns `false` (leaving `v` untouched) when the
/// norm is zero or not finite.
pub fn normalize_in_place(v: &mut [f64]) -> bool {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One violated dataset invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    CountMismatch { embeddings: usize, metas: usize },
    IndexOutOfRange { index: usize, n: usize },
    DuplicateIndex { index: usize },
    MissingViewpoint { index: usize },
    NonFinite { row: usize, col: usize },
    NotUnitNorm { row: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::CountMismatch { embeddings, metas } => {
                write!(f, "{embeddings} embeddings but {metas} metadata rows")
            }
            ValidationIssue::IndexOutOfRange { index, n } => {
                write!(f, "index {index} outside 0..{n}")
            }
            ValidationIssue::DuplicateIndex { index } => write!(f, "duplicate index {index}"),
            ValidationIssue::MissingViewpoint { index } => {
                write!(f, "train sample {index} has no viewpoint")
            }
            ValidationIssue::NonFinite { row, col } => {
                write!(f, "non-finite value at row {row}, column {col}")
            }
            ValidationIssue::NotUnitNorm { row } => write!(f, "row {row} is not unit-norm"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.issues))
        }
    }
}

/// Lists every violated invariant of the (embeddings, metadata) pair.
pub fn validate_dataset(embeddings: &EmbeddingSet, meta: &[SampleMeta]) -> ValidationReport {
    let mut issues = Vec::new();
    let n = embeddings.len();
    if meta.len() != n {
        issues.push(ValidationIssue::CountMismatch {
            embeddings: n,
            metas: meta.len(),
        });
    }

    let mut seen = vec![false; n];
    for m in meta {
        if m.index >= n {
            issues.push(ValidationIssue::IndexOutOfRange { index: m.index, n });
        } else if std::mem::replace(&mut seen[m.index], true) {
            issues.push(ValidationIssue::DuplicateIndex { index: m.index });
        }
        if m.split == Split::Train && m.viewpoint.is_none() {
            issues.push(ValidationIssue::MissingViewpoint { index: m.index });
        }
    }

    for (row, values) in embeddings.rows().enumerate() {
        if let Some(col) = values.iter().position(|x| !x.is_finite()) {
            issues.push(ValidationIssue::NonFinite { row, col });
        } else if (l2_norm(values) - 1.0).abs() > UNIT_NORM_TOLERANCE {
            issues.push(ValidationIssue::NotUnitNorm { row });
        }
    }

    ValidationReport { issues }
}

/// Groups train samples by viewpoint. Lists are ascending by index and
/// viewpoints without samples are absent from the map.
pub fn partition_by_viewpoint(meta: &[SampleMeta]) -> BTreeMap<Viewpoint, Vec<usize>> {
    let mut sorted: Vec<&SampleMeta> = meta.iter().filter(|m| m.split == Split::Train).collect();
    sorted.sort_by_key(|m| m.index);
    let mut out: BTreeMap<Viewpoint, Vec<usize>> = BTreeMap::new();
    for m in sorted {
        if let Some(v) = m.viewpoint {
            out.entry(v).or_default().push(m.index);
        }
    }
    out
}

/// A validated dataset: normalised embeddings plus metadata sorted by index.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub embeddings: EmbeddingSet,
    pub meta: Vec<SampleMeta>,
}

impl Dataset {
    /// Normalises the embeddings, validates, and sorts metadata by index.
    pub fn new(embeddings: EmbeddingSet, mut meta: Vec<SampleMeta>) -> Result<Self> {
        let embeddings = embeddings.normalized();
        validate_dataset(&embeddings, &meta).into_result()?;
        meta.sort_by_key(|m| m.index);
        Ok(Self { embeddings, meta })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.meta
            .iter()
            .filter(|m| m.split == split)
            .map(|m| m.index)
            .collect()
    }
}
