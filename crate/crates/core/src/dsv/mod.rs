//! Cosine-distance pools between singular-value vectors and their
//! statistics.
//!
//! A distance here is `1 - cos(x, y)`, so identical directions give 0 and
//! vectors with non-negative entries stay within `[0, 1]`.

mod classify;
mod fit;
mod histogram;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::ProjectionKind;
use crate::spectral::Msv;

pub use classify::{
    classify_distribution, classify_outcome, Class, Diagnostics, DistributionClass, PairOutcome,
    SKEWNESS_THRESHOLD,
};
pub use fit::{
    fit_normal, fit_pareto, gpd_cdf, ks_critical_value, ks_statistic, sample_skewness, NormalFit,
    ParetoFit, MIN_FIT_SAMPLES,
};
pub use histogram::{histogram, polar_histogram, HistogramSeries, PolarSeries};

/// `1 - x·y / (‖x‖‖y‖)`.
///
/// Exactly 0 for `x == y` and bitwise symmetric in its arguments. The result
/// is clamped into `[0, 2]` to absorb rounding.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::ZeroNorm);
    }
    let mut dot = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // sqrt(xx * yy) rather than sqrt(xx) * sqrt(yy): for x == y this is
    // exactly xx, which makes the self-distance exactly zero.
    let sim = dot / (xx * yy).sqrt();
    Ok((1.0 - sim).clamp(0.0, 2.0))
}

/// Where a pool of distances came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    Pair(ProjectionKind, ProjectionKind),
    AllPairs,
}

impl std::fmt::Display for PoolSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoolSource::Pair(a, b) => write!(f, "{a}-{b}"),
            PoolSource::AllPairs => f.write_str("all-pairs"),
        }
    }
}

/// A pool of cosine distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsvSamples {
    pub values: Vec<f64>,
    pub source: PoolSource,
    pub rank: usize,
    pub zeros_removed: bool,
}

impl DsvSamples {
    pub fn new(values: Vec<f64>, source: PoolSource, rank: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "distances must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            values,
            source,
            rank,
            zeros_removed: false,
        })
    }

    /// Drops exact zeros (self-distances and identical vectors).
    pub fn without_zeros(mut self) -> Self {
        self.values.retain(|v| *v != 0.0);
        self.zeros_removed = true;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values with zeros filtered, regardless of the flag.
    pub(crate) fn nonzero(&self) -> Vec<f64> {
        if self.zeros_removed {
            self.values.clone()
        } else {
            self.values.iter().copied().filter(|v| *v != 0.0).collect()
        }
    }
}

/// Distances between the rows of two MSVs.
///
/// For two different kinds this is every (row of `a`, row of `b`) pair,
/// row-major in `a`. For the same kind only the strict upper triangle is
/// kept, so self-distances never appear.
pub fn pairwise_dsv(a: &Msv, b: &Msv) -> Result<DsvSamples> {
    if a.rank != b.rank {
        return Err(Error::RankMismatch(a.rank, b.rank));
    }
    let mut values = Vec::new();
    if a.kind == b.kind {
        let rows = &a.rows;
        values.reserve(rows.len() * rows.len().saturating_sub(1) / 2);
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                values.push(cosine_distance(&rows[i].values, &rows[j].values)?);
            }
        }
    } else {
        values.reserve(a.rows.len() * b.rows.len());
        for x in &a.rows {
            for y in &b.rows {
                values.push(cosine_distance(&x.values, &y.values)?);
            }
        }
    }
    DsvSamples::new(values, PoolSource::Pair(a.kind, b.kind), a.rank)
}

/// Distances over all unordered pairs of the stacked SV vectors of every
/// MSV, with zeros removed.
///
/// Vectors are enumerated kind-major (canonical kind order, then layer) and
/// the pool holds pair `(i, j)` for `i < j` in that enumeration.
pub fn all_pairs_dsv(msvs: &[Msv]) -> Result<DsvSamples> {
    let rank = msvs
        .first()
        .map(|m| m.rank)
        .ok_or_else(|| Error::InvalidConfig("no MSVs given".into()))?;
    if let Some(m) = msvs.iter().find(|m| m.rank != rank) {
        return Err(Error::RankMismatch(rank, m.rank));
    }
    let vectors: Vec<&[f64]> = msvs
        .iter()
        .flat_map(|m| m.rows.iter().map(|r| r.values.as_slice()))
        .collect();
    let mut values = Vec::with_capacity(vectors.len() * vectors.len().saturating_sub(1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            values.push(cosine_distance(vectors[i], vectors[j])?);
        }
    }
    Ok(DsvSamples::new(values, PoolSource::AllPairs, rank)?.without_zeros())
}
