//! Top-`r` singular values per projection and their per-kind stacks (MSVs).

use nalgebra::{DMatrix, SVD};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelWeights;
use crate::error::{Error, Result};
use crate::projection::{ProjectionKind, ProjectionMatrix};
use crate::rng;

/// Rank used when none is given.
pub const DEFAULT_RANK: usize = 16;

/// Matrices whose smaller side exceeds this use subspace iteration.
pub const DENSE_MAX_MIN_DIM: usize = 1024;

/// The top-`r` singular values of one projection, non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvVector {
    pub layer_index: usize,
    pub kind: ProjectionKind,
    pub values: Vec<f64>,
}

impl SvVector {
    pub fn new(layer_index: usize, kind: ProjectionKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("singular-value vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "singular values must be finite and non-negative".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("singular values must be non-increasing".into()));
        }
        Ok(Self {
            layer_index,
            kind,
            values,
        })
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }
}

/// Stack of one kind's singular-value vectors, ordered by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Msv {
    pub kind: ProjectionKind,
    pub rank: usize,
    pub rows: Vec<SvVector>,
}

impl Msv {
    pub fn new(kind: ProjectionKind, rows: Vec<SvVector>) -> Result<Self> {
        let rank = rows
            .first()
            .map(SvVector::rank)
            .ok_or_else(|| Error::InvalidConfig(format!("MSV for {kind} has no rows")))?;
        for (i, row) in rows.iter().enumerate() {
            if row.kind != kind || row.layer_index != i {
                return Err(Error::InvalidConfig(format!(
                    "MSV for {kind}: row {i} is layer {} of {}",
                    row.layer_index, row.kind
                )));
            }
            if row.rank() != rank {
                return Err(Error::RankMismatch(rank, row.rank()));
            }
        }
        Ok(Self { kind, rank, rows })
    }

    /// Builds from raw vectors, one per layer.
    pub fn from_values(kind: ProjectionKind, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(layer, v)| SvVector::new(layer, kind, v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, rows)
    }

    pub fn num_layers(&self) -> usize {
        self.rows.len()
    }

    /// L × r matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.rank, |i, j| self.rows[i].values[j])
    }

    /// CSV with a `layer` column followed by `s1..sr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer");
        for j in 1..=self.rank {
            out.push_str(&format!(",s{j}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.layer_index.to_string());
            for v in &row.values {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdMethod {
    /// Dense for small matrices, subspace iteration above [`DENSE_MAX_MIN_DIM`].
    #[default]
    Auto,
    Dense,
    Randomized,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralOptions {
    pub method: SvdMethod,
    /// Clamp `r` to the smallest dimension instead of failing.
    pub clamp_rank: bool,
}

/// Top `r` singular values of `x`, non-increasing.
pub fn top_r_singular_values(x: &ProjectionMatrix, r: usize) -> Result<SvVector> {
    top_r_singular_values_with(x, r, &SpectralOptions::default())
}

pub fn top_r_singular_values_with(
    x: &ProjectionMatrix,
    r: usize,
    opts: &SpectralOptions,
) -> Result<SvVector> {
    let r = effective_rank(r, x.rows().min(x.cols()), opts)?;
    let values = top_singular_values(x.values(), r, opts.method)?;
    SvVector::new(x.layer_index, x.kind, values)
}

fn effective_rank(r: usize, min_dim: usize, opts: &SpectralOptions) -> Result<usize> {
    if r == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if r > min_dim {
        if opts.clamp_rank {
            log::warn!("rank {r} clamped to {min_dim}");
            return Ok(min_dim);
        }
        return Err(Error::RankTooLarge { rank: r, max: min_dim });
    }
    Ok(r)
}

/// Top `r` singular values of a plain matrix.
pub fn top_singular_values(x: &DMatrix<f64>, r: usize, method: SvdMethod) -> Result<Vec<f64>> {
    let min_dim = x.nrows().min(x.ncols());
    if r == 0 || r > min_dim {
        return Err(Error::RankTooLarge { rank: r, max: min_dim });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let use_dense = match method {
        SvdMethod::Dense => true,
        SvdMethod::Randomized => false,
        SvdMethod::Auto => min_dim <= DENSE_MAX_MIN_DIM,
    };
    if !use_dense {
        if let Some(values) = subspace_iteration(x, r) {
            return Ok(values);
        }
        log::warn!(
            "subspace iteration did not converge on a {}x{} matrix; using dense SVD",
            x.nrows(),
            x.ncols()
        );
    }
    Ok(dense_singular_values(x, r))
}

fn dense_singular_values(x: &DMatrix<f64>, r: usize) -> Vec<f64> {
    let svd = SVD::new(x.clone(), false, false);
    sorted_prefix(svd.singular_values.iter().copied(), r)
}

fn sorted_prefix(values: impl Iterator<Item = f64>, r: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.map(|s| s.max(0.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.truncate(r);
    v
}

const SUBSPACE_MAX_ITERS: usize = 400;
const SUBSPACE_TOL: f64 = 1e-12;

/// Block subspace iteration on XᵀX with Rayleigh–Ritz extraction.
///
/// Returns `None` when the Ritz values have not settled within the
/// iteration budget. The convergence test extrapolates the geometric
/// decay of successive changes, so slow (ρ close to 1) cases keep going.
fn subspace_iteration(x: &DMatrix<f64>, r: usize) -> Option<Vec<f64>> {
    let (rows, cols) = x.shape();
    let min_dim = rows.min(cols);
    let block = (2 * r + 8).min(min_dim);
    if block >= min_dim {
        return None;
    }
    let mut stream = rng::stream(0, "subspace-iteration", &[rows as u64, cols as u64, r as u64]);
    let omega = DMatrix::<f64>::from_fn(cols, block, |_, _| StandardNormal.sample(&mut stream));
    let mut q = orthonormalize(x * omega);
    let xt = x.transpose();

    let mut prev: Option<Vec<f64>> = None;
    let mut prev_change = f64::INFINITY;
    for _ in 0..SUBSPACE_MAX_ITERS {
        let w = &xt * &q;
        let ritz = SVD::new(w.clone(), false, false);
        let current = sorted_prefix(ritz.singular_values.iter().copied(), r);
        if let Some(p) = &prev {
            let change = current
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            let ratio = change / prev_change;
            let remaining = if ratio < 1.0 {
                change * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if change < SUBSPACE_TOL * 1e-2 || (change < 1e-9 && remaining < SUBSPACE_TOL) {
                return Some(current);
            }
            prev_change = change;
        }
        prev = Some(current);
        let z = orthonormalize(w);
        q = orthonormalize(x * z);
    }
    None
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// One kind's MSV: row `i` holds layer `i`'s top-`r` singular values.
pub fn build_msv(model: &ModelWeights, kind: ProjectionKind, r: usize) -> Result<Msv> {
    build_msv_with(model, kind, r, &SpectralOptions::default())
}

pub fn build_msv_with(
    model: &ModelWeights,
    kind: ProjectionKind,
    r: usize,
    opts: &SpectralOptions,
) -> Result<Msv> {
    let (rows, cols) = model.shape(kind);
    let r = effective_rank(r, rows.min(cols), opts)?;
    let vectors = (0..model.num_layers)
        .into_par_iter()
        .map(|layer| {
            let m = model.matrix(layer, kind)?;
            let values = top_singular_values(m.values(), r, opts.method)?;
            SvVector::new(layer, kind, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Msv::new(kind, vectors)
}

/// All seven MSVs in canonical kind order.
///
/// With `clamp_rank` every kind is clamped to the smallest dimension over all
/// kinds, so the vectors stay comparable.
pub fn build_all_msvs(model: &ModelWeights, r: usize) -> Result<Vec<Msv>> {
    build_all_msvs_with(model, r, &SpectralOptions::default())
}

pub fn build_all_msvs_with(
    model: &ModelWeights,
    r: usize,
    opts: &SpectralOptions,
) -> Result<Vec<Msv>> {
    let min_dim = model
        .shapes()
        .values()
        .map(|(a, b)| *a.min(b))
        .min()
        .unwrap_or(0);
    let r = effective_rank(r, min_dim, opts)?;
    ProjectionKind::ALL
        .into_iter()
        .map(|kind| build_msv_with(model, kind, r, opts))
        .collect()
}
