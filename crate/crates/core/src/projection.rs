use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven adaptable projections of a decoder layer.
///
/// Declaration order is the canonical order used everywhere (MSV lists,
/// grouping preference, report layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Q,
    K,
    V,
    O,
    Gate,
    Up,
    Down,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 7] = [
        ProjectionKind::Q,
        ProjectionKind::K,
        ProjectionKind::V,
        ProjectionKind::O,
        ProjectionKind::Gate,
        ProjectionKind::Up,
        ProjectionKind::Down,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Q => "q",
            ProjectionKind::K => "k",
            ProjectionKind::V => "v",
            ProjectionKind::O => "o",
            ProjectionKind::Gate => "gate",
            ProjectionKind::Up => "up",
            ProjectionKind::Down => "down",
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Parent module in the usual decoder layout (`self_attn` or `mlp`).
    pub fn block(self) -> &'static str {
        match self {
            ProjectionKind::Q | ProjectionKind::K | ProjectionKind::V | ProjectionKind::O => {
                "self_attn"
            }
            ProjectionKind::Gate | ProjectionKind::Up | ProjectionKind::Down => "mlp",
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    /// Accepts `q`, `Q`, `q_proj`, `gate-proj` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let stem = lower
            .strip_suffix("_proj")
            .or_else(|| lower.strip_suffix("-proj"))
            .unwrap_or(&lower);
        ProjectionKind::ALL
            .into_iter()
            .find(|k| k.name() == stem)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown projection kind {s:?}")))
    }
}

/// One projection weight of one layer, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub layer_index: usize,
    pub kind: ProjectionKind,
    values: DMatrix<f64>,
}

impl ProjectionMatrix {
    pub fn new(layer_index: usize, kind: ProjectionKind, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidTensor(format!(
                "layer {layer_index} {kind} projection is empty"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            layer_index,
            kind,
            values,
        })
    }

    /// Builds from row-major data, the storage order of checkpoint files.
    pub fn from_row_major(
        layer_index: usize,
        kind: ProjectionKind,
        rows: usize,
        cols: usize,
        data: &[f64],
    ) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidTensor(format!(
                "expected {rows}x{cols} values, got {}",
                data.len()
            )));
        }
        Self::new(layer_index, kind, DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_stable() {
        let names: Vec<_> = ProjectionKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(names, ["q", "k", "v", "o", "gate", "up", "down"]);
        for (i, k) in ProjectionKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
        }
    }

    #[test]
    fn parses_common_spellings() {
        assert_eq!("Q".parse::<ProjectionKind>().unwrap(), ProjectionKind::Q);
        assert_eq!("gate_proj".parse::<ProjectionKind>().unwrap(), ProjectionKind::Gate);
        assert_eq!("down-proj".parse::<ProjectionKind>().unwrap(), ProjectionKind::Down);
        assert!("qkv".parse::<ProjectionKind>().is_err());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(
            ProjectionMatrix::new(0, ProjectionKind::Q, m),
            Err(Error::NonFinite)
        ));
        let empty = DMatrix::<f64>::zeros(0, 3);
        assert!(ProjectionMatrix::new(0, ProjectionKind::Q, empty).is_err());
    }

    #[test]
    fn row_major_layout() {
        let m = ProjectionMatrix::from_row_major(0, ProjectionKind::K, 2, 3, &[1., 2., 3., 4., 5., 6.])
            .unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.values()[(0, 2)], 3.0);
        assert_eq!(m.values()[(1, 0)], 4.0);
    }
}
