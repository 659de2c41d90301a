use serde::{Deserialize, Serialize};

use super::fit::{fit_gpd_values, fit_normal_values, sample_skewness, MIN_FIT_SAMPLES};
use super::DsvSamples;
use crate::error::{Error, Result};

/// Right-skew a pool needs before it can count as power-law.
pub const SKEWNESS_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    PowerLaw,
    NonPowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pareto_ks: f64,
    pub normal_ks: f64,
    pub skewness: f64,
    pub pareto_shape: f64,
    pub sample_count: usize,
}

/// Power-law / non-power-law label of a pool.
///
/// `score = min(normal_ks - pareto_ks, skewness - 1)`; the class is
/// `PowerLaw` exactly when both margins are positive, i.e. `score > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionClass {
    pub class: Class,
    pub score: f64,
    pub diagnostics: Diagnostics,
}

impl DistributionClass {
    pub fn from_diagnostics(diagnostics: Diagnostics) -> Self {
        let ks_margin = diagnostics.normal_ks - diagnostics.pareto_ks;
        let skew_margin = diagnostics.skewness - SKEWNESS_THRESHOLD;
        let class = if ks_margin > 0.0 && skew_margin > 0.0 {
            Class::PowerLaw
        } else {
            Class::NonPowerLaw
        };
        Self {
            class,
            score: ks_margin.min(skew_margin),
            diagnostics,
        }
    }

    pub fn is_power_law(&self) -> bool {
        self.class == Class::PowerLaw
    }
}

/// Classifies a pool (zeros are ignored).
///
/// Power-law iff the generalized-Pareto fit is closer in KS distance than
/// the normal fit and the moment skewness exceeds [`SKEWNESS_THRESHOLD`].
pub fn classify_distribution(samples: &DsvSamples) -> Result<DistributionClass> {
    let values = samples.nonzero();
    if values.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_FIT_SAMPLES,
            found: values.len(),
        });
    }
    let pareto = fit_gpd_values(&values)?;
    let normal = fit_normal_values(&values)?;
    Ok(DistributionClass::from_diagnostics(Diagnostics {
        pareto_ks: pareto.ks_statistic,
        normal_ks: normal.ks_statistic,
        skewness: sample_skewness(&values),
        pareto_shape: pareto.shape_alpha,
        sample_count: values.len(),
    }))
}

/// Classification of a pool, or why it could not be classified (too few
/// non-zero distances, constant pool).
#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    Classified(DistributionClass),
    Unclassifiable(String),
}

impl PairOutcome {
    /// Unclassifiable pools are not power-law.
    pub fn is_power_law(&self) -> bool {
        matches!(self, PairOutcome::Classified(c) if c.is_power_law())
    }

    pub fn class(&self) -> Option<&DistributionClass> {
        match self {
            PairOutcome::Classified(c) => Some(c),
            PairOutcome::Unclassifiable(_) => None,
        }
    }
}

/// Like [`classify_distribution`], but degenerate and undersized pools become
/// [`PairOutcome::Unclassifiable`] instead of errors.
pub fn classify_outcome(samples: &DsvSamples) -> Result<PairOutcome> {
    match classify_distribution(samples) {
        Ok(c) => Ok(PairOutcome::Classified(c)),
        Err(e @ (Error::TooFewSamples { .. } | Error::DegenerateSamples)) => {
            Ok(PairOutcome::Unclassifiable(e.to_string()))
        }
        Err(e) => Err(e),
    }
}
