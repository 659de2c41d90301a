//! Distribution generator.
//!
//! A Gaussian template row is copied `m` times; each copy gets `p` Gaussian
//! increments added at `p` distinct random positions, with `p` drawn from a
//! count law. Heavy-tailed counts leave most rows nearly collinear with the
//! template, which makes the row-wise cosine-distance pool power-law; counts
//! concentrated around a typical value do not.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsv::{classify_outcome, cosine_distance, Class, DsvSamples, PairOutcome, PoolSource};
use crate::error::{Error, Result};
use crate::projection::ProjectionKind;
use crate::rng::{stream, StreamRng};

/// Default shape of the Pareto count law.
pub const DEFAULT_PARETO_SHAPE: f64 = 1.78;
pub const DEFAULT_TEMPLATE_SIGMA: f64 = 1.0;
pub const DEFAULT_INCREMENT_SIGMA: f64 = 0.5;

/// Rule for the number of perturbed positions in a row.
///
/// `ParetoCount` is the Lomax (Pareto type II) law with survival function
/// `(1 + x / scale)^-shape`, so small counts are the most likely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CountLaw {
    Constant { count: u64 },
    #[serde(rename = "gaussian")]
    GaussianCount { mu: f64, sigma: f64 },
    #[serde(rename = "pareto")]
    ParetoCount { shape: f64, scale: f64 },
}

impl CountLaw {
    /// Pareto law with the default shape and median count `n / 20`.
    pub fn pareto_default(n: usize) -> Self {
        let shape = DEFAULT_PARETO_SHAPE;
        let median = n as f64 / 20.0;
        CountLaw::ParetoCount {
            shape,
            scale: median / (2f64.powf(1.0 / shape) - 1.0),
        }
    }

    /// Gaussian law centred on `n / 4` with sigma `n / 16`.
    pub fn gaussian_default(n: usize) -> Self {
        CountLaw::GaussianCount {
            mu: n as f64 / 4.0,
            sigma: n as f64 / 16.0,
        }
    }

    pub fn constant_default(n: usize) -> Self {
        CountLaw::Constant {
            count: (n / 4) as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CountLaw::Constant { .. } => true,
            CountLaw::GaussianCount { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            CountLaw::ParetoCount { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid count law {self:?}")))
        }
    }

    /// CDF of the continuous law before rounding and clamping.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            CountLaw::Constant { count } => {
                if x >= count as f64 {
                    1.0
                } else {
                    0.0
                }
            }
            CountLaw::GaussianCount { mu, sigma } => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::Normal::new(mu, sigma)
                    .map(|d| d.cdf(x))
                    .unwrap_or(f64::NAN)
            }
            CountLaw::ParetoCount { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (1.0 + x / scale).powf(-shape)
                }
            }
        }
    }

    /// A continuous draw before rounding and clamping.
    pub fn sample_raw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            CountLaw::Constant { count } => count as f64,
            CountLaw::GaussianCount { mu, sigma } => Normal::new(mu, sigma)
                .expect("validated law")
                .sample(rng),
            CountLaw::ParetoCount { shape, scale } => {
                let x: f64 = Pareto::new(1.0, shape).expect("validated law").sample(rng);
                scale * (x - 1.0)
            }
        }
    }

    /// Same law on rows `factor` times as long.
    pub fn rescaled(&self, factor: f64) -> Self {
        match *self {
            CountLaw::Constant { count } => CountLaw::Constant {
                count: (count as f64 * factor).round() as u64,
            },
            CountLaw::GaussianCount { mu, sigma } => CountLaw::GaussianCount {
                mu: mu * factor,
                sigma: sigma * factor,
            },
            CountLaw::ParetoCount { shape, scale } => CountLaw::ParetoCount {
                shape,
                scale: scale * factor,
            },
        }
    }

    /// Class a generated pair is expected to receive.
    pub fn expected_class(&self) -> Class {
        match self {
            CountLaw::ParetoCount { .. } => Class::PowerLaw,
            _ => Class::NonPowerLaw,
        }
    }
}

/// How template entries are correlated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemplateProcess {
    #[default]
    Independent,
    /// Gaussian process over positions with kernel
    /// `sigma^2 exp(-(i - j)^2 / (2 length_scale^2))`.
    SquaredExponential { length_scale: f64 },
}

fn is_default_process(p: &TemplateProcess) -> bool {
    *p == TemplateProcess::Independent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub template_mu: f64,
    #[serde(default = "default_template_sigma")]
    pub template_sigma: f64,
    #[serde(default)]
    pub increment_mu: f64,
    #[serde(default = "default_increment_sigma")]
    pub increment_sigma: f64,
    pub count_law: CountLaw,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default_process")]
    pub template_process: TemplateProcess,
}

fn default_template_sigma() -> f64 {
    DEFAULT_TEMPLATE_SIGMA
}

fn default_increment_sigma() -> f64 {
    DEFAULT_INCREMENT_SIGMA
}

impl GeneratorConfig {
    /// Standard-normal template, `N(0, 0.5^2)` increments.
    pub fn new(n: usize, m: usize, count_law: CountLaw, seed: u64) -> Self {
        Self {
            n,
            m,
            template_mu: 0.0,
            template_sigma: DEFAULT_TEMPLATE_SIGMA,
            increment_mu: 0.0,
            increment_sigma: DEFAULT_INCREMENT_SIGMA,
            count_law,
            seed,
            template_process: TemplateProcess::Independent,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("n and m must be positive".into()));
        }
        let finite = [
            self.template_mu,
            self.template_sigma,
            self.increment_mu,
            self.increment_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.template_sigma <= 0.0 || self.increment_sigma <= 0.0 {
            return Err(Error::InvalidConfig(
                "means must be finite and sigmas positive".into(),
            ));
        }
        if let TemplateProcess::SquaredExponential { length_scale } = self.template_process {
            if !(length_scale.is_finite() && length_scale > 0.0) {
                return Err(Error::InvalidConfig("length_scale must be positive".into()));
            }
        }
        self.count_law.validate()
    }
}

/// Template of length `cfg.n` from the stream `(seed, "template")`.
pub fn generate_template(cfg: &GeneratorConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    template_from(cfg, &mut stream(cfg.seed, "template", &[]))
}

/// Template drawn from an explicit stream.
pub fn template_from(cfg: &GeneratorConfig, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z: Vec<f64> = (0..cfg.n).map(|_| normal.sample(rng)).collect();
    let values = match cfg.template_process {
        TemplateProcess::Independent => z
            .into_iter()
            .map(|v| cfg.template_mu + cfg.template_sigma * v)
            .collect(),
        TemplateProcess::SquaredExponential { length_scale } => {
            let n = cfg.n;
            let kernel = DMatrix::from_fn(n, n, |i, j| {
                let d = i as f64 - j as f64;
                (-d * d / (2.0 * length_scale * length_scale)).exp() + if i == j { 1e-8 } else { 0.0 }
            });
            let chol = kernel
                .cholesky()
                .ok_or_else(|| Error::InvalidConfig("kernel is not positive definite".into()))?;
            let draw = chol.l() * DVector::from_vec(z);
            draw.iter()
                .map(|v| cfg.template_mu + cfg.template_sigma * v)
                .collect()
        }
    };
    Ok(values)
}

/// Number of positions to perturb: rounded to nearest, clamped to `[0, n]`.
pub fn draw_increment_count(law: &CountLaw, n: usize, rng: &mut StreamRng) -> usize {
    let raw = law.sample_raw(rng).round();
    if raw.is_nan() || raw <= 0.0 {
        0
    } else if raw >= n as f64 {
        n
    } else {
        raw as usize
    }
}

/// One perturbed copy of `template`.
pub fn generate_row(template: &[f64], cfg: &GeneratorConfig, rng: &mut StreamRng) -> Result<Vec<f64>> {
    generate_row_counted(template, cfg, rng).map(|(row, _)| row)
}

/// [`generate_row`] that also returns the increment count `p`.
pub fn generate_row_counted(
    template: &[f64],
    cfg: &GeneratorConfig,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, usize)> {
    if template.len() != cfg.n {
        return Err(Error::LengthMismatch(template.len(), cfg.n));
    }
    let n = cfg.n;
    let p = draw_increment_count(&cfg.count_law, n, rng);
    let increments = Normal::new(cfg.increment_mu, cfg.increment_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut row = template.to_vec();
    for i in sample(rng, n, p) {
        row[i] += increments.sample(rng);
    }
    Ok((row, p))
}

/// A generated matrix with the template it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMatrix {
    pub template: Vec<f64>,
    pub values: DMatrix<f64>,
}

/// `m x n` matrix; row `i` uses the stream `(seed, "row", [0, i])`.
pub fn generate_matrix(cfg: &GeneratorConfig) -> Result<GeneratedMatrix> {
    let template = generate_template(cfg)?;
    let values = rows_against(&template, cfg, 0)?;
    Ok(GeneratedMatrix { template, values })
}

/// Rows of matrix `matrix_id` generated against a given template.
pub fn rows_against(template: &[f64], cfg: &GeneratorConfig, matrix_id: u64) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let rows = (0..cfg.m)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, "row", &[matrix_id, i as u64]);
            generate_row(template, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(cfg.m, cfg.n, &flat))
}

/// Two matrices sharing a template, their cross distances and its class.
#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub template: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// All `m * m` (row of A, row of B) distances, zeros included.
    pub pool: DsvSamples,
    pub outcome: PairOutcome,
}

impl GeneratedPair {
    pub fn class(&self) -> Option<Class> {
        self.outcome.class().map(|c| c.class)
    }

    /// Whether the outcome matches the count law's expected class. An
    /// unclassifiable pool counts as non-power-law.
    pub fn matches_expectation(&self, law: &CountLaw) -> bool {
        self.outcome.is_power_law() == (law.expected_class() == Class::PowerLaw)
    }
}

/// Matrices A (id 0) and B (id 1) against one template, classified by the
/// pool of all A-row by B-row distances.
pub fn generate_pair_and_validate(cfg: &GeneratorConfig) -> Result<GeneratedPair> {
    let template = generate_template(cfg)?;
    let a = rows_against(&template, cfg, 0)?;
    let b = rows_against(&template, cfg, 1)?;
    let values = cross_row_distances(&a, &b)?;
    let pool = DsvSamples::new(
        values,
        PoolSource::Pair(ProjectionKind::Q, ProjectionKind::Q),
        cfg.n,
    )?;
    let outcome = classify_outcome(&pool)?;
    Ok(GeneratedPair {
        template,
        a,
        b,
        pool,
        outcome,
    })
}

/// Cosine distances between every row of `a` and every row of `b`,
/// row-major in `a`.
pub fn cross_row_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let rows_a = row_vectors(a);
    let rows_b = row_vectors(b);
    let chunks = rows_a
        .par_iter()
        .map(|x| rows_b.iter().map(|y| cosine_distance(x, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

pub(crate) fn row_vectors(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Row-major CSV without header.
pub fn matrix_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
