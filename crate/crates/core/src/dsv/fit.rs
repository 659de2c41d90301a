//! Generalized-Pareto and normal fits with Kolmogorov–Smirnov distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::DsvSamples;
use crate::error::{Error, Result};

/// Smallest pool that is fitted.
pub const MIN_FIT_SAMPLES: usize = 50;

/// Generalized-Pareto fit.
///
/// `shape_alpha` is the GPD shape ξ (reported as the tail "alpha"), the
/// location is pinned at the sample minimum and the scale is the MLE given
/// that location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoFit {
    pub shape_alpha: f64,
    pub location: f64,
    pub scale: f64,
    pub ks_statistic: f64,
    pub sample_count: usize,
}

impl ParetoFit {
    pub fn cdf(&self, x: f64) -> f64 {
        gpd_cdf(x, self.shape_alpha, self.location, self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub stddev: f64,
    pub ks_statistic: f64,
    pub sample_count: usize,
}

/// GPD cumulative distribution function.
pub fn gpd_cdf(x: f64, shape: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    if z <= 0.0 {
        return 0.0;
    }
    if shape == 0.0 {
        return -(-z).exp_m1();
    }
    let t = shape * z;
    if t <= -1.0 {
        // Beyond the upper end point of a bounded (ξ < 0) tail.
        return 1.0;
    }
    (-(-t.ln_1p() / shape).exp_m1()).clamp(0.0, 1.0)
}

/// One-sample KS distance between `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d.clamp(0.0, 1.0)
}

/// Asymptotic KS critical value at significance `alpha`, with the usual
/// finite-sample correction `c / (√n + 0.12 + 0.11/√n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let rn = (n as f64).sqrt();
    c / (rn + 0.12 + 0.11 / rn)
}

/// Moment skewness `m3 / m2^1.5` (no bias correction).
pub fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

fn checked_pool(samples: &DsvSamples) -> Result<Vec<f64>> {
    let values = samples.nonzero();
    if values.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_FIT_SAMPLES,
            found: values.len(),
        });
    }
    Ok(values)
}

/// Maximum-likelihood generalized-Pareto fit (zeros are ignored).
pub fn fit_pareto(samples: &DsvSamples) -> Result<ParetoFit> {
    let values = checked_pool(samples)?;
    fit_gpd_values(&values)
}

pub(crate) fn fit_gpd_values(values: &[f64]) -> Result<ParetoFit> {
    let location = values.iter().copied().fold(f64::INFINITY, f64::min);
    let excess: Vec<f64> = values.iter().map(|v| v - location).collect();
    let (shape, scale) = gpd_mle_excess(&excess).ok_or(Error::DegenerateSamples)?;
    let ks = ks_statistic(values, |x| gpd_cdf(x, shape, location, scale));
    Ok(ParetoFit {
        shape_alpha: shape,
        location,
        scale,
        ks_statistic: ks,
        sample_count: values.len(),
    })
}

/// Profile log-likelihood in θ = ξ/σ.
///
/// For fixed θ the shape MLE is ξ(θ) = mean ln(1 + θx) and the profile is
/// `-n ln(ξ/θ) - nξ - n`; θ = 0 is the exponential limit.
struct Profile<'a> {
    excess: &'a [f64],
    mean: f64,
}

impl Profile<'_> {
    fn shape(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        self.excess.iter().map(|x| (theta * x).ln_1p()).sum::<f64>() / self.excess.len() as f64
    }

    fn loglik(&self, theta: f64) -> f64 {
        let n = self.excess.len() as f64;
        if theta == 0.0 {
            return -n * self.mean.ln() - n;
        }
        let xi = self.shape(theta);
        let ratio = xi / theta;
        if !(ratio > 0.0) || !ratio.is_finite() {
            return f64::NEG_INFINITY;
        }
        -n * ratio.ln() - n * xi - n
    }

    fn params(&self, theta: f64) -> (f64, f64) {
        if theta == 0.0 {
            (0.0, self.mean)
        } else {
            let xi = self.shape(theta);
            (xi, xi / theta)
        }
    }
}

/// (shape, scale) maximizing the GPD likelihood of non-negative excesses.
///
/// The search is restricted to ξ ≥ -1, where the likelihood is bounded.
/// Likelihood ties go to the smaller shape (the grid is scanned in
/// increasing θ, and ξ(θ) is increasing).
fn gpd_mle_excess(excess: &[f64]) -> Option<(f64, f64)> {
    let n = excess.len() as f64;
    let max = excess.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let mean = excess.iter().sum::<f64>() / n;
    let profile = Profile { excess, mean };

    // ξ(θ) is increasing and tends to -∞ as θ → -1/max, so ξ = -1 is crossed
    // exactly once on (-1/max, 0).
    let mut lo = -1.0 / max;
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profile.shape(mid) < -1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta_min = hi;

    let mut grid: Vec<f64> = Vec::with_capacity(1200);
    const NEG: usize = 400;
    for i in 0..NEG {
        // From θ_min towards 0 geometrically.
        let t = i as f64 / (NEG - 1) as f64;
        grid.push(theta_min * 10f64.powf(-10.0 * t));
    }
    grid.push(0.0);
    const POS: usize = 800;
    for i in 0..POS {
        let u = -10.0 + 20.0 * i as f64 / (POS - 1) as f64;
        grid.push(10f64.powf(u) / mean);
    }

    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, &theta) in grid.iter().enumerate() {
        let ll = profile.loglik(theta);
        if ll > best_ll {
            best_ll = ll;
            best = i;
        }
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let theta = golden_max(|t| profile.loglik(t), a, b, grid[best], best_ll);
    let (xi, sigma) = profile.params(theta);
    (sigma > 0.0 && sigma.is_finite() && xi.is_finite()).then_some((xi, sigma))
}

/// Golden-section refinement of a bracketed maximum. Returns the incumbent
/// when refinement does not improve on it.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, incumbent: f64, f_inc: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
    if fx > f_inc {
        x
    } else {
        incumbent
    }
}

/// Sample mean and standard deviation (n − 1) with the KS distance to the
/// fitted normal. Zeros are ignored, as for [`fit_pareto`].
pub fn fit_normal(samples: &DsvSamples) -> Result<NormalFit> {
    let values = checked_pool(samples)?;
    fit_normal_values(&values)
}

pub(crate) fn fit_normal_values(values: &[f64]) -> Result<NormalFit> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let stddev = var.sqrt();
    if !(stddev > 0.0) {
        return Err(Error::DegenerateSamples);
    }
    let normal = Normal::new(mean, stddev).map_err(|_| Error::DegenerateSamples)?;
    let ks = ks_statistic(values, |x| normal.cdf(x));
    Ok(NormalFit {
        mean,
        stddev,
        ks_statistic: ks,
        sample_count: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsv::PoolSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool(values: Vec<f64>) -> DsvSamples {
        DsvSamples::new(values, PoolSource::AllPairs, 16).unwrap()
    }

    /// Inverse-CDF draws, independent of the fitting code.
    fn gpd_draws(n: usize, shape: f64, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                scale * ((1.0 - u).powf(-shape) - 1.0) / shape
            })
            .collect()
    }

    #[test]
    fn recovers_known_shape() {
        let fit = fit_pareto(&pool(gpd_draws(20_000, 0.5, 2.0, 11))).unwrap();
        assert!((fit.shape_alpha - 0.5).abs() < 0.05, "{fit:?}");
        assert!((fit.scale - 2.0).abs() < 0.2, "{fit:?}");
        assert!(fit.ks_statistic < ks_critical_value(20_000, 0.05));
    }

    #[test]
    fn recovers_bounded_tail() {
        let fit = fit_pareto(&pool(gpd_draws(20_000, -0.3, 1.0, 5))).unwrap();
        assert!((fit.shape_alpha + 0.3).abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn exponential_data_has_shape_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..20_000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln() * 0.7)
            .collect();
        let fit = fit_pareto(&pool(v)).unwrap();
        assert!(fit.shape_alpha.abs() < 0.03, "{fit:?}");
        assert!((fit.scale - 0.7).abs() < 0.03);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        assert!(matches!(
            fit_pareto(&pool(vec![0.25; 100])),
            Err(Error::DegenerateSamples)
        ));
        assert!(matches!(
            fit_normal(&pool(vec![0.25; 100])),
            Err(Error::DegenerateSamples)
        ));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_pareto(&pool(vec![0.1; 49])),
            Err(Error::TooFewSamples { required: 50, found: 49 })
        ));
        // Zeros do not count.
        let mut v = vec![0.0; 60];
        v.extend([0.1, 0.2]);
        assert!(matches!(fit_normal(&pool(v)), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn cdf_edges() {
        assert_eq!(gpd_cdf(-1.0, 0.5, 0.0, 1.0), 0.0);
        assert!((gpd_cdf(1.0, 0.0, 0.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        // ξ = -0.5, σ = 1: upper end point at 2.
        assert_eq!(gpd_cdf(2.5, -0.5, 0.0, 1.0), 1.0);
        // ξ = 1, σ = 1: F(1) = 1 - 1/2.
        assert!((gpd_cdf(1.0, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_of_uniform_grid() {
        // Points at (i - 0.5)/n against U(0,1) give D = 1/(2n).
        let n = 10;
        let v: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let d = ks_statistic(&v, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn critical_value_matches_table() {
        // Large-n 5% value is 1.358/√n.
        let c = ks_critical_value(10_000, 0.05) * 100.0;
        assert!((c - 1.358).abs() < 0.002, "{c}");
    }

    #[test]
    fn skewness_of_symmetric_and_skewed_sets() {
        assert_eq!(sample_skewness(&[1.0, 2.0, 3.0]), 0.0);
        // {0, 0, 3}: mean 1, m2 = 2, m3 = 2 → 2 / 2^1.5.
        let s = sample_skewness(&[0.0, 0.0, 3.0]);
        assert!((s - 2.0 / 2f64.powf(1.5)).abs() < 1e-12);
    }
}
