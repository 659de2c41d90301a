use serde::{Deserialize, Serialize};

use super::DsvSamples;
use crate::error::{Error, Result};

/// Probability-density histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
}

impl HistogramSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count,density\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{:e},{:e},{},{:e}\n",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.densities[i]
            ));
        }
        out
    }
}

/// Counts per angular sector after mapping distances onto degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarSeries {
    /// `sectors + 1` edges in degrees, from 0 to 360.
    pub edges_deg: Vec<f64>,
    pub counts: Vec<usize>,
}

impl PolarSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_start_deg,angle_end_deg,count\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.edges_deg[i],
                self.edges_deg[i + 1],
                self.counts[i]
            ));
        }
        out
    }
}

fn bin_index(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    (((x - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize
}

/// Equal-width histogram over `[min, max]`, normalized to unit area.
///
/// When the spread is below floating-point resolution the range becomes a
/// unit interval with the data at the centre of one bin.
pub fn histogram(samples: &DsvSamples, bins: usize) -> Result<HistogramSeries> {
    if bins < 2 {
        return Err(Error::InvalidConfig("histogram needs at least 2 bins".into()));
    }
    let values = &samples.values;
    if values.is_empty() {
        return Err(Error::TooFewSamples {
            required: 1,
            found: 0,
        });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max - min <= 1e-12 * max.abs().max(1.0) {
        // Unit range with the data in the middle of bin `bins / 2`.
        let mid = 0.5 * (min + max);
        let lo = mid - ((bins / 2) as f64 + 0.5) / bins as f64;
        (lo, lo + 1.0)
    } else {
        (min, max)
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in values {
        counts[bin_index(x, lo, width, bins)] += 1;
    }
    let n = values.len() as f64;
    let densities = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect();
    Ok(HistogramSeries {
        edges,
        counts,
        densities,
    })
}

/// Min–max maps the distances onto `[0°, 360°]` and counts them per
/// sector; the maximum lands in the last sector.
pub fn polar_histogram(samples: &DsvSamples, sectors: usize) -> Result<PolarSeries> {
    if sectors < 4 {
        return Err(Error::InvalidConfig("polar histogram needs at least 4 sectors".into()));
    }
    let values = &samples.values;
    if values.is_empty() {
        return Err(Error::TooFewSamples {
            required: 1,
            found: 0,
        });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(Error::DegenerateSamples);
    }
    let width = 360.0 / sectors as f64;
    let mut counts = vec![0usize; sectors];
    for &x in values {
        let angle = (x - min) / (max - min) * 360.0;
        counts[bin_index(angle, 0.0, width, sectors)] += 1;
    }
    let edges_deg = (0..=sectors).map(|i| i as f64 * width).collect();
    Ok(PolarSeries { edges_deg, counts })
}
