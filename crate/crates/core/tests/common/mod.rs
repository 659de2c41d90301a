#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal, Pareto, StandardNormal};
use serde_json::Value;
use svshape::rng::stream;
use svshape::spectral::Msv;
use svshape::ProjectionKind;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, "test-matrix", &[rows as u64, cols as u64]);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// GPD(xi, sigma) quantiles at (i - 0.5) / n.
pub fn gpd_quantiles(xi: f64, sigma: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| {
            let u = (i as f64 - 0.5) / n as f64;
            sigma * ((1.0 - u).powf(-xi) - 1.0) / xi
        })
        .collect()
}

/// Seeded GPD(xi, sigma) draws by inversion.
pub fn gpd_draws(xi: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream(seed, "gpd-draws", &[]);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            sigma * ((1.0 - u).powf(-xi) - 1.0) / xi
        })
        .collect()
}

/// MSVs built as template-plus-sparse-perturbation per intended group.
///
/// Each group gets a decreasing template `(i+1)^-beta` with 10% jitter.
/// Every row adds `N(0, rms(T)^2)` increments at a Lomax-distributed number
/// of positions (median `r / 20`), then takes absolute values sorted
/// descending, so rows look like singular-value spectra.
pub fn grouped_msvs(groups: &[Vec<ProjectionKind>], layers: usize, r: usize, seed: u64) -> Vec<Msv> {
    const BETAS: [f64; 7] = [0.25, 1.25, 2.25, 0.75, 1.75, 2.75, 3.25];
    let shape = 1.78;
    let scale = (r as f64 / 20.0) / (2f64.powf(1.0 / shape) - 1.0);
    let lomax = Pareto::new(1.0, shape).unwrap();
    let mut out = Vec::new();
    for (g, kinds) in groups.iter().enumerate() {
        let mut rng = stream(seed, "fixture-template", &[g as u64]);
        let mut template: Vec<f64> = (0..r)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                ((i + 1) as f64).powf(-BETAS[g]) * (1.0 + 0.1 * z)
            })
            .map(f64::abs)
            .collect();
        sort_desc(&mut template);
        let rms = (template.iter().map(|v| v * v).sum::<f64>() / r as f64).sqrt();
        let inc = Normal::new(0.0, rms).unwrap();
        for &kind in kinds {
            let mut rows = Vec::with_capacity(layers);
            for layer in 0..layers {
                let mut rng = stream(seed, "fixture-row", &[kind.index() as u64, layer as u64]);
                let p = (scale * (lomax.sample(&mut rng) - 1.0)).round().clamp(0.0, r as f64) as usize;
                let mut row = template.clone();
                for i in sample(&mut rng, r, p) {
                    row[i] += inc.sample(&mut rng);
                }
                let mut row: Vec<f64> = row.into_iter().map(f64::abs).collect();
                sort_desc(&mut row);
                rows.push(row);
            }
            out.push(Msv::from_values(kind, rows).unwrap());
        }
    }
    out.sort_by_key(|m| m.kind);
    out
}

fn sort_desc(v: &mut [f64]) {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
}

/// Compiles a schema shipped in `crates/core/schemas`.
pub fn schema(name: &str) -> jsonschema::Validator {
    let path = format!("{}/schemas/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&value).unwrap()
}

pub fn schema_errors(name: &str, instance: &Value) -> Vec<String> {
    schema(name)
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect()
}
