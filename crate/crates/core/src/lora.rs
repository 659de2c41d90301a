//! LoRA A/B initialization shaped by a characteristic table.
//!
//! Every group of the table gets one synthetic template per factor: a
//! lora_A template as long as the widest `in_dim` in the group and a lora_B
//! template of length `r`. Each row of every adapted tensor is a generator
//! row against its group's template (truncated to the kind's width), so rows
//! within a group, across all layers and member kinds, stay close to one
//! shared direction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterize::CharacteristicTable;
use crate::digest::{json_digest, tensor_digest};
use crate::dsv::{classify_outcome, cosine_distance, Class, DistributionClass, DsvSamples, PairOutcome, PoolSource};
use crate::error::{Error, Result};
use crate::generator::{generate_row, template_from, CountLaw, GeneratorConfig};
use crate::projection::ProjectionKind;
use crate::rng::stream;
use crate::tensors::{emit_tensors, read_tensors, StoreDtype, TensorMap};

/// lora_A rows per (layer, kind) that enter a group's validation pool.
pub const VALIDATION_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

impl Role {
    fn index(self) -> u64 {
        match self {
            Role::A => 0,
            Role::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Both factors generated.
    #[default]
    #[serde(rename = "paper")]
    PaperFaithful,
    /// lora_A generated, lora_B all zeros.
    #[serde(rename = "zero-b")]
    ZeroB,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper-faithful" => Ok(Mode::PaperFaithful),
            "zero-b" | "zerob" => Ok(Mode::ZeroB),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::PaperFaithful => "paper",
            Mode::ZeroB => "zero-b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub out_dim: usize,
    pub in_dim: usize,
}

/// Model to be adapted. Only kinds present in `dims` are adapted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraTargetSpec {
    pub model_id: String,
    pub num_layers: usize,
    pub dims: BTreeMap<ProjectionKind, Dims>,
    pub rank: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mode: Mode,
}

fn default_alpha() -> f64 {
    16.0
}

impl LoraTargetSpec {
    /// Llama-style decoder dims: `hidden`, `kv` (key/value width) and
    /// `intermediate`.
    pub fn llama_like(
        model_id: &str,
        num_layers: usize,
        hidden: usize,
        kv: usize,
        intermediate: usize,
        rank: usize,
    ) -> Self {
        use ProjectionKind::*;
        let d = |out_dim, in_dim| Dims { out_dim, in_dim };
        let dims = BTreeMap::from([
            (Q, d(hidden, hidden)),
            (K, d(kv, hidden)),
            (V, d(kv, hidden)),
            (O, d(hidden, hidden)),
            (Gate, d(intermediate, hidden)),
            (Up, d(intermediate, hidden)),
            (Down, d(hidden, intermediate)),
        ]);
        Self {
            model_id: model_id.to_string(),
            num_layers,
            dims,
            rank,
            alpha: rank as f64,
            mode: Mode::PaperFaithful,
        }
    }

    /// LLaMA-3.2-1B projection dims.
    pub fn llama_3_2_1b(rank: usize) -> Self {
        Self::llama_like("llama-3.2-1b", 16, 2048, 512, 8192, rank)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        if self.num_layers == 0 || self.dims.is_empty() {
            return Err(Error::InvalidConfig("nothing to adapt".into()));
        }
        if let Some((k, _)) = self.dims.iter().find(|(_, d)| d.out_dim == 0 || d.in_dim == 0) {
            return Err(Error::ShapeError(format!("{k} has a zero dimension")));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Expected shape of one factor.
    pub fn shape(&self, kind: ProjectionKind, role: Role) -> Option<(usize, usize)> {
        let d = self.dims.get(&kind)?;
        Some(match role {
            Role::A => (self.rank, d.in_dim),
            Role::B => (d.out_dim, self.rank),
        })
    }
}

/// Adapter tensor name in the common PEFT layout.
pub fn tensor_name(layer: usize, kind: ProjectionKind, role: Role) -> String {
    let role = match role {
        Role::A => "A",
        Role::B => "B",
    };
    format!(
        "base_model.model.model.layers.{layer}.{}.{}_proj.lora_{role}.weight",
        kind.block(),
        kind.name()
    )
}

/// Inverse of [`tensor_name`].
pub fn parse_tensor_name(name: &str) -> Option<(usize, ProjectionKind, Role)> {
    let rest = name.strip_prefix("base_model.model.model.layers.")?;
    let (layer, rest) = rest.split_once('.')?;
    let layer = layer.parse().ok()?;
    let (block, rest) = rest.split_once('.')?;
    let (proj, rest) = rest.split_once('.')?;
    let kind: ProjectionKind = proj.parse().ok()?;
    if kind.block() != block || proj != format!("{}_proj", kind.name()) {
        return None;
    }
    let role = match rest {
        "lora_A.weight" => Role::A,
        "lora_B.weight" => Role::B,
        _ => return None,
    };
    Some((layer, kind, role))
}

/// Provenance stored next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraManifest {
    pub target: LoraTargetSpec,
    pub reference_model_id: String,
    pub table_digest: String,
    pub generator_digest: String,
    pub seed: u64,
    pub mode: Mode,
    pub rank: usize,
    pub alpha: f64,
    /// Module names in PEFT's `target_modules` form, e.g. `q_proj`.
    pub target_modules: Vec<String>,
    pub tensor_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraInitBundle {
    pub tensors: TensorMap,
    pub manifest: LoraManifest,
    /// Scaled template each row of a (kind, role) tensor was built from.
    /// Empty for bundles read back from disk.
    pub templates: BTreeMap<(ProjectionKind, Role), Vec<f64>>,
}

/// Externally supplied templates, keyed by (group reference, role). A
/// supplied template replaces the generated one and must have the
/// generated template's length.
pub type TemplateOverrides = BTreeMap<(ProjectionKind, Role), Vec<f64>>;

pub fn reshape_lora_init(
    target: &LoraTargetSpec,
    table: &CharacteristicTable,
    gen_cfg: &GeneratorConfig,
    seed: u64,
) -> Result<LoraInitBundle> {
    reshape_lora_init_with(target, table, gen_cfg, seed, &TemplateOverrides::new())
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Factor that brings the template to standard deviation `target_std`.
fn scale_for(template: &[f64], target_std: f64) -> f64 {
    let s = population_std(template);
    if s > 0.0 && s.is_finite() {
        target_std / s
    } else {
        let rms = (template.iter().map(|v| v * v).sum::<f64>() / template.len() as f64).sqrt();
        if rms > 0.0 {
            target_std / rms
        } else {
            1.0
        }
    }
}

fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

struct Job {
    layer: usize,
    kind: ProjectionKind,
    role: Role,
    rows: usize,
    len: usize,
    template: Vec<f64>,
    scale: f64,
}

pub fn reshape_lora_init_with(
    target: &LoraTargetSpec,
    table: &CharacteristicTable,
    gen_cfg: &GeneratorConfig,
    seed: u64,
    overrides: &TemplateOverrides,
) -> Result<LoraInitBundle> {
    target.validate()?;
    gen_cfg.validate()?;
    table.validate()?;
    let missing: Vec<String> = target
        .dims
        .keys()
        .filter(|k| table.group_of(**k).is_none())
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteTable(missing.join(", ")));
    }
    let r = target.rank;

    // Per-group templates, truncated and scaled per kind.
    let mut templates = BTreeMap::new();
    for (g_idx, group) in table.groups.iter().enumerate() {
        let kinds: Vec<ProjectionKind> = group.kinds().filter(|k| target.dims.contains_key(k)).collect();
        if kinds.is_empty() {
            continue;
        }
        let max_in = kinds.iter().map(|k| target.dims[k].in_dim).max().unwrap_or(0);
        let mut roles = vec![(Role::A, max_in)];
        if target.mode == Mode::PaperFaithful {
            roles.push((Role::B, r));
        }
        for (role, len) in roles {
            let template = match overrides.get(&(group.reference, role)) {
                Some(t) if t.len() == len => t.clone(),
                Some(t) => return Err(Error::LengthMismatch(t.len(), len)),
                None => {
                    let cfg = GeneratorConfig { n: len, ..gen_cfg.clone() };
                    let mut rng = stream(seed, "lora-template", &[g_idx as u64, role.index()]);
                    template_from(&cfg, &mut rng)?
                }
            };
            for &k in &kinds {
                let width = match role {
                    Role::A => target.dims[&k].in_dim,
                    Role::B => r,
                };
                let truncated = &template[..width];
                let target_std = 1.0 / (width as f64).sqrt();
                let scale = scale_for(truncated, target_std);
                templates.insert((k, role), (truncated.to_vec(), scale));
            }
        }
    }

    let mut jobs = Vec::new();
    for layer in 0..target.num_layers {
        for (&kind, d) in &target.dims {
            for role in [Role::A, Role::B] {
                let (rows, len) = match role {
                    Role::A => (r, d.in_dim),
                    Role::B => (d.out_dim, r),
                };
                let (template, scale) = templates
                    .get(&(kind, role))
                    .cloned()
                    .unwrap_or_else(|| (Vec::new(), 0.0));
                jobs.push(Job { layer, kind, role, rows, len, template, scale });
            }
        }
    }

    let tensors = jobs
        .par_iter()
        .map(|job| {
            let name = tensor_name(job.layer, job.kind, job.role);
            if job.template.is_empty() {
                return Ok((name, DMatrix::zeros(job.rows, job.len)));
            }
            let cfg = GeneratorConfig {
                n: job.len,
                m: job.rows,
                count_law: count_law_for(gen_cfg, job.len),
                seed,
                ..gen_cfg.clone()
            };
            let mut flat = Vec::with_capacity(job.rows * job.len);
            for row in 0..job.rows {
                let mut rng = stream(
                    seed,
                    "lora-row",
                    &[job.layer as u64, job.kind.index() as u64, job.role.index(), row as u64],
                );
                let values = generate_row(&job.template, &cfg, &mut rng)?;
                flat.extend(values.into_iter().map(|v| to_f32(v * job.scale)));
            }
            Ok((name, DMatrix::from_row_slice(job.rows, job.len, &flat)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect::<TensorMap>();

    let scaled_templates = templates
        .into_iter()
        .map(|(key, (t, scale))| (key, t.into_iter().map(|v| to_f32(v * scale)).collect()))
        .collect();

    let target = target.clone();
    let manifest = LoraManifest {
        reference_model_id: table.model_id.clone(),
        table_digest: json_digest(table)?,
        generator_digest: json_digest(gen_cfg)?,
        seed,
        mode: target.mode,
        rank: r,
        alpha: target.alpha,
        target_modules: target.dims.keys().map(|k| format!("{}_proj", k.name())).collect(),
        tensor_digest: tensor_digest(&tensors),
        target,
    };
    Ok(LoraInitBundle {
        tensors,
        manifest,
        templates: scaled_templates,
    })
}

/// Sidecar manifest path: the adapter path with a `.json` extension.
pub fn manifest_path(adapter: &Path) -> PathBuf {
    adapter.with_extension("json")
}

/// Writes the adapter as f32 safetensors plus the JSON sidecar.
pub fn export_adapter(bundle: &LoraInitBundle, path: &Path) -> Result<()> {
    export_adapter_with_metadata(bundle, path, &BTreeMap::new())
}

/// [`export_adapter`] with extra safetensors header metadata.
pub fn export_adapter_with_metadata(
    bundle: &LoraInitBundle,
    path: &Path,
    extra: &BTreeMap<String, String>,
) -> Result<()> {
    if bundle.tensors.is_empty() {
        return Err(Error::IncompleteTable("bundle has no tensors".into()));
    }
    let mut metadata = extra.clone();
    metadata.insert("format".into(), "pt".into());
    metadata.insert("tensor_digest".into(), bundle.manifest.tensor_digest.clone());
    emit_tensors(
        bundle.tensors.iter().map(|(k, v)| (k.as_str(), v)),
        path,
        StoreDtype::F32,
        &metadata,
    )?;
    let sidecar = manifest_path(path);
    let text = serde_json::to_string_pretty(&bundle.manifest)?;
    std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))
}

/// Reads an adapter written by [`export_adapter`].
pub fn load_adapter(path: &Path) -> Result<LoraInitBundle> {
    let tensors = read_tensors(path)?;
    let sidecar = manifest_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let manifest: LoraManifest = serde_json::from_str(&text)?;
    Ok(LoraInitBundle {
        tensors,
        manifest,
        templates: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeAudit {
    pub tensor: String,
    pub expected: Option<(usize, usize)>,
    pub found: Option<(usize, usize)>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub reference: ProjectionKind,
    pub members: Vec<ProjectionKind>,
    pub sample_count: usize,
    pub class: Option<DistributionClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unclassifiable: Option<String>,
    pub expected: Class,
    pub as_expected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub target_model_id: String,
    pub reference_model_id: String,
    pub shape_audit: Vec<ShapeAudit>,
    pub shapes_ok: bool,
    pub tensor_digest: String,
    pub digest_matches_manifest: bool,
    /// `Some(true)` when every lora_B is zero in zero-B mode.
    pub zero_b_ok: Option<bool>,
    pub groups: Vec<GroupReport>,
    pub all_ok: bool,
}

/// Shape audit, digest check and per-group classification.
///
/// A group's pool takes the first [`VALIDATION_ROWS`] lora_A rows of every
/// adapted (layer, member kind), truncated to the group's narrowest
/// `in_dim`, and pairs rows from different layers only. Misshapen tensors
/// and all-zero rows are left out of the pool.
pub fn validate_bundle(bundle: &LoraInitBundle, table: &CharacteristicTable) -> Result<ValidationReport> {
    let spec = &bundle.manifest.target;
    let mut audit = Vec::new();
    let mut expected_names = BTreeMap::new();
    for layer in 0..spec.num_layers {
        for &kind in spec.dims.keys() {
            for role in [Role::A, Role::B] {
                expected_names.insert(tensor_name(layer, kind, role), spec.shape(kind, role));
            }
        }
    }
    for (name, expected) in &expected_names {
        let found = bundle.tensors.get(name).map(|t| t.shape());
        audit.push(ShapeAudit {
            tensor: name.clone(),
            expected: *expected,
            found,
            ok: found.is_some() && found == *expected,
        });
    }
    for (name, t) in &bundle.tensors {
        if !expected_names.contains_key(name) {
            audit.push(ShapeAudit {
                tensor: name.clone(),
                expected: None,
                found: Some(t.shape()),
                ok: false,
            });
        }
    }
    let shapes_ok = audit.iter().all(|a| a.ok);
    let digest = tensor_digest(&bundle.tensors);
    let digest_matches_manifest = digest == bundle.manifest.tensor_digest;
    let zero_b_ok = (bundle.manifest.mode == Mode::ZeroB).then(|| {
        bundle
            .tensors
            .iter()
            .filter(|(n, _)| matches!(parse_tensor_name(n), Some((_, _, Role::B))))
            .all(|(_, t)| t.iter().all(|v| *v == 0.0))
    });

    let mut groups = Vec::new();
    for group in &table.groups {
        let kinds: Vec<ProjectionKind> = group.kinds().filter(|k| spec.dims.contains_key(k)).collect();
        if kinds.is_empty() {
            continue;
        }
        let width = kinds.iter().map(|k| spec.dims[k].in_dim).min().unwrap_or(0);
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for layer in 0..spec.num_layers {
            for &k in &kinds {
                let name = tensor_name(layer, k, Role::A);
                let Some(t) = bundle.tensors.get(&name) else {
                    continue;
                };
                if Some(t.shape()) != spec.shape(k, Role::A) {
                    continue;
                }
                for i in 0..t.nrows().min(VALIDATION_ROWS) {
                    let row: Vec<f64> = t.row(i).iter().take(width).copied().collect();
                    if row.iter().any(|v| *v != 0.0) {
                        rows.push((layer, row));
                    }
                }
            }
        }
        let pairs: Vec<(usize, usize)> = (0..rows.len())
            .flat_map(|i| (i + 1..rows.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| rows[i].0 != rows[j].0)
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| cosine_distance(&rows[i].1, &rows[j].1))
            .collect::<Result<Vec<_>>>()?;
        let pool = DsvSamples::new(values, PoolSource::Pair(group.reference, group.reference), spec.rank)?
            .without_zeros();
        let sample_count = pool.len();
        let outcome = classify_outcome(&pool)?;
        let expected = Class::PowerLaw;
        let as_expected = outcome.is_power_law() == (expected == Class::PowerLaw);
        let (class, unclassifiable) = match outcome {
            PairOutcome::Classified(c) => (Some(c), None),
            PairOutcome::Unclassifiable(reason) => (None, Some(reason)),
        };
        groups.push(GroupReport {
            reference: group.reference,
            members: group.members.iter().copied().filter(|k| spec.dims.contains_key(k)).collect(),
            sample_count,
            class,
            unclassifiable,
            expected,
            as_expected,
        });
    }

    let all_ok = shapes_ok
        && digest_matches_manifest
        && zero_b_ok.unwrap_or(true)
        && groups.iter().all(|g| g.as_expected);
    Ok(ValidationReport {
        target_model_id: spec.model_id.clone(),
        reference_model_id: bundle.manifest.reference_model_id.clone(),
        shape_audit: audit,
        shapes_ok,
        tensor_digest: digest,
        digest_matches_manifest,
        zero_b_ok,
        groups,
        all_ok,
    })
}

/// Count law used for rows of length `len` when the config is written for
/// rows of length `gen_cfg.n`.
pub fn count_law_for(gen_cfg: &GeneratorConfig, len: usize) -> CountLaw {
    gen_cfg.count_law.rescaled(len as f64 / gen_cfg.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterize::Group;
    use ProjectionKind::*;

    fn table() -> CharacteristicTable {
        CharacteristicTable {
            model_id: "ref".into(),
            rank: 16,
            groups: vec![
                Group { reference: Q, members: vec![K, O, Gate] },
                Group { reference: Up, members: vec![V, Down] },
            ],
            diagnostics: BTreeMap::new(),
            unclassified: BTreeMap::new(),
        }
    }

    fn small_target(mode: Mode) -> LoraTargetSpec {
        let mut t = LoraTargetSpec::llama_like("tiny", 3, 32, 8, 64, 4);
        t.mode = mode;
        t
    }

    fn gen() -> GeneratorConfig {
        GeneratorConfig::new(64, 64, CountLaw::pareto_default(64), 0)
    }

    #[test]
    fn names_round_trip() {
        for kind in ProjectionKind::ALL {
            for role in [Role::A, Role::B] {
                let name = tensor_name(5, kind, role);
                assert_eq!(parse_tensor_name(&name), Some((5, kind, role)));
            }
        }
        assert_eq!(
            tensor_name(0, Gate, Role::A),
            "base_model.model.model.layers.0.mlp.gate_proj.lora_A.weight"
        );
        assert_eq!(parse_tensor_name("base_model.model.model.layers.0.mlp.q_proj.lora_A.weight"), None);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("paper".parse::<Mode>().unwrap(), Mode::PaperFaithful);
        assert_eq!("zero-b".parse::<Mode>().unwrap(), Mode::ZeroB);
        assert!("zero".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::ZeroB).unwrap(), "\"zero-b\"");
    }

    #[test]
    fn shapes_and_counts() {
        let target = small_target(Mode::PaperFaithful);
        let b = reshape_lora_init(&target, &table(), &gen(), 1).unwrap();
        assert_eq!(b.tensors.len(), 3 * 7 * 2);
        assert_eq!(b.tensors[&tensor_name(2, K, Role::A)].shape(), (4, 32));
        assert_eq!(b.tensors[&tensor_name(2, K, Role::B)].shape(), (8, 4));
        assert_eq!(b.tensors[&tensor_name(0, Down, Role::A)].shape(), (4, 64));
        let report = validate_bundle(&b, &table()).unwrap();
        assert!(report.shapes_ok && report.digest_matches_manifest);
        assert_eq!(report.zero_b_ok, None);
    }

    #[test]
    fn zero_b_mode() {
        let b = reshape_lora_init(&small_target(Mode::ZeroB), &table(), &gen(), 1).unwrap();
        let report = validate_bundle(&b, &table()).unwrap();
        assert_eq!(report.zero_b_ok, Some(true));
    }

    #[test]
    fn members_share_truncated_template() {
        let b = reshape_lora_init(&small_target(Mode::PaperFaithful), &table(), &gen(), 1).unwrap();
        let up = &b.templates[&(Up, Role::A)];
        let down = &b.templates[&(Down, Role::A)];
        assert_eq!(up.len(), 32);
        assert_eq!(down.len(), 64);
        // Same direction on the shared prefix.
        assert!(cosine_distance(up, &down[..32]).unwrap() < 1e-6);
    }

    #[test]
    fn incomplete_table_rejected() {
        let mut t = table();
        t.groups[1].members.pop();
        let err = reshape_lora_init(&small_target(Mode::PaperFaithful), &t, &gen(), 1);
        assert!(err.is_err());
    }

    #[test]
    fn tampered_shape_is_reported() {
        let mut b = reshape_lora_init(&small_target(Mode::PaperFaithful), &table(), &gen(), 1).unwrap();
        b.tensors.insert(tensor_name(1, V, Role::A), DMatrix::zeros(3, 32));
        let report = validate_bundle(&b, &table()).unwrap();
        assert!(!report.shapes_ok);
        assert!(!report.all_ok);
        let bad: Vec<_> = report.shape_audit.iter().filter(|a| !a.ok).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].found, Some((3, 32)));
    }

    #[test]
    fn target_spec_validation() {
        let mut t = small_target(Mode::PaperFaithful);
        t.rank = 0;
        assert!(t.validate().is_err());
        let mut t = small_target(Mode::PaperFaithful);
        t.dims.insert(Q, Dims { out_dim: 0, in_dim: 3 });
        assert!(matches!(t.validate(), Err(Error::ShapeError(_))));
    }
}
