//! Locating projection matrices inside safetensors checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{ProjectionKind, ProjectionMatrix};
use crate::tensors::TensorFile;

/// Maps tensor names to (layer, kind).
///
/// Each kind has one or more templates containing a single `{layer}`
/// placeholder. A tensor name matches when it ends with the template (with
/// the placeholder bound to a decimal layer index) and the template starts
/// at the beginning of the name or right after a `.`, so any model prefix
/// (`model.`, `transformer.`, ...) is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSchema {
    pub kinds: BTreeMap<ProjectionKind, Vec<String>>,
}

impl Default for NameSchema {
    fn default() -> Self {
        let kinds = ProjectionKind::ALL
            .into_iter()
            .map(|k| {
                (
                    k,
                    vec![format!("layers.{{layer}}.{}.{}_proj.weight", k.block(), k.name())],
                )
            })
            .collect();
        Self { kinds }
    }
}

impl NameSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: NameSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for (kind, templates) in &self.kinds {
            if templates.is_empty() {
                return Err(Error::InvalidConfig(format!("no name template for {kind}")));
            }
            for t in templates {
                if t.matches("{layer}").count() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "template {t:?} must contain exactly one {{layer}}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves a tensor name to (layer, kind), if it is a projection.
    pub fn resolve(&self, name: &str) -> Option<(usize, ProjectionKind)> {
        self.kinds.iter().find_map(|(kind, templates)| {
            templates
                .iter()
                .find_map(|t| match_template(t, name))
                .map(|layer| (layer, *kind))
        })
    }
}

fn match_template(template: &str, name: &str) -> Option<usize> {
    let (head, tail) = template.split_once("{layer}")?;
    let rest = name.strip_suffix(tail)?;
    let digits_start = rest
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)?;
    let (before, digits) = rest.split_at(digits_start);
    let prefix = before.strip_suffix(head)?;
    if !(prefix.is_empty() || prefix.ends_with('.')) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone)]
enum Source {
    Memory(Arc<ProjectionMatrix>),
    File { file: Arc<TensorFile>, name: String },
}

/// All projection matrices of a model, `num_layers` × 7.
///
/// File-backed weights stay memory-mapped and are decoded (and widened to
/// `f64`) per access by [`ModelWeights::matrix`]; the structure itself is
/// immutable and can be shared between threads.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub model_id: String,
    pub num_layers: usize,
    shapes: BTreeMap<ProjectionKind, (usize, usize)>,
    sources: BTreeMap<(usize, ProjectionKind), Source>,
}

impl ModelWeights {
    /// Assembles a model from in-memory matrices (fixtures, tests).
    pub fn from_matrices(
        model_id: impl Into<String>,
        matrices: impl IntoIterator<Item = ProjectionMatrix>,
    ) -> Result<Self> {
        let mut found = BTreeMap::new();
        for m in matrices {
            let key = (m.layer_index, m.kind);
            let shape = m.shape();
            if found
                .insert(key, (shape, Source::Memory(Arc::new(m))))
                .is_some()
            {
                return Err(Error::DuplicateName(format!("layer {} {}", key.0, key.1)));
            }
        }
        Self::assemble(model_id.into(), found)
    }

    fn assemble(
        model_id: String,
        found: BTreeMap<(usize, ProjectionKind), ((usize, usize), Source)>,
    ) -> Result<Self> {
        let num_layers = found.keys().map(|(l, _)| l + 1).max().unwrap_or(0);
        if num_layers == 0 {
            return Err(Error::MissingProjection {
                layer: 0,
                kind: ProjectionKind::Q,
            });
        }
        let mut shapes = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for layer in 0..num_layers {
            for kind in ProjectionKind::ALL {
                let (shape, source) = found
                    .get(&(layer, kind))
                    .cloned()
                    .ok_or(Error::MissingProjection { layer, kind })?;
                let expected = *shapes.entry(kind).or_insert(shape);
                if expected != shape {
                    return Err(Error::ShapeMismatch {
                        kind,
                        layer,
                        expected,
                        found: shape,
                    });
                }
                sources.insert((layer, kind), source);
            }
        }
        Ok(Self {
            model_id,
            num_layers,
            shapes,
            sources,
        })
    }

    /// (rows, cols) shared by every layer's matrix of `kind`.
    pub fn shape(&self, kind: ProjectionKind) -> (usize, usize) {
        self.shapes[&kind]
    }

    pub fn shapes(&self) -> &BTreeMap<ProjectionKind, (usize, usize)> {
        &self.shapes
    }

    /// Materializes one projection matrix.
    pub fn matrix(&self, layer: usize, kind: ProjectionKind) -> Result<ProjectionMatrix> {
        match self.sources.get(&(layer, kind)) {
            None => Err(Error::MissingProjection { layer, kind }),
            Some(Source::Memory(m)) => Ok(m.as_ref().clone()),
            Some(Source::File { file, name }) => {
                ProjectionMatrix::new(layer, kind, file.matrix(name)?)
            }
        }
    }

    /// Where a file-backed matrix comes from, for reports.
    pub fn tensor_name(&self, layer: usize, kind: ProjectionKind) -> Option<&str> {
        match self.sources.get(&(layer, kind))? {
            Source::File { name, .. } => Some(name),
            Source::Memory(_) => None,
        }
    }
}

/// Loads a checkpoint: a single `.safetensors` file or a directory whose
/// `*.safetensors` shards are all scanned.
pub fn load_model_weights(path: &Path, schema: &NameSchema) -> Result<ModelWeights> {
    schema.validate()?;
    let files = checkpoint_files(path)?;
    let mut found = BTreeMap::new();
    for file_path in files {
        let file = Arc::new(TensorFile::open(&file_path)?);
        for name in file.names() {
            let Some((layer, kind)) = schema.resolve(&name) else {
                continue;
            };
            let shape = file.shape(&name).ok_or_else(|| {
                Error::InvalidTensor(format!("{name} is not a two-dimensional tensor"))
            })?;
            let source = Source::File {
                file: Arc::clone(&file),
                name: name.clone(),
            };
            if found.insert((layer, kind), (shape, source)).is_some() {
                return Err(Error::DuplicateName(name));
            }
        }
    }
    let weights = ModelWeights::assemble(model_id_for(path), found)?;
    for (kind, (r, c)) in weights.shapes() {
        log::info!("{}: {kind} projection {r}x{c}", weights.model_id);
    }
    Ok(weights)
}

fn checkpoint_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "safetensors"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: "no .safetensors files found".into(),
        });
    }
    Ok(files)
}

fn model_id_for(path: &Path) -> String {
    let name = if path.is_file() {
        path.file_stem()
    } else {
        path.file_name()
    };
    name.map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn default_schema_resolves_common_layouts() {
        let schema = NameSchema::default();
        assert_eq!(
            schema.resolve("model.layers.12.self_attn.q_proj.weight"),
            Some((12, ProjectionKind::Q))
        );
        assert_eq!(
            schema.resolve("layers.0.mlp.down_proj.weight"),
            Some((0, ProjectionKind::Down))
        );
        assert_eq!(
            schema.resolve("base.model.layers.3.mlp.gate_proj.weight"),
            Some((3, ProjectionKind::Gate))
        );
        assert_eq!(schema.resolve("model.layers.3.input_layernorm.weight"), None);
        assert_eq!(schema.resolve("model.layers.x.self_attn.q_proj.weight"), None);
        assert_eq!(schema.resolve("model.sublayers.3.self_attn.q_proj.weight"), None);
        assert_eq!(schema.resolve("model.layers.3.self_attn.q_proj.bias"), None);
    }

    #[test]
    fn custom_schema_from_json() {
        let text = r#"{"kinds": {"q": ["h.{layer}.attn.q.weight"], "k": ["h.{layer}.attn.k.weight"]}}"#;
        let schema = NameSchema::from_json(text).unwrap();
        assert_eq!(schema.resolve("transformer.h.7.attn.k.weight"), Some((7, ProjectionKind::K)));
        assert!(NameSchema::from_json(r#"{"kinds": {"q": ["no_placeholder"]}}"#).is_err());
    }

    fn tiny(layer: usize, kind: ProjectionKind, rows: usize, cols: usize) -> ProjectionMatrix {
        ProjectionMatrix::new(layer, kind, DMatrix::from_element(rows, cols, 1.0 + layer as f64))
            .unwrap()
    }

    #[test]
    fn missing_kind_is_reported() {
        let mats = (0..2).flat_map(|l| {
            ProjectionKind::ALL
                .into_iter()
                .filter(move |k| !(l == 1 && *k == ProjectionKind::Up))
                .map(move |k| tiny(l, k, 2, 3))
        });
        let err = ModelWeights::from_matrices("m", mats).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingProjection {
                layer: 1,
                kind: ProjectionKind::Up
            }
        ));
    }

    #[test]
    fn shape_drift_is_reported() {
        let mats = (0..2).flat_map(|l| {
            ProjectionKind::ALL
                .into_iter()
                .map(move |k| tiny(l, k, 2, if l == 1 && k == ProjectionKind::V { 4 } else { 3 }))
        });
        let err = ModelWeights::from_matrices("m", mats).unwrap_err();
        assert!(matches!(
            err,
            Error::ShapeMismatch {
                kind: ProjectionKind::V,
                layer: 1,
                ..
            }
        ));
    }
}
