//! Word-level representation datasets and their on-disk interchange format.
//!
//! A dataset is a `manifest.json` listing every word token plus one `.wrep`
//! tensor file per encoder layer. Layers stay on disk until asked for, so a
//! deep model can be swept one layer at a time.

pub mod wrep;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use wrep::WrepHeader;

pub const MANIFEST_FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One word instance in one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub token_id: usize,
    pub utterance_id: String,
    pub speaker_id: String,
    /// Base sentence family shared by every emphasis variant.
    pub sentence_id: String,
    /// Which rendition of the sentence family this utterance is.
    pub variant_id: String,
    /// Already normalized at extraction time; treated as an opaque key here.
    pub word_text: String,
    pub word_position: usize,
    pub emphasized: bool,
    pub t_start: f64,
    pub t_end: f64,
}

impl WordToken {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Word representations of every token at one encoder layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMatrix {
    layer_index: usize,
    n_rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl LayerMatrix {
    pub fn new(layer_index: usize, n_rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_rows * dim {
            return Err(Error::Shape(format!(
                "layer {layer_index}: {} values for {n_rows}x{dim}",
                values.len()
            )));
        }
        Ok(LayerMatrix {
            layer_index,
            n_rows,
            dim,
            values,
        })
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Position of the first NaN/Inf entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|at| (at / self.dim.max(1), at % self.dim.max(1)))
    }
}

#[derive(Clone, Debug)]
enum LayerSlot {
    Memory(Arc<LayerMatrix>),
    Disk { path: PathBuf, header: WrepHeader },
}

/// Tokens plus per-layer representations. Immutable once built.
#[derive(Clone, Debug)]
pub struct Dataset {
    model_name: String,
    dim: usize,
    tokens: Vec<WordToken>,
    layers: Vec<LayerSlot>,
}

impl Dataset {
    /// Builds an in-memory dataset. Layer `i` of `layers` must carry
    /// `layer_index == i`; full invariants are checked by [`validate_dataset`].
    pub fn new(
        model_name: impl Into<String>,
        dim: usize,
        tokens: Vec<WordToken>,
        layers: Vec<LayerMatrix>,
    ) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if layer.layer_index != i {
                return Err(Error::Invariant(format!(
                    "layer at position {i} has index {}",
                    layer.layer_index
                )));
            }
        }
        Ok(Dataset {
            model_name: model_name.into(),
            dim,
            tokens,
            layers: layers
                .into_iter()
                .map(|l| LayerSlot::Memory(Arc::new(l)))
                .collect(),
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[WordToken] {
        &self.tokens
    }

    /// Returns the layer, reading it from disk if it is not resident. Disk
    /// layers are not cached; drop the returned handle to release memory.
    pub fn layer(&self, index: usize) -> Result<Arc<LayerMatrix>> {
        match self.layers.get(index) {
            None => Err(Error::Index(format!(
                "layer {index} out of range (num_layers={})",
                self.layers.len()
            ))),
            Some(LayerSlot::Memory(m)) => Ok(Arc::clone(m)),
            Some(LayerSlot::Disk { path, header }) => {
                let (read_header, values) = wrep::read(path)?;
                if read_header != *header {
                    return Err(Error::format(path, "header changed since manifest load"));
                }
                let layer = LayerMatrix::new(
                    header.layer_index as usize,
                    header.n_rows as usize,
                    header.dim as usize,
                    values,
                )?;
                if let Some((r, c)) = layer.first_non_finite() {
                    return Err(Error::format(
                        path,
                        format!("non-finite value at row {r}, column {c}"),
                    ));
                }
                Ok(Arc::new(layer))
            }
        }
    }

    /// File backing a layer that has not been read into memory.
    pub fn layer_path(&self, index: usize) -> Option<&Path> {
        match self.layers.get(index) {
            Some(LayerSlot::Disk { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// Copy with every layer read into memory.
    pub fn materialize(&self) -> Result<Dataset> {
        let layers = (0..self.num_layers())
            .map(|l| self.layer(l).map(LayerSlot::Memory))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            model_name: self.model_name.clone(),
            dim: self.dim,
            tokens: self.tokens.clone(),
            layers,
        })
    }

    fn token_checksum(&self) -> u64 {
        wrep::token_order_checksum(self.tokens.iter().map(|t| t.token_id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: String,
    pub model_name: String,
    pub num_layers: usize,
    pub dim: usize,
    pub tokens: Vec<WordToken>,
    pub layer_files: Vec<String>,
}

pub fn layer_file_name(index: usize) -> String {
    format!("layer_{index:02}.wrep")
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a manifest and checks every referenced tensor header. Layer values
/// are read lazily through [`Dataset::layer`].
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::format(
            manifest_path,
            format!("unsupported format_version {:?}", manifest.format_version),
        ));
    }
    if manifest.layer_files.len() != manifest.num_layers {
        return Err(Error::format(
            manifest_path,
            format!(
                "num_layers={} but {} layer files listed",
                manifest.num_layers,
                manifest.layer_files.len()
            ),
        ));
    }
    check_token_metadata(&manifest.tokens)?;

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let checksum = wrep::token_order_checksum(manifest.tokens.iter().map(|t| t.token_id));
    let mut layers = Vec::with_capacity(manifest.num_layers);
    for (index, file) in manifest.layer_files.iter().enumerate() {
        let path = base.join(file);
        let header = wrep::read_header(&path)?;
        let mismatch = |what: String| Err(Error::format(&path, what));
        if header.layer_index as usize != index {
            return mismatch(format!(
                "layer_index {} in file, expected {index}",
                header.layer_index
            ));
        }
        if header.n_rows as usize != manifest.tokens.len() {
            return mismatch(format!(
                "{} rows, manifest has {} tokens",
                header.n_rows,
                manifest.tokens.len()
            ));
        }
        if header.dim as usize != manifest.dim {
            return mismatch(format!("dim {} vs manifest dim {}", header.dim, manifest.dim));
        }
        if header.checksum != checksum {
            return mismatch("token-order checksum mismatch".to_string());
        }
        layers.push(LayerSlot::Disk { path, header });
    }

    Ok(Dataset {
        model_name: manifest.model_name,
        dim: manifest.dim,
        tokens: manifest.tokens,
        layers,
    })
}

fn check_token_metadata(tokens: &[WordToken]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.token_id != i {
            return Err(Error::Metadata(format!(
                "token at position {i} has token_id {}",
                t.token_id
            )));
        }
        if let Some(problem) = token_problem(t) {
            return Err(Error::Metadata(format!("token {}: {problem}", t.token_id)));
        }
        if !seen.insert((t.utterance_id.as_str(), t.word_position)) {
            return Err(Error::Metadata(format!(
                "token {}: duplicate (utterance_id, word_position) = ({}, {})",
                t.token_id, t.utterance_id, t.word_position
            )));
        }
    }
    Ok(())
}

fn token_problem(t: &WordToken) -> Option<String> {
    if !(t.t_start.is_finite() && t.t_end.is_finite()) {
        Some("non-finite time boundary".into())
    } else if t.t_start < 0.0 {
        Some(format!("t_start {} is negative", t.t_start))
    } else if t.t_end <= t.t_start {
        Some(format!("t_end {} <= t_start {}", t.t_end, t.t_start))
    } else if t.word_text.is_empty() {
        Some("empty word_text".into())
    } else {
        None
    }
}

/// Writes `manifest.json` and one tensor file per layer into `output_dir`.
pub fn write_dataset(dataset: &Dataset, output_dir: &Path) -> Result<PathBuf> {
    let report = validate_dataset(dataset);
    if let Some(first) = report.violations.first() {
        return Err(Error::Invariant(format!(
            "{} ({} violation(s) in total)",
            first,
            report.violations.len()
        )));
    }
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;

    let checksum = dataset.token_checksum();
    let mut layer_files = Vec::with_capacity(dataset.num_layers());
    for index in 0..dataset.num_layers() {
        let layer = dataset.layer(index)?;
        let name = layer_file_name(index);
        let header = WrepHeader {
            version: wrep::FORMAT_VERSION,
            layer_index: index as u32,
            n_rows: layer.n_rows() as u32,
            dim: layer.dim() as u32,
            checksum,
        };
        wrep::write(&output_dir.join(&name), &header, layer.values())?;
        layer_files.push(name);
    }

    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION.to_string(),
        model_name: dataset.model_name.clone(),
        num_layers: dataset.num_layers(),
        dim: dataset.dim,
        tokens: dataset.tokens.clone(),
        layer_files,
    };
    let path = output_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub token_id: Option<usize>,
    pub layer: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.token_id, self.layer) {
            (Some(t), _) => write!(f, "token {t}: {}", self.message),
            (None, Some(l)) => write!(f, "layer {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub tokens: usize,
    pub emphasized: usize,
    pub neutral: usize,
    pub speakers: usize,
    pub sentences: usize,
    pub utterances: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub summary: DatasetSummary,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every invariant violation instead of stopping at the first.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let tokens = &dataset.tokens;

    let mut seen = HashSet::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.token_id != i {
            violations.push(Violation {
                token_id: Some(t.token_id),
                layer: None,
                message: format!("token_id does not match position {i}"),
            });
        }
        if let Some(problem) = token_problem(t) {
            violations.push(Violation {
                token_id: Some(t.token_id),
                layer: None,
                message: problem,
            });
        }
        if !seen.insert((t.utterance_id.as_str(), t.word_position)) {
            violations.push(Violation {
                token_id: Some(t.token_id),
                layer: None,
                message: format!(
                    "duplicate (utterance_id, word_position) = ({}, {})",
                    t.utterance_id, t.word_position
                ),
            });
        }
    }

    for index in 0..dataset.num_layers() {
        let layer_violation = |message: String| Violation {
            token_id: None,
            layer: Some(index),
            message,
        };
        match dataset.layer(index) {
            Err(e) => violations.push(layer_violation(e.to_string())),
            Ok(layer) => {
                if layer.n_rows() != tokens.len() {
                    violations.push(layer_violation(format!(
                        "{} rows for {} tokens",
                        layer.n_rows(),
                        tokens.len()
                    )));
                }
                if layer.dim() != dataset.dim {
                    violations.push(layer_violation(format!(
                        "dim {} differs from dataset dim {}",
                        layer.dim(),
                        dataset.dim
                    )));
                }
                if let Some((r, c)) = layer.first_non_finite() {
                    violations.push(layer_violation(format!(
                        "non-finite value at row {r}, column {c}"
                    )));
                }
            }
        }
    }
    if dataset.num_layers() > 0 && dataset.dim == 0 {
        violations.push(Violation {
            token_id: None,
            layer: None,
            message: "dim must be positive".into(),
        });
    }

    let emphasized = tokens.iter().filter(|t| t.emphasized).count();
    let distinct = |f: fn(&WordToken) -> &str| {
        tokens.iter().map(f).collect::<BTreeSet<_>>().len()
    };
    ValidationReport {
        violations,
        summary: DatasetSummary {
            tokens: tokens.len(),
            emphasized,
            neutral: tokens.len() - emphasized,
            speakers: distinct(|t| &t.speaker_id),
            sentences: distinct(|t| &t.sentence_id),
            utterances: distinct(|t| &t.utterance_id),
            layers: dataset.num_layers(),
        },
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn token(id: usize, utt: &str, word: &str, pos: usize, emphasized: bool) -> WordToken {
        WordToken {
            token_id: id,
            utterance_id: utt.into(),
            speaker_id: "spk0".into(),
            sentence_id: "s0".into(),
            variant_id: utt.into(),
            word_text: word.into(),
            word_position: pos,
            emphasized,
            t_start: 0.1 * pos as f64,
            t_end: 0.1 * pos as f64 + 0.08,
        }
    }

    /// 4 tokens, 1 layer, d = 3, with values that are not round in binary.
    pub fn four_token() -> Dataset {
        let tokens = vec![
            token(0, "u0", "the", 0, false),
            token(1, "u0", "cat", 1, true),
            token(2, "u1", "the", 0, true),
            token(3, "u1", "cat", 1, false),
        ];
        let values = vec![
            0.1, -2.5, 3.25, 1e-7, 7.0e5, -0.333, f32::MIN_POSITIVE, 4.0, -0.0, 9.9, 1.5, -6.75,
        ];
        let layer = LayerMatrix::new(0, 4, 3, values).unwrap();
        Dataset::new("fixture", 3, tokens, vec![layer]).unwrap()
    }
}
