//! Layer-by-space sweeps over one or more datasets.
//!
//! Every `(model, layer, space, centering)` cell runs pairing, geometry,
//! PCA and both probes. Finished cells are cached next to their outputs under
//! a content hash of the settings and input files, so an interrupted sweep
//! resumes where it stopped. A failing cell is recorded in the report and
//! does not stop the others.

mod config;
mod figures;
mod summary;

pub use config::{LayerSelection, ProbeSettings, SweepConfig};
pub use figures::{emit_figure_data, Figure};
pub use summary::{summarize, SummaryRow};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset, Dataset, WordToken};
use crate::error::{Error, Result};
use crate::geometry::{
    paired_cosine, residuals, theta_rhat, theta_rr, within_group_cosine, SimilarityStats,
    ThetaRrOptions,
};
use crate::pairing::{build_pairs, gather_from_layer, PairSet, PairingPolicy};
use crate::probes::{
    clamp_k_grid, default_k_grid, duration_delta, pc_duration_correlations, ridge_curve,
    word_id_curve, CorrelationTable, DurationTarget, DurationTargets, LabelSet, ProbeCurve,
};
use crate::spectral::{cumulative_curve, fit_space, Centering, SpaceTag, SpectralModel};

pub const SCHEMA_VERSION: &str = "1";
/// Leading spectrum entries written to reports.
pub const SPECTRUM_EXPORT_CAP: usize = 500;
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CELLS_FILE: &str = "cells.csv";
const CELL_CACHE_FILE: &str = "cell.json";
const CACHE_TAG: &str = "emres-cell-1";

/// Everything that changes the numbers in a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSettings {
    pub probes: ProbeSettings,
    pub pairing_policy: PairingPolicy,
    pub theta_rr: ThetaRrOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectrum {
    pub n_components: usize,
    pub d95: usize,
    pub total_variance: f64,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl Spectrum {
    pub fn from_model(model: &SpectralModel) -> Self {
        let cap = model.n_components().min(SPECTRUM_EXPORT_CAP);
        Spectrum {
            n_components: model.n_components(),
            d95: model.d95(),
            total_variance: model.eigenvalues.iter().sum(),
            eigenvalues: model.eigenvalues[..cap].to_vec(),
            explained_ratio: model.explained_ratio[..cap].to_vec(),
            cumulative: cumulative_curve(model)[..cap].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMetrics {
    pub n_pairs: usize,
    pub spectrum: Spectrum,
    pub geometry: Vec<SimilarityStats>,
    pub correlations: CorrelationTable,
    pub duration: ProbeCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_id: Option<ProbeCurve>,
}

impl CellMetrics {
    /// Mean of the top PC correlations with the duration change.
    pub fn corr_top(&self) -> f64 {
        self.correlations
            .for_target(DurationTarget::Delta)
            .map_or(f64::NAN, |t| t.mean_top)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for CellError {
    fn from(e: &Error) -> Self {
        CellError {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellResult {
    pub model: String,
    pub layer: usize,
    pub space: SpaceTag,
    pub centering: Centering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CellError>,
}

impl CellResult {
    /// `A`, or `A-mean` when the space runs under its alternate centering.
    pub fn space_dir(space: SpaceTag, centering: Centering) -> String {
        if centering == space.default_centering() {
            space.to_string()
        } else {
            format!("{space}-{centering}")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub model: String,
    pub manifest: String,
    pub n_pairs: usize,
    pub n_unmatched: usize,
    pub layers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub schema_version: String,
    pub settings: ReportSettings,
    pub models: Vec<ModelInfo>,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
}

impl SweepReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn cell(
        &self,
        model: &str,
        layer: usize,
        space: SpaceTag,
        centering: Centering,
    ) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.model == model && c.layer == layer && c.space == space && c.centering == centering
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: SweepReport = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported schema_version {:?}", report.schema_version),
            ));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    write_atomic(path, text.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Directory-safe form of a model name.
pub fn model_dir_name(model: &str) -> String {
    let cleaned: String = model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() || cleaned.chars().all(|c| c == '.') {
        "model".into()
    } else {
        cleaned
    }
}

pub fn layer_dir_name(layer: usize) -> String {
    format!("layer_{layer:02}")
}

pub fn cell_dir(out: &Path, model: &str, layer: usize, space: SpaceTag, centering: Centering) -> PathBuf {
    out.join(model_dir_name(model))
        .join(layer_dir_name(layer))
        .join(CellResult::space_dir(space, centering))
}

/// k grids for the duration and word-identity probes on `p` components.
pub fn probe_grids(settings: &ProbeSettings, p: usize) -> (Vec<usize>, Vec<usize>) {
    let max_k = p.min(settings.k_cap);
    let base = match &settings.k_grid {
        Some(g) => clamp_k_grid(g, max_k),
        None => default_k_grid(max_k),
    };
    let word = match &settings.word_k_grid {
        Some(g) => clamp_k_grid(g, max_k),
        None => base.clone(),
    };
    (base, word)
}

/// Similarity statistics of one layer, shared by its cells.
struct LayerGeometry {
    theta_aa: Result<Option<SimilarityStats>, CellError>,
    theta_bb: Result<Option<SimilarityStats>, CellError>,
    theta_ab: Result<SimilarityStats, CellError>,
    theta_rr: Result<SimilarityStats, CellError>,
    theta_rhat: Result<SimilarityStats, CellError>,
}

impl LayerGeometry {
    fn compute(
        tokens: &[WordToken],
        layer: &crate::dataset::LayerMatrix,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        options: ThetaRrOptions,
    ) -> Self {
        let err = |e: Error| CellError::from(&e);
        let r = residuals(a, b);
        LayerGeometry {
            theta_aa: within_group_cosine(tokens, layer, false).map_err(err),
            theta_bb: within_group_cosine(tokens, layer, true).map_err(err),
            theta_ab: paired_cosine(a, b).map_err(err),
            theta_rr: r.as_ref().map_err(CellError::from).and_then(|r| theta_rr(r, options).map_err(err)),
            theta_rhat: r
                .as_ref()
                .map_err(CellError::from)
                .and_then(|r| theta_rhat(r).map(|t| t.stats).map_err(err)),
        }
    }

    /// A: within-neutral, B: within-emphasized, C: neutral vs emphasized,
    /// R: residual pairs and residuals vs their mean.
    fn for_space(&self, space: SpaceTag) -> Result<Vec<SimilarityStats>, CellError> {
        Ok(match space {
            SpaceTag::A => self.theta_aa.clone()?.into_iter().collect(),
            SpaceTag::B => self.theta_bb.clone()?.into_iter().collect(),
            SpaceTag::C => vec![self.theta_ab.clone()?],
            SpaceTag::R => vec![self.theta_rr.clone()?, self.theta_rhat.clone()?],
        })
    }
}

/// Inputs shared by every cell of one model.
struct ModelInputs {
    dataset: Dataset,
    pairs: PairSet,
    targets: std::result::Result<DurationTargets, CellError>,
    labels: LabelSet,
    manifest_digest: String,
    layers: Vec<usize>,
    info: ModelInfo,
}

fn prepare_model(path: &Path, config: &SweepConfig) -> Result<ModelInputs> {
    let dataset = load_dataset(path)?;
    let layers = config.layers.resolve(dataset.num_layers())?;
    let outcome = build_pairs(&dataset, config.pairing_policy);
    let pairs = outcome.pairs;
    let targets = duration_delta(&dataset, &pairs).map_err(|e| CellError::from(&e));
    let labels = LabelSet::from_pairs(&pairs);
    let info = ModelInfo {
        model: dataset.model_name().to_string(),
        manifest: path.display().to_string(),
        n_pairs: pairs.len(),
        n_unmatched: outcome.unmatched.len(),
        layers: layers.clone(),
    };
    Ok(ModelInputs {
        manifest_digest: file_digest(path)?,
        dataset,
        pairs,
        targets,
        labels,
        layers,
        info,
    })
}

/// One space of one layer, from paired `A`/`B` to probe curves.
fn compute_cell(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    space: SpaceTag,
    centering: Centering,
    layer: usize,
    targets: &DurationTargets,
    labels: &LabelSet,
    settings: &ProbeSettings,
    geometry: Vec<SimilarityStats>,
) -> Result<CellMetrics> {
    let model = fit_space(a, b, space, centering)?;
    let p = model.n_components();
    let (grid, word_grid) = probe_grids(settings, p);
    let split = settings.split();

    let correlations =
        pc_duration_correlations(&model.scores, targets, settings.top_k_corr.min(p))?;
    let mut duration = ridge_curve(&model.scores, &targets.delta, settings.lambda, split, &grid)?;
    duration.space_tag = Some(space);
    duration.layer = Some(layer);
    let word_id = if settings.word_id {
        let mut curve = word_id_curve(&model.scores, labels, split, &settings.logistic, &word_grid)?;
        curve.space_tag = Some(space);
        curve.layer = Some(layer);
        Some(curve)
    } else {
        None
    };
    Ok(CellMetrics {
        n_pairs: a.nrows(),
        spectrum: Spectrum::from_model(&model),
        geometry,
        correlations,
        duration,
        word_id,
    })
}

#[derive(Serialize, Deserialize)]
struct CachedCell {
    hash: String,
    result: CellResult,
}

fn read_cache(dir: &Path, hash: &str) -> Option<CellResult> {
    let text = fs::read_to_string(dir.join(CELL_CACHE_FILE)).ok()?;
    let cached: CachedCell = serde_json::from_str(&text).ok()?;
    (cached.hash == hash && cached.result.error.is_none()).then_some(cached.result)
}

fn write_cell_files(dir: &Path, hash: &str, result: &CellResult) -> Result<()> {
    if let Some(m) = &result.metrics {
        write_json(
            &dir.join("spectrum.json"),
            &serde_json::json!({
                "model": result.model,
                "layer": result.layer,
                "space_tag": result.space,
                "centering": result.centering,
                "spectrum": m.spectrum,
            }),
        )?;
        write_json(
            &dir.join("curves.json"),
            &serde_json::json!({
                "duration": m.duration,
                "word_id": m.word_id,
                "correlations": m.correlations,
            }),
        )?;
        write_json(&dir.join("geometry.json"), &serde_json::json!({ "stats": m.geometry }))?;
    }
    write_json(
        &dir.join(CELL_CACHE_FILE),
        &CachedCell {
            hash: hash.to_string(),
            result: result.clone(),
        },
    )
}

fn cell_hash(
    settings_json: &str,
    manifest_digest: &str,
    layer_digest: &str,
    layer: usize,
    space: SpaceTag,
    centering: Centering,
) -> String {
    let key = format!(
        "{CACHE_TAG}\n{settings_json}\n{manifest_digest}\n{layer_digest}\n{layer}\n{space}\n{centering}"
    );
    sha256_hex(key.as_bytes())
}

fn centerings(space: SpaceTag, both: bool) -> Vec<Centering> {
    let mut out = vec![space.default_centering()];
    if both && space.alternate_centering() != space.default_centering() {
        out.push(space.alternate_centering());
    }
    out
}

/// Runs every requested cell, writes per-cell outputs, `report.json`,
/// `summary.csv` and `cells.csv` under the output directory, and returns the
/// report. Cells with a matching cache entry are not recomputed.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let settings = ReportSettings {
        probes: config.probes.clone(),
        pairing_policy: config.pairing_policy,
        theta_rr: config.theta_rr,
    };
    let settings_json = serde_json::to_string(&settings).expect("settings serialize");
    let out = &config.output_dir;
    let spaces: Vec<SpaceTag> = config.spaces.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let mut models = Vec::new();
    let mut cells = Vec::new();
    let mut seen_models = BTreeSet::new();
    for path in &config.datasets {
        let inputs = prepare_model(path, config)?;
        let model = inputs.info.model.clone();
        if !seen_models.insert(model_dir_name(&model)) {
            return Err(Error::Config(format!("model name {model:?} appears twice")));
        }
        log::info!("{model}: {} pairs, layers {:?}", inputs.pairs.len(), inputs.layers);
        for &layer in &inputs.layers {
            cells.extend(run_layer(&inputs, layer, &spaces, config, &settings_json)?);
        }
        models.push(inputs.info);
    }

    let summary = summary::summarize_cells(cells.iter());
    let report = SweepReport {
        schema_version: SCHEMA_VERSION.to_string(),
        settings,
        models,
        cells,
        summary,
    };
    write_atomic(&out.join(REPORT_FILE), report.to_json().as_bytes())?;
    write_atomic(&out.join(SUMMARY_FILE), summary::summary_csv(&report.summary).as_bytes())?;
    write_atomic(&out.join(CELLS_FILE), summary::cells_csv(&report.cells).as_bytes())?;
    Ok(report)
}

fn run_layer(
    inputs: &ModelInputs,
    layer: usize,
    spaces: &[SpaceTag],
    config: &SweepConfig,
    settings_json: &str,
) -> Result<Vec<CellResult>> {
    let model = inputs.info.model.as_str();
    let layer_digest = match inputs.dataset.layer_path(layer) {
        Some(p) => file_digest(p)?,
        None => String::new(),
    };
    let keys: Vec<(SpaceTag, Centering)> = spaces
        .iter()
        .flat_map(|&s| centerings(s, config.both_centerings).into_iter().map(move |c| (s, c)))
        .collect();

    let mut results: Vec<Option<CellResult>> = Vec::with_capacity(keys.len());
    let mut hashes = Vec::with_capacity(keys.len());
    for &(space, centering) in &keys {
        let hash = cell_hash(
            settings_json,
            &inputs.manifest_digest,
            &layer_digest,
            layer,
            space,
            centering,
        );
        let dir = cell_dir(&config.output_dir, model, layer, space, centering);
        let cached = read_cache(&dir, &hash);
        if cached.is_some() {
            log::info!("{model} layer {layer} {space}/{centering}: cached");
        }
        results.push(cached);
        hashes.push(hash);
    }
    let pending: Vec<usize> = (0..keys.len()).filter(|&i| results[i].is_none()).collect();
    if pending.is_empty() {
        return Ok(results.into_iter().flatten().collect());
    }

    let fail = |space, centering, e: CellError| CellResult {
        model: model.to_string(),
        layer,
        space,
        centering,
        metrics: None,
        error: Some(e),
    };
    let prepared = inputs.dataset.layer(layer).and_then(|m| {
        let (a, b) = gather_from_layer(&m, &inputs.pairs)?;
        Ok((m, a, b))
    });
    let computed: Vec<CellResult> = match (&prepared, &inputs.targets) {
        (Err(e), _) => pending
            .iter()
            .map(|&i| fail(keys[i].0, keys[i].1, CellError::from(e)))
            .collect(),
        (_, Err(e)) => pending
            .iter()
            .map(|&i| fail(keys[i].0, keys[i].1, e.clone()))
            .collect(),
        (Ok((matrix, a, b)), Ok(targets)) => {
            let geometry = LayerGeometry::compute(
                inputs.dataset.tokens(),
                matrix,
                a,
                b,
                config.theta_rr,
            );
            pending
                .par_iter()
                .map(|&i| {
                    let (space, centering) = keys[i];
                    let outcome = geometry.for_space(space).and_then(|g| {
                        compute_cell(
                            a,
                            b,
                            space,
                            centering,
                            layer,
                            targets,
                            &inputs.labels,
                            &config.probes,
                            g,
                        )
                        .map_err(|e| CellError::from(&e))
                    });
                    match outcome {
                        Ok(metrics) => CellResult {
                            model: model.to_string(),
                            layer,
                            space,
                            centering,
                            metrics: Some(metrics),
                            error: None,
                        },
                        Err(e) => fail(space, centering, e),
                    }
                })
                .collect()
        }
    };

    for (&i, result) in pending.iter().zip(computed) {
        let (space, centering) = keys[i];
        match &result.error {
            Some(e) => log::warn!("{model} layer {layer} {space}/{centering}: {}", e.message),
            None => log::info!("{model} layer {layer} {space}/{centering}: done"),
        }
        let dir = cell_dir(&config.output_dir, model, layer, space, centering);
        write_cell_files(&dir, &hashes[i], &result)?;
        results[i] = Some(result);
    }
    Ok(results.into_iter().flatten().collect())
}
