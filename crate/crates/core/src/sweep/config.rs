use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ThetaRrOptions;
use crate::pairing::PairingPolicy;
use crate::probes::{LogisticSettings, SplitSpec};
use crate::spectral::{SpaceTag, DEFAULT_K_CAP};

/// Which layers of each dataset to analyze. In JSON: `"all"`, a list of
/// indices, or an inclusive range such as `"4-9"`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "LayerSpec", into = "LayerSpec")]
pub enum LayerSelection {
    #[default]
    All,
    List(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LayerSpec {
    Text(String),
    List(Vec<usize>),
}

impl TryFrom<LayerSpec> for LayerSelection {
    type Error = String;

    fn try_from(spec: LayerSpec) -> std::result::Result<Self, String> {
        match spec {
            LayerSpec::List(v) => Ok(LayerSelection::List(v)),
            LayerSpec::Text(s) => s.parse(),
        }
    }
}

impl From<LayerSelection> for LayerSpec {
    fn from(sel: LayerSelection) -> Self {
        match sel {
            LayerSelection::All => LayerSpec::Text("all".into()),
            LayerSelection::List(v) => LayerSpec::List(v),
        }
    }
}

impl std::str::FromStr for LayerSelection {
    type Err = String;

    /// Accepts `all`, `7`, `4-9` or `1,3,5`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(LayerSelection::All);
        }
        let bad = || format!("invalid layer selection {s:?}");
        if let Some((lo, hi)) = s.split_once('-') {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            return Ok(LayerSelection::List((lo..=hi).collect()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(LayerSelection::List)
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::All => f.write_str("all"),
            LayerSelection::List(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl LayerSelection {
    pub fn resolve(&self, num_layers: usize) -> Result<Vec<usize>> {
        match self {
            LayerSelection::All => Ok((0..num_layers).collect()),
            LayerSelection::List(v) => {
                if let Some(bad) = v.iter().find(|&&l| l >= num_layers) {
                    return Err(Error::Config(format!(
                        "layer {bad} requested but the dataset has {num_layers} layers"
                    )));
                }
                let mut out = v.clone();
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub lambda: f64,
    pub logistic: LogisticSettings,
    pub split_seed: u64,
    pub train_fraction: f64,
    /// Fit and evaluate on every pair instead of a held-out split.
    pub in_sample: bool,
    /// Largest number of components probed.
    pub k_cap: usize,
    /// Replaces the default k grid for both probes.
    pub k_grid: Option<Vec<usize>>,
    /// Replaces the k grid for the word-identity probe only.
    pub word_k_grid: Option<Vec<usize>>,
    pub word_id: bool,
    pub top_k_corr: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            lambda: 1.0,
            logistic: LogisticSettings::default(),
            split_seed: 0,
            train_fraction: 0.8,
            in_sample: false,
            k_cap: DEFAULT_K_CAP,
            k_grid: None,
            word_k_grid: None,
            word_id: true,
            top_k_corr: 20,
        }
    }
}

impl ProbeSettings {
    pub fn split(&self) -> SplitSpec {
        if self.in_sample {
            SplitSpec::InSample
        } else {
            SplitSpec::Holdout {
                train_fraction: self.train_fraction,
                seed: self.split_seed,
            }
        }
    }
}

fn default_spaces() -> Vec<SpaceTag> {
    SpaceTag::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One manifest per model.
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub layers: LayerSelection,
    #[serde(default = "default_spaces")]
    pub spaces: Vec<SpaceTag>,
    #[serde(default)]
    pub probes: ProbeSettings,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also run every space under its alternate centering.
    #[serde(default)]
    pub both_centerings: bool,
    #[serde(default)]
    pub pairing_policy: PairingPolicy,
    #[serde(default)]
    pub theta_rr: ThetaRrOptions,
}

impl SweepConfig {
    pub fn new(datasets: Vec<PathBuf>, output_dir: PathBuf) -> Self {
        SweepConfig {
            datasets,
            layers: LayerSelection::All,
            spaces: default_spaces(),
            probes: ProbeSettings::default(),
            output_dir,
            both_centerings: false,
            pairing_policy: PairingPolicy::default(),
            theta_rr: ThetaRrOptions::default(),
        }
    }

    /// Reads a JSON config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: SweepConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut config.datasets {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return fail("no datasets listed".into());
        }
        if self.spaces.is_empty() {
            return fail("no spaces listed".into());
        }
        if let LayerSelection::List(v) = &self.layers {
            if v.is_empty() {
                return fail("empty layer list".into());
            }
        }
        for d in &self.datasets {
            if !d.is_file() {
                return fail(format!("manifest {} does not exist", d.display()));
            }
        }
        let p = &self.probes;
        if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
            return fail(format!("lambda {} must be >= 0", p.lambda));
        }
        if !(p.logistic.lr > 0.0 && p.logistic.lr.is_finite()) {
            return fail(format!("lr {} must be > 0", p.logistic.lr));
        }
        if !p.in_sample && !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return fail(format!("train_fraction {} outside (0, 1)", p.train_fraction));
        }
        if p.k_cap == 0 {
            return fail("k_cap must be positive".into());
        }
        for grid in [&p.k_grid, &p.word_k_grid].into_iter().flatten() {
            if grid.is_empty() || grid.contains(&0) {
                return fail(format!("k grid {grid:?} must be non-empty and positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_selection_parsing() {
        assert_eq!("all".parse::<LayerSelection>().unwrap(), LayerSelection::All);
        assert_eq!(
            "2-4".parse::<LayerSelection>().unwrap(),
            LayerSelection::List(vec![2, 3, 4])
        );
        assert_eq!(
            "1, 5".parse::<LayerSelection>().unwrap(),
            LayerSelection::List(vec![1, 5])
        );
        assert!("5-2".parse::<LayerSelection>().is_err());
        assert!("x".parse::<LayerSelection>().is_err());
    }

    #[test]
    fn layer_selection_json() {
        let v: LayerSelection = serde_json::from_str("\"all\"").unwrap();
        assert_eq!(v, LayerSelection::All);
        let v: LayerSelection = serde_json::from_str("[3, 1]").unwrap();
        assert_eq!(v.resolve(4).unwrap(), vec![1, 3]);
        assert!(v.resolve(2).is_err());
        let v: LayerSelection = serde_json::from_str("\"0-2\"").unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "[0,1,2]");
    }

    #[test]
    fn config_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.json");
        fs::write(&path, r#"{"datasets": ["data/manifest.json"]}"#).unwrap();
        let cfg = SweepConfig::load(&path).unwrap();
        assert_eq!(cfg.datasets[0], dir.path().join("data/manifest.json"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.spaces, SpaceTag::ALL.to_vec());
        assert_eq!(cfg.probes, ProbeSettings::default());
        // The manifest is missing.
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn vacuous_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.json");
        fs::write(&manifest, "{}").unwrap();
        let mut cfg = SweepConfig::new(vec![manifest], dir.path().join("out"));
        assert!(cfg.validate().is_ok());
        cfg.layers = LayerSelection::List(vec![]);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.layers = LayerSelection::All;
        cfg.spaces.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.json");
        fs::write(&path, r#"{"datasets": [], "lamda": 2}"#).unwrap();
        assert!(matches!(SweepConfig::load(&path), Err(Error::Config(_))));
    }
}
