//! Residual-vector analysis of emphasis in word-level speech representations.
//!
//! Neutral and emphasized renditions of the same word (same speaker, same
//! sentence family, same position) are paired, and the residual `b - a` of
//! each pair is studied alongside the neutral (`A`), emphasized (`B`) and
//! concatenated (`C`) spaces:
//!
//! - [`geometry`]: cosine-similarity distributions and midpoint centering;
//! - [`spectral`]: PCA spectra and effective dimensionality;
//! - [`probes`]: duration-change regression and word-identity classification
//!   over leading principal components;
//! - [`sweep`]: the layer/model sweep, reports and figure data;
//! - [`synth`]: synthetic datasets with a planted emphasis subspace.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod pairing;
pub mod probes;
pub mod spectral;
pub mod sweep;
pub mod synth;

pub use dataset::{load_dataset, validate_dataset, write_dataset, Dataset, LayerMatrix, WordToken};
pub use error::{Error, Result};
pub use pairing::{build_pairs, gather_matrices, Pair, PairSet, PairingPolicy};
pub use probes::{DurationTargets, LabelSet, ProbeCurve};
pub use spectral::{Centering, SpaceTag, SpectralModel};
pub use sweep::{emit_figure_data, run_sweep, summarize, Figure, SweepConfig, SweepReport};
pub use synth::{generate, GroundTruth, SynthConfig};
