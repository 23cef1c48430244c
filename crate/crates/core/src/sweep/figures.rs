use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::summary::csv_field;
use super::{write_atomic, CellMetrics, CellResult, SweepReport};
use crate::error::{Error, Result};
use crate::geometry::bin_edges;
use crate::spectral::SpaceTag;

/// Plot data sets that can be exported from a report. Each is written as one
/// long-format CSV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    /// Cosine-similarity histograms per layer.
    CosineDists,
    /// Cumulative explained variance per space.
    Cumvar,
    /// Top PC correlations with each duration target.
    CorrHist,
    /// Probe performance against k.
    Curves,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::CosineDists, Figure::Cumvar, Figure::CorrHist, Figure::Curves];

    pub fn name(self) -> &'static str {
        match self {
            Figure::CosineDists => "cosine_dists",
            Figure::Cumvar => "cumvar",
            Figure::CorrHist => "corr_hist",
            Figure::Curves => "curves",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| format!("unknown figure {s:?}; expected one of cosine_dists, cumvar, corr_hist, curves"))
    }
}

const COSINE_SERIES: [(&str, SpaceTag); 5] = [
    ("theta_aa", SpaceTag::A),
    ("theta_bb", SpaceTag::B),
    ("theta_ab", SpaceTag::C),
    ("theta_rhat", SpaceTag::R),
    ("theta_rr", SpaceTag::R),
];

fn head(c: &CellResult) -> String {
    format!("{},{},{},{}", csv_field(&c.model), c.layer, c.space, c.centering)
}

fn cosine_dists(cells: &[(&CellResult, &CellMetrics)]) -> String {
    let edges = bin_edges();
    let mut out = String::from("model,layer,metric,bin_lo,bin_hi,count,fraction\n");
    let mut groups: Vec<(&str, usize)> = cells.iter().map(|(c, _)| (c.model.as_str(), c.layer)).collect();
    groups.dedup();
    for (model, layer) in groups {
        for (metric, space) in COSINE_SERIES {
            // Geometry does not depend on centering; use the first cell that has it.
            let stats = cells
                .iter()
                .filter(|(c, _)| c.model == model && c.layer == layer && c.space == space)
                .find_map(|(_, m)| m.geometry.iter().find(|g| g.metric == metric));
            let Some(stats) = stats else { continue };
            let total = stats.n_comparisons.max(1) as f64;
            for (i, count) in stats.counts.iter().enumerate() {
                out.push_str(&format!(
                    "{},{layer},{metric},{},{},{count},{}\n",
                    csv_field(model),
                    edges[i],
                    edges[i + 1],
                    *count as f64 / total
                ));
            }
        }
    }
    out
}

fn cumvar(cells: &[(&CellResult, &CellMetrics)]) -> String {
    let mut out = String::from("model,layer,space,centering,k,explained_ratio,cumulative\n");
    for (c, m) in cells {
        let h = head(c);
        for (i, (r, cum)) in m.spectrum.explained_ratio.iter().zip(&m.spectrum.cumulative).enumerate() {
            out.push_str(&format!("{h},{},{r},{cum}\n", i + 1));
        }
    }
    out
}

fn corr_hist(cells: &[(&CellResult, &CellMetrics)]) -> String {
    let mut out = String::from("model,layer,space,centering,target,rank,pc,abs_r\n");
    for (c, m) in cells {
        let h = head(c);
        for t in &m.correlations.targets {
            let target = serde_json::to_value(t.target).expect("target serializes");
            let target = target.as_str().unwrap_or_default();
            for (rank, (pc, r)) in t.ranked.iter().enumerate() {
                out.push_str(&format!("{h},{target},{},{},{r}\n", rank + 1, pc + 1));
            }
        }
    }
    out
}

fn curves(cells: &[(&CellResult, &CellMetrics)]) -> String {
    let mut out = String::from("model,layer,space,centering,task,k,perf\n");
    for (c, m) in cells {
        let h = head(c);
        for curve in std::iter::once(&m.duration).chain(m.word_id.as_ref()) {
            let task = serde_json::to_value(curve.task).expect("task serializes");
            let task = task.as_str().unwrap_or_default();
            for (k, p) in curve.k_values.iter().zip(&curve.perf) {
                out.push_str(&format!("{h},{task},{k},{p}\n"));
            }
        }
    }
    out
}

/// Writes `<out_dir>/<figure>.csv` from the successful cells of `report`,
/// optionally restricted to one layer.
pub fn emit_figure_data(
    report: &SweepReport,
    figure: Figure,
    layer: Option<usize>,
    out_dir: &Path,
) -> Result<PathBuf> {
    let cells: Vec<(&CellResult, &CellMetrics)> = report
        .cells
        .iter()
        .filter(|c| layer.is_none_or(|l| c.layer == l))
        .filter_map(|c| c.metrics.as_ref().map(|m| (c, m)))
        .collect();
    let missing = || {
        Error::MissingCell(match layer {
            Some(l) => format!("no successful cell at layer {l} for {figure}"),
            None => format!("no successful cell for {figure}"),
        })
    };
    if cells.is_empty() {
        return Err(missing());
    }
    let body = match figure {
        Figure::CosineDists => cosine_dists(&cells),
        Figure::Cumvar => cumvar(&cells),
        Figure::CorrHist => corr_hist(&cells),
        Figure::Curves => curves(&cells),
    };
    if body.lines().count() <= 1 {
        return Err(missing());
    }
    let path = out_dir.join(format!("{figure}.csv"));
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}
