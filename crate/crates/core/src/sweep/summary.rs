use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CellResult, SweepReport};
use crate::error::{Error, Result};
use crate::probes::ProbeTask;
use crate::spectral::{Centering, SpaceTag};

/// Best layer for one model, space and probe task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRow {
    pub model: String,
    pub space: SpaceTag,
    pub centering: Centering,
    pub task: ProbeTask,
    pub best_layer: usize,
    pub auc: f64,
    pub dim95: usize,
}

/// Per model, space and task, the layer with the highest AUC. Equal AUCs go
/// to the smaller layer index.
pub fn summarize(reports: &[SweepReport]) -> Result<Vec<SummaryRow>> {
    if let Some(first) = reports.first() {
        if let Some((i, _)) = reports
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, r)| r.settings != first.settings)
        {
            return Err(Error::IncompatibleSettings(format!(
                "report {i} was produced with different probe settings than report 0"
            )));
        }
    }
    Ok(summarize_cells(reports.iter().flat_map(|r| r.cells.iter())))
}

pub(crate) fn summarize_cells<'a>(cells: impl Iterator<Item = &'a CellResult>) -> Vec<SummaryRow> {
    let mut best: BTreeMap<(String, SpaceTag, Centering, ProbeTask), (usize, f64, usize)> =
        BTreeMap::new();
    for cell in cells {
        let Some(m) = &cell.metrics else { continue };
        let curves = std::iter::once(&m.duration).chain(m.word_id.as_ref());
        for curve in curves {
            if curve.auc.is_nan() {
                continue;
            }
            let key = (cell.model.clone(), cell.space, cell.centering, curve.task);
            let candidate = (cell.layer, curve.auc, curve.dim95);
            best.entry(key)
                .and_modify(|cur| {
                    if candidate.1 > cur.1 || (candidate.1 == cur.1 && candidate.0 < cur.0) {
                        *cur = candidate;
                    }
                })
                .or_insert(candidate);
        }
    }
    best.into_iter()
        .map(|((model, space, centering, task), (best_layer, auc, dim95))| SummaryRow {
            model,
            space,
            centering,
            task,
            best_layer,
            auc,
            dim95,
        })
        .collect()
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn task_name(task: ProbeTask) -> &'static str {
    match task {
        ProbeTask::DurationR2 => "duration_r2",
        ProbeTask::WordAccuracy => "word_accuracy",
    }
}

pub(crate) fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("model,space,centering,task,best_layer,auc,dim95\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.model),
            r.space,
            r.centering,
            task_name(r.task),
            r.best_layer,
            r.auc,
            r.dim95
        ));
    }
    out
}

/// One row per cell: spectrum size, correlation and both probe summaries.
pub(crate) fn cells_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(
        "model,layer,space,centering,d95,corr_top,r2_auc,r2_dim95,wid_auc,wid_dim95,error\n",
    );
    for c in cells {
        let head = format!("{},{},{},{}", csv_field(&c.model), c.layer, c.space, c.centering);
        let line = match (&c.metrics, &c.error) {
            (Some(m), _) => {
                let (wa, wd) = m
                    .word_id
                    .as_ref()
                    .map_or((String::new(), String::new()), |w| {
                        (w.auc.to_string(), w.dim95.to_string())
                    });
                format!(
                    "{head},{},{},{},{},{wa},{wd},",
                    m.spectrum.d95,
                    m.corr_top(),
                    m.duration.auc,
                    m.duration.dim95
                )
            }
            (None, Some(e)) => format!("{head},,,,,,,{}", csv_field(&e.kind)),
            (None, None) => format!("{head},,,,,,,"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
