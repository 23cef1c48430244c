//! Neutral–emphasized contrastive pairs.
//!
//! Two tokens can pair only if they share speaker, sentence family, word text
//! and word position, and differ in their emphasis flag.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LayerMatrix, WordToken};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingPolicy {
    /// One partner per emphasized token: the neutral rendition from the
    /// lexicographically smallest variant id.
    #[default]
    FirstVariant,
    /// Every matching neutral rendition; an emphasized token may repeat.
    AllCombinations,
}

impl std::str::FromStr for PairingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-variant" => Ok(PairingPolicy::FirstVariant),
            "all-combinations" => Ok(PairingPolicy::AllCombinations),
            other => Err(Error::Config(format!("unknown pairing policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub neutral_token_id: usize,
    pub emphasized_token_id: usize,
    pub word_text: String,
    pub speaker_id: String,
    pub sentence_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pair> {
        self.pairs.iter()
    }

    /// `pair_index,neutral_token_id,emphasized_token_id,word_text,speaker_id,sentence_id`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "pair_index,neutral_token_id,emphasized_token_id,word_text,speaker_id,sentence_id"
        )?;
        for (i, p) in self.pairs.iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{},{},{}",
                p.neutral_token_id,
                p.emphasized_token_id,
                csv_field(&p.word_text),
                csv_field(&p.speaker_id),
                csv_field(&p.sentence_id)
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unmatched {
    pub token_id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingOutcome {
    pub pairs: PairSet,
    pub unmatched: Vec<Unmatched>,
}

type MatchKey<'a> = (&'a str, &'a str, &'a str, usize);

fn match_key(t: &WordToken) -> MatchKey<'_> {
    (&t.speaker_id, &t.sentence_id, &t.word_text, t.word_position)
}

pub fn build_pairs(dataset: &Dataset, policy: PairingPolicy) -> PairingOutcome {
    let tokens = dataset.tokens();

    let mut neutral_by_key: HashMap<MatchKey<'_>, Vec<&WordToken>> = HashMap::new();
    for t in tokens.iter().filter(|t| !t.emphasized) {
        neutral_by_key.entry(match_key(t)).or_default().push(t);
    }
    for candidates in neutral_by_key.values_mut() {
        candidates.sort_by(|a, b| {
            a.variant_id
                .cmp(&b.variant_id)
                .then(a.token_id.cmp(&b.token_id))
        });
    }

    let mut emphasized: Vec<&WordToken> = tokens.iter().filter(|t| t.emphasized).collect();
    emphasized.sort_by(|a, b| {
        (&a.speaker_id, &a.sentence_id, a.word_position, &a.variant_id, a.token_id).cmp(&(
            &b.speaker_id,
            &b.sentence_id,
            b.word_position,
            &b.variant_id,
            b.token_id,
        ))
    });

    let mut outcome = PairingOutcome::default();
    for e in emphasized {
        let Some(candidates) = neutral_by_key.get(&match_key(e)) else {
            outcome.unmatched.push(Unmatched {
                token_id: e.token_id,
                reason: format!(
                    "no neutral rendition of {:?} at position {} for speaker {} in sentence {}",
                    e.word_text, e.word_position, e.speaker_id, e.sentence_id
                ),
            });
            continue;
        };
        let chosen = match policy {
            PairingPolicy::FirstVariant => &candidates[..1],
            PairingPolicy::AllCombinations => &candidates[..],
        };
        for n in chosen {
            outcome.pairs.pairs.push(Pair {
                neutral_token_id: n.token_id,
                emphasized_token_id: e.token_id,
                word_text: e.word_text.clone(),
                speaker_id: e.speaker_id.clone(),
                sentence_id: e.sentence_id.clone(),
            });
        }
    }
    outcome
}

/// Copies the neutral (`A`) and emphasized (`B`) rows of `layer` for every pair.
pub fn gather_from_layer(
    layer: &LayerMatrix,
    pairs: &PairSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = pairs.len();
    let d = layer.dim();
    let mut a = DMatrix::zeros(n, d);
    let mut b = DMatrix::zeros(n, d);
    for (i, p) in pairs.iter().enumerate() {
        for (target, id) in [(&mut a, p.neutral_token_id), (&mut b, p.emphasized_token_id)] {
            if id >= layer.n_rows() {
                return Err(Error::Index(format!(
                    "pair {i} references token {id}, layer {} has {} rows",
                    layer.layer_index(),
                    layer.n_rows()
                )));
            }
            for (j, v) in layer.row(id).iter().enumerate() {
                target[(i, j)] = f64::from(*v);
            }
        }
    }
    Ok((a, b))
}

pub fn gather_matrices(
    dataset: &Dataset,
    pairs: &PairSet,
    layer_index: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let layer = dataset.layer(layer_index)?;
    gather_from_layer(&layer, pairs)
}
