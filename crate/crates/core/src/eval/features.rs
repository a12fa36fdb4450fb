//! Feature dumps for projection analyses.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelScorer;
use crate::error::{Result, S2sError};
use crate::synthgen::{ManifestEntry, VoPair};
use crate::train::images_by_pair;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Vnet,
    Qnet,
    ConcatMatched,
    ConcatUnmatched,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Vnet,
        FeatureKind::Qnet,
        FeatureKind::ConcatMatched,
        FeatureKind::ConcatUnmatched,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Vnet => "vnet",
            FeatureKind::Qnet => "qnet",
            FeatureKind::ConcatMatched => "concat_matched",
            FeatureKind::ConcatUnmatched => "concat_unmatched",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = S2sError;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| S2sError::Config(format!("unknown feature kind `{s}`")))
    }
}

/// Label columns written before the feature columns.
pub const LABEL_COLUMNS: [&str; 6] = [
    "image_id",
    "verb",
    "object",
    "query_verb",
    "query_object",
    "matched",
];

/// One row per image of `entries`. Unmatched rows pair the image with a
/// uniformly drawn other pair occurring in `entries`. Returns the row count.
pub fn dump_features<W: Write>(
    scorer: &mut ModelScorer<'_>,
    entries: &[ManifestEntry],
    which: FeatureKind,
    seed: u64,
    out: W,
) -> Result<usize> {
    let pairs: Vec<VoPair> = images_by_pair(entries).into_keys().collect();
    if which == FeatureKind::ConcatUnmatched && pairs.len() < 2 {
        return Err(S2sError::Protocol(
            "unmatched rows need at least two distinct pairs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut writer = csv::Writer::from_writer(out);
    let mut header_written = false;
    for e in entries {
        let truth = VoPair::new(&e.verb, &e.object);
        let query = if which == FeatureKind::ConcatUnmatched {
            let own = pairs.binary_search(&truth).expect("pair listed");
            let mut j = rng.random_range(0..pairs.len() - 1);
            if j >= own {
                j += 1;
            }
            pairs[j].clone()
        } else {
            truth.clone()
        };
        let feature: Vec<f32> = match which {
            FeatureKind::Vnet => scorer.visual_feature(&e.image_id)?,
            FeatureKind::Qnet => scorer.query_feature(&query)?,
            FeatureKind::ConcatMatched | FeatureKind::ConcatUnmatched => {
                let mut f = scorer.visual_feature(&e.image_id)?;
                f.extend(scorer.query_feature(&query)?);
                f
            }
        };
        if !header_written {
            let mut header: Vec<String> = LABEL_COLUMNS.iter().map(|s| s.to_string()).collect();
            header.extend((0..feature.len()).map(|i| format!("f{i}")));
            writer.write_record(&header)?;
            header_written = true;
        }
        let mut row = vec![
            e.image_id.clone(),
            e.verb.clone(),
            e.object.clone(),
            query.verb.clone(),
            query.object.clone(),
            u8::from(query == truth).to_string(),
        ];
        row.extend(feature.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| S2sError::io("<features>", e))?;
    Ok(entries.len())
}

/// A parsed feature file: label columns are every column not named `f<k>`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub label_columns: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub features: Vec<Vec<f64>>,
}

fn is_feature_column(name: &str) -> bool {
    name.strip_prefix('f')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

impl FeatureTable {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.label_columns.iter().position(|c| c == name)?;
        Some(self.labels.iter().map(|r| r[k].as_str()).collect())
    }
}

pub fn read_features<R: Read>(input: R) -> Result<FeatureTable> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    let is_feat: Vec<bool> = header.iter().map(is_feature_column).collect();
    let label_columns = header
        .iter()
        .zip(&is_feat)
        .filter(|(_, &f)| !f)
        .map(|(h, _)| h.to_string())
        .collect();
    let (mut labels, mut features) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (mut l, mut f) = (Vec::new(), Vec::new());
        for (field, &feat) in rec.iter().zip(&is_feat) {
            if feat {
                f.push(field.parse::<f64>().map_err(|e| S2sError::Parse {
                    line: i + 2,
                    msg: e.to_string(),
                })?);
            } else {
                l.push(field.to_string());
            }
        }
        labels.push(l);
        features.push(f);
    }
    Ok(FeatureTable {
        label_columns,
        labels,
        features,
    })
}
