//! Zero-shot evaluation protocols and feature analysis.

pub mod features;
pub mod plot;
pub mod tsne;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, S2sError};
use crate::model::TwoStreamModel;
use crate::pipeline::InputPipeline;
use crate::synthgen::{ManifestEntry, VoPair};
use crate::train::QueryCache;
use crate::wordvec::EmbeddingTable;

pub use features::{dump_features, read_features, FeatureKind, FeatureTable};
pub use plot::plot_scatter;
pub use tsne::{project2d, tsne, Projection, TsneConfig};

/// Scores one image against a list of candidate queries.
pub trait Scorer {
    fn scores(&mut self, entry: &ManifestEntry, candidates: &[VoPair]) -> Result<Vec<f64>>;
}

/// Adapts a per-candidate closure.
pub struct FnScorer<F>(pub F);

impl<F: FnMut(&ManifestEntry, &VoPair) -> f64> Scorer for FnScorer<F> {
    fn scores(&mut self, entry: &ManifestEntry, candidates: &[VoPair]) -> Result<Vec<f64>> {
        Ok(candidates.iter().map(|c| (self.0)(entry, c)).collect())
    }
}

/// τ = 1 on the ground-truth pair, 0 elsewhere.
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn scores(&mut self, entry: &ManifestEntry, candidates: &[VoPair]) -> Result<Vec<f64>> {
        Ok(candidates
            .iter()
            .map(|c| f64::from(u8::from(c.verb == entry.verb && c.object == entry.object)))
            .collect())
    }
}

/// Scores with a trained model, loading each image from `root`.
pub struct ModelScorer<'a> {
    pub model: &'a TwoStreamModel<f32>,
    pub pipeline: &'a InputPipeline,
    pub words: &'a EmbeddingTable,
    pub root: PathBuf,
    queries: QueryCache<f32>,
    encoded: HashMap<VoPair, Vec<f32>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        model: &'a TwoStreamModel<f32>,
        pipeline: &'a InputPipeline,
        words: &'a EmbeddingTable,
        root: &Path,
    ) -> Self {
        ModelScorer {
            model,
            pipeline,
            words,
            root: root.to_path_buf(),
            queries: QueryCache::new(),
            encoded: HashMap::new(),
        }
    }

    pub fn query_feature(&mut self, pair: &VoPair) -> Result<Vec<f32>> {
        if let Some(f) = self.encoded.get(pair) {
            return Ok(f.clone());
        }
        let q = self.queries.get(self.model, self.words, pair)?;
        let f = self.model.forward_query(q)?;
        self.encoded.insert(pair.clone(), f.clone());
        Ok(f)
    }

    pub fn visual_feature(&self, image_id: &str) -> Result<Vec<f32>> {
        let image = self.pipeline.load(&self.root, image_id)?;
        self.model.forward_vnet(&self.pipeline.feature(&image)?)
    }
}

impl Scorer for ModelScorer<'_> {
    fn scores(&mut self, entry: &ManifestEntry, candidates: &[VoPair]) -> Result<Vec<f64>> {
        let f_v = self.visual_feature(&entry.image_id)?;
        candidates
            .iter()
            .map(|c| {
                let f_q = self.query_feature(c)?;
                Ok(f64::from(self.model.closeness(&f_v, &f_q)?))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    VerbTransfer,
    VoConfusion,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub hits: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub verb: String,
    pub object: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub truth: VoPair,
    pub predicted: VoPair,
    pub hit: bool,
    pub scores: Vec<CandidateScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub accuracy: f64,
    pub hits: usize,
    pub total: usize,
    /// Keyed by true verb (verb transfer) or true pair (confusion).
    pub per_class: BTreeMap<String, ClassCount>,
    pub records: Vec<ImageRecord>,
}

/// Index of the first maximum; NaN never wins.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn run_protocol(
    protocol: Protocol,
    scorer: &mut dyn Scorer,
    entries: &[ManifestEntry],
    candidates_for: impl Fn(&ManifestEntry) -> Vec<VoPair>,
    hit: impl Fn(&VoPair, &VoPair) -> bool,
    class_of: impl Fn(&VoPair) -> String,
) -> Result<EvalReport> {
    if entries.is_empty() {
        return Err(S2sError::Protocol("no test images".into()));
    }
    let mut per_class: BTreeMap<String, ClassCount> = BTreeMap::new();
    let mut records = Vec::with_capacity(entries.len());
    let mut hits = 0;
    for entry in entries {
        let truth = VoPair::new(&entry.verb, &entry.object);
        let candidates = candidates_for(entry);
        let scores = scorer.scores(entry, &candidates)?;
        if scores.len() != candidates.len() {
            return Err(S2sError::Protocol(format!(
                "scorer returned {} scores for {} candidates",
                scores.len(),
                candidates.len()
            )));
        }
        let best = argmax_first(&scores).ok_or_else(|| {
            S2sError::Numeric(format!("no finite score for image {}", entry.image_id))
        })?;
        let predicted = candidates[best].clone();
        let is_hit = hit(&predicted, &truth);
        hits += usize::from(is_hit);
        let class = per_class.entry(class_of(&truth)).or_default();
        class.total += 1;
        class.hits += usize::from(is_hit);
        records.push(ImageRecord {
            image_id: entry.image_id.clone(),
            truth,
            predicted,
            hit: is_hit,
            scores: candidates
                .into_iter()
                .zip(scores)
                .map(|(c, score)| CandidateScore {
                    verb: c.verb,
                    object: c.object,
                    score,
                })
                .collect(),
        });
    }
    Ok(EvalReport {
        protocol,
        accuracy: hits as f64 / entries.len() as f64,
        hits,
        total: entries.len(),
        per_class,
        records,
    })
}

/// Each image is queried with every verb of `verb_set` paired with its own
/// object; the best-scoring verb is the prediction, ties going to the
/// earliest verb.
pub fn verb_transfer_eval(
    scorer: &mut dyn Scorer,
    entries: &[ManifestEntry],
    verb_set: &[String],
) -> Result<EvalReport> {
    if verb_set.is_empty() {
        return Err(S2sError::Protocol("empty verb set".into()));
    }
    if verb_set.iter().collect::<BTreeSet<_>>().len() != verb_set.len() {
        return Err(S2sError::Protocol("verb set has duplicates".into()));
    }
    run_protocol(
        Protocol::VerbTransfer,
        scorer,
        entries,
        |e| verb_set.iter().map(|v| VoPair::new(v, &e.object)).collect(),
        |p, t| p.verb == t.verb,
        |t| t.verb.clone(),
    )
}

/// Each image is queried with every pair of `test_pairs`; ties go to the
/// lexicographically smallest pair.
pub fn confusion_eval(
    scorer: &mut dyn Scorer,
    entries: &[ManifestEntry],
    test_pairs: &BTreeSet<VoPair>,
) -> Result<EvalReport> {
    if test_pairs.is_empty() {
        return Err(S2sError::Protocol("empty candidate pair set".into()));
    }
    let candidates: Vec<VoPair> = test_pairs.iter().cloned().collect();
    run_protocol(
        Protocol::VoConfusion,
        scorer,
        entries,
        |_| candidates.clone(),
        |p, t| p == t,
        |t| t.to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::Side;

    fn entry(id: &str, v: &str, o: &str) -> ManifestEntry {
        ManifestEntry {
            image_id: id.into(),
            verb: v.into(),
            object: o.into(),
            split: Side::Test,
        }
    }

    #[test]
    fn argmax_takes_first_of_ties() {
        assert_eq!(argmax_first(&[0.2, 0.7, 0.7]), Some(1));
        assert_eq!(argmax_first(&[f64::NAN, 0.1]), Some(1));
        assert_eq!(argmax_first(&[f64::NAN]), None);
    }

    #[test]
    fn oracle_is_perfect() {
        let entries = [entry("a", "ride", "horse"), entry("b", "wash", "cow")];
        let verbs = vec!["ride".to_string(), "wash".to_string()];
        let r = verb_transfer_eval(&mut OracleScorer, &entries, &verbs).unwrap();
        assert_eq!((r.accuracy, r.hits, r.total), (1.0, 2, 2));
        assert!(r.records.iter().all(|x| x.scores.len() == 2));
        let pairs: BTreeSet<_> = [VoPair::new("ride", "horse"), VoPair::new("wash", "cow")].into();
        assert_eq!(
            confusion_eval(&mut OracleScorer, &entries, &pairs)
                .unwrap()
                .accuracy,
            1.0
        );
    }

    #[test]
    fn empty_inputs_are_protocol_errors() {
        let e = [entry("a", "ride", "horse")];
        assert!(matches!(
            verb_transfer_eval(&mut OracleScorer, &e, &[]),
            Err(S2sError::Protocol(_))
        ));
        assert!(matches!(
            confusion_eval(&mut OracleScorer, &e, &BTreeSet::new()),
            Err(S2sError::Protocol(_))
        ));
    }
}
