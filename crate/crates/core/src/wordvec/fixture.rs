//! A small stand-in for a pretrained word-vector model.
//!
//! Every word belongs to a coarse semantic group (animals, food, furniture,
//! ...) and its vector is its group centroid plus a word-specific component,
//! so words of the same group are measurably closer than words across groups.
//! Multi-word labels are stored either as underscore phrases or only through
//! their tokens, which exercises both resolution paths of `embed_label`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmbeddingTable;
use crate::error::Result;

/// `(table key, semantic group)` for every fixture entry.
pub const FIXTURE_VOCABULARY: &[(&str, &str)] = &[
    ("person", "human"),
    // verbs and the particle used by phrasal verbs
    ("eat", "action"),
    ("feed", "action"),
    ("hold", "action"),
    ("kiss", "action"),
    ("lie", "action"),
    ("ride", "action"),
    ("sit", "action"),
    ("stand", "action"),
    ("wash", "action"),
    ("on", "particle"),
    // animals
    ("bird", "animal"),
    ("cat", "animal"),
    ("cow", "animal"),
    ("dog", "animal"),
    ("giraffe", "animal"),
    ("horse", "animal"),
    ("sheep", "animal"),
    ("elephant", "animal"),
    // food
    ("apple", "food"),
    ("banana", "food"),
    ("broccoli", "food"),
    ("donut", "food"),
    ("carrot", "food"),
    ("orange", "food"),
    // furniture
    ("bed", "furniture"),
    ("bench", "furniture"),
    ("couch", "furniture"),
    ("chair", "furniture"),
    // vehicles
    ("bicycle", "vehicle"),
    ("motorcycle", "vehicle"),
    // sports gear
    ("baseball_bat", "sport"),
    ("frisbee", "sport"),
    ("skateboard", "sport"),
    ("surfboard", "sport"),
    ("sports_ball", "sport"),
    ("tennis_racket", "sport"),
    // handheld objects
    ("book", "object"),
    ("bottle", "object"),
    ("cell_phone", "object"),
    ("cup", "object"),
    ("hair_dryer", "object"),
    ("handbag", "object"),
    ("knife", "object"),
    ("scissors", "object"),
    ("toothbrush", "object"),
    ("vase", "object"),
    // "wine glass" resolves through its tokens
    ("wine", "food"),
    ("glass", "object"),
];

const GROUP_WEIGHT: f64 = 0.8;
const WORD_WEIGHT: f64 = 0.6;

/// Deterministic clustered word vectors of dimension `dim` covering every
/// label used by the synthetic datasets.
pub fn semantic_fixture_table(dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let mut groups: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut entries = Vec::with_capacity(FIXTURE_VOCABULARY.len());
    for &(word, group) in FIXTURE_VOCABULARY {
        let centroid = match groups.iter().find(|(g, _)| *g == group) {
            Some((_, c)) => c.clone(),
            None => {
                let c = unit(&mut rng);
                groups.push((group, c.clone()));
                c
            }
        };
        let own = unit(&mut rng);
        let v = centroid
            .iter()
            .zip(&own)
            .map(|(c, o)| GROUP_WEIGHT * c + WORD_WEIGHT * o)
            .collect();
        entries.push((word, v));
    }
    EmbeddingTable::from_entries(dim, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn same_group_words_are_closer() {
        let t = semantic_fixture_table(64, 0).unwrap();
        let horse = t.embed_label("horse").unwrap();
        let cow = t.embed_label("cow").unwrap();
        let couch = t.embed_label("couch").unwrap();
        assert!(cos(&horse, &cow) > cos(&horse, &couch) + 0.2);
    }

    #[test]
    fn covers_multi_word_labels() {
        let t = semantic_fixture_table(16, 0).unwrap();
        for label in ["wine glass", "baseball bat", "lie on", "sports ball"] {
            assert_eq!(t.embed_label(label).unwrap().len(), 16);
        }
    }
}
