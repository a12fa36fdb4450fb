//! Label inventories mirroring the VT60 verb-object table, plus the small
//! two-verb confusion set.

use super::relation::RelationKind;
use super::{ObjectSpec, ShapeFamily, SizeClass, SynthConfig, VOSplit, VerbSpec, VoPair};

/// `(verb, relation, train objects, test objects)`.
pub const VT60_TABLE: &[(&str, RelationKind, &[&str], &[&str])] = &[
    (
        "eat",
        RelationKind::BeneathContact,
        &["apple", "banana"],
        &["broccoli", "donut"],
    ),
    (
        "feed",
        RelationKind::SideGap,
        &["bird", "cat", "cow"],
        &["dog", "giraffe", "horse", "sheep"],
    ),
    (
        "hold",
        RelationKind::OverlapMajor,
        &[
            "baseball bat",
            "book",
            "bottle",
            "carrot",
            "cell phone",
            "cup",
            "frisbee",
            "hair dryer",
            "handbag",
            "knife",
        ],
        &[
            "orange",
            "scissors",
            "skateboard",
            "sports ball",
            "surfboard",
            "tennis racket",
            "toothbrush",
            "vase",
            "wine glass",
        ],
    ),
    (
        "kiss",
        RelationKind::AdjacentSide,
        &["dog", "giraffe", "horse"],
        &["bird", "cat", "cow"],
    ),
    (
        "lie on",
        RelationKind::AboveContact,
        &["bed", "bench"],
        &["couch", "surfboard"],
    ),
    (
        "ride",
        RelationKind::OverlapMinor,
        &["bicycle", "cow", "elephant"],
        &["horse", "motorcycle", "sheep"],
    ),
    (
        "sit on",
        RelationKind::Diagonal,
        &["bed", "bench"],
        &["chair", "couch"],
    ),
    (
        "stand on",
        RelationKind::AboveGap,
        &["bed", "bench"],
        &["chair", "couch"],
    ),
    (
        "wash",
        RelationKind::BeneathGap,
        &["bicycle", "cow", "dog"],
        &["elephant", "horse", "motorcycle"],
    ),
];

/// Shape family and size class for every object label.
pub const OBJECT_SHAPES: &[(&str, ShapeFamily, SizeClass)] = &[
    ("apple", ShapeFamily::Circle, SizeClass::Small),
    ("banana", ShapeFamily::Triangle, SizeClass::Small),
    ("broccoli", ShapeFamily::Ring, SizeClass::Small),
    ("donut", ShapeFamily::Ring, SizeClass::Small),
    ("carrot", ShapeFamily::Triangle, SizeClass::Small),
    ("orange", ShapeFamily::Circle, SizeClass::Small),
    ("bird", ShapeFamily::Triangle, SizeClass::Small),
    ("cat", ShapeFamily::Circle, SizeClass::Medium),
    ("cow", ShapeFamily::Rectangle, SizeClass::Large),
    ("dog", ShapeFamily::Rectangle, SizeClass::Medium),
    ("giraffe", ShapeFamily::Triangle, SizeClass::Large),
    ("horse", ShapeFamily::Rectangle, SizeClass::Large),
    ("sheep", ShapeFamily::Circle, SizeClass::Medium),
    ("elephant", ShapeFamily::Circle, SizeClass::Large),
    ("bed", ShapeFamily::Rectangle, SizeClass::Large),
    ("bench", ShapeFamily::Rectangle, SizeClass::Medium),
    ("couch", ShapeFamily::Rectangle, SizeClass::Large),
    ("chair", ShapeFamily::Triangle, SizeClass::Medium),
    ("bicycle", ShapeFamily::Ring, SizeClass::Medium),
    ("motorcycle", ShapeFamily::Ring, SizeClass::Large),
    ("baseball bat", ShapeFamily::Rectangle, SizeClass::Small),
    ("frisbee", ShapeFamily::Circle, SizeClass::Small),
    ("skateboard", ShapeFamily::Rectangle, SizeClass::Medium),
    ("surfboard", ShapeFamily::Triangle, SizeClass::Large),
    ("sports ball", ShapeFamily::Circle, SizeClass::Small),
    ("tennis racket", ShapeFamily::Ring, SizeClass::Medium),
    ("book", ShapeFamily::Rectangle, SizeClass::Small),
    ("bottle", ShapeFamily::Rectangle, SizeClass::Small),
    ("cell phone", ShapeFamily::Rectangle, SizeClass::Small),
    ("cup", ShapeFamily::Triangle, SizeClass::Small),
    ("hair dryer", ShapeFamily::Triangle, SizeClass::Small),
    ("handbag", ShapeFamily::Ring, SizeClass::Small),
    ("knife", ShapeFamily::Triangle, SizeClass::Small),
    ("scissors", ShapeFamily::Ring, SizeClass::Small),
    ("toothbrush", ShapeFamily::Rectangle, SizeClass::Small),
    ("vase", ShapeFamily::Circle, SizeClass::Medium),
    ("wine glass", ShapeFamily::Triangle, SizeClass::Medium),
];

fn object_specs() -> Vec<ObjectSpec> {
    OBJECT_SHAPES
        .iter()
        .map(|&(name, shape, size)| ObjectSpec {
            name: name.into(),
            shape,
            size,
        })
        .collect()
}

impl SynthConfig {
    /// Nine verbs, 37 objects, 60 verb-object pairs.
    pub fn vt60(image_size: usize, samples_per_pair: usize, seed: u64) -> Self {
        SynthConfig {
            verbs: VT60_TABLE
                .iter()
                .map(|&(v, r, _, _)| VerbSpec {
                    name: v.into(),
                    relation: r,
                })
                .collect(),
            objects: object_specs(),
            image_size,
            samples_per_pair,
            seed,
        }
    }

    /// Two verbs crossed with four objects.
    pub fn confusion(image_size: usize, samples_per_pair: usize, seed: u64) -> Self {
        let keep = ["horse", "cow", "bicycle", "elephant"];
        SynthConfig {
            verbs: VT60_TABLE
                .iter()
                .filter(|(v, ..)| matches!(*v, "ride" | "wash"))
                .map(|&(v, r, _, _)| VerbSpec {
                    name: v.into(),
                    relation: r,
                })
                .collect(),
            objects: object_specs()
                .into_iter()
                .filter(|o| keep.contains(&o.name.as_str()))
                .collect(),
            image_size,
            samples_per_pair,
            seed,
        }
    }
}

/// The exact train/test assignment of the VT60 table.
pub fn vt60_split() -> VOSplit {
    let mut split = VOSplit::default();
    for &(verb, _, train, test) in VT60_TABLE {
        split
            .train_pairs
            .extend(train.iter().map(|o| VoPair::new(verb, o)));
        split
            .test_pairs
            .extend(test.iter().map(|o| VoPair::new(verb, o)));
    }
    split
}

/// Per-verb object lists of the VT60 table (train and test merged).
pub fn vt60_objects_per_verb() -> Vec<(String, Vec<String>)> {
    VT60_TABLE
        .iter()
        .map(|&(verb, _, train, test)| {
            (
                verb.to_string(),
                train.iter().chain(test).map(|o| o.to_string()).collect(),
            )
        })
        .collect()
}

/// Cross-paired split: `ride` is trained on horse and cow, `wash` on bicycle
/// and elephant; the test set swaps them.
pub fn confusion_split() -> VOSplit {
    let mut split = VOSplit::default();
    for o in ["horse", "cow"] {
        split.train_pairs.insert(VoPair::new("ride", o));
        split.test_pairs.insert(VoPair::new("wash", o));
    }
    for o in ["bicycle", "elephant"] {
        split.train_pairs.insert(VoPair::new("wash", o));
        split.test_pairs.insert(VoPair::new("ride", o));
    }
    split
}
