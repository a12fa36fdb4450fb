//! Synthetic verb-object scenes. A verb is a spatial relation between a
//! person silhouette and an object; an object is a shape family at a size
//! class.

pub mod relation;
pub mod render;
pub mod vt60;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Cursor;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IoContext, Result, S2sError};
use crate::maskio::{scene_paths, write_scene, InstanceMask, Mask, SceneAnnotation};
pub use relation::{Geometry, RelationKind};
pub use render::{person_sprite, render_rgb, shape_sprite, Sprite};
pub use vt60::{confusion_split, vt60_objects_per_verb, vt60_split, OBJECT_SHAPES, VT60_TABLE};

/// Placement attempts per scene before giving up.
pub const MAX_ATTEMPTS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Circle,
    Rectangle,
    Triangle,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    /// Nominal extent in pixels at a 64-pixel canvas.
    pub fn base_pixels(self) -> f64 {
        match self {
            SizeClass::Small => 6.0,
            SizeClass::Medium => 9.0,
            SizeClass::Large => 13.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSpec {
    pub name: String,
    pub relation: RelationKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: ShapeFamily,
    pub size: SizeClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub verbs: Vec<VerbSpec>,
    pub objects: Vec<ObjectSpec>,
    pub image_size: usize,
    pub samples_per_pair: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.verbs.is_empty() || self.objects.is_empty() {
            return Err(S2sError::Config(
                "verbs and objects must be non-empty".into(),
            ));
        }
        if self.image_size == 0 {
            return Err(S2sError::Config("image_size must be positive".into()));
        }
        let mut verbs = BTreeSet::new();
        for v in &self.verbs {
            if v.name.trim().is_empty() || !verbs.insert(&v.name) {
                return Err(S2sError::Config(format!(
                    "empty or duplicate verb `{}`",
                    v.name
                )));
            }
        }
        let mut objects = BTreeSet::new();
        for o in &self.objects {
            if o.name.trim().is_empty() || !objects.insert(&o.name) {
                return Err(S2sError::Config(format!(
                    "empty or duplicate object `{}`",
                    o.name
                )));
            }
        }
        Ok(())
    }

    pub fn verb(&self, name: &str) -> Option<&VerbSpec> {
        self.verbs.iter().find(|v| v.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoPair {
    pub verb: String,
    pub object: String,
}

impl VoPair {
    pub fn new(verb: &str, object: &str) -> Self {
        VoPair {
            verb: verb.into(),
            object: object.into(),
        }
    }
}

impl std::fmt::Display for VoPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.verb, self.object)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VOSplit {
    pub train_pairs: BTreeSet<VoPair>,
    pub test_pairs: BTreeSet<VoPair>,
}

impl VOSplit {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.train_pairs.intersection(&self.test_pairs).next() {
            return Err(S2sError::Consistency(format!(
                "pair `{p}` is on both sides of the split"
            )));
        }
        let train_verbs = self.verbs(Side::Train);
        if let Some(v) = self.verbs(Side::Test).difference(&train_verbs).next() {
            return Err(S2sError::Consistency(format!(
                "test verb `{v}` never occurs in training"
            )));
        }
        Ok(())
    }

    pub fn pairs(&self, side: Side) -> &BTreeSet<VoPair> {
        match side {
            Side::Train => &self.train_pairs,
            Side::Test => &self.test_pairs,
        }
    }

    pub fn verbs(&self, side: Side) -> BTreeSet<String> {
        self.pairs(side).iter().map(|p| p.verb.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

/// Partition each verb's objects between train and test. Even counts split
/// in half; odd counts alternate between rounding the train share down and
/// up, in verb order.
pub fn make_split(
    verbs: &[String],
    objects_per_verb: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<VOSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = VOSplit::default();
    let mut odd_seen = 0usize;
    for verb in verbs {
        let mut objects: Vec<&String> = objects_per_verb
            .get(verb)
            .map(|o| o.iter().collect())
            .unwrap_or_default();
        objects.sort();
        objects.dedup();
        if objects.len() < 2 {
            return Err(S2sError::SplitInfeasible {
                verb: verb.clone(),
                count: objects.len(),
            });
        }
        objects.shuffle(&mut rng);
        let n = objects.len();
        let n_train = if n.is_multiple_of(2) {
            n / 2
        } else {
            odd_seen += 1;
            if odd_seen % 2 == 1 {
                n / 2
            } else {
                n / 2 + 1
            }
        };
        for (i, o) in objects.into_iter().enumerate() {
            let pair = VoPair::new(verb, o);
            if i < n_train {
                split.train_pairs.insert(pair);
            } else {
                split.test_pairs.insert(pair);
            }
        }
    }
    Ok(split)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub verb: String,
    pub object: String,
    pub split: Side,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Manifest> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let bytes = fs::read(&path).at(&path)?;
        Ok(Manifest {
            entries: serde_json::from_slice(&bytes)?,
        })
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(&self.entries)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).at(&path)
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == side)
    }

    pub fn pairs(&self, side: Side) -> BTreeSet<VoPair> {
        self.side(side)
            .map(|e| VoPair::new(&e.verb, &e.object))
            .collect()
    }
}

/// `lie on`, `baseball bat`, 3 → `lie_on__baseball_bat__0003`.
pub fn image_id(pair: &VoPair, index: usize) -> String {
    let slug = |s: &str| s.split_whitespace().collect::<Vec<_>>().join("_");
    format!("{}__{}__{:04}", slug(&pair.verb), slug(&pair.object), index)
}

/// Per-scene stream keyed by seed and image id only.
pub fn scene_rng(seed: u64, image_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn stamp(size: usize, sprite: &Sprite, x0: isize, y0: isize) -> Option<Mask> {
    if x0 < 0 || y0 < 0 || x0 as usize + sprite.width > size || y0 as usize + sprite.height > size {
        return None;
    }
    let mut m = Mask::new(size, size);
    for &(x, y) in &sprite.pixels {
        m.set(x0 as usize + x, y0 as usize + y, true);
    }
    Some(m)
}

fn object_origin<R: Rng>(
    kind: RelationKind,
    (px, py, pw, ph): (isize, isize, isize, isize),
    (ow, oh): (isize, isize),
    scale: f64,
    rng: &mut R,
) -> (isize, isize) {
    let px_f = |v: f64| (v * scale).round() as isize;
    let centered_x =
        px + pw / 2 - ow / 2 + (rng.random_range(-0.3..=0.3) * pw as f64).round() as isize;
    let side_y = py + ph / 2 - oh / 2 + (rng.random_range(-0.2..=0.2) * ph as f64).round() as isize;
    let right = rng.random_bool(0.5);
    let beside = |g: isize| if right { px + pw + g } else { px - ow - g };
    match kind {
        RelationKind::AboveContact => (centered_x, py + ph + rng.random_range(-1..=0i32) as isize),
        RelationKind::BeneathContact => (centered_x, py - oh + rng.random_range(0..=1i32) as isize),
        RelationKind::AboveGap => (centered_x, py + ph + px_f(rng.random_range(5.0..=10.0))),
        RelationKind::BeneathGap => (centered_x, py - oh - px_f(rng.random_range(5.0..=10.0))),
        RelationKind::AdjacentSide => (beside(rng.random_range(0..=2i32) as isize), side_y),
        RelationKind::SideGap => (beside(px_f(rng.random_range(7.0..=14.0))), side_y),
        RelationKind::OverlapMajor => {
            let x =
                px + pw / 2 - ow / 2 + (rng.random_range(-0.2..=0.2) * pw as f64).round() as isize;
            (
                x,
                py + (rng.random_range(0.3..=0.7) * ph as f64).round() as isize - oh / 2,
            )
        }
        RelationKind::OverlapMinor => {
            let inside = (rng.random_range(0.2..=0.4) * ow as f64).round() as isize;
            let x = if right {
                px + pw - inside
            } else {
                px - ow + inside
            };
            (
                x,
                py + ph / 3 + (rng.random_range(0.0..=0.4) * ph as f64).round() as isize - oh / 2,
            )
        }
        RelationKind::Diagonal => {
            let x = beside(px_f(rng.random_range(4.0..=9.0)));
            let dy = px_f(rng.random_range(3.0..=6.0));
            (
                x,
                if rng.random_bool(0.5) {
                    py + ph + dy
                } else {
                    py - oh - dy
                },
            )
        }
    }
}

/// Sample one scene whose person/object layout satisfies exactly the verb's
/// relation. Returns the annotation and its RGB rendering.
pub fn generate_scene(
    config: &SynthConfig,
    verb: &VerbSpec,
    object: &ObjectSpec,
    image_id: &str,
) -> Result<(SceneAnnotation, image::RgbImage)> {
    let size = config.image_size;
    let scale = size as f64 / 64.0;
    let mut rng = scene_rng(config.seed, image_id);
    for _ in 0..MAX_ATTEMPTS {
        let person = person_sprite(scale * rng.random_range(0.9..=1.1));
        let sprite = shape_sprite(
            object.shape,
            object.size.base_pixels() * scale * rng.random_range(0.85..=1.15),
        );
        if person.width > size || person.height > size {
            break;
        }
        let px = rng.random_range(0..=size - person.width) as isize;
        let py = rng.random_range(0..=size - person.height) as isize;
        let (ox, oy) = object_origin(
            verb.relation,
            (px, py, person.width as isize, person.height as isize),
            (sprite.width as isize, sprite.height as isize),
            scale,
            &mut rng,
        );
        let (Some(pm), Some(om)) = (stamp(size, &person, px, py), stamp(size, &sprite, ox, oy))
        else {
            continue;
        };
        let Some(geom) = Geometry::measure(&pm, &om) else {
            continue;
        };
        if geom.relations() != [verb.relation] {
            continue;
        }
        let scene = SceneAnnotation {
            image_id: image_id.to_string(),
            width: size,
            height: size,
            instances: vec![
                InstanceMask {
                    label: "person".into(),
                    mask: pm,
                },
                InstanceMask {
                    label: object.name.clone(),
                    mask: om,
                },
            ],
            verb: verb.name.clone(),
            object: object.name.clone(),
            rgb_path: None,
        };
        let rgb = render_rgb(&scene, &mut rng);
        return Ok((scene, rgb));
    }
    Err(S2sError::Generation(format!(
        "could not place `{}` for `{}` ({:?}) on a {size}x{size} canvas",
        object.name, verb.name, verb.relation
    )))
}

fn encode_png(img: &image::RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Write `samples_per_pair` scenes for every pair of the split plus
/// `manifest.json`. Train pairs come first, each side in pair order.
pub fn generate_dataset(
    config: &SynthConfig,
    split: &VOSplit,
    out_root: impl AsRef<Path>,
) -> Result<Manifest> {
    config.validate()?;
    split.validate()?;
    let root = out_root.as_ref();
    fs::create_dir_all(root).at(root)?;
    let mut manifest = Manifest::default();
    for side in [Side::Train, Side::Test] {
        for pair in split.pairs(side) {
            let verb = config.verb(&pair.verb).ok_or_else(|| {
                S2sError::Config(format!("split verb `{}` not in config", pair.verb))
            })?;
            let object = config.object(&pair.object).ok_or_else(|| {
                S2sError::Config(format!("split object `{}` not in config", pair.object))
            })?;
            for i in 0..config.samples_per_pair {
                let id = image_id(pair, i);
                let (scene, rgb) = generate_scene(config, verb, object, &id)?;
                write_scene(root, &scene)?;
                let (_, _, png) = scene_paths(root, &id);
                fs::write(&png, encode_png(&rgb)?).at(&png)?;
                manifest.entries.push(ManifestEntry {
                    image_id: id,
                    verb: pair.verb.clone(),
                    object: pair.object.clone(),
                    split: side,
                });
            }
        }
    }
    manifest.save(root)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vt60_map() -> (Vec<String>, BTreeMap<String, Vec<String>>) {
        let per = vt60_objects_per_verb();
        (
            per.iter().map(|(v, _)| v.clone()).collect(),
            per.into_iter().collect(),
        )
    }

    #[test]
    fn vt60_table_has_sixty_pairs_thirty_each() {
        let s = vt60_split();
        assert_eq!((s.train_pairs.len(), s.test_pairs.len()), (30, 30));
        s.validate().unwrap();
        assert_eq!(vt60_objects_per_verb().len(), 9);
        let objects: BTreeSet<_> = s
            .train_pairs
            .iter()
            .chain(&s.test_pairs)
            .map(|p| p.object.clone())
            .collect();
        assert_eq!(objects.len(), 37);
        assert_eq!(OBJECT_SHAPES.len(), 37);
    }

    #[test]
    fn make_split_vt60_counts() {
        let (verbs, map) = vt60_map();
        for seed in 0..5 {
            let s = make_split(&verbs, &map, seed).unwrap();
            assert_eq!((s.train_pairs.len(), s.test_pairs.len()), (30, 30));
            s.validate().unwrap();
        }
    }

    #[test]
    fn minimal_split_and_infeasible() {
        let verbs = vec!["v".to_string()];
        let map = BTreeMap::from([("v".to_string(), vec!["a".to_string(), "b".to_string()])]);
        let s = make_split(&verbs, &map, 3).unwrap();
        assert_eq!(s, make_split(&verbs, &map, 3).unwrap());
        assert_eq!((s.train_pairs.len(), s.test_pairs.len()), (1, 1));
        let one = BTreeMap::from([("v".to_string(), vec!["a".to_string()])]);
        assert!(matches!(
            make_split(&verbs, &one, 0),
            Err(S2sError::SplitInfeasible { count: 1, .. })
        ));
    }

    #[test]
    fn image_ids_slug_phrases() {
        assert_eq!(
            image_id(&VoPair::new("lie on", "baseball bat"), 3),
            "lie_on__baseball_bat__0003"
        );
    }

    #[test]
    fn every_pair_is_placeable() {
        let cfg = SynthConfig::vt60(64, 1, 11);
        let s = vt60_split();
        for p in s.train_pairs.iter().chain(&s.test_pairs) {
            for i in 0..5 {
                let (scene, _) = generate_scene(
                    &cfg,
                    cfg.verb(&p.verb).unwrap(),
                    cfg.object(&p.object).unwrap(),
                    &image_id(p, i),
                )
                .unwrap();
                let g =
                    Geometry::measure(&scene.instances[0].mask, &scene.instances[1].mask).unwrap();
                assert_eq!(g.relations(), vec![cfg.verb(&p.verb).unwrap().relation]);
            }
        }
    }
}
