//! Turning stored scenes into V-Net inputs for each input mode.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Result, S2sError};
use crate::maskio::{read_scene, scene_paths, SceneAnnotation};
use crate::model::InputMode;
use crate::nn::{Feature, Real};
use crate::synthgen::{Manifest, ManifestEntry};
use crate::wordvec::{embed_label, make_orthonormal_table, EmbeddingTable};

/// Orthonormal control table over `person` plus every object label, in
/// sorted order.
pub fn orthovec_table<'a>(
    objects: impl IntoIterator<Item = &'a str>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut labels: BTreeSet<&str> = objects.into_iter().collect();
    labels.insert("person");
    let labels: Vec<&str> = labels.into_iter().collect();
    make_orthonormal_table(&labels, dim, seed)
}

/// A scene loaded once and kept in memory. RGB images are decoded eagerly;
/// blobs are stamped on demand from the masks.
#[derive(Clone, Debug)]
pub enum LoadedImage {
    Rgb(Feature<f32>),
    Scene(SceneAnnotation),
}

/// Builds V-Net inputs of one mode at one resolution.
#[derive(Clone, Debug)]
pub struct InputPipeline {
    mode: InputMode,
    size: usize,
    stamp_table: Option<EmbeddingTable>,
}

impl InputPipeline {
    pub fn rgb(size: usize) -> Self {
        InputPipeline {
            mode: InputMode::Rgb,
            size,
            stamp_table: None,
        }
    }

    /// `table` supplies the stamped vectors: word vectors for S2S, the
    /// orthonormal table for the control.
    pub fn blob(mode: InputMode, size: usize, table: EmbeddingTable) -> Result<Self> {
        if mode == InputMode::Rgb {
            return Err(S2sError::Config("RGB input does not stamp vectors".into()));
        }
        Ok(InputPipeline {
            mode,
            size,
            stamp_table: Some(table),
        })
    }

    /// Pipeline for a dataset: word vectors for S2S, a seeded orthonormal
    /// table over the manifest's objects for the control.
    pub fn for_mode(
        mode: InputMode,
        size: usize,
        words: &EmbeddingTable,
        manifest: &Manifest,
        seed: u64,
    ) -> Result<Self> {
        match mode {
            InputMode::Rgb => Ok(Self::rgb(size)),
            InputMode::S2s => Self::blob(mode, size, words.clone()),
            InputMode::Orthovec2s => {
                let table = orthovec_table(
                    manifest.entries.iter().map(|e| e.object.as_str()),
                    words.dim(),
                    seed,
                )?;
                Self::blob(mode, size, table)
            }
        }
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.stamp_table.as_ref().map_or(3, EmbeddingTable::dim)
    }

    pub fn load(&self, root: &Path, image_id: &str) -> Result<LoadedImage> {
        match self.mode {
            InputMode::Rgb => {
                let (_, _, png) = scene_paths(root, image_id);
                Ok(LoadedImage::Rgb(load_rgb(&png, self.size)?))
            }
            _ => Ok(LoadedImage::Scene(read_scene(root, image_id)?)),
        }
    }

    pub fn load_all(&self, root: &Path, entries: &[ManifestEntry]) -> Result<Vec<LoadedImage>> {
        entries
            .iter()
            .map(|e| self.load(root, &e.image_id))
            .collect()
    }

    pub fn feature<T: Real>(&self, image: &LoadedImage) -> Result<Feature<T>> {
        match (image, &self.stamp_table) {
            (LoadedImage::Rgb(f), None) => Ok(f.cast()),
            (LoadedImage::Scene(scene), Some(table)) => self.scene_feature(scene, table),
            _ => Err(S2sError::Config(
                "loaded image does not match the input pipeline".into(),
            )),
        }
    }

    /// Same values as [`crate::s2s::build_s2s`] followed by a layout change, stamped
    /// straight into channel planes.
    fn scene_feature<T: Real>(
        &self,
        scene: &SceneAnnotation,
        table: &EmbeddingTable,
    ) -> Result<Feature<T>> {
        let (size, depth) = (self.size, table.dim());
        let plane = size * size;
        let mut acc = vec![0.0f64; depth * plane];
        for inst in &scene.instances {
            let vector = embed_label(table, &inst.label)?;
            let mask = inst.mask.resize_nearest(size, size);
            let on: Vec<usize> = mask
                .bits()
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i)
                .collect();
            for (c, &v) in vector.iter().enumerate() {
                let dst = &mut acc[c * plane..(c + 1) * plane];
                on.iter().for_each(|&i| dst[i] += v);
            }
        }
        Ok(Feature::new(
            depth,
            size,
            size,
            acc.into_iter()
                .map(|v| T::of(f64::from(v as f32)))
                .collect(),
        ))
    }
}

/// Decode a PNG, resize by nearest neighbor and scale to [0, 1].
pub fn load_rgb<T: Real>(path: &Path, size: usize) -> Result<Feature<T>> {
    let img = image::open(path)?.to_rgb8();
    let img = if img.width() as usize == size && img.height() as usize == size {
        img
    } else {
        image::imageops::resize(
            &img,
            size as u32,
            size as u32,
            image::imageops::FilterType::Nearest,
        )
    };
    let mut f = Feature::from_hwc(size, size, 3, img.as_raw());
    let scale = T::of(1.0 / 255.0);
    f.data.iter_mut().for_each(|v| *v *= scale);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthovec_labels_sorted_with_person() {
        let t = orthovec_table(["horse", "cow", "horse"], 8, 1).unwrap();
        assert_eq!(t.labels(), &["cow", "horse", "person"]);
    }

    #[test]
    fn planes_match_blob() {
        use crate::maskio::{InstanceMask, Mask};
        use crate::s2s::build_s2s;
        let table =
            EmbeddingTable::read_text("person 0.5 -1 0.25\nhorse 1e-3 2 3\n".as_bytes(), None)
                .unwrap();
        let scene = SceneAnnotation {
            image_id: "a".into(),
            width: 10,
            height: 7,
            instances: vec![
                InstanceMask {
                    label: "person".into(),
                    mask: Mask::from_fn(10, 7, |x, y| x < 6 && y > 1),
                },
                InstanceMask {
                    label: "horse".into(),
                    mask: Mask::from_fn(10, 7, |x, y| x + y > 5),
                },
            ],
            verb: "ride".into(),
            object: "horse".into(),
            rgb_path: None,
        };
        let p = InputPipeline::blob(InputMode::S2s, 8, table.clone()).unwrap();
        let f = p
            .feature::<f64>(&LoadedImage::Scene(scene.clone()))
            .unwrap();
        let blob = build_s2s(&scene, &table, 8).unwrap();
        assert_eq!(f, Feature::from_hwc(8, 8, 3, blob.data()));
    }

    #[test]
    fn rgb_pipeline_rejects_scene() {
        let p = InputPipeline::rgb(8);
        let scene = SceneAnnotation {
            image_id: "a".into(),
            width: 4,
            height: 4,
            instances: vec![],
            verb: "v".into(),
            object: "o".into(),
            rgb_path: None,
        };
        assert!(p.feature::<f32>(&LoadedImage::Scene(scene)).is_err());
    }
}
