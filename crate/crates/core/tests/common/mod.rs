#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use s2s_core::maskio::{InstanceMask, Mask, SceneAnnotation};

/// Random rectangles-and-noise instances; masks may be empty or overlap.
pub fn random_scene<R: Rng>(
    rng: &mut R,
    id: &str,
    width: usize,
    height: usize,
    labels: &[String],
    max_instances: usize,
) -> SceneAnnotation {
    let n = rng.random_range(0..=max_instances);
    let instances = (0..n)
        .map(|_| {
            let (x0, y0) = (rng.random_range(0..width), rng.random_range(0..height));
            let (x1, y1) = (
                rng.random_range(x0..width) + 1,
                rng.random_range(y0..height) + 1,
            );
            let speckle = rng.random_range(0.0..0.2);
            let noise: Vec<bool> = (0..width * height)
                .map(|_| rng.random_bool(speckle))
                .collect();
            let mask = Mask::from_fn(width, height, |x, y| {
                ((x0..x1).contains(&x) && (y0..y1).contains(&y)) ^ noise[y * width + x]
            });
            InstanceMask {
                label: labels[rng.random_range(0..labels.len())].clone(),
                mask,
            }
        })
        .collect();
    SceneAnnotation {
        image_id: id.into(),
        width,
        height,
        instances,
        verb: "hold".into(),
        object: "cup".into(),
        rgb_path: None,
    }
}

/// SHA-256 over every file's relative path and bytes, in sorted path order.
pub fn tree_hash(root: &Path) -> String {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
