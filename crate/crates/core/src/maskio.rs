//! Scene annotation files.
//!
//! A scene `<id>` is stored as two files under a root directory:
//!
//! * `<id>.pgm`: binary PGM (`P5`, maxval 65535, big-endian samples) holding
//!   the instance-id map. 0 is background, `k` is instance `k`; where
//!   instances overlap the later (topmost) one is shown.
//! * `<id>.json`: sidecar with labels, the verb-object pair, and every
//!   instance's full mask as a run-length encoding, so overlaps survive.
//!
//! An optional `<id>.png` holds the RGB rendering of the scene.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, S2sError};

/// Row-major boolean grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(S2sError::Dimension(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let b = bb.get_or_insert(BBox {
                    top: y,
                    bottom: y,
                    left: x,
                    right: x,
                });
                b.top = b.top.min(y);
                b.bottom = b.bottom.max(y);
                b.left = b.left.min(x);
                b.right = b.right.max(x);
            }
        }
        bb
    }

    /// Nearest-neighbor resampling with independent axis scaling.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Mask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let xs: Vec<usize> = (0..width)
            .map(|x| nearest_source(x, width, self.width))
            .collect();
        let ys: Vec<usize> = (0..height)
            .map(|y| nearest_source(y, height, self.height))
            .collect();
        Mask::from_fn(width, height, |x, y| self.get(xs[x], ys[y]))
    }

    /// `[start, len, start, len, ...]` runs of set pixels, row-major.
    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.bits.len() {
            if self.bits[i] {
                let start = i;
                while i < self.bits.len() && self.bits[i] {
                    i += 1;
                }
                runs.push(start as u64);
                runs.push((i - start) as u64);
            } else {
                i += 1;
            }
        }
        runs
    }

    pub fn from_rle(width: usize, height: usize, rle: &[u64]) -> Result<Self> {
        if !rle.len().is_multiple_of(2) {
            return Err(S2sError::Format("RLE must hold start/length pairs".into()));
        }
        let total = (width * height) as u64;
        let mut bits = vec![false; width * height];
        let mut min_start = 0u64;
        for run in rle.chunks_exact(2) {
            let (start, len) = (run[0], run[1]);
            if len == 0 || start < min_start || start + len > total {
                return Err(S2sError::Format(format!(
                    "invalid RLE run ({start}, {len})"
                )));
            }
            bits[start as usize..(start + len) as usize].fill(true);
            min_start = start + len;
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }
}

/// Source index sampled by output index `i` when resampling `src` → `dst`.
#[inline]
pub(crate) fn nearest_source(i: usize, dst: usize, src: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    pub label: String,
    pub mask: Mask,
}

/// One annotated image: instance masks in id order plus the ground-truth
/// verb-object pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneAnnotation {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceMask>,
    pub verb: String,
    pub object: String,
    pub rgb_path: Option<PathBuf>,
}

impl SceneAnnotation {
    pub fn validate(&self) -> Result<()> {
        validate_image_id(&self.image_id)?;
        if self.width == 0 || self.height == 0 {
            return Err(S2sError::Format("scene dimensions must be positive".into()));
        }
        if self.verb.trim().is_empty() || self.object.trim().is_empty() {
            return Err(S2sError::Format(format!(
                "scene {} has an empty verb or object",
                self.image_id
            )));
        }
        if self.instances.len() > u16::MAX as usize {
            return Err(S2sError::Format(
                "too many instances for a 16-bit id map".into(),
            ));
        }
        for inst in &self.instances {
            if inst.mask.width != self.width || inst.mask.height != self.height {
                return Err(S2sError::Dimension(format!(
                    "instance `{}` mask is {}x{}, scene is {}x{}",
                    inst.label, inst.mask.width, inst.mask.height, self.width, self.height
                )));
            }
            if inst.label.trim().is_empty() {
                return Err(S2sError::Format("instance with empty label".into()));
            }
        }
        Ok(())
    }

    /// Instance-id map, topmost (highest id) instance wins.
    pub fn id_map(&self) -> Vec<u16> {
        let mut map = vec![0u16; self.width * self.height];
        for (k, inst) in self.instances.iter().enumerate() {
            for (m, &b) in map.iter_mut().zip(&inst.mask.bits) {
                if b {
                    *m = (k + 1) as u16;
                }
            }
        }
        map
    }
}

fn validate_image_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(S2sError::Format(format!("invalid image id {id:?}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    image_id: String,
    width: usize,
    height: usize,
    verb: String,
    object: String,
    instances: Vec<SidecarInstance>,
}

#[derive(Serialize, Deserialize)]
struct SidecarInstance {
    id: u32,
    label: String,
    rle: Vec<u64>,
}

pub fn scene_paths(root: &Path, image_id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        root.join(format!("{image_id}.pgm")),
        root.join(format!("{image_id}.json")),
        root.join(format!("{image_id}.png")),
    )
}

pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Parse a 16-bit binary PGM. Returns `(width, height, samples)`.
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(S2sError::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if next_token(&mut pos)? != "P5" {
        return Err(S2sError::Format(
            "not a binary PGM (missing P5 magic)".into(),
        ));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        let tok = next_token(pos)?;
        tok.parse()
            .map_err(|_| S2sError::Format(format!("bad PGM {what} `{tok}`")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval != 65535 {
        return Err(S2sError::Format(format!(
            "PGM maxval must be 65535, found {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(S2sError::Format("PGM dimensions must be positive".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(S2sError::Format("missing raster separator".into()));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != width * height * 2 {
        return Err(S2sError::Format(format!(
            "PGM raster has {} bytes, expected {}",
            raster.len(),
            width * height * 2
        )));
    }
    let samples = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, samples))
}

/// Write `<root>/<id>.pgm` and `<root>/<id>.json`.
pub fn write_scene(root: impl AsRef<Path>, scene: &SceneAnnotation) -> Result<()> {
    let root = root.as_ref();
    scene.validate()?;
    let (pgm, json, _) = scene_paths(root, &scene.image_id);
    fs::write(
        &pgm,
        encode_pgm16(scene.width, scene.height, &scene.id_map()),
    )
    .at(&pgm)?;

    let sidecar = Sidecar {
        image_id: scene.image_id.clone(),
        width: scene.width,
        height: scene.height,
        verb: scene.verb.clone(),
        object: scene.object.clone(),
        instances: scene
            .instances
            .iter()
            .enumerate()
            .map(|(k, inst)| SidecarInstance {
                id: k as u32 + 1,
                label: inst.label.clone(),
                rle: inst.mask.to_rle(),
            })
            .collect(),
    };
    let mut text = serde_json::to_vec(&sidecar)?;
    text.push(b'\n');
    fs::write(&json, text).at(&json)
}

/// Read a scene back; instances come out in ascending id order.
pub fn read_scene(root: impl AsRef<Path>, image_id: &str) -> Result<SceneAnnotation> {
    let root = root.as_ref();
    validate_image_id(image_id)?;
    let (pgm, json, png) = scene_paths(root, image_id);
    let (width, height, map) = decode_pgm16(&fs::read(&pgm).at(&pgm)?)?;
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(&json).at(&json)?)?;

    if sidecar.width != width || sidecar.height != height {
        return Err(S2sError::Consistency(format!(
            "sidecar says {}x{}, id map is {width}x{height}",
            sidecar.width, sidecar.height
        )));
    }
    if sidecar.image_id != image_id {
        return Err(S2sError::Consistency(format!(
            "sidecar belongs to `{}`",
            sidecar.image_id
        )));
    }
    let mut instances = Vec::with_capacity(sidecar.instances.len());
    for (k, inst) in sidecar.instances.iter().enumerate() {
        if inst.id as usize != k + 1 {
            return Err(S2sError::Consistency(format!(
                "sidecar instance ids must be 1..N in order, found {} at position {}",
                inst.id,
                k + 1
            )));
        }
        let mask = Mask::from_rle(width, height, &inst.rle)?;
        if mask.count() == 0 {
            return Err(S2sError::Format(format!(
                "instance {} has an empty mask",
                inst.id
            )));
        }
        instances.push(InstanceMask {
            label: inst.label.clone(),
            mask,
        });
    }
    let scene = SceneAnnotation {
        image_id: image_id.to_string(),
        width,
        height,
        instances,
        verb: sidecar.verb,
        object: sidecar.object,
        rgb_path: png.exists().then_some(png),
    };
    scene.validate()?;

    let expected = scene.id_map();
    if let Some(p) = map.iter().zip(&expected).position(|(a, b)| a != b) {
        let found = map[p];
        let msg = if found as usize > scene.instances.len() {
            format!("id {found} in map is absent from the sidecar")
        } else {
            format!(
                "pixel {p}: map holds id {found}, sidecar masks give id {}",
                expected[p]
            )
        };
        return Err(S2sError::Consistency(msg));
    }
    Ok(scene)
}
