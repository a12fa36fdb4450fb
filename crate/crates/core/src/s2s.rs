//! Semantics-to-space feature blobs.
//!
//! Each instance's label vector is written into every pixel of its mask,
//! giving an `H×W×l_v` blob per object; the scene blob is the sum of the
//! object blobs, so overlapping instances hold the sum of their vectors.

use std::io::{Read, Write};

use crate::error::{Result, S2sError};
use crate::maskio::{Mask, SceneAnnotation};
use crate::wordvec::{embed_label, EmbeddingTable};

const BLOB_MAGIC: &[u8; 4] = b"S2SB";
const BLOB_VERSION: u32 = 1;

/// `height × width × depth` tensor, row-major with depth innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct S2SBlob {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f32>,
}

impl S2SBlob {
    pub fn zeros(height: usize, width: usize, depth: usize) -> Self {
        S2SBlob {
            height,
            width,
            depth,
            data: vec![0.0; height * width * depth],
        }
    }

    pub fn from_data(height: usize, width: usize, depth: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * depth {
            return Err(S2sError::Dimension(format!(
                "{height}x{width}x{depth} blob needs {} values, got {}",
                height * width * depth,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(S2sError::Numeric("blob entries must be finite".into()));
        }
        Ok(S2SBlob {
            height,
            width,
            depth,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The depth vector at pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.depth;
        &self.data[start..start + self.depth]
    }

    /// Binary dump: `S2SB`, u32 version, u32 H, W, l_v, then f32 data, all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(BLOB_MAGIC)?;
        for v in [
            BLOB_VERSION,
            self.height as u32,
            self.width as u32,
            self.depth as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 20];
        input
            .read_exact(&mut header)
            .map_err(|e| S2sError::Format(format!("blob header: {e}")))?;
        if &header[..4] != BLOB_MAGIC {
            return Err(S2sError::Format("bad blob magic".into()));
        }
        let word = |i: usize| {
            u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        };
        if word(0) != BLOB_VERSION as usize {
            return Err(S2sError::Format(format!(
                "unsupported blob version {}",
                word(0)
            )));
        }
        let (h, w, d) = (word(1), word(2), word(3));
        let mut raw = vec![0u8; h * w * d * 4];
        input
            .read_exact(&mut raw)
            .map_err(|e| S2sError::Format(format!("blob data: {e}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        S2SBlob::from_data(h, w, d, data)
    }
}

/// Stamp `vector` into every pixel of `mask`; zero elsewhere.
pub fn object_blob(mask: &Mask, vector: &[f64]) -> Result<S2SBlob> {
    if vector.is_empty() {
        return Err(S2sError::Dimension("label vector is empty".into()));
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(S2sError::Numeric(
            "label vector has non-finite entries".into(),
        ));
    }
    let depth = vector.len();
    let mut blob = S2SBlob::zeros(mask.height(), mask.width(), depth);
    let v32: Vec<f32> = vector.iter().map(|&v| v as f32).collect();
    for (pixel, &on) in blob.data.chunks_exact_mut(depth).zip(mask.bits()) {
        if on {
            pixel.copy_from_slice(&v32);
        }
    }
    Ok(blob)
}

/// Element-wise sum of blobs. An empty list yields zeros of `shape`.
pub fn aggregate_blobs(blobs: &[S2SBlob], shape: (usize, usize, usize)) -> Result<S2SBlob> {
    let (h, w, d) = shape;
    let mut acc = vec![0.0f64; h * w * d];
    for b in blobs {
        if b.shape() != shape {
            return Err(S2sError::Dimension(format!(
                "blob shape {:?} differs from {shape:?}",
                b.shape()
            )));
        }
        for (a, &v) in acc.iter_mut().zip(&b.data) {
            *a += f64::from(v);
        }
    }
    Ok(S2SBlob {
        height: h,
        width: w,
        depth: d,
        data: acc.into_iter().map(|v| v as f32).collect(),
    })
}

/// Build the scene blob at `out_size × out_size`: every instance mask is
/// resized by nearest neighbor and stamped with its own label vector, and
/// the stamps are summed per pixel in float64 before the final cast.
pub fn build_s2s(
    scene: &SceneAnnotation,
    table: &EmbeddingTable,
    out_size: usize,
) -> Result<S2SBlob> {
    if out_size == 0 {
        return Err(S2sError::Dimension("output size must be positive".into()));
    }
    let depth = table.dim();
    let mut acc = vec![0.0f64; out_size * out_size * depth];
    for inst in &scene.instances {
        let vector = embed_label(table, &inst.label)?;
        let mask = inst.mask.resize_nearest(out_size, out_size);
        for (pixel, &on) in acc.chunks_exact_mut(depth).zip(mask.bits()) {
            if on {
                pixel.iter_mut().zip(&vector).for_each(|(a, v)| *a += v);
            }
        }
    }
    Ok(S2SBlob {
        height: out_size,
        width: out_size,
        depth,
        data: acc.into_iter().map(|v| v as f32).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskio::InstanceMask;

    fn table() -> EmbeddingTable {
        EmbeddingTable::read_text("cat 1 0 0\ndog 0 1 0\n".as_bytes(), None).unwrap()
    }

    #[test]
    fn empty_and_full_masks() {
        let zero = object_blob(&Mask::new(3, 2), &[1.0, 2.0]).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let full = object_blob(&Mask::from_fn(3, 2, |_, _| true), &[1.0, 2.0]).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(full.pixel(x, y), &[1.0, 2.0]);
            }
        }
    }

    #[test]
    fn aggregate_identity_and_overlap() {
        let m = Mask::from_fn(2, 2, |_, _| true);
        let u = object_blob(&m, &[1.0, 0.5]).unwrap();
        let v = object_blob(&m, &[-2.0, 0.25]).unwrap();
        assert_eq!(
            aggregate_blobs(std::slice::from_ref(&u), u.shape()).unwrap(),
            u
        );
        let s = aggregate_blobs(&[u, v], (2, 2, 2)).unwrap();
        assert_eq!(s.pixel(1, 1), &[-1.0, 0.75]);
        let empty = aggregate_blobs(&[], (2, 3, 4)).unwrap();
        assert_eq!(empty.shape(), (2, 3, 4));
        assert!(matches!(
            aggregate_blobs(&[S2SBlob::zeros(1, 1, 1)], (1, 1, 2)),
            Err(S2sError::Dimension(_))
        ));
    }

    #[test]
    fn scene_blob_background_and_full_frame() {
        let mut scene = SceneAnnotation {
            image_id: "s".into(),
            width: 8,
            height: 8,
            instances: vec![],
            verb: "hold".into(),
            object: "cat".into(),
            rgb_path: None,
        };
        let blob = build_s2s(&scene, &table(), 4).unwrap();
        assert_eq!(blob.shape(), (4, 4, 3));
        assert!(blob.data().iter().all(|&v| v == 0.0));

        scene.instances.push(InstanceMask {
            label: "cat".into(),
            mask: Mask::from_fn(8, 8, |_, _| true),
        });
        let blob = build_s2s(&scene, &table(), 4).unwrap();
        assert!(blob.data().chunks(3).all(|p| p == [1.0, 0.0, 0.0]));

        scene.instances.push(InstanceMask {
            label: "zebra".into(),
            mask: Mask::from_fn(8, 8, |_, _| true),
        });
        assert!(matches!(
            build_s2s(&scene, &table(), 4),
            Err(S2sError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn duplicate_instances_double_the_vector() {
        let scene = SceneAnnotation {
            image_id: "s".into(),
            width: 2,
            height: 2,
            instances: vec![
                InstanceMask {
                    label: "dog".into(),
                    mask: Mask::from_fn(2, 2, |_, _| true),
                },
                InstanceMask {
                    label: "dog".into(),
                    mask: Mask::from_fn(2, 2, |x, _| x == 0),
                },
            ],
            verb: "wash".into(),
            object: "dog".into(),
            rgb_path: None,
        };
        let blob = build_s2s(&scene, &table(), 2).unwrap();
        assert_eq!(blob.pixel(0, 0), &[0.0, 2.0, 0.0]);
        assert_eq!(blob.pixel(1, 0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn dump_round_trip() {
        let blob = object_blob(&Mask::from_fn(3, 2, |x, _| x == 1), &[0.5, -1.25]).unwrap();
        let mut buf = Vec::new();
        blob.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"S2SB");
        assert_eq!(buf.len(), 20 + 3 * 2 * 2 * 4);
        assert_eq!(S2SBlob::read_from(buf.as_slice()).unwrap(), blob);
    }
}
