//! Fixed inputs shared by the benchmarks.

use s2s_core::maskio::{InstanceMask, Mask, SceneAnnotation};

/// A person beside a larger object with a small overlap, at `size × size`.
pub fn two_instance_scene(size: usize) -> SceneAnnotation {
    let rect = |x0: usize, y0: usize, x1: usize, y1: usize| {
        Mask::from_fn(size, size, move |x, y| {
            (x0..x1).contains(&x) && (y0..y1).contains(&y)
        })
    };
    let s = size / 8;
    SceneAnnotation {
        image_id: "bench".into(),
        width: size,
        height: size,
        instances: vec![
            InstanceMask {
                label: "person".into(),
                mask: rect(s, s, 4 * s, 7 * s),
            },
            InstanceMask {
                label: "horse".into(),
                mask: rect(3 * s, 3 * s, 7 * s, 7 * s),
            },
        ],
        verb: "ride".into(),
        object: "horse".into(),
        rgb_path: None,
    }
}
