use s2s_core::maskio::SceneAnnotation;
use s2s_core::wordvec::{embed_label, EmbeddingTable};

/// Resize, stamp and sum in a single loop over output pixels.
pub fn fused_oracle(scene: &SceneAnnotation, t: &EmbeddingTable, size: usize) -> Vec<f64> {
    let d = t.dim();
    let vectors: Vec<Vec<f64>> = scene
        .instances
        .iter()
        .map(|i| embed_label(t, &i.label).unwrap())
        .collect();
    let mut out = vec![0.0; size * size * d];
    for y in 0..size {
        let sy = (((y as f64 + 0.5) * scene.height as f64 / size as f64).floor() as usize)
            .min(scene.height - 1);
        for x in 0..size {
            let sx = (((x as f64 + 0.5) * scene.width as f64 / size as f64).floor() as usize)
                .min(scene.width - 1);
            for (inst, v) in scene.instances.iter().zip(&vectors) {
                if inst.mask.get(sx, sy) {
                    for c in 0..d {
                        out[(y * size + x) * d + c] += v[c];
                    }
                }
            }
        }
    }
    out
}
