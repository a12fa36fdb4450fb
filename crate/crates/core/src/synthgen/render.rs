//! Shape rasterization and RGB rendering.

use image::{Rgb, RgbImage};
use rand::Rng;

use super::ShapeFamily;
use crate::maskio::SceneAnnotation;

/// Set pixels of a shape, offsets relative to its tight bounding box.
#[derive(Clone, Debug)]
pub struct Sprite {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<(usize, usize)>,
}

impl Sprite {
    fn from_grid(w: usize, h: usize, on: impl Fn(f64, f64) -> bool) -> Sprite {
        let mut pixels = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if on(x as f64 + 0.5, y as f64 + 0.5) {
                    pixels.push((x, y));
                }
            }
        }
        let (x0, x1) = pixels
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
        let (y0, y1) = pixels
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
        Sprite {
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
            pixels: pixels.into_iter().map(|(x, y)| (x - x0, y - y0)).collect(),
        }
    }
}

/// Rasterize a shape whose nominal extent is `size` pixels.
pub fn shape_sprite(shape: ShapeFamily, size: f64) -> Sprite {
    let d = size.round().max(3.0) as usize;
    let r = d as f64 / 2.0;
    match shape {
        ShapeFamily::Circle => {
            Sprite::from_grid(d, d, |x, y| (x - r).powi(2) + (y - r).powi(2) <= r * r)
        }
        ShapeFamily::Ring => Sprite::from_grid(d, d, |x, y| {
            let q = (x - r).powi(2) + (y - r).powi(2);
            q <= r * r && q >= (r / 2.0).powi(2)
        }),
        ShapeFamily::Rectangle => {
            let h = (size * 0.6).round().max(3.0) as usize;
            Sprite::from_grid(d, h, |_, _| true)
        }
        ShapeFamily::Triangle => {
            let h = (size * 0.9).round().max(3.0) as usize;
            Sprite::from_grid(d, h, |x, y| (x - r).abs() <= (y / h as f64) * r + 0.5)
        }
    }
}

/// Head-and-torso silhouette; `scale` 1.0 is about 8×21 pixels.
pub fn person_sprite(scale: f64) -> Sprite {
    let head = (7.0 * scale).round().max(3.0) as usize;
    let body_w = (8.0 * scale).round().max(3.0) as usize;
    let body_h = (14.0 * scale).round().max(4.0) as usize;
    let w = body_w.max(head);
    let hr = head as f64 / 2.0;
    let cx = w as f64 / 2.0;
    Sprite::from_grid(w, head + body_h, |x, y| {
        if y < head as f64 {
            (x - cx).powi(2) + (y - hr).powi(2) <= hr * hr
        } else {
            (x - cx).abs() <= body_w as f64 / 2.0
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    Solid,
    Stripes,
    Checker,
    Dots,
}

/// FNV-1a, stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn class_style(label: &str) -> ([u8; 3], Pattern) {
    if label == "person" {
        return ([230, 180, 140], Pattern::Solid);
    }
    let h = fnv1a(label.as_bytes());
    let channel = |shift: u32| 40 + ((h >> shift) & 0xff) as u8 % 190;
    let pattern = match (h >> 40) % 4 {
        0 => Pattern::Solid,
        1 => Pattern::Stripes,
        2 => Pattern::Checker,
        _ => Pattern::Dots,
    };
    ([channel(0), channel(8), channel(16)], pattern)
}

fn shade(c: [u8; 3], factor: f64) -> Rgb<u8> {
    Rgb(c.map(|v| (f64::from(v) * factor).round().clamp(0.0, 255.0) as u8))
}

/// Render a scene: textured background with a few clutter patches, then each
/// instance in id order painted with its class color and fill pattern.
pub fn render_rgb<R: Rng>(scene: &SceneAnnotation, rng: &mut R) -> RgbImage {
    let (w, h) = (scene.width as u32, scene.height as u32);
    let base = [
        rng.random_range(60..200u8),
        rng.random_range(60..200u8),
        rng.random_range(60..200u8),
    ];
    let mut img = RgbImage::from_fn(w, h, |_, _| {
        let n: i16 = rng.random_range(-25..=25);
        Rgb(base.map(|v| (i16::from(v) + n).clamp(0, 255) as u8))
    });
    for _ in 0..3 {
        let color = [
            rng.random_range(0..=255u8),
            rng.random_range(0..=255u8),
            rng.random_range(0..=255u8),
        ];
        let (cw, ch) = (
            rng.random_range(4..=16u32).min(w),
            rng.random_range(4..=16u32).min(h),
        );
        let (x0, y0) = (rng.random_range(0..=w - cw), rng.random_range(0..=h - ch));
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
    for inst in &scene.instances {
        let (color, pattern) = class_style(&inst.label);
        for y in 0..scene.height {
            for x in 0..scene.width {
                if !inst.mask.get(x, y) {
                    continue;
                }
                let dark = match pattern {
                    Pattern::Solid => false,
                    Pattern::Stripes => y % 3 == 0,
                    Pattern::Checker => (x / 2 + y / 2) % 2 == 0,
                    Pattern::Dots => x % 3 == 0 && y % 3 == 0,
                };
                img.put_pixel(
                    x as u32,
                    y as u32,
                    shade(color, if dark { 0.55 } else { 1.0 }),
                );
            }
        }
    }
    img
}
