//! Scatter-plot rasters.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{IoContext, Result, S2sError};

const PALETTE: [[u8; 3]; 12] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [0, 0, 0],
    [255, 215, 0],
];

/// Render points on a white square, one color per distinct label (sorted).
pub fn scatter_image(coords: &[[f64; 2]], labels: &[&str], size: u32) -> Result<RgbImage> {
    if coords.len() != labels.len() {
        return Err(S2sError::Dimension(format!(
            "{} points but {} labels",
            coords.len(),
            labels.len()
        )));
    }
    let mut colors: BTreeMap<&str, Rgb<u8>> = labels.iter().map(|&l| (l, Rgb([0, 0, 0]))).collect();
    for (k, c) in colors.values_mut().enumerate() {
        *c = Rgb(PALETTE[k % PALETTE.len()]);
    }
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    if coords.is_empty() {
        return Ok(img);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let margin = 12.0;
    let span = f64::from(size) - 2.0 * margin;
    let to_px = |v: f64, k: usize| {
        let range = hi[k] - lo[k];
        let t = if range > 0.0 {
            (v - lo[k]) / range
        } else {
            0.5
        };
        margin + t * span
    };
    for (c, l) in coords.iter().zip(labels) {
        let (cx, cy) = (to_px(c[0], 0), f64::from(size) - to_px(c[1], 1));
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                if dx * dx + dy * dy > 9 {
                    continue;
                }
                let (x, y) = (cx as i64 + i64::from(dx), cy as i64 + i64::from(dy));
                if (0..i64::from(size)).contains(&x) && (0..i64::from(size)).contains(&y) {
                    img.put_pixel(x as u32, y as u32, colors[l]);
                }
            }
        }
    }
    Ok(img)
}

pub fn plot_scatter(coords: &[[f64; 2]], labels: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = scatter_image(coords, labels, 512)?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)?;
    std::fs::write(path, bytes.into_inner()).at(path)
}
