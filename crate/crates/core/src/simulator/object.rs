//! Test objects: rasterization of grayscale images into albedo grids and a
//! small set of binary stroke glyphs in the spirit of handwritten symbols.

use crate::error::{Error, Result};
use crate::forward::{AlbedoGrid, GridGeometry};
use crate::image::Image;

pub const BINARIZE_THRESHOLD: f64 = 0.5;

/// Turns a grayscale image into an albedo grid `physical_size` meters across
/// its longer side.
pub fn rasterize_object(image: &Image, physical_size: f64, binarize: bool) -> Result<AlbedoGrid> {
    if image.is_empty() {
        return Err(Error::invalid("object image is empty"));
    }
    if !(physical_size > 0.0 && physical_size.is_finite()) {
        return Err(Error::invalid(format!(
            "physical size must be positive, got {physical_size}"
        )));
    }
    if !image.is_finite() {
        return Err(Error::invalid("object image has non-finite pixels"));
    }
    let pitch = physical_size / image.height().max(image.width()) as f64;
    let geometry = GridGeometry::new(image.height(), image.width(), pitch)?;
    let values = if binarize {
        image.map(|v| if v >= BINARIZE_THRESHOLD { 1.0 } else { 0.0 })
    } else {
        image.map(|v| v.max(0.0))
    };
    AlbedoGrid::new(geometry, values)
}

/// Names of the bundled glyphs.
pub const GLYPH_NAMES: [&str; 9] = ["k", "e", "y", "f", "l", "z", "four", "n", "j"];

type Stroke = ((f64, f64), (f64, f64));

fn glyph_strokes(name: &str) -> Option<Vec<Stroke>> {
    // unit square, x to the right, y downwards
    let s: Vec<Stroke> = match name {
        "k" => vec![
            ((0.28, 0.15), (0.28, 0.85)),
            ((0.30, 0.55), (0.72, 0.15)),
            ((0.42, 0.45), (0.75, 0.85)),
        ],
        "e" => vec![
            ((0.30, 0.15), (0.30, 0.85)),
            ((0.30, 0.15), (0.72, 0.15)),
            ((0.30, 0.50), (0.62, 0.50)),
            ((0.30, 0.85), (0.74, 0.85)),
        ],
        "y" => vec![
            ((0.25, 0.15), (0.50, 0.50)),
            ((0.76, 0.15), (0.50, 0.50)),
            ((0.50, 0.50), (0.50, 0.86)),
        ],
        "f" => vec![
            ((0.32, 0.15), (0.32, 0.86)),
            ((0.32, 0.15), (0.74, 0.15)),
            ((0.32, 0.48), (0.62, 0.48)),
        ],
        "l" => vec![((0.33, 0.14), (0.33, 0.85)), ((0.33, 0.85), (0.72, 0.85))],
        "z" => vec![
            ((0.25, 0.18), (0.74, 0.18)),
            ((0.74, 0.18), (0.26, 0.82)),
            ((0.26, 0.82), (0.76, 0.82)),
        ],
        "four" => vec![
            ((0.60, 0.14), (0.22, 0.62)),
            ((0.22, 0.62), (0.78, 0.62)),
            ((0.60, 0.14), (0.60, 0.87)),
        ],
        "n" => vec![
            ((0.26, 0.86), (0.26, 0.16)),
            ((0.26, 0.16), (0.72, 0.84)),
            ((0.72, 0.84), (0.72, 0.16)),
        ],
        "j" => vec![
            ((0.64, 0.14), (0.64, 0.72)),
            ((0.64, 0.72), (0.50, 0.86)),
            ((0.50, 0.86), (0.32, 0.82)),
            ((0.32, 0.82), (0.26, 0.68)),
            ((0.48, 0.14), (0.78, 0.14)),
        ],
        _ => return None,
    };
    Some(s)
}

fn segment_distance(p: (f64, f64), s: &Stroke) -> f64 {
    let ((ax, ay), (bx, by)) = *s;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Renders a bundled glyph as a binary `size x size` image.
pub fn glyph(name: &str, size: usize) -> Result<Image> {
    let strokes =
        glyph_strokes(name).ok_or_else(|| Error::invalid(format!("unknown glyph {name:?}")))?;
    if size == 0 {
        return Err(Error::invalid("glyph size must be positive"));
    }
    let half_width = 0.06;
    const SS: usize = 4;
    Ok(Image::from_fn(size, size, |r, c| {
        let mut hits = 0;
        for i in 0..SS {
            for j in 0..SS {
                let p = (
                    (c as f64 + (j as f64 + 0.5) / SS as f64) / size as f64,
                    (r as f64 + (i as f64 + 0.5) / SS as f64) / size as f64,
                );
                if strokes.iter().any(|s| segment_distance(p, s) <= half_width) {
                    hits += 1;
                }
            }
        }
        if hits * 2 >= SS * SS {
            1.0
        } else {
            0.0
        }
    }))
}
