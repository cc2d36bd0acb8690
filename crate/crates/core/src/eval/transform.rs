use serde::{Deserialize, Serialize};

use crate::image::Image;

/// One element of the rotation / translation / flip search set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rtf {
    /// Counter-clockwise rotation about the image center, degrees.
    pub rotation: f64,
    /// Column shift, pixels (positive moves content right).
    pub dx: i32,
    /// Row shift, pixels (positive moves content down).
    pub dy: i32,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

impl Rtf {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// Flips, then rotates about the center (bilinear, zero fill), then shifts by
/// whole pixels (zero fill). Rotations by multiples of 90 degrees on square
/// images are exact permutations.
pub fn transform_image(img: &Image, rtf: &Rtf) -> Image {
    if rtf.is_identity() {
        return img.clone();
    }
    let mut out = flip(img, rtf.flip_horizontal, rtf.flip_vertical);
    if rtf.rotation.rem_euclid(360.0) != 0.0 {
        out = rotate(&out, rtf.rotation);
    }
    if rtf.dx != 0 || rtf.dy != 0 {
        out = translate(&out, rtf.dx, rtf.dy);
    }
    out
}

pub fn flip(img: &Image, horizontal: bool, vertical: bool) -> Image {
    if !horizontal && !vertical {
        return img.clone();
    }
    let (h, w) = img.shape();
    Image::from_fn(h, w, |r, c| {
        let sr = if vertical { h - 1 - r } else { r };
        let sc = if horizontal { w - 1 - c } else { c };
        img.get(sr, sc)
    })
}

pub fn translate(img: &Image, dx: i32, dy: i32) -> Image {
    let (h, w) = img.shape();
    Image::from_fn(h, w, |r, c| {
        img.get_or_zero(r as isize - dy as isize, c as isize - dx as isize)
    })
}

pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (h, w) = img.shape();
    let quarter = degrees.rem_euclid(360.0) / 90.0;
    if h == w && quarter.fract() == 0.0 {
        let n = h - 1;
        return match quarter as u32 {
            0 => img.clone(),
            // counter-clockwise on screen: output (r, c) <- input (c, n - r)
            1 => Image::from_fn(h, w, |r, c| img.get(c, n - r)),
            2 => Image::from_fn(h, w, |r, c| img.get(n - r, n - c)),
            _ => Image::from_fn(h, w, |r, c| img.get(n - c, r)),
        };
    }
    let theta = degrees.to_radians();
    let (s, co) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    Image::from_fn(h, w, |r, c| {
        // screen coordinates: x right, y up
        let x = c as f64 - cx;
        let y = cy - r as f64;
        // inverse rotation to find the source
        let sx = co * x + s * y;
        let sy = -s * x + co * y;
        bilinear(img, cy - sy, sx + cx)
    })
}

fn bilinear(img: &Image, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let v00 = img.get_or_zero(r0, c0);
    let v01 = img.get_or_zero(r0, c0 + 1);
    let v10 = img.get_or_zero(r0 + 1, c0);
    let v11 = img.get_or_zero(r0 + 1, c0 + 1);
    (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
}
