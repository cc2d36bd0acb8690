//! Structural similarity with a uniform sliding window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    /// Side of the square uniform window, clipped to the image size.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range used for the stabilizers. `None` takes the joint range of
    /// both images.
    pub data_range: Option<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            data_range: None,
        }
    }
}

impl SsimParams {
    pub fn with_data_range(mut self, range: f64) -> Self {
        self.data_range = Some(range);
        self
    }

    /// `(C1, C2)`; a zero range falls back to 1 so both stay positive.
    pub fn stabilizers(&self, a: &Image, b: &Image) -> (f64, f64) {
        let range = self
            .data_range
            .unwrap_or_else(|| a.max().max(b.max()) - a.min().min(b.min()));
        let range = if range > 0.0 && range.is_finite() {
            range
        } else {
            1.0
        };
        ((self.k1 * range).powi(2), (self.k2 * range).powi(2))
    }
}

/// Summed-area table with a zero border row and column.
pub(crate) struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub(crate) fn new(values: &[f64], height: usize, width: usize) -> Self {
        let w1 = width + 1;
        let mut sums = vec![0.0; (height + 1) * w1];
        for r in 0..height {
            let mut row = 0.0;
            for c in 0..width {
                row += values[r * width + c];
                sums[(r + 1) * w1 + c + 1] = sums[r * w1 + c + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Sum over rows `r0..r1` and columns `c0..c1`.
    #[inline]
    pub(crate) fn window(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        let w1 = self.width + 1;
        self.sums[r1 * w1 + c1] - self.sums[r0 * w1 + c1] - self.sums[r1 * w1 + c0]
            + self.sums[r0 * w1 + c0]
    }
}

/// Window statistics of a reference image, reusable across many candidates.
pub struct SsimReference {
    image: Image,
    window_h: usize,
    window_w: usize,
    means: Vec<f64>,
    second: Vec<f64>,
    params: SsimParams,
}

impl SsimReference {
    pub fn new(image: &Image, params: SsimParams) -> Result<Self> {
        if image.is_empty() {
            return Err(Error::invalid("SSIM of an empty image"));
        }
        if !image.is_finite() {
            return Err(Error::invalid("SSIM input has non-finite pixels"));
        }
        let (h, w) = image.shape();
        let window_h = params.window.clamp(1, h);
        let window_w = params.window.clamp(1, w);
        let area = (window_h * window_w) as f64;
        let sq: Vec<f64> = image.as_slice().iter().map(|v| v * v).collect();
        let s1 = Integral::new(image.as_slice(), h, w);
        let s2 = Integral::new(&sq, h, w);
        let mut means = Vec::new();
        let mut second = Vec::new();
        for r in 0..=h - window_h {
            for c in 0..=w - window_w {
                means.push(s1.window(r, c, r + window_h, c + window_w) / area);
                second.push(s2.window(r, c, r + window_h, c + window_w) / area);
            }
        }
        Ok(Self {
            image: image.clone(),
            window_h,
            window_w,
            means,
            second,
            params,
        })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    /// Mean SSIM between the reference and `other`.
    pub fn score(&self, other: &Image) -> Result<f64> {
        let (h, w) = self.image.shape();
        if other.shape() != (h, w) {
            return Err(Error::shape(
                format!("{h}x{w}"),
                format!("{}x{}", other.height(), other.width()),
            ));
        }
        if !other.is_finite() {
            return Err(Error::invalid("SSIM input has non-finite pixels"));
        }
        let (c1, c2) = self.params.stabilizers(&self.image, other);
        let area = (self.window_h * self.window_w) as f64;
        let sq: Vec<f64> = other.as_slice().iter().map(|v| v * v).collect();
        let cross: Vec<f64> = self
            .image
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .collect();
        let s1 = Integral::new(other.as_slice(), h, w);
        let s2 = Integral::new(&sq, h, w);
        let sx = Integral::new(&cross, h, w);
        let mut total = 0.0;
        let mut i = 0;
        for r in 0..=h - self.window_h {
            for c in 0..=w - self.window_w {
                let (r1, c1w) = (r + self.window_h, c + self.window_w);
                let mu_a = self.means[i];
                let mu_b = s1.window(r, c, r1, c1w) / area;
                let var_a = self.second[i] - mu_a * mu_a;
                let var_b = s2.window(r, c, r1, c1w) / area - mu_b * mu_b;
                let cov = sx.window(r, c, r1, c1w) / area - mu_a * mu_b;
                let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                i += 1;
            }
        }
        Ok(total / i as f64)
    }
}

/// Mean local SSIM of two equally sized images.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    SsimReference::new(a, *params)?.score(b)
}
