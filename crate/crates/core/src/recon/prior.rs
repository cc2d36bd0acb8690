//! Smooth-and-sparse albedo prior `log p(rho) = -|L rho|_1 - |rho|_1`.
//!
//! `L` is the 5-point Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]` with zero
//! padding, which makes it a symmetric matrix. Since `rho >= 0` the sparsity
//! term is the plain sum of `rho`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub smoothness_weight: f64,
    pub sparsity_weight: f64,
}

impl Default for PriorModel {
    fn default() -> Self {
        Self {
            smoothness_weight: 1.0,
            sparsity_weight: 1.0,
        }
    }
}

pub const LAPLACIAN_KERNEL: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];

/// Zero-padded 5-point Laplacian of a row-major `height x width` image.
pub fn laplacian(values: &[f64], height: usize, width: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), height * width);
    let mut out = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let mut acc = -4.0 * values[i];
            if r > 0 {
                acc += values[i - width];
            }
            if r + 1 < height {
                acc += values[i + width];
            }
            if c > 0 {
                acc += values[i - 1];
            }
            if c + 1 < width {
                acc += values[i + 1];
            }
            out[i] = acc;
        }
    }
    out
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl PriorModel {
    pub fn log_prior(&self, rho: &[f64], height: usize, width: usize) -> f64 {
        let smooth: f64 = laplacian(rho, height, width).iter().map(|v| v.abs()).sum();
        let sparse: f64 = rho.iter().map(|v| v.abs()).sum();
        -self.smoothness_weight * smooth - self.sparsity_weight * sparse
    }

    /// `out += scale * d log p / d rho`, with `sign(0) = 0` at the kinks.
    pub fn add_gradient(
        &self,
        rho: &[f64],
        height: usize,
        width: usize,
        scale: f64,
        out: &mut [f64],
    ) {
        let signs: Vec<f64> = laplacian(rho, height, width)
            .into_iter()
            .map(sign)
            .collect();
        let back = laplacian(&signs, height, width);
        for (o, b) in out.iter_mut().zip(back) {
            *o += scale * (-self.smoothness_weight * b - self.sparsity_weight);
        }
    }

    /// Smallest `|(L rho)_j|`, i.e. the distance to the nearest kink of the
    /// smoothness term.
    pub fn kink_margin(rho: &[f64], height: usize, width: usize) -> f64 {
        laplacian(rho, height, width)
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}
