//! Reconstruction quality metrics.

mod ssim;
mod transform;

pub use ssim::{ssim, SsimParams, SsimReference};
pub use transform::{flip, rotate, transform_image, translate, Rtf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::RigidTransform;
use crate::image::Image;
use crate::simulator::Plane;

/// Finite set of rotations, translations and flips searched by
/// [`disambiguated_ssim`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisambiguationSearch {
    /// Rotation increment in degrees; `None` disables the rotation search.
    pub rotation_step: Option<f64>,
    pub translation_step: usize,
    /// Largest shift in pixels; `None` covers the whole image.
    pub translation_radius: Option<usize>,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Divide both images by their maxima before comparing.
    pub normalize: bool,
}

impl Default for DisambiguationSearch {
    fn default() -> Self {
        Self {
            rotation_step: None,
            translation_step: 1,
            translation_radius: None,
            flip_horizontal: true,
            flip_vertical: true,
            normalize: true,
        }
    }
}

impl DisambiguationSearch {
    /// Default search for a trajectory plane: rotations in 5 degree steps only
    /// for constant-z motion.
    pub fn for_plane(plane: Plane) -> Self {
        Self {
            rotation_step: (plane == Plane::ConstantZ).then_some(5.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(step) = self.rotation_step {
            let turns = 360.0 / step;
            if !(step > 0.0) || (turns - turns.round()).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "rotation step {step} does not divide 360"
                )));
            }
        }
        if self.translation_step == 0 {
            return Err(Error::invalid("translation step must be at least 1"));
        }
        Ok(())
    }

    /// Candidates in lexicographic order of (rotation, dx, dy, flips).
    pub fn candidates(&self, height: usize, width: usize) -> Vec<Rtf> {
        let rotations: Vec<f64> = match self.rotation_step {
            Some(step) => {
                let n = (360.0 / step).round() as usize;
                (0..n).map(|i| i as f64 * step).collect()
            }
            None => vec![0.0],
        };
        let shifts = |extent: usize| -> Vec<i32> {
            let max = extent.saturating_sub(1);
            let radius = self.translation_radius.map_or(max, |r| r.min(max)) as i32;
            let step = self.translation_step as i32;
            let mut v: Vec<i32> = (1..=radius / step)
                .flat_map(|k| [-k * step, k * step])
                .collect();
            v.push(0);
            v.sort_unstable();
            v
        };
        let dxs = shifts(width);
        let dys = shifts(height);
        let hflips: &[bool] = if self.flip_horizontal {
            &[false, true]
        } else {
            &[false]
        };
        let vflips: &[bool] = if self.flip_vertical {
            &[false, true]
        } else {
            &[false]
        };
        let mut out = Vec::new();
        for &rotation in &rotations {
            for &dx in &dxs {
                for &dy in &dys {
                    for &flip_horizontal in hflips {
                        for &flip_vertical in vflips {
                            out.push(Rtf {
                                rotation,
                                dx,
                                dy,
                                flip_horizontal,
                                flip_vertical,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Best SSIM between the truth and any transform of the reconstruction,
/// with the transform that achieves it. Ties go to the earliest candidate.
pub fn disambiguated_ssim(
    truth: &Image,
    recon: &Image,
    search: &DisambiguationSearch,
    params: &SsimParams,
) -> Result<(f64, Rtf)> {
    search.validate()?;
    if truth.shape() != recon.shape() {
        return Err(Error::shape(
            format!("{}x{}", truth.height(), truth.width()),
            format!("{}x{}", recon.height(), recon.width()),
        ));
    }
    let (truth, recon) = if search.normalize {
        (truth.max_normalized(), recon.max_normalized())
    } else {
        (truth.clone(), recon.clone())
    };
    let mut params = *params;
    if params.data_range.is_none() {
        params.data_range = Some(truth.max() - truth.min());
    }
    let reference = SsimReference::new(&truth, params)?;
    let candidates = search.candidates(truth.height(), truth.width());

    // rotate and flip once per (rotation, flips) combination
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|rtf| {
            let moved = transform_image(&recon, rtf);
            reference.score(&moved).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((scores[best], candidates[best]))
}

/// Root-mean-square translation error of an estimated trajectory. With
/// `allow_global_shift` the mean displacement is removed first, since a
/// trajectory shifted one way and an object shifted the other way explain
/// the same measurements.
pub fn trajectory_rmse(
    estimated: &[RigidTransform],
    truth: &[RigidTransform],
    allow_global_shift: bool,
) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::shape(truth.len(), estimated.len()));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let n = truth.len() as f64;
    let diffs: Vec<[f64; 3]> = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            [
                e.translation[0] - t.translation[0],
                e.translation[1] - t.translation[1],
                e.translation[2] - t.translation[2],
            ]
        })
        .collect();
    let mut mean = [0.0; 3];
    if allow_global_shift {
        for d in &diffs {
            for a in 0..3 {
                mean[a] += d[a] / n;
            }
        }
    }
    let sum: f64 = diffs
        .iter()
        .map(|d| (0..3).map(|a| (d[a] - mean[a]).powi(2)).sum::<f64>())
        .sum();
    Ok((sum / n).sqrt())
}
