//! Measurement simulation: trajectories, candidate grids, test objects, noise.

mod grid;
mod noise;
mod object;
mod trajectory;

pub use grid::{CandidateGrid, CandidateGridSpec};
pub use noise::{
    apply_gaussian_snr, apply_poisson_snr, ln_factorial, measurement_rng, sample_poisson,
    NoiseKind, NoiseModel, POISSON_ALGORITHM,
};
pub use object::{glyph, rasterize_object, BINARIZE_THRESHOLD, GLYPH_NAMES};
pub use trajectory::{
    make_trajectory, plane_center, preset_trajectory, Plane, SegmentSamples, TrajectorySet,
    TrajectorySpec, PRESET_DEPTH, PRESET_HALF_SIZE, PRESET_PLANE_OFFSET,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{assemble_system, render, AlbedoGrid, ForwardModel, TransientHistogram};

/// Renders the object at every pose of the trajectory and applies noise.
/// Measurement `i` draws from its own stream of the noise seed, so the output
/// does not depend on the number of worker threads.
pub fn simulate_sequence(
    albedo: &AlbedoGrid,
    trajectory: &TrajectorySet,
    model: &ForwardModel,
    noise: &NoiseModel,
) -> Result<Vec<TransientHistogram>> {
    trajectory.validate()?;
    noise.validate()?;
    trajectory
        .poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let system = assemble_system(&albedo.geometry, pose, model)?;
            let clean = render(&system, albedo)?;
            let mut rng = noise.stream(i as u64);
            noise.apply(&clean, &mut rng)
        })
        .collect()
}

/// Gain that puts the brightest noiseless histogram of the sequence at
/// `peak_counts`, so measurements come out in photon counts. With
/// `peak_counts = snr^2` the Poisson noise model then draws raw counts for the
/// brightest measurement.
pub fn counts_gain(
    albedo: &AlbedoGrid,
    trajectory: &TrajectorySet,
    model: &ForwardModel,
    peak_counts: f64,
) -> Result<f64> {
    if !(peak_counts > 0.0 && peak_counts.is_finite()) {
        return Err(Error::invalid(format!(
            "peak counts must be positive, got {peak_counts}"
        )));
    }
    let unit = model.with_gain(1.0);
    let clean = simulate_sequence(albedo, trajectory, &unit, &NoiseModel::none())?;
    let peak = clean.iter().map(|h| h.peak()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Domain(
            "object is invisible along the whole trajectory".into(),
        ));
    }
    Ok(peak_counts / peak)
}
