//! Albedo and trajectory reconstruction.

mod adam;
mod config;
mod objective;
mod posterior;
mod prior;
mod solver;

pub use adam::Adam;
pub use config::{AnnealingSchedule, EmConfig, InnerSteps};
pub use objective::{
    known_pose_gradient, known_pose_terms, q_gradient, q_terms, q_value, Objective, ObjectiveValue,
};
pub use posterior::{e_step, estimate_trajectory, PosteriorWeights};
pub use prior::{laplacian, PriorModel, LAPLACIAN_KERNEL};
pub use solver::{
    em_reconstruct, em_with_systems, gd_reconstruct, gd_with_systems, m_step, EmOutput, GdOutput,
    IterationDiagnostics, ReconState,
};

/// Iterations of the known-trajectory baseline.
pub const GD_ITERATIONS: usize = 200;
