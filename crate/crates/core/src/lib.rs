//! Keyhole imaging: transient forward model, measurement simulation,
//! EM reconstruction of a hidden object moving along an unknown trajectory,
//! and evaluation metrics.

pub mod error;
pub mod eval;
pub mod forward;
pub mod image;
pub mod io;
pub mod recon;
pub mod simulator;

pub use error::{Error, Result};
pub use eval::{disambiguated_ssim, ssim, trajectory_rmse, DisambiguationSearch, Rtf, SsimParams};
pub use forward::{
    assemble_system, render, AlbedoGrid, FalloffKind, FalloffModel, ForwardModel, GridGeometry,
    RigidTransform, SystemMatrix, TimeAxis, TransientHistogram, Vec3,
};
pub use image::Image;
pub use io::Tensor;
pub use recon::{em_reconstruct, gd_reconstruct, EmConfig, EmOutput, GdOutput, PosteriorWeights};
pub use simulator::{
    counts_gain, simulate_sequence, CandidateGrid, CandidateGridSpec, NoiseKind, NoiseModel, Plane,
    TrajectorySet, TrajectorySpec,
};
