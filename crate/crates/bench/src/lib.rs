//! Scenes shared by the benchmarks.

use keyhole_core::forward::{assemble_many, AlbedoGrid, FalloffModel, ForwardModel, GridGeometry};
use keyhole_core::simulator::{
    glyph, make_trajectory, preset_trajectory, rasterize_object, simulate_sequence, NoiseModel,
};
use keyhole_core::{CandidateGrid, SystemMatrix, TimeAxis, TransientHistogram};

pub struct Scene {
    pub albedo: AlbedoGrid,
    pub model: ForwardModel,
    pub grid: CandidateGrid,
    pub systems: Vec<SystemMatrix>,
    pub measurements: Vec<TransientHistogram>,
}

/// Glyph `k` at `side` x `side` on preset trajectory `f`, with an `n` x `n`
/// candidate grid and measurements at SNR 15.
pub fn scene(side: usize, n: usize) -> Scene {
    let albedo = rasterize_object(&glyph("k", side).unwrap(), 0.5, true).unwrap();
    let trajectory = make_trajectory(&preset_trajectory("f").unwrap()).unwrap();
    let model = ForwardModel::new(FalloffModel::retro(), TimeAxis::default()).with_gain(1e4);
    let grid = CandidateGrid::square(
        trajectory.plane,
        keyhole_core::simulator::plane_center(trajectory.plane),
        1.0,
        n,
    )
    .unwrap();
    let systems = assemble_many(&albedo.geometry, grid.poses(), &model).unwrap();
    let measurements =
        simulate_sequence(&albedo, &trajectory, &model, &NoiseModel::poisson(15.0, 1)).unwrap();
    Scene {
        albedo,
        model,
        grid,
        systems,
        measurements,
    }
}

pub fn geometry(side: usize) -> GridGeometry {
    GridGeometry::new(side, side, 0.5 / side as f64).unwrap()
}
