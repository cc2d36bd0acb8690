#![allow(dead_code)]

use keyhole_core::forward::{
    assemble_system, FalloffModel, ForwardModel, GridGeometry, RigidTransform, SystemMatrix,
    TimeAxis, TransientHistogram,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Short histograms with coarse bins so small scenes fill them.
pub fn short_axis(bins: usize) -> TimeAxis {
    TimeAxis {
        bins,
        bin_width: 2e-10,
        t0: 0.0,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub geometry: GridGeometry,
    pub model: ForwardModel,
    pub systems: Vec<SystemMatrix>,
    pub measurements: Vec<TransientHistogram>,
}

/// Random scene: `k` poses around 1 m depth, `l` measurements of random
/// non-negative counts. The gain puts predictions and counts on the same
/// order of magnitude.
pub fn random_instance(seed: u64, side: usize, bins: usize, k: usize, l: usize) -> Instance {
    let mut r = rng(seed);
    let geometry = GridGeometry::new(side, side, 0.04).unwrap();
    let model = ForwardModel::new(FalloffModel::retro(), short_axis(bins)).with_gain(500.0);
    let systems = (0..k)
        .map(|_| {
            let t = [
                r.random_range(-0.2..0.2),
                r.random_range(-0.2..0.2),
                r.random_range(0.8..1.2),
            ];
            assemble_system(&geometry, &RigidTransform::translation(t), &model).unwrap()
        })
        .collect();
    let measurements = (0..l)
        .map(|_| {
            let counts = (0..bins).map(|_| r.random_range(0.0..2.0)).collect();
            TransientHistogram::new(counts, &model.time).unwrap()
        })
        .collect();
    Instance {
        geometry,
        model,
        systems,
        measurements,
    }
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}
