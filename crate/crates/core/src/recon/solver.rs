//! EM reconstruction for unknown trajectories and the gradient baseline for
//! known ones. Both optimize `nu` with `rho = nu^2`, which keeps the albedo
//! non-negative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward::{
    assemble_many, AlbedoGrid, ForwardModel, GridGeometry, RigidTransform, SystemMatrix,
    TransientHistogram,
};
use crate::image::Image;
use crate::recon::adam::Adam;
use crate::recon::config::{AnnealingSchedule, EmConfig};
use crate::recon::objective::{q_terms, Objective, ObjectiveValue};
use crate::recon::posterior::{e_step, PosteriorWeights};
use crate::recon::prior::PriorModel;
use crate::simulator::CandidateGrid;

/// Optimizer state of a reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub nu: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub iteration: usize,
}

impl ReconState {
    /// `nu ~ init_scale * N(0, 1)` drawn from the config seed.
    pub fn initial(config: &EmConfig) -> Self {
        let n = config.recon_shape.0 * config.recon_shape.1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let nu = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.init_scale * z
            })
            .collect();
        Self::from_nu(nu)
    }

    pub fn from_nu(nu: Vec<f64>) -> Self {
        let n = nu.len();
        Self {
            nu,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            iteration: 0,
        }
    }

    pub fn rho(&self) -> Vec<f64> {
        self.nu.iter().map(|v| v * v).collect()
    }

    pub fn albedo(&self, geometry: GridGeometry) -> Result<AlbedoGrid> {
        AlbedoGrid::new(
            geometry,
            Image::from_vec(geometry.height, geometry.width, self.rho())?,
        )
    }
}

/// Per-iteration EM record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub beta: f64,
    pub inner_steps: usize,
    /// `Q(rho^(n), rho^(n))`.
    pub q_before: f64,
    /// `Q(rho^(n+1), rho^(n))`, split into data and prior parts.
    pub q_after: ObjectiveValue,
}

impl IterationDiagnostics {
    pub fn q(&self) -> f64 {
        self.q_after.total()
    }

    /// Whether the M-step improved the surrogate, up to `rel_tol * |Q|`.
    pub fn improved(&self, rel_tol: f64) -> bool {
        self.q() >= self.q_before - rel_tol * self.q_before.abs()
    }
}

#[derive(Clone, Debug)]
pub struct EmOutput {
    pub albedo: AlbedoGrid,
    /// Posterior at `beta = 1` for the final albedo.
    pub weights: PosteriorWeights,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub state: ReconState,
}

#[derive(Clone, Debug)]
pub struct GdOutput {
    pub albedo: AlbedoGrid,
    /// Objective value before each step and after the last one.
    pub objective_trace: Vec<f64>,
    pub state: ReconState,
}

/// Runs `inner_steps` ascent steps on the surrogate for fixed weights, with
/// fresh optimizer moments, and keeps the best iterate. The starting point is
/// a candidate, so the surrogate never decreases.
pub fn m_step(
    state: &ReconState,
    weights: &PosteriorWeights,
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    config: &EmConfig,
    inner_steps: usize,
) -> Result<ReconState> {
    if inner_steps == 0 {
        return Err(Error::invalid("an M-step needs at least one inner step"));
    }
    let objective = Objective::expected(
        measurements,
        systems,
        weights,
        config.lambda,
        PriorModel::default(),
    )?;
    let run = optimize(&objective, state.nu.clone(), config, inner_steps);
    Ok(ReconState {
        nu: run.best,
        first_moment: run.adam.first_moment().to_vec(),
        second_moment: run.adam.second_moment().to_vec(),
        iteration: state.iteration + 1,
    })
}

struct Run {
    adam: Adam,
    /// Objective at every iterate, start and end included.
    trace: Vec<f64>,
    best: Vec<f64>,
}

fn optimize(objective: &Objective<'_>, mut nu: Vec<f64>, config: &EmConfig, steps: usize) -> Run {
    let mut adam = Adam::new(
        nu.len(),
        config.learning_rate,
        config.momentum_decays,
        config.adam_epsilon,
    );
    let mut trace = Vec::with_capacity(steps + 1);
    let mut best = (f64::NEG_INFINITY, nu.clone());
    for _ in 0..steps {
        let (value, grad) = objective.evaluate_nu(&nu);
        trace.push(value);
        if value > best.0 {
            best = (value, nu.clone());
        }
        adam.ascend(&mut nu, &grad);
    }
    let (value, _) = objective.evaluate_nu(&nu);
    trace.push(value);
    if value > best.0 {
        best = (value, nu);
    }
    Run {
        adam,
        trace,
        best: best.1,
    }
}

fn check_measurement_bins(measurements: &[TransientHistogram], model: &ForwardModel) -> Result<()> {
    if measurements.is_empty() {
        return Err(Error::invalid("no measurements"));
    }
    for y in measurements {
        if y.len() != model.time.bins {
            return Err(Error::shape(model.time.bins, y.len()));
        }
    }
    Ok(())
}

/// Reconstructs the albedo and the pose posterior from measurements taken
/// along an unknown trajectory.
pub fn em_reconstruct(
    measurements: &[TransientHistogram],
    candidates: &CandidateGrid,
    model: &ForwardModel,
    config: &EmConfig,
) -> Result<EmOutput> {
    config.validate()?;
    check_measurement_bins(measurements, model)?;
    if candidates.is_empty() {
        return Err(Error::invalid("candidate grid is empty"));
    }
    let geometry = config.geometry()?;
    let systems = assemble_many(&geometry, candidates.poses(), model)?;
    em_with_systems(measurements, &systems, geometry, config)
}

/// EM over precomputed candidate systems.
pub fn em_with_systems(
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    geometry: GridGeometry,
    config: &EmConfig,
) -> Result<EmOutput> {
    config.validate()?;
    let schedule = AnnealingSchedule::from_config(config);
    let prior = PriorModel::default();
    let mut state = ReconState::initial(config);
    let mut diagnostics = Vec::with_capacity(config.iterations);

    for n in 0..config.iterations {
        let beta = schedule.beta(n);
        let rho = state.rho();
        let weights = e_step(measurements, systems, &rho, config.sigma, beta)?;
        let q_before =
            q_terms(&rho, &weights, measurements, systems, config.lambda, &prior)?.total();
        let inner_steps = config.inner_steps.at(n);
        state = m_step(&state, &weights, measurements, systems, config, inner_steps)?;
        let q_after = q_terms(
            &state.rho(),
            &weights,
            measurements,
            systems,
            config.lambda,
            &prior,
        )?;
        let record = IterationDiagnostics {
            iteration: n,
            beta,
            inner_steps,
            q_before,
            q_after,
        };
        if !record.improved(1e-6) {
            log::debug!(
                "EM iteration {n}: surrogate decreased from {q_before} to {}",
                record.q()
            );
        }
        diagnostics.push(record);
    }

    let weights = e_step(measurements, systems, &state.rho(), config.sigma, 1.0)?;
    Ok(EmOutput {
        albedo: state.albedo(geometry)?,
        weights,
        diagnostics,
        state,
    })
}

/// Reconstructs the albedo when the pose of every measurement is known.
pub fn gd_reconstruct(
    measurements: &[TransientHistogram],
    poses: &[RigidTransform],
    model: &ForwardModel,
    config: &EmConfig,
    iterations: usize,
) -> Result<GdOutput> {
    config.validate()?;
    check_measurement_bins(measurements, model)?;
    if poses.len() != measurements.len() {
        return Err(Error::shape(
            format!("{} poses", measurements.len()),
            format!("{} poses", poses.len()),
        ));
    }
    let geometry = config.geometry()?;
    let systems = assemble_many(&geometry, poses, model)?;
    gd_with_systems(measurements, &systems, geometry, config, iterations)
}

pub fn gd_with_systems(
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    geometry: GridGeometry,
    config: &EmConfig,
    iterations: usize,
) -> Result<GdOutput> {
    config.validate()?;
    let objective =
        Objective::known_poses(measurements, systems, config.lambda, PriorModel::default())?;
    let initial = ReconState::initial(config);
    let run = optimize(&objective, initial.nu, config, iterations);
    let state = ReconState {
        nu: run.best,
        first_moment: run.adam.first_moment().to_vec(),
        second_moment: run.adam.second_moment().to_vec(),
        iteration: iterations,
    };
    Ok(GdOutput {
        albedo: state.albedo(geometry)?,
        objective_trace: run.trace,
        state,
    })
}
