use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::GridGeometry;

/// Number of optimizer steps per M-step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSteps {
    /// `n + 1` steps at EM iteration `n`.
    Growing,
    Fixed(usize),
}

impl InnerSteps {
    pub fn at(self, iteration: usize) -> usize {
        match self {
            InnerSteps::Growing => iteration + 1,
            InnerSteps::Fixed(n) => n,
        }
    }
}

/// Settings shared by the EM and known-trajectory reconstructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub iterations: usize,
    /// Noise scale in the posterior weights.
    pub sigma: f64,
    /// Prior weight.
    pub lambda: f64,
    pub learning_rate: f64,
    pub momentum_decays: (f64, f64),
    pub adam_epsilon: f64,
    pub anneal_factor: f64,
    /// When false every E-step uses `beta = 1`.
    pub annealing: bool,
    pub inner_steps: InnerSteps,
    pub seed: u64,
    pub recon_shape: (usize, usize),
    /// Meters per reconstructed pixel.
    pub pixel_pitch: f64,
    /// Standard deviation of the initial `nu`.
    pub init_scale: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            sigma: 200.0,
            lambda: 2000.0,
            learning_rate: 0.1,
            momentum_decays: (0.5, 0.999),
            adam_epsilon: 1e-8,
            anneal_factor: 1.3,
            annealing: true,
            inner_steps: InnerSteps::Growing,
            seed: 0,
            recon_shape: (64, 64),
            pixel_pitch: 0.5 / 64.0,
            init_scale: 0.1,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.iterations == 0 {
            return bad("at least one EM iteration is required".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        let (b1, b2) = self.momentum_decays;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!(
                "momentum decays must lie in [0, 1), got ({b1}, {b2})"
            ));
        }
        if !(self.anneal_factor > 1.0 && self.anneal_factor.is_finite()) {
            return bad(format!(
                "anneal factor must exceed 1, got {}",
                self.anneal_factor
            ));
        }
        if self.inner_steps == InnerSteps::Fixed(0) {
            return bad("inner steps must be at least 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!(
                "init scale must be non-negative, got {}",
                self.init_scale
            ));
        }
        self.geometry().map(|_| ())
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.recon_shape.0, self.recon_shape.1, self.pixel_pitch)
    }
}

/// Temperatures `beta^(n)`: geometric growth by the anneal factor, reaching
/// exactly 1 at the last iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealingSchedule {
    betas: Vec<f64>,
}

impl AnnealingSchedule {
    pub fn new(iterations: usize, factor: f64) -> Self {
        let mut betas = Vec::with_capacity(iterations);
        if iterations == 0 {
            return Self { betas };
        }
        let mut beta = factor.powi(-(iterations as i32 - 1));
        for n in 0..iterations {
            if n + 1 == iterations {
                beta = 1.0;
            }
            betas.push(beta.min(1.0));
            beta *= factor;
        }
        Self { betas }
    }

    pub fn constant(iterations: usize) -> Self {
        Self {
            betas: vec![1.0; iterations],
        }
    }

    pub fn from_config(config: &EmConfig) -> Self {
        if config.annealing {
            Self::new(config.iterations, config.anneal_factor)
        } else {
            Self::constant(config.iterations)
        }
    }

    pub fn beta(&self, iteration: usize) -> f64 {
        self.betas[iteration]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}
