//! Surrogate objectives and their gradients.
//!
//! EM maximizes
//! `Q(rho) = sum_i sum_k w_ik (-|y_i - A_k rho|^2 + lambda log p(rho))`
//! and the known-trajectory baseline maximizes
//! `sum_i -|y_i - A_i rho|^2 + lambda log p(rho)`.
//! Both are handled by [`Objective`], which folds the weights into per-pose
//! targets `ybar_k = sum_i w_ik y_i` and masses `W_k = sum_i w_ik` so a
//! gradient costs one forward and one adjoint per pose:
//! `dQ/drho = sum_k 2 A_k^T (ybar_k - W_k A_k rho) + c lambda grad log p`,
//! with `c = sum_ik w_ik` for EM and `c = 1` for the baseline.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{SystemMatrix, TransientHistogram};
use crate::recon::posterior::{check_measurements, squared_distance, PosteriorWeights};
use crate::recon::prior::PriorModel;

/// Poses per work unit in the gradient reduction. Fixed so the summation
/// order does not depend on the thread count.
const REDUCTION_CHUNK: usize = 8;

/// Value of an objective split into its data and prior parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub data: f64,
    pub prior: f64,
}

impl ObjectiveValue {
    pub fn total(&self) -> f64 {
        self.data + self.prior
    }
}

fn check_rho(systems: &[SystemMatrix], rho: &[f64]) -> Result<(usize, usize)> {
    let g = systems
        .first()
        .ok_or_else(|| Error::invalid("no systems"))?
        .geometry();
    for s in systems {
        if s.pixels() != rho.len() {
            return Err(Error::shape(s.pixels(), rho.len()));
        }
    }
    Ok((g.height, g.width))
}

/// Direct evaluation of the EM surrogate by a double loop over measurements
/// and poses.
pub fn q_terms(
    rho: &[f64],
    weights: &PosteriorWeights,
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    lambda: f64,
    prior: &PriorModel,
) -> Result<ObjectiveValue> {
    let (h, w) = check_rho(systems, rho)?;
    check_measurements(measurements, systems)?;
    if weights.rows() != measurements.len() || weights.cols() != systems.len() {
        return Err(Error::shape(
            format!("{}x{} weights", measurements.len(), systems.len()),
            format!("{}x{}", weights.rows(), weights.cols()),
        ));
    }
    let predictions: Vec<Vec<f64>> = systems.par_iter().map(|s| s.render_values(rho)).collect();
    let per_row: Vec<f64> = measurements
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            weights
                .row(i)
                .iter()
                .zip(&predictions)
                .filter(|(&wik, _)| wik != 0.0)
                .map(|(&wik, f)| wik * squared_distance(&y.counts, f))
                .sum::<f64>()
        })
        .collect();
    let data = -per_row.iter().sum::<f64>();
    let prior_value = lambda * weights.total() * prior.log_prior(rho, h, w);
    Ok(ObjectiveValue {
        data,
        prior: prior_value,
    })
}

pub fn q_value(
    rho: &[f64],
    weights: &PosteriorWeights,
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    lambda: f64,
    prior: &PriorModel,
) -> Result<f64> {
    q_terms(rho, weights, measurements, systems, lambda, prior).map(|v| v.total())
}

/// `dQ/dnu` for `rho = nu^2`.
pub fn q_gradient(
    nu: &[f64],
    weights: &PosteriorWeights,
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    lambda: f64,
    prior: &PriorModel,
) -> Result<Vec<f64>> {
    let objective = Objective::expected(measurements, systems, weights, lambda, *prior)?;
    Ok(objective.gradient_nu(nu))
}

/// Known-trajectory objective; measurement `i` pairs with `systems[i]`.
pub fn known_pose_terms(
    rho: &[f64],
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    lambda: f64,
    prior: &PriorModel,
) -> Result<ObjectiveValue> {
    let (h, w) = check_rho(systems, rho)?;
    check_measurements(measurements, systems)?;
    if measurements.len() != systems.len() {
        return Err(Error::shape(
            format!("{} poses", measurements.len()),
            format!("{} poses", systems.len()),
        ));
    }
    let residuals: Vec<f64> = measurements
        .par_iter()
        .zip(systems)
        .map(|(y, s)| squared_distance(&y.counts, &s.render_values(rho)))
        .collect();
    Ok(ObjectiveValue {
        data: -residuals.iter().sum::<f64>(),
        prior: lambda * prior.log_prior(rho, h, w),
    })
}

/// Gradient of the known-trajectory objective with respect to `nu`.
pub fn known_pose_gradient(
    nu: &[f64],
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    lambda: f64,
    prior: &PriorModel,
) -> Result<Vec<f64>> {
    let objective = Objective::known_poses(measurements, systems, lambda, *prior)?;
    Ok(objective.gradient_nu(nu))
}

/// Weighted least-squares objective with a prior, in sufficient-statistic
/// form.
pub struct Objective<'a> {
    systems: &'a [SystemMatrix],
    targets: Vec<Option<Vec<f64>>>,
    /// `sum_i w_ik |y_i|^2`, so the value comes with the gradient.
    energy: Vec<f64>,
    mass: Vec<f64>,
    prior: PriorModel,
    prior_weight: f64,
    height: usize,
    width: usize,
}

impl<'a> Objective<'a> {
    /// EM surrogate for fixed posterior weights.
    pub fn expected(
        measurements: &[TransientHistogram],
        systems: &'a [SystemMatrix],
        weights: &PosteriorWeights,
        lambda: f64,
        prior: PriorModel,
    ) -> Result<Self> {
        let bins = check_measurements(measurements, systems)?;
        if weights.rows() != measurements.len() || weights.cols() != systems.len() {
            return Err(Error::shape(
                format!("{}x{} weights", measurements.len(), systems.len()),
                format!("{}x{}", weights.rows(), weights.cols()),
            ));
        }
        let mass = weights.column_mass();
        let norms: Vec<f64> = measurements
            .iter()
            .map(|y| squared_norm(&y.counts))
            .collect();
        let energy = (0..systems.len())
            .map(|k| {
                (0..measurements.len())
                    .map(|i| weights.get(i, k) * norms[i])
                    .sum()
            })
            .collect();
        let targets = (0..systems.len())
            .into_par_iter()
            .map(|k| {
                if mass[k] == 0.0 {
                    return None;
                }
                let mut t = vec![0.0; bins];
                for (i, y) in measurements.iter().enumerate() {
                    let wik = weights.get(i, k);
                    if wik != 0.0 {
                        for (a, b) in t.iter_mut().zip(&y.counts) {
                            *a += wik * b;
                        }
                    }
                }
                Some(t)
            })
            .collect();
        let g = systems[0].geometry();
        Ok(Self {
            systems,
            targets,
            energy,
            mass,
            prior,
            prior_weight: lambda * weights.total(),
            height: g.height,
            width: g.width,
        })
    }

    /// Known-trajectory objective: one pose per measurement, unit weights.
    pub fn known_poses(
        measurements: &[TransientHistogram],
        systems: &'a [SystemMatrix],
        lambda: f64,
        prior: PriorModel,
    ) -> Result<Self> {
        check_measurements(measurements, systems)?;
        if measurements.len() != systems.len() {
            return Err(Error::shape(
                format!("{} poses", measurements.len()),
                format!("{} poses", systems.len()),
            ));
        }
        let g = systems[0].geometry();
        Ok(Self {
            systems,
            targets: measurements
                .iter()
                .map(|y| Some(y.counts.clone()))
                .collect(),
            energy: measurements
                .iter()
                .map(|y| squared_norm(&y.counts))
                .collect(),
            mass: vec![1.0; systems.len()],
            prior,
            prior_weight: lambda,
            height: g.height,
            width: g.width,
        })
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    /// `dQ/drho`.
    pub fn gradient_rho(&self, rho: &[f64]) -> Vec<f64> {
        self.evaluate(rho).1
    }

    /// `Q(rho)` and `dQ/drho` from one forward and adjoint pass per pose.
    pub fn evaluate(&self, rho: &[f64]) -> (ObjectiveValue, Vec<f64>) {
        let n = rho.len();
        let indices: Vec<usize> = (0..self.systems.len()).collect();
        let partials: Vec<(f64, Vec<f64>)> = indices
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; n];
                let mut data = 0.0;
                for &k in chunk {
                    let Some(target) = &self.targets[k] else {
                        continue;
                    };
                    let system = &self.systems[k];
                    let prediction = system.render_values(rho);
                    let cross: f64 = target.iter().zip(&prediction).map(|(t, f)| t * f).sum();
                    data -= self.energy[k] - 2.0 * cross + self.mass[k] * squared_norm(&prediction);
                    let residual: Vec<f64> = target
                        .iter()
                        .zip(&prediction)
                        .map(|(t, f)| t - self.mass[k] * f)
                        .collect();
                    system.adjoint_add(&residual, 2.0, &mut acc);
                }
                (data, acc)
            })
            .collect();
        let mut grad = vec![0.0; n];
        let mut data = 0.0;
        for (d, p) in &partials {
            data += d;
            for (g, v) in grad.iter_mut().zip(p) {
                *g += v;
            }
        }
        let mut prior = 0.0;
        if self.prior_weight != 0.0 {
            prior = self.prior_weight * self.prior.log_prior(rho, self.height, self.width);
            self.prior
                .add_gradient(rho, self.height, self.width, self.prior_weight, &mut grad);
        }
        (ObjectiveValue { data, prior }, grad)
    }

    /// `dQ/dnu = dQ/drho * 2 nu`.
    pub fn gradient_nu(&self, nu: &[f64]) -> Vec<f64> {
        self.evaluate_nu(nu).1
    }

    /// Value and `nu`-gradient at `rho = nu^2`.
    pub fn evaluate_nu(&self, nu: &[f64]) -> (f64, Vec<f64>) {
        let rho: Vec<f64> = nu.iter().map(|v| v * v).collect();
        let (value, mut g) = self.evaluate(&rho);
        for (gi, v) in g.iter_mut().zip(nu) {
            *gi *= 2.0 * v;
        }
        (value.total(), g)
    }
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
