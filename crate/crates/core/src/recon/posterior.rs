//! Posterior pose weights (E-step) and trajectory read-out.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{RigidTransform, SystemMatrix, TransientHistogram};
use crate::simulator::CandidateGrid;

/// `L x K` matrix of per-measurement pose probabilities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorWeights {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PosteriorWeights {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("weight rows have different lengths"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Every measurement assigned to pose `k` with certainty.
    pub fn one_hot(assignments: &[usize], cols: usize) -> Result<Self> {
        let mut data = vec![0.0; assignments.len() * cols];
        for (i, &k) in assignments.iter().enumerate() {
            if k >= cols {
                return Err(Error::invalid(format!("pose index {k} out of {cols}")));
            }
            data[i * cols + k] = 1.0;
        }
        Ok(Self {
            rows: assignments.len(),
            cols,
            data,
        })
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums `sum_i w_ik`.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, w) in mass.iter_mut().zip(self.row(i)) {
                *m += w;
            }
        }
        mass
    }

    /// Index of the most probable pose of row `i`; ties go to the lowest index.
    pub fn argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (k, &w) in row.iter().enumerate() {
            if w > row[best] {
                best = k;
            }
        }
        best
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

pub(crate) fn check_measurements(
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
) -> Result<usize> {
    let bins = systems
        .first()
        .ok_or_else(|| Error::invalid("no candidate poses"))?
        .bins();
    if measurements.is_empty() {
        return Err(Error::invalid("no measurements"));
    }
    for y in measurements {
        if y.len() != bins {
            return Err(Error::shape(
                format!("{bins} bins"),
                format!("{} bins", y.len()),
            ));
        }
    }
    Ok(bins)
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Annealed posterior over candidate poses. Row `i` is proportional to
/// `exp(-beta |y_i - A_k rho|^2 / (2 sigma^2))`, normalized with a
/// max-shifted log-sum-exp.
pub fn e_step(
    measurements: &[TransientHistogram],
    systems: &[SystemMatrix],
    rho: &[f64],
    sigma: f64,
    beta: f64,
) -> Result<PosteriorWeights> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    check_measurements(measurements, systems)?;
    for s in systems {
        if s.pixels() != rho.len() {
            return Err(Error::shape(s.pixels(), rho.len()));
        }
    }
    let predictions: Vec<Vec<f64>> = systems.par_iter().map(|s| s.render_values(rho)).collect();
    let scale = beta / (2.0 * sigma * sigma);
    let rows: Vec<Vec<f64>> = measurements
        .par_iter()
        .map(|y| {
            let logs: Vec<f64> = predictions
                .iter()
                .map(|f| -scale * squared_distance(&y.counts, f))
                .collect();
            normalize_log_row(&logs)
        })
        .collect();
    PosteriorWeights::from_rows(rows)
}

/// `exp(l - max) / sum exp(l - max)`.
pub(crate) fn normalize_log_row(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Most probable candidate pose for every measurement.
pub fn estimate_trajectory(
    weights: &PosteriorWeights,
    grid: &CandidateGrid,
) -> Result<Vec<RigidTransform>> {
    if weights.cols() != grid.len() {
        return Err(Error::shape(
            format!("{} candidate poses", grid.len()),
            format!("{} weight columns", weights.cols()),
        ));
    }
    Ok((0..weights.rows())
        .map(|i| grid.poses()[weights.argmax(i)])
        .collect())
}
