use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{RigidTransform, Vec3};
use crate::simulator::trajectory::Plane;

/// Serializable description of a candidate grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateGridSpec {
    pub plane: Plane,
    pub center: Vec3,
    /// In-plane extents `(u, v)`, meters.
    pub extent: (f64, f64),
    /// `(rows, cols)`; rows run along `v`, columns along `u`.
    pub shape: (usize, usize),
}

/// Equispaced lattice of candidate poses in a plane. Poses are stored in
/// row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateGrid {
    spec: CandidateGridSpec,
    poses: Vec<RigidTransform>,
}

impl CandidateGrid {
    pub fn new(spec: CandidateGridSpec) -> Result<Self> {
        let (rows, cols) = spec.shape;
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("candidate grid needs at least one pose"));
        }
        let (eu, ev) = spec.extent;
        if !(eu >= 0.0 && ev >= 0.0 && eu.is_finite() && ev.is_finite()) {
            return Err(Error::invalid(format!("bad grid extent {:?}", spec.extent)));
        }
        if !spec.center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid center must be finite"));
        }
        let (u, v) = spec.plane.in_plane_axes();
        let axis_values = |n: usize, extent: f64, center: f64| -> Vec<f64> {
            if n == 1 {
                return vec![center];
            }
            let step = extent / (n - 1) as f64;
            let start = center - extent / 2.0;
            (0..n).map(|i| start + i as f64 * step).collect()
        };
        let us = axis_values(cols, eu, spec.center[u]);
        let vs = axis_values(rows, ev, spec.center[v]);
        let mut poses = Vec::with_capacity(rows * cols);
        for &vv in &vs {
            for &uu in &us {
                let mut t = spec.center;
                t[u] = uu;
                t[v] = vv;
                poses.push(RigidTransform::translation(t));
            }
        }
        Ok(Self { spec, poses })
    }

    /// Square grid of side `extent` centered on `center`.
    pub fn square(plane: Plane, center: Vec3, extent: f64, n: usize) -> Result<Self> {
        Self::new(CandidateGridSpec {
            plane,
            center,
            extent: (extent, extent),
            shape: (n, n),
        })
    }

    pub fn spec(&self) -> &CandidateGridSpec {
        &self.spec
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.spec.shape
    }

    /// Index of the lattice pose closest to `t`.
    pub fn nearest(&self, t: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, p) in self.poses.iter().enumerate() {
            let d: f64 = (0..3).map(|i| (p.translation[i] - t[i]).powi(2)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }
}
