use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{RigidTransform, Vec3};

/// Plane in which all virtual sensor positions of a trajectory lie.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    ConstantX,
    ConstantY,
    ConstantZ,
}

impl Plane {
    /// Index of the coordinate held fixed.
    pub fn fixed_axis(self) -> usize {
        match self {
            Plane::ConstantX => 0,
            Plane::ConstantY => 1,
            Plane::ConstantZ => 2,
        }
    }

    /// The two in-plane axes `(u, v)`.
    pub fn in_plane_axes(self) -> (usize, usize) {
        match self {
            Plane::ConstantX => (1, 2),
            Plane::ConstantY => (0, 2),
            Plane::ConstantZ => (0, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SegmentSamples {
    Uniform(usize),
    PerSegment(Vec<usize>),
}

/// Piecewise-linear trajectory description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub label: String,
    pub plane: Plane,
    pub waypoints: Vec<Vec3>,
    pub samples_per_segment: SegmentSamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub label: String,
    pub plane: Plane,
    pub poses: Vec<RigidTransform>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Every pose translated by `d`.
    pub fn shifted(&self, d: &Vec3) -> TrajectorySet {
        TrajectorySet {
            label: self.label.clone(),
            plane: self.plane,
            poses: self
                .poses
                .iter()
                .map(|p| RigidTransform {
                    translation: [
                        p.translation[0] + d[0],
                        p.translation[1] + d[1],
                        p.translation[2] + d[2],
                    ],
                    rotation: p.rotation,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .poses
            .first()
            .ok_or_else(|| Error::invalid("trajectory has no poses"))?;
        let axis = self.plane.fixed_axis();
        for p in &self.poses {
            p.validate()?;
            if (p.translation[axis] - first.translation[axis]).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "pose {:?} leaves the {:?} plane",
                    p.translation, self.plane
                )));
            }
        }
        Ok(())
    }
}

/// Interpolates the waypoints. Segment joints appear once and both ends are
/// exactly the first and last waypoints.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<TrajectorySet> {
    if spec.waypoints.len() < 2 {
        return Err(Error::invalid("a trajectory needs at least two waypoints"));
    }
    let segments = spec.waypoints.len() - 1;
    let counts = match &spec.samples_per_segment {
        SegmentSamples::Uniform(n) => vec![*n; segments],
        SegmentSamples::PerSegment(v) => {
            if v.len() != segments {
                return Err(Error::invalid(format!(
                    "{} sample counts given for {segments} segments",
                    v.len()
                )));
            }
            v.clone()
        }
    };
    if counts.contains(&0) {
        return Err(Error::invalid("samples per segment must be at least 1"));
    }
    let axis = spec.plane.fixed_axis();
    let level = spec.waypoints[0][axis];
    for w in &spec.waypoints {
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite waypoint {w:?}")));
        }
        if (w[axis] - level).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "waypoint {w:?} lies outside the {:?} plane at {level}",
                spec.plane
            )));
        }
    }

    if spec.waypoints.iter().all(|w| *w == spec.waypoints[0]) {
        log::warn!(
            "trajectory {:?} has a single repeated waypoint; using one pose",
            spec.label
        );
        return Ok(TrajectorySet {
            label: spec.label.clone(),
            plane: spec.plane,
            poses: vec![RigidTransform::translation(spec.waypoints[0])],
        });
    }

    let mut poses = Vec::with_capacity(counts.iter().sum::<usize>() + 1);
    for (pair, &n) in spec.waypoints.windows(2).zip(&counts) {
        let (a, b) = (pair[0], pair[1]);
        for s in 0..n {
            let f = s as f64 / n as f64;
            let mut p = [0.0; 3];
            for d in 0..3 {
                p[d] = a[d] + (b[d] - a[d]) * f;
            }
            poses.push(RigidTransform::translation(p));
        }
    }
    poses.push(RigidTransform::translation(*spec.waypoints.last().unwrap()));

    Ok(TrajectorySet {
        label: spec.label.clone(),
        plane: spec.plane,
        poses,
    })
}

/// Depth of the plane family centers, meters from the relay point.
pub const PRESET_DEPTH: f64 = 1.25;
/// Half-size of the preset shapes, meters.
pub const PRESET_HALF_SIZE: f64 = 0.375;
/// Distance of the constant-x and constant-y planes from the optical axis.
/// A plane through the axis would make the object indistinguishable from its
/// mirror image across that plane.
pub const PRESET_PLANE_OFFSET: f64 = 0.4;

/// Nine bundled trajectories `a`..`i`: columns are constant-z, constant-x and
/// constant-y planes, rows have 103, 193 and 360 poses.
pub fn preset_trajectory(name: &str) -> Result<TrajectorySpec> {
    let index = match name {
        "a" | "b" | "c" | "d" | "e" | "f" | "g" | "h" | "i" => (name.as_bytes()[0] - b'a') as usize,
        _ => {
            return Err(Error::invalid(format!(
                "unknown trajectory preset {name:?}"
            )))
        }
    };
    let (row, col) = (index / 3, index % 3);
    let plane = [Plane::ConstantZ, Plane::ConstantX, Plane::ConstantY][col];

    // shapes in normalized in-plane coordinates
    let (shape, samples): (Vec<(f64, f64)>, SegmentSamples) = match row {
        0 => (
            vec![(-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)],
            SegmentSamples::Uniform(34),
        ),
        1 => (
            vec![
                (-1.0, -1.0),
                (1.0, -1.0),
                (1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, -1.0),
            ],
            SegmentSamples::Uniform(48),
        ),
        _ => (
            vec![(-1.0, -1.0), (0.0, 1.0), (1.0, -1.0), (-1.0, 0.0)],
            SegmentSamples::PerSegment(vec![120, 120, 119]),
        ),
    };

    let center = plane_center(plane);
    let (u, v) = plane.in_plane_axes();
    let waypoints = shape
        .into_iter()
        .map(|(su, sv)| {
            let mut p = center;
            p[u] += su * PRESET_HALF_SIZE;
            p[v] += sv * PRESET_HALF_SIZE;
            p
        })
        .collect();
    Ok(TrajectorySpec {
        label: name.to_string(),
        plane,
        waypoints,
        samples_per_segment: samples,
    })
}

/// Center of the motion region used by presets and default candidate grids.
pub fn plane_center(plane: Plane) -> Vec3 {
    match plane {
        Plane::ConstantZ => [0.0, 0.0, PRESET_DEPTH],
        Plane::ConstantX => [PRESET_PLANE_OFFSET, 0.0, PRESET_DEPTH],
        Plane::ConstantY => [0.0, -PRESET_PLANE_OFFSET, PRESET_DEPTH],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(plane: Plane, waypoints: Vec<Vec3>, n: usize) -> TrajectorySpec {
        TrajectorySpec {
            label: "t".into(),
            plane,
            waypoints,
            samples_per_segment: SegmentSamples::Uniform(n),
        }
    }

    #[test]
    fn two_waypoints_one_sample() {
        let a = [0.1, 0.0, 1.0];
        let b = [0.4, 0.0, 1.3];
        let t = make_trajectory(&spec(Plane::ConstantY, vec![a, b], 1)).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.poses[0].translation, a);
        assert_eq!(t.poses[1].translation, b);
    }

    #[test]
    fn square_loop_has_193_poses() {
        let s = 0.3;
        let w = vec![
            [-s, 0.0, 1.0 - s],
            [s, 0.0, 1.0 - s],
            [s, 0.0, 1.0 + s],
            [-s, 0.0, 1.0 + s],
            [-s, 0.0, 1.0 - s],
        ];
        let t = make_trajectory(&spec(Plane::ConstantY, w, 48)).unwrap();
        assert_eq!(t.len(), 4 * 48 + 1);
        t.validate().unwrap();
    }

    #[test]
    fn repeated_waypoint_degenerates_to_one_pose() {
        let p = [0.0, 0.2, 1.0];
        let t = make_trajectory(&spec(Plane::ConstantZ, vec![p, p], 10)).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn waypoint_off_plane_is_rejected() {
        let w = vec![[0.0, 0.0, 1.0], [0.0, 0.1, 1.0]];
        assert!(make_trajectory(&spec(Plane::ConstantY, w, 4)).is_err());
        assert!(make_trajectory(&spec(Plane::ConstantY, vec![[0.0; 3]], 4)).is_err());
        let w = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]];
        assert!(make_trajectory(&spec(Plane::ConstantY, w, 0)).is_err());
    }

    #[test]
    fn presets_have_published_lengths_and_planes() {
        let expected = [103, 103, 103, 193, 193, 193, 360, 360, 360];
        for (i, name) in ["a", "b", "c", "d", "e", "f", "g", "h", "i"]
            .iter()
            .enumerate()
        {
            let t = make_trajectory(&preset_trajectory(name).unwrap()).unwrap();
            assert_eq!(t.len(), expected[i], "preset {name}");
            t.validate().unwrap();
            let axis = t.plane.fixed_axis();
            let level = t.poses[0].translation[axis];
            assert!(t.poses.iter().all(|p| p.translation[axis] == level));
        }
        assert_eq!(preset_trajectory("f").unwrap().plane, Plane::ConstantY);
        assert!(preset_trajectory("z").is_err());
    }
}
