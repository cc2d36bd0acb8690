//! Confocal transient forward model for a planar hidden object.
//!
//! A pixel at local position `x'` is moved to `x = R x' + t` by the object
//! pose. Its light returns after a round trip of `2 |x|` and is attenuated by
//! `1 / g(x)`. Every pixel therefore lands at a single continuous time
//! coordinate which is split linearly over the two neighbouring bins, so each
//! pose yields a sparse non-negative linear map from albedo pixels to bins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Object pose: in-plane rotation about the local z axis, then translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub translation: Vec3,
    #[serde(default)]
    pub rotation: f64,
}

impl RigidTransform {
    pub fn translation(translation: Vec3) -> Self {
        Self {
            translation,
            rotation: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::translation([0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.translation.iter().all(|v| v.is_finite()) && self.rotation.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("non-finite pose {self:?}")))
        }
    }

    /// Maps a local point into the global frame.
    #[inline]
    pub fn apply(&self, local: &Vec3) -> Vec3 {
        let t = &self.translation;
        if self.rotation == 0.0 {
            [local[0] + t[0], local[1] + t[1], local[2] + t[2]]
        } else {
            let (s, c) = self.rotation.sin_cos();
            [
                c * local[0] - s * local[1] + t[0],
                s * local[0] + c * local[1] + t[1],
                local[2] + t[2],
            ]
        }
    }
}

/// Shape and placement of a planar albedo grid spanning the local x–y axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub height: usize,
    pub width: usize,
    /// Meters per pixel.
    pub pixel_pitch: f64,
    /// Position of the grid center in the local frame, meters.
    #[serde(default)]
    pub plane_offset: Vec3,
}

impl GridGeometry {
    pub fn new(height: usize, width: usize, pixel_pitch: f64) -> Result<Self> {
        let geometry = Self {
            height,
            width,
            pixel_pitch,
            plane_offset: [0.0; 3],
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("albedo grid must have at least one pixel"));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::invalid(format!(
                "pixel pitch must be positive, got {}",
                self.pixel_pitch
            )));
        }
        if !self.plane_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("plane offset must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn pixel_area(&self) -> f64 {
        self.pixel_pitch * self.pixel_pitch
    }

    /// Local coordinates of the center of pixel `(row, col)`. Row 0 is the
    /// top of the image (largest y).
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> Vec3 {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        [
            (col as f64 - cx) * self.pixel_pitch + self.plane_offset[0],
            (cy - row as f64) * self.pixel_pitch + self.plane_offset[1],
            self.plane_offset[2],
        ]
    }
}

/// Non-negative planar albedo.
#[derive(Clone, Debug, PartialEq)]
pub struct AlbedoGrid {
    pub geometry: GridGeometry,
    values: Image,
}

impl AlbedoGrid {
    pub fn new(geometry: GridGeometry, values: Image) -> Result<Self> {
        geometry.validate()?;
        if values.shape() != (geometry.height, geometry.width) {
            return Err(Error::shape(
                format!("{}x{}", geometry.height, geometry.width),
                format!("{}x{}", values.height(), values.width()),
            ));
        }
        if let Some(bad) = values
            .as_slice()
            .iter()
            .find(|v| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "albedo values must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            values: Image::zeros(geometry.height, geometry.width),
            geometry,
        }
    }

    pub fn values(&self) -> &Image {
        &self.values
    }

    pub fn into_values(self) -> Image {
        self.values
    }
}

/// Time binning of a transient histogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub bins: usize,
    /// Seconds per bin.
    pub bin_width: f64,
    /// Time of the leading edge of bin 0, seconds.
    #[serde(default)]
    pub t0: f64,
}

impl Default for TimeAxis {
    fn default() -> Self {
        Self {
            bins: 1024,
            bin_width: 16e-12,
            t0: 0.0,
        }
    }
}

impl TimeAxis {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) || !self.t0.is_finite() {
            return Err(Error::invalid(format!("bad time axis {self:?}")));
        }
        Ok(())
    }
}

/// Continuous round-trip bin coordinate for a point at range `r`, split into
/// the lower bin index and the weight that goes to it (the remainder goes to
/// the next bin). The index may be negative or beyond the histogram; the
/// caller decides what is in range.
pub fn bin_index(r: f64, bin_width: f64, t0: f64) -> (i64, f64) {
    let b = (2.0 * r) / (SPEED_OF_LIGHT * bin_width) - t0 / bin_width;
    let lo = b.floor();
    (lo as i64, 1.0 - (b - lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalloffKind {
    Diffuse,
    Retro,
    Experimental,
    Supplement,
    Custom,
}

/// Radiometric falloff `g(x) = |x|^p cos^q(phi)`, with `phi` the angle between
/// the relay-wall normal and `x`. Contributions are divided by `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalloffModel {
    pub kind: FalloffKind,
    pub radial_exponent: f64,
    pub angular_exponent: f64,
    pub wall_normal: Vec3,
}

impl FalloffModel {
    const DEFAULT_NORMAL: Vec3 = [0.0, 0.0, 1.0];

    /// Lambertian object, `g = |x|^4`.
    pub fn diffuse() -> Self {
        Self::preset(FalloffKind::Diffuse, 4.0, 0.0)
    }

    /// Retroreflective object, `g = |x|^2`.
    pub fn retro() -> Self {
        Self::preset(FalloffKind::Retro, 2.0, 0.0)
    }

    /// Empirical fit for retroreflective tape, `g = |x|^4 cos^4(phi)`.
    pub fn experimental() -> Self {
        Self::preset(FalloffKind::Experimental, 4.0, 4.0)
    }

    /// Lambertian wall with retroreflective object: drop-off
    /// `r^-2 cos^4(theta)`, i.e. `g = |x|^2 / cos^4(phi)`.
    pub fn supplement() -> Self {
        Self::preset(FalloffKind::Supplement, 2.0, -4.0)
    }

    pub fn custom(radial_exponent: f64, angular_exponent: f64, wall_normal: Vec3) -> Result<Self> {
        let model = Self {
            kind: FalloffKind::Custom,
            radial_exponent,
            angular_exponent,
            wall_normal,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_kind(kind: FalloffKind) -> Result<Self> {
        Ok(match kind {
            FalloffKind::Diffuse => Self::diffuse(),
            FalloffKind::Retro => Self::retro(),
            FalloffKind::Experimental => Self::experimental(),
            FalloffKind::Supplement => Self::supplement(),
            FalloffKind::Custom => {
                return Err(Error::invalid("custom falloff needs explicit exponents"))
            }
        })
    }

    fn preset(kind: FalloffKind, p: f64, q: f64) -> Self {
        Self {
            kind,
            radial_exponent: p,
            angular_exponent: q,
            wall_normal: Self::DEFAULT_NORMAL,
        }
    }

    pub fn with_wall_normal(mut self, wall_normal: Vec3) -> Result<Self> {
        self.wall_normal = wall_normal;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.radial_exponent.is_finite() || !self.angular_exponent.is_finite() {
            return Err(Error::invalid("falloff exponents must be finite"));
        }
        if (norm(&self.wall_normal) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "wall normal {:?} is not unit length",
                self.wall_normal
            )));
        }
        let expected = match self.kind {
            FalloffKind::Diffuse => Some((4.0, 0.0)),
            FalloffKind::Retro => Some((2.0, 0.0)),
            FalloffKind::Experimental => Some((4.0, 4.0)),
            FalloffKind::Supplement => Some((2.0, -4.0)),
            FalloffKind::Custom => None,
        };
        if let Some(pq) = expected {
            if pq != (self.radial_exponent, self.angular_exponent) {
                return Err(Error::invalid(format!(
                    "{:?} falloff fixes exponents {pq:?}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    /// Evaluates `g(x)`.
    pub fn eval(&self, x: &Vec3) -> Result<f64> {
        let r = norm(x);
        if !(r > 0.0) {
            return Err(Error::Domain(format!("falloff undefined at range {r}")));
        }
        let mut g = pow(r, self.radial_exponent);
        if self.angular_exponent != 0.0 {
            let cos = dot(&self.wall_normal, x) / r;
            if !(cos > 0.0) {
                return Err(Error::Domain(format!(
                    "point {x:?} lies behind the wall (cos = {cos})"
                )));
            }
            g *= pow(cos, self.angular_exponent);
        }
        Ok(g)
    }
}

#[inline]
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

/// Everything the renderer needs besides the object and its pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    pub falloff: FalloffModel,
    pub time: TimeAxis,
    /// Overall radiometric scale (expected counts per unit albedo·area/g).
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl ForwardModel {
    pub fn new(falloff: FalloffModel, time: TimeAxis) -> Self {
        Self {
            falloff,
            time,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.falloff.validate()?;
        self.time.validate()?;
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::invalid(format!(
                "gain must be positive, got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

/// Time-resolved photon counts for one measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientHistogram {
    pub counts: Vec<f64>,
    pub bin_width: f64,
    pub t0: f64,
}

impl TransientHistogram {
    pub fn zeros(time: &TimeAxis) -> Self {
        Self {
            counts: vec![0.0; time.bins],
            bin_width: time.bin_width,
            t0: time.t0,
        }
    }

    pub fn new(counts: Vec<f64>, time: &TimeAxis) -> Result<Self> {
        if counts.len() != time.bins {
            return Err(Error::shape(time.bins, counts.len()));
        }
        if counts.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("histogram counts must be finite"));
        }
        Ok(Self {
            counts,
            bin_width: time.bin_width,
            t0: time.t0,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn time_axis(&self) -> TimeAxis {
        TimeAxis {
            bins: self.counts.len(),
            bin_width: self.bin_width,
            t0: self.t0,
        }
    }

    pub fn peak(&self) -> f64 {
        self.counts.iter().copied().fold(0.0, f64::max)
    }
}

/// Contribution of one pixel: `lo` goes to bin `bin`, `hi` to `bin + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelResponse {
    pub bin: u32,
    pub lo: f64,
    pub hi: f64,
}

impl PixelResponse {
    #[inline]
    pub fn total(&self) -> f64 {
        self.lo + self.hi
    }
}

/// Sparse linear map from albedo pixels to time bins for one pose.
#[derive(Clone, Debug)]
pub struct SystemMatrix {
    geometry: GridGeometry,
    time: TimeAxis,
    pose: RigidTransform,
    entries: Vec<Option<PixelResponse>>,
    out_of_range: usize,
    invalid: usize,
}

impl SystemMatrix {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn time_axis(&self) -> &TimeAxis {
        &self.time
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn bins(&self) -> usize {
        self.time.bins
    }

    pub fn pixels(&self) -> usize {
        self.entries.len()
    }

    /// Per-pixel responses in row-major pixel order; `None` for dropped pixels.
    pub fn entries(&self) -> &[Option<PixelResponse>] {
        &self.entries
    }

    /// Pixels whose time coordinate fell outside the histogram.
    pub fn out_of_range(&self) -> usize {
        self.out_of_range
    }

    /// Pixels where the falloff was undefined (zero range or behind the wall).
    pub fn invalid(&self) -> usize {
        self.invalid
    }

    /// True when no pixel reaches the histogram.
    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Option::is_none)
    }

    /// Dense `bins x pixels` copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.entries.len()]; self.time.bins];
        for (p, e) in self.entries.iter().enumerate() {
            if let Some(e) = e {
                dense[e.bin as usize][p] += e.lo;
                dense[e.bin as usize + 1][p] += e.hi;
            }
        }
        dense
    }

    /// `out += A * values`.
    #[inline]
    pub fn render_add(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.entries.len());
        debug_assert_eq!(out.len(), self.time.bins);
        for (e, &v) in self.entries.iter().zip(values) {
            if let Some(e) = e {
                out[e.bin as usize] += e.lo * v;
                out[e.bin as usize + 1] += e.hi * v;
            }
        }
    }

    /// `out[p] += scale * (A^T y)[p]`.
    #[inline]
    pub fn adjoint_add(&self, y: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.time.bins);
        debug_assert_eq!(out.len(), self.entries.len());
        for (e, o) in self.entries.iter().zip(out.iter_mut()) {
            if let Some(e) = e {
                let b = e.bin as usize;
                *o += scale * (e.lo * y[b] + e.hi * y[b + 1]);
            }
        }
    }

    pub fn render_values(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.time.bins];
        self.render_add(values, &mut out);
        out
    }
}

/// Builds the system matrix for one pose with the sensor at the origin.
pub fn assemble_system(
    geometry: &GridGeometry,
    pose: &RigidTransform,
    model: &ForwardModel,
) -> Result<SystemMatrix> {
    assemble_system_with_origin(geometry, pose, model, &[0.0; 3])
}

/// Builds the system matrix for one pose as seen from a sensor at
/// `sensor_origin`. Moving the object by `t` is the same as moving the sensor
/// by `-t`.
pub fn assemble_system_with_origin(
    geometry: &GridGeometry,
    pose: &RigidTransform,
    model: &ForwardModel,
    sensor_origin: &Vec3,
) -> Result<SystemMatrix> {
    geometry.validate()?;
    model.validate()?;
    pose.validate()?;
    let time = model.time;
    let scale = model.gain * geometry.pixel_area();
    let last_start = time.bins as i64 - 1;

    let mut entries = Vec::with_capacity(geometry.pixel_count());
    let mut out_of_range = 0;
    let mut invalid = 0;
    for row in 0..geometry.height {
        for col in 0..geometry.width {
            let world = pose.apply(&geometry.pixel_center(row, col));
            let x = [
                world[0] - sensor_origin[0],
                world[1] - sensor_origin[1],
                world[2] - sensor_origin[2],
            ];
            let g = match model.falloff.eval(&x) {
                Ok(g) => g,
                Err(_) => {
                    invalid += 1;
                    entries.push(None);
                    continue;
                }
            };
            let (bin, weight) = bin_index(norm(&x), time.bin_width, time.t0);
            if bin < 0 || bin >= last_start {
                out_of_range += 1;
                entries.push(None);
                continue;
            }
            let value = scale / g;
            let lo = value * weight;
            entries.push(Some(PixelResponse {
                bin: bin as u32,
                lo,
                hi: value - lo,
            }));
        }
    }
    let system = SystemMatrix {
        geometry: *geometry,
        time,
        pose: *pose,
        entries,
        out_of_range,
        invalid,
    };
    if system.is_empty() {
        log::warn!(
            "pose {:?} maps every pixel outside the histogram ({} out of range, {} invalid)",
            pose.translation,
            out_of_range,
            invalid
        );
    }
    Ok(system)
}

/// Assembles systems for every pose, in parallel, preserving pose order.
pub fn assemble_many(
    geometry: &GridGeometry,
    poses: &[RigidTransform],
    model: &ForwardModel,
) -> Result<Vec<SystemMatrix>> {
    poses
        .par_iter()
        .map(|pose| assemble_system(geometry, pose, model))
        .collect()
}

fn check_shape(system: &SystemMatrix, geometry: &GridGeometry) -> Result<()> {
    let s = system.geometry();
    if (s.height, s.width) != (geometry.height, geometry.width) {
        return Err(Error::shape(
            format!("{}x{}", s.height, s.width),
            format!("{}x{}", geometry.height, geometry.width),
        ));
    }
    Ok(())
}

/// Noiseless histogram `A rho`.
pub fn render(system: &SystemMatrix, albedo: &AlbedoGrid) -> Result<TransientHistogram> {
    check_shape(system, &albedo.geometry)?;
    Ok(TransientHistogram {
        counts: system.render_values(albedo.values().as_slice()),
        bin_width: system.time.bin_width,
        t0: system.time.t0,
    })
}

/// Back-projection `A^T y` as an image.
pub fn adjoint(system: &SystemMatrix, histogram: &TransientHistogram) -> Result<Image> {
    if histogram.len() != system.bins() {
        return Err(Error::shape(system.bins(), histogram.len()));
    }
    let g = system.geometry();
    let mut out = vec![0.0; g.pixel_count()];
    system.adjoint_add(&histogram.counts, 1.0, &mut out);
    Image::from_vec(g.height, g.width, out)
}
