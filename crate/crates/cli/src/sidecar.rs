//! JSON metadata written next to every tensor.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use keyhole_core::forward::{ForwardModel, TransientHistogram};
use keyhole_core::simulator::{CandidateGridSpec, NoiseModel, TrajectorySet};
use keyhole_core::Tensor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{GainSetting, Method, ReconstructConfig};

pub const SIDECAR_VERSION: u32 = 1;
pub const TENSOR_FORMAT: &str = "KHT1";

/// Describes an `L x T` measurement tensor well enough to reconstruct from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    pub format_version: u32,
    pub tensor_format: String,
    /// File names relative to the sidecar.
    pub tensor: String,
    pub dims: [usize; 2],
    pub truth: Option<String>,
    pub object: String,
    pub trajectory: TrajectorySet,
    /// Forward model with the resolved gain.
    pub model: ForwardModel,
    pub gain_setting: GainSetting,
    pub noise: NoiseModel,
    pub noise_algorithm: String,
    pub seed: u64,
}

impl MeasurementSidecar {
    pub fn snr(&self) -> Option<f64> {
        (self.noise.kind != keyhole_core::NoiseKind::None).then_some(self.noise.target_snr)
    }

    /// Loads the tensor and checks it against the declared shape.
    pub fn measurements(&self, dir: &Path) -> anyhow::Result<Vec<TransientHistogram>> {
        let path = dir.join(&self.tensor);
        let tensor = Tensor::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if tensor.dims != self.dims {
            bail!(
                "{} has dims {:?}, sidecar declares {:?}",
                path.display(),
                tensor.dims,
                self.dims
            );
        }
        let [l, t] = self.dims;
        if t != self.model.time.bins {
            bail!(
                "tensor has {t} bins, time axis has {}",
                self.model.time.bins
            );
        }
        if l != self.trajectory.len() {
            bail!(
                "tensor has {l} measurements, trajectory has {} poses",
                self.trajectory.len()
            );
        }
        tensor
            .to_rows()?
            .into_iter()
            .map(|row| Ok(TransientHistogram::new(row, &self.model.time)?))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSidecar {
    pub format_version: u32,
    pub method: Method,
    /// Absolute path of the measurement sidecar.
    pub measurements: PathBuf,
    pub albedo: String,
    pub weights: Option<String>,
    pub omega: Option<CandidateGridSpec>,
    pub config: ReconstructConfig,
    pub iterations: usize,
    pub wall_time_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Directory holding `path`, `.` for bare file names.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
