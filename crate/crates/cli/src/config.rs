//! Versioned JSON configs and the settings they share.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use keyhole_core::eval::{DisambiguationSearch, SsimParams};
use keyhole_core::forward::{AlbedoGrid, FalloffKind, FalloffModel, ForwardModel, TimeAxis};
use keyhole_core::io::read_pgm;
use keyhole_core::recon::{EmConfig, GD_ITERATIONS};
use keyhole_core::simulator::{
    glyph, make_trajectory, plane_center, preset_trajectory, rasterize_object, CandidateGrid,
    CandidateGridSpec, Plane, TrajectorySet, TrajectorySpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Schema version accepted by every config file.
pub const CONFIG_VERSION: u32 = 1;

/// Reads and validates a config, reporting the path of any bad field.
pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let value: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow!("{}: field `{field}`: {}", path.display(), e.inner())
    })?;
    if value.version() != CONFIG_VERSION {
        bail!(
            "{}: unsupported config version {} (expected {CONFIG_VERSION})",
            path.display(),
            value.version()
        );
    }
    Ok(value)
}

pub trait Versioned {
    fn version(&self) -> u32;
}

/// Object image: `glyph:<name>` for a bundled glyph, otherwise a PGM path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectSource(pub String);

impl ObjectSource {
    pub fn label(&self) -> String {
        match self.0.strip_prefix("glyph:") {
            Some(name) => name.to_string(),
            None => Path::new(&self.0)
                .file_stem()
                .map_or_else(|| self.0.clone(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Relative paths resolve against `base`.
    pub fn load(&self, settings: &ObjectSettings, base: &Path) -> anyhow::Result<AlbedoGrid> {
        let image = match self.0.strip_prefix("glyph:") {
            Some(name) => glyph(name, settings.resolution)?,
            None => {
                let path = resolve(base, Path::new(&self.0));
                read_pgm(&path).with_context(|| format!("object image {}", path.display()))?
            }
        };
        Ok(rasterize_object(
            &image,
            settings.physical_size,
            settings.binarize,
        )?)
    }
}

pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSettings {
    /// Side length in meters.
    pub physical_size: f64,
    /// Raster size of bundled glyphs.
    pub resolution: usize,
    pub binarize: bool,
}

impl Default for ObjectSettings {
    fn default() -> Self {
        Self {
            physical_size: 0.5,
            resolution: 64,
            binarize: true,
        }
    }
}

/// A preset name `a`..`i` or an explicit waypoint description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectorySource {
    Preset(String),
    Spec(TrajectorySpec),
}

impl TrajectorySource {
    pub fn spec(&self) -> anyhow::Result<TrajectorySpec> {
        match self {
            TrajectorySource::Preset(name) => Ok(preset_trajectory(name)?),
            TrajectorySource::Spec(spec) => Ok(spec.clone()),
        }
    }

    pub fn build(&self) -> anyhow::Result<TrajectorySet> {
        Ok(make_trajectory(&self.spec()?)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FalloffSetting {
    Preset(FalloffKind),
    Model(FalloffModel),
}

impl FalloffSetting {
    pub fn model(&self) -> anyhow::Result<FalloffModel> {
        match self {
            FalloffSetting::Preset(kind) => Ok(FalloffModel::from_kind(*kind)?),
            FalloffSetting::Model(m) => {
                m.validate()?;
                Ok(*m)
            }
        }
    }
}

impl Default for FalloffSetting {
    fn default() -> Self {
        FalloffSetting::Preset(FalloffKind::Retro)
    }
}

/// `"auto"` scales the brightest noiseless histogram to `snr^2` photons (or
/// to 1 without noise); a number is used as is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSetting {
    Fixed(f64),
    Named(String),
}

impl Default for GainSetting {
    fn default() -> Self {
        GainSetting::Named("auto".into())
    }
}

impl GainSetting {
    pub fn resolve(
        &self,
        albedo: &AlbedoGrid,
        trajectory: &TrajectorySet,
        model: &ForwardModel,
        snr: Option<f64>,
    ) -> anyhow::Result<f64> {
        match self {
            GainSetting::Fixed(g) if *g > 0.0 && g.is_finite() => Ok(*g),
            GainSetting::Fixed(g) => bail!("gain must be positive, got {g}"),
            GainSetting::Named(s) if s == "auto" => {
                let peak = snr.map_or(1.0, |s| s * s);
                Ok(keyhole_core::counts_gain(albedo, trajectory, model, peak)?)
            }
            GainSetting::Named(s) => bail!("gain must be a number or \"auto\", got {s:?}"),
        }
    }
}

/// Candidate grid: a full spec, or a square of `size` x `size` poses spanning
/// `extent` meters around the default center of the trajectory plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSetting {
    Square { extent: f64, size: usize },
    Full(CandidateGridSpec),
}

impl Default for OmegaSetting {
    fn default() -> Self {
        OmegaSetting::Square {
            extent: 1.0,
            size: 17,
        }
    }
}

impl OmegaSetting {
    pub fn spec(&self, plane: Plane) -> CandidateGridSpec {
        match *self {
            OmegaSetting::Square { extent, size } => CandidateGridSpec {
                plane,
                center: plane_center(plane),
                extent: (extent, extent),
                shape: (size, size),
            },
            OmegaSetting::Full(spec) => spec,
        }
    }

    pub fn grid(&self, plane: Plane) -> anyhow::Result<CandidateGrid> {
        Ok(CandidateGrid::new(self.spec(plane))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    pub snr: f64,
}

/// `simulate` input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    pub object: ObjectSource,
    #[serde(default)]
    pub object_settings: ObjectSettings,
    pub trajectory: TrajectorySource,
    #[serde(default)]
    pub falloff: FalloffSetting,
    #[serde(default)]
    pub time: TimeAxis,
    #[serde(default)]
    pub gain: GainSetting,
    /// Poisson noise at this peak SNR; noiseless when absent.
    #[serde(default)]
    pub noise: Option<NoiseSettings>,
    #[serde(default)]
    pub seed: u64,
}

impl Versioned for SimulateConfig {
    fn version(&self) -> u32 {
        self.version
    }
}

/// `reconstruct` input. The forward model comes from the measurement sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub version: u32,
    #[serde(default)]
    pub em: EmConfig,
    /// Required for EM.
    #[serde(default)]
    pub omega: Option<OmegaSetting>,
    #[serde(default = "default_gd_iterations")]
    pub gd_iterations: usize,
}

fn default_gd_iterations() -> usize {
    GD_ITERATIONS
}

impl Versioned for ReconstructConfig {
    fn version(&self) -> u32 {
        self.version
    }
}

/// `evaluate` input. Without a search the default for the trajectory plane
/// is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub version: u32,
    #[serde(default)]
    pub search: Option<DisambiguationSearch>,
    #[serde(default)]
    pub ssim: SsimParams,
}

impl Versioned for EvaluateConfig {
    fn version(&self) -> u32 {
        self.version
    }
}

#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Em,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Em => "em",
        }
    }
}

/// Cross product of objects, trajectories, SNRs and methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub objects: Vec<ObjectSource>,
    pub trajectories: Vec<TrajectorySource>,
    pub snrs: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub config: EmConfig,
    #[serde(default)]
    pub omega: OmegaSetting,
    #[serde(default)]
    pub object_settings: ObjectSettings,
    #[serde(default)]
    pub falloff: FalloffSetting,
    #[serde(default)]
    pub time: TimeAxis,
    #[serde(default)]
    pub gain: GainSetting,
    #[serde(default = "default_gd_iterations")]
    pub gd_iterations: usize,
    #[serde(default)]
    pub search: Option<DisambiguationSearch>,
    #[serde(default)]
    pub ssim: SsimParams,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl Versioned for ExperimentSpec {
    fn version(&self) -> u32 {
        self.version
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.objects.is_empty() {
            bail!("spec lists no objects");
        }
        if self.trajectories.is_empty() {
            bail!("spec lists no trajectories");
        }
        if self.snrs.is_empty() {
            bail!("spec lists no SNRs");
        }
        if self.methods.is_empty() {
            bail!("spec lists no methods");
        }
        if let Some(s) = self.snrs.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            bail!("SNR must be positive, got {s}");
        }
        self.config.validate()?;
        self.falloff.model()?;
        self.time.validate()?;
        for t in &self.trajectories {
            t.build()?.validate()?;
        }
        Ok(())
    }
}

pub fn search_for(search: Option<DisambiguationSearch>, plane: Plane) -> DisambiguationSearch {
    search.unwrap_or_else(|| DisambiguationSearch::for_plane(plane))
}
