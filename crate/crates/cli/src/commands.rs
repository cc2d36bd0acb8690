//! The single-stage subcommands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use keyhole_core::eval::{disambiguated_ssim, trajectory_rmse};
use keyhole_core::forward::ForwardModel;
use keyhole_core::io::{read_pgm, write_pgm};
use keyhole_core::recon::{
    em_reconstruct, estimate_trajectory, gd_reconstruct, EmOutput, GdOutput, PosteriorWeights,
};
use keyhole_core::simulator::{
    simulate_sequence, CandidateGrid, NoiseModel, TrajectorySet, POISSON_ALGORITHM,
};
use keyhole_core::{Image, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{
    load, search_for, EvaluateConfig, Method, ReconstructConfig, SimulateConfig, CONFIG_VERSION,
};
use crate::error::{config_error, Classify, CliResult};
use crate::report::{self, ResultRecord};
use crate::sidecar::{
    parent_dir, read_json, write_json, MeasurementSidecar, ReconSidecar, SIDECAR_VERSION,
    TENSOR_FORMAT,
};

pub const MEASUREMENTS_SIDECAR: &str = "measurements.json";
pub const RECON_SIDECAR: &str = "recon.json";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .config()
}

/// Writes the measurement tensor, the ground truth, previews and the sidecar
/// into `out`.
pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<MeasurementSidecar> {
    let cfg: SimulateConfig = load(config).config()?;
    let base = parent_dir(config);
    let seed = seed.unwrap_or(cfg.seed);
    let albedo = cfg.object.load(&cfg.object_settings, &base).config()?;
    let trajectory = cfg.trajectory.build().config()?;
    trajectory.validate().config()?;
    let falloff = cfg.falloff.model().config()?;
    cfg.time.validate().config()?;
    let snr = cfg.noise.as_ref().map(|n| n.snr);
    let unit = ForwardModel::new(falloff, cfg.time);
    let gain = cfg
        .gain
        .resolve(&albedo, &trajectory, &unit, snr)
        .config()?;
    let model = unit.with_gain(gain);
    let noise = snr.map_or_else(NoiseModel::none, |s| NoiseModel::poisson(s, seed));
    noise.validate().config()?;

    let y = simulate_sequence(&albedo, &trajectory, &model, &noise).runtime()?;

    create_dir(out)?;
    let rows: Vec<Vec<f64>> = y.iter().map(|h| h.counts.clone()).collect();
    let tensor = Tensor::from_rows(&rows).runtime()?;
    tensor.write(out.join("measurements.kht")).runtime()?;
    Tensor::from_image(albedo.values())
        .write(out.join("truth.kht"))
        .runtime()?;
    write_pgm(albedo.values(), out.join("truth.pgm")).runtime()?;
    let flat: Vec<f64> = rows.concat();
    let preview = Image::from_vec(rows.len(), model.time.bins, flat).runtime()?;
    write_pgm(&preview, out.join("measurements.pgm")).runtime()?;

    let sidecar = MeasurementSidecar {
        format_version: SIDECAR_VERSION,
        tensor_format: TENSOR_FORMAT.into(),
        tensor: "measurements.kht".into(),
        dims: [rows.len(), model.time.bins],
        truth: Some("truth.kht".into()),
        object: cfg.object.label(),
        trajectory,
        model,
        gain_setting: cfg.gain.clone(),
        noise,
        noise_algorithm: POISSON_ALGORITHM.into(),
        seed,
    };
    write_json(&out.join(MEASUREMENTS_SIDECAR), &sidecar).runtime()?;
    write_json(&out.join("simulate_config.json"), &cfg).runtime()?;
    Ok(sidecar)
}

pub fn default_reconstruct_config() -> ReconstructConfig {
    ReconstructConfig {
        version: CONFIG_VERSION,
        em: Default::default(),
        omega: None,
        gd_iterations: keyhole_core::recon::GD_ITERATIONS,
    }
}

/// Runs GD with the recorded poses or EM over the configured candidate grid.
pub fn reconstruct(
    method: Method,
    measurements: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> CliResult<ReconSidecar> {
    let sidecar: MeasurementSidecar = read_json(measurements).config()?;
    let dir = parent_dir(measurements);
    let y = sidecar.measurements(&dir).config()?;
    let mut cfg = match config {
        Some(path) => load::<ReconstructConfig>(path).config()?,
        None => default_reconstruct_config(),
    };
    if let Some(seed) = seed {
        cfg.em.seed = seed;
    }
    cfg.em.validate().config()?;
    create_dir(out)?;
    let start = Instant::now();

    let (albedo, weights, omega, iterations) = match method {
        Method::Gd => {
            let poses = &sidecar.trajectory.poses;
            if poses.len() != y.len() {
                return Err(config_error(format!(
                    "{} measurements but {} known poses",
                    y.len(),
                    poses.len()
                )));
            }
            let GdOutput {
                albedo,
                objective_trace,
                ..
            } = gd_reconstruct(&y, poses, &sidecar.model, &cfg.em, cfg.gd_iterations).runtime()?;
            let mut csv = String::from("iteration,objective\n");
            for (i, v) in objective_trace.iter().enumerate() {
                csv.push_str(&format!("{i},{v}\n"));
            }
            fs::write(out.join("diagnostics.csv"), csv).runtime()?;
            (albedo, None, None, cfg.gd_iterations)
        }
        Method::Em => {
            let omega = cfg.omega.ok_or_else(|| {
                config_error("EM needs a candidate grid: set `omega` in the config")
            })?;
            let grid = omega.grid(sidecar.trajectory.plane).config()?;
            let EmOutput {
                albedo,
                weights,
                diagnostics,
                ..
            } = em_reconstruct(&y, &grid, &sidecar.model, &cfg.em).runtime()?;
            let mut csv = String::from("iteration,beta,inner_steps,q,data,prior,q_before\n");
            for d in &diagnostics {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    d.iteration,
                    d.beta,
                    d.inner_steps,
                    d.q(),
                    d.q_after.data,
                    d.q_after.prior,
                    d.q_before
                ));
            }
            fs::write(out.join("diagnostics.csv"), csv).runtime()?;
            Tensor::from_rows(&weights.to_rows())
                .runtime()?
                .write(out.join("weights.kht"))
                .runtime()?;
            (
                albedo,
                Some("weights.kht".to_string()),
                Some(*grid.spec()),
                cfg.em.iterations,
            )
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    Tensor::from_image(albedo.values())
        .write(out.join("albedo.kht"))
        .runtime()?;
    write_pgm(albedo.values(), out.join("albedo.pgm")).runtime()?;
    let recon = ReconSidecar {
        format_version: SIDECAR_VERSION,
        method,
        measurements: fs::canonicalize(measurements).runtime()?,
        albedo: "albedo.kht".into(),
        weights,
        omega,
        config: cfg,
        iterations,
        wall_time_s,
    };
    write_json(&out.join(RECON_SIDECAR), &recon).runtime()?;
    Ok(recon)
}

/// Reads a rank-2 `KHT1` tensor or a PGM by extension.
pub fn read_image(path: &Path) -> anyhow::Result<Image> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        read_pgm(path).with_context(|| format!("reading {}", path.display()))
    } else {
        Tensor::read(path)
            .and_then(|t| t.to_image())
            .with_context(|| format!("reading {}", path.display()))
    }
}

fn read_weights(path: &Path) -> anyhow::Result<PosteriorWeights> {
    let rows = Tensor::read(path)
        .and_then(|t| t.to_rows())
        .with_context(|| format!("reading {}", path.display()))?;
    // stored as f32; renormalize each row
    let rows = rows
        .into_iter()
        .map(|r| {
            let total: f64 = r.iter().sum();
            r.into_iter().map(|v| v / total).collect()
        })
        .collect();
    Ok(PosteriorWeights::from_rows(rows)?)
}

/// Scores a reconstruction and appends one row to the report at `out`.
///
/// `recon` is either a `recon.json` sidecar, in which case the truth, the
/// keys and the trajectory error come from the linked measurement sidecar, or
/// a bare image that needs `truth`.
pub fn evaluate(
    truth: Option<&Path>,
    recon: &Path,
    config: Option<&Path>,
    out: &Path,
) -> CliResult<ResultRecord> {
    let cfg = match config {
        Some(path) => load::<EvaluateConfig>(path).config()?,
        None => EvaluateConfig {
            version: CONFIG_VERSION,
            ..Default::default()
        },
    };
    let is_sidecar = recon.extension().is_some_and(|e| e == "json");
    let mut record = ResultRecord {
        object: String::new(),
        trajectory: String::new(),
        snr: None,
        method: String::new(),
        seed: 0,
        ssim: None,
        rtf: None,
        trajectory_rmse: None,
        wall_time_s: 0.0,
        iterations: 0,
        status: "ok".into(),
    };
    let (recon_image, measurement, recon_sidecar) = if is_sidecar {
        let r: ReconSidecar = read_json(recon).config()?;
        let image = read_image(&parent_dir(recon).join(&r.albedo)).config()?;
        let m: MeasurementSidecar = read_json(&r.measurements).config()?;
        (image, Some(m), Some(r))
    } else {
        (read_image(recon).config()?, None, None)
    };
    let truth_image = match (truth, &measurement, &recon_sidecar) {
        (Some(path), _, _) => read_image(path).config()?,
        (None, Some(m), Some(r)) => {
            let name = m
                .truth
                .as_ref()
                .ok_or_else(|| config_error("measurement sidecar names no truth image"))?;
            read_image(&parent_dir(&r.measurements).join(name)).config()?
        }
        _ => return Err(config_error("a bare reconstruction image needs --truth")),
    };
    if truth_image.shape() != recon_image.shape() {
        return Err(config_error(format!(
            "truth is {:?} but the reconstruction is {:?}",
            truth_image.shape(),
            recon_image.shape()
        )));
    }
    let plane = measurement.as_ref().map(|m| m.trajectory.plane);
    let search = match plane {
        Some(p) => search_for(cfg.search, p),
        None => cfg.search.unwrap_or_default(),
    };
    let (score, rtf) =
        disambiguated_ssim(&truth_image, &recon_image, &search, &cfg.ssim).config()?;
    record.ssim = Some(score);
    record.rtf = Some(rtf);

    if let (Some(m), Some(r)) = (&measurement, &recon_sidecar) {
        record.object = m.object.clone();
        record.trajectory = m.trajectory.label.clone();
        record.snr = m.snr();
        record.method = r.method.name().into();
        record.seed = r.config.em.seed;
        record.wall_time_s = r.wall_time_s;
        record.iterations = r.iterations;
        if let (Some(w), Some(omega)) = (&r.weights, &r.omega) {
            let weights = read_weights(&parent_dir(recon).join(w)).config()?;
            let grid = CandidateGrid::new(*omega).config()?;
            let est = estimate_trajectory(&weights, &grid).config()?;
            record.trajectory_rmse =
                Some(trajectory_rmse(&est, &m.trajectory.poses, true).config()?);
        }
    }
    report::append(out, std::slice::from_ref(&record)).runtime()?;
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub trajectory: TrajectorySet,
    /// Posterior probability of the chosen pose, per measurement.
    pub confidence: Vec<f64>,
}

/// Most probable candidate pose per measurement from an EM reconstruction.
pub fn estimate_trajectory_file(recon: &Path, out: &Path) -> CliResult<TrajectoryEstimate> {
    let r: ReconSidecar = read_json(recon).config()?;
    let (Some(w), Some(omega)) = (&r.weights, &r.omega) else {
        return Err(config_error(format!(
            "{} is a {} reconstruction without pose weights",
            recon.display(),
            r.method.name()
        )));
    };
    let weights = read_weights(&parent_dir(recon).join(w)).config()?;
    let grid = CandidateGrid::new(*omega).config()?;
    let poses = estimate_trajectory(&weights, &grid).config()?;
    let confidence = (0..weights.rows())
        .map(|i| weights.get(i, weights.argmax(i)))
        .collect();
    let estimate = TrajectoryEstimate {
        trajectory: TrajectorySet {
            label: format!("estimate-{}", r.measurements.display()),
            plane: omega.plane,
            poses,
        },
        confidence,
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(out, &estimate).runtime()?;
    Ok(estimate)
}
