//! Experiment sweeps: simulate, reconstruct and evaluate every cell of an
//! [`ExperimentSpec`], then tabulate mean disambiguated SSIM per trajectory,
//! SNR and method.
//!
//! Each cell lives in `cells/<hash>/`, where the hash covers everything that
//! determines its result. A cell with an `ok` record is skipped on rerun.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context};
use keyhole_core::eval::{disambiguated_ssim, trajectory_rmse, DisambiguationSearch, SsimParams};
use keyhole_core::forward::assemble_many;
use keyhole_core::forward::{FalloffModel, ForwardModel, TimeAxis};
use keyhole_core::io::write_pgm;
use keyhole_core::recon::{em_with_systems, estimate_trajectory, gd_with_systems, EmConfig};
use keyhole_core::simulator::{
    make_trajectory, simulate_sequence, CandidateGrid, CandidateGridSpec, NoiseModel,
    TrajectorySpec, POISSON_ALGORITHM,
};
use keyhole_core::{Image, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    load, resolve, search_for, ExperimentSpec, GainSetting, Method, ObjectSettings, ObjectSource,
};
use crate::error::{config_error, Classify, CliResult};
use crate::report::{self, ResultRecord};
use crate::sidecar::{parent_dir, read_json, write_json, SIDECAR_VERSION};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";

/// Everything that determines one cell's result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub format_version: u32,
    /// Bundled glyph or absolute image path.
    pub object: ObjectSource,
    pub object_label: String,
    pub object_settings: ObjectSettings,
    pub trajectory: TrajectorySpec,
    pub snr: f64,
    pub method: Method,
    pub config: EmConfig,
    pub omega: CandidateGridSpec,
    pub falloff: FalloffModel,
    pub time: TimeAxis,
    pub gain: GainSetting,
    pub gd_iterations: usize,
    pub search: DisambiguationSearch,
    pub ssim: SsimParams,
    pub noise_seed: u64,
    pub noise_algorithm: String,
}

impl CellSpec {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("cell specs serialize");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

/// Noise seed shared by both methods of one (object, trajectory, SNR).
fn noise_seed(seed: u64, object: &ObjectSource, trajectory: &TrajectorySpec, snr: f64) -> u64 {
    let key = serde_json::to_vec(&(seed, object, trajectory, snr)).expect("keys serialize");
    let digest = Sha256::digest(&key);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Cells in table order: trajectory, SNR, method, object.
pub fn expand(spec: &ExperimentSpec, base: &Path) -> anyhow::Result<Vec<CellSpec>> {
    let falloff = spec.falloff.model()?;
    let mut cells = Vec::new();
    for source in &spec.trajectories {
        let trajectory = source.spec()?;
        let plane = trajectory.plane;
        let omega = spec.omega.spec(plane);
        CandidateGrid::new(omega)?;
        for &snr in &spec.snrs {
            for &method in &spec.methods {
                for object in &spec.objects {
                    let resolved = if object.0.starts_with("glyph:") {
                        object.clone()
                    } else {
                        ObjectSource(
                            resolve(base, Path::new(&object.0))
                                .to_string_lossy()
                                .into_owned(),
                        )
                    };
                    cells.push(CellSpec {
                        format_version: SIDECAR_VERSION,
                        noise_seed: noise_seed(spec.seed, &resolved, &trajectory, snr),
                        object_label: object.label(),
                        object: resolved,
                        object_settings: spec.object_settings,
                        trajectory: trajectory.clone(),
                        snr,
                        method,
                        config: spec.config.clone(),
                        omega,
                        falloff,
                        time: spec.time,
                        gain: spec.gain.clone(),
                        gd_iterations: spec.gd_iterations,
                        search: search_for(spec.search, plane),
                        ssim: spec.ssim,
                        noise_algorithm: POISSON_ALGORITHM.into(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Reconstruction artifacts of a finished cell.
pub struct CellOutput {
    pub albedo: Image,
    pub weights: Option<Vec<Vec<f64>>>,
}

/// Runs one cell from scratch.
pub fn run_cell(cell: &CellSpec) -> (ResultRecord, Option<CellOutput>) {
    let start = Instant::now();
    let mut record = ResultRecord {
        object: cell.object_label.clone(),
        trajectory: cell.trajectory.label.clone(),
        snr: Some(cell.snr),
        method: cell.method.name().into(),
        seed: cell.config.seed,
        ssim: None,
        rtf: None,
        trajectory_rmse: None,
        wall_time_s: 0.0,
        iterations: 0,
        status: "ok".into(),
    };
    let result = execute(cell, &mut record);
    record.wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(output) => (record, Some(output)),
        Err(e) => {
            record.status = format!("error: {e:#}");
            (record, None)
        }
    }
}

fn execute(cell: &CellSpec, record: &mut ResultRecord) -> anyhow::Result<CellOutput> {
    let albedo = cell.object.load(&cell.object_settings, Path::new("."))?;
    let trajectory = make_trajectory(&cell.trajectory)?;
    let unit = ForwardModel::new(cell.falloff, cell.time);
    let gain = cell
        .gain
        .resolve(&albedo, &trajectory, &unit, Some(cell.snr))?;
    let model = unit.with_gain(gain);
    let noise = NoiseModel::poisson(cell.snr, cell.noise_seed);
    let y = simulate_sequence(&albedo, &trajectory, &model, &noise)?;
    let geometry = cell.config.geometry()?;
    if geometry.height != albedo.geometry.height || geometry.width != albedo.geometry.width {
        bail!(
            "reconstruction shape {:?} differs from the object shape {}x{}",
            cell.config.recon_shape,
            albedo.geometry.height,
            albedo.geometry.width
        );
    }

    let (recon, weights) = match cell.method {
        Method::Gd => {
            let systems = assemble_many(&geometry, &trajectory.poses, &model)?;
            let out = gd_with_systems(&y, &systems, geometry, &cell.config, cell.gd_iterations)?;
            record.iterations = cell.gd_iterations;
            (out.albedo, None)
        }
        Method::Em => {
            let grid = CandidateGrid::new(cell.omega)?;
            let systems = assemble_many(&geometry, grid.poses(), &model)?;
            let out = em_with_systems(&y, &systems, geometry, &cell.config)?;
            let est = estimate_trajectory(&out.weights, &grid)?;
            record.trajectory_rmse = Some(trajectory_rmse(&est, &trajectory.poses, true)?);
            record.iterations = cell.config.iterations;
            (out.albedo, Some(out.weights.to_rows()))
        }
    };
    let (score, rtf) =
        disambiguated_ssim(albedo.values(), recon.values(), &cell.search, &cell.ssim)?;
    record.ssim = Some(score);
    record.rtf = Some(rtf);
    Ok(CellOutput {
        albedo: recon.into_values(),
        weights,
    })
}

fn write_atomic_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, value)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))
}

fn store(dir: &Path, record: &ResultRecord, output: Option<CellOutput>) -> anyhow::Result<()> {
    if let Some(output) = output {
        Tensor::from_image(&output.albedo).write(dir.join("albedo.kht"))?;
        write_pgm(&output.albedo, dir.join("albedo.pgm"))?;
        if let Some(rows) = output.weights {
            Tensor::from_rows(&rows)?.write(dir.join("weights.kht"))?;
        }
    }
    // written last: its presence marks the cell as done
    write_atomic_json(&dir.join("record.json"), record)
}

fn load_record(dir: &Path) -> Option<ResultRecord> {
    read_json(&dir.join("record.json")).ok()
}

/// Result of a sweep run.
#[derive(Debug)]
pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<ResultRecord>,
    pub executed: usize,
    pub summary: String,
}

/// Runs or resumes a sweep. With `only`, reruns the cells whose hash starts
/// with that prefix and leaves the rest untouched.
pub fn sweep(
    spec_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    only: Option<&str>,
) -> CliResult<SweepOutcome> {
    let mut spec: ExperimentSpec = load(spec_path).config()?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().config()?;
    let base = fs::canonicalize(parent_dir(spec_path)).config()?;
    let out_dir = match (out, &spec.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => {
            return Err(config_error(
                "no output directory: pass --out or set output_dir",
            ))
        }
    };
    let cells = expand(&spec, &base).config()?;
    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir)
        .with_context(|| format!("creating {}", cells_dir.display()))
        .config()?;
    write_json(&out_dir.join("spec.json"), &spec).runtime()?;

    let hashes: Vec<String> = cells.iter().map(CellSpec::hash).collect();
    let mut todo = Vec::new();
    for (cell, hash) in cells.iter().zip(&hashes) {
        let dir = cells_dir.join(hash);
        let selected = only.is_some_and(|p| hash.starts_with(p));
        let done = load_record(&dir).is_some_and(|r| r.is_ok());
        if only.is_some() && !selected || only.is_none() && done {
            continue;
        }
        fs::create_dir_all(&dir).runtime()?;
        write_json(&dir.join("cell.json"), cell).runtime()?;
        todo.push((cell, dir));
    }
    if let Some(prefix) = only {
        if todo.is_empty() {
            return Err(config_error(format!("no cell hash starts with {prefix:?}")));
        }
    }
    log::info!("{} of {} cells to run", todo.len(), cells.len());

    // one writer thread owns every file write while cells run
    let (tx, rx) = mpsc::channel::<(PathBuf, ResultRecord, Option<CellOutput>)>();
    let writer = std::thread::spawn(move || -> anyhow::Result<()> {
        for (dir, record, output) in rx {
            log::info!(
                "{} {} snr {:?} {}: {}",
                record.object,
                record.trajectory,
                record.snr,
                record.method,
                record
                    .ssim
                    .map_or_else(|| record.status.clone(), |s| format!("{s:.4}"))
            );
            store(&dir, &record, output)?;
        }
        Ok(())
    });
    todo.par_iter().for_each_with(tx, |tx, (cell, dir)| {
        let (record, output) = run_cell(cell);
        // the receiver only hangs up after a write failure, reported below
        let _ = tx.send((dir.clone(), record, output));
    });
    writer
        .join()
        .map_err(|_| config_error("result writer panicked"))?
        .runtime()?;

    let mut records = Vec::with_capacity(cells.len());
    for hash in &hashes {
        let dir = cells_dir.join(hash);
        let record =
            load_record(&dir).ok_or_else(|| config_error(format!("cell {hash} has no record")))?;
        records.push(record);
    }
    let runs = out_dir.join(RUNS_FILE);
    if runs.exists() {
        fs::remove_file(&runs).runtime()?;
    }
    report::append(&runs, &records).runtime()?;
    let summary = summary_table(&spec, &records);
    fs::write(out_dir.join(SUMMARY_FILE), &summary).runtime()?;
    Ok(SweepOutcome {
        out_dir,
        records,
        executed: todo.len(),
        summary,
    })
}

/// Rows are trajectories, columns are method/SNR pairs, cells are mean SSIM
/// over objects, or `error` if any object failed.
pub fn summary_table(spec: &ExperimentSpec, records: &[ResultRecord]) -> String {
    let mut cells: BTreeMap<(String, String, String), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let snr = r.snr.map_or_else(String::new, |s| s.to_string());
        cells
            .entry((r.trajectory.clone(), snr, r.method.clone()))
            .or_default()
            .push(r);
    }
    let mut out = String::from("trajectory");
    for snr in &spec.snrs {
        for m in &spec.methods {
            out.push_str(&format!(",{}_snr{}", m.name(), snr));
        }
    }
    out.push('\n');
    let mut seen = Vec::new();
    for t in &spec.trajectories {
        let label = t.spec().map(|s| s.label).unwrap_or_default();
        if seen.contains(&label) {
            continue;
        }
        seen.push(label.clone());
        out.push_str(&label);
        for snr in &spec.snrs {
            for m in &spec.methods {
                let key = (label.clone(), snr.to_string(), m.name().to_string());
                let value = match cells.get(&key) {
                    Some(rs) if rs.iter().all(|r| r.is_ok()) => {
                        let mean = rs.iter().filter_map(|r| r.ssim).sum::<f64>() / rs.len() as f64;
                        format!("{mean:.6}")
                    }
                    Some(_) => "error".into(),
                    None => String::new(),
                };
                out.push(',');
                out.push_str(&value);
            }
        }
        out.push('\n');
    }
    out
}
