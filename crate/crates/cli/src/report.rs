//! Result rows shared by `evaluate` and `sweep`.

use std::fs::OpenOptions;
use std::path::Path;

use anyhow::Context;
use keyhole_core::Rtf;
use serde::{Deserialize, Serialize};

pub const REPORT_COLUMNS: [&str; 15] = [
    "object",
    "trajectory",
    "snr",
    "method",
    "seed",
    "ssim",
    "rtf_rotation",
    "rtf_dx",
    "rtf_dy",
    "rtf_flip_horizontal",
    "rtf_flip_vertical",
    "trajectory_rmse",
    "wall_time_s",
    "iterations",
    "status",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub object: String,
    pub trajectory: String,
    pub snr: Option<f64>,
    pub method: String,
    pub seed: u64,
    pub ssim: Option<f64>,
    pub rtf: Option<Rtf>,
    pub trajectory_rmse: Option<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
    /// `ok`, or `error: <message>`.
    pub status: String,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let rtf = self.rtf;
        vec![
            self.object.clone(),
            self.trajectory.clone(),
            opt(self.snr),
            self.method.clone(),
            self.seed.to_string(),
            opt(self.ssim),
            opt(rtf.map(|r| r.rotation)),
            rtf.map_or_else(String::new, |r| r.dx.to_string()),
            rtf.map_or_else(String::new, |r| r.dy.to_string()),
            rtf.map_or_else(String::new, |r| r.flip_horizontal.to_string()),
            rtf.map_or_else(String::new, |r| r.flip_vertical.to_string()),
            opt(self.trajectory_rmse),
            format!("{:.3}", self.wall_time_s),
            self.iterations.to_string(),
            self.status.clone(),
        ]
    }
}

/// Appends rows, writing the header first when the file is new or empty.
pub fn append(path: &Path, records: &[ResultRecord]) -> anyhow::Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let empty = file.metadata()?.len() == 0;
    let mut writer = csv::Writer::from_writer(file);
    if empty {
        writer.write_record(REPORT_COLUMNS)?;
    }
    for r in records {
        writer.write_record(r.fields())?;
    }
    writer.flush()?;
    Ok(())
}
