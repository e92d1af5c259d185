//! Run records and CSV result rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::Result;
use crate::estimation::ErrorReport;

/// Log of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Mean loss per logging stride.
    pub loss_trace: Vec<f64>,
    /// Steps at which all carried states were zeroed.
    pub reset_steps: Vec<usize>,
    pub reports: Vec<DistanceRow>,
    pub wall_clock_s: f64,
}

impl RunRecord {
    /// Two columns `step,loss`, where `step` is the first step of each
    /// logging stride.
    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss"])?;
        let stride = self.config.train.log_stride;
        for (i, l) in self.loss_trace.iter().enumerate() {
            w.write_record([(i * stride).to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text record: configuration, summary lines, then the loss trace.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# configuration")?;
        write!(out, "{}", self.config.to_toml()?)?;
        writeln!(out, "\n# summary")?;
        writeln!(out, "wall_clock_s = {:.3}", self.wall_clock_s)?;
        writeln!(out, "resets = {}", self.reset_steps.len())?;
        if let (Some(first), Some(last)) = (self.loss_trace.first(), self.loss_trace.last()) {
            writeln!(out, "initial_loss = {first}")?;
            writeln!(out, "final_loss = {last}")?;
        }
        for r in &self.reports {
            writeln!(
                out,
                "report system={} distance_km={} seed={} ber={} bler={}",
                r.system, r.distance_km, r.seed, r.ber, r.bler
            )?;
        }
        writeln!(out, "\n# loss trace")?;
        self.write_loss_csv(&mut out)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_text(std::fs::File::create(path)?)
    }
}

/// One evaluated (system, distance, training seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub system: String,
    pub distance_km: f64,
    pub seed: u32,
    pub ber: f64,
    pub bler: f64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub sequences: usize,
    /// Lowest BER among the runs at this distance.
    pub best: bool,
}

impl DistanceRow {
    pub fn new(system: &str, distance_km: f64, seed: u32, report: &ErrorReport) -> Self {
        Self {
            system: system.to_string(),
            distance_km,
            seed,
            ber: report.ber,
            bler: report.bler,
            bit_errors: report.bit_errors,
            block_errors: report.block_errors,
            sequences: report.sequences,
            best: false,
        }
    }
}

/// One evaluated inference window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub system: String,
    pub window: usize,
    pub ber: f64,
    pub bler: f64,
    pub bit_errors: u64,
    pub sequences: usize,
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: std::io::Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}
