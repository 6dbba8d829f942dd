use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::Result;

/// One tracking step of one trial. `step` counts rows across trials; `k` is
/// the tracking index within the trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(skip)]
    pub trial: usize,
    pub step: usize,
    pub k: usize,
    pub sq_err: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub true_x: f64,
    pub true_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Table,
}

pub fn write_csv<W: Write>(records: &[StepRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if records.is_empty() {
        out.write_record(["step", "k", "sq_err", "est_x", "est_y", "true_x", "true_y"])?;
    }
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Per-step CSV, or a one-line-per-metric summary table.
pub fn emit_report<W: Write>(report: &RunReport, format: ReportFormat, mut w: W) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(&report.records, w),
        ReportFormat::Table => {
            writeln!(w, "method          {}", report.method)?;
            writeln!(w, "stations        {}", report.stations)?;
            writeln!(w, "trials          {}", report.trials)?;
            writeln!(w, "steps/trial     {}", report.steps)?;
            writeln!(w, "mse [m^2]       {:.6}", report.mse)?;
            writeln!(w, "ms/step         {:.4}", report.mean_step_ms)?;
            writeln!(w, "evals/step      {:.1}", report.evaluations_per_step)?;
            writeln!(w, "divergences     {}", report.divergences)?;
            if report.stations > 1 {
                writeln!(w, "unconverged     {}", report.fusion_unconverged)?;
            }
            Ok(())
        }
    }
}
