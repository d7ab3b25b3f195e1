//! CSV and JSON serialisation of study reports.

use std::io::Write;

use serde::Serialize;

use super::config::{ExperimentConfig, ReportFormat};
use super::study::{Report, Resolution};
use crate::error::{Error, Result};

/// Formats a value for CSV: integers verbatim, everything else with 15
/// significant digits. Missing values are empty fields.
pub fn csv_number(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", x as i64),
        Some(x) => format!("{x:.14e}"),
    }
}

fn line(out: &mut impl Write, fields: &[Option<f64>]) -> std::io::Result<()> {
    let cells: Vec<String> = fields.iter().map(|v| csv_number(*v)).collect();
    writeln!(out, "{}", cells.join(","))
}

pub fn write_csv(report: &Report, out: &mut impl Write) -> Result<()> {
    match report {
        Report::Price(r) => {
            writeln!(out, "xhat,S,p_w,bs,abs_err")?;
            for p in &r.points {
                line(
                    out,
                    &[
                        Some(p.xhat),
                        Some(p.spot),
                        Some(p.price),
                        Some(p.bs),
                        Some(p.abs_err),
                    ],
                )?;
            }
        }
        Report::Sweep(r) => {
            writeln!(out, "sweep_value,rmse_H1,rmse_Hw,rmse_frontier,slope")?;
            for (row, slope) in r.rows.iter().zip(&r.prefix_slopes.hw) {
                line(
                    out,
                    &[
                        Some(row.value),
                        row.rmse_h1,
                        row.rmse_hw,
                        row.rmse_frontier,
                        *slope,
                    ],
                )?;
            }
        }
        Report::PriceDifference(r) => {
            writeln!(out, "sweep_value,xhat,S,p_w,bs,diff,ratio")?;
            for d in &r.rows {
                line(
                    out,
                    &[
                        Some(d.parameter),
                        Some(d.xhat),
                        Some(d.spot),
                        Some(d.price),
                        Some(d.bs),
                        Some(d.diff),
                        d.ratio,
                    ],
                )?;
            }
        }
        Report::Overshoot(r) => {
            writeln!(out, "gamma,log_gamma,xhat,S,overshoot_ratio")?;
            for o in &r.rows {
                line(
                    out,
                    &[
                        Some(o.gamma),
                        Some(o.log_gamma),
                        Some(o.xhat),
                        Some(o.spot),
                        Some(o.ratio),
                    ],
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub crate_version: &'static str,
    pub resolutions: Vec<Resolution>,
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Serialize)]
struct Envelope<'a> {
    config: &'a ExperimentConfig,
    report: &'a Report,
    metadata: Metadata,
}

pub fn write_json(
    config: &ExperimentConfig,
    report: &Report,
    wall_seconds: f64,
    out: &mut impl Write,
) -> Result<()> {
    let env = Envelope {
        config,
        report,
        metadata: Metadata {
            crate_version: env!("CARGO_PKG_VERSION"),
            resolutions: report.resolutions(),
            wall_seconds,
            threads: rayon::current_num_threads(),
        },
    };
    serde_json::to_writer_pretty(&mut *out, &env).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_report(
    config: &ExperimentConfig,
    report: &Report,
    wall_seconds: f64,
    format: ReportFormat,
    out: &mut impl Write,
) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(report, out),
        ReportFormat::Json => write_json(config, report, wall_seconds, out),
    }
}
