use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use indiff_core::harness::{self, ExperimentConfig, ReportFormat, StudyKind};

#[derive(Parser, Debug)]
#[command(
    name = "indiff",
    version,
    about = "Indifference prices of calls under proportional costs"
)]
struct Cli {
    /// TOML file with [model], [grid] and [study] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<ReportFormat>,
    /// Use the fine meshes of the original experiments (slow).
    #[arg(long, global = true)]
    paper_scale: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted for interface uniformity; the solver is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single solve, priced at the test points.
    Price,
    /// Sweep: spatial, temporal, shares, localization, price_diff_vs_T,
    /// price_diff_vs_S or overshoot.
    Study {
        #[arg(value_parser = parse_study)]
        kind: StudyKind,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: indiff_core::Error| e.to_string())
}

fn parse_study(s: &str) -> Result<StudyKind, String> {
    match s.parse() {
        Ok(StudyKind::Price) => Err("`price` is a subcommand, not a study".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(format!("{e}; expected one of {}", names())),
    }
}

fn names() -> String {
    StudyKind::STUDIES
        .iter()
        .map(|k| k.name())
        .collect::<Vec<_>>()
        .join(", ")
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let base = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    let kind = match cli.command {
        Command::Price => StudyKind::Price,
        Command::Study { kind } => kind,
    };
    let mut config = base.resolve(Some(kind), cli.paper_scale)?;
    if cli.format.is_some() {
        config.study.format = cli.format;
    }
    if cli.out.is_some() {
        config.study.out = cli.out.clone();
    }
    if cli.paper_scale {
        let g = config.grid.spec()?;
        eprintln!(
            "warning: paper-scale mesh (n_t = {}, n_y = {}, n_xhat = {}); expect hours of run time",
            g.n_t, g.n_y, g.n_xhat
        );
    }

    let start = Instant::now();
    let report = harness::run(&config)?;
    let wall = start.elapsed().as_secs_f64();
    let format = config.study.format.unwrap_or_default();
    match &config.study.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            harness::write_report(&config, &report, wall, format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            harness::write_report(&config, &report, wall, format, &mut w)?;
        }
    }
    Ok(())
}
