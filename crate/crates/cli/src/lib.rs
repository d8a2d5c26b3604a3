//! Configuration-driven experiment runner for the Burgers solvers.

pub mod config;
pub mod expr;
pub mod output;
pub mod runner;

use std::path::Path;

use anyhow::{bail, Context};

use config::{ExperimentConfig, SchemeChoice};
use runner::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Compare,
}

pub struct Invocation<'a> {
    pub command: Command,
    pub config: &'a Path,
    pub full: bool,
    pub out_dir: Option<&'a Path>,
    pub threads: usize,
}

pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("invalid configuration {}", path.display()))
}

/// Executes one invocation and returns the run status.
pub fn invoke(inv: &Invocation<'_>) -> anyhow::Result<Status> {
    let cfg = load(inv.config)?;
    if inv.command == Command::Compare && cfg.scheme != SchemeChoice::Both {
        bail!(
            "invalid configuration {}: `compare` needs `scheme.kind = both`",
            inv.config.display()
        );
    }
    let paths = output::Paths::resolve(&cfg.prefix, inv.out_dir);
    let report = runner::run_experiment(&cfg, inv.full, inv.threads);
    print!("{}", output::render(&report));

    let mut record = output::record_text(&cfg, &report, inv.full, inv.threads);
    output::write_csv(&paths.csv, &report)?;
    if inv.command == Command::Compare {
        let cmp = output::compare(&report);
        output::write_compare_csv(&paths.compare_csv, &report, &cmp)?;
        record.push_str(&output::compare_record(&cmp));
        for (level, s) in &cmp.rows {
            println!("level {level}: speedup {s:.3}");
        }
        if let Some(g) = cmp.geometric_mean {
            println!("geometric-mean speedup {g:.3}");
        }
    }
    std::fs::write(&paths.record, record).with_context(|| format!("writing {}", paths.record.display()))?;
    println!("status {}; wrote {} and {}", report.status.label(), paths.csv.display(), paths.record.display());
    Ok(report.status)
}
