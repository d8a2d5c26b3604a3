//! CSV tables and run records.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use tgcd_core::analysis::{geometric_mean, Scheme};

use crate::config::ExperimentConfig;
use crate::runner::{Report, RowResult};

pub const CSV_HEADER: [&str; 9] = ["level", "h_c", "h_f", "tau_c", "tau_f", "scheme", "error", "order", "cpu_seconds"];

/// Scientific notation with five significant digits and a signed
/// two-digit exponent, e.g. `7.9502e-04`.
pub fn sci(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    let s = format!("{v:.4e}");
    let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
    let e: i32 = exp.parse().unwrap_or(0);
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", e.abs())
}

pub fn order_cell(o: Option<f64>) -> String {
    o.map_or_else(|| "*".to_string(), |o| format!("{o:.4}"))
}

pub fn seconds_cell(s: f64) -> String {
    if s.is_finite() {
        format!("{s:.3}")
    } else {
        "nan".into()
    }
}

/// Output files of one experiment.
#[derive(Debug, Clone)]
pub struct Paths {
    pub csv: PathBuf,
    pub record: PathBuf,
    pub compare_csv: PathBuf,
}

impl Paths {
    /// Resolves `output.prefix`, replacing its directory with `out_dir` if given.
    pub fn resolve(prefix: &str, out_dir: Option<&Path>) -> Self {
        let prefix = Path::new(prefix);
        let base = match out_dir {
            Some(dir) => dir.join(prefix.file_name().unwrap_or(prefix.as_os_str())),
            None => prefix.to_path_buf(),
        };
        let with = |suffix: &str| {
            let mut s = base.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            csv: with(".csv"),
            record: with(".record"),
            compare_csv: with("_compare.csv"),
        }
    }

    fn ensure_parent(p: &Path) -> io::Result<()> {
        match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d),
            _ => Ok(()),
        }
    }
}

pub fn write_csv(path: &Path, report: &Report) -> anyhow::Result<()> {
    Paths::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.level.to_string(),
            sci(r.h_c),
            sci(r.h_f),
            sci(r.tau_c),
            sci(r.tau_f),
            r.scheme.label().to_string(),
            sci(r.error),
            order_cell(r.order),
            seconds_cell(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn slug(s: Scheme) -> &'static str {
    match s {
        Scheme::Ncd => "ncd",
        Scheme::StTgcd => "st_tgcd",
    }
}

fn row_record(out: &mut String, r: &RowResult) {
    let key = format!("result.{}.{}", slug(r.scheme), r.level);
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{key}.{k} = {v}");
    };
    kv("M1c", r.m1c.to_string());
    kv("Nc", r.nc.to_string());
    kv("error", sci(r.error));
    kv("order", order_cell(r.order));
    kv("cpu_seconds", seconds_cell(r.seconds));
    kv("fp_iterations_total", r.fp_iterations_total.to_string());
    kv("fp_iterations_max", r.fp_iterations_max.to_string());
    kv("unconverged_steps", r.unconverged_steps.to_string());
    kv("linear_iterations", r.linear_iterations.to_string());
    if let Some(t) = r.stages {
        kv("stage.coarse_seconds", seconds_cell(t.coarse_solve));
        kv("stage.prolongation_seconds", seconds_cell(t.prolongation));
        kv("stage.correction_seconds", seconds_cell(t.correction));
    }
    if let Some(f) = &r.failure {
        kv("failure", f.replace('\n', " "));
    }
}

/// Line-oriented record: the resolved configuration, then `result.*` keys.
pub fn record_text(cfg: &ExperimentConfig, report: &Report, full: bool, threads: usize) -> String {
    let mut out = String::from("# resolved configuration\n");
    out.push_str(&cfg.to_text());
    out.push_str("# results\n");
    let _ = writeln!(out, "result.status = {}", report.status.label());
    let _ = writeln!(out, "result.full = {full}");
    let _ = writeln!(out, "result.threads = {threads}");
    let _ = writeln!(out, "result.rows = {}", report.rows.len());
    for r in &report.rows {
        row_record(&mut out, r);
    }
    out
}

/// Per-row NCD/ST-TGCD timing ratio of a report run with both schemes.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<(usize, f64)>,
    /// Only present with more than one row.
    pub geometric_mean: Option<f64>,
}

pub fn compare(report: &Report) -> Comparison {
    let rows: Vec<(usize, f64)> = report
        .for_scheme(Scheme::Ncd)
        .zip(report.for_scheme(Scheme::StTgcd))
        .map(|(a, b)| (a.level, a.seconds / b.seconds))
        .collect();
    let finite: Vec<f64> = rows.iter().map(|r| r.1).filter(|s| s.is_finite() && *s > 0.0).collect();
    let geometric_mean = if rows.len() > 1 && finite.len() == rows.len() {
        geometric_mean(&finite).ok()
    } else {
        None
    };
    Comparison { rows, geometric_mean }
}

pub fn write_compare_csv(path: &Path, report: &Report, cmp: &Comparison) -> anyhow::Result<()> {
    Paths::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = CSV_HEADER.to_vec();
    header.push("speedup");
    w.write_record(&header)?;
    for r in &report.rows {
        let speed = cmp
            .rows
            .iter()
            .find(|(l, _)| *l == r.level)
            .map_or_else(|| "nan".into(), |(_, s)| format!("{s:.3}"));
        w.write_record([
            r.level.to_string(),
            sci(r.h_c),
            sci(r.h_f),
            sci(r.tau_c),
            sci(r.tau_f),
            r.scheme.label().to_string(),
            sci(r.error),
            order_cell(r.order),
            seconds_cell(r.seconds),
            speed,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn compare_record(cmp: &Comparison) -> String {
    let mut out = String::new();
    for (level, s) in &cmp.rows {
        let _ = writeln!(out, "compare.speedup.{level} = {s:.3}");
    }
    if let Some(g) = cmp.geometric_mean {
        let _ = writeln!(out, "compare.geometric_mean_speedup = {g:.3}");
    }
    out
}

/// Human-readable table for the terminal.
pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>11} {:>11} {:>11} {:>11} {:>8} {:>11} {:>7} {:>9}",
        "level", "h_c", "h_f", "tau_c", "tau_f", "scheme", "error", "order", "seconds"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>5} {:>11} {:>11} {:>11} {:>11} {:>8} {:>11} {:>7} {:>9}{}",
            r.level,
            sci(r.h_c),
            sci(r.h_f),
            sci(r.tau_c),
            sci(r.tau_f),
            r.scheme.label(),
            sci(r.error),
            order_cell(r.order),
            seconds_cell(r.seconds),
            match (&r.failure, r.unconverged_steps) {
                (Some(f), _) => format!("  FAILED: {f}"),
                (None, 0) => String::new(),
                (None, n) => format!("  ({n} unconverged steps)"),
            }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_cells() {
        assert_eq!(sci(7.9502e-4), "7.9502e-04");
        assert_eq!(sci(2.5), "2.5000e+00");
        assert_eq!(sci(1.0e-12), "1.0000e-12");
        assert_eq!(sci(-3.0e105), "-3.0000e+105");
        assert_eq!(sci(f64::NAN), "nan");
        assert_eq!(order_cell(None), "*");
        assert_eq!(order_cell(Some(3.99834)), "3.9983");
    }

    #[test]
    fn output_paths() {
        let p = Paths::resolve("out/table1", None);
        assert_eq!(p.csv, PathBuf::from("out/table1.csv"));
        assert_eq!(p.record, PathBuf::from("out/table1.record"));
        let p = Paths::resolve("out/table1", Some(Path::new("/tmp/x")));
        assert_eq!(p.compare_csv, PathBuf::from("/tmp/x/table1_compare.csv"));
    }
}
