//! Experiment configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! # comment
//! problem.name = example1
//! scheme.lambda = 1
//! scheme.kind = both
//! study.kind = temporal
//! study.metric = exact
//! ladder.row = 50 4        # coarse cells in x, coarse time steps
//! ladder.full_row = 50 64  # only with --full
//! twogrid.kh = 2
//! twogrid.ktau = 2
//! twogrid.mean = conserve  # or free
//! output.prefix = out/table1
//! ```
//!
//! [`ExperimentConfig::to_text`] writes every key in canonical order, and
//! the result parses back to an equal value.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use tgcd_core::problems::{self, ErrorWindow, SourceRule};
use tgcd_core::twogrid::MeanControl;
use tgcd_core::Problem;

use crate::expr::{Bindings, Expr, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Ncd,
    StTgcd,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    None,
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Against the closed-form solution.
    Exact,
    /// Against the next refinement of the same scheme.
    SelfConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderRow {
    pub m1c: usize,
    pub nc: usize,
    /// Runs only with `--full`.
    pub heavy: bool,
}

/// A user-defined problem given by expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomProblem {
    pub x0: f64,
    pub y0: f64,
    pub l1: f64,
    pub l2: f64,
    pub t_final: f64,
    pub initial: Expr,
    pub source: Option<Expr>,
    pub exact: Option<Expr>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub custom: Option<CustomProblem>,
    pub lambda: f64,
    pub scheme: SchemeChoice,
    pub study: Study,
    pub metric: Metric,
    pub m1c: Option<usize>,
    pub nc: Option<usize>,
    pub ladder: Vec<LadderRow>,
    pub kh: usize,
    pub ktau: usize,
    pub mean: MeanControl,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub linear_rtol: f64,
    pub source_rule: SourceRule,
    pub prefix: String,
}

/// Keys that belong to run records rather than configurations.
const RECORD_SECTIONS: [&str; 2] = ["result.", "compare."];

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("`{key}` expects a number, got `{v}`")))
}

fn parse_row(line: usize, key: &str, v: &str, heavy: bool) -> Result<LadderRow, ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(ConfigError::at(
            line,
            format!("`{key}` expects two integers `<coarse cells in x> <coarse steps>`, got `{v}`"),
        ));
    }
    Ok(LadderRow {
        m1c: parse_num(line, key, parts[0])?,
        nc: parse_num(line, key, parts[1])?,
        heavy,
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_inner(text, false)
    }

    /// Parses the configuration embedded in a run record.
    pub fn from_record(text: &str) -> Result<Self, ConfigError> {
        Self::parse_inner(text, true)
    }

    fn parse_inner(text: &str, skip_records: bool) -> Result<Self, ConfigError> {
        let mut seen = HashSet::new();
        let mut problem = None;
        let mut lambda = None;
        let mut scheme = SchemeChoice::Both;
        let mut study = Study::None;
        let mut metric = None;
        let (mut m1c, mut nc) = (None, None);
        let mut ladder = Vec::new();
        let (mut kh, mut ktau) = (1, 1);
        let mut mean = MeanControl::default();
        let mut fp_tol = 1e-8;
        let mut fp_max_iters = 100;
        let mut linear_rtol = 1e-11;
        let mut source_rule = SourceRule::default();
        let mut prefix = None;
        let mut cx0 = None;
        let mut cy0 = None;
        let mut cl1 = None;
        let mut cl2 = None;
        let mut ct = None;
        let mut cinit: Option<(usize, String)> = None;
        let mut csrc: Option<(usize, String)> = None;
        let mut cexact: Option<(usize, String)> = None;
        let mut cwin = None;
        let mut custom_line = 0;
        let mut first_heavy_line = None;

        for (idx, raw) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::at(n, format!("expected `key = value`, got `{line}`")));
            };
            let (key, v) = (key.trim(), value.trim());
            if skip_records && RECORD_SECTIONS.iter().any(|s| key.starts_with(s)) {
                continue;
            }
            if v.is_empty() {
                return Err(ConfigError::at(n, format!("`{key}` has no value")));
            }
            let repeatable = key == "ladder.row" || key == "ladder.full_row";
            if !repeatable && !seen.insert(key.to_string()) {
                return Err(ConfigError::at(n, format!("duplicate key `{key}`")));
            }
            if key.starts_with("problem.") && key != "problem.name" {
                custom_line = custom_line.max(n);
            }
            match key {
                "problem.name" => problem = Some(v.to_string()),
                "problem.x0" => cx0 = Some(parse_num(n, key, v)?),
                "problem.y0" => cy0 = Some(parse_num(n, key, v)?),
                "problem.l1" => cl1 = Some(parse_num(n, key, v)?),
                "problem.l2" => cl2 = Some(parse_num(n, key, v)?),
                "problem.t_final" => ct = Some(parse_num(n, key, v)?),
                "problem.initial" => cinit = Some((n, v.to_string())),
                "problem.source" => csrc = Some((n, v.to_string())),
                "problem.exact" => cexact = Some((n, v.to_string())),
                "problem.window" => {
                    let p: Vec<&str> = v.split_whitespace().collect();
                    if p.len() != 2 {
                        return Err(ConfigError::at(n, "`problem.window` expects two lengths `<lx> <ly>`"));
                    }
                    cwin = Some((parse_num(n, key, p[0])?, parse_num(n, key, p[1])?));
                }
                "scheme.lambda" => lambda = Some(parse_num(n, key, v)?),
                "scheme.kind" => {
                    scheme = match v.to_ascii_lowercase().as_str() {
                        "ncd" => SchemeChoice::Ncd,
                        "st-tgcd" | "tgcd" => SchemeChoice::StTgcd,
                        "both" => SchemeChoice::Both,
                        _ => return Err(ConfigError::at(n, format!("`scheme.kind` must be ncd, st-tgcd or both, got `{v}`"))),
                    }
                }
                "study.kind" => {
                    study = match v {
                        "none" => Study::None,
                        "temporal" => Study::Temporal,
                        "spatial" => Study::Spatial,
                        _ => return Err(ConfigError::at(n, format!("`study.kind` must be none, temporal or spatial, got `{v}`"))),
                    }
                }
                "study.metric" => {
                    metric = Some(match v {
                        "exact" => Metric::Exact,
                        "self" => Metric::SelfConvergence,
                        _ => return Err(ConfigError::at(n, format!("`study.metric` must be exact or self, got `{v}`"))),
                    })
                }
                "grid.M1c" => m1c = Some(parse_num(n, key, v)?),
                "grid.Nc" => nc = Some(parse_num(n, key, v)?),
                "ladder.row" => {
                    if let Some(h) = first_heavy_line {
                        return Err(ConfigError::at(
                            n,
                            format!("`ladder.row` after the first `ladder.full_row` (line {h}); heavy rows must come last"),
                        ));
                    }
                    ladder.push(parse_row(n, key, v, false)?);
                }
                "ladder.full_row" => {
                    first_heavy_line.get_or_insert(n);
                    ladder.push(parse_row(n, key, v, true)?);
                }
                "twogrid.kh" => kh = parse_num(n, key, v)?,
                "twogrid.ktau" => ktau = parse_num(n, key, v)?,
                "twogrid.mean" => {
                    mean = match v {
                        "conserve" => MeanControl::Conserve,
                        "free" => MeanControl::Free,
                        _ => return Err(ConfigError::at(n, format!("`twogrid.mean` must be conserve or free, got `{v}`"))),
                    }
                }
                "solver.fp_tol" => fp_tol = parse_num(n, key, v)?,
                "solver.fp_max_iters" => fp_max_iters = parse_num(n, key, v)?,
                "solver.linear_rtol" => linear_rtol = parse_num(n, key, v)?,
                "solver.source_rule" => {
                    source_rule = match v {
                        "trapezoid" => SourceRule::Trapezoid,
                        "midpoint" => SourceRule::Midpoint,
                        _ => return Err(ConfigError::at(n, format!("`solver.source_rule` must be trapezoid or midpoint, got `{v}`"))),
                    }
                }
                "output.prefix" => prefix = Some(v.to_string()),
                _ => return Err(ConfigError::at(n, format!("unknown key `{key}`"))),
            }
        }

        let problem = problem.ok_or_else(|| ConfigError::general("missing `problem.name`"))?;
        let custom = if problem == "custom" {
            let need = |name: &str, v: Option<f64>| {
                v.ok_or_else(|| ConfigError::general(format!("custom problem needs `problem.{name}`")))
            };
            let expr = |e: Option<(usize, String)>, vars: &[Var]| -> Result<Option<Expr>, ConfigError> {
                e.map(|(n, s)| Expr::parse(&s, vars).map_err(|err| ConfigError::at(n, format!("{err} in `{s}`"))))
                    .transpose()
            };
            let space = [Var::X, Var::Y, Var::Lambda];
            let space_time = [Var::X, Var::Y, Var::T, Var::Lambda];
            Some(CustomProblem {
                x0: cx0.unwrap_or(0.0),
                y0: cy0.unwrap_or(0.0),
                l1: need("l1", cl1)?,
                l2: need("l2", cl2)?,
                t_final: need("t_final", ct)?,
                initial: expr(cinit, &space)?.ok_or_else(|| ConfigError::general("custom problem needs `problem.initial`"))?,
                source: expr(csrc, &space_time)?,
                exact: expr(cexact, &space_time)?,
                window: cwin,
            })
        } else {
            if custom_line > 0 {
                return Err(ConfigError::at(
                    custom_line,
                    format!("problem fields other than the name are only accepted for `custom`, not `{problem}`"),
                ));
            }
            None
        };

        let cfg = Self {
            problem,
            custom,
            lambda: lambda.ok_or_else(|| ConfigError::general("missing `scheme.lambda`"))?,
            scheme,
            study,
            metric: metric.unwrap_or(Metric::Exact),
            m1c,
            nc,
            ladder,
            kh,
            ktau,
            mean,
            fp_tol,
            fp_max_iters,
            linear_rtol,
            source_rule,
            prefix: prefix.ok_or_else(|| ConfigError::general("missing `output.prefix`"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::general(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return err(format!("`scheme.lambda` must be positive, got {}", self.lambda));
        }
        if self.kh == 0 || self.ktau == 0 {
            return err("step-size ratios `twogrid.kh` and `twogrid.ktau` must be at least 1".into());
        }
        if !(self.fp_tol > 0.0) || !(self.linear_rtol > 0.0) || self.fp_max_iters == 0 {
            return err("solver tolerances and iteration caps must be positive".into());
        }
        if !matches!(self.problem.as_str(), "example1" | "example2" | "custom") {
            return err(format!("unknown problem `{}` (expected example1, example2 or custom)", self.problem));
        }
        if let Some(c) = &self.custom {
            if !(c.l1 > 0.0 && c.l2 > 0.0 && c.t_final > 0.0) {
                return err("custom problem needs positive `l1`, `l2` and `t_final`".into());
            }
        }
        match self.study {
            Study::None => {
                if self.m1c.is_none() || self.nc.is_none() {
                    return err("a single solve (`study.kind = none`) needs `grid.M1c` and `grid.Nc`".into());
                }
                if !self.ladder.is_empty() {
                    return err("ladder rows need `study.kind` temporal or spatial".into());
                }
                if self.metric == Metric::SelfConvergence {
                    return err("`study.metric = self` needs a temporal or spatial study".into());
                }
            }
            Study::Temporal | Study::Spatial => {
                if self.ladder.is_empty() {
                    return err(format!("a {} study needs at least one `ladder.row`", self.study_name()));
                }
                if self.m1c.is_some() || self.nc.is_some() {
                    return err("`grid.M1c` and `grid.Nc` are only used with `study.kind = none`".into());
                }
                for w in self.ladder.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let ok = match self.study {
                        Study::Temporal => b.m1c == a.m1c && b.nc == 2 * a.nc,
                        _ => b.nc == a.nc && b.m1c == 2 * a.m1c,
                    };
                    if !ok {
                        return err(format!(
                            "ladder rows ({} {}) -> ({} {}) must halve the {} step and keep the other fixed",
                            a.m1c,
                            a.nc,
                            b.m1c,
                            b.nc,
                            if self.study == Study::Temporal { "time" } else { "space" }
                        ));
                    }
                }
            }
        }
        if self.rows(true).iter().any(|r| r.m1c == 0 || r.nc == 0) {
            return err("grid sizes must be positive".into());
        }
        if self.metric == Metric::Exact && !self.has_exact() {
            return err(format!("problem `{}` has no exact solution; use `study.metric = self`", self.problem));
        }
        Ok(())
    }

    fn has_exact(&self) -> bool {
        match &self.custom {
            Some(c) => c.exact.is_some(),
            None => self.problem == "example1",
        }
    }

    fn study_name(&self) -> &'static str {
        match self.study {
            Study::None => "none",
            Study::Temporal => "temporal",
            Study::Spatial => "spatial",
        }
    }

    /// Ladder rows to execute; a single solve is a one-row ladder.
    pub fn rows(&self, full: bool) -> Vec<LadderRow> {
        match (self.study, self.m1c, self.nc) {
            (Study::None, Some(m1c), Some(nc)) => vec![LadderRow { m1c, nc, heavy: false }],
            _ => self.ladder.iter().copied().filter(|r| full || !r.heavy).collect(),
        }
    }

    pub fn schemes(&self) -> Vec<tgcd_core::analysis::Scheme> {
        use tgcd_core::analysis::Scheme;
        match self.scheme {
            SchemeChoice::Ncd => vec![Scheme::Ncd],
            SchemeChoice::StTgcd => vec![Scheme::StTgcd],
            SchemeChoice::Both => vec![Scheme::Ncd, Scheme::StTgcd],
        }
    }

    pub fn params(&self) -> tgcd_core::Params {
        let mut p = tgcd_core::Params::new(self.lambda);
        p.fp_tol = self.fp_tol;
        p.fp_max_iters = self.fp_max_iters;
        p.linear.rel_tol = self.linear_rtol;
        p.source_rule = self.source_rule;
        p
    }

    pub fn build_problem(&self) -> Problem {
        let Some(c) = &self.custom else {
            return problems::by_name(&self.problem, self.lambda).expect("validated problem name");
        };
        let lambda = self.lambda;
        let init = c.initial.clone();
        let space_time = |e: &Option<Expr>| {
            e.clone().map(|e| {
                Arc::new(move |x: f64, y: f64, t: f64| e.eval(&Bindings { x, y, t, lambda }))
                    as Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>
            })
        };
        Problem {
            name: "custom".into(),
            x0: c.x0,
            y0: c.y0,
            l1: c.l1,
            l2: c.l2,
            t_final: c.t_final,
            lambda,
            initial: Arc::new(move |x, y| init.eval(&Bindings { x, y, t: 0.0, lambda })),
            source: space_time(&c.source),
            exact: space_time(&c.exact),
            error_window: c.window.map(|(lx, ly)| ErrorWindow { lx, ly }),
        }
    }

    /// Canonical text form, accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("problem.name", self.problem.clone());
        if let Some(c) = &self.custom {
            kv("problem.x0", c.x0.to_string());
            kv("problem.y0", c.y0.to_string());
            kv("problem.l1", c.l1.to_string());
            kv("problem.l2", c.l2.to_string());
            kv("problem.t_final", c.t_final.to_string());
            kv("problem.initial", c.initial.source().to_string());
            if let Some(e) = &c.source {
                kv("problem.source", e.source().to_string());
            }
            if let Some(e) = &c.exact {
                kv("problem.exact", e.source().to_string());
            }
            if let Some((lx, ly)) = c.window {
                kv("problem.window", format!("{lx} {ly}"));
            }
        }
        kv("scheme.lambda", self.lambda.to_string());
        kv(
            "scheme.kind",
            match self.scheme {
                SchemeChoice::Ncd => "ncd",
                SchemeChoice::StTgcd => "st-tgcd",
                SchemeChoice::Both => "both",
            }
            .into(),
        );
        kv("study.kind", self.study_name().into());
        kv(
            "study.metric",
            match self.metric {
                Metric::Exact => "exact",
                Metric::SelfConvergence => "self",
            }
            .into(),
        );
        if let Some(m) = self.m1c {
            kv("grid.M1c", m.to_string());
        }
        if let Some(n) = self.nc {
            kv("grid.Nc", n.to_string());
        }
        for r in &self.ladder {
            kv(if r.heavy { "ladder.full_row" } else { "ladder.row" }, format!("{} {}", r.m1c, r.nc));
        }
        kv("twogrid.kh", self.kh.to_string());
        kv("twogrid.ktau", self.ktau.to_string());
        kv(
            "twogrid.mean",
            match self.mean {
                MeanControl::Conserve => "conserve",
                MeanControl::Free => "free",
            }
            .into(),
        );
        kv("solver.fp_tol", self.fp_tol.to_string());
        kv("solver.fp_max_iters", self.fp_max_iters.to_string());
        kv("solver.linear_rtol", self.linear_rtol.to_string());
        kv(
            "solver.source_rule",
            match self.source_rule {
                SourceRule::Trapezoid => "trapezoid",
                SourceRule::Midpoint => "midpoint",
            }
            .into(),
        );
        kv("output.prefix", self.prefix.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "problem.name = example1\nscheme.lambda = 1\noutput.prefix = out/x\n";

    fn with(extra: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(&format!("{BASE}{extra}"))
    }

    #[test]
    fn single_solve_defaults() {
        let c = with("grid.M1c = 8\ngrid.Nc = 4\n").unwrap();
        assert_eq!(c.scheme, SchemeChoice::Both);
        assert_eq!(c.rows(false).len(), 1);
        assert_eq!((c.kh, c.ktau), (1, 1));
    }

    #[test]
    fn diagnostics_name_the_line() {
        let e = with("grid.M1c = 8\ngrid.Nc = x\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        let e = with("grid.M1c = 8\nbogus.key = 1\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("bogus.key"));
        let e = with("grid.M1c = 8\ngrid.M1c = 9\n").unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = with("just words\n").unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn ladder_rules() {
        assert!(with("study.kind = temporal\n").unwrap_err().message.contains("ladder.row"));
        assert!(with("study.kind = temporal\nladder.row = 8 4\nladder.row = 8 6\n").is_err());
        assert!(with("study.kind = spatial\nladder.row = 4 8\nladder.row = 8 8\n").is_ok());
        let e = with("study.kind = spatial\nladder.full_row = 4 8\nladder.row = 8 8\n").unwrap_err();
        assert_eq!(e.line, Some(6));
        let c = with("study.kind = spatial\nladder.row = 4 8\nladder.full_row = 8 8\n").unwrap();
        assert_eq!(c.rows(false).len(), 1);
        assert_eq!(c.rows(true).len(), 2);
    }

    #[test]
    fn exact_metric_needs_exact_solution() {
        let t = "problem.name = example2\nscheme.lambda = 0.1\noutput.prefix = o\nstudy.kind = temporal\nladder.row = 8 4\n";
        assert!(ExperimentConfig::parse(t).is_err());
        assert!(ExperimentConfig::parse(&format!("{t}study.metric = self\n")).is_ok());
    }

    #[test]
    fn custom_problem_round_trip() {
        let t = "problem.name = custom\nproblem.l1 = 1\nproblem.l2 = 1\nproblem.t_final = 0.5\n\
                 problem.initial = sin(2*pi*x) * sin(2*pi*y)\nproblem.exact = exp(-t) * sin(2*pi*x)\n\
                 problem.window = 0.5 0.5\nscheme.lambda = 0.3\ngrid.M1c = 4\ngrid.Nc = 2\noutput.prefix = o\n";
        let c = ExperimentConfig::parse(t).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        let p = c.build_problem();
        assert!(((p.initial)(0.25, 0.25) - 1.0).abs() < 1e-15);
        let e = ExperimentConfig::parse(&t.replace("sin(2*pi*x) * sin", "sin(2*pi*x) * sin(t)*sin")).unwrap_err();
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn record_sections_are_ignored() {
        let c = with("grid.M1c = 8\ngrid.Nc = 4\n").unwrap();
        let rec = format!("{}result.status = ok\ncompare.speedup.1 = 2.0\n", c.to_text());
        assert_eq!(ExperimentConfig::from_record(&rec).unwrap(), c);
        assert!(ExperimentConfig::parse(&rec).is_err());
    }
}
