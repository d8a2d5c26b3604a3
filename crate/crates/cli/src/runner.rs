//! Executes the solves a configuration asks for and turns them into rows.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use tgcd_core::analysis::{observed_order, window_error, Scheme};
use tgcd_core::ncd::{ncd_solve, Record};
use tgcd_core::problems::Sampled;
use tgcd_core::twogrid::{tgcd_solve, StageTimings};
use tgcd_core::{Field, Problem, TimeWindow, TwoGridConfig};

use crate::config::{ExperimentConfig, LadderRow, Metric, Study};

/// One solve on the fine mesh `(kh * m1c, ktau * nc)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub scheme: Scheme,
    pub m1c: usize,
    pub nc: usize,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub u: Field,
    pub seconds: f64,
    pub fp_iterations_total: usize,
    pub fp_iterations_max: usize,
    pub unconverged_steps: usize,
    pub linear_iterations: usize,
    pub stages: Option<StageTimings>,
}

pub type Outcome = Result<Solved, String>;

/// A finished ladder row of one scheme.
#[derive(Debug, Clone)]
pub struct RowResult {
    pub scheme: Scheme,
    pub level: usize,
    pub m1c: usize,
    pub nc: usize,
    pub h_c: f64,
    pub h_f: f64,
    pub tau_c: f64,
    pub tau_f: f64,
    /// `NaN` when the row failed.
    pub error: f64,
    pub order: Option<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
    pub unconverged_steps: usize,
    pub fp_iterations_total: usize,
    pub fp_iterations_max: usize,
    pub linear_iterations: usize,
    pub stages: Option<StageTimings>,
}

impl RowResult {
    pub fn flagged(&self) -> bool {
        self.failure.is_some() || self.unconverged_steps > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Flagged,
    Failed,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Flagged => "flagged",
            Status::Failed => "failed",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Flagged => 2,
            Status::Failed => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<RowResult>,
    pub status: Status,
}

impl Report {
    pub fn for_scheme(&self, s: Scheme) -> impl Iterator<Item = &RowResult> {
        self.rows.iter().filter(move |r| r.scheme == s)
    }
}

/// Solves needed by one scheme: the ladder rows, plus one further
/// refinement when errors are measured against the next level.
fn solve_plan(cfg: &ExperimentConfig, rows: &[LadderRow]) -> Vec<(usize, usize)> {
    let mut plan: Vec<_> = rows.iter().map(|r| (r.m1c, r.nc)).collect();
    if cfg.metric == Metric::SelfConvergence {
        if let Some(&(m, n)) = plan.last() {
            plan.push(match cfg.study {
                Study::Temporal => (m, 2 * n),
                _ => (2 * m, n),
            });
        }
    }
    plan
}

pub fn run_job(problem: &Problem, cfg: &ExperimentConfig, job: Job) -> Outcome {
    let params = cfg.params();
    let fail = |e: tgcd_core::Error| e.to_string();
    match job.scheme {
        Scheme::Ncd => {
            let grid = problem.grid(cfg.kh * job.m1c).map_err(fail)?;
            let window = TimeWindow::new(problem.t_final, cfg.ktau * job.nc).map_err(fail)?;
            let u0 = problem.sample(&grid, Sampled::Initial).map_err(fail)?;
            let source = problem.source_term();
            let clock = Instant::now();
            let run = ncd_solve(u0, &window, &params, source.as_ref(), Record::Final).map_err(fail)?;
            let seconds = clock.elapsed().as_secs_f64();
            Ok(Solved {
                u: run.final_state.u,
                seconds,
                fp_iterations_total: run.report.fp_iterations_total,
                fp_iterations_max: run.report.fp_iterations_max,
                unconverged_steps: run.report.unconverged_steps,
                linear_iterations: run.report.linear_iterations_total,
                stages: None,
            })
        }
        Scheme::StTgcd => {
            let tg = TwoGridConfig::new(
                problem.grid(job.m1c).map_err(fail)?,
                TimeWindow::new(problem.t_final, job.nc).map_err(fail)?,
                cfg.kh,
                cfg.ktau,
                params,
            )
            .map_err(fail)?;
            let tg = TwoGridConfig { mean: cfg.mean, ..tg };
            let clock = Instant::now();
            let run = tgcd_solve(problem, &tg, Record::Final).map_err(fail)?;
            let seconds = clock.elapsed().as_secs_f64();
            Ok(Solved {
                u: run.final_state.u,
                seconds,
                fp_iterations_total: run.coarse_report.fp_iterations_total,
                fp_iterations_max: run.coarse_report.fp_iterations_max,
                unconverged_steps: run.coarse_report.unconverged_steps,
                linear_iterations: run.coarse_report.linear_iterations_total + run.correction_linear_iterations,
                stages: Some(run.timings),
            })
        }
    }
}

/// Runs `jobs` on up to `threads` workers; results keep the job order.
pub fn execute(problem: &Problem, cfg: &ExperimentConfig, jobs: &[Job], threads: usize) -> Vec<Outcome> {
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&job) = jobs.get(k) else { break };
                let out = run_job(problem, cfg, job);
                slots.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|o| o.unwrap_or_else(|| Err("worker did not report".into())))
        .collect()
}

fn row_error(problem: &Problem, cfg: &ExperimentConfig, solved: &Solved, reference: Option<&Outcome>) -> Result<f64, String> {
    let fail = |e: tgcd_core::Error| e.to_string();
    let grid = *solved.u.grid();
    let nodes = problem.window_nodes(&grid).map_err(fail)?;
    match cfg.metric {
        Metric::Exact => {
            let exact = problem.sample(&grid, Sampled::Exact(problem.t_final)).map_err(fail)?;
            window_error(&solved.u, &exact, nodes).map_err(fail)
        }
        Metric::SelfConvergence => {
            let r = match reference {
                Some(Ok(r)) => r,
                Some(Err(e)) => return Err(format!("reference solve failed: {e}")),
                None => return Err("no reference solve".into()),
            };
            match cfg.study {
                Study::Spatial => {
                    tgcd_core::analysis::self_error_spatial_in(&solved.u, &r.u, nodes).map_err(fail)
                }
                _ => window_error(&solved.u, &r.u, nodes).map_err(fail),
            }
        }
    }
}

/// Runs every (scheme, row) pair of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, full: bool, threads: usize) -> Report {
    let problem = cfg.build_problem();
    let rows = cfg.rows(full);
    let plan = solve_plan(cfg, &rows);
    let schemes = cfg.schemes();
    let jobs: Vec<Job> = schemes
        .iter()
        .flat_map(|&scheme| plan.iter().map(move |&(m1c, nc)| Job { scheme, m1c, nc }))
        .collect();
    let outcomes = execute(&problem, cfg, &jobs, threads);

    let mut results = Vec::new();
    for (s_idx, &scheme) in schemes.iter().enumerate() {
        let base = s_idx * plan.len();
        let mut prev_error: Option<f64> = None;
        for (k, row) in rows.iter().enumerate() {
            let h_c = problem.l1 / row.m1c as f64;
            let tau_c = problem.t_final / row.nc as f64;
            let mut r = RowResult {
                scheme,
                level: k + 1,
                m1c: row.m1c,
                nc: row.nc,
                h_c,
                h_f: h_c / cfg.kh as f64,
                tau_c,
                tau_f: tau_c / cfg.ktau as f64,
                error: f64::NAN,
                order: None,
                seconds: f64::NAN,
                failure: None,
                unconverged_steps: 0,
                fp_iterations_total: 0,
                fp_iterations_max: 0,
                linear_iterations: 0,
                stages: None,
            };
            match &outcomes[base + k] {
                Ok(solved) => {
                    r.seconds = solved.seconds;
                    r.unconverged_steps = solved.unconverged_steps;
                    r.fp_iterations_total = solved.fp_iterations_total;
                    r.fp_iterations_max = solved.fp_iterations_max;
                    r.linear_iterations = solved.linear_iterations;
                    r.stages = solved.stages;
                    let reference = outcomes.get(base + k + 1).filter(|_| cfg.metric == Metric::SelfConvergence);
                    if let Some(Ok(next)) = reference {
                        // a reference march that failed to settle taints this row too
                        r.unconverged_steps += next.unconverged_steps;
                    }
                    match row_error(&problem, cfg, solved, reference) {
                        Ok(e) => r.error = e,
                        Err(e) => r.failure = Some(e),
                    }
                }
                Err(e) => r.failure = Some(e.clone()),
            }
            if k > 0 {
                r.order = prev_error.and_then(|p| observed_order(p, r.error).ok());
            }
            prev_error = r.error.is_finite().then_some(r.error);
            results.push(r);
        }
    }

    let status = if results.iter().all(|r| r.failure.is_some()) {
        Status::Failed
    } else if results.iter().any(RowResult::flagged) {
        Status::Flagged
    } else {
        Status::Ok
    };
    Report { rows: results, status }
}
