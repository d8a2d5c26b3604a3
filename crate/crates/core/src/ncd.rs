//! Nonlinear compact difference (NCD) scheme.
//!
//! One step advances `(u, v, w)` from level `n-1` to `n` under the
//! Crank-Nicolson compact discretisation
//!
//! ```text
//! (u^n - u^{n-1}) / tau + psi_h(u*, u*) - h^2/2 [psi_x(v*, u*) + psi_y(w*, u*)]
//!     = lambda (v* + w*) + f*,                    (.)* = half-level mean
//! v = (I + h^2/12 dxx)^{-1} dxx u,  w = (I + h^2/12 dyy)^{-1} dyy u.
//! ```
//!
//! The nonlinear system is solved by fixed-point iteration: in sweep
//! `k -> k+1` each quadratic half-level product is split into four terms,
//! every term carrying one `(.)^{n,k+1}` factor goes to the left side, and
//! the resulting linear system in `u^{n,k+1}` is solved matrix-free with
//! `v^{n,k+1}`, `w^{n,k+1}` eliminated through the compact inverses.

use crate::error::{Error, Result};
use crate::fd_ops::{psi_h_acc, psi_x_acc, psi_y_acc, CompactPair};
use crate::linsolve::{solve_iterative, DiffusionPreconditioner, LinearOperator, Preconditioner, SolveSettings};
use crate::mesh::{Field2D, PeriodicGrid, TimeWindow};
use crate::problems::{SourceRule, SourceTerm};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams<T> {
    /// Kinematic viscosity.
    pub lambda: T,
    /// Fixed-point stop tolerance on `max |u^{n,k+1} - u^{n,k}|`.
    pub fp_tol: T,
    pub fp_max_iters: usize,
    pub linear: SolveSettings<T>,
    pub source_rule: SourceRule,
}

impl<T: Real> SchemeParams<T> {
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            fp_tol: T::lit(1e-8),
            fp_max_iters: 100,
            linear: SolveSettings::default(),
            source_rule: SourceRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.fp_tol > T::zero()) {
            return Err(Error::InvalidParameter(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iters == 0 {
            return Err(Error::InvalidParameter("fp_max_iters must be >= 1".into()));
        }
        self.linear.validate()
    }
}

/// Solution triple at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub u: Field2D<T>,
    /// Compact `u_xx`.
    pub v: Field2D<T>,
    /// Compact `u_yy`.
    pub w: Field2D<T>,
    pub t: T,
    pub step_index: usize,
}

impl<T: Real> SolverState<T> {
    /// Builds the state at level `step_index` from `u`, reconstructing `v`, `w`.
    pub fn from_u(pair: &CompactPair<T>, u: Field2D<T>, t: T, step_index: usize) -> Self {
        let v = pair.aux_v(&u);
        let w = pair.aux_w(&u);
        Self { u, v, w, t, step_index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<T> {
    pub fp_iterations: usize,
    pub final_fp_diff: T,
    pub converged: bool,
    pub linear_iterations_total: usize,
}

/// Aggregate over a march.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarchReport {
    pub steps: usize,
    pub fp_iterations_total: usize,
    pub fp_iterations_max: usize,
    pub unconverged_steps: usize,
    pub linear_iterations_total: usize,
}

impl MarchReport {
    pub fn record<T>(&mut self, step: &StepReport<T>) {
        self.steps += 1;
        self.fp_iterations_total += step.fp_iterations;
        self.fp_iterations_max = self.fp_iterations_max.max(step.fp_iterations);
        self.linear_iterations_total += step.linear_iterations_total;
        if !step.converged {
            self.unconverged_steps += 1;
        }
    }

    pub fn merge(&mut self, other: &MarchReport) {
        self.steps += other.steps;
        self.fp_iterations_total += other.fp_iterations_total;
        self.fp_iterations_max = self.fp_iterations_max.max(other.fp_iterations_max);
        self.unconverged_steps += other.unconverged_steps;
        self.linear_iterations_total += other.linear_iterations_total;
    }

    pub fn all_converged(&self) -> bool {
        self.unconverged_steps == 0
    }
}

/// Linear system of one fixed-point sweep.
///
/// With `a = u^{n,k}` (and its compact derivatives) and `p = u^{n-1}`
/// frozen, the unknown `z = u^{n,k+1}` satisfies
///
/// ```text
/// z/tau + 1/4 [psi_h(a + p, z) + psi_h(z, p)]
///       - h^2/8 [psi_x(va + vp, z) + psi_x(Kx z, p) + psi_y(wa + wp, z) + psi_y(Ky z, p)]
///       - lambda/2 (Kx z + Ky z) = rhs
/// ```
pub struct NcdSweepOperator<'a, T: Real> {
    pair: &'a CompactPair<T>,
    precond: Option<&'a DiffusionPreconditioner<T>>,
    a_plus_p: Field2D<T>,
    va_plus_vp: Field2D<T>,
    wa_plus_wp: Field2D<T>,
    prev: &'a SolverState<T>,
    tau: T,
    lambda: T,
}

impl<'a, T: Real> NcdSweepOperator<'a, T> {
    /// `current` is the latest iterate `(u^{n,k}, v^{n,k}, w^{n,k})`.
    pub fn new(
        pair: &'a CompactPair<T>,
        precond: Option<&'a DiffusionPreconditioner<T>>,
        prev: &'a SolverState<T>,
        current: (&Field2D<T>, &Field2D<T>, &Field2D<T>),
        tau: T,
        lambda: T,
    ) -> Self {
        let (a, va, wa) = current;
        Self {
            pair,
            precond,
            a_plus_p: a + &prev.u,
            va_plus_vp: va + &prev.v,
            wa_plus_wp: wa + &prev.w,
            prev,
            tau,
            lambda,
        }
    }

    /// Right side: every term free of `(.)^{n,k+1}`, plus the source.
    pub fn rhs(&self, source: Option<&Field2D<T>>) -> Field2D<T> {
        let p = self.prev;
        let h = self.pair.grid().h();
        let q = T::lit(0.25);
        let c = h * h / T::lit(8.0);
        let half_lambda = self.lambda * T::lit(0.5);
        let mut out = &p.u * (T::one() / self.tau);
        psi_h_acc(&mut out, &p.u, &p.u, -q);
        psi_x_acc(&mut out, &p.v, &p.u, c);
        psi_y_acc(&mut out, &p.w, &p.u, c);
        out.axpy(half_lambda, &p.v);
        out.axpy(half_lambda, &p.w);
        if let Some(f) = source {
            out.axpy(T::one(), f);
        }
        out
    }
}

impl<T: Real> LinearOperator<T> for NcdSweepOperator<'_, T> {
    fn grid(&self) -> &PeriodicGrid<T> {
        self.pair.grid()
    }

    fn apply(&self, z: &Field2D<T>) -> Field2D<T> {
        let p = &self.prev.u;
        let h = self.pair.grid().h();
        let q = T::lit(0.25);
        let c = -(h * h) / T::lit(8.0);
        let half_lambda = self.lambda * T::lit(0.5);
        let vz = self.pair.aux_v(z);
        let wz = self.pair.aux_w(z);
        let mut out = z * (T::one() / self.tau);
        psi_h_acc(&mut out, &self.a_plus_p, z, q);
        psi_h_acc(&mut out, z, p, q);
        psi_x_acc(&mut out, &self.va_plus_vp, z, c);
        psi_x_acc(&mut out, &vz, p, c);
        psi_y_acc(&mut out, &self.wa_plus_wp, z, c);
        psi_y_acc(&mut out, &wz, p, c);
        out.axpy(-half_lambda, &vz);
        out.axpy(-half_lambda, &wz);
        out
    }

    fn preconditioner(&self) -> Option<&dyn Preconditioner<T>> {
        self.precond.map(|p| p as &dyn Preconditioner<T>)
    }
}

/// Reusable per-march data: compact factorisations and the preconditioner.
pub struct NcdStepper<T: Real> {
    pair: CompactPair<T>,
    precond: DiffusionPreconditioner<T>,
    tau: T,
    params: SchemeParams<T>,
}

impl<T: Real> NcdStepper<T> {
    pub fn new(grid: PeriodicGrid<T>, tau: T, params: SchemeParams<T>) -> Result<Self> {
        params.validate()?;
        if !(tau > T::zero()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
        }
        Ok(Self {
            pair: CompactPair::new(grid),
            precond: DiffusionPreconditioner::new(grid, T::one() / tau, params.lambda * T::lit(0.5)),
            tau,
            params,
        })
    }

    pub fn pair(&self) -> &CompactPair<T> {
        &self.pair
    }

    pub fn preconditioner(&self) -> &DiffusionPreconditioner<T> {
        &self.precond
    }

    pub fn init(&self, u0: Field2D<T>) -> Result<SolverState<T>> {
        self.pair.grid().check_same(u0.grid())?;
        if !u0.is_finite() {
            return Err(Error::NonFinite("initial data".into()));
        }
        Ok(SolverState::from_u(&self.pair, u0, T::zero(), 0))
    }

    /// Advances one step; `source` is the forcing sampled at `t_{n-1/2}`.
    pub fn step(&self, state: &SolverState<T>, source: Option<&Field2D<T>>) -> Result<(SolverState<T>, StepReport<T>)> {
        let n = state.step_index + 1;
        let pair = &self.pair;
        let mut current = (state.u.clone(), state.v.clone(), state.w.clone());
        let mut report = StepReport {
            fp_iterations: 0,
            final_fp_diff: T::infinity(),
            converged: false,
            linear_iterations_total: 0,
        };
        let precond = self.params.linear.precondition.then_some(&self.precond);

        while report.fp_iterations < self.params.fp_max_iters {
            let op = NcdSweepOperator::new(
                pair,
                precond,
                state,
                (&current.0, &current.1, &current.2),
                self.tau,
                self.params.lambda,
            );
            let rhs = op.rhs(source);
            let sol = solve_iterative(&op, &rhs, &self.params.linear, Some(&current.0))?;
            report.fp_iterations += 1;
            report.linear_iterations_total += sol.iterations;
            let next = sol.x;
            if !next.is_finite() {
                return Err(Error::NonFinite(format!(
                    "fixed-point iterate {} of step {n}",
                    report.fp_iterations
                )));
            }
            let diff = next.max_abs_diff(&current.0)?;
            report.final_fp_diff = diff;
            let v = pair.aux_v(&next);
            let w = pair.aux_w(&next);
            current = (next, v, w);
            if diff <= self.params.fp_tol {
                report.converged = true;
                break;
            }
        }

        let (u, v, w) = current;
        let next_state = SolverState {
            u,
            v,
            w,
            t: state.t + self.tau,
            step_index: n,
        };
        Ok((next_state, report))
    }
}

/// Initial state at `t = 0` with `v`, `w` reconstructed from `u0`.
pub fn ncd_init<T: Real>(u0: Field2D<T>, params: &SchemeParams<T>) -> Result<SolverState<T>> {
    params.validate()?;
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial data".into()));
    }
    let pair = CompactPair::new(*u0.grid());
    Ok(SolverState::from_u(&pair, u0, T::zero(), 0))
}

/// One NCD step with a freshly built stepper.
pub fn ncd_step<T: Real>(
    state: &SolverState<T>,
    tau: T,
    params: &SchemeParams<T>,
    source: Option<&Field2D<T>>,
) -> Result<(SolverState<T>, StepReport<T>)> {
    NcdStepper::new(*state.u.grid(), tau, *params)?.step(state, source)
}

/// Which levels of a march to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Final,
    AllLevels,
}

#[derive(Debug, Clone)]
pub struct NcdRun<T> {
    /// `u` at levels `0..=N` when recording all levels, otherwise empty.
    pub levels: Vec<Field2D<T>>,
    pub final_state: SolverState<T>,
    pub report: MarchReport,
}

/// Full NCD march over `window`; the step-`n` source follows `params.source_rule`.
pub fn ncd_solve<T: Real>(
    u0: Field2D<T>,
    window: &TimeWindow<T>,
    params: &SchemeParams<T>,
    source: Option<&SourceTerm<T>>,
    record: Record,
) -> Result<NcdRun<T>> {
    let grid = *u0.grid();
    let stepper = NcdStepper::new(grid, window.tau(), *params)?;
    let mut state = stepper.init(u0)?;
    let mut levels = Vec::new();
    if record == Record::AllLevels {
        levels.reserve(window.steps() + 1);
        levels.push(state.u.clone());
    }
    let mut report = MarchReport::default();
    for n in 1..=window.steps() {
        let f = source.map(|s| s.step_sample(&grid, window, n, params.source_rule));
        let (next, step) = stepper.step(&state, f.as_ref())?;
        report.record(&step);
        state = next;
        state.t = window.time(n);
        if record == Record::AllLevels {
            levels.push(state.u.clone());
        }
    }
    Ok(NcdRun {
        levels,
        final_state: state,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_ops::{aux_v, aux_w};
    use crate::mesh::{l2_norm, make_grid};
    use std::f64::consts::PI;

    #[test]
    fn init_zero_and_constant() {
        let g = make_grid(2.0, 2.0, 8, 8).unwrap();
        let p = SchemeParams::new(1.0);
        let s = ncd_init(Field2D::zeros(g), &p).unwrap();
        assert_eq!(s.v.max_abs(), 0.0);
        let s = ncd_init(Field2D::constant(g, 5.0), &p).unwrap();
        assert_eq!(s.u.max_abs(), 5.0);
        assert!(s.v.max_abs() < 1e-12 && s.w.max_abs() < 1e-12);
    }

    #[test]
    fn init_reconstructs_fourth_order_laplacian_parts() {
        let mut errs = Vec::new();
        for m in [16, 32] {
            let g = make_grid(2.0, 2.0, m, m).unwrap();
            let u0 = Field2D::sample(g, 0.0, 0.0, |x, y| (PI * x).sin() * (PI * y).sin());
            let s = ncd_init(u0.clone(), &SchemeParams::new(1.0)).unwrap();
            errs.push(s.v.max_abs_diff(&(&u0 * (-PI * PI))).unwrap());
        }
        assert!((errs[0] / errs[1]).log2() > 3.9);
    }

    #[test]
    fn zero_state_stays_zero_in_one_sweep() {
        let g = make_grid(1.0, 1.0, 8, 8).unwrap();
        let p = SchemeParams::new(1.0);
        let s = ncd_init(Field2D::zeros(g), &p).unwrap();
        let (next, rep) = ncd_step(&s, 0.1, &p, None).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(rep.fp_iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn constant_state_is_steady() {
        let g = make_grid(1.0, 1.0, 8, 8).unwrap();
        let p = SchemeParams::new(0.3);
        let s = ncd_init(Field2D::constant(g, 1.7), &p).unwrap();
        let (next, rep) = ncd_step(&s, 0.05, &p, None).unwrap();
        assert!(next.u.max_abs_diff(&s.u).unwrap() < 1e-12);
        assert!(rep.converged);
    }

    #[test]
    fn auxiliaries_stay_consistent_and_norm_decays() {
        let g = make_grid(1.0, 1.0, 12, 12).unwrap();
        let p = SchemeParams::new(0.1);
        let u0 = Field2D::sample(g, 0.0, 0.5, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.3);
        let w = TimeWindow::new(0.5, 5).unwrap();
        let run = ncd_solve(u0, &w, &p, None, Record::AllLevels).unwrap();
        assert_eq!(run.levels.len(), 6);
        let s = &run.final_state;
        assert!(s.v.max_abs_diff(&aux_v(&s.u)).unwrap() < 1e-12);
        assert!(s.w.max_abs_diff(&aux_w(&s.u)).unwrap() < 1e-12);
        for pair in run.levels.windows(2) {
            assert!(l2_norm(&pair[1]) <= l2_norm(&pair[0]) * (1.0 + 1e-12));
        }
        assert!(run.report.all_converged());
    }

    #[test]
    fn cap_hit_is_flagged_not_fatal() {
        let g = make_grid(1.0, 1.0, 8, 8).unwrap();
        let mut p = SchemeParams::new(0.1);
        p.fp_max_iters = 1;
        let u0 = Field2D::sample(g, 0.0, 0.0, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos());
        let s = ncd_init(u0, &p).unwrap();
        let (_, rep) = ncd_step(&s, 0.1, &p, None).unwrap();
        assert_eq!(rep.fp_iterations, 1);
        assert!(!rep.converged);
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(0.0f64).validate().is_err());
        let mut p = SchemeParams::new(1.0f64);
        p.fp_max_iters = 0;
        assert!(p.validate().is_err());
    }
}
