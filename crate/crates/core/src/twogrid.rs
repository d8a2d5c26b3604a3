//! Space-time two-grid compact difference (ST-TGCD) scheme.
//!
//! 1. Solve the nonlinear compact scheme on the coarse mesh `(h_c, tau_c)`.
//! 2. Prolong each coarse level linearly in time and with a one-sided
//!    four-point cubic Lagrange stencil per direction in space, then rebuild
//!    the compact second derivatives on the fine grid.
//! 3. March a linear correction scheme on the fine mesh whose convection
//!    terms take their first argument from the prolonged background.
//!
//! Stage 2 is evaluated lazily: only the background levels `n - 1` and `n`
//! are held while stage 3 advances.
//!
//! With frozen first slots the stage-3 convection terms do not sum to zero,
//! so each step leaks a little into the constant mode, which diffusion never
//! damps. [`MeanControl::Conserve`] (the default) restores the discrete
//! balance `mean(u^n) = mean(u^{n-1}) + tau mean(f)` that the nonlinear
//! scheme satisfies exactly; [`MeanControl::Free`] leaves the linear solve
//! untouched.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fd_ops::{psi_h_acc, psi_x_acc, psi_y_acc, CompactPair};
use crate::linsolve::{solve_iterative, DiffusionPreconditioner, LinearOperator, Preconditioner};
use crate::mesh::{Field2D, PeriodicGrid, TimeWindow};
use crate::ncd::{ncd_solve, MarchReport, Record, SchemeParams, SolverState};
use crate::problems::{Problem, Sampled};
use crate::scalar::Real;

/// Treatment of the spatial mean in the fine correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanControl {
    /// Shift each corrected level so the mean follows the forcing exactly.
    #[default]
    Conserve,
    /// Keep the raw solution of the linear correction system.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGridConfig<T> {
    /// Spatial step ratio `h_c / h_f`.
    pub kh: usize,
    /// Temporal step ratio `tau_c / tau_f`.
    pub ktau: usize,
    pub coarse_grid: PeriodicGrid<T>,
    pub coarse_window: TimeWindow<T>,
    pub params: SchemeParams<T>,
    pub mean: MeanControl,
}

impl<T: Real> TwoGridConfig<T> {
    pub fn new(
        coarse_grid: PeriodicGrid<T>,
        coarse_window: TimeWindow<T>,
        kh: usize,
        ktau: usize,
        params: SchemeParams<T>,
    ) -> Result<Self> {
        let cfg = Self {
            kh,
            ktau,
            coarse_grid,
            coarse_window,
            params,
            mean: MeanControl::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kh == 0 || self.ktau == 0 {
            return Err(Error::InvalidParameter(format!(
                "step ratios must be >= 1, got kh = {}, ktau = {}",
                self.kh, self.ktau
            )));
        }
        self.params.validate()
    }

    pub fn fine_grid(&self) -> Result<PeriodicGrid<T>> {
        self.coarse_grid.refine(self.kh)
    }

    pub fn fine_window(&self) -> Result<TimeWindow<T>> {
        TimeWindow::new(self.coarse_window.t_final(), self.coarse_window.steps() * self.ktau)
    }
}

/// Coarse `u` at levels `0..=N^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseTrajectory<T> {
    pub levels: Vec<Field2D<T>>,
}

/// Coarse-grid field at fine time level `n`: the coarse level itself when
/// `ktau` divides `n`, else the linear interpolant of its two neighbours.
pub fn time_level<T: Real>(coarse: &CoarseTrajectory<T>, ktau: usize, n: usize) -> Field2D<T> {
    let (r, s) = (n / ktau, n % ktau);
    if s == 0 {
        return coarse.levels[r].clone();
    }
    let theta = T::from_usize_lossy(s) / T::from_usize_lossy(ktau);
    coarse.levels[r].zip_map(&coarse.levels[r + 1], |a, b| (T::one() - theta) * a + theta * b)
}

/// Linear-in-time prolongation to all `N^c * ktau + 1` fine levels.
pub fn prolong_time<T: Real>(coarse: &CoarseTrajectory<T>, ktau: usize) -> Result<Vec<Field2D<T>>> {
    if ktau == 0 {
        return Err(Error::InvalidParameter("ktau must be >= 1".into()));
    }
    if coarse.levels.is_empty() {
        return Err(Error::Empty("coarse trajectory"));
    }
    let nf = (coarse.levels.len() - 1) * ktau;
    Ok((0..=nf).map(|n| time_level(coarse, ktau, n)).collect())
}

/// Cubic Lagrange weights for the fine offsets `l = 0..kh` inside one coarse
/// cell, on the stencil of coarse nodes `p, p+1, p+2, p+3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicWeights<T> {
    rows: Vec<[T; 4]>,
}

impl<T: Real> CubicWeights<T> {
    pub fn new(kh: usize) -> Self {
        let rows = (0..kh)
            .map(|l| {
                if l == 0 {
                    return [T::one(), T::zero(), T::zero(), T::zero()];
                }
                let xi = T::from_usize_lossy(l) / T::from_usize_lossy(kh);
                let mut w = [T::zero(); 4];
                for (i, wi) in w.iter_mut().enumerate() {
                    let mut prod = T::one();
                    for s in 0..4 {
                        if s != i {
                            let (fs, fi) = (T::from_usize_lossy(s), T::from_usize_lossy(i));
                            prod = prod * (xi - fs) / (fi - fs);
                        }
                    }
                    *wi = prod;
                }
                w
            })
            .collect();
        Self { rows }
    }

    /// Weights for fine offset `l`.
    pub fn row(&self, l: usize) -> &[T; 4] {
        &self.rows[l]
    }

    pub fn ratio(&self) -> usize {
        self.rows.len()
    }
}

/// Cubic Lagrange prolongation of a coarse field onto the grid refined by `kh`.
///
/// Fine nodes that coincide with coarse nodes copy the coarse value; every
/// other node is interpolated from the coarse nodes `p..p+3` (and `q..q+3`),
/// `p`, `q` being the coarse cell it lies in, with periodic wrap.
pub fn prolong_space<T: Real>(coarse: &Field2D<T>, kh: usize) -> Result<Field2D<T>> {
    let weights = CubicWeights::new(kh.max(1));
    prolong_space_with(coarse, &weights)
}

pub fn prolong_space_with<T: Real>(coarse: &Field2D<T>, weights: &CubicWeights<T>) -> Result<Field2D<T>> {
    let kh = weights.ratio();
    if kh == 0 {
        return Err(Error::InvalidParameter("kh must be >= 1".into()));
    }
    let cg = *coarse.grid();
    let fg = cg.refine(kh)?;
    if kh == 1 {
        return Ok(coarse.clone());
    }
    let (m1c, m2c) = (cg.m1(), cg.m2());
    let (m1f, m2f) = (fg.m1(), fg.m2());
    let c = coarse.values();

    // x pass: (M1f x M2c)
    let mut tmp = vec![T::zero(); m1f * m2c];
    for p in 0..m1c {
        for l in 0..kh {
            let row = &mut tmp[(p * kh + l) * m2c..][..m2c];
            if l == 0 {
                row.copy_from_slice(&c[p * m2c..][..m2c]);
                continue;
            }
            let w = weights.row(l);
            for (i, &wi) in w.iter().enumerate() {
                let src = &c[((p + i) % m1c) * m2c..][..m2c];
                for q in 0..m2c {
                    row[q] = row[q] + wi * src[q];
                }
            }
        }
    }

    // y pass: (M1f x M2f)
    let mut out = vec![T::zero(); m1f * m2f];
    for i in 0..m1f {
        let src = &tmp[i * m2c..][..m2c];
        let dst = &mut out[i * m2f..][..m2f];
        for q in 0..m2c {
            dst[q * kh] = src[q];
            for m in 1..kh {
                let w = weights.row(m);
                let mut s = T::zero();
                for (j, &wj) in w.iter().enumerate() {
                    s = s + wj * src[(q + j) % m2c];
                }
                dst[q * kh + m] = s;
            }
        }
    }
    Ok(Field2D::from_raw(fg, out))
}

/// Prolonged background `(u_f, v_f, w_f)` at one fine level.
#[derive(Debug, Clone, PartialEq)]
pub struct Background<T> {
    pub u: Field2D<T>,
    pub v: Field2D<T>,
    pub w: Field2D<T>,
}

/// Compact `(v_f, w_f)` of a fine-grid field.
pub fn reconstruct_vw<T: Real>(u_f: &Field2D<T>) -> (Field2D<T>, Field2D<T>) {
    let pair = CompactPair::new(*u_f.grid());
    (pair.aux_v(u_f), pair.aux_w(u_f))
}

/// Linear system of one correction step for `z = u^n`:
///
/// ```text
/// z/tau + 1/2 psi_h(ub, z) - h^2/4 [psi_x(vb, z) + psi_y(wb, z)] - lambda/2 (Kx z + Ky z) = rhs
/// ```
///
/// with `ub`, `vb`, `wb` the half-level means of the prolonged background.
pub struct CorrectionOperator<'a, T: Real> {
    pair: &'a CompactPair<T>,
    precond: Option<&'a DiffusionPreconditioner<T>>,
    ub: Field2D<T>,
    vb: Field2D<T>,
    wb: Field2D<T>,
    tau: T,
    lambda: T,
}

impl<'a, T: Real> CorrectionOperator<'a, T> {
    pub fn new(
        pair: &'a CompactPair<T>,
        precond: Option<&'a DiffusionPreconditioner<T>>,
        bg_prev: &Background<T>,
        bg_cur: &Background<T>,
        tau: T,
        lambda: T,
    ) -> Result<Self> {
        Ok(Self {
            pair,
            precond,
            ub: bg_prev.u.midpoint(&bg_cur.u)?,
            vb: bg_prev.v.midpoint(&bg_cur.v)?,
            wb: bg_prev.w.midpoint(&bg_cur.w)?,
            tau,
            lambda,
        })
    }

    pub fn rhs(&self, prev: &SolverState<T>, source: Option<&Field2D<T>>) -> Field2D<T> {
        let h = self.pair.grid().h();
        let half = T::lit(0.5);
        let c = h * h / T::lit(4.0);
        let mut out = &prev.u * (T::one() / self.tau);
        psi_h_acc(&mut out, &self.ub, &prev.u, -half);
        psi_x_acc(&mut out, &self.vb, &prev.u, c);
        psi_y_acc(&mut out, &self.wb, &prev.u, c);
        out.axpy(half * self.lambda, &prev.v);
        out.axpy(half * self.lambda, &prev.w);
        if let Some(f) = source {
            out.axpy(T::one(), f);
        }
        out
    }
}

impl<T: Real> LinearOperator<T> for CorrectionOperator<'_, T> {
    fn grid(&self) -> &PeriodicGrid<T> {
        self.pair.grid()
    }

    fn apply(&self, z: &Field2D<T>) -> Field2D<T> {
        let h = self.pair.grid().h();
        let half = T::lit(0.5);
        let c = -(h * h) / T::lit(4.0);
        let vz = self.pair.aux_v(z);
        let wz = self.pair.aux_w(z);
        let mut out = z * (T::one() / self.tau);
        psi_h_acc(&mut out, &self.ub, z, half);
        psi_x_acc(&mut out, &self.vb, z, c);
        psi_y_acc(&mut out, &self.wb, z, c);
        out.axpy(-half * self.lambda, &vz);
        out.axpy(-half * self.lambda, &wz);
        out
    }

    fn preconditioner(&self) -> Option<&dyn Preconditioner<T>> {
        self.precond.map(|p| p as &dyn Preconditioner<T>)
    }
}

/// Reusable per-march data for the fine correction.
pub struct CorrectionStepper<T: Real> {
    pair: CompactPair<T>,
    precond: DiffusionPreconditioner<T>,
    tau: T,
    params: SchemeParams<T>,
    mean: MeanControl,
}

impl<T: Real> CorrectionStepper<T> {
    pub fn new(grid: PeriodicGrid<T>, tau: T, params: SchemeParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            pair: CompactPair::new(grid),
            precond: DiffusionPreconditioner::new(grid, T::one() / tau, params.lambda * T::lit(0.5)),
            tau,
            params,
            mean: MeanControl::default(),
        })
    }

    pub fn with_mean(mut self, mean: MeanControl) -> Self {
        self.mean = mean;
        self
    }

    pub fn pair(&self) -> &CompactPair<T> {
        &self.pair
    }

    pub fn background(&self, u: Field2D<T>) -> Background<T> {
        let v = self.pair.aux_v(&u);
        let w = self.pair.aux_w(&u);
        Background { u, v, w }
    }

    /// Advances `prev` by one step; returns the new state and the number of
    /// Krylov iterations spent.
    pub fn step(
        &self,
        prev: &SolverState<T>,
        bg_prev: &Background<T>,
        bg_cur: &Background<T>,
        source: Option<&Field2D<T>>,
    ) -> Result<(SolverState<T>, usize)> {
        let precond = self.params.linear.precondition.then_some(&self.precond);
        let op = CorrectionOperator::new(&self.pair, precond, bg_prev, bg_cur, self.tau, self.params.lambda)?;
        let rhs = op.rhs(prev, source);
        let mut sol = solve_iterative(&op, &rhs, &self.params.linear, Some(&prev.u))?;
        if self.mean == MeanControl::Conserve {
            let target = mean(&prev.u) + source.map_or(T::zero(), |f| self.tau * mean(f));
            let shift = target - mean(&sol.x);
            sol.x = sol.x.map(|v| v + shift);
        }
        let state = SolverState::from_u(&self.pair, sol.x, prev.t + self.tau, prev.step_index + 1);
        Ok((state, sol.iterations))
    }
}

fn mean<T: Real>(f: &Field2D<T>) -> T {
    let sum = f.values().iter().fold(T::zero(), |a, &b| a + b);
    sum / T::from_usize_lossy(f.values().len())
}

/// One correction step with freshly built operators.
pub fn correction_step<T: Real>(
    prev: &SolverState<T>,
    bg_prev: &Background<T>,
    bg_cur: &Background<T>,
    tau: T,
    params: &SchemeParams<T>,
    source: Option<&Field2D<T>>,
) -> Result<SolverState<T>> {
    let stepper = CorrectionStepper::new(*prev.u.grid(), tau, *params)?;
    Ok(stepper.step(prev, bg_prev, bg_cur, source)?.0)
}

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub coarse_solve: f64,
    pub prolongation: f64,
    pub correction: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.coarse_solve + self.prolongation + self.correction
    }
}

#[derive(Debug, Clone)]
pub struct TgcdRun<T> {
    /// Fine `u` at levels `0..=N^f` when recording all levels, otherwise empty.
    pub levels: Vec<Field2D<T>>,
    pub final_state: SolverState<T>,
    pub coarse_report: MarchReport,
    pub correction_linear_iterations: usize,
    pub timings: StageTimings,
}

fn stage<T>(n: u8, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: n,
        source: Box::new(e),
    })
}

/// Stage 1 alone: the coarse nonlinear march.
pub fn coarse_stage<T: Real>(problem: &Problem<T>, config: &TwoGridConfig<T>) -> Result<(CoarseTrajectory<T>, MarchReport)> {
    let u0 = problem.sample(&config.coarse_grid, Sampled::Initial)?;
    let source = problem.source_term();
    let run = ncd_solve(u0, &config.coarse_window, &config.params, source.as_ref(), Record::AllLevels)?;
    Ok((CoarseTrajectory { levels: run.levels }, run.report))
}

/// Stage 2 at one fine level: `u_f` before derivative reconstruction.
pub fn background_level<T: Real>(
    coarse: &CoarseTrajectory<T>,
    weights: &CubicWeights<T>,
    ktau: usize,
    n: usize,
) -> Result<Field2D<T>> {
    prolong_space_with(&time_level(coarse, ktau, n), weights)
}

/// Runs all three stages.
pub fn tgcd_solve<T: Real>(problem: &Problem<T>, config: &TwoGridConfig<T>, record: Record) -> Result<TgcdRun<T>> {
    config.validate()?;
    let fine_grid = config.fine_grid()?;
    let fine_window = config.fine_window()?;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let (coarse, coarse_report) = stage(1, coarse_stage(problem, config))?;
    timings.coarse_solve = clock.elapsed().as_secs_f64();

    let stepper = stage(3, CorrectionStepper::new(fine_grid, fine_window.tau(), config.params))?.with_mean(config.mean);
    let weights = CubicWeights::new(config.kh);
    let source = problem.source_term();

    let u0 = stage(3, problem.sample(&fine_grid, Sampled::Initial))?;
    let mut state = SolverState::from_u(stepper.pair(), u0, T::zero(), 0);
    let mut levels = Vec::new();
    if record == Record::AllLevels {
        levels.push(state.u.clone());
    }

    let clock = Instant::now();
    let mut bg_prev = stepper.background(stage(2, background_level(&coarse, &weights, config.ktau, 0))?);
    timings.prolongation += clock.elapsed().as_secs_f64();

    let mut iterations = 0;
    for n in 1..=fine_window.steps() {
        let clock = Instant::now();
        let bg_cur = stepper.background(stage(2, background_level(&coarse, &weights, config.ktau, n))?);
        timings.prolongation += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let f = source
            .as_ref()
            .map(|s| s.step_sample(&fine_grid, &fine_window, n, config.params.source_rule));
        let (next, its) = stage(3, stepper.step(&state, &bg_prev, &bg_cur, f.as_ref()))?;
        iterations += its;
        state = next;
        state.t = fine_window.time(n);
        if record == Record::AllLevels {
            levels.push(state.u.clone());
        }
        bg_prev = bg_cur;
        timings.correction += clock.elapsed().as_secs_f64();
    }

    Ok(TgcdRun {
        levels,
        final_state: state,
        coarse_report,
        correction_linear_iterations: iterations,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_grid;
    use crate::problems::example1;

    fn traj(g: PeriodicGrid<f64>, n: usize) -> CoarseTrajectory<f64> {
        CoarseTrajectory {
            levels: (0..=n)
                .map(|r| Field2D::from_index_fn(g, |i, j| (i + 2 * j) as f64 + 0.5 * r as f64))
                .collect(),
        }
    }

    #[test]
    fn prolong_time_identity_and_midpoints() {
        let g = make_grid(1.0, 1.0, 4, 4).unwrap();
        let c = traj(g, 3);
        assert_eq!(prolong_time(&c, 1).unwrap(), c.levels);
        let f = prolong_time(&c, 2).unwrap();
        assert_eq!(f.len(), 7);
        assert_eq!(f[2], c.levels[1]);
        assert_eq!(f[3], c.levels[1].midpoint(&c.levels[2]).unwrap());
    }

    #[test]
    fn weights_partition_unity_and_bounded() {
        for kh in 1..6 {
            let w = CubicWeights::<f64>::new(kh);
            for l in 0..kh {
                let s: f64 = w.row(l).iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                if l > 0 {
                    assert!(w.row(l).iter().all(|x| x.abs() < 1.1));
                }
            }
        }
    }

    #[test]
    fn prolong_space_identity_constant_and_nodes() {
        let g = make_grid(2.0, 1.0, 8, 4).unwrap();
        let c = Field2D::from_index_fn(g, |i, j| (i * i) as f64 - j as f64);
        assert_eq!(prolong_space(&c, 1).unwrap(), c);
        let k = Field2D::constant(g, 2.5);
        let f = prolong_space(&k, 3).unwrap();
        assert!(f.values().iter().all(|&v| (v - 2.5).abs() < 1e-14));
        let f = prolong_space(&c, 3).unwrap();
        assert_eq!(f.grid().m1(), 24);
        for p in 0..8 {
            for q in 0..4 {
                assert_eq!(f.at(3 * p, 3 * q).to_bits(), c.at(p, q).to_bits());
            }
        }
    }

    #[test]
    fn correction_homogeneous_stays_zero() {
        let g = make_grid(1.0, 1.0, 8, 8).unwrap();
        let params = SchemeParams::new(1.0);
        let stepper = CorrectionStepper::new(g, 0.1, params).unwrap();
        let zero = stepper.background(Field2D::zeros(g));
        let prev = SolverState::from_u(stepper.pair(), Field2D::zeros(g), 0.0, 0);
        let (next, _) = stepper.step(&prev, &zero, &zero, None).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
    }

    #[test]
    fn zero_problem_stays_zero() {
        let mut p = example1(1.0);
        p.initial = std::sync::Arc::new(|_, _| 0.0);
        p.source = None;
        let cg = p.grid(4).unwrap();
        let cfg = TwoGridConfig::new(cg, TimeWindow::new(1.0, 4).unwrap(), 2, 2, SchemeParams::new(1.0)).unwrap();
        let run = tgcd_solve(&p, &cfg, Record::AllLevels).unwrap();
        assert_eq!(run.levels.len(), 9);
        assert!(run.levels.iter().all(|l| l.max_abs() == 0.0));
    }

    #[test]
    fn config_rejects_zero_ratio() {
        let g = make_grid(1.0, 1.0, 4, 4).unwrap();
        let w = TimeWindow::new(1.0, 4).unwrap();
        assert!(TwoGridConfig::new(g, w, 0, 1, SchemeParams::new(1.0)).is_err());
    }
}
