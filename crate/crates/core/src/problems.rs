//! Benchmark problems on periodic rectangles.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Field2D, PeriodicGrid, TimeWindow};
use crate::scalar::Real;

pub type SpaceFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
pub type SpaceTimeFn<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;

/// Forcing `f(x, y, t)` together with the physical coordinates of node `(0, 0)`.
#[derive(Clone)]
pub struct SourceTerm<T> {
    f: SpaceTimeFn<T>,
    x0: T,
    y0: T,
}

impl<T: Real> SourceTerm<T> {
    pub fn new(f: SpaceTimeFn<T>, x0: T, y0: T) -> Self {
        Self { f, x0, y0 }
    }

    pub fn sample(&self, grid: &PeriodicGrid<T>, t: T) -> Field2D<T> {
        Field2D::sample(*grid, self.x0, self.y0, |x, y| (self.f)(x, y, t))
    }

    /// Forcing of the step `t_{n-1} -> t_n` under `rule`.
    pub fn step_sample(&self, grid: &PeriodicGrid<T>, window: &TimeWindow<T>, n: usize, rule: SourceRule) -> Field2D<T> {
        match rule {
            SourceRule::Midpoint => self.sample(grid, window.midpoint(n)),
            SourceRule::Trapezoid => {
                let (a, b) = (window.time(n - 1), window.time(n));
                let half = T::lit(0.5);
                Field2D::sample(*grid, self.x0, self.y0, |x, y| half * ((self.f)(x, y, a) + (self.f)(x, y, b)))
            }
        }
    }
}

/// Time quadrature of the forcing over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceRule {
    /// `f(t_{n-1/2})`.
    Midpoint,
    /// `(f(t_{n-1}) + f(t_n)) / 2`, the same half-level mean the scheme
    /// applies to `u`, `v` and `w`.
    #[default]
    Trapezoid,
}

impl<T> fmt::Debug for SourceTerm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SourceTerm(..)")
    }
}

/// What to sample from a [`Problem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampled<T> {
    Initial,
    Exact(T),
    Source(T),
}

/// Sub-rectangle `(x0, x0 + lx] x (y0, y0 + ly]` of the periodic cell on
/// which errors are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorWindow<T> {
    pub lx: T,
    pub ly: T,
}

/// Periodic initial-value problem on `[x0, x0 + L1) x [y0, y0 + L2)`.
#[derive(Clone)]
pub struct Problem<T> {
    pub name: String,
    pub x0: T,
    pub y0: T,
    pub l1: T,
    pub l2: T,
    pub t_final: T,
    /// Viscosity the problem is posed with (the source may depend on it).
    pub lambda: T,
    pub initial: SpaceFn<T>,
    pub source: Option<SpaceTimeFn<T>>,
    pub exact: Option<SpaceTimeFn<T>>,
    /// Errors are measured over the whole cell when absent.
    pub error_window: Option<ErrorWindow<T>>,
}

impl<T> fmt::Debug for Problem<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("domain", &((&self.x0, &self.l1), (&self.y0, &self.l2)))
            .field("t_final", &self.t_final)
            .field("lambda", &self.lambda)
            .field("source", &self.source.is_some())
            .field("exact", &self.exact.is_some())
            .field("error_window", &self.error_window)
            .finish()
    }
}

impl<T: Real> Problem<T> {
    /// Grid with `m1` cells in x and the matching count in y.
    pub fn grid(&self, m1: usize) -> Result<PeriodicGrid<T>> {
        let ratio = self.l2 / self.l1 * T::from_usize_lossy(m1);
        let m2 = ratio.round();
        if (ratio - m2).abs() > T::lit(1e-9) * ratio || m2 < T::one() {
            return Err(Error::InvalidGrid(format!(
                "{} cells in x do not give square cells on a {} x {} domain",
                m1, self.l1, self.l2
            )));
        }
        PeriodicGrid::new(self.l1, self.l2, m1, num_traits::ToPrimitive::to_usize(&m2).unwrap_or(0))
    }

    /// Node counts `(n1, n2)` of the error window on `grid`; the window
    /// covers node indices `1..=n1` by `1..=n2`.
    pub fn window_nodes(&self, grid: &PeriodicGrid<T>) -> Result<Option<(usize, usize)>> {
        let Some(w) = self.error_window else {
            return Ok(None);
        };
        let count = |len: T, m: usize| -> Result<usize> {
            let r = len / grid.h();
            let n = r.round();
            if (r - n).abs() > T::lit(1e-9) * r || n < T::one() || n > T::from_usize_lossy(m) {
                return Err(Error::InvalidGrid(format!(
                    "error window of length {} is not a whole number of cells of size {}",
                    len,
                    grid.h()
                )));
            }
            Ok(num_traits::ToPrimitive::to_usize(&n).unwrap_or(0))
        };
        Ok(Some((count(w.lx, grid.m1())?, count(w.ly, grid.m2())?)))
    }

    pub fn source_term(&self) -> Option<SourceTerm<T>> {
        self.source.clone().map(|f| SourceTerm::new(f, self.x0, self.y0))
    }

    /// Pointwise samples at the grid nodes, in physical coordinates.
    pub fn sample(&self, grid: &PeriodicGrid<T>, which: Sampled<T>) -> Result<Field2D<T>> {
        let tol = T::lit(1e-12) * self.l1.max(self.l2);
        if (grid.l1() - self.l1).abs() > tol || (grid.l2() - self.l2).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "grid periods {} x {} differ from the problem domain {} x {}",
                grid.l1(),
                grid.l2(),
                self.l1,
                self.l2
            )));
        }
        let (x0, y0) = (self.x0, self.y0);
        Ok(match which {
            Sampled::Initial => Field2D::sample(*grid, x0, y0, |x, y| (self.initial)(x, y)),
            Sampled::Exact(t) => {
                let f = self.exact.as_ref().ok_or(Error::MissingFunction("exact"))?;
                Field2D::sample(*grid, x0, y0, |x, y| f(x, y, t))
            }
            Sampled::Source(t) => {
                let f = self.source.as_ref().ok_or(Error::MissingFunction("source"))?;
                Field2D::sample(*grid, x0, y0, |x, y| f(x, y, t))
            }
        })
    }
}

/// Free-function form of [`Problem::sample`].
pub fn sample<T: Real>(problem: &Problem<T>, grid: &PeriodicGrid<T>, which: Sampled<T>) -> Result<Field2D<T>> {
    problem.sample(grid, which)
}

/// Manufactured solution `u = e^{-t} sin(pi x) sin(pi y)` on `[0, 2]^2 x [0, 1]`.
///
/// The forcing is chosen so that `u` solves the equation exactly:
/// `f = u [-1 + pi e^{-t} sin(pi (x + y)) + 2 lambda pi^2]`.
pub fn example1<T: Real>(lambda: T) -> Problem<T> {
    let pi = T::PI();
    let two = T::lit(2.0);
    Problem {
        name: "example1".into(),
        x0: T::zero(),
        y0: T::zero(),
        l1: two,
        l2: two,
        t_final: T::one(),
        lambda,
        initial: Arc::new(move |x: T, y: T| (pi * x).sin() * (pi * y).sin()),
        source: Some(Arc::new(move |x: T, y: T, t: T| {
            let decay = (-t).exp();
            let u = decay * (pi * x).sin() * (pi * y).sin();
            u * (-T::one() + pi * decay * (pi * (x + y)).sin() + two * lambda * pi * pi)
        })),
        exact: Some(Arc::new(move |x: T, y: T, t: T| (-t).exp() * (pi * x).sin() * (pi * y).sin())),
        error_window: None,
    }
}

/// `u0 = sin(pi x) cos(pi y)`, `T = 1`, no forcing, no closed-form solution.
///
/// The data has period 2 in each direction, so the solver runs on the
/// periodic cell `[0, 2] x [1/2, 5/2]` while errors are measured on the
/// unit square `[0, 1] x [1/2, 3/2]`. A unit period would cut `u0` at a
/// kink and the high modes it excites are left undamped by Crank-Nicolson.
pub fn example2<T: Real>(lambda: T) -> Problem<T> {
    let pi = T::PI();
    let two = T::lit(2.0);
    Problem {
        name: "example2".into(),
        x0: T::zero(),
        y0: T::lit(0.5),
        l1: two,
        l2: two,
        t_final: T::one(),
        lambda,
        initial: Arc::new(move |x: T, y: T| (pi * x).sin() * (pi * y).cos()),
        source: None,
        exact: None,
        error_window: Some(ErrorWindow {
            lx: T::one(),
            ly: T::one(),
        }),
    }
}

/// Looks up a bundled problem by name.
pub fn by_name<T: Real>(name: &str, lambda: T) -> Option<Problem<T>> {
    match name {
        "example1" => Some(example1(lambda)),
        "example2" => Some(example2(lambda)),
        _ => None,
    }
}
