//! Periodic tensor grids, grid functions and the discrete inner products.
//!
//! A [`Field2D`] stores one period of a doubly periodic mesh function in a
//! dense row-major `M1 x M2` array: entry `(i, j)` is the value at
//! `(x_i, y_j) = (i h, j h)`, `i` in `[0, M1)`, `j` in `[0, M2)`. The node at
//! `x = L1` is identified with `i = 0`. Any integer index pair is reachable
//! through [`Field2D::wrapped`].

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest admissible cell count per direction (the cubic prolongation
/// stencil spans four coarse nodes).
pub const MIN_CELLS: usize = 4;

/// Uniform square-spaced periodic mesh on `[0, L1) x [0, L2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid<T> {
    l1: T,
    l2: T,
    m1: usize,
    m2: usize,
    h: T,
}

impl<T: Real> PeriodicGrid<T> {
    /// Builds a grid with `h = L1 / M1`, requiring `L2 / M2` to agree with it.
    pub fn new(l1: T, l2: T, m1: usize, m2: usize) -> Result<Self> {
        if m1 < MIN_CELLS || m2 < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per direction, got {m1}x{m2}"
            )));
        }
        if !(l1 > T::zero() && l2 > T::zero()) || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::InvalidGrid(format!("periods must be positive, got {l1} x {l2}")));
        }
        let h = l1 / T::from_usize_lossy(m1);
        let hy = l2 / T::from_usize_lossy(m2);
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
        if ((h - hy) / h).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "spacing mismatch: {h} in x vs {hy} in y"
            )));
        }
        Ok(Self { l1, l2, m1, m2, h })
    }

    pub fn l1(&self) -> T {
        self.l1
    }

    pub fn l2(&self) -> T {
        self.l2
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid with every direction refined by `k` (same periods).
    pub fn refine(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("refinement ratio must be >= 1".into()));
        }
        Self::new(self.l1, self.l2, self.m1 * k, self.m2 * k)
    }

    pub fn describe(&self) -> String {
        format!("{}x{} (h = {:e})", self.m1, self.m2, self.h)
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.m1 == other.m1 && self.m2 == other.m2 && self.l1 == other.l1 && self.l2 == other.l2 {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }
}

/// Convenience wrapper matching [`PeriodicGrid::new`].
pub fn make_grid<T: Real>(l1: T, l2: T, m1: usize, m2: usize) -> Result<PeriodicGrid<T>> {
    PeriodicGrid::new(l1, l2, m1, m2)
}

/// Uniform time mesh `t_n = n tau`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow<T> {
    t_final: T,
    steps: usize,
    tau: T,
}

impl<T: Real> TimeWindow<T> {
    pub fn new(t_final: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidWindow("need at least one time step".into()));
        }
        if !(t_final > T::zero()) || !t_final.is_finite() {
            return Err(Error::InvalidWindow(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self {
            t_final,
            steps,
            tau: t_final / T::from_usize_lossy(steps),
        })
    }

    pub fn t_final(&self) -> T {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Time of level `n`.
    pub fn time(&self, n: usize) -> T {
        T::from_usize_lossy(n) * self.tau
    }

    /// Midpoint time `t_{n - 1/2}` of step `n >= 1`.
    pub fn midpoint(&self, n: usize) -> T {
        (T::from_usize_lossy(n) - T::lit(0.5)) * self.tau
    }
}

/// Periodic scalar grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D<T> {
    grid: PeriodicGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Field2D<T> {
    pub fn zeros(grid: PeriodicGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: PeriodicGrid<T>, c: T) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid,
        }
    }

    /// Wraps a row-major value array; rejects wrong lengths and non-finite entries.
    pub fn from_values(grid: PeriodicGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for grid {}, got {}",
                grid.len(),
                grid.describe(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Self { grid, values })
    }

    /// Fills entry `(i, j)` with `f(i, j)`.
    pub fn from_index_fn(grid: PeriodicGrid<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.m1 {
            for j in 0..grid.m2 {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    /// Samples `f(x_i, y_j)` at the nodes, with `x_i = x0 + i h`, `y_j = y0 + j h`.
    pub fn sample(grid: PeriodicGrid<T>, x0: T, y0: T, mut f: impl FnMut(T, T) -> T) -> Self {
        let h = grid.h;
        Self::from_index_fn(grid, |i, j| {
            f(x0 + T::from_usize_lossy(i) * h, y0 + T::from_usize_lossy(j) * h)
        })
    }

    pub(crate) fn from_raw(grid: PeriodicGrid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.grid.m2 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let m2 = self.grid.m2;
        self.values[i * m2 + j] = value;
    }

    /// Value at an arbitrary integer index pair, reduced modulo the period.
    #[inline]
    pub fn wrapped(&self, i: isize, j: isize) -> T {
        let a = i.rem_euclid(self.grid.m1 as isize) as usize;
        let b = j.rem_euclid(self.grid.m2 as isize) as usize;
        self.at(a, b)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest pointwise difference `max |self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(self.zip_map(other, |x, y| a * x + b * y))
    }

    /// Arithmetic mean `(self + other) / 2`, the half-level value.
    pub fn midpoint(&self, other: &Self) -> Result<Self> {
        let half = T::lit(0.5);
        self.lin_comb(half, other, half)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) {
        debug_assert_eq!(self.values.len(), x.values.len());
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s = *s + a * v;
        }
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.values {
            *v = *v * a;
        }
    }
}

impl<T: Real> Add for &Field2D<T> {
    type Output = Field2D<T>;
    fn add(self, rhs: Self) -> Field2D<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in field addition");
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Field2D<T> {
    type Output = Field2D<T>;
    fn sub(self, rhs: Self) -> Field2D<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in field subtraction");
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul<T> for &Field2D<T> {
    type Output = Field2D<T>;
    fn mul(self, rhs: T) -> Field2D<T> {
        self.map(|a| a * rhs)
    }
}

impl<T: Real> Neg for &Field2D<T> {
    type Output = Field2D<T>;
    fn neg(self) -> Field2D<T> {
        self.map(|a| -a)
    }
}

/// Discrete inner product `h^2 sum u_ab v_ab`.
pub fn inner<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> Result<T> {
    u.grid.check_same(&v.grid)?;
    Ok(inner_unchecked(u, v))
}

pub(crate) fn inner_unchecked<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> T {
    let h = u.grid.h;
    let s = u
        .values
        .iter()
        .zip(&v.values)
        .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    h * h * s
}

/// Discrete L2 norm `sqrt(<v, v>)`.
pub fn l2_norm<T: Real>(v: &Field2D<T>) -> T {
    inner_unchecked(v, v).sqrt()
}

/// Forward-difference inner products `((dx u, dx v), (dy u, dy v))` over one
/// period, where `dx u` lives on the half nodes `a - 1/2`.
pub fn difference_inner<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> Result<(T, T)> {
    u.grid.check_same(&v.grid)?;
    let g = u.grid;
    let (m1, m2) = (g.m1, g.m2);
    let mut sx = T::zero();
    let mut sy = T::zero();
    for i in 0..m1 {
        let im = if i == 0 { m1 - 1 } else { i - 1 };
        for j in 0..m2 {
            let jm = if j == 0 { m2 - 1 } else { j - 1 };
            let dxu = u.at(i, j) - u.at(im, j);
            let dxv = v.at(i, j) - v.at(im, j);
            let dyu = u.at(i, j) - u.at(i, jm);
            let dyv = v.at(i, j) - v.at(i, jm);
            sx = sx + dxu * dxv;
            sy = sy + dyu * dyv;
        }
    }
    // h^2 * (1/h)^2 cancels.
    Ok((sx, sy))
}

/// `(||dx v||, ||dy v||)`.
pub fn difference_norms<T: Real>(v: &Field2D<T>) -> (T, T) {
    let (sx, sy) = difference_inner(v, v).expect("same grid");
    (sx.sqrt(), sy.sqrt())
}

/// Discrete H1 seminorm `sqrt(||dx v||^2 + ||dy v||^2)`.
pub fn h1_seminorm<T: Real>(v: &Field2D<T>) -> T {
    let (sx, sy) = difference_inner(v, v).expect("same grid");
    (sx + sy).sqrt()
}
