//! Linear solves for the per-step systems of the schemes.
//!
//! [`solve_iterative`] is the production path: restarted GMRES working
//! matrix-free on [`Field2D`] vectors, optionally preconditioned by the exact
//! inverse of the constant-coefficient diffusion part. [`solve_dense`]
//! assembles the operator column by column and eliminates with partial
//! pivoting; it is meant for tests and tiny grids.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::mesh::{Field2D, PeriodicGrid};
use crate::scalar::Real;

/// Unknown count above which [`solve_dense`] refuses to assemble.
pub const DENSE_LIMIT: usize = 4096;

/// A linear map on grid functions of one grid.
pub trait LinearOperator<T: Real> {
    fn grid(&self) -> &PeriodicGrid<T>;

    fn apply(&self, x: &Field2D<T>) -> Field2D<T>;

    /// Approximate inverse used for right preconditioning, if any.
    fn preconditioner(&self) -> Option<&dyn Preconditioner<T>> {
        None
    }
}

pub trait Preconditioner<T: Real> {
    fn apply_inverse(&self, r: &Field2D<T>) -> Field2D<T>;
}

/// Operator defined by a closure.
pub struct FnOperator<T, F> {
    grid: PeriodicGrid<T>,
    f: F,
}

impl<T: Real, F: Fn(&Field2D<T>) -> Field2D<T>> FnOperator<T, F> {
    pub fn new(grid: PeriodicGrid<T>, f: F) -> Self {
        Self { grid, f }
    }
}

impl<T: Real, F: Fn(&Field2D<T>) -> Field2D<T>> LinearOperator<T> for FnOperator<T, F> {
    fn grid(&self) -> &PeriodicGrid<T> {
        &self.grid
    }

    fn apply(&self, x: &Field2D<T>) -> Field2D<T> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings<T> {
    /// Target for `||op(x) - rhs|| / ||rhs||`.
    pub rel_tol: T,
    /// Cap on operator applications; `None` means `10 * M1 * M2`.
    pub max_iters: Option<usize>,
    /// Krylov subspace dimension before restart.
    pub restart: usize,
    /// Use the operator's preconditioner when it offers one.
    pub precondition: bool,
}

impl<T: Real> Default for SolveSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-12),
            max_iters: None,
            restart: 50,
            precondition: true,
        }
    }
}

impl<T: Real> SolveSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero() && self.rel_tol <= T::lit(1e-6)) {
            return Err(Error::InvalidParameter(format!(
                "linear rel_tol must lie in (0, 1e-6], got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidParameter("linear max_iters must be >= 1".into()));
        }
        if self.restart == 0 {
            return Err(Error::InvalidParameter("restart length must be >= 1".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, grid: &PeriodicGrid<T>) -> usize {
        self.max_iters.unwrap_or(10 * grid.len())
    }
}

#[derive(Debug, Clone)]
pub struct IterativeSolution<T> {
    pub x: Field2D<T>,
    /// Operator applications spent.
    pub iterations: usize,
    /// Final `||op(x) - rhs|| / ||rhs||`.
    pub residual: T,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

fn residual<T: Real, O: LinearOperator<T> + ?Sized>(op: &O, rhs: &Field2D<T>, x: &Field2D<T>) -> Vec<T> {
    let ax = op.apply(x);
    rhs.values().iter().zip(ax.values()).map(|(&b, &a)| b - a).collect()
}

/// Restarted GMRES with right preconditioning, so the minimised quantity is
/// the true residual. Returns once `||op(x) - rhs|| <= rel_tol * ||rhs||`
/// holds for the recomputed residual.
pub fn solve_iterative<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    rhs: &Field2D<T>,
    settings: &SolveSettings<T>,
    guess: Option<&Field2D<T>>,
) -> Result<IterativeSolution<T>> {
    settings.validate()?;
    let grid = *op.grid();
    grid.check_same(rhs.grid())?;
    if let Some(g) = guess {
        grid.check_same(g.grid())?;
    }
    let n = grid.len();
    let cap = settings.iteration_cap(&grid);
    let precond = if settings.precondition { op.preconditioner() } else { None };

    let bnorm = norm(rhs.values());
    if bnorm == T::zero() {
        return Ok(IterativeSolution {
            x: Field2D::zeros(grid),
            iterations: 0,
            residual: T::zero(),
        });
    }
    let target = settings.rel_tol * bnorm.max(T::lit(1e-300).max(T::min_positive_value()));

    let mut x = guess.cloned().unwrap_or_else(|| rhs.clone());
    let mut r = residual(op, rhs, &x);
    let mut rnorm = norm(&r);
    let mut total = 0usize;
    let m = settings.restart.min(n);

    while rnorm > target {
        if total >= cap {
            return Err(Error::NotConverged {
                iterations: total,
                residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
        if !rnorm.is_finite() {
            return Err(Error::NonFinite("GMRES residual".into()));
        }

        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Field2D<T>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|&v| v / rnorm).collect());
        let mut hess = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = rnorm;
        let mut k_used = 0;

        for k in 0..m {
            let vk = Field2D::from_raw(grid, basis[k].clone());
            let z = match precond {
                Some(p) => p.apply_inverse(&vk),
                None => vk,
            };
            let mut w = op.apply(&z).into_values();
            zs.push(z);
            total += 1;

            // Modified Gram-Schmidt, two passes.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hik = dot(&w, v);
                    hess[i][k] = hess[i][k] + hik;
                    axpy(&mut w, -hik, v);
                }
            }
            let hk1 = norm(&w);
            hess[k + 1][k] = hk1;

            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let (a, b) = (hess[k][k], hess[k + 1][k]);
            let rho = a.hypot(b);
            if rho == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = a / rho;
                sn[k] = b / rho;
            }
            hess[k][k] = rho;
            hess[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;

            let est = g[k + 1].abs();
            if est <= target || hk1 == T::zero() || total >= cap {
                break;
            }
            basis.push(w.iter().map(|&v| v / hk1).collect());
        }

        // Back substitution for the least-squares coefficients.
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s = s - hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] == T::zero() { T::zero() } else { s / hess[i][i] };
        }
        for (yi, z) in y.iter().zip(&zs) {
            x.axpy(*yi, z);
        }

        let prev = rnorm;
        r = residual(op, rhs, &x);
        rnorm = norm(&r);
        if rnorm > target && rnorm >= prev {
            // Stagnation: further cycles cannot make progress.
            return Err(Error::NotConverged {
                iterations: total,
                residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
    }

    if !x.is_finite() {
        return Err(Error::NonFinite("GMRES solution".into()));
    }
    Ok(IterativeSolution {
        x,
        iterations: total,
        residual: rnorm / bnorm,
    })
}

/// Column-major-free dense assembly: entry `(r, c)` at `r * n + c` holds
/// component `r` of `op(e_c)`.
pub fn assemble_dense<T: Real, O: LinearOperator<T> + ?Sized>(op: &O) -> Result<Vec<T>> {
    let grid = *op.grid();
    let n = grid.len();
    if n > DENSE_LIMIT {
        return Err(Error::DenseTooLarge {
            unknowns: n,
            limit: DENSE_LIMIT,
        });
    }
    let mut a = vec![T::zero(); n * n];
    let mut e = Field2D::zeros(grid);
    for c in 0..n {
        e.values_mut()[c] = T::one();
        let col = op.apply(&e);
        e.values_mut()[c] = T::zero();
        for (r, &v) in col.values().iter().enumerate() {
            a[r * n + c] = v;
        }
    }
    Ok(a)
}

/// Direct solve by dense assembly and Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real, O: LinearOperator<T> + ?Sized>(op: &O, rhs: &Field2D<T>) -> Result<Field2D<T>> {
    let grid = *op.grid();
    grid.check_same(rhs.grid())?;
    let n = grid.len();
    let mut a = assemble_dense(op)?;
    let mut b = rhs.values().to_vec();

    let anorm = (0..n)
        .map(|r| a[r * n..(r + 1) * n].iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), T::max);
    let tiny = T::lit(1e-14).max(T::epsilon() * T::lit(50.0)) * anorm;

    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > tiny) {
            return Err(Error::Singular {
                pivot: pval.to_f64_lossy(),
                column: col,
            });
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            a[r * n + col] = T::zero();
            for c in col + 1..n {
                a[r * n + c] = a[r * n + c] - f * a[col * n + c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s = s - a[r * n + c] * b[c];
        }
        b[r] = s / a[r * n + r];
    }
    Field2D::from_values(grid, b)
}

/// Exact inverse of `shift * I - coef * (Kx + Ky)`, where `Kx`, `Ky` are the
/// compact second-derivative operators `(I + h^2/12 d2)^{-1} d2`.
///
/// The operator is circulant in both directions, so it is diagonalised by
/// the two-dimensional discrete Fourier transform.
pub struct DiffusionPreconditioner<T: Real> {
    grid: PeriodicGrid<T>,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    inv_symbol: Vec<T>,
}

/// Symbol of the compact second derivative on mode `p` of a length-`m` line.
pub fn compact_second_symbol<T: Real>(p: usize, m: usize, h: T) -> T {
    let s = (T::PI() * T::from_usize_lossy(p) / T::from_usize_lossy(m)).sin();
    let s2 = s * s;
    -(T::lit(4.0) / (h * h)) * s2 / (T::one() - s2 / T::lit(3.0))
}

impl<T: Real> DiffusionPreconditioner<T> {
    pub fn new(grid: PeriodicGrid<T>, shift: T, coef: T) -> Self {
        let (m1, m2) = (grid.m1(), grid.m2());
        let h = grid.h();
        let mut planner = FftPlanner::new();
        let sx: Vec<T> = (0..m1).map(|p| compact_second_symbol(p, m1, h)).collect();
        let sy: Vec<T> = (0..m2).map(|q| compact_second_symbol(q, m2, h)).collect();
        let norm = T::one() / T::from_usize_lossy(m1 * m2);
        let mut inv_symbol = Vec::with_capacity(m1 * m2);
        for &a in &sx {
            for &b in &sy {
                inv_symbol.push(norm / (shift - coef * (a + b)));
            }
        }
        Self {
            grid,
            row_fwd: planner.plan_fft_forward(m2),
            row_inv: planner.plan_fft_inverse(m2),
            col_fwd: planner.plan_fft_forward(m1),
            col_inv: planner.plan_fft_inverse(m1),
            inv_symbol,
        }
    }

    fn transform_2d(&self, data: &mut [Complex<T>], rows: &dyn Fft<T>, cols: &dyn Fft<T>) {
        let (m1, m2) = (self.grid.m1(), self.grid.m2());
        rows.process(data);
        let mut col = vec![Complex::new(T::zero(), T::zero()); m1];
        for j in 0..m2 {
            for i in 0..m1 {
                col[i] = data[i * m2 + j];
            }
            cols.process(&mut col);
            for i in 0..m1 {
                data[i * m2 + j] = col[i];
            }
        }
    }
}

impl<T: Real> Preconditioner<T> for DiffusionPreconditioner<T> {
    fn apply_inverse(&self, r: &Field2D<T>) -> Field2D<T> {
        let mut data: Vec<Complex<T>> = r.values().iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform_2d(&mut data, &*self.row_fwd, &*self.col_fwd);
        for (c, &s) in data.iter_mut().zip(&self.inv_symbol) {
            *c = *c * s;
        }
        self.transform_2d(&mut data, &*self.row_inv, &*self.col_inv);
        Field2D::from_raw(self.grid, data.into_iter().map(|c| c.re).collect())
    }
}
