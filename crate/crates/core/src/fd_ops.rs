//! Periodic difference operators, the skew-symmetric convection forms and
//! the compact fourth-order second-derivative reconstruction.
//!
//! Every operator acts on one period of a [`Field2D`] with wraparound
//! neighbours. The `*_acc` kernels accumulate `scale * op(..)` into an
//! existing field; the matrix-free scheme operators are assembled from them
//! without temporaries.

use crate::error::Result;
use crate::mesh::{Field2D, PeriodicGrid};
use crate::scalar::Real;

#[inline]
fn prev(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

#[inline]
fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Calls `f(j, jm, jp)` for every column with its periodic neighbours.
#[inline]
fn for_each_col(m2: usize, mut f: impl FnMut(usize, usize, usize)) {
    f(0, m2 - 1, 1);
    for j in 1..m2 - 1 {
        f(j, j - 1, j + 1);
    }
    f(m2 - 1, m2 - 2, 0);
}

/// Central difference in x, `(v[i+1] - v[i-1]) / 2h`.
pub fn central_x<T: Real>(v: &Field2D<T>) -> Field2D<T> {
    let mut out = Field2D::zeros(*v.grid());
    central_x_acc(&mut out, v, T::one());
    out
}

/// Central difference in y.
pub fn central_y<T: Real>(v: &Field2D<T>) -> Field2D<T> {
    let mut out = Field2D::zeros(*v.grid());
    central_y_acc(&mut out, v, T::one());
    out
}

/// `central_x + central_y`.
pub fn hat_h<T: Real>(v: &Field2D<T>) -> Field2D<T> {
    let mut out = Field2D::zeros(*v.grid());
    central_x_acc(&mut out, v, T::one());
    central_y_acc(&mut out, v, T::one());
    out
}

pub fn central_x_acc<T: Real>(out: &mut Field2D<T>, v: &Field2D<T>, scale: T) {
    let g = *v.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = scale / (T::lit(2.0) * g.h());
    let src = v.values();
    let dst = out.values_mut();
    for i in 0..m1 {
        let rp = &src[next(i, m1) * m2..][..m2];
        let rm = &src[prev(i, m1) * m2..][..m2];
        let row = &mut dst[i * m2..][..m2];
        for j in 0..m2 {
            row[j] = row[j] + c * (rp[j] - rm[j]);
        }
    }
}

pub fn central_y_acc<T: Real>(out: &mut Field2D<T>, v: &Field2D<T>, scale: T) {
    let g = *v.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = scale / (T::lit(2.0) * g.h());
    let src = v.values();
    let dst = out.values_mut();
    for i in 0..m1 {
        let r = &src[i * m2..][..m2];
        let row = &mut dst[i * m2..][..m2];
        for_each_col(m2, |j, jm, jp| row[j] = row[j] + c * (r[jp] - r[jm]));
    }
}

/// Second difference in x, `(v[i+1] - 2 v[i] + v[i-1]) / h^2`.
pub fn second_x<T: Real>(v: &Field2D<T>) -> Field2D<T> {
    let g = *v.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = T::one() / (g.h() * g.h());
    let two = T::lit(2.0);
    let src = v.values();
    let mut out = vec![T::zero(); src.len()];
    for i in 0..m1 {
        let rp = &src[next(i, m1) * m2..][..m2];
        let rm = &src[prev(i, m1) * m2..][..m2];
        let r = &src[i * m2..][..m2];
        let row = &mut out[i * m2..][..m2];
        for j in 0..m2 {
            row[j] = c * (rp[j] - two * r[j] + rm[j]);
        }
    }
    Field2D::from_raw(g, out)
}

/// Second difference in y.
pub fn second_y<T: Real>(v: &Field2D<T>) -> Field2D<T> {
    let g = *v.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = T::one() / (g.h() * g.h());
    let two = T::lit(2.0);
    let src = v.values();
    let mut out = vec![T::zero(); src.len()];
    for i in 0..m1 {
        let r = &src[i * m2..][..m2];
        let row = &mut out[i * m2..][..m2];
        for_each_col(m2, |j, jm, jp| row[j] = c * (r[jp] - two * r[j] + r[jm]));
    }
    Field2D::from_raw(g, out)
}

/// `out += scale * psi_x(u, v)` with `psi_x(u, v) = (u dx^ v + dx^(u v)) / 3`.
pub fn psi_x_acc<T: Real>(out: &mut Field2D<T>, u: &Field2D<T>, v: &Field2D<T>, scale: T) {
    let g = *u.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = scale / (T::lit(6.0) * g.h());
    let (us, vs) = (u.values(), v.values());
    let dst = out.values_mut();
    for i in 0..m1 {
        let (ip, im) = (next(i, m1) * m2, prev(i, m1) * m2);
        let up = &us[ip..][..m2];
        let um = &us[im..][..m2];
        let vp = &vs[ip..][..m2];
        let vm = &vs[im..][..m2];
        let u0 = &us[i * m2..][..m2];
        let row = &mut dst[i * m2..][..m2];
        for j in 0..m2 {
            row[j] = row[j] + c * (u0[j] * (vp[j] - vm[j]) + up[j] * vp[j] - um[j] * vm[j]);
        }
    }
}

/// `out += scale * psi_y(u, v)`.
pub fn psi_y_acc<T: Real>(out: &mut Field2D<T>, u: &Field2D<T>, v: &Field2D<T>, scale: T) {
    let g = *u.grid();
    let (m1, m2) = (g.m1(), g.m2());
    let c = scale / (T::lit(6.0) * g.h());
    let (us, vs) = (u.values(), v.values());
    let dst = out.values_mut();
    for i in 0..m1 {
        let ur = &us[i * m2..][..m2];
        let vr = &vs[i * m2..][..m2];
        let row = &mut dst[i * m2..][..m2];
        for_each_col(m2, |j, jm, jp| {
            row[j] = row[j] + c * (ur[j] * (vr[jp] - vr[jm]) + ur[jp] * vr[jp] - ur[jm] * vr[jm]);
        });
    }
}

/// `out += scale * psi_h(u, v)`.
pub fn psi_h_acc<T: Real>(out: &mut Field2D<T>, u: &Field2D<T>, v: &Field2D<T>, scale: T) {
    psi_x_acc(out, u, v, scale);
    psi_y_acc(out, u, v, scale);
}

/// Bilinear convection form `(u dx^ v + dx^(u v)) / 3`.
pub fn psi_x<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> Result<Field2D<T>> {
    u.grid().check_same(v.grid())?;
    let mut out = Field2D::zeros(*u.grid());
    psi_x_acc(&mut out, u, v, T::one());
    Ok(out)
}

/// Bilinear convection form `(u dy^ v + dy^(u v)) / 3`.
pub fn psi_y<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> Result<Field2D<T>> {
    u.grid().check_same(v.grid())?;
    let mut out = Field2D::zeros(*u.grid());
    psi_y_acc(&mut out, u, v, T::one());
    Ok(out)
}

/// `psi_x + psi_y`.
pub fn psi_h<T: Real>(u: &Field2D<T>, v: &Field2D<T>) -> Result<Field2D<T>> {
    u.grid().check_same(v.grid())?;
    let mut out = Field2D::zeros(*u.grid());
    psi_h_acc(&mut out, u, v, T::one());
    Ok(out)
}

/// Inverse of the periodic compact operator `A = I + (h^2/12) dxx` on lines
/// of length `M`, i.e. of the circulant stencil `(1/12, 5/6, 1/12)`.
///
/// Solves use the cyclic Thomas algorithm with a Sherman-Morrison
/// correction; the factorisation and correction vector depend only on `M`
/// and are computed once.
#[derive(Debug, Clone)]
pub struct CompactInverse<T> {
    m: usize,
    eigenvalues: Vec<T>,
    // Thomas factors of the corner-modified tridiagonal matrix.
    inv_denom: Vec<T>,
    c_prime: Vec<T>,
    // Solution of the modified system against the rank-one vector.
    z: Vec<T>,
    beta_over_gamma: T,
    inv_fact_denom: T,
}

impl<T: Real> CompactInverse<T> {
    pub fn new(m: usize) -> Self {
        assert!(m >= 3, "compact inverse needs at least 3 points per line");
        let off = T::lit(1.0 / 12.0);
        let diag = T::lit(5.0 / 6.0);
        let third = T::lit(1.0 / 3.0);

        let eigenvalues = (0..m)
            .map(|j| {
                let s = (T::PI() * T::from_usize_lossy(j) / T::from_usize_lossy(m)).sin();
                T::one() - third * s * s
            })
            .collect();

        // Corner entries: A[m-1][0] = alpha, A[0][m-1] = beta.
        let (alpha, beta) = (off, off);
        let gamma = -diag;
        let mut bb = vec![diag; m];
        bb[0] = diag - gamma;
        bb[m - 1] = diag - alpha * beta / gamma;

        let mut inv_denom = vec![T::zero(); m];
        let mut c_prime = vec![T::zero(); m];
        let mut d = bb[0];
        inv_denom[0] = T::one() / d;
        c_prime[0] = off * inv_denom[0];
        for i in 1..m {
            d = bb[i] - off * c_prime[i - 1];
            inv_denom[i] = T::one() / d;
            c_prime[i] = off * inv_denom[i];
        }

        let mut this = Self {
            m,
            eigenvalues,
            inv_denom,
            c_prime,
            z: Vec::new(),
            beta_over_gamma: beta / gamma,
            inv_fact_denom: T::one(),
        };
        let mut z = vec![T::zero(); m];
        z[0] = gamma;
        z[m - 1] = alpha;
        this.thomas(&mut z);
        this.inv_fact_denom = T::one() / (T::one() + z[0] + this.beta_over_gamma * z[m - 1]);
        this.z = z;
        this
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Circulant eigenvalues `1 - sin^2(pi j / M) / 3`, `j = 0..M`.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    fn thomas(&self, r: &mut [T]) {
        let m = self.m;
        let off = T::lit(1.0 / 12.0);
        r[0] = r[0] * self.inv_denom[0];
        for i in 1..m {
            r[i] = (r[i] - off * r[i - 1]) * self.inv_denom[i];
        }
        for i in (0..m - 1).rev() {
            r[i] = r[i] - self.c_prime[i] * r[i + 1];
        }
    }

    /// Solves `A x = r` in place for one contiguous line.
    pub fn solve_line(&self, r: &mut [T]) {
        assert_eq!(r.len(), self.m);
        self.thomas(r);
        let m = self.m;
        let fact = (r[0] + self.beta_over_gamma * r[m - 1]) * self.inv_fact_denom;
        for (x, &z) in r.iter_mut().zip(&self.z) {
            *x = *x - fact * z;
        }
    }

    /// Applies `A` to one contiguous line.
    pub fn apply_line(&self, x: &[T]) -> Vec<T> {
        let m = self.m;
        let off = T::lit(1.0 / 12.0);
        let diag = T::lit(5.0 / 6.0);
        (0..m)
            .map(|i| off * x[prev(i, m)] + diag * x[i] + off * x[next(i, m)])
            .collect()
    }

    /// Solves along the first (x) index of a row-major `m x width` block,
    /// all `width` lines at once. Each line sees exactly the arithmetic of
    /// [`Self::solve_line`].
    fn solve_strided(&self, data: &mut [T], width: usize) {
        let m = self.m;
        let off = T::lit(1.0 / 12.0);
        debug_assert_eq!(data.len(), m * width);
        {
            let s = self.inv_denom[0];
            for v in &mut data[..width] {
                *v = *v * s;
            }
        }
        for i in 1..m {
            let (head, tail) = data.split_at_mut(i * width);
            let above = &head[(i - 1) * width..];
            let row = &mut tail[..width];
            let s = self.inv_denom[i];
            for j in 0..width {
                row[j] = (row[j] - off * above[j]) * s;
            }
        }
        for i in (0..m - 1).rev() {
            let (head, tail) = data.split_at_mut((i + 1) * width);
            let row = &mut head[i * width..];
            let below = &tail[..width];
            let c = self.c_prime[i];
            for j in 0..width {
                row[j] = row[j] - c * below[j];
            }
        }
        let facts: Vec<T> = (0..width)
            .map(|j| (data[j] + self.beta_over_gamma * data[(m - 1) * width + j]) * self.inv_fact_denom)
            .collect();
        for i in 0..m {
            let z = self.z[i];
            let row = &mut data[i * width..][..width];
            for j in 0..width {
                row[j] = row[j] - facts[j] * z;
            }
        }
    }
}

/// Compact line inverses for both directions of one grid.
#[derive(Debug, Clone)]
pub struct CompactPair<T> {
    grid: PeriodicGrid<T>,
    x: CompactInverse<T>,
    y: CompactInverse<T>,
}

impl<T: Real> CompactPair<T> {
    pub fn new(grid: PeriodicGrid<T>) -> Self {
        Self {
            x: CompactInverse::new(grid.m1()),
            y: CompactInverse::new(grid.m2()),
            grid,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid<T> {
        &self.grid
    }

    pub fn x(&self) -> &CompactInverse<T> {
        &self.x
    }

    pub fn y(&self) -> &CompactInverse<T> {
        &self.y
    }

    /// `(I + h^2/12 dxx)^{-1}` applied along every x-line, in place.
    pub fn solve_x_in_place(&self, f: &mut Field2D<T>) {
        let m2 = f.grid().m2();
        self.x.solve_strided(f.values_mut(), m2);
    }

    /// `(I + h^2/12 dyy)^{-1}` applied along every y-line, in place.
    pub fn solve_y_in_place(&self, f: &mut Field2D<T>) {
        let m2 = f.grid().m2();
        for row in f.values_mut().chunks_exact_mut(m2) {
            self.y.solve_line(row);
        }
    }

    /// Compact approximation of `u_xx`: `(I + h^2/12 dxx)^{-1} dxx u`.
    pub fn aux_v(&self, u: &Field2D<T>) -> Field2D<T> {
        let mut v = second_x(u);
        self.solve_x_in_place(&mut v);
        v
    }

    /// Compact approximation of `u_yy`.
    pub fn aux_w(&self, u: &Field2D<T>) -> Field2D<T> {
        let mut w = second_y(u);
        self.solve_y_in_place(&mut w);
        w
    }
}

/// Solves `(I + h^2/12 dxx) z = rhs` line by line in x.
pub fn compact_solve_x<T: Real>(rhs: &Field2D<T>) -> Field2D<T> {
    let mut z = rhs.clone();
    let m2 = rhs.grid().m2();
    CompactInverse::new(rhs.grid().m1()).solve_strided(z.values_mut(), m2);
    z
}

/// Solves `(I + h^2/12 dyy) z = rhs` line by line in y.
pub fn compact_solve_y<T: Real>(rhs: &Field2D<T>) -> Field2D<T> {
    let mut z = rhs.clone();
    let m2 = rhs.grid().m2();
    let inv = CompactInverse::new(m2);
    for row in z.values_mut().chunks_exact_mut(m2) {
        inv.solve_line(row);
    }
    z
}

/// Forward compact operator `(I + h^2/12 dxx) z`.
pub fn compact_apply_x<T: Real>(z: &Field2D<T>) -> Field2D<T> {
    let h = z.grid().h();
    let mut out = second_x(z);
    out.scale(h * h / T::lit(12.0));
    out.axpy(T::one(), z);
    out
}

/// Forward compact operator `(I + h^2/12 dyy) z`.
pub fn compact_apply_y<T: Real>(z: &Field2D<T>) -> Field2D<T> {
    let h = z.grid().h();
    let mut out = second_y(z);
    out.scale(h * h / T::lit(12.0));
    out.axpy(T::one(), z);
    out
}

/// Fourth-order compact `u_xx`.
pub fn aux_v<T: Real>(u: &Field2D<T>) -> Field2D<T> {
    compact_solve_x(&second_x(u))
}

/// Fourth-order compact `u_yy`.
pub fn aux_w<T: Real>(u: &Field2D<T>) -> Field2D<T> {
    compact_solve_y(&second_y(u))
}
