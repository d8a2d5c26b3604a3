//! Error metrics, observed orders and convergence tables.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{l2_norm, Field2D, PeriodicGrid};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Ncd,
    StTgcd,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Ncd => "NCD",
            Scheme::StTgcd => "ST-TGCD",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ncd" => Ok(Scheme::Ncd),
            "st-tgcd" | "sttgcd" | "tgcd" => Ok(Scheme::StTgcd),
            other => Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Which step size a ladder refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Temporal,
    Spatial,
}

/// How the error of a ladder row is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// Against the closed-form solution.
    Exact,
    /// Against the same spatial grid with the time step halved.
    SelfTemporal,
    /// Against the spatial grid refined by two, restricted to shared nodes.
    SelfSpatial,
}

/// Discrete L2 error `||u - u_ref||`.
pub fn exact_error<T: Real>(numerical: &Field2D<T>, reference: &Field2D<T>) -> Result<T> {
    let diff = numerical.lin_comb(T::one(), reference, -T::one())?;
    Ok(l2_norm(&diff))
}

/// Discrete L2 norm over node indices `1..=n1` by `1..=n2` (periodic
/// wrap), or over the whole grid when `nodes` is `None`.
pub fn window_l2_norm<T: Real>(v: &Field2D<T>, nodes: Option<(usize, usize)>) -> T {
    let Some((n1, n2)) = nodes else {
        return l2_norm(v);
    };
    let g = v.grid();
    let mut sum = T::zero();
    for i in 1..=n1 {
        for j in 1..=n2 {
            let e = v.at(i % g.m1(), j % g.m2());
            sum = sum + e * e;
        }
    }
    (g.h() * g.h() * sum).sqrt()
}

/// `||u - u_ref||` over the error window.
pub fn window_error<T: Real>(u: &Field2D<T>, reference: &Field2D<T>, nodes: Option<(usize, usize)>) -> Result<T> {
    let diff = u.lin_comb(T::one(), reference, -T::one())?;
    Ok(window_l2_norm(&diff, nodes))
}

/// `log2(e_prev / e_cur)`; both errors must be positive and finite.
pub fn observed_order(e_prev: f64, e_cur: f64) -> Result<f64> {
    if !(e_prev > 0.0 && e_cur > 0.0 && e_prev.is_finite() && e_cur.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "observed order needs positive finite errors, got {e_prev:e} and {e_cur:e}"
        )));
    }
    Ok((e_prev / e_cur).log2())
}

/// `||u(tau) - u(tau/2)||` at the final time, both on the same grid.
pub fn self_error_temporal<T: Real>(coarse_step: &Field2D<T>, half_step: &Field2D<T>) -> Result<T> {
    exact_error(coarse_step, half_step)
}

/// Nodes of `fine` that coincide with the nodes of `coarse_grid`.
pub fn restrict_to<T: Real>(fine: &Field2D<T>, coarse_grid: &PeriodicGrid<T>) -> Result<Field2D<T>> {
    let fg = fine.grid();
    let k = fg.m1() / coarse_grid.m1();
    if k == 0 || fg.m1() != k * coarse_grid.m1() || fg.m2() != k * coarse_grid.m2() {
        return Err(Error::GridMismatch {
            left: fg.describe(),
            right: coarse_grid.describe(),
        });
    }
    Ok(Field2D::from_index_fn(*coarse_grid, |i, j| fine.at(k * i, k * j)))
}

/// `||u(M) - R u(2M)||` with `R` the even-node restriction.
pub fn self_error_spatial<T: Real>(coarse: &Field2D<T>, fine: &Field2D<T>) -> Result<T> {
    self_error_spatial_in(coarse, fine, None)
}

/// [`self_error_spatial`] over an error window of the coarse grid.
pub fn self_error_spatial_in<T: Real>(
    coarse: &Field2D<T>,
    fine: &Field2D<T>,
    nodes: Option<(usize, usize)>,
) -> Result<T> {
    let (cg, fg) = (coarse.grid(), fine.grid());
    if fg.m1() != 2 * cg.m1() || fg.m2() != 2 * cg.m2() {
        return Err(Error::GridMismatch {
            left: cg.describe(),
            right: fg.describe(),
        });
    }
    window_error(coarse, &restrict_to(fine, cg)?, nodes)
}

/// One line of a convergence ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h_c: f64,
    pub h_f: f64,
    pub tau_c: f64,
    pub tau_f: f64,
    pub scheme: Scheme,
    pub error: f64,
    /// `None` on the first row.
    pub order: Option<f64>,
    pub cpu_seconds: f64,
}

/// Measured quantities of one ladder rung, before orders are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub h_c: f64,
    pub h_f: f64,
    pub tau_c: f64,
    pub tau_f: f64,
    pub error: f64,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub scheme: Scheme,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.cpu_seconds).sum()
    }
}

/// Attaches levels and consecutive observed orders to a ladder.
pub fn build_table(scheme: Scheme, measurements: &[Measurement]) -> Result<ConvergenceTable> {
    if measurements.is_empty() {
        return Err(Error::Empty("convergence ladder"));
    }
    let mut rows = Vec::with_capacity(measurements.len());
    for (k, m) in measurements.iter().enumerate() {
        let order = if k == 0 {
            None
        } else {
            Some(observed_order(measurements[k - 1].error, m.error)?)
        };
        rows.push(ConvergenceRow {
            level: k + 1,
            h_c: m.h_c,
            h_f: m.h_f,
            tau_c: m.tau_c,
            tau_f: m.tau_f,
            scheme,
            error: m.error,
            order,
            cpu_seconds: m.cpu_seconds,
        });
    }
    Ok(ConvergenceTable { scheme, rows })
}

/// Geometric mean of positive values.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("geometric mean input"));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("geometric mean needs positive finite values".into()));
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}
