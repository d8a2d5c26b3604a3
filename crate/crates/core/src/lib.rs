//! Compact difference solvers for the two-dimensional periodic viscous
//! Burgers' equation `u_t + u (u_x + u_y) = lambda (u_xx + u_yy) + f`.
//!
//! Two time-marching schemes are provided:
//!
//! * [`ncd`]: the nonlinear compact difference scheme, a Crank-Nicolson
//!   discretisation with fourth-order compact second derivatives and a
//!   skew-symmetric convection form, advanced by fixed-point iteration.
//! * [`twogrid`]: the space-time two-grid scheme, which runs the nonlinear
//!   scheme on a coarse space-time mesh, prolongs the result (linear in
//!   time, cubic Lagrange in space) and finishes with one linear correction
//!   solve per fine time step.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analysis;
pub mod error;
pub mod fd_ops;
pub mod linsolve;
pub mod mesh;
pub mod ncd;
pub mod problems;
pub mod scalar;
pub mod twogrid;

pub use error::{Error, Result};
pub use mesh::{Field2D, PeriodicGrid, TimeWindow};
pub use scalar::Real;

pub type Field = mesh::Field2D<f64>;
pub type Grid = mesh::PeriodicGrid<f64>;
pub type Window = mesh::TimeWindow<f64>;
pub type Params = ncd::SchemeParams<f64>;
pub type Problem = problems::Problem<f64>;
pub type TwoGridConfig = twogrid::TwoGridConfig<f64>;
