//! Finite-element laboratory for corner-adapted two-scale expansions.
//!
//! The crate solves linear elliptic problems `-div a(x/eps) grad u = f` on a
//! truncated sector `{ r (cos t, sin t) : 0 < r < R, 0 < t < omega }` and
//! compares the classical two-scale expansion (Dirichlet correctors only)
//! with the hybrid expansion that also carries corner correctors for the
//! singular functions `r^(n pi/omega) sin(n pi t/omega)`.
//!
//! Module map:
//!
//! * [`geometry`]: graded sector meshes, shells, point location.
//! * [`coeff`]: coefficient fields (constant, rotated periodic, checkerboard).
//! * [`fem`]: P1 assembly, Dirichlet elimination, Jacobi-PCG, gradients, norms.
//! * [`cell`]: periodic cell problems, homogenized matrix, flux correctors.
//! * [`singular`]: singular functions, their duals and the radial cutoff.
//! * [`correctors`]: Dirichlet and corner correctors on the sector.
//! * [`two_scale`]: singular coefficients and the two expansions.
//! * [`metrics`]: shell errors, log-log fits, excess decay.
//! * [`extension`]: divergence-free extension of sector vector fields.
//! * [`experiments`]: end-to-end runs shared by the CLI and the acceptance suite.

pub mod cell;
pub mod coeff;
pub mod correctors;
pub mod error;
pub mod experiments;
pub mod extension;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod singular;
pub mod two_scale;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];
