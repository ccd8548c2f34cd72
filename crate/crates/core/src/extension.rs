//! Divergence-free extension of a sector vector field to the full plane.
//!
//! With `alpha = omega / (2 pi - omega)` the field is continued on
//! `(omega, 2 pi)` by `(-alpha H_r, H_theta)(r, alpha (2 pi - theta))`.
//! In polar components this gives `div Hbar = -alpha div H` at the mirrored
//! point, and the normal component `Hbar_theta` is continuous across both seams.
//!
//! The full-circle integral of `Hbar_r` vanishes for every input, divergence
//! free or not, because the substitution `psi = alpha (2 pi - theta)` maps the
//! continued part onto the sector with Jacobian `1 / alpha`. Non-divergence-free
//! inputs are therefore detected with a polar finite-difference divergence.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::{Error, Point, Result};

/// Polar sampler `(r, theta) -> (H_r, H_theta)`.
pub type PolarSampler = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// A vector field on the sector `0 <= theta <= omega`.
#[derive(Clone)]
pub struct PolarField {
    pub sampler: PolarSampler,
    pub omega: f64,
}

impl std::fmt::Debug for PolarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolarField")
            .field("omega", &self.omega)
            .finish_non_exhaustive()
    }
}

impl PolarField {
    pub fn new(
        omega: f64,
        sampler: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega <= 2.0 * PI) {
            return Err(Error::InvalidArgument(format!(
                "sector angle {omega} not in (0, 2 pi]"
            )));
        }
        Ok(Self {
            sampler: Arc::new(sampler),
            omega,
        })
    }

    /// Field given by Cartesian components.
    pub fn from_cartesian(
        omega: f64,
        h: impl Fn(Point) -> Point + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(omega, move |r, t| {
            let (s, c) = t.sin_cos();
            let v = h([r * c, r * s]);
            (v[0] * c + v[1] * s, -v[0] * s + v[1] * c)
        })
    }

    /// `(d psi/dy, -d psi/dx)` for a scalar with Cartesian gradient `grad_psi`.
    pub fn rotated_gradient(
        omega: f64,
        grad_psi: impl Fn(Point) -> Point + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_cartesian(omega, move |x| {
            let g = grad_psi(x);
            [g[1], -g[0]]
        })
    }

    pub fn sample(&self, r: f64, theta: f64) -> (f64, f64) {
        (self.sampler)(r, theta)
    }
}

/// The continued field on the whole circle.
#[derive(Clone, Debug)]
pub struct ExtendedField {
    pub field: PolarField,
    pub alpha: f64,
}

pub fn extend(field: PolarField) -> Result<ExtendedField> {
    if field.omega >= 2.0 * PI {
        return Err(Error::Unsupported(
            "the extension needs a sector angle strictly below 2 pi".into(),
        ));
    }
    let alpha = field.omega / (2.0 * PI - field.omega);
    Ok(ExtendedField { field, alpha })
}

impl ExtendedField {
    pub fn omega(&self) -> f64 {
        self.field.omega
    }

    /// `Hbar(r, theta)` with `theta` reduced to `[0, 2 pi)`; the sector branch
    /// is used on `[0, omega]`.
    pub fn eval(&self, r: f64, theta: f64) -> (f64, f64) {
        let t = theta.rem_euclid(2.0 * PI);
        if t <= self.omega() {
            self.field.sample(r, t)
        } else {
            self.continued(r, t)
        }
    }

    /// The continuation branch, valid on the closed interval `[omega, 2 pi]`.
    pub fn continued(&self, r: f64, theta: f64) -> (f64, f64) {
        let (hr, ht) = self.field.sample(r, self.alpha * (2.0 * PI - theta));
        (-self.alpha * hr, ht)
    }

    /// `(Hbar_theta(omega-), Hbar_theta(omega+), Hbar_theta(0+), Hbar_theta(2 pi-))`.
    pub fn seam_traces(&self, r: f64) -> [f64; 4] {
        let w = self.omega();
        [
            self.field.sample(r, w).1,
            self.continued(r, w).1,
            self.field.sample(r, 0.0).1,
            self.continued(r, 2.0 * PI).1,
        ]
    }

    /// `int_0^(2 pi) Hbar_r dtheta` by the trapezoid rule with the circle split
    /// at the seam: `m1 = round(n omega / 2 pi)` panels on `[0, omega]` and
    /// `n - m1` on `[omega, 2 pi]`, each using its own one-sided branch.
    pub fn flux(&self, r: f64, n_theta: usize) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "flux radius {r} must be positive"
            )));
        }
        let w = self.omega();
        let m1 = ((n_theta as f64 * w / (2.0 * PI)).round() as usize)
            .clamp(1, n_theta.saturating_sub(1).max(1));
        let m2 = n_theta.saturating_sub(m1).max(1);
        let trap = |m: usize, a: f64, b: f64, f: &dyn Fn(f64) -> f64| -> f64 {
            let h = (b - a) / m as f64;
            let inner: f64 = (1..m).map(|k| f(a + k as f64 * h)).sum();
            h * (0.5 * (f(a) + f(b)) + inner)
        };
        let sector = trap(m1, 0.0, w, &|t| self.field.sample(r, t).0);
        let rest = trap(m2, w, 2.0 * PI, &|t| self.continued(r, t).0);
        Ok(sector + rest)
    }

    /// Centred polar finite-difference divergence
    /// `(1/r) d(r Hbar_r)/dr + (1/r) dHbar_theta/dtheta` on a log-spaced radial
    /// grid over `[r_lo, r_hi]` and `n_theta` cell-centred angles. Stencils
    /// that straddle a seam are skipped.
    pub fn divergence_check(
        &self,
        r_lo: f64,
        r_hi: f64,
        n_r: usize,
        n_theta: usize,
    ) -> Result<DivergenceReport> {
        if !(r_lo > 0.0 && r_hi > r_lo) || n_r < 2 || n_theta < 8 {
            return Err(Error::InvalidArgument(
                "divergence grid needs 0 < r_lo < r_hi, n_r >= 2, n_theta >= 8".into(),
            ));
        }
        let q = (r_hi / r_lo).powf(1.0 / (n_r - 1) as f64);
        let dr_log = q.ln() * 0.5;
        let dt = 2.0 * PI / n_theta as f64;
        let w = self.omega();
        let mut report = DivergenceReport {
            max_abs: 0.0,
            max_term: 0.0,
            relative: 0.0,
            points: 0,
        };
        for i in 0..n_r {
            let r = r_lo * q.powi(i as i32);
            let (rm, rp) = (r * (-dr_log).exp(), r * dr_log.exp());
            for j in 0..n_theta {
                let t = (j as f64 + 0.5) * dt;
                let (tm, tp) = (t - dt, t + dt);
                let straddles = |s: f64| tm < s && s < tp;
                if straddles(w) || tm < 0.0 || tp > 2.0 * PI {
                    continue;
                }
                let radial = (rp * self.eval(rp, t).0 - rm * self.eval(rm, t).0) / (rp - rm) / r;
                let angular = (self.eval(r, tp).1 - self.eval(r, tm).1) / (2.0 * dt) / r;
                let div = radial + angular;
                report.max_abs = report.max_abs.max(div.abs());
                report.max_term = report.max_term.max(radial.abs()).max(angular.abs());
                report.points += 1;
            }
        }
        report.relative = if report.max_term > 0.0 {
            report.max_abs / report.max_term
        } else {
            0.0
        };
        Ok(report)
    }
}

/// Summary of [`ExtendedField::divergence_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub max_abs: f64,
    /// Largest single term of the divergence, the scale of the cancellation.
    pub max_term: f64,
    pub relative: f64,
    pub points: usize,
}

impl DivergenceReport {
    /// True when the divergence is not small relative to its terms.
    pub fn fires(&self, tol: f64) -> bool {
        self.relative > tol
    }
}

/// Fluxes at every radius.
pub fn flux_check(field: &ExtendedField, radii: &[f64], n_theta: usize) -> Result<Vec<(f64, f64)>> {
    radii
        .iter()
        .map(|&r| Ok((r, field.flux(r, n_theta)?)))
        .collect()
}

/// CSV `r,flux`.
pub fn write_flux_csv<W: Write>(rows: &[(f64, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "r,flux")?;
    for (r, f) in rows {
        writeln!(w, "{r:?},{f:?}")?;
    }
    Ok(())
}

/// Angular vortex `(0, 1/r)`.
pub fn angular_vortex(omega: f64) -> Result<PolarField> {
    PolarField::new(omega, |r, _| (0.0, 1.0 / r))
}

/// Rotated gradient of `psi = sin(x) cosh(y) + x y^2`.
pub fn smooth_stream_field(omega: f64) -> Result<PolarField> {
    PolarField::rotated_gradient(omega, |p| {
        let [x, y] = p;
        [x.cos() * y.cosh() + y * y, x.sin() * y.sinh() + 2.0 * x * y]
    })
}

/// The radial unit field `e_r`, with divergence `1/r`.
pub fn radial_unit(omega: f64) -> Result<PolarField> {
    PolarField::new(omega, |_, _| (1.0, 0.0))
}
