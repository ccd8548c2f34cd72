//! Homogeneous harmonic functions of the sector and the radial cutoff.
//!
//! `tau_n = r^rho sin(rho theta)` with `rho = n pi / omega` vanishes on both
//! rays; its dual `tau*_n = -r^-rho sin(rho theta)` is harmonic away from the
//! corner. Angles are the sector parameter in `[0, omega]`.

use std::f64::consts::PI;

use crate::geometry::SectorDomain;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularFunction {
    pub n: usize,
    pub omega: f64,
    pub rho: f64,
    pub dual: bool,
}

impl SingularFunction {
    pub fn new(n: usize, omega: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "singular mode index starts at 1".into(),
            ));
        }
        if !(omega > 0.0 && omega <= 2.0 * PI + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "sector angle {omega} outside (0, 2pi]"
            )));
        }
        Ok(Self {
            n,
            omega,
            rho: n as f64 * PI / omega,
            dual: false,
        })
    }

    pub fn dual_of(n: usize, omega: f64) -> Result<Self> {
        Ok(Self {
            dual: true,
            ..Self::new(n, omega)?
        })
    }

    /// Value from polar coordinates; finite at the corner for the primal function.
    pub fn value_polar(&self, r: f64, theta: f64) -> Result<f64> {
        if self.dual {
            if r == 0.0 {
                return Err(Error::Singularity(format!(
                    "dual function of mode {} at r = 0",
                    self.n
                )));
            }
            Ok(-r.powf(-self.rho) * (self.rho * theta).sin())
        } else if r == 0.0 {
            Ok(0.0)
        } else {
            Ok(r.powf(self.rho) * (self.rho * theta).sin())
        }
    }

    /// Cartesian gradient from polar coordinates.
    pub fn gradient_polar(&self, r: f64, theta: f64) -> Result<Point> {
        if r == 0.0 {
            return Err(Error::Singularity(format!(
                "gradient of mode {} at r = 0",
                self.n
            )));
        }
        let (s, c) = (self.rho * theta).sin_cos();
        let (st, ct) = theta.sin_cos();
        // d/dr and (1/r) d/dtheta
        let (dr, dt) = if self.dual {
            let p = r.powf(-self.rho - 1.0);
            (self.rho * p * s, -self.rho * p * c)
        } else {
            let p = r.powf(self.rho - 1.0);
            (self.rho * p * s, self.rho * p * c)
        };
        Ok([dr * ct - dt * st, dr * st + dt * ct])
    }

    /// Hessian `[[f_xx, f_xy], [f_xy, f_yy]]`.
    pub fn hessian_polar(&self, r: f64, theta: f64) -> Result<[[f64; 2]; 2]> {
        if r == 0.0 {
            return Err(Error::Singularity(format!(
                "hessian of mode {} at r = 0",
                self.n
            )));
        }
        // Both functions are Im(z^e) with e = rho or e = -rho, so the
        // Hessian is [[Im F'', Re F''], [Re F'', -Im F'']] for F = z^e.
        let e = if self.dual { -self.rho } else { self.rho };
        let k = e * (e - 1.0) * r.powf(e - 2.0);
        let phase = (e - 2.0) * theta;
        let (s, c) = phase.sin_cos();
        let fxx = k * s;
        let fxy = k * c;
        Ok([[fxx, fxy], [fxy, -fxx]])
    }

    /// Value and gradient at a Cartesian point.
    pub fn eval(&self, x: Point) -> Result<(f64, Point)> {
        let (r, t) = SectorDomain::polar(x);
        if r == 0.0 {
            return Err(Error::Singularity(format!(
                "mode {} evaluated at the corner",
                self.n
            )));
        }
        Ok((self.value_polar(r, t)?, self.gradient_polar(r, t)?))
    }
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

pub fn smoothstep_d1(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (t - 1.0) * (t - 1.0)
}

pub fn smoothstep_d2(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    60.0 * t * (t - 1.0) * (2.0 * t - 1.0)
}

/// Radial cutoff: one on `[0, R/2]`, zero on `[R, inf)`, quintic in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffBump {
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffValue {
    pub value: f64,
    pub gradient: Point,
    pub laplacian: f64,
}

impl CutoffBump {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidCutoff(format!(
                "radius {radius} must be positive"
            )));
        }
        Ok(Self { radius })
    }

    /// Radial profile and its first two derivatives in `r`.
    pub fn radial(&self, r: f64) -> (f64, f64, f64) {
        let half = 0.5 * self.radius;
        // eta(r) = 1 - s((r - R/2) / (R/2))
        let t = (r - half) / half;
        (
            1.0 - smoothstep(t),
            -smoothstep_d1(t) / half,
            -smoothstep_d2(t) / (half * half),
        )
    }

    pub fn value_at_radius(&self, r: f64) -> f64 {
        self.radial(r).0
    }

    pub fn eval(&self, x: Point) -> CutoffValue {
        let r = x[0].hypot(x[1]);
        let (v, d1, d2) = self.radial(r);
        if d1 == 0.0 && d2 == 0.0 {
            return CutoffValue {
                value: v,
                gradient: [0.0, 0.0],
                laplacian: 0.0,
            };
        }
        CutoffValue {
            value: v,
            gradient: [d1 * x[0] / r, d1 * x[1] / r],
            laplacian: d2 + d1 / r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_plane_mode_is_linear() {
        let t = SingularFunction::new(1, PI).unwrap();
        let (v, g) = t.eval([0.3, 0.7]).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
        assert!(g[0].abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slit_exponent_is_one_half() {
        assert_eq!(SingularFunction::new(1, 2.0 * PI).unwrap().rho, 0.5);
    }

    #[test]
    fn singular_requests_fail() {
        let t = SingularFunction::new(1, 1.5 * PI).unwrap();
        assert!(matches!(t.eval([0.0, 0.0]), Err(Error::Singularity(_))));
        let d = SingularFunction::dual_of(1, 1.5 * PI).unwrap();
        assert!(matches!(
            d.value_polar(0.0, 1.0),
            Err(Error::Singularity(_))
        ));
        assert_eq!(t.value_polar(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn vanishes_on_both_rays() {
        let omega = 1.95 * PI;
        for n in 1..=4 {
            let t = SingularFunction::new(n, omega).unwrap();
            for &r in &[1e-6f64, 1e-3, 1.0, 37.0, 1e3] {
                let scale = r.powf(t.rho);
                assert!(t.value_polar(r, 0.0).unwrap().abs() <= 1e-12 * scale.max(1.0));
                assert!(t.value_polar(r, omega).unwrap().abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    fn fd_laplacian(f: &dyn Fn(Point) -> f64, x: Point, h: f64) -> f64 {
        (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h)
    }

    #[test]
    fn harmonic_by_finite_differences() {
        let omega = 1.95 * PI;
        for n in 1..=3 {
            for dual in [false, true] {
                let t = if dual {
                    SingularFunction::dual_of(n, omega).unwrap()
                } else {
                    SingularFunction::new(n, omega).unwrap()
                };
                let f = |x: Point| t.eval(x).unwrap().0;
                let x = [-0.4, 0.5];
                let l1 = fd_laplacian(&f, x, 1e-2).abs();
                let l2 = fd_laplacian(&f, x, 5e-3).abs();
                // O(h^2) truncation: halving h divides the error by ~4
                assert!(l1 < 1e-2, "n={n} dual={dual}: {l1}");
                assert!(l2 < 0.3 * l1, "n={n} dual={dual}: {l1} -> {l2}");
            }
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let omega = 1.95 * PI;
        for dual in [false, true] {
            let t = if dual {
                SingularFunction::dual_of(2, omega).unwrap()
            } else {
                SingularFunction::new(2, omega).unwrap()
            };
            let x = [0.3, -0.45];
            let h = 1e-6;
            let (_, g) = t.eval(x).unwrap();
            let fd = [
                (t.eval([x[0] + h, x[1]]).unwrap().0 - t.eval([x[0] - h, x[1]]).unwrap().0)
                    / (2.0 * h),
                (t.eval([x[0], x[1] + h]).unwrap().0 - t.eval([x[0], x[1] - h]).unwrap().0)
                    / (2.0 * h),
            ];
            assert!((g[0] - fd[0]).abs() < 1e-7 && (g[1] - fd[1]).abs() < 1e-7);
            let (r, th) = SectorDomain::polar(x);
            let hs = t.hessian_polar(r, th).unwrap();
            let gx = |p: Point| t.eval(p).unwrap().1;
            let dxx = (gx([x[0] + h, x[1]])[0] - gx([x[0] - h, x[1]])[0]) / (2.0 * h);
            let dxy = (gx([x[0], x[1] + h])[0] - gx([x[0], x[1] - h])[0]) / (2.0 * h);
            let dyy = (gx([x[0], x[1] + h])[1] - gx([x[0], x[1] - h])[1]) / (2.0 * h);
            assert!((hs[0][0] - dxx).abs() < 1e-6, "{hs:?} vs {dxx}");
            assert!((hs[0][1] - dxy).abs() < 1e-6);
            assert!((hs[1][1] - dyy).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_bound_scales_with_radius() {
        let t = SingularFunction::new(1, 1.95 * PI).unwrap();
        for &r in &[1e-4, 1e-2, 1.0] {
            for k in 0..20 {
                let th = t.omega * k as f64 / 19.0;
                let g = t.gradient_polar(r, th).unwrap();
                assert!(g[0].hypot(g[1]) <= t.rho * r.powf(t.rho - 1.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn angular_modes_are_orthogonal() {
        // int_0^omega sin(rho_n t) sin(rho_m t) dt by composite Simpson
        let omega = 1.95 * PI;
        let steps = 2000;
        for (n, m) in [(1, 2), (1, 3), (2, 3), (2, 5)] {
            let a = SingularFunction::new(n, omega).unwrap();
            let b = SingularFunction::new(m, omega).unwrap();
            let h = omega / steps as f64;
            let f = |t: f64| (a.rho * t).sin() * (b.rho * t).sin();
            let mut s = f(0.0) + f(omega);
            for i in 1..steps {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cutoff_reference_values() {
        let b = CutoffBump::new(2.0).unwrap();
        let v = b.eval([0.5, 0.0]);
        assert_eq!((v.value, v.gradient, v.laplacian), (1.0, [0.0, 0.0], 0.0));
        let v = b.eval([0.0, 3.0]);
        assert_eq!((v.value, v.gradient, v.laplacian), (0.0, [0.0, 0.0], 0.0));
        // r = 3R/4: s(1/2) = 1/2, s'(1/2) = 15/8, d/dr = (15/8) / (R/2)
        let v = b.eval([1.5, 0.0]);
        assert!((v.value - 0.5).abs() < 1e-15);
        assert!((v.gradient[0] + 3.75 / 2.0).abs() < 1e-14 && v.gradient[1] == 0.0);
    }

    #[test]
    fn cutoff_is_c2_at_the_transitions() {
        let b = CutoffBump::new(1.0).unwrap();
        for r0 in [0.5, 1.0] {
            let lo = b.radial(r0 - 1e-9);
            let hi = b.radial(r0 + 1e-9);
            assert!((lo.0 - hi.0).abs() < 1e-12);
            assert!((lo.1 - hi.1).abs() < 1e-6);
            assert!((lo.2 - hi.2).abs() < 1e-5);
        }
    }

    #[test]
    fn cutoff_dirichlet_energy_is_scale_invariant() {
        // int |grad eta|^2 = 2 pi int eta'(r)^2 r dr, by Gauss-Legendre on the transition
        let energy = |big_r: f64| {
            let b = CutoffBump::new(big_r).unwrap();
            let (a, c) = (0.5 * big_r, big_r);
            let nodes = 400;
            let h = (c - a) / nodes as f64;
            let g = [-(1.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()];
            let mut s = 0.0;
            for i in 0..nodes {
                let mid = a + (i as f64 + 0.5) * h;
                for gi in g {
                    let r = mid + 0.5 * h * gi;
                    let d1 = b.radial(r).1;
                    s += 0.5 * h * d1 * d1 * r;
                }
            }
            2.0 * PI * s
        };
        let e = [energy(0.2), energy(0.4), energy(0.8)];
        assert!((e[0] / e[1] - 1.0).abs() < 1e-10 && (e[2] / e[1] - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn homogeneity(r in 1e-3f64..10.0, frac in 0.0f64..1.0, n in 1usize..5) {
            let t = SingularFunction::new(n, 1.95 * PI).unwrap();
            let th = frac * t.omega;
            let v1 = t.value_polar(r, th).unwrap();
            let v2 = t.value_polar(2.0 * r, th).unwrap();
            prop_assert!((v2 - 2f64.powf(t.rho) * v1).abs() <= 1e-12 * v2.abs().max(1e-300) + 1e-15);
        }

        #[test]
        fn cutoff_gradient_bound(r in 0.0f64..3.0, big_r in 0.1f64..2.0) {
            let b = CutoffBump::new(big_r).unwrap();
            let v = b.eval([r, 0.0]);
            prop_assert!((0.0..=1.0).contains(&v.value));
            prop_assert!(v.gradient[0].abs() <= 4.0 / big_r);
        }
    }
}
