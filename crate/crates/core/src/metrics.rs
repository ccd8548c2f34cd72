//! Shell error curves, log-log slope fits, gain reports and the excess functional.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::correctors::{solve_corner_corrector, SectorOperator};
use crate::fem::{energy_seminorm_on, solve_cg, FeFunction, SparseSystem};
use crate::geometry::{BoundaryTag, TriMesh};
use crate::linalg;
use crate::two_scale::singular_interpolant;
use crate::{Error, Point, Result};

/// `outer * 2^-k` for `k = k_min..=k_max`, largest first.
pub fn dyadic_radii(outer: f64, k_min: u32, k_max: u32) -> Vec<f64> {
    (k_min..=k_max)
        .map(|k| outer * 0.5f64.powi(k as i32))
        .collect()
}

/// `count` geometrically spaced radii from `hi` down to `lo`.
pub fn geometric_radii(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::InvalidArgument(format!(
            "geometric radii need 0 < {lo} < {hi} and count >= 2"
        )));
    }
    let q = (lo / hi).powf(1.0 / (count - 1) as f64);
    Ok((0..count)
        .map(|k| {
            if k + 1 == count {
                lo
            } else {
                hi * q.powi(k as i32)
            }
        })
        .collect())
}

/// `E(R) = (avg over the shell (R/2, R] of |err|^2)^(1/2)` for every radius.
pub fn shell_error_curve(mesh: &TriMesh, err: &[Point], radii: &[f64]) -> Result<Vec<f64>> {
    if err.len() != mesh.num_triangles() {
        return Err(Error::InvalidArgument(format!(
            "error field has {} entries for {} elements",
            err.len(),
            mesh.num_triangles()
        )));
    }
    radii
        .iter()
        .map(|&r| energy_seminorm_on(mesh, &mesh.shell_elements(r)?, err, true))
        .collect()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half width of the 95% confidence interval of the slope.
    pub half_width: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn interval(&self) -> (f64, f64) {
        (self.slope - self.half_width, self.slope + self.half_width)
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit(format!(
            "{} abscissae for {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 4 {
        return Err(Error::Fit(format!("{} points, need at least 4", xs.len())));
    }
    if let Some((x, y)) = xs
        .iter()
        .zip(ys)
        .find(|(x, y)| !(**x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::Fit(format!(
            "nonpositive or nonfinite point ({x}, {y})"
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = n - 2.0;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Fit(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        half_width: t * (sse / dof / sxx).sqrt(),
        points: xs.len(),
    })
}

/// Fit restricted to the points with `window[0] <= x <= window[1]`.
pub fn loglog_slope_in(xs: &[f64], ys: &[f64], window: [f64; 2]) -> Result<SlopeFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| **x >= window[0] * (1.0 - 1e-12) && **x <= window[1] * (1.0 + 1e-12))
        .map(|(x, y)| (*x, *y))
        .unzip();
    loglog_slope(&x, &y)
}

/// `min over gamma of avg_D |grad u - sum gamma_n b_n|^2` over the element set
/// `D`, with piecewise constant gradients. Returns the minimum and the minimizer.
pub fn excess(
    mesh: &TriMesh,
    grad_u: &[Point],
    elements: &[usize],
    basis: &[Vec<Point>],
) -> Result<(f64, Vec<f64>)> {
    if elements.is_empty() {
        return Err(Error::EmptyRegion(
            "excess over an empty element set".into(),
        ));
    }
    let n = basis.len();
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut uu = 0.0;
    let mut area = 0.0;
    for &e in elements {
        let a = mesh.area(e);
        area += a;
        uu += a * linalg::dot(grad_u[e], grad_u[e]);
        for i in 0..n {
            rhs[i] += a * linalg::dot(basis[i][e], grad_u[e]);
            for j in 0..n {
                gram[i * n + j] += a * linalg::dot(basis[i][e], basis[j][e]);
            }
        }
    }
    if n == 0 {
        return Ok((uu / area, Vec::new()));
    }
    let scale = (0..n).map(|i| gram[i * n + i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Rank("basis gradients vanish on the region".into()));
    }
    let gamma = linalg::solve_dense(&gram, &rhs, 1e-10 * scale).map_err(|e| match e {
        Error::Rank(m) => Error::Rank(m),
        other => Error::Rank(other.to_string()),
    })?;
    let mut value = 0.0;
    for &e in elements {
        let mut d = grad_u[e];
        for (g, b) in gamma.iter().zip(basis) {
            d[0] -= g * b[e][0];
            d[1] -= g * b[e][1];
        }
        value += mesh.area(e) * linalg::dot(d, d);
    }
    Ok((value / area, gamma))
}

/// One row of an excess table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcessRow {
    /// Radius of the layer-aligned disk actually used.
    pub r: f64,
    pub excess: f64,
    pub gamma: Vec<f64>,
}

/// Excess of `u` against the gradients of the `corrected_basis` on the
/// layer-aligned disks inside each radius.
pub fn excess_profile(
    u: &FeFunction,
    corrected_basis: &[FeFunction],
    radii: &[f64],
) -> Result<Vec<ExcessRow>> {
    let mesh = u.mesh();
    let grad = u.gradient_p0();
    let basis: Vec<Vec<Point>> = corrected_basis.iter().map(|b| b.gradient_p0()).collect();
    radii
        .iter()
        .map(|&r| {
            let (rk, elements) = mesh.layer_disk(r)?;
            let (excess, gamma) = excess(mesh, &grad, &elements, &basis)?;
            Ok(ExcessRow {
                r: rk,
                excess,
                gamma,
            })
        })
        .collect()
}

/// `I(tau_n) + phi^C_n` for `n = 1..=n_modes`.
pub fn corrected_singular_basis(op: &SectorOperator, n_modes: usize) -> Result<Vec<FeFunction>> {
    (1..=n_modes)
        .map(|n| {
            let tau = singular_interpolant(op.mesh(), n)?;
            let (phi, _) = solve_corner_corrector(op, n)?;
            Ok(tau.axpby(1.0, &phi, 1.0))
        })
        .collect()
}

/// Arc data `sum_n c_n sin(n pi theta / omega)` with `c_1 = 1` and
/// `c_n` uniform in `[-1/n, 1/n]` for `n >= 2`.
pub fn random_arc_coefficients(seed: u64, modes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=modes)
        .map(|n| {
            if n == 1 {
                1.0
            } else {
                rng.gen_range(-1.0..1.0) / n as f64
            }
        })
        .collect()
}

/// Solves `-div a grad u = 0` with `u = sum c_n sin(n pi theta / omega)` on the
/// arc and `u = 0` on both edges.
pub fn solve_arc_problem(op: &SectorOperator, coefficients: &[f64]) -> Result<FeFunction> {
    let mesh = op.mesh();
    let omega = mesh.domain().omega;
    let g = |t: f64| -> f64 {
        coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t / omega).sin())
            .sum()
    };
    let mut dirichlet: Vec<Option<f64>> = (0..mesh.num_vertices())
        .map(|v| mesh.is_boundary_vertex(v).then_some(0.0))
        .collect();
    for (edge, tag) in mesh.boundary_edges() {
        if *tag == BoundaryTag::Arc {
            for &v in edge {
                let t = mesh.vertex_polar(v).1.clamp(0.0, omega);
                dirichlet[v] = Some(g(t));
            }
        }
    }
    let rhs = vec![0.0; mesh.num_vertices()];
    let sys = SparseSystem::new(op.stiffness().clone(), rhs, dirichlet);
    let (x, _) = solve_cg(&sys, op.options())?;
    FeFunction::new(Arc::clone(mesh), x)
}

/// Result of [`excess_decay_experiment`].
#[derive(Clone, Debug, Serialize)]
pub struct ExcessDecay {
    pub n_modes: usize,
    pub arc_coefficients: Vec<f64>,
    pub rows: Vec<ExcessRow>,
    pub fit_window: [f64; 2],
    pub fit: SlopeFit,
}

/// Excess of an `a`-harmonic function with random arc data against the
/// corrected singular basis with `n_modes` terms, fitted over `fit_window`.
pub fn excess_decay_experiment(
    op: &SectorOperator,
    n_modes: usize,
    seed: u64,
    radii: &[f64],
    fit_window: [f64; 2],
) -> Result<ExcessDecay> {
    let arc_coefficients = random_arc_coefficients(seed, 6);
    let u = solve_arc_problem(op, &arc_coefficients)?;
    let basis = corrected_singular_basis(op, n_modes)?;
    let rows = excess_profile(&u, &basis, radii)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.excess).collect();
    let fit = loglog_slope_in(&xs, &ys, fit_window)?;
    Ok(ExcessDecay {
        n_modes,
        arc_coefficients,
        rows,
        fit_window,
        fit,
    })
}

/// CSV `r,excess,gamma_1..gamma_N`.
pub fn write_excess_csv<W: Write>(rows: &[ExcessRow], mut w: W) -> std::io::Result<()> {
    let n = rows.first().map_or(0, |r| r.gamma.len());
    let mut header = String::from("r,excess");
    for k in 1..=n {
        header.push_str(&format!(",gamma_{k}"));
    }
    writeln!(w, "{header}")?;
    for row in rows {
        let mut line = format!("{:?},{:?}", row.r, row.excess);
        for g in &row.gamma {
            line.push_str(&format!(",{g:?}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Shell errors of the classical (`e0`) and hybrid (`e1`) expansions.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub epsilon: f64,
    pub shell_radii: Vec<f64>,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub gain: Vec<f64>,
    pub fit_window: [f64; 2],
    pub slope_gain: Option<SlopeFit>,
    pub slope_e0: Option<SlopeFit>,
    pub slope_e1: Option<SlopeFit>,
    pub config_hash: Option<String>,
    pub config: Option<serde_json::Value>,
}

impl ExperimentReport {
    /// Builds the report from the two error fields. Slopes are `None` when
    /// fewer than four shells fall in `fit_window`.
    pub fn from_errors(
        mesh: &TriMesh,
        epsilon: f64,
        err_classical: &[Point],
        err_hybrid: &[Point],
        shell_radii: &[f64],
        fit_window: [f64; 2],
    ) -> Result<Self> {
        let e0 = shell_error_curve(mesh, err_classical, shell_radii)?;
        let e1 = shell_error_curve(mesh, err_hybrid, shell_radii)?;
        let gain: Vec<f64> = e0
            .iter()
            .zip(&e1)
            .map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN })
            .collect();
        let fit = |ys: &[f64]| loglog_slope_in(shell_radii, ys, fit_window).ok();
        Ok(Self {
            epsilon,
            shell_radii: shell_radii.to_vec(),
            slope_gain: fit(&gain),
            slope_e0: fit(&e0),
            slope_e1: fit(&e1),
            e0,
            e1,
            gain,
            fit_window,
            config_hash: None,
            config: None,
        })
    }
}

/// CSV `R,E0,E1,gain`.
pub fn write_gain_csv<W: Write>(report: &ExperimentReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "R,E0,E1,gain")?;
    for k in 0..report.shell_radii.len() {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?}",
            report.shell_radii[k], report.e0[k], report.e1[k], report.gain[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sector_mesh, SectorDomain};
    use crate::singular::SingularFunction;
    use std::f64::consts::PI;

    fn mesh(omega: f64, h: f64) -> Arc<TriMesh> {
        Arc::new(build_sector_mesh(SectorDomain::new(omega, 1.0).unwrap(), h, 2.0).unwrap())
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = loglog_slope(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.half_width < 1e-10);
        assert!(loglog_slope(&xs[..1], &ys[..1]).is_err());
        assert!(loglog_slope(&xs[..3], &ys[..3]).is_err());
        assert!(loglog_slope(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn noisy_power_law_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..12).map(|k| 0.5f64.powf(k as f64 / 2.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 3.0 * x.powf(-0.6) * (1.0 + 0.05 * rng.gen_range(-1.0..1.0)))
            .collect();
        let f = loglog_slope(&xs, &ys).unwrap();
        assert!((f.slope + 0.6).abs() < 0.1);
        let (lo, hi) = f.interval();
        assert!(lo < -0.6 && -0.6 < hi);
    }

    #[test]
    fn t_quantile_matches_table() {
        // five points: 3 degrees of freedom, t_0.975 = 3.182446
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys = [1.0, 2.2, 3.7, 8.5, 15.0];
        let f = loglog_slope(&xs, &ys).unwrap();
        let lx: Vec<f64> = xs.iter().map(|x: &f64| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y: &f64| y.ln()).collect();
        let mx = lx.iter().sum::<f64>() / 5.0;
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        let sse: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - f.intercept - f.slope * x).powi(2))
            .sum();
        let expect = 3.182446 * (sse / 3.0 / sxx).sqrt();
        assert!((f.half_width - expect).abs() < 1e-5 * expect);
    }

    #[test]
    fn shell_curve_of_trivial_fields() {
        let m = mesh(1.5 * PI, 0.05);
        let radii = dyadic_radii(1.0, 0, 3);
        let zero = vec![[0.0, 0.0]; m.num_triangles()];
        assert!(shell_error_curve(&m, &zero, &radii)
            .unwrap()
            .iter()
            .all(|&e| e == 0.0));
        let unit = vec![[0.6, 0.8]; m.num_triangles()];
        for e in shell_error_curve(&m, &unit, &radii).unwrap() {
            assert!((e - 1.0).abs() < 1e-14);
        }
        assert!(shell_error_curve(&m, &zero[1..], &radii).is_err());
    }

    #[test]
    fn shell_curve_of_singular_gradient() {
        // avg over the shell of |grad tau_1|^2 = rho^2 r^(2 rho - 2) in polar form,
        // so E(R) = c R^(rho - 1) exactly
        let omega = 1.95 * PI;
        let m = mesh(omega, 0.01);
        let tau = SingularFunction::new(1, omega).unwrap();
        let grad: Vec<Point> = (0..m.num_triangles())
            .map(|e| tau.eval(m.centroid(e)).unwrap().1)
            .collect();
        let radii = dyadic_radii(1.0, 1, 6);
        let e = shell_error_curve(&m, &grad, &radii).unwrap();
        let f = loglog_slope(&radii, &e).unwrap();
        assert!((f.slope - (tau.rho - 1.0)).abs() < 0.02, "{f:?}");
    }

    #[test]
    fn excess_of_span_member_vanishes() {
        let omega = 1.5 * PI;
        let m = mesh(omega, 0.03);
        let op = SectorOperator::laplacian(m.clone(), Default::default()).unwrap();
        let basis = corrected_singular_basis(&op, 2).unwrap();
        let u = basis[0].axpby(1.0, &basis[1], -0.3);
        let rows = excess_profile(&u, &basis, &[0.5, 0.25]).unwrap();
        for row in rows {
            assert!(row.excess < 1e-20);
            assert!((row.gamma[0] - 1.0).abs() < 1e-10 && (row.gamma[1] + 0.3).abs() < 1e-10);
        }
    }

    #[test]
    fn excess_nesting_and_orthogonality() {
        let omega = 1.95 * PI;
        let m = mesh(omega, 0.01);
        let op = SectorOperator::laplacian(m.clone(), Default::default()).unwrap();
        let basis = corrected_singular_basis(&op, 2).unwrap();
        let t2 = singular_interpolant(&m, 2).unwrap();
        let u = basis[0].axpby(0.7, &t2, 1.0);
        let radii = dyadic_radii(1.0, 2, 6);
        let e0 = excess_profile(&u, &[], &radii).unwrap();
        let e1 = excess_profile(&u, &basis[..1], &radii).unwrap();
        let e2 = excess_profile(&u, &basis, &radii).unwrap();
        for k in 0..radii.len() {
            assert!(e1[k].excess <= e0[k].excess && e2[k].excess <= e1[k].excess);
        }
        // tau_2 is orthogonal to tau_1 on every disk: gamma_1 = 0.7 and Exc_1 = avg |grad tau_2|^2
        let grad2 = t2.gradient_p0();
        for row in &e1 {
            assert!((row.gamma[0] - 0.7).abs() < 2e-3, "{row:?}");
            let (_, d) = m.layer_disk(row.r).unwrap();
            let direct = energy_seminorm_on(&m, &d, &grad2, true).unwrap().powi(2);
            assert!((row.excess - direct).abs() < 1e-2 * direct);
        }
        let rho2 = SingularFunction::new(2, omega).unwrap().rho;
        let f = loglog_slope(
            &e1.iter().map(|r| r.r).collect::<Vec<_>>(),
            &e1.iter().map(|r| r.excess).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((f.slope - 2.0 * (rho2 - 1.0)).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn excess_rank_error_on_duplicated_basis() {
        let m = mesh(PI, 0.05);
        let t = singular_interpolant(&m, 1).unwrap();
        let g = t.gradient_p0();
        let all: Vec<usize> = (0..m.num_triangles()).collect();
        assert!(matches!(
            excess(&m, &g, &all, &[g.clone(), g.clone()]),
            Err(Error::Rank(_))
        ));
        let zero = vec![[0.0, 0.0]; m.num_triangles()];
        assert!(matches!(excess(&m, &g, &all, &[zero]), Err(Error::Rank(_))));
    }

    #[test]
    fn arc_problem_recovers_harmonic_modes() {
        let omega = 1.5 * PI;
        let m = mesh(omega, 0.02);
        let op = SectorOperator::laplacian(m.clone(), Default::default()).unwrap();
        let u = solve_arc_problem(&op, &[1.0, 0.5]).unwrap();
        let t1 = SingularFunction::new(1, omega).unwrap();
        let t2 = SingularFunction::new(2, omega).unwrap();
        for &(r, th) in &[(0.5, 1.0), (0.8, 3.0), (0.2, 4.0)] {
            let exact = t1.value_polar(r, th).unwrap() + 0.5 * t2.value_polar(r, th).unwrap();
            let x = [r * f64::cos(th), r * f64::sin(th)];
            assert!((u.eval_at(x).unwrap() - exact).abs() < 5e-3);
        }
    }

    #[test]
    fn random_coefficients_are_seeded() {
        let a = random_arc_coefficients(7, 6);
        assert_eq!(a, random_arc_coefficients(7, 6));
        assert_ne!(a, random_arc_coefficients(8, 6));
        assert_eq!(a[0], 1.0);
        for (k, c) in a.iter().enumerate().skip(1) {
            assert!(c.abs() <= 1.0 / (k + 1) as f64);
        }
    }

    #[test]
    fn gain_report_identity_and_csv() {
        let m = mesh(1.5 * PI, 0.02);
        let e0: Vec<Point> = (0..m.num_triangles())
            .map(|e| [m.centroid(e)[0], 1.0])
            .collect();
        let e1: Vec<Point> = (0..m.num_triangles())
            .map(|e| [0.0, 0.1 + m.centroid(e)[1]])
            .collect();
        let radii = dyadic_radii(1.0, 0, 5);
        let rep = ExperimentReport::from_errors(&m, 0.1, &e0, &e1, &radii, [0.03, 1.0]).unwrap();
        for k in 0..radii.len() {
            assert_eq!(rep.gain[k].to_bits(), (rep.e0[k] / rep.e1[k]).to_bits());
            assert!(rep.gain[k] > 0.0);
        }
        assert!(rep.slope_gain.is_some());
        let mut buf = Vec::new();
        write_gain_csv(&rep, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("R,E0,E1,gain\n"));
        assert_eq!(s.lines().count(), radii.len() + 1);
    }

    #[test]
    fn geometric_radii_endpoints() {
        let r = geometric_radii(0.2, 0.5, 5).unwrap();
        assert_eq!(r[0], 0.5);
        assert_eq!(r[4], 0.2);
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert!(geometric_radii(0.5, 0.2, 5).is_err());
    }
}
