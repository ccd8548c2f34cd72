//! Heterogeneous and homogenized solves, singular coefficients, and the
//! classical and hybrid two-scale expansions.
//!
//! The homogenized operator is the Laplacian (the coefficient is normalized
//! so that `abar = Id`). Near the corner `ubar = sum gamma_n tau_n + ubar_reg`,
//! with `gamma_n` from the dual-function formula
//! `gamma_n = -(1/(n pi)) int ubar (2 grad tau*_n . grad eta + tau*_n Laplace eta)`.
//!
//! Expansions are built nodally and differentiated as P1 fields:
//!
//! * classical: `ubar + phi^D_i d_i ubar`;
//! * hybrid: `(1 + phi^D_i d_i) ubar_reg + sum gamma_n [(tau_n + phi^C_n) chi + tau_n phi^D_i d_i chi]`,
//!   where `ubar_reg = ubar - sum gamma_n tau_n chi`. On the plateau of `chi`
//!   this is `ubar_reg + phi^D_i d_i ubar_reg + sum gamma_n (tau_n + phi^C_n)`,
//!   and the hybrid differs from the classical expansion only by
//!   `sum gamma_n chi (phi^C_n - phi^D_i d_i tau_n)`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::correctors::{CorrectorSet, SectorOperator};
use crate::fem::{
    assemble_load_scalar, energy_seminorm_on, l2_average_on, subdivided_quadrature, FeFunction,
    SolveStats,
};
use crate::geometry::{SectorDomain, TriMesh};
use crate::singular::{smoothstep, CutoffBump, SingularFunction};
use crate::{Error, Point, Result};

/// Inner radius of the support of [`default_forcing`].
pub const FORCING_INNER_RADIUS: f64 = 0.4;
pub const DEFAULT_GAMMA_CUTOFF: f64 = 0.35;

/// Radial bump supported in `0.4 <= r <= 0.8`, equal to one on `0.5 <= r <= 0.7`.
pub fn default_forcing(x: Point) -> f64 {
    let r = x[0].hypot(x[1]);
    smoothstep((r - 0.4) / 0.1) * smoothstep((0.8 - r) / 0.1)
}

/// Solves `-div a grad u_eps = f` and `-Laplace ubar = f` with zero boundary data.
pub fn solve_pair(
    heterogeneous: &SectorOperator,
    homogenized: &SectorOperator,
    f: impl Fn(Point) -> f64 + Sync,
) -> Result<(FeFunction, FeFunction)> {
    if !Arc::ptr_eq(heterogeneous.mesh(), homogenized.mesh()) {
        return Err(Error::InvalidArgument(
            "both operators must share one mesh".into(),
        ));
    }
    let b = assemble_load_scalar(heterogeneous.mesh(), f);
    let (u_eps, _) = heterogeneous.solve(b.clone())?;
    let (u_bar, _) = homogenized.solve(b)?;
    Ok((u_eps, u_bar))
}

/// Solves `-div a grad u = f` on one operator.
pub fn solve_scalar(
    op: &SectorOperator,
    f: impl Fn(Point) -> f64 + Sync,
) -> Result<(FeFunction, SolveStats)> {
    op.solve(assemble_load_scalar(op.mesh(), f))
}

/// `gamma_n` of `u_bar` with the cutoff `eta` of support radius `r0`.
///
/// `u_bar` must be harmonic on `r < r0`; `r0` has to stay below the inner
/// radius of the default forcing. The integrand is `C^1` but not `C^2`
/// across the circles `r = r0/2` and `r = r0`, so elements cut by them use
/// a finer sub-triangulation than the rest of the annulus.
pub fn extract_gamma(u_bar: &FeFunction, n: usize, r0: f64) -> Result<f64> {
    extract_gamma_with(u_bar, n, r0, GAMMA_SUBDIVISIONS)
}

/// Sub-triangles per element edge used by [`extract_gamma`] as `(bulk, cut)`.
pub const GAMMA_SUBDIVISIONS: (usize, usize) = (2, 16);

/// [`extract_gamma`] with explicit `(bulk, cut)` subdivision levels.
pub fn extract_gamma_with(
    u_bar: &FeFunction,
    n: usize,
    r0: f64,
    subdivisions: (usize, usize),
) -> Result<f64> {
    if !(r0 > 0.0 && r0 < FORCING_INNER_RADIUS) {
        return Err(Error::InvalidCutoff(format!(
            "cutoff radius {r0} must lie in (0, {FORCING_INNER_RADIUS})"
        )));
    }
    let mesh = u_bar.mesh();
    let dual = SingularFunction::dual_of(n, mesh.domain().omega)?;
    let eta = CutoffBump::new(r0)?;
    let bulk_rule = subdivided_quadrature(subdivisions.0);
    let cut_rule = subdivided_quadrature(subdivisions.1);
    let (inner, outer) = (0.5 * r0, r0);
    let total: f64 = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let corners = mesh.corners(e);
            let radii = corners.map(|p| p[0].hypot(p[1]));
            let diam = (0..3)
                .map(|i| {
                    let (p, q) = (corners[i], corners[(i + 1) % 3]);
                    (p[0] - q[0]).hypot(p[1] - q[1])
                })
                .fold(0.0, f64::max);
            let r_hi = radii.iter().copied().fold(0.0, f64::max);
            let r_lo = radii.iter().copied().fold(f64::INFINITY, f64::min) - diam;
            if r_hi <= inner || r_lo >= outer {
                return 0.0;
            }
            let cut = (r_lo < inner && inner < r_hi) || (r_lo < outer && outer < r_hi);
            let rule = if cut { &cut_rule } else { &bulk_rule };
            let area = mesh.area(e);
            let mut acc = 0.0;
            for &(bary, w) in rule {
                let x = mesh.point_at(e, bary);
                let (r, t) = SectorDomain::polar(x);
                if r <= inner || r >= outer {
                    continue;
                }
                let c = eta.eval(x);
                let v = dual.value_polar(r, t).expect("r > 0");
                let g = dual.gradient_polar(r, t).expect("r > 0");
                let kernel = 2.0 * (g[0] * c.gradient[0] + g[1] * c.gradient[1]) + v * c.laplacian;
                acc += w * area * u_bar.eval_in(e, bary) * kernel;
            }
            acc
        })
        .sum();
    Ok(-total / (n as f64 * std::f64::consts::PI))
}

/// `gamma_1..gamma_N`.
pub fn extract_gammas(u_bar: &FeFunction, n_modes: usize, r0: f64) -> Result<Vec<f64>> {
    (1..=n_modes).map(|n| extract_gamma(u_bar, n, r0)).collect()
}

/// Nodal interpolant of `tau_n` on `mesh`.
pub fn singular_interpolant(mesh: &Arc<TriMesh>, n: usize) -> Result<FeFunction> {
    let tau = SingularFunction::new(n, mesh.domain().omega)?;
    Ok(FeFunction::interpolate_polar(mesh.clone(), |r, t| {
        tau.value_polar(r, t).expect("primal functions are finite")
    }))
}

/// `ubar_reg = ubar - sum gamma_n I(tau_n chi)` at the nodes.
pub fn build_u_reg(u_bar: &FeFunction, gamma: &[f64], chi: &CutoffBump) -> Result<FeFunction> {
    let mesh = u_bar.mesh();
    let mut out = u_bar.clone();
    for (k, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let tau = singular_interpolant(mesh, k + 1)?;
        for (v, val) in out.values_mut().iter_mut().enumerate() {
            let r = mesh.vertex_polar(v).0;
            *val -= g * tau.values()[v] * chi.value_at_radius(r);
        }
    }
    Ok(out)
}

/// `ubar + phi^D_i d_i ubar` with the recovered nodal gradient of `ubar`.
pub fn classical_expansion(u_bar: &FeFunction, correctors: &CorrectorSet) -> FeFunction {
    add_dirichlet_terms(u_bar, correctors)
}

fn add_dirichlet_terms(u: &FeFunction, correctors: &CorrectorSet) -> FeFunction {
    let grad = u.recover_gradient_nodal();
    let mut out = u.clone();
    for i in 0..2 {
        let phi = correctors.dirichlet[i].values();
        let g = grad.components[i].values();
        for (v, val) in out.values_mut().iter_mut().enumerate() {
            *val += phi[v] * g[v];
        }
    }
    out
}

/// Hybrid expansion with corner terms for `n = 1..=gamma.len()`.
pub fn hybrid_expansion(
    u_reg: &FeFunction,
    gamma: &[f64],
    correctors: &CorrectorSet,
    chi: &CutoffBump,
) -> Result<FeFunction> {
    if correctors.corner.len() < gamma.len() {
        return Err(Error::InvalidArgument(format!(
            "{} singular coefficients but only {} corner correctors",
            gamma.len(),
            correctors.corner.len()
        )));
    }
    let mesh = u_reg.mesh();
    let mut out = add_dirichlet_terms(u_reg, correctors);
    let phi_d = [
        correctors.dirichlet[0].values(),
        correctors.dirichlet[1].values(),
    ];
    for (k, &g) in gamma.iter().enumerate() {
        let tau = singular_interpolant(mesh, k + 1)?;
        let phi_c = correctors.corner[k].values();
        for (v, val) in out.values_mut().iter_mut().enumerate() {
            let c = chi.eval(mesh.vertices()[v]);
            let t = tau.values()[v];
            let commutator = t * (phi_d[0][v] * c.gradient[0] + phi_d[1][v] * c.gradient[1]);
            *val += g * ((t + phi_c[v]) * c.value + commutator);
        }
    }
    Ok(out)
}

/// Per-element gradient of `u_eps - expansion`.
pub fn error_field(u_eps: &FeFunction, expansion: &FeFunction) -> Vec<Point> {
    u_eps.axpby(1.0, expansion, -1.0).gradient_p0()
}

/// All fields of one two-scale comparison.
#[derive(Clone, Debug)]
pub struct ExpansionBundle {
    pub epsilon: Option<f64>,
    pub u_eps: FeFunction,
    pub u_bar: FeFunction,
    pub gamma: Vec<f64>,
    pub u_reg: FeFunction,
    pub classical: FeFunction,
    pub hybrid: FeFunction,
    pub err_classical: Vec<Point>,
    pub err_hybrid: Vec<Point>,
}

impl ExpansionBundle {
    /// Builds both expansions from solved fields. `chi` is the cutoff of the
    /// corner terms, `r0` the cutoff radius used for the singular coefficients.
    pub fn assemble(
        u_eps: FeFunction,
        u_bar: FeFunction,
        correctors: &CorrectorSet,
        n_modes: usize,
        r0: f64,
        chi: &CutoffBump,
    ) -> Result<Self> {
        let gamma = extract_gammas(&u_bar, n_modes, r0)?;
        let u_reg = build_u_reg(&u_bar, &gamma, chi)?;
        let classical = classical_expansion(&u_bar, correctors);
        let hybrid = hybrid_expansion(&u_reg, &gamma, correctors, chi)?;
        let err_classical = error_field(&u_eps, &classical);
        let err_hybrid = error_field(&u_eps, &hybrid);
        Ok(Self {
            epsilon: correctors.epsilon,
            u_eps,
            u_bar,
            gamma,
            u_reg,
            classical,
            hybrid,
            err_classical,
            err_hybrid,
        })
    }

    pub fn summary(&self) -> Result<TwoScaleSummary> {
        let mesh = self.u_eps.mesh();
        let all: Vec<usize> = (0..mesh.num_triangles()).collect();
        let l2 = |f: &FeFunction| -> Result<f64> {
            let d = self.u_eps.axpby(1.0, f, -1.0);
            Ok(l2_average_on(&d, &all)? * mesh.total_area().sqrt())
        };
        Ok(TwoScaleSummary {
            epsilon: self.epsilon.unwrap_or(f64::NAN),
            gamma: self.gamma.clone(),
            l2_err_classical: l2(&self.classical)?,
            l2_err_hybrid: l2(&self.hybrid)?,
            energy_err_classical: energy_seminorm_on(mesh, &all, &self.err_classical, false)?,
            energy_err_hybrid: energy_seminorm_on(mesh, &all, &self.err_hybrid, false)?,
        })
    }
}

/// Global error norms of one bundle.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TwoScaleSummary {
    pub epsilon: f64,
    pub gamma: Vec<f64>,
    pub l2_err_classical: f64,
    pub l2_err_hybrid: f64,
    pub energy_err_classical: f64,
    pub energy_err_hybrid: f64,
}

/// CSV `epsilon,gamma_1..gamma_N,l2_err_classical,l2_err_hybrid,energy_err_classical,energy_err_hybrid`.
pub fn write_summary_csv<W: Write>(rows: &[TwoScaleSummary], mut w: W) -> std::io::Result<()> {
    let n = rows.first().map_or(0, |r| r.gamma.len());
    let mut header = String::from("epsilon");
    for k in 1..=n {
        header.push_str(&format!(",gamma_{k}"));
    }
    header.push_str(",l2_err_classical,l2_err_hybrid,energy_err_classical,energy_err_hybrid");
    writeln!(w, "{header}")?;
    for r in rows {
        let mut line = format!("{:?}", r.epsilon);
        for g in &r.gamma {
            line.push_str(&format!(",{g:?}"));
        }
        writeln!(
            w,
            "{line},{:?},{:?},{:?},{:?}",
            r.l2_err_classical, r.l2_err_hybrid, r.energy_err_classical, r.energy_err_hybrid
        )?;
    }
    Ok(())
}
