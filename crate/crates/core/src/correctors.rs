//! Dirichlet and corner correctors on the truncated sector.
//!
//! Both solve `-div a (grad phi + g) = 0` with `phi = 0` on the whole boundary,
//! with `g = e_i` (Dirichlet corrector) or `g = grad tau_n` (corner corrector).
//! The identity part of `a g` is divergence free in both cases, so its weak
//! form vanishes against every interior hat function and only `(a - Id) g`
//! enters the load. For `a = Id` the correctors are therefore exactly zero.

use std::io::Write;
use std::sync::Arc;

use crate::cell::CellCorrectors;
use crate::coeff::CoeffField;
use crate::fem::{
    assemble_load_div, assemble_stiffness, energy_seminorm_on, l2_average_on, solve_homogeneous,
    subdivided_quadrature, CsrMatrix, FeFunction, SolveStats, SolverOptions,
};
use crate::geometry::{build_sector_mesh, SectorDomain, TriMesh};
use crate::linalg::{self, Mat2};
use crate::singular::SingularFunction;
use crate::{Error, Point, Result};

/// Elements per oscillation length required by [`check_resolution`].
pub const ELEMENTS_PER_PERIOD: f64 = 8.0;

/// Refuses meshes whose longest edge exceeds `epsilon / 8` for oscillating fields.
pub fn check_resolution(mesh: &TriMesh, field: &CoeffField) -> Result<()> {
    if let Some(eps) = field.epsilon() {
        let h = mesh.max_edge_length();
        if h > eps / ELEMENTS_PER_PERIOD * (1.0 + 1e-9) {
            return Err(Error::Resolution(format!(
                "longest edge {h:.3e} exceeds epsilon/{ELEMENTS_PER_PERIOD} = {:.3e}",
                eps / ELEMENTS_PER_PERIOD
            )));
        }
    }
    Ok(())
}

/// Largest target size (shrunk in 2% steps from `eps / (8 g sqrt 2)`) whose
/// graded mesh passes [`check_resolution`] at oscillation length `eps`.
pub fn resolving_mesh(domain: SectorDomain, eps: f64, grading: f64) -> Result<TriMesh> {
    resolving_mesh_with(domain, eps, grading, ELEMENTS_PER_PERIOD)
}

/// As [`resolving_mesh`] with longest edge at most `eps / elements_per_period`.
pub fn resolving_mesh_with(
    domain: SectorDomain,
    eps: f64,
    grading: f64,
    elements_per_period: f64,
) -> Result<TriMesh> {
    if !(elements_per_period >= ELEMENTS_PER_PERIOD) {
        return Err(Error::InvalidArgument(format!(
            "{elements_per_period} elements per period is below the minimum {ELEMENTS_PER_PERIOD}"
        )));
    }
    let target = eps / elements_per_period;
    let mut h = target / (grading * std::f64::consts::SQRT_2);
    for _ in 0..50 {
        let mesh = build_sector_mesh(domain, h, grading)?;
        if mesh.max_edge_length() <= target {
            return Ok(mesh);
        }
        h *= 0.98;
    }
    Err(Error::Resolution(format!(
        "no mesh resolves epsilon = {eps} with {elements_per_period} elements per period"
    )))
}

/// Assembled operator `-div a grad` with zero Dirichlet data on the sector.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    mesh: Arc<TriMesh>,
    field: CoeffField,
    stiffness: CsrMatrix,
    opts: SolverOptions,
}

impl SectorOperator {
    pub fn new(mesh: Arc<TriMesh>, field: CoeffField, opts: SolverOptions) -> Result<Self> {
        check_resolution(&mesh, &field)?;
        let f = field.clone();
        let stiffness = assemble_stiffness(&mesh, move |x| f.eval(x))?;
        Ok(Self {
            mesh,
            field,
            stiffness,
            opts,
        })
    }

    /// The Laplacian, i.e. the homogenized operator after normalization.
    pub fn laplacian(mesh: Arc<TriMesh>, opts: SolverOptions) -> Result<Self> {
        Self::new(mesh, CoeffField::identity(), opts)
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn field(&self) -> &CoeffField {
        &self.field
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn options(&self) -> SolverOptions {
        self.opts
    }

    pub fn solve(&self, rhs: Vec<f64>) -> Result<(FeFunction, SolveStats)> {
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok((FeFunction::zeros(self.mesh.clone()), SolveStats::default()));
        }
        solve_homogeneous(&self.mesh, &self.stiffness, rhs, self.opts)
    }
}

/// `phi^D_i`: zero boundary values, `-div a (grad phi + e_i) = 0`.
pub fn solve_dirichlet_corrector(
    op: &SectorOperator,
    i: usize,
) -> Result<(FeFunction, SolveStats)> {
    if i > 1 {
        return Err(Error::InvalidArgument(format!(
            "direction {i} not in {{0, 1}}"
        )));
    }
    let field = op.field();
    let rhs = assemble_load_div(op.mesh(), |x| {
        let a = linalg::mat_sub(&field.eval(x), &linalg::IDENTITY);
        [a[0][i], a[1][i]]
    });
    op.solve(rhs)
}

/// `phi^C_n`: zero boundary values, `-div a (grad phi + grad tau_n) = 0`,
/// with `grad tau_n` evaluated analytically at the quadrature points.
pub fn solve_corner_corrector(op: &SectorOperator, n: usize) -> Result<(FeFunction, SolveStats)> {
    let tau = SingularFunction::new(n, op.mesh().domain().omega)?;
    let field = op.field();
    let rhs = assemble_load_div(op.mesh(), |x| {
        let (r, t) = SectorDomain::polar(x);
        let g = tau
            .gradient_polar(r, t)
            .expect("quadrature points avoid the corner");
        let a = linalg::mat_sub(&field.eval(x), &linalg::IDENTITY);
        linalg::mat_vec(&a, g)
    });
    op.solve(rhs)
}

/// Dirichlet correctors for both directions and corner correctors `n = 1..=n_corner`.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub epsilon: Option<f64>,
    pub dirichlet: [FeFunction; 2],
    pub corner: Vec<FeFunction>,
    /// Final relative solver residuals: both Dirichlet correctors, then the corner ones.
    pub residual_norms: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl CorrectorSet {
    pub fn solve(op: &SectorOperator, n_corner: usize) -> Result<Self> {
        let (d0, s0) = solve_dirichlet_corrector(op, 0)?;
        let (d1, s1) = solve_dirichlet_corrector(op, 1)?;
        let mut residual_norms = vec![s0.final_residual(), s1.final_residual()];
        let mut iterations = vec![s0.iterations, s1.iterations];
        let mut corner = Vec::with_capacity(n_corner);
        for n in 1..=n_corner {
            let (c, s) = solve_corner_corrector(op, n)?;
            residual_norms.push(s.final_residual());
            iterations.push(s.iterations);
            corner.push(c);
        }
        Ok(Self {
            epsilon: op.field().epsilon(),
            dirichlet: [d0, d1],
            corner,
            residual_norms,
            iterations,
        })
    }
}

/// One row of a growth profile.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GrowthRow {
    pub radius: f64,
    pub shell_l2: f64,
    pub shell_energy: f64,
}

/// Shell averages `(avg |u|^2)^(1/2)` and `(avg |grad u|^2)^(1/2)` over `(R/2, R]`.
pub fn growth_profile(u: &FeFunction, radii: &[f64]) -> Result<Vec<GrowthRow>> {
    let mesh = u.mesh();
    let grad = u.gradient_p0();
    radii
        .iter()
        .map(|&r| {
            let shell = mesh.shell_elements(r)?;
            Ok(GrowthRow {
                radius: r,
                shell_l2: l2_average_on(u, &shell)?,
                shell_energy: energy_seminorm_on(mesh, &shell, &grad, true)?,
            })
        })
        .collect()
}

pub fn write_growth_csv<W: Write>(rows: &[GrowthRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "R,shell_l2,shell_energy")?;
    for row in rows {
        writeln!(
            w,
            "{:?},{:?},{:?}",
            row.radius, row.shell_l2, row.shell_energy
        )?;
    }
    Ok(())
}

/// Cell correctors pulled back to physical coordinates:
/// `phi_eps,i(x) = eps sum_k S_ik phi_k(S^T x / eps)` and likewise for `sigma_i12`.
#[derive(Clone, Copy, Debug)]
pub struct CellPullback<'a> {
    cell: &'a CellCorrectors,
    rotation: Mat2,
    period: f64,
}

impl<'a> CellPullback<'a> {
    /// `cell` must have been solved for the cell profile of `field`.
    pub fn new(cell: &'a CellCorrectors, field: &CoeffField) -> Self {
        let (rotation, period) = match field.periodic_structure() {
            Some(p) => (p.rotation(), p.period),
            None => (linalg::IDENTITY, 1.0),
        };
        Self {
            cell,
            rotation,
            period,
        }
    }

    fn to_cell(&self, x: Point) -> Point {
        let y = linalg::mat_vec(&linalg::transpose(&self.rotation), x);
        [y[0] / self.period, y[1] / self.period]
    }

    /// Value and gradient of `phi_eps,i` at `x`.
    pub fn phi(&self, i: usize, x: Point) -> (f64, Point) {
        let y = self.to_cell(x);
        let s = &self.rotation;
        let (mut v, mut g_cell) = (0.0, [0.0; 2]);
        for k in 0..2 {
            let gk = self.cell.phi[k].gradient_at(y);
            v += s[i][k] * self.cell.phi[k].eval(y);
            g_cell[0] += s[i][k] * gk[0];
            g_cell[1] += s[i][k] * gk[1];
        }
        (self.period * v, linalg::mat_vec(s, g_cell))
    }

    /// `sigma_eps,i12` at `x`.
    pub fn sigma(&self, i: usize, x: Point) -> f64 {
        let y = self.to_cell(x);
        let s = &self.rotation;
        self.period
            * (0..2)
                .map(|k| s[i][k] * self.cell.sigma[k].eval(y))
                .sum::<f64>()
    }

    /// Homogenized matrix in physical coordinates, `S abar S^T`.
    pub fn abar(&self) -> Mat2 {
        let s = &self.rotation;
        let sa = [
            linalg::mat_vec(&linalg::transpose(&self.cell.abar), s[0]),
            linalg::mat_vec(&linalg::transpose(&self.cell.abar), s[1]),
        ];
        // (S A S^T)_ij = s_i . A s_j with s_i the rows of S
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = linalg::dot(sa[i], s[j]);
            }
        }
        out
    }
}

/// Interior vertices with `r` in `[r_lo, r_hi]` and angle in `[t_lo, t_hi]`.
pub fn bulk_vertices(mesh: &TriMesh, r_range: [f64; 2], theta_range: [f64; 2]) -> Vec<usize> {
    (0..mesh.num_vertices())
        .filter(|&v| {
            let (r, t) = mesh.vertex_polar(v);
            !mesh.is_boundary_vertex(v)
                && r >= r_range[0]
                && r <= r_range[1]
                && t >= theta_range[0]
                && t <= theta_range[1]
        })
        .collect()
}

/// Normalized nodal inner product `<u, v> / (|u| |v|)` over `vertices`.
pub fn nodal_correlation(u: &FeFunction, v: impl Fn(Point) -> f64, vertices: &[usize]) -> f64 {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for &i in vertices {
        let a = u.values()[i];
        let b = v(u.mesh().vertices()[i]);
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    uv / (uu * vv).sqrt()
}

/// Outcome of [`ansatz_residual_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnsatzResidual {
    /// `|R| / |B|`, zero when both vanish.
    pub relative: f64,
    pub residual_norm: f64,
    pub reference_norm: f64,
}

/// Weak residual of
/// `-div a grad(phi_i f_i) = div (sigma_i - a phi_i) grad f_i + div (a - abar) f`
/// tested against the hat functions of `test_vertices`, with
/// `w = phi_i f_i` built from the pulled-back cell correctors and evaluated at
/// quadrature points (each element split into `subdivisions^2` pieces).
///
/// `f(x)` returns `(f, J)` with `J[i][k] = d_k f_i`. The reference `B` is the
/// left side `int a grad w . grad l_m`. With `include_sigma = false` the flux
/// corrector term is dropped.
pub fn ansatz_residual_check(
    mesh: &TriMesh,
    field: &CoeffField,
    pullback: &CellPullback,
    f: &(dyn Fn(Point) -> (Point, Mat2) + Sync),
    test_vertices: &[usize],
    include_sigma: bool,
    subdivisions: usize,
) -> AnsatzResidual {
    use rayon::prelude::*;
    let mut is_test = vec![false; mesh.num_vertices()];
    test_vertices.iter().for_each(|&v| is_test[v] = true);
    let elements: Vec<usize> = (0..mesh.num_triangles())
        .filter(|&e| mesh.triangles()[e].iter().any(|&v| is_test[v]))
        .collect();
    let rule = subdivided_quadrature(subdivisions);
    let abar = pullback.abar();
    let local: Vec<(usize, [f64; 3], [f64; 3])> = elements
        .par_iter()
        .map(|&e| {
            let area = mesh.area(e);
            let gb = mesh.grad_bary(e);
            let (mut re, mut be) = ([0.0; 3], [0.0; 3]);
            for &(bary, w) in &rule {
                let x = mesh.point_at(e, bary);
                let a = field.eval(x);
                let (fv, jac) = f(x);
                let mut grad_w = [0.0; 2];
                let mut rhs = [0.0; 2];
                for i in 0..2 {
                    let (phi, gphi) = pullback.phi(i, x);
                    grad_w[0] += fv[i] * gphi[0] + phi * jac[i][0];
                    grad_w[1] += fv[i] * gphi[1] + phi * jac[i][1];
                    let a_grad_f = linalg::mat_vec(&a, jac[i]);
                    rhs[0] -= phi * a_grad_f[0];
                    rhs[1] -= phi * a_grad_f[1];
                    if include_sigma {
                        let s = pullback.sigma(i, x);
                        rhs[0] += s * jac[i][1];
                        rhs[1] -= s * jac[i][0];
                    }
                }
                let diff = linalg::mat_vec(&linalg::mat_sub(&a, &abar), fv);
                let lhs = linalg::mat_vec(&a, grad_w);
                let total = [lhs[0] + rhs[0] + diff[0], lhs[1] + rhs[1] + diff[1]];
                for k in 0..3 {
                    re[k] += w * area * linalg::dot(total, gb[k]);
                    be[k] += w * area * linalg::dot(lhs, gb[k]);
                }
            }
            (e, re, be)
        })
        .collect();
    let mut r = vec![0.0; mesh.num_vertices()];
    let mut b = vec![0.0; mesh.num_vertices()];
    for (e, re, be) in local {
        let tri = mesh.triangles()[e];
        for k in 0..3 {
            r[tri[k]] += re[k];
            b[tri[k]] += be[k];
        }
    }
    let residual_norm = test_vertices
        .iter()
        .map(|&v| r[v] * r[v])
        .sum::<f64>()
        .sqrt();
    let reference_norm = test_vertices
        .iter()
        .map(|&v| b[v] * b[v])
        .sum::<f64>()
        .sqrt();
    let relative = if reference_norm == 0.0 {
        if residual_norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        residual_norm / reference_norm
    };
    AnsatzResidual {
        relative,
        residual_norm,
        reference_norm,
    }
}
