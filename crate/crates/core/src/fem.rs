//! P1 finite elements on a [`TriMesh`]: assembly, Dirichlet elimination,
//! Jacobi-preconditioned conjugate gradients, gradients and region norms.
//!
//! All element integrals use the symmetric three-point rule with barycentric
//! points `(2/3, 1/6, 1/6)` (and permutations), weights `|T|/3`. The rule is
//! exact for quadratics and never samples element edges or vertices, so it
//! stays well defined for coefficients that jump across element boundaries and
//! for integrands that are singular at the corner vertex.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::TriMesh;
use crate::linalg::{self, Mat2};
use crate::{Error, Point, Result};

/// Barycentric quadrature points and weights (relative to element area).
pub const QUADRATURE: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const PAR_THRESHOLD: usize = 20_000;

/// The three-point rule applied on each of the `s * s` congruent
/// sub-triangles of the reference element; weights sum to one.
pub fn subdivided_quadrature(s: usize) -> Vec<([f64; 3], f64)> {
    assert!(s >= 1);
    let n = s as f64;
    let lattice = |i: usize, j: usize| [1.0 - (i + j) as f64 / n, i as f64 / n, j as f64 / n];
    let mut tris = Vec::with_capacity(s * s);
    for j in 0..s {
        for i in 0..s - j {
            tris.push([lattice(i, j), lattice(i + 1, j), lattice(i, j + 1)]);
            if i + j + 1 < s {
                tris.push([lattice(i + 1, j), lattice(i + 1, j + 1), lattice(i, j + 1)]);
            }
        }
    }
    let w = 1.0 / (3.0 * n * n);
    let mut out = Vec::with_capacity(3 * tris.len());
    for t in &tris {
        for (b, _) in QUADRATURE {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = b[0] * t[0][k] + b[1] * t[1][k] + b[2] * t[2][k];
            }
            out.push((p, w));
        }
    }
    out
}

/// Square sparse matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sorted, deduplicated column lists per row.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Pattern coupling every pair of vertices that share a triangle.
    pub fn mesh_pattern(num_nodes: usize, elements: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(8); num_nodes];
        for tri in elements {
            for &i in tri {
                rows[i].extend_from_slice(tri);
            }
        }
        Self::from_pattern(rows)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[p] += v;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let row = |i: usize| -> f64 {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            s
        };
        if self.n >= PAR_THRESHOLD {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Entrywise sum of two matrices with identical patterns.
    pub fn plus(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        out
    }
}

/// Stiffness matrix `A_ij = sum_T int_T grad l_i . a grad l_j`.
pub fn assemble_stiffness<F>(mesh: &TriMesh, coeff: F) -> Result<CsrMatrix>
where
    F: Fn(Point) -> Mat2 + Sync,
{
    let mut k = CsrMatrix::mesh_pattern(mesh.num_vertices(), mesh.triangles());
    let local: Vec<[[f64; 3]; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| element_stiffness(mesh, e, &coeff))
        .collect::<Result<_>>()?;
    for (e, ke) in local.iter().enumerate() {
        let tri = mesh.triangles()[e];
        for a in 0..3 {
            for b in 0..3 {
                k.add(tri[a], tri[b], ke[a][b]);
            }
        }
    }
    Ok(k)
}

fn element_stiffness<F: Fn(Point) -> Mat2>(
    mesh: &TriMesh,
    e: usize,
    coeff: &F,
) -> Result<[[f64; 3]; 3]> {
    let area = mesh.area(e);
    if !(area > 0.0) {
        return Err(Error::DegenerateElement { element: e, area });
    }
    let mut abar = [[0.0; 2]; 2];
    for (bary, w) in QUADRATURE {
        let a = coeff(mesh.point_at(e, bary));
        abar = linalg::mat_add(&abar, &linalg::mat_scale(&a, w * area));
    }
    let g = mesh.grad_bary(e);
    let mut ke = [[0.0; 3]; 3];
    for a in 0..3 {
        let ag = linalg::mat_vec(&abar, g[a]);
        for b in 0..3 {
            ke[b][a] = linalg::dot(g[b], ag);
        }
    }
    Ok(ke)
}

/// Load vector `b_i = int f l_i`.
pub fn assemble_load_scalar<F>(mesh: &TriMesh, f: F) -> Vec<f64>
where
    F: Fn(Point) -> f64 + Sync,
{
    let local: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let area = mesh.area(e);
            let mut be = [0.0; 3];
            for (bary, w) in QUADRATURE {
                let fx = f(mesh.point_at(e, bary));
                for a in 0..3 {
                    be[a] += w * area * fx * bary[a];
                }
            }
            be
        })
        .collect();
    scatter(mesh, &local)
}

/// Load vector `b_i = -int g . grad l_i`, the weak form of `div g`.
pub fn assemble_load_div<F>(mesh: &TriMesh, g: F) -> Vec<f64>
where
    F: Fn(Point) -> Point + Sync,
{
    let local: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let area = mesh.area(e);
            let mut mean = [0.0; 2];
            for (bary, w) in QUADRATURE {
                let gx = g(mesh.point_at(e, bary));
                mean[0] += w * area * gx[0];
                mean[1] += w * area * gx[1];
            }
            let gb = mesh.grad_bary(e);
            [0, 1, 2].map(|a| -linalg::dot(mean, gb[a]))
        })
        .collect();
    scatter(mesh, &local)
}

pub(crate) fn scatter(mesh: &TriMesh, local: &[[f64; 3]]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_vertices()];
    for (tri, be) in mesh.triangles().iter().zip(local) {
        for a in 0..3 {
            b[tri[a]] += be[a];
        }
    }
    b
}

/// Linear system with per-node Dirichlet values.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// `Some(value)` at Dirichlet nodes.
    pub dirichlet: Vec<Option<f64>>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>, dirichlet: Vec<Option<f64>>) -> Self {
        assert_eq!(matrix.size(), rhs.len());
        assert_eq!(matrix.size(), dirichlet.len());
        Self {
            matrix,
            rhs,
            dirichlet,
        }
    }

    /// Zero Dirichlet data on every boundary vertex of `mesh`.
    pub fn homogeneous(mesh: &TriMesh, matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        let dirichlet = mesh
            .boundary_mask()
            .iter()
            .map(|&b| b.then_some(0.0))
            .collect();
        Self::new(matrix, rhs, dirichlet)
    }

    /// Symmetric elimination: Dirichlet rows and columns are replaced by the
    /// identity and the known values move to the right-hand side.
    fn eliminate(&self) -> (CsrMatrix, Vec<f64>, Vec<f64>) {
        let mut m = self.matrix.clone();
        let mut rhs = self.rhs.clone();
        let x0: Vec<f64> = self.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
        for i in 0..m.n {
            let (lo, hi) = (m.row_ptr[i], m.row_ptr[i + 1]);
            if let Some(v) = self.dirichlet[i] {
                for p in lo..hi {
                    m.values[p] = if m.col_idx[p] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = v;
            } else {
                for p in lo..hi {
                    let j = m.col_idx[p];
                    if let Some(v) = self.dirichlet[j] {
                        rhs[i] -= m.values[p] * v;
                        m.values[p] = 0.0;
                    }
                }
            }
        }
        (m, rhs, x0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative preconditioned residual after each iteration (entry 0 is the start).
    pub residual_history: Vec<f64>,
}

impl SolveStats {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,relative_residual")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{i},{r:e}")?;
        }
        Ok(())
    }
}

/// Jacobi-preconditioned conjugate gradients on the free nodes.
///
/// Stops when `sqrt(r.M^-1 r) <= rel_tol * sqrt(b.M^-1 b)` with `b` the
/// right-hand side after elimination. Dirichlet nodes keep their values exactly.
pub fn solve_cg(system: &SparseSystem, opts: SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let (a, b, mut x) = system.eliminate();
    let n = a.size();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.mul_vec(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let b_norm = b
        .iter()
        .zip(&inv_diag)
        .zip(&system.dirichlet)
        .filter(|(_, d)| d.is_none())
        .map(|((bi, di), _)| bi * bi * di)
        .sum::<f64>()
        .sqrt();
    let mut rz = dot(&r, &z);
    let mut stats = SolveStats::default();
    if b_norm == 0.0 {
        stats.residual_history.push(0.0);
        // the free part of the solution is zero
        return Ok((x, stats));
    }
    let rel = |rz: f64| rz.max(0.0).sqrt() / b_norm;
    stats.residual_history.push(rel(rz));
    if rel(rz) <= opts.rel_tol {
        return Ok((x, stats));
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        stats.iterations = it;
        stats.residual_history.push(rel(rz_new));
        if rel(rz_new) <= opts.rel_tol {
            return Ok((x, stats));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: stats.final_residual(),
        history: stats.residual_history,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        // fixed chunking keeps the sum reproducible across thread counts
        a.par_chunks(4096)
            .zip(b.par_chunks(4096))
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
            .collect::<Vec<_>>()
            .iter()
            .sum()
    } else {
        a.iter().zip(b).map(|(u, v)| u * v).sum()
    }
}

/// Piecewise-linear nodal field.
#[derive(Clone, Debug)]
pub struct FeFunction {
    mesh: Arc<TriMesh>,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "{} nodal values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite nodal value at vertex {i}"
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_vertices();
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of a function of the Cartesian position.
    pub fn interpolate<F: Fn(Point) -> f64>(mesh: Arc<TriMesh>, f: F) -> Self {
        let values = mesh.vertices().iter().map(|&x| f(x)).collect();
        Self { mesh, values }
    }

    /// Nodal interpolant of a function of the sector polar coordinates.
    pub fn interpolate_polar<F: Fn(f64, f64) -> f64>(mesh: Arc<TriMesh>, f: F) -> Self {
        let values = (0..mesh.num_vertices())
            .map(|v| {
                let (r, t) = mesh.vertex_polar(v);
                f(r, t)
            })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at barycentric coordinates inside element `e`.
    pub fn eval_in(&self, e: usize, bary: [f64; 3]) -> f64 {
        let t = self.mesh.triangles()[e];
        bary[0] * self.values[t[0]] + bary[1] * self.values[t[1]] + bary[2] * self.values[t[2]]
    }

    pub fn eval_at(&self, x: Point) -> Result<f64> {
        let (e, b) = self.mesh.locate_point(x)?;
        Ok(self.eval_in(e, b))
    }

    /// `a * self + b * other`, nodal.
    pub fn axpby(&self, a: f64, other: &FeFunction, b: f64) -> FeFunction {
        debug_assert!(
            Arc::ptr_eq(&self.mesh, &other.mesh) || self.values.len() == other.values.len()
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        FeFunction {
            mesh: self.mesh.clone(),
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Element-wise constant gradient.
    pub fn gradient_p0(&self) -> Vec<Point> {
        (0..self.mesh.num_triangles())
            .map(|e| element_gradient(&self.mesh, e, &self.values))
            .collect()
    }

    /// Area-weighted average of the incident element gradients at every node.
    pub fn recover_gradient_nodal(&self) -> RecoveredGradient {
        let grads = self.gradient_p0();
        let n = self.mesh.num_vertices();
        let mut acc = vec![[0.0; 2]; n];
        let mut weight = vec![0.0; n];
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let a = self.mesh.area(e);
            for &v in tri {
                acc[v][0] += a * grads[e][0];
                acc[v][1] += a * grads[e][1];
                weight[v] += a;
            }
        }
        let gx = acc.iter().zip(&weight).map(|(g, w)| g[0] / w).collect();
        let gy = acc.iter().zip(&weight).map(|(g, w)| g[1] / w).collect();
        RecoveredGradient {
            components: [
                FeFunction {
                    mesh: self.mesh.clone(),
                    values: gx,
                },
                FeFunction {
                    mesh: self.mesh.clone(),
                    values: gy,
                },
            ],
            one_sided: self.mesh.boundary_mask().to_vec(),
        }
    }

    /// CSV dump `node_id,x,y,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node_id,x,y,value")?;
        for (i, (p, v)) in self.mesh.vertices().iter().zip(&self.values).enumerate() {
            writeln!(w, "{i},{:?},{:?},{:?}", p[0], p[1], v)?;
        }
        Ok(())
    }
}

pub(crate) fn element_gradient(mesh: &TriMesh, e: usize, values: &[f64]) -> Point {
    let t = mesh.triangles()[e];
    let g = mesh.grad_bary(e);
    let mut out = [0.0; 2];
    for a in 0..3 {
        out[0] += values[t[a]] * g[a][0];
        out[1] += values[t[a]] * g[a][1];
    }
    out
}

/// Nodal gradient recovered by area-weighted averaging.
#[derive(Clone, Debug)]
pub struct RecoveredGradient {
    pub components: [FeFunction; 2],
    /// Nodes on the boundary, where the average only sees one side.
    pub one_sided: Vec<bool>,
}

/// `(sum_T |T| |g_T|^2 / sum_T |T|)^(1/2)` over `elements`; without the
/// denominator when `area_normalized` is false.
pub fn energy_seminorm_on(
    mesh: &TriMesh,
    elements: &[usize],
    grad: &[Point],
    area_normalized: bool,
) -> Result<f64> {
    if elements.is_empty() {
        return Err(Error::EmptyRegion(
            "energy seminorm over an empty element set".into(),
        ));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &e in elements {
        let a = mesh.area(e);
        num += a * linalg::dot(grad[e], grad[e]);
        den += a;
    }
    Ok(if area_normalized {
        (num / den).sqrt()
    } else {
        num.sqrt()
    })
}

/// `(average over elements of |u|^2)^(1/2)`, exact for P1 with the quadrature rule.
pub fn l2_average_on(u: &FeFunction, elements: &[usize]) -> Result<f64> {
    if elements.is_empty() {
        return Err(Error::EmptyRegion(
            "L2 average over an empty element set".into(),
        ));
    }
    let mesh = u.mesh();
    let (mut num, mut den) = (0.0, 0.0);
    for &e in elements {
        let a = mesh.area(e);
        for (bary, w) in QUADRATURE {
            let v = u.eval_in(e, bary);
            num += w * a * v * v;
        }
        den += a;
    }
    Ok((num / den).sqrt())
}

/// Solves `A u = b` with zero Dirichlet data on the whole boundary.
pub fn solve_homogeneous(
    mesh: &Arc<TriMesh>,
    matrix: &CsrMatrix,
    rhs: Vec<f64>,
    opts: SolverOptions,
) -> Result<(FeFunction, SolveStats)> {
    let sys = SparseSystem::homogeneous(mesh, matrix.clone(), rhs);
    let (x, stats) = solve_cg(&sys, opts)?;
    Ok((FeFunction::new(mesh.clone(), x)?, stats))
}
