//! Periodic unit-cell problems.
//!
//! The cell `[0, 1)^2` carries an `n x n` periodic grid; every square is cut
//! along its main diagonal, which keeps the grid invariant under the swap
//! `y1 <-> y2`. Periodicity is exact through node identification, and fields
//! are fixed to zero mean after each solve.
//!
//! For each direction `e_i` the corrector solves `div a (grad phi_i + e_i) = 0`;
//! the homogenized matrix has columns `abar e_i = <a (grad phi_i + e_i)>` and
//! the flux correctors come from `Laplace N_ji = [a (e_i + grad phi_i)]_j - abar_ji`
//! through `sigma_ijk = d_k N_ji - d_j N_ki`. In two dimensions only
//! `sigma_i12 = -sigma_i21` is independent.

use std::io::Write;

use rayon::prelude::*;

use crate::coeff::{CoeffField, CoeffKind, PeriodicStructure};
use crate::fem::{solve_cg, CsrMatrix, SolveStats, SolverOptions, SparseSystem, QUADRATURE};
use crate::linalg::{self, Mat2};
use crate::{Error, Point, Result};

/// Coefficient expressed in cell coordinates.
#[derive(Clone, Debug)]
pub enum CellCoefficient {
    Constant(Mat2),
    Scalar(PeriodicStructure),
}

impl CellCoefficient {
    pub fn from_field(field: &CoeffField) -> Self {
        match field.kind() {
            CoeffKind::Constant(m) => CellCoefficient::Constant(*m),
            _ => CellCoefficient::Scalar(field.periodic_structure().expect("periodic field")),
        }
    }

    pub fn eval(&self, y: Point) -> Mat2 {
        match self {
            CellCoefficient::Constant(m) => *m,
            CellCoefficient::Scalar(p) => linalg::scaled_identity(p.cell_value(y)),
        }
    }
}

/// Uniform periodic triangulation of the unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicGrid {
    pub n: usize,
}

// Barycentric gradients (in units of n) of the two triangle shapes.
const LOWER_GRADS: [Point; 3] = [[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]];
const UPPER_GRADS: [Point; 3] = [[0.0, -1.0], [1.0, 0.0], [-1.0, 1.0]];

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("cell grid {n} too small")));
        }
        Ok(Self { n })
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn num_elements(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        (i % self.n) + self.n * (j % self.n)
    }

    pub fn element_area(&self) -> f64 {
        0.5 / (self.n * self.n) as f64
    }

    /// Node ids of element `e`; element `2 (i + n j)` is the lower triangle
    /// of square `(i, j)` and `2 (i + n j) + 1` the upper one.
    pub fn element_nodes(&self, e: usize) -> [usize; 3] {
        let sq = e / 2;
        let (i, j) = (sq % self.n, sq / self.n);
        if e % 2 == 0 {
            [
                self.node(i, j),
                self.node(i + 1, j),
                self.node(i + 1, j + 1),
            ]
        } else {
            [
                self.node(i, j),
                self.node(i + 1, j + 1),
                self.node(i, j + 1),
            ]
        }
    }

    /// Unwrapped corner positions of element `e`.
    pub fn element_corners(&self, e: usize) -> [Point; 3] {
        let sq = e / 2;
        let h = 1.0 / self.n as f64;
        let (x, y) = ((sq % self.n) as f64 * h, (sq / self.n) as f64 * h);
        if e % 2 == 0 {
            [[x, y], [x + h, y], [x + h, y + h]]
        } else {
            [[x, y], [x + h, y + h], [x, y + h]]
        }
    }

    pub fn grad_bary(&self, e: usize) -> [Point; 3] {
        let s = self.n as f64;
        let g = if e % 2 == 0 { LOWER_GRADS } else { UPPER_GRADS };
        g.map(|v| [v[0] * s, v[1] * s])
    }

    pub fn point_at(&self, e: usize, bary: [f64; 3]) -> Point {
        let c = self.element_corners(e);
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }

    /// Element containing `y` (wrapped into the cell) and its barycentrics.
    pub fn locate(&self, y: Point) -> (usize, [f64; 3]) {
        let s = self.n as f64;
        let wrap = |t: f64| {
            let f = t - t.floor();
            if f >= 1.0 {
                0.0
            } else {
                f
            }
        };
        let (u, v) = (wrap(y[0]) * s, wrap(y[1]) * s);
        let (i, j) = (
            (u.floor() as usize).min(self.n - 1),
            (v.floor() as usize).min(self.n - 1),
        );
        let (fx, fy) = (u - i as f64, v - j as f64);
        let sq = i + self.n * j;
        if fx >= fy {
            (2 * sq, [1.0 - fx, fx - fy, fy])
        } else {
            (2 * sq + 1, [1.0 - fy, fx, fy - fx])
        }
    }

    fn pattern(&self) -> CsrMatrix {
        let elements: Vec<[usize; 3]> = (0..self.num_elements())
            .map(|e| self.element_nodes(e))
            .collect();
        CsrMatrix::mesh_pattern(self.num_nodes(), &elements)
    }

    /// Periodic stiffness matrix for the coefficient.
    pub fn stiffness(&self, coeff: &CellCoefficient) -> CsrMatrix {
        let mut k = self.pattern();
        let area = self.element_area();
        let local: Vec<[[f64; 3]; 3]> = (0..self.num_elements())
            .into_par_iter()
            .map(|e| {
                let mut abar = [[0.0; 2]; 2];
                for (bary, w) in QUADRATURE {
                    abar = linalg::mat_add(
                        &abar,
                        &linalg::mat_scale(&coeff.eval(self.point_at(e, bary)), w * area),
                    );
                }
                let g = self.grad_bary(e);
                let mut ke = [[0.0; 3]; 3];
                for a in 0..3 {
                    let ag = linalg::mat_vec(&abar, g[a]);
                    for b in 0..3 {
                        ke[b][a] = linalg::dot(g[b], ag);
                    }
                }
                ke
            })
            .collect();
        for (e, ke) in local.iter().enumerate() {
            let nodes = self.element_nodes(e);
            for a in 0..3 {
                for b in 0..3 {
                    k.add(nodes[a], nodes[b], ke[a][b]);
                }
            }
        }
        k
    }

    fn scatter(&self, local: &[[f64; 3]]) -> Vec<f64> {
        let mut b = vec![0.0; self.num_nodes()];
        for (e, be) in local.iter().enumerate() {
            let nodes = self.element_nodes(e);
            for a in 0..3 {
                b[nodes[a]] += be[a];
            }
        }
        b
    }
}

/// Periodic P1 field on a [`PeriodicGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

impl PeriodicField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    pub fn value_at_node(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    pub fn eval(&self, y: Point) -> f64 {
        let (e, b) = self.grid.locate(y);
        let nodes = self.grid.element_nodes(e);
        b[0] * self.values[nodes[0]] + b[1] * self.values[nodes[1]] + b[2] * self.values[nodes[2]]
    }

    pub fn element_gradient(&self, e: usize) -> Point {
        let nodes = self.grid.element_nodes(e);
        let g = self.grid.grad_bary(e);
        let mut out = [0.0; 2];
        for a in 0..3 {
            out[0] += self.values[nodes[a]] * g[a][0];
            out[1] += self.values[nodes[a]] * g[a][1];
        }
        out
    }

    pub fn gradient_at(&self, y: Point) -> Point {
        self.element_gradient(self.grid.locate(y).0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row-major dump `i,j,value` (`j` outer).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,value")?;
        for j in 0..self.grid.n {
            for i in 0..self.grid.n {
                writeln!(w, "{i},{j},{:?}", self.value_at_node(i, j))?;
            }
        }
        Ok(())
    }
}

/// Element-wise constant field on a [`PeriodicGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicP0 {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

impl PeriodicP0 {
    pub fn eval(&self, y: Point) -> f64 {
        self.values[self.grid.locate(y).0]
    }
}

fn solve_periodic(
    grid: PeriodicGrid,
    k: &CsrMatrix,
    mut rhs: Vec<f64>,
    opts: SolverOptions,
) -> Result<(PeriodicField, SolveStats)> {
    // Project out the constant mode so the singular system is consistent.
    let m = rhs.iter().sum::<f64>() / rhs.len() as f64;
    rhs.iter_mut().for_each(|v| *v -= m);
    let sys = SparseSystem::new(k.clone(), rhs, vec![None; grid.num_nodes()]);
    let (x, stats) = solve_cg(&sys, opts)?;
    let mut f = PeriodicField { grid, values: x };
    f.remove_mean();
    Ok((f, stats))
}

fn corrector_load(grid: PeriodicGrid, coeff: &CellCoefficient, dir: usize) -> Vec<f64> {
    let area = grid.element_area();
    let local: Vec<[f64; 3]> = (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let mut flux = [0.0; 2];
            for (bary, w) in QUADRATURE {
                let a = coeff.eval(grid.point_at(e, bary));
                flux[0] += w * area * a[0][dir];
                flux[1] += w * area * a[1][dir];
            }
            let g = grid.grad_bary(e);
            [0, 1, 2].map(|i| -linalg::dot(flux, g[i]))
        })
        .collect();
    grid.scatter(&local)
}

/// Periodic corrector `phi_i` (zero mean) for direction `dir` in {0, 1}.
pub fn solve_cell_corrector(
    field: &CoeffField,
    grid_n: usize,
    dir: usize,
) -> Result<PeriodicField> {
    let coeff = CellCoefficient::from_field(field);
    let grid = cell_grid(grid_n)?;
    let k = grid.stiffness(&coeff);
    Ok(solve_corrector_with(grid, &coeff, &k, dir, SolverOptions::default())?.0)
}

fn cell_grid(grid_n: usize) -> Result<PeriodicGrid> {
    if grid_n < 32 {
        return Err(Error::InvalidArgument(format!(
            "cell grid {grid_n} below the minimum of 32"
        )));
    }
    PeriodicGrid::new(grid_n)
}

fn solve_corrector_with(
    grid: PeriodicGrid,
    coeff: &CellCoefficient,
    k: &CsrMatrix,
    dir: usize,
    opts: SolverOptions,
) -> Result<(PeriodicField, SolveStats)> {
    let b = corrector_load(grid, coeff, dir);
    if b.iter().all(|&v| v.abs() < 1e-300) {
        return Ok((PeriodicField::zeros(grid), SolveStats::default()));
    }
    solve_periodic(grid, k, b, opts)
}

/// Cell averages of the fluxes `a (grad phi_i + e_i)`, as matrix columns.
pub fn homogenized_matrix(field: &CoeffField, phi: &[PeriodicField; 2]) -> Mat2 {
    homogenized_from(&CellCoefficient::from_field(field), phi)
}

fn homogenized_from(coeff: &CellCoefficient, phi: &[PeriodicField; 2]) -> Mat2 {
    let grid = phi[0].grid;
    let area = grid.element_area();
    let mut abar = [[0.0; 2]; 2];
    for (i, phi_i) in phi.iter().enumerate() {
        let col: [f64; 2] = (0..grid.num_elements())
            .into_par_iter()
            .map(|e| {
                let mut g = phi_i.element_gradient(e);
                g[i] += 1.0;
                let mut acc = [0.0; 2];
                for (bary, w) in QUADRATURE {
                    let f = linalg::mat_vec(&coeff.eval(grid.point_at(e, bary)), g);
                    acc[0] += w * area * f[0];
                    acc[1] += w * area * f[1];
                }
                acc
            })
            .reduce(|| [0.0; 2], |a, b| [a[0] + b[0], a[1] + b[1]]);
        abar[0][i] = col[0];
        abar[1][i] = col[1];
    }
    abar
}

/// Everything the periodic cell provides.
#[derive(Clone, Debug)]
pub struct CellCorrectors {
    pub grid_n: usize,
    pub phi: [PeriodicField; 2],
    pub abar: Mat2,
    /// `potentials[j][i] = N_ji`.
    pub potentials: [[PeriodicField; 2]; 2],
    /// `sigma[i]` is `sigma_i12` per element.
    pub sigma: [PeriodicP0; 2],
    pub corrector_residuals: [f64; 2],
    /// Weak residual of `a e_i - abar e_i + a grad phi_i - div sigma_i` per direction,
    /// relative to the tested flux `a (e_i + grad phi_i)`.
    pub decomposition_defect: [f64; 2],
}

impl CellCorrectors {
    /// Solves correctors, homogenized matrix and flux correctors.
    pub fn solve(field: &CoeffField, grid_n: usize) -> Result<Self> {
        Self::solve_with(field, grid_n, SolverOptions::default())
    }

    pub fn solve_with(field: &CoeffField, grid_n: usize, opts: SolverOptions) -> Result<Self> {
        let grid = cell_grid(grid_n)?;
        let coeff = CellCoefficient::from_field(field);
        let k = grid.stiffness(&coeff);
        let (phi0, s0) = solve_corrector_with(grid, &coeff, &k, 0, opts)?;
        let (phi1, s1) = solve_corrector_with(grid, &coeff, &k, 1, opts)?;
        let phi = [phi0, phi1];
        let abar = homogenized_from(&coeff, &phi);
        let laplace = grid.stiffness(&CellCoefficient::Constant(linalg::IDENTITY));
        let mut potentials = [
            [PeriodicField::zeros(grid), PeriodicField::zeros(grid)],
            [PeriodicField::zeros(grid), PeriodicField::zeros(grid)],
        ];
        let mut loads = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
        for i in 0..2 {
            for j in 0..2 {
                let b = flux_load(grid, &coeff, &phi[i], &abar, i, j);
                let total: f64 = b.iter().sum();
                let scale: f64 = b.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                if total.abs() > 1e-10 * scale {
                    return Err(Error::Gauge { mean: total });
                }
                if b.iter().any(|v| v.abs() > 1e-300) {
                    // weak form of Laplace N = q is K N = -b
                    let neg: Vec<f64> = b.iter().map(|v| -v).collect();
                    potentials[j][i] = solve_periodic(grid, &laplace, neg, opts)?.0;
                }
                loads[i][j] = b;
            }
        }
        let sigma = [0, 1].map(|i| PeriodicP0 {
            grid,
            values: (0..grid.num_elements())
                .map(|e| {
                    potentials[0][i].element_gradient(e)[1]
                        - potentials[1][i].element_gradient(e)[0]
                })
                .collect(),
        });
        let decomposition_defect = [0, 1]
            .map(|i| decomposition_defect(grid, &loads[i], &sigma[i], [abar[0][i], abar[1][i]]));
        Ok(Self {
            grid_n,
            phi,
            abar,
            potentials,
            sigma,
            corrector_residuals: [s0.final_residual(), s1.final_residual()],
            decomposition_defect,
        })
    }

    /// `sigma_ijk` at a cell point; `sigma_i11 = sigma_i22 = 0`.
    pub fn sigma_component(&self, i: usize, j: usize, k: usize, y: Point) -> f64 {
        match (j, k) {
            (0, 1) => self.sigma[i].eval(y),
            (1, 0) => -self.sigma[i].eval(y),
            _ => 0.0,
        }
    }

    /// `(average over B_r of |(phi, sigma)|^2)^(1/2)` for each radius, with
    /// fields extended periodically; `|sigma|^2` counts both skew entries.
    pub fn sublinearity_report(&self, radii: &[f64]) -> Vec<(f64, f64)> {
        radii
            .iter()
            .map(|&r| {
                let step = (1.0 / 16.0f64).min(r / 64.0);
                let m = (r / step).ceil() as i64;
                let (sum, count) = (-m..m)
                    .into_par_iter()
                    .map(|a| {
                        let mut s = 0.0;
                        let mut c = 0usize;
                        for b in -m..m {
                            let y = [(a as f64 + 0.5) * step, (b as f64 + 0.5) * step];
                            if y[0].hypot(y[1]) > r {
                                continue;
                            }
                            let p = self.phi[0].eval(y).powi(2) + self.phi[1].eval(y).powi(2);
                            let q = self.sigma[0].eval(y).powi(2) + self.sigma[1].eval(y).powi(2);
                            s += p + 2.0 * q;
                            c += 1;
                        }
                        (s, c)
                    })
                    .reduce(|| (0.0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
                (r, (sum / count.max(1) as f64).sqrt())
            })
            .collect()
    }

    /// CSV with the homogenized matrix and run metadata.
    pub fn write_abar_csv<W: Write>(
        &self,
        mut w: W,
        coeff_description: &str,
    ) -> std::io::Result<()> {
        writeln!(w, "# grid_n={} coeff={}", self.grid_n, coeff_description)?;
        writeln!(
            w,
            "# corrector_residuals={:e},{:e} decomposition_defect={:e},{:e}",
            self.corrector_residuals[0],
            self.corrector_residuals[1],
            self.decomposition_defect[0],
            self.decomposition_defect[1]
        )?;
        writeln!(w, "row,col,value")?;
        for r in 0..2 {
            for c in 0..2 {
                writeln!(w, "{},{},{:?}", r + 1, c + 1, self.abar[r][c])?;
            }
        }
        Ok(())
    }
}

/// `b_m = int q_j l_m` with `q_j = [a (e_i + grad phi_i)]_j - abar_ji`.
fn flux_load(
    grid: PeriodicGrid,
    coeff: &CellCoefficient,
    phi_i: &PeriodicField,
    abar: &Mat2,
    i: usize,
    j: usize,
) -> Vec<f64> {
    let area = grid.element_area();
    let local: Vec<[f64; 3]> = (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let mut g = phi_i.element_gradient(e);
            g[i] += 1.0;
            let mut be = [0.0; 3];
            for (bary, w) in QUADRATURE {
                let q = linalg::mat_vec(&coeff.eval(grid.point_at(e, bary)), g)[j] - abar[j][i];
                for a in 0..3 {
                    be[a] += w * area * q * bary[a];
                }
            }
            be
        })
        .collect();
    grid.scatter(&local)
}

/// Weak residual of `q - div sigma_i` tested against every hat function,
/// relative to the tested full flux `q`.
fn decomposition_defect(
    grid: PeriodicGrid,
    loads: &[Vec<f64>],
    sigma_i: &PeriodicP0,
    abar_i: Point,
) -> f64 {
    let area = grid.element_area();
    let mass = grid.scatter(&vec![[area / 3.0; 3]; grid.num_elements()]);
    let mut r = [loads[0].clone(), loads[1].clone()];
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        let g = grid.grad_bary(e);
        let s = sigma_i.values[e] * area;
        for a in 0..3 {
            // int sigma_ijk d_k l: j = 1 gives sigma_i12 d_2 l, j = 2 gives -sigma_i12 d_1 l
            r[0][nodes[a]] += s * g[a][1];
            r[1][nodes[a]] -= s * g[a][0];
        }
    }
    let num: f64 = r.iter().flatten().map(|v| v * v).sum();
    let den: f64 = (0..2)
        .map(|j| {
            loads[j]
                .iter()
                .zip(&mass)
                .map(|(v, m)| (v + abar_i[j] * m).powi(2))
                .sum::<f64>()
        })
        .sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
