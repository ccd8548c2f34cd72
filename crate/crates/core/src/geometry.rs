//! Truncated sectors and their graded triangulations.
//!
//! Vertices are laid out on polar rings `r_k = R (k/K)^g`, `k = 0..=K`; ring 0
//! is the corner. Consecutive rings are stitched by an advancing front over the
//! angular parameter. For `omega = 2 pi` the sector is a slit disk: the rays
//! `theta = 0` and `theta = 2 pi` coincide geometrically but carry distinct
//! vertices, so LOWER and UPPER data stay independent.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::{Error, Point, Result};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorDomain {
    pub omega: f64,
    pub outer_radius: f64,
}

impl SectorDomain {
    pub fn new(omega: f64, outer_radius: f64) -> Result<Self> {
        if !(omega > 0.0 && omega <= TWO_PI + 1e-12) {
            return Err(Error::Config(format!(
                "sector angle {omega} outside (0, 2pi]"
            )));
        }
        if !(outer_radius > 0.0) || !outer_radius.is_finite() {
            return Err(Error::Config(format!(
                "outer radius {outer_radius} must be positive"
            )));
        }
        Ok(Self {
            omega: omega.min(TWO_PI),
            outer_radius,
        })
    }

    /// Singular exponent `n pi / omega`.
    pub fn rho(&self, n: usize) -> f64 {
        n as f64 * PI / self.omega
    }

    pub fn area(&self) -> f64 {
        0.5 * self.omega * self.outer_radius * self.outer_radius
    }

    pub fn is_slit(&self) -> bool {
        (self.omega - TWO_PI).abs() < 1e-12
    }

    /// Polar coordinates with the angle taken in `[0, 2 pi)`.
    pub fn polar(x: Point) -> (f64, f64) {
        let r = x[0].hypot(x[1]);
        let mut t = x[1].atan2(x[0]);
        if t < 0.0 {
            t += TWO_PI;
        }
        if t >= TWO_PI {
            t -= TWO_PI;
        }
        (r, t)
    }

    /// Whether `x` lies in the closed sector up to `tol`.
    pub fn contains(&self, x: Point, tol: f64) -> bool {
        let (r, t) = Self::polar(x);
        if r > self.outer_radius + tol {
            return false;
        }
        if r <= tol {
            return true;
        }
        if t <= self.omega {
            return true;
        }
        // Distance to the upper ray or back to the lower one.
        let d_upper = r * (t - self.omega).min(PI).sin().abs();
        let d_lower = r * (TWO_PI - t).min(PI).sin().abs();
        d_upper.min(d_lower) <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// The ray `theta = 0`.
    Lower,
    /// The ray `theta = omega`.
    Upper,
    /// The outer arc `r = R`.
    Arc,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Lower => "LOWER",
            BoundaryTag::Upper => "UPPER",
            BoundaryTag::Arc => "ARC",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "LOWER" => Some(BoundaryTag::Lower),
            "UPPER" => Some(BoundaryTag::Upper),
            "ARC" => Some(BoundaryTag::Arc),
            _ => None,
        }
    }
}

/// Conforming P1 triangulation of a truncated sector.
#[derive(Clone, Debug)]
pub struct TriMesh {
    domain: SectorDomain,
    vertices: Vec<Point>,
    /// Polar coordinates of each vertex; the angle is the sector parameter,
    /// so slit vertices on the upper side carry `theta = 2 pi`.
    vertex_polar: Vec<(f64, f64)>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    grading_exponent: f64,
    /// `layer_radii[k]` is the radius of ring `k`; empty for unstructured meshes.
    layer_radii: Vec<f64>,
    /// Triangles of layer `k` (between rings `k-1` and `k`) are
    /// `layer_offsets[k-1]..layer_offsets[k]`.
    layer_offsets: Vec<usize>,
    areas: Vec<f64>,
    grad_bary: Vec<[Point; 3]>,
    on_boundary: Vec<bool>,
}

impl TriMesh {
    /// Assembles a mesh from raw parts, validating orientation.
    pub fn from_parts(
        domain: SectorDomain,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<([usize; 2], BoundaryTag)>,
        grading_exponent: f64,
    ) -> Result<Self> {
        let vertex_polar = vertices.iter().map(|&x| SectorDomain::polar(x)).collect();
        Self::from_parts_with_polar(
            domain,
            vertices,
            vertex_polar,
            triangles,
            boundary_edges,
            grading_exponent,
            Vec::new(),
            Vec::new(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts_with_polar(
        domain: SectorDomain,
        vertices: Vec<Point>,
        vertex_polar: Vec<(f64, f64)>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<([usize; 2], BoundaryTag)>,
        grading_exponent: f64,
        layer_radii: Vec<f64>,
        layer_offsets: Vec<usize>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grad_bary = Vec::with_capacity(triangles.len());
        for (e, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {e} references a vertex beyond {nv}"
                )));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let area = 0.5 * det;
            let scale = (b[0] - a[0])
                .hypot(b[1] - a[1])
                .max((c[0] - a[0]).hypot(c[1] - a[1]));
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::DegenerateElement { element: e, area });
            }
            // grad lambda_i = rot90(opposite edge) / (2 area)
            let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
            areas.push(area);
            grad_bary.push([g(b, c), g(c, a), g(a, b)]);
        }
        let mut on_boundary = vec![false; nv];
        for (edge, _) in &boundary_edges {
            on_boundary[edge[0]] = true;
            on_boundary[edge[1]] = true;
        }
        Ok(Self {
            domain,
            vertices,
            vertex_polar,
            triangles,
            boundary_edges,
            grading_exponent,
            layer_radii,
            layer_offsets,
            areas,
            grad_bary,
            on_boundary,
        })
    }

    pub fn domain(&self) -> &SectorDomain {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex_polar(&self, v: usize) -> (f64, f64) {
        self.vertex_polar[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[([usize; 2], BoundaryTag)] {
        &self.boundary_edges
    }

    pub fn grading_exponent(&self) -> f64 {
        self.grading_exponent
    }

    pub fn layer_radii(&self) -> &[f64] {
        &self.layer_radii
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Constant gradients of the three barycentric coordinates on element `e`.
    pub fn grad_bary(&self, e: usize) -> &[Point; 3] {
        &self.grad_bary[e]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn corners(&self, e: usize) -> [Point; 3] {
        self.triangles[e].map(|v| self.vertices[v])
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.corners(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Maps barycentric coordinates on element `e` to a point.
    pub fn point_at(&self, e: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.corners(e);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Red refinement: every triangle is split into four similar children
    /// through its edge midpoints. Children of one parent are stored
    /// consecutively, so the ring-layer structure is kept. Midpoints of arc
    /// edges stay on the chord.
    pub fn refine_uniform(&self) -> Result<TriMesh> {
        let mut vertices = self.vertices.clone();
        let mut polar = self.vertex_polar.clone();
        let mut tags: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
        for &(e, tag) in &self.boundary_edges {
            tags.insert([e[0].min(e[1]), e[0].max(e[1])], tag);
        }
        let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
        let mut midpoint =
            |a: usize, b: usize, vertices: &mut Vec<Point>, polar: &mut Vec<(f64, f64)>| {
                let key = [a.min(b), a.max(b)];
                *midpoints.entry(key).or_insert_with(|| {
                    let (p, q) = (vertices[a], vertices[b]);
                    let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                    let r = m[0].hypot(m[1]);
                    let t = match tags.get(&key) {
                        Some(BoundaryTag::Lower) => 0.0,
                        Some(BoundaryTag::Upper) => self.domain.omega,
                        _ => SectorDomain::polar(m).1,
                    };
                    vertices.push(m);
                    polar.push((r, t));
                    vertices.len() - 1
                })
            };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices, &mut polar);
            let bc = midpoint(b, c, &mut vertices, &mut polar);
            let ca = midpoint(c, a, &mut vertices, &mut polar);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for &([a, b], tag) in &self.boundary_edges {
            let m = midpoint(a, b, &mut vertices, &mut polar);
            boundary_edges.push(([a, m], tag));
            boundary_edges.push(([m, b], tag));
        }
        TriMesh::from_parts_with_polar(
            self.domain,
            vertices,
            polar,
            triangles,
            boundary_edges,
            self.grading_exponent,
            self.layer_radii.clone(),
            self.layer_offsets.iter().map(|o| 4 * o).collect(),
        )
    }

    /// Longest edge over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |i| {
                    let (a, b) = (self.vertices[t[i]], self.vertices[t[(i + 1) % 3]]);
                    (a[0] - b[0]).hypot(a[1] - b[1])
                })
            })
            .fold(0.0, f64::max)
    }

    /// Longest edge among triangles with a vertex at radius at least `r`.
    pub fn max_edge_length_beyond(&self, r: f64) -> f64 {
        self.triangles
            .iter()
            .filter(|t| t.iter().any(|&v| self.vertex_polar[v].0 >= r))
            .flat_map(|t| {
                (0..3).map(move |i| {
                    let (a, b) = (self.vertices[t[i]], self.vertices[t[(i + 1) % 3]]);
                    (a[0] - b[0]).hypot(a[1] - b[1])
                })
            })
            .fold(0.0, f64::max)
    }

    /// Elements of the ring layers inside the largest ring radius `r_k <= r`,
    /// together with that radius.
    pub fn layer_disk(&self, r: f64) -> Result<(f64, Vec<usize>)> {
        if self.layer_radii.len() < 2 {
            return Err(Error::Unsupported("mesh has no ring layers".into()));
        }
        let k = self
            .layer_radii
            .partition_point(|&rk| rk <= r * (1.0 + 1e-12));
        if k <= 1 {
            return Err(Error::EmptyRegion(format!(
                "no ring layer inside radius {r}"
            )));
        }
        let k = k - 1;
        Ok((self.layer_radii[k], (0..self.layer_offsets[k]).collect()))
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for e in 0..self.triangles.len() {
            let p = self.corners(e);
            for i in 0..3 {
                let o = p[i];
                let u = [p[(i + 1) % 3][0] - o[0], p[(i + 1) % 3][1] - o[1]];
                let w = [p[(i + 2) % 3][0] - o[0], p[(i + 2) % 3][1] - o[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Edge to incident-triangle count.
    pub fn edge_incidence(&self) -> HashMap<[usize; 2], usize> {
        let mut map = HashMap::new();
        for tri in &self.triangles {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                *map.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
            }
        }
        map
    }

    /// Elements whose centroid radius lies in `(r_shell / 2, r_shell]`.
    pub fn shell_elements(&self, r_shell: f64) -> Result<Vec<usize>> {
        if !(r_shell > 0.0) || r_shell > self.domain.outer_radius * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "shell radius {r_shell} outside (0, {}]",
                self.domain.outer_radius
            )));
        }
        let lo = 0.5 * r_shell;
        let ids: Vec<usize> = (0..self.triangles.len())
            .filter(|&e| {
                let c = self.centroid(e);
                let r = c[0].hypot(c[1]);
                r > lo && r <= r_shell
            })
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyRegion(format!(
                "no element centroid in ({lo}, {r_shell}]"
            )));
        }
        Ok(ids)
    }

    /// Elements whose centroid radius is at most `r`.
    pub fn disk_elements(&self, r: f64) -> Result<Vec<usize>> {
        let ids: Vec<usize> = (0..self.triangles.len())
            .filter(|&e| {
                let c = self.centroid(e);
                c[0].hypot(c[1]) <= r
            })
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyRegion(format!(
                "no element centroid within radius {r}"
            )));
        }
        Ok(ids)
    }

    fn barycentric(&self, e: usize, x: Point) -> [f64; 3] {
        let [a, _, _] = self.corners(e);
        let g = &self.grad_bary[e];
        let d = [x[0] - a[0], x[1] - a[1]];
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    /// Finds an element containing `x` and the barycentric coordinates of `x`.
    ///
    /// Points on shared edges or vertices resolve to the lowest element id.
    pub fn locate_point(&self, x: Point) -> Result<(usize, [f64; 3])> {
        let tol = 1e-12 * self.domain.outer_radius;
        let candidates: Box<dyn Iterator<Item = usize>> = if self.layer_radii.len() >= 2 {
            let r = x[0].hypot(x[1]);
            let k = self
                .layer_radii
                .partition_point(|&rk| rk < r)
                .clamp(1, self.layer_radii.len() - 1);
            let lo = k.saturating_sub(1).max(1);
            let hi = (k + 1).min(self.layer_radii.len() - 1);
            let start = self.layer_offsets[lo - 1];
            let end = self.layer_offsets[hi];
            Box::new(start..end)
        } else {
            Box::new(0..self.triangles.len())
        };
        for e in candidates {
            let b = self.barycentric(e, x);
            let g = &self.grad_bary[e];
            let inside = (0..3).all(|i| b[i] >= -tol * g[i][0].hypot(g[i][1]) - 1e-14);
            if inside {
                let mut c = b.map(|l| l.clamp(0.0, 1.0));
                let s: f64 = c.iter().sum();
                c.iter_mut().for_each(|l| *l /= s);
                return Ok((e, c));
            }
        }
        Err(Error::PointNotFound { x: x[0], y: x[1] })
    }

    /// Writes the `sectormesh v1` text format.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "sectormesh v1 {} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        )?;
        let mut line = String::new();
        for v in &self.vertices {
            line.clear();
            let _ = write!(line, "{:?} {:?}", v[0], v[1]);
            writeln!(w, "{line}")?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for (e, tag) in &self.boundary_edges {
            writeln!(w, "{} {} {}", e[0], e[1], tag.as_str())?;
        }
        Ok(())
    }

    /// Reads the `sectormesh v1` text format back into a mesh over `domain`.
    pub fn read_dump<R: BufRead>(domain: SectorDomain, r: R) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("mesh dump: {msg}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "sectormesh" || parts[1] != "v1" {
            return Err(bad("bad header"));
        }
        let counts: Vec<usize> = parts[2..]
            .iter()
            .map(|s| s.parse().map_err(|_| bad("bad count")))
            .collect::<Result<_>>()?;
        let mut next = || -> Result<String> { Ok(lines.next().ok_or_else(|| bad("truncated"))??) };
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let l = next()?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad vertex")))
                .collect::<Result<_>>()?;
            vertices.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(counts[1]);
        for _ in 0..counts[1] {
            let l = next()?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad triangle")))
                .collect::<Result<_>>()?;
            triangles.push([v[0], v[1], v[2]]);
        }
        let mut edges = Vec::with_capacity(counts[2]);
        for _ in 0..counts[2] {
            let l = next()?;
            let p: Vec<&str> = l.split_whitespace().collect();
            let i = p[0].parse().map_err(|_| bad("bad edge"))?;
            let j = p[1].parse().map_err(|_| bad("bad edge"))?;
            let tag = BoundaryTag::parse(p[2]).ok_or_else(|| bad("bad tag"))?;
            edges.push(([i, j], tag));
        }
        Self::from_parts(domain, vertices, triangles, edges, 1.0)
    }
}

/// Builds the graded triangulation of the truncated sector.
///
/// Ring radii are `r_k = R (k/K)^g` with `K = ceil(R / h_target)`; each ring
/// gets roughly as many angular segments as make its arc spacing match the
/// thickness of the layer inside it.
pub fn build_sector_mesh(
    domain: SectorDomain,
    h_target: f64,
    grading_exponent: f64,
) -> Result<TriMesh> {
    let big_r = domain.outer_radius;
    if !(grading_exponent >= 1.0) {
        return Err(Error::Config(format!(
            "grading exponent {grading_exponent} < 1"
        )));
    }
    if !(h_target > 0.0) {
        return Err(Error::Config(format!(
            "mesh size {h_target} must be positive"
        )));
    }
    let layers = (big_r / h_target - 1e-9).ceil() as usize;
    if layers < 4 || h_target > big_r / 4.0 + 1e-12 {
        return Err(Error::Config(format!(
            "mesh size {h_target} gives {layers} radial layers; at least 4 are required"
        )));
    }
    let omega = domain.omega;
    let slit = domain.is_slit();
    let radii: Vec<f64> = (0..=layers)
        .map(|k| big_r * (k as f64 / layers as f64).powf(grading_exponent))
        .collect();

    // Angular segments per ring: arc spacing ~ layer thickness, and never
    // wider than 60 degrees so that chords stay well inside the sector.
    let min_segments = (omega / (PI / 3.0)).ceil().max(1.0) as usize;
    let mut segments = vec![0usize; layers + 1];
    for k in 1..=layers {
        let thickness = radii[k] - radii[k - 1];
        let n = (omega * radii[k] / thickness).round() as usize;
        segments[k] = n.max(min_segments).max(segments[k - 1]);
    }

    let mut vertices: Vec<Point> = vec![[0.0, 0.0]];
    let mut polar: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut ring_start = vec![0usize; layers + 1];
    for k in 1..=layers {
        ring_start[k] = vertices.len();
        let n = segments[k];
        for j in 0..=n {
            let t = if j == n {
                omega
            } else {
                omega * j as f64 / n as f64
            };
            let (s, c) = t.sin_cos();
            let mut p = [radii[k] * c, radii[k] * s];
            if j == 0 || (slit && j == n) {
                p[1] = 0.0;
            }
            if j == 0 {
                p[0] = radii[k];
            }
            vertices.push(p);
            polar.push((radii[k], t));
        }
    }
    let ring = |k: usize, j: usize| if k == 0 { 0 } else { ring_start[k] + j };

    let mut triangles = Vec::new();
    let mut layer_offsets = vec![0usize];
    for k in 1..=layers {
        let m = segments[k - 1];
        let n = segments[k];
        let (mut i, mut j) = (0usize, 0usize);
        while i < m || j < n {
            let advance_outer = if i == m {
                true
            } else if j == n {
                false
            } else {
                // Compare the angular parameter of the next node on each ring.
                (j + 1) * m <= (i + 1) * n
            };
            if advance_outer {
                triangles.push([ring(k - 1, i), ring(k, j), ring(k, j + 1)]);
                j += 1;
            } else {
                triangles.push([ring(k - 1, i), ring(k, j), ring(k - 1, i + 1)]);
                i += 1;
            }
        }
        layer_offsets.push(triangles.len());
    }

    let mut boundary_edges = Vec::new();
    for k in 1..=layers {
        boundary_edges.push(([ring(k - 1, 0), ring(k, 0)], BoundaryTag::Lower));
    }
    for k in 1..=layers {
        boundary_edges.push((
            [ring(k - 1, segments[k - 1]), ring(k, segments[k])],
            BoundaryTag::Upper,
        ));
    }
    for j in 0..segments[layers] {
        boundary_edges.push(([ring(layers, j), ring(layers, j + 1)], BoundaryTag::Arc));
    }

    TriMesh::from_parts_with_polar(
        domain,
        vertices,
        polar,
        triangles,
        boundary_edges,
        grading_exponent,
        radii,
        layer_offsets,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_disk() -> TriMesh {
        build_sector_mesh(SectorDomain::new(PI, 1.0).unwrap(), 0.25, 1.0).unwrap()
    }

    #[test]
    fn red_refinement_preserves_area_and_layers() {
        let m = build_sector_mesh(SectorDomain::new(2.0 * PI, 1.0).unwrap(), 0.25, 2.0).unwrap();
        let f = m.refine_uniform().unwrap();
        assert_eq!(f.num_triangles(), 4 * m.num_triangles());
        assert!((f.total_area() - m.total_area()).abs() < 1e-12);
        assert_eq!(
            f.num_vertices(),
            m.num_vertices() + m.edge_incidence().len()
        );
        assert!(f.edge_incidence().values().all(|&c| c <= 2));
        // slit midpoints keep their side
        for (edge, tag) in f.boundary_edges() {
            for &v in edge {
                let t = f.vertex_polar(v).1;
                match tag {
                    BoundaryTag::Upper if v != 0 => assert_eq!(t, 2.0 * PI),
                    BoundaryTag::Lower => assert_eq!(t, 0.0),
                    _ => {}
                }
            }
        }
        for e in [0, 17, f.num_triangles() - 1] {
            let c = f.centroid(e);
            assert_eq!(f.locate_point(c).unwrap().0, e);
        }
    }

    #[test]
    fn half_disk_has_four_uniform_layers() {
        let m = half_disk();
        assert_eq!(m.layer_radii(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(m.areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn too_coarse_is_rejected() {
        let d = SectorDomain::new(PI, 1.0).unwrap();
        assert!(matches!(
            build_sector_mesh(d, 0.3, 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_sector_mesh(d, 0.1, 0.5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn graded_innermost_ring() {
        let d = SectorDomain::new(1.95 * PI, 1.0).unwrap();
        let m = build_sector_mesh(d, 0.01, 2.0).unwrap();
        assert_eq!(m.layer_radii().len(), 101);
        assert!((m.layer_radii()[1] - 1e-4).abs() < 1e-16);
        let tags: std::collections::BTreeSet<_> = m.boundary_edges().iter().map(|e| e.1).collect();
        assert_eq!(tags.len(), 3);
    }

    #[test]
    fn slit_disk_sides_are_distinct() {
        let d = SectorDomain::new(2.0 * PI, 1.0).unwrap();
        let m = build_sector_mesh(d, 0.1, 1.0).unwrap();
        let side = |tag| {
            m.boundary_edges()
                .iter()
                .filter(|e| e.1 == tag)
                .flat_map(|e| e.0)
                .filter(|&v| v != 0)
                .collect::<std::collections::BTreeSet<_>>()
        };
        let lower = side(BoundaryTag::Lower);
        let upper = side(BoundaryTag::Upper);
        assert!(lower.is_disjoint(&upper));
        for &v in lower.iter().chain(upper.iter()) {
            let p = m.vertices()[v];
            assert!(p[0] > 0.0 && p[1] == 0.0);
        }
        assert!(upper
            .iter()
            .all(|&v| (m.vertex_polar(v).1 - 2.0 * PI).abs() < 1e-15));
    }

    #[test]
    fn shell_of_uniform_half_disk() {
        let m = half_disk();
        let ids = m.shell_elements(1.0).unwrap();
        for e in 0..m.num_triangles() {
            let c = m.centroid(e);
            let r = c[0].hypot(c[1]);
            assert_eq!(ids.contains(&e), r > 0.5 && r <= 1.0);
        }
        assert!(matches!(
            m.shell_elements(1.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn shell_near_graded_corner() {
        let d = SectorDomain::new(1.95 * PI, 1.0).unwrap();
        // innermost ring radius 1e-4 < 0.01: the shell (0.01, 0.02] has elements
        let m = build_sector_mesh(d, 0.01, 2.0).unwrap();
        assert!(m.layer_radii()[1] < 0.01);
        assert!(!m.shell_elements(0.02).unwrap().is_empty());
        // four uniform layers of width 0.25: nothing has centroid radius <= 0.02
        let coarse = build_sector_mesh(d, 0.25, 1.0).unwrap();
        assert!(matches!(
            coarse.shell_elements(0.02),
            Err(Error::EmptyRegion(_))
        ));
    }

    #[test]
    fn locate_vertex_centroid_and_edge() {
        let m = half_disk();
        let c = m.centroid(5);
        let (e, b) = m.locate_point(c).unwrap();
        assert_eq!(e, 5);
        assert!(b.iter().all(|&l| (l - 1.0 / 3.0).abs() < 1e-12));

        let v = m.triangles()[7][1];
        let (e, b) = m.locate_point(m.vertices()[v]).unwrap();
        let local = m.triangles()[e].iter().position(|&w| w == v).unwrap();
        assert!((b[local] - 1.0).abs() < 1e-12);

        // midpoint of an interior edge: lowest incident id wins
        let tri = m.triangles()[3];
        let p = m.vertices()[tri[0]];
        let q = m.vertices()[tri[1]];
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let incident: Vec<usize> = (0..m.num_triangles())
            .filter(|&t| m.triangles()[t].contains(&tri[0]) && m.triangles()[t].contains(&tri[1]))
            .collect();
        let (e, b) = m.locate_point(mid).unwrap();
        assert_eq!(e, incident[0]);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(matches!(
            m.locate_point([0.0, -0.5]),
            Err(Error::PointNotFound { .. })
        ));
        assert!(matches!(
            m.locate_point([2.0, 0.5]),
            Err(Error::PointNotFound { .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let m = half_disk();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!(
            "sectormesh v1 {} {} {}\n",
            m.num_vertices(),
            m.num_triangles(),
            m.boundary_edges().len()
        )));
        let back = TriMesh::read_dump(*m.domain(), std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_edges(), m.boundary_edges());
    }
}
