//! Run configurations and the end-to-end experiments behind the CLI.
//!
//! Every run writes into `<out>/<hash>/`, where `hash` is the first 16 hex
//! digits of the SHA-256 of the resolved configuration (output directory
//! excluded). The resolved configuration is stored as `config.json` and each
//! CSV starts with a `# config_hash=<hash>` comment line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::CellCorrectors;
use crate::coeff::{normalize_to_identity, CellProfile, CoeffField};
use crate::correctors::{
    growth_profile, resolving_mesh_with, write_growth_csv, CorrectorSet, GrowthRow, SectorOperator,
};
use crate::extension::{self, DivergenceReport, ExtendedField};
use crate::fem::{FeFunction, SolverOptions};
use crate::geometry::{build_sector_mesh, SectorDomain, TriMesh};
use crate::linalg;
use crate::metrics::{
    dyadic_radii, excess_decay_experiment, geometric_radii, loglog_slope_in, write_excess_csv,
    write_gain_csv, ExcessDecay, ExperimentReport, SlopeFit,
};
use crate::singular::{CutoffBump, SingularFunction};
use crate::two_scale::{
    default_forcing, extract_gamma, solve_pair, write_summary_csv, ExpansionBundle,
    TwoScaleSummary, DEFAULT_GAMMA_CUTOFF,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Cell,
    Gain,
    CorrectorGrowth,
    ExcessDecay,
    GammaRecovery,
    ExtendCheck,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Cell => "cell",
            ExperimentKind::Gain => "gain",
            ExperimentKind::CorrectorGrowth => "corrector-growth",
            ExperimentKind::ExcessDecay => "excess-decay",
            ExperimentKind::GammaRecovery => "gamma-recovery",
            ExperimentKind::ExtendCheck => "extend-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

/// Sector angle in units of pi and outer radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub omega_over_pi: f64,
    #[serde(default = "one")]
    pub radius: f64,
}

/// Mesh target size and grading. Without `h` the mesh is the coarsest graded
/// mesh with longest edge at most `epsilon / elements_per_period` for the
/// smallest epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "two")]
    pub grading: f64,
    #[serde(default = "eight")]
    pub elements_per_period: f64,
    /// Uniform red refinements applied after meshing (gamma recovery studies them all).
    #[serde(default)]
    pub refinements: u32,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            h: None,
            grading: 2.0,
            elements_per_period: 8.0,
            refinements: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by half the trace of the homogenized matrix from a cell solve.
    Cell,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoeffConfig {
    Identity,
    Constant {
        matrix: [[f64; 2]; 2],
    },
    /// `exp(kappa sin(2 pi y1) sin(2 pi y2))` on the rotated lattice.
    Periodic {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_rotation")]
        rotation: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "cell_normalization")]
        normalization: Normalization,
    },
    Laminate {
        values: [f64; 2],
        #[serde(default)]
        rotation: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Checkerboard {
        contrast: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Oscillation lengths; empty means the coefficient's own epsilon.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub shell_radii: Option<Vec<f64>>,
    /// Number of singular modes `N`.
    #[serde(default = "one_usize")]
    pub modes: usize,
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_cell_grid")]
    pub cell_grid: usize,
    #[serde(default = "default_gamma_cutoff")]
    pub gamma_cutoff: f64,
    /// Coefficients `c_n` of the synthetic field in gamma recovery.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub coeff: CoeffConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn eight() -> f64 {
    8.0
}
fn one_usize() -> usize {
    1
}
fn default_kappa() -> f64 {
    1.5
}
fn default_rotation() -> f64 {
    0.35
}
fn default_epsilon() -> f64 {
    0.05
}
fn cell_normalization() -> Normalization {
    Normalization::Cell
}
fn default_cell_grid() -> usize {
    256
}
fn default_gamma_cutoff() -> f64 {
    DEFAULT_GAMMA_CUTOFF
}
fn default_n_theta() -> usize {
    4096
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    200_000
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.omega_over_pi > 0.0 && d.omega_over_pi <= 2.0) {
            return Err(Error::Config(format!(
                "omega_over_pi = {} not in (0, 2]",
                d.omega_over_pi
            )));
        }
        if !(d.radius > 0.0 && d.radius.is_finite()) {
            return Err(Error::Config(format!(
                "radius = {} must be positive",
                d.radius
            )));
        }
        if let Some(h) = self.mesh.h {
            if !(h > 0.0 && h < d.radius) {
                return Err(Error::Config(format!("mesh.h = {h} not in (0, radius)")));
            }
        }
        if !(self.mesh.elements_per_period >= 8.0) {
            return Err(Error::Config(format!(
                "mesh.elements_per_period = {} must be at least 8",
                self.mesh.elements_per_period
            )));
        }
        if !(self.mesh.grading >= 1.0) {
            return Err(Error::Config(format!(
                "mesh.grading = {} must be at least 1",
                self.mesh.grading
            )));
        }
        let e = &self.experiment;
        if e.epsilons.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config("experiment.epsilons must be positive".into()));
        }
        if let Some(r) = &e.shell_radii {
            if r.iter().any(|&x| !(x > 0.0 && x <= d.radius)) {
                return Err(Error::Config(
                    "experiment.shell_radii must lie in (0, radius]".into(),
                ));
            }
        }
        if let Some(w) = e.fit_window {
            if !(w[0] > 0.0 && w[1] > w[0]) {
                return Err(Error::Config(format!(
                    "experiment.fit_window {w:?} must satisfy 0 < lo < hi"
                )));
            }
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) || self.solver.max_iter == 0 {
            return Err(Error::Config(
                "solver.tol must lie in (0, 1) and max_iter be positive".into(),
            ));
        }
        if e.kind == ExperimentKind::GammaRecovery
            && e.coefficients.as_ref().is_some_and(|c| c.is_empty())
        {
            return Err(Error::Config(
                "experiment.coefficients must not be empty".into(),
            ));
        }
        Ok(())
    }

    /// Configuration with the output directory removed, as hashed.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.output_dir = None;
        c
    }

    /// First 16 hex digits of the SHA-256 of the resolved configuration JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.resolved()).expect("configurations serialize");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn omega(&self) -> f64 {
        self.domain.omega_over_pi * std::f64::consts::PI
    }

    pub fn sector(&self) -> Result<SectorDomain> {
        SectorDomain::new(self.omega(), self.domain.radius)
    }

    /// Epsilons to run: the configured list or the coefficient's own.
    pub fn epsilons(&self) -> Vec<f64> {
        if !self.experiment.epsilons.is_empty() {
            return self.experiment.epsilons.clone();
        }
        match self.coeff {
            CoeffConfig::Periodic { epsilon, .. }
            | CoeffConfig::Laminate { epsilon, .. }
            | CoeffConfig::Checkerboard { epsilon, .. } => vec![epsilon],
            _ => Vec::new(),
        }
    }

    /// Coefficient field before normalization at its configured epsilon.
    pub fn raw_field(&self) -> Result<CoeffField> {
        match &self.coeff {
            CoeffConfig::Identity => Ok(CoeffField::identity()),
            CoeffConfig::Constant { matrix } => CoeffField::constant(*matrix),
            CoeffConfig::Periodic {
                kappa,
                rotation,
                epsilon,
                ..
            } => CoeffField::rotated_periodic(
                CellProfile::Exponential { kappa: *kappa },
                *rotation,
                *epsilon,
            ),
            CoeffConfig::Laminate {
                values,
                rotation,
                epsilon,
            } => CoeffField::rotated_periodic(
                CellProfile::Laminate { values: *values },
                *rotation,
                *epsilon,
            ),
            CoeffConfig::Checkerboard {
                contrast,
                epsilon,
                seed,
            } => CoeffField::checkerboard(*contrast, *epsilon, *seed),
        }
    }

    /// The field used by the sector experiments, normalized when requested.
    pub fn field(&self) -> Result<CoeffField> {
        let raw = self.raw_field()?;
        match self.coeff {
            CoeffConfig::Periodic {
                normalization: Normalization::Cell,
                ..
            } => {
                let cell = CellCorrectors::solve_with(
                    &raw,
                    self.experiment.cell_grid,
                    self.solver.options(),
                )?;
                normalize_to_identity(&raw, &cell.abar)
            }
            _ => Ok(raw),
        }
    }

    /// The sector mesh, refined `mesh.refinements` times.
    pub fn mesh(&self) -> Result<Arc<TriMesh>> {
        let domain = self.sector()?;
        let mut mesh = match self.mesh.h {
            Some(h) => build_sector_mesh(domain, h, self.mesh.grading)?,
            None => {
                let eps = self.epsilons().into_iter().fold(f64::INFINITY, f64::min);
                if !eps.is_finite() {
                    return Err(Error::Config(
                        "mesh.h is required without an oscillation length".into(),
                    ));
                }
                resolving_mesh_with(
                    domain,
                    eps,
                    self.mesh.grading,
                    self.mesh.elements_per_period,
                )?
            }
        };
        for _ in 0..self.mesh.refinements {
            mesh = mesh.refine_uniform()?;
        }
        Ok(Arc::new(mesh))
    }

    fn shell_radii_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.experiment.shell_radii.clone().unwrap_or(default)
    }
}

/// Files written by one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub hash: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Sink {
    dir: PathBuf,
    hash: String,
    files: Vec<PathBuf>,
}

impl Sink {
    fn csv(
        &mut self,
        name: &str,
        meta: &[String],
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# config_hash={}", self.hash)?;
        for m in meta {
            writeln!(w, "# {m}")?;
        }
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the configured experiment below `out_root`.
pub fn run(config: &RunConfig, out_root: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let hash = config.hash();
    let dir = out_root.join(&hash);
    fs::create_dir_all(&dir)?;
    let mut sink = Sink {
        dir: dir.clone(),
        hash: hash.clone(),
        files: Vec::new(),
    };
    sink.json("config.json", &config.resolved())?;
    match config.experiment.kind {
        ExperimentKind::Cell => run_cell(config, &mut sink)?,
        ExperimentKind::Gain => run_gain(config, &mut sink)?,
        ExperimentKind::CorrectorGrowth => run_growth(config, &mut sink)?,
        ExperimentKind::ExcessDecay => run_excess(config, &mut sink)?,
        ExperimentKind::GammaRecovery => run_gamma(config, &mut sink)?,
        ExperimentKind::ExtendCheck => run_extend(config, &mut sink)?,
    }
    Ok(RunOutcome {
        hash,
        dir,
        files: sink.files,
    })
}

fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

/// Homogenized matrix of the configured cell.
#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub grid_n: usize,
    pub raw_abar: linalg::Mat2,
    pub abar: linalg::Mat2,
    pub deviation_from_identity: f64,
    pub corrector_residuals: [f64; 2],
    pub decomposition_defect: [f64; 2],
}

/// Cell solve, normalized when the configuration asks for it.
pub fn cell_study(config: &RunConfig) -> Result<(CellCorrectors, CellReport)> {
    let opts = config.solver.options();
    let grid_n = config.experiment.cell_grid;
    let raw = config.raw_field()?;
    let raw_cell = CellCorrectors::solve_with(&raw, grid_n, opts)?;
    let cell = match config.coeff {
        CoeffConfig::Periodic {
            normalization: Normalization::Cell,
            ..
        } => {
            CellCorrectors::solve_with(&normalize_to_identity(&raw, &raw_cell.abar)?, grid_n, opts)?
        }
        _ => raw_cell.clone(),
    };
    let report = CellReport {
        grid_n,
        raw_abar: raw_cell.abar,
        abar: cell.abar,
        deviation_from_identity: linalg::sym_spectral_norm(&linalg::mat_sub(
            &cell.abar,
            &linalg::IDENTITY,
        )),
        corrector_residuals: cell.corrector_residuals,
        decomposition_defect: cell.decomposition_defect,
    };
    Ok((cell, report))
}

fn run_cell(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let (cell, report) = cell_study(config)?;
    let desc = serde_json::to_string(&config.coeff).map_err(|e| Error::Config(e.to_string()))?;
    sink.csv("abar.csv", &[], |w| cell.write_abar_csv(w, &desc))?;
    sink.csv("phi_1.csv", &[], |w| cell.phi[0].write_csv(w))?;
    sink.csv("phi_2.csv", &[], |w| cell.phi[1].write_csv(w))?;
    sink.json("cell.json", &report)
}

/// One epsilon of the gain experiment.
#[derive(Clone, Debug, Serialize)]
pub struct GainRun {
    pub epsilon: f64,
    pub report: ExperimentReport,
    pub summary: TwoScaleSummary,
    /// Shell profile of the first corner corrector.
    pub corner_growth: Vec<GrowthRow>,
    pub corner_growth_fit: Option<SlopeFit>,
    pub iterations: Vec<usize>,
}

/// Parameters of [`gain_study`].
#[derive(Clone, Debug)]
pub struct GainSetup {
    pub epsilons: Vec<f64>,
    pub shell_radii: Vec<f64>,
    pub fit_window: [f64; 2],
    pub n_modes: usize,
    pub gamma_cutoff: f64,
    pub opts: SolverOptions,
}

/// Default gain shells `2^-1 .. 2^-9` (in units of the outer radius).
pub fn default_gain_radii(radius: f64) -> Vec<f64> {
    dyadic_radii(radius, 1, 9)
}

/// Corner-corrector growth shells: eight geometric radii in `[4 eps, R/2]`.
pub fn growth_radii(epsilon: f64, radius: f64) -> Option<Vec<f64>> {
    geometric_radii(4.0 * epsilon, 0.5 * radius, 8).ok()
}

/// Classical versus hybrid expansion on one shared mesh for every epsilon.
/// The homogenized problem is the Laplacian; the corner cutoff is `CutoffBump(R)`.
pub fn gain_study(
    mesh: &Arc<TriMesh>,
    field: &CoeffField,
    setup: &GainSetup,
) -> Result<Vec<GainRun>> {
    let hom = SectorOperator::laplacian(mesh.clone(), setup.opts)?;
    let radius = mesh.domain().outer_radius;
    let chi = CutoffBump::new(radius)?;
    let mut runs = Vec::with_capacity(setup.epsilons.len());
    let mut u_bar: Option<FeFunction> = None;
    for &eps in &setup.epsilons {
        let het = SectorOperator::new(mesh.clone(), field.with_epsilon(eps)?, setup.opts)?;
        let (u_eps, ub) = match &u_bar {
            Some(ub) => {
                let (u, _) = crate::two_scale::solve_scalar(&het, default_forcing)?;
                (u, ub.clone())
            }
            None => solve_pair(&het, &hom, default_forcing)?,
        };
        u_bar = Some(ub.clone());
        let correctors = CorrectorSet::solve(&het, setup.n_modes)?;
        let bundle = ExpansionBundle::assemble(
            u_eps,
            ub,
            &correctors,
            setup.n_modes,
            setup.gamma_cutoff,
            &chi,
        )?;
        let report = ExperimentReport::from_errors(
            mesh,
            eps,
            &bundle.err_classical,
            &bundle.err_hybrid,
            &setup.shell_radii,
            setup.fit_window,
        )?;
        let (corner_growth, corner_growth_fit) =
            match (correctors.corner.first(), growth_radii(eps, radius)) {
                (Some(c), Some(radii)) => {
                    let rows = growth_profile(c, &radii)?;
                    let fit = corner_growth_fit(&rows, eps, radius);
                    (rows, fit)
                }
                _ => (Vec::new(), None),
            };
        runs.push(GainRun {
            epsilon: eps,
            report,
            summary: bundle.summary()?,
            corner_growth,
            corner_growth_fit,
            iterations: correctors.iterations.clone(),
        });
    }
    Ok(runs)
}

fn corner_growth_fit(rows: &[GrowthRow], eps: f64, radius: f64) -> Option<SlopeFit> {
    let xs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.shell_l2).collect();
    loglog_slope_in(&xs, &ys, [4.0 * eps, 0.5 * radius]).ok()
}

fn gain_setup(config: &RunConfig) -> Result<GainSetup> {
    let radius = config.domain.radius;
    let epsilons = config.epsilons();
    if epsilons.is_empty() {
        return Err(Error::Config(
            "the gain experiment needs at least one epsilon".into(),
        ));
    }
    Ok(GainSetup {
        epsilons,
        shell_radii: config.shell_radii_or(default_gain_radii(radius)),
        fit_window: config.experiment.fit_window.unwrap_or([0.0, 0.5 * radius]),
        n_modes: config.experiment.modes,
        gamma_cutoff: config.experiment.gamma_cutoff,
        opts: config.solver.options(),
    })
}

fn run_gain(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let setup = gain_setup(config)?;
    let mesh = config.mesh()?;
    let field = config.field()?;
    let mut runs = gain_study(&mesh, &field, &setup)?;
    let meta = vec![format!(
        "vertices={} triangles={} max_edge={:e}",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.max_edge_length()
    )];
    for run in &mut runs {
        run.report.config_hash = Some(sink.hash.clone());
        let tag = eps_tag(run.epsilon);
        let mut m = meta.clone();
        m.push(format!(
            "epsilon={:?} gamma={:?}",
            run.epsilon, run.summary.gamma
        ));
        sink.csv(&format!("gain_{tag}.csv"), &m, |w| {
            write_gain_csv(&run.report, w)
        })?;
        if !run.corner_growth.is_empty() {
            sink.csv(&format!("growth_corner1_{tag}.csv"), &m, |w| {
                write_growth_csv(&run.corner_growth, w)
            })?;
        }
    }
    let summaries: Vec<TwoScaleSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    sink.csv("summary.csv", &meta, |w| write_summary_csv(&summaries, w))?;
    sink.json("report.json", &runs)
}

/// Growth profiles of the Dirichlet and corner correctors at one epsilon.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthRun {
    pub epsilon: f64,
    pub radii: Vec<f64>,
    pub dirichlet: [Vec<GrowthRow>; 2],
    pub corner: Vec<Vec<GrowthRow>>,
    pub corner_fits: Vec<Option<SlopeFit>>,
    pub dirichlet_fits: [Option<SlopeFit>; 2],
}

pub fn growth_study(
    mesh: &Arc<TriMesh>,
    field: &CoeffField,
    epsilons: &[f64],
    radii: Option<&[f64]>,
    n_modes: usize,
    opts: SolverOptions,
) -> Result<Vec<GrowthRun>> {
    let radius = mesh.domain().outer_radius;
    epsilons
        .iter()
        .map(|&eps| {
            let op = SectorOperator::new(mesh.clone(), field.with_epsilon(eps)?, opts)?;
            let set = CorrectorSet::solve(&op, n_modes)?;
            let radii = match radii {
                Some(r) => r.to_vec(),
                None => growth_radii(eps, radius).ok_or_else(|| {
                    Error::Config(format!("no growth window [4 eps, R/2] for epsilon {eps}"))
                })?,
            };
            let fit = |rows: &[GrowthRow]| corner_growth_fit(rows, eps, radius);
            let dirichlet = [
                growth_profile(&set.dirichlet[0], &radii)?,
                growth_profile(&set.dirichlet[1], &radii)?,
            ];
            let corner = set
                .corner
                .iter()
                .map(|c| growth_profile(c, &radii))
                .collect::<Result<Vec<_>>>()?;
            Ok(GrowthRun {
                epsilon: eps,
                dirichlet_fits: [fit(&dirichlet[0]), fit(&dirichlet[1])],
                corner_fits: corner.iter().map(|c| fit(c)).collect(),
                radii,
                dirichlet,
                corner,
            })
        })
        .collect()
}

fn run_growth(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let mesh = config.mesh()?;
    let field = config.field()?;
    let epsilons = config.epsilons();
    if epsilons.is_empty() {
        return Err(Error::Config(
            "corrector growth needs at least one epsilon".into(),
        ));
    }
    let runs = growth_study(
        &mesh,
        &field,
        &epsilons,
        config.experiment.shell_radii.as_deref(),
        config.experiment.modes,
        config.solver.options(),
    )?;
    for run in &runs {
        let tag = eps_tag(run.epsilon);
        for (i, rows) in run.dirichlet.iter().enumerate() {
            sink.csv(&format!("growth_dirichlet{}_{tag}.csv", i + 1), &[], |w| {
                write_growth_csv(rows, w)
            })?;
        }
        for (n, rows) in run.corner.iter().enumerate() {
            sink.csv(&format!("growth_corner{}_{tag}.csv", n + 1), &[], |w| {
                write_growth_csv(rows, w)
            })?;
        }
    }
    sink.json("report.json", &runs)
}

/// Default excess radii `R 2^-2 .. R 2^-7`.
pub fn default_excess_radii(radius: f64) -> Vec<f64> {
    dyadic_radii(radius, 2, 7)
}

fn run_excess(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let mesh = config.mesh()?;
    let field = config.field()?;
    let radius = config.domain.radius;
    let radii = config.shell_radii_or(default_excess_radii(radius));
    let window = config.experiment.fit_window.unwrap_or([
        radii.iter().copied().fold(f64::INFINITY, f64::min),
        0.5 * radius,
    ]);
    let epsilons = config.epsilons();
    let mut results: Vec<(Option<f64>, ExcessDecay)> = Vec::new();
    let fields: Vec<(Option<f64>, CoeffField)> = if epsilons.is_empty() {
        vec![(None, field)]
    } else {
        epsilons
            .iter()
            .map(|&e| Ok((Some(e), field.with_epsilon(e)?)))
            .collect::<Result<_>>()?
    };
    for (eps, f) in fields {
        let op = SectorOperator::new(mesh.clone(), f, config.solver.options())?;
        let decay =
            excess_decay_experiment(&op, config.experiment.modes, config.seed, &radii, window)?;
        let name = match eps {
            Some(e) => format!("excess_{}.csv", eps_tag(e)),
            None => "excess.csv".to_string(),
        };
        let meta = vec![format!(
            "modes={} seed={} arc_coefficients={:?} slope={:?} half_width={:?}",
            decay.n_modes,
            config.seed,
            decay.arc_coefficients,
            decay.fit.slope,
            decay.fit.half_width
        )];
        sink.csv(&name, &meta, |w| write_excess_csv(&decay.rows, w))?;
        results.push((eps, decay));
    }
    sink.json("report.json", &results)
}

/// Recovered singular coefficients on one mesh level.
#[derive(Clone, Debug, Serialize)]
pub struct GammaLevel {
    pub level: u32,
    pub num_vertices: usize,
    pub gamma: Vec<f64>,
    pub error: Vec<f64>,
}

/// Extracts `gamma_n` from `I(sum c_n tau_n)` on the base mesh and on each
/// red refinement of it.
pub fn gamma_recovery_study(
    base: TriMesh,
    coefficients: &[f64],
    refinements: u32,
    r0: f64,
) -> Result<Vec<GammaLevel>> {
    let omega = base.domain().omega;
    let taus = (1..=coefficients.len())
        .map(|n| SingularFunction::new(n, omega))
        .collect::<Result<Vec<_>>>()?;
    let mut mesh = Arc::new(base);
    let mut levels = Vec::new();
    for level in 0..=refinements {
        let u = FeFunction::interpolate_polar(mesh.clone(), |r, t| {
            coefficients
                .iter()
                .zip(&taus)
                .map(|(c, tau)| c * tau.value_polar(r, t).expect("primal functions are finite"))
                .sum()
        });
        let gamma = (1..=coefficients.len())
            .map(|n| extract_gamma(&u, n, r0))
            .collect::<Result<Vec<_>>>()?;
        let error = gamma.iter().zip(coefficients).map(|(g, c)| g - c).collect();
        levels.push(GammaLevel {
            level,
            num_vertices: mesh.num_vertices(),
            gamma,
            error,
        });
        if level < refinements {
            mesh = Arc::new(mesh.refine_uniform()?);
        }
    }
    Ok(levels)
}

fn run_gamma(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let h = config
        .mesh
        .h
        .ok_or_else(|| Error::Config("gamma recovery needs mesh.h".into()))?;
    let base = build_sector_mesh(config.sector()?, h, config.mesh.grading)?;
    let coefficients = config
        .experiment
        .coefficients
        .clone()
        .unwrap_or_else(|| vec![1.0, 0.5, 0.25]);
    let levels = gamma_recovery_study(
        base,
        &coefficients,
        config.mesh.refinements,
        config.experiment.gamma_cutoff,
    )?;
    sink.csv("gamma.csv", &[], |w| {
        writeln!(w, "level,num_vertices,n,gamma,exact,error")?;
        for l in &levels {
            for (k, g) in l.gamma.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{:?},{:?},{:?}",
                    l.level,
                    l.num_vertices,
                    k + 1,
                    g,
                    coefficients[k],
                    l.error[k]
                )?;
            }
        }
        Ok(())
    })?;
    sink.json("report.json", &levels)
}

/// Flux and divergence checks of one extended test field.
#[derive(Clone, Debug, Serialize)]
pub struct ExtensionCase {
    pub name: String,
    pub divergence_free: bool,
    pub flux: Vec<(f64, f64)>,
    pub max_abs_flux: f64,
    pub seam_jump: f64,
    pub divergence: DivergenceReport,
    pub detector_fires: bool,
}

/// Relative divergence above which the detector reports a non-divergence-free input.
pub const DIVERGENCE_DETECTOR_TOL: f64 = 1e-3;

/// Vortex, smooth stream field and the radial unit field on a sector of angle `omega`.
pub fn extension_study(omega: f64, radii: &[f64], n_theta: usize) -> Result<Vec<ExtensionCase>> {
    let cases: Vec<(&str, bool, ExtendedField)> = vec![
        (
            "vortex",
            true,
            extension::extend(extension::angular_vortex(omega)?)?,
        ),
        (
            "stream",
            true,
            extension::extend(extension::smooth_stream_field(omega)?)?,
        ),
        (
            "radial",
            false,
            extension::extend(extension::radial_unit(omega)?)?,
        ),
    ];
    let r_lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let r_hi = radii.iter().copied().fold(0.0, f64::max);
    cases
        .into_iter()
        .map(|(name, div_free, ext)| {
            let flux = extension::flux_check(&ext, radii, n_theta)?;
            let seam_jump = radii
                .iter()
                .map(|&r| {
                    let [a, b, c, d] = ext.seam_traces(r);
                    (a - b).abs().max((c - d).abs())
                })
                .fold(0.0, f64::max);
            let divergence = ext.divergence_check(r_lo, r_hi.max(r_lo * 2.0), 128, 1024)?;
            Ok(ExtensionCase {
                name: name.to_string(),
                divergence_free: div_free,
                max_abs_flux: flux.iter().map(|f| f.1.abs()).fold(0.0, f64::max),
                flux,
                seam_jump,
                detector_fires: divergence.fires(DIVERGENCE_DETECTOR_TOL),
                divergence,
            })
        })
        .collect()
}

fn run_extend(config: &RunConfig, sink: &mut Sink) -> Result<()> {
    let radius = config.domain.radius;
    let radii = config.shell_radii_or(vec![0.1 * radius, 0.25 * radius, 0.5 * radius, radius]);
    let cases = extension_study(config.omega(), &radii, config.experiment.n_theta)?;
    for case in &cases {
        let meta = vec![format!(
            "field={} n_theta={}",
            case.name, config.experiment.n_theta
        )];
        sink.csv(&format!("flux_{}.csv", case.name), &meta, |w| {
            extension::write_flux_csv(&case.flux, w)
        })?;
    }
    sink.json("report.json", &cases)
}
