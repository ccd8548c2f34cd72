//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Positional arguments that do not start with `-` select criteria by substring.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use sector_homog::cell::CellCorrectors;
use sector_homog::coeff::{default_periodic_cell, normalize_to_identity, CellProfile, CoeffField};
use sector_homog::correctors::{resolving_mesh, resolving_mesh_with, CorrectorSet, SectorOperator};
use sector_homog::experiments::{
    default_excess_radii, default_gain_radii, extension_study, gain_study, gamma_recovery_study,
    GainRun, GainSetup,
};
use sector_homog::fem::{l2_average_on, FeFunction};
use sector_homog::geometry::{build_sector_mesh, SectorDomain, TriMesh};
use sector_homog::linalg::{self, Mat2};
use sector_homog::metrics::{
    corrected_singular_basis, excess_decay_experiment, excess_profile, geometric_radii,
    loglog_slope,
};
use sector_homog::singular::{CutoffBump, SingularFunction};
use sector_homog::two_scale::{
    build_u_reg, default_forcing, extract_gammas, singular_interpolant, solve_pair,
    ExpansionBundle, DEFAULT_GAMMA_CUTOFF,
};
use sector_homog::Result;

const OMEGA_OVER_PI: f64 = 1.95;
const EPSILONS: [f64; 3] = [0.2, 0.1, 0.05];

type Outcome = Result<(bool, String)>;

fn omega() -> f64 {
    OMEGA_OVER_PI * PI
}

fn domain() -> SectorDomain {
    SectorDomain::new(omega(), 1.0).unwrap()
}

fn rho(n: usize) -> f64 {
    SingularFunction::new(n, omega()).unwrap().rho
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn dev(m: &Mat2) -> f64 {
    linalg::sym_spectral_norm(&linalg::mat_sub(m, &linalg::IDENTITY))
}

fn normalized_field(eps: f64) -> Result<CoeffField> {
    let raw = CoeffField::rotated_periodic(default_periodic_cell(), 0.35, eps)?;
    let cell = CellCorrectors::solve(&raw, 256)?;
    normalize_to_identity(&raw, &cell.abar)
}

struct GainContext {
    mesh: Arc<TriMesh>,
    field: CoeffField,
    runs: Vec<GainRun>,
}

static GAIN: OnceLock<std::result::Result<GainContext, String>> = OnceLock::new();

/// Gain study at h = eps/8 for the smallest epsilon, shared by three criteria.
fn gain_context() -> std::result::Result<&'static GainContext, String> {
    GAIN.get_or_init(|| {
        let build = || -> Result<GainContext> {
            let mesh = Arc::new(resolving_mesh(domain(), 0.05, 2.0)?);
            let field = normalized_field(0.05)?;
            let setup = GainSetup {
                epsilons: EPSILONS.to_vec(),
                shell_radii: default_gain_radii(1.0),
                fit_window: [0.5f64.powi(9), 0.5],
                n_modes: 1,
                gamma_cutoff: DEFAULT_GAMMA_CUTOFF,
                opts: Default::default(),
            };
            let runs = gain_study(&mesh, &field, &setup)?;
            Ok(GainContext { mesh, field, runs })
        };
        build().map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(|e| e.clone())
}

fn homogenized_normalization() -> Outcome {
    let field = normalized_field(0.05)?;
    let cell = CellCorrectors::solve(&field, 256)?;
    let d = dev(&cell.abar);
    Ok((
        d <= 1e-3,
        format!("|abar - Id| = {d:.3e} (tol 1e-3), abar = {:?}", cell.abar),
    ))
}

fn checkerboard_duality() -> Outcome {
    let field = CoeffField::checkerboard(4.0, 0.05, 0)?;
    let cell = CellCorrectors::solve(&field, 512)?;
    let d = dev(&cell.abar);
    Ok((
        d <= 1e-2,
        format!("|abar - Id| = {d:.3e} (tol 1e-2) at grid 512, contrast 4"),
    ))
}

fn laminate_oracle() -> Outcome {
    let values = [1.0, 4.0];
    let field = CoeffField::rotated_periodic(CellProfile::Laminate { values }, 0.0, 1.0)?;
    let cell = CellCorrectors::solve(&field, 256)?;
    let harmonic = 2.0 / (1.0 / values[0] + 1.0 / values[1]);
    let arithmetic = 0.5 * (values[0] + values[1]);
    let a = cell.abar;
    let err = (a[0][0] - harmonic)
        .abs()
        .max((a[1][1] - arithmetic).abs())
        .max(a[0][1].abs())
        .max(a[1][0].abs());
    Ok((
        err <= 1e-3,
        format!("max entry error {err:.3e} (tol 1e-3), abar = {a:?}"),
    ))
}

fn gamma_recovery() -> Outcome {
    let c = [1.0, 0.5, 0.25];
    let base = build_sector_mesh(domain(), 0.005, 2.0)?;
    let levels = gamma_recovery_study(base, &c, 1, DEFAULT_GAMMA_CUTOFF)?;
    let (e0, e1) = (&levels[0].error, &levels[1].error);
    let within = e0.iter().all(|e| e.abs() <= 5e-3);
    let halves = e0.iter().zip(e1).all(|(a, b)| b.abs() <= 0.5 * a.abs());
    Ok((
        within && halves,
        format!(
            "errors h=0.005 ({} vertices): {}; refined ({} vertices): {}",
            levels[0].num_vertices,
            sci(e0),
            levels[1].num_vertices,
            sci(e1)
        ),
    ))
}

fn remainder_scaling() -> Outcome {
    let mesh = Arc::new(build_sector_mesh(domain(), 0.005, 2.0)?);
    let op = SectorOperator::laplacian(mesh.clone(), Default::default())?;
    let u_bar = sector_homog::metrics::solve_arc_problem(&op, &[1.0, 0.5])?;
    let gamma = extract_gammas(&u_bar, 1, DEFAULT_GAMMA_CUTOFF)?;
    let u_reg = build_u_reg(&u_bar, &gamma, &CutoffBump::new(1.0)?)?;
    let radii = geometric_radii(0.01, 0.1, 8)?;
    let l2 = radii
        .iter()
        .map(|&r| l2_average_on(&u_reg, &mesh.shell_elements(r)?))
        .collect::<Result<Vec<_>>>()?;
    let fit = loglog_slope(&radii, &l2)?;
    let target = rho(2);
    Ok((
        (fit.slope - target).abs() <= 0.1,
        format!(
            "slope {:.3} +- {:.3}, target rho_2 = {target:.3} +- 0.1, gamma_1 = {:.5}",
            fit.slope, fit.half_width, gamma[0]
        ),
    ))
}

fn gain_reproduction() -> Outcome {
    let ctx = gain_context().map_err(sector_homog::Error::Config)?;
    let run = ctx
        .runs
        .iter()
        .find(|r| r.epsilon == 0.05)
        .expect("epsilon 0.05 is in the study");
    let rep = &run.report;
    let all_ge_one = ctx
        .runs
        .iter()
        .all(|r| r.report.gain.iter().all(|&g| g >= 1.0));
    let min_gain = ctx
        .runs
        .iter()
        .flat_map(|r| r.report.gain.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let n = rep.gain.len();
    let inner = &rep.gain[n - 2..];
    let inner_ok = inner.iter().all(|&g| g > 5.0);
    let slope = rep.slope_gain.map(|f| f.slope).unwrap_or(f64::NAN);
    let slope_ok = (-0.85..=-0.35).contains(&slope);
    Ok((
        all_ge_one && inner_ok && slope_ok,
        format!(
            "(a) min gain {min_gain:.3} >= 1: {all_ge_one}; (b) innermost gains {inner:.1?} at R = {} > 5: {inner_ok}; \
             (c) slope {slope:.3} +- {:.3} over R in [{:.2e}, 0.5] in [-0.85, -0.35]: {slope_ok}; mesh {} vertices, gains {:.2?}",
            sci(&rep.shell_radii[n - 2..]),
            rep.slope_gain.map(|f| f.half_width).unwrap_or(f64::NAN),
            rep.fit_window[0],
            ctx.mesh.num_vertices(),
            rep.gain
        ),
    ))
}

fn error_rate_trend() -> Outcome {
    let mesh = Arc::new(resolving_mesh_with(domain(), 0.05, 2.0, 12.0)?);
    let field = normalized_field(0.05)?;
    let setup = GainSetup {
        epsilons: EPSILONS.to_vec(),
        shell_radii: default_gain_radii(1.0),
        fit_window: [0.5f64.powi(9), 0.5],
        n_modes: 1,
        gamma_cutoff: DEFAULT_GAMMA_CUTOFF,
        opts: Default::default(),
    };
    let runs = gain_study(&mesh, &field, &setup)?;
    let errs: Vec<f64> = runs.iter().map(|r| r.summary.energy_err_hybrid).collect();
    let factors: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    Ok((
        factors.iter().all(|&f| f >= 1.6),
        format!(
            "||grad R1|| = {} for eps = {EPSILONS:?}; factors {factors:.3?} (>= 1.6); mesh {} vertices, 12 elements per period at eps 0.05",
            sci(&errs),
            mesh.num_vertices()
        ),
    ))
}

fn corner_corrector_growth() -> Outcome {
    let ctx = gain_context().map_err(sector_homog::Error::Config)?;
    let run = ctx
        .runs
        .iter()
        .find(|r| r.epsilon == 0.05)
        .expect("epsilon 0.05 is in the study");
    let fit = run
        .corner_growth_fit
        .ok_or_else(|| sector_homog::Error::Fit("no growth fit at epsilon 0.05".into()))?;
    let r1 = rho(1);
    let (lo, hi) = (r1 - 1.15, r1 - 0.75);
    Ok((
        (lo..=hi).contains(&fit.slope),
        format!(
            "shell-L2 slope {:.3} +- {:.3} over R in [0.2, 0.5], band [{lo:.3}, {hi:.3}]",
            fit.slope, fit.half_width
        ),
    ))
}

fn excess_decay() -> Outcome {
    let mesh = Arc::new(build_sector_mesh(domain(), 0.01, 2.0)?);
    let lap = SectorOperator::laplacian(mesh.clone(), Default::default())?;
    let radii = default_excess_radii(1.0);
    let slope = |rows: &[sector_homog::metrics::ExcessRow]| -> Result<f64> {
        let xs: Vec<f64> = rows.iter().map(|r| r.r).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.excess).collect();
        Ok(loglog_slope(&xs, &ys)?.slope)
    };
    let t1 = singular_interpolant(&mesh, 1)?;
    let t2 = singular_interpolant(&mesh, 2)?;
    let s0 = slope(&excess_profile(&t1, &[], &radii)?)?;
    let basis = corrected_singular_basis(&lap, 1)?;
    let u: FeFunction = t1.axpby(1.0, &t2, 0.5);
    let s1 = slope(&excess_profile(&u, &basis, &radii)?)?;
    let (x0, x1) = (2.0 * (rho(1) - 1.0), 2.0 * (rho(2) - 1.0));
    let analytic_ok = (s0 - x0).abs() <= 0.05 && (s1 - x1).abs() <= 0.05;

    let ctx = gain_context().map_err(sector_homog::Error::Config)?;
    let het = SectorOperator::new(
        ctx.mesh.clone(),
        ctx.field.with_epsilon(0.05)?,
        Default::default(),
    )?;
    let window = [radii[radii.len() - 1], 0.5];
    let decay = excess_decay_experiment(&het, 0, 0, &radii, window)?;
    let periodic_ok = decay.fit.slope <= x0 + 0.3;
    Ok((
        analytic_ok && periodic_ok,
        format!(
            "a=Id: N=0 exponent {s0:.3} vs {x0:.3}, N=1 exponent {s1:.3} vs {x1:.3} (tol 0.05); \
             periodic eps=0.05 N=0 exponent {:.3} +- {:.3} <= {:.3}",
            decay.fit.slope,
            decay.fit.half_width,
            x0 + 0.3
        ),
    ))
}

fn divergence_free_extension() -> Outcome {
    let cases = extension_study(PI, &[0.1, 0.25, 0.5, 1.0], 4096)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for c in &cases {
        let case_ok = c.seam_jump == 0.0
            && if c.divergence_free {
                c.max_abs_flux <= 1e-6 && !c.detector_fires
            } else {
                c.detector_fires
            };
        ok &= case_ok;
        parts.push(format!(
            "{}: |flux| {:.1e}, seam jump {:e}, relative divergence {:.1e}, detector {}",
            c.name,
            c.max_abs_flux,
            c.seam_jump,
            c.divergence.relative,
            if c.detector_fires { "fires" } else { "silent" }
        ));
    }
    Ok((
        ok,
        format!("omega = pi, n_theta = 4096; {}", parts.join("; ")),
    ))
}

fn degenerate_identity() -> Outcome {
    let mesh = Arc::new(build_sector_mesh(domain(), 0.02, 2.0)?);
    let het = SectorOperator::new(mesh.clone(), CoeffField::identity(), Default::default())?;
    let hom = SectorOperator::laplacian(mesh.clone(), Default::default())?;
    let correctors = CorrectorSet::solve(&het, 2)?;
    let max_corr = correctors
        .dirichlet
        .iter()
        .chain(&correctors.corner)
        .map(|c| c.max_abs())
        .fold(0.0, f64::max);
    let (u_eps, u_bar) = solve_pair(&het, &hom, default_forcing)?;
    let scale = u_bar.max_abs();
    let bundle = ExpansionBundle::assemble(
        u_eps,
        u_bar.clone(),
        &correctors,
        2,
        DEFAULT_GAMMA_CUTOFF,
        &CutoffBump::new(1.0)?,
    )?;
    let diff = |f: &FeFunction| f.axpby(1.0, &u_bar, -1.0).max_abs();
    let (dc, dh) = (diff(&bundle.classical), diff(&bundle.hybrid));
    let grad_scale = u_bar
        .gradient_p0()
        .iter()
        .map(|g| linalg::norm(*g))
        .fold(0.0, f64::max);
    let max_err = bundle
        .err_classical
        .iter()
        .chain(&bundle.err_hybrid)
        .map(|g| linalg::norm(*g))
        .fold(0.0, f64::max);
    let tol = 1e-12;
    Ok((
        max_corr <= tol && dc <= tol * scale && dh <= tol * scale && max_err <= tol * grad_scale,
        format!(
            "max |corrector| {max_corr:e}; max |classical - ubar| {dc:.1e}, max |hybrid - ubar| {dh:.1e} (scale {scale:.3e}); \
             max |error gradient| {max_err:.1e} (scale {grad_scale:.3e})"
        ),
    ))
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("homogenized-normalization", homogenized_normalization),
        ("checkerboard-duality", checkerboard_duality),
        ("laminate-oracle", laminate_oracle),
        ("gamma-recovery", gamma_recovery),
        ("remainder-scaling", remainder_scaling),
        ("gain-reproduction", gain_reproduction),
        ("error-rate-trend", error_rate_trend),
        ("corner-corrector-growth", corner_corrector_growth),
        ("excess-decay", excess_decay),
        ("divergence-free-extension", divergence_free_extension),
        ("degenerate-identity", degenerate_identity),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
