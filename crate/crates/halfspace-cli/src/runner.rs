//! Task orchestration: builds operators, kernels, and data from the
//! configuration, runs the requested task, and writes artifacts atomically.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use halfspace::datum::{BoundaryData, DatumSpec};
use halfspace::distinguished::{
    is_distinguished, DEFAULT_TOL_A, DEFAULT_TOL_B, DEFAULT_XI_SAMPLES,
};
use halfspace::grid::GridSpec;
use halfspace::kernels::{
    kernel_csv, lame_k, lame_poisson, q_family, scalar_fundamental, scalar_k, SpaceKernel,
};
use halfspace::linalg::C64;
use halfspace::maximal::{wellposedness_report, ConeSpec};
use halfspace::optensor::{
    lame_distinguished_theta, CoefficientTensor, LameModuli,
};
use halfspace::solver::{solve_dirichlet, KernelSet};
use halfspace::verify::{
    check_convolution_identities, check_decomp_pt, check_dilation_identity, check_fundamental,
    check_k_factor, check_poisson_axioms, check_q_identities, seeded_boundary_points,
    seeded_interior_points, threshold, IdentityId, ResidualReport,
};

use crate::config::{
    DatumConfig, NamedOperator, OperatorSpec, RunConfig, Task, VerifyConfig,
};
use crate::{ingest, Failure};

/// Result of a completed run: exit code plus the stdout summary lines.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub lines: Vec<String>,
}

/// Kernel machinery for one operator: the solver set plus, where closed
/// forms exist, the factor `k` and the fundamental solution.
pub struct BuiltKernels {
    pub set: KernelSet,
    pub k: Option<SpaceKernel>,
    pub fundamental: Option<SpaceKernel>,
}

/// Builds the coefficient tensor described by the configuration.
pub fn build_tensor(op: &OperatorSpec) -> Result<CoefficientTensor, Failure> {
    match op {
        OperatorSpec::Named(NamedOperator::Laplacian(l)) => {
            CoefficientTensor::laplacian(l.n).map_err(Failure::from)
        }
        OperatorSpec::Named(NamedOperator::ScalarMatrix(sm)) => {
            let n = sm.coeffs.len();
            if sm.coeffs.iter().any(|row| row.len() != n) {
                return Err(Failure::config(
                    "scalar_matrix coeffs must be a square matrix".to_string(),
                ));
            }
            let rows: Vec<Vec<C64>> = sm
                .coeffs
                .iter()
                .map(|row| row.iter().map(|z| z.value()).collect())
                .collect();
            CoefficientTensor::scalar(n, &rows).map_err(Failure::from)
        }
        OperatorSpec::Named(NamedOperator::Lame(ls)) => {
            let moduli = LameModuli::new(ls.mu, ls.lambda)?;
            let theta = ls.theta.unwrap_or_else(|| lame_distinguished_theta(moduli));
            halfspace::optensor::lame_tensor(moduli, theta, ls.n).map_err(Failure::from)
        }
        OperatorSpec::Literal(lit) => lit.build().map_err(Failure::from),
    }
}

/// Builds the kernel machinery for the operator.  General (`M > 1`) tensor
/// literals have no closed-form kernel family and are rejected.
pub fn build_kernels(op: &OperatorSpec) -> Result<BuiltKernels, Failure> {
    match op {
        OperatorSpec::Named(NamedOperator::Laplacian(_))
        | OperatorSpec::Named(NamedOperator::ScalarMatrix(_)) => {
            let a = build_tensor(op)?;
            let set = KernelSet::scalar(&a)?;
            let k = scalar_k(&a)?;
            let e = scalar_fundamental(&a)?;
            Ok(BuiltKernels { set, k: Some(k), fundamental: Some(e) })
        }
        OperatorSpec::Named(NamedOperator::Lame(ls)) => {
            let moduli = LameModuli::new(ls.mu, ls.lambda)?;
            let theta_star = lame_distinguished_theta(moduli);
            let theta = ls.theta.unwrap_or(theta_star);
            let set = if (theta - theta_star).abs() <= 1e-12 * (1.0 + theta_star.abs()) {
                KernelSet::lame(moduli, ls.n)?
            } else {
                // Off-distinguished representations go through the generic
                // linear-solve route; downstream identity checks then report
                // honestly on what that representation satisfies.
                let a = halfspace::optensor::lame_tensor(moduli, theta, ls.n)?;
                let p = lame_poisson(moduli, ls.n)?;
                let q = q_family(&a, &p, None)?;
                KernelSet::new(a, p, q)?
            };
            let k = lame_k(moduli, ls.n)?;
            Ok(BuiltKernels { set, k: Some(k), fundamental: None })
        }
        OperatorSpec::Literal(lit) => {
            let a = lit.build()?;
            if a.m() != 1 {
                return Err(Failure::config(
                    "general tensor literals carry no closed-form kernel family; \
                     kernel tasks need laplacian, scalar_matrix, lame, or a scalar \
                     (M = 1) literal"
                        .to_string(),
                ));
            }
            let set = KernelSet::scalar(&a)?;
            let k = scalar_k(&a)?;
            let e = scalar_fundamental(&a)?;
            Ok(BuiltKernels { set, k: Some(k), fundamental: Some(e) })
        }
    }
}

/// Builds the boundary datum; CSV paths resolve relative to `base_dir`.
///
/// When both a configured grid and a CSV datum are present they must agree;
/// the returned data's own grid is authoritative for the run.
fn build_datum(
    dc: &DatumConfig,
    grid: Option<&GridSpec>,
    base_dir: &Path,
) -> Result<BoundaryData, Failure> {
    match (&dc.components, &dc.csv) {
        (Some(_), Some(_)) | (None, None) => Err(Failure::config(
            "datum needs exactly one of 'components' or 'csv'".to_string(),
        )),
        (Some(components), None) => {
            let grid = grid.ok_or_else(|| {
                Failure::config("catalog datum needs a 'grid' section".to_string())
            })?;
            let spec = DatumSpec { components: components.clone() };
            BoundaryData::from_spec(&spec, grid, dc.ell, dc.p).map_err(Failure::from)
        }
        (None, Some(path)) => {
            let resolved =
                if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let data = ingest::read_datum_csv(&resolved, dc.ell, dc.p)?;
            if let Some(grid) = grid {
                if data.grid() != grid {
                    return Err(Failure::config(format!(
                        "csv grid (n={}, R={}, {} pts/axis) does not match the \
                         configured grid (n={}, R={}, {} pts/axis)",
                        data.grid().n,
                        data.grid().half_width,
                        data.grid().points_per_axis,
                        grid.n,
                        grid.half_width,
                        grid.points_per_axis
                    )));
                }
            }
            Ok(data)
        }
    }
}

fn require_grid(cfg: &RunConfig, task: Task) -> Result<GridSpec, Failure> {
    cfg.grid.ok_or_else(|| {
        Failure::config(format!("task '{}' needs a 'grid' section", task.name()))
    })
}

fn require_datum(cfg: &RunConfig, task: Task) -> Result<&DatumConfig, Failure> {
    cfg.datum.as_ref().ok_or_else(|| {
        Failure::config(format!("task '{}' needs a 'datum' section", task.name()))
    })
}

/// Writes bytes atomically (temp file + rename in the destination directory).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| Failure::config(format!("cannot persist {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Failure::config(format!("serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Identity ids are valid tolerance keys, as are the membership-test
/// tolerances; anything else is rejected.
fn validate_tolerances(cfg: &RunConfig) -> Result<(), Failure> {
    for key in cfg.tolerances.keys() {
        let id_like = serde_json::from_value::<IdentityId>(serde_json::Value::String(
            key.clone(),
        ))
        .is_ok();
        if !id_like && key != "condition_a" && key != "n2_integral" {
            return Err(Failure::config(format!("unknown tolerance key '{key}'")));
        }
    }
    Ok(())
}

fn effective_threshold(cfg: &RunConfig, id: IdentityId) -> f64 {
    cfg.tolerances.get(&id.to_string()).copied().unwrap_or_else(|| threshold(id))
}

fn report_line(r: &ResidualReport, thr: f64) -> String {
    let verdict = if r.max_residual <= thr { "pass" } else { "FAIL" };
    format!(
        "{verdict} {:<24} residual {:.3e}  threshold {:.3e}  ({} points)",
        r.identity_id.to_string(),
        r.max_residual,
        thr,
        r.points_tested
    )
}

/// Runs `task` under `cfg`, writing artifacts into `out_dir`.
pub fn run(
    cfg: &RunConfig,
    task: Task,
    out_dir: &Path,
    base_dir: &Path,
) -> Result<Outcome, Failure> {
    if let Some(pinned) = cfg.task {
        if pinned != task {
            return Err(Failure::config(format!(
                "config pins task '{}' but the subcommand is '{}'",
                pinned.name(),
                task.name()
            )));
        }
    }
    validate_tolerances(cfg)?;
    match task {
        Task::CheckTensor => run_check_tensor(cfg, out_dir),
        Task::Verify => run_verify(cfg, out_dir, base_dir),
        Task::Solve => run_solve(cfg, out_dir, base_dir),
        Task::MaximalReport => run_maximal(cfg, out_dir, base_dir),
        Task::ExportKernel => run_export_kernel(cfg, out_dir),
    }
}

fn run_check_tensor(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, Failure> {
    let a = build_tensor(&cfg.operator)?;
    let tol_a = cfg.tolerances.get("condition_a").copied().unwrap_or(DEFAULT_TOL_A);
    let tol_b = cfg.tolerances.get("n2_integral").copied().unwrap_or(DEFAULT_TOL_B);
    let report = is_distinguished(&a, DEFAULT_XI_SAMPLES, tol_a, tol_b)?;
    let path = out_dir.join("check-tensor.json");
    write_json(&path, &report)?;
    let lines = vec![
        format!(
            "verdict: {} (condition_a {:.3e}, n2_integral {:.3e})",
            if report.verdict { "distinguished" } else { "not distinguished" },
            report.condition_a_residual,
            report.n2_integral_residual
        ),
        format!("wrote {}", path.display()),
    ];
    Ok(Outcome { exit_code: if report.verdict { 0 } else { 1 }, lines })
}

fn run_verify(cfg: &RunConfig, out_dir: &Path, base_dir: &Path) -> Result<Outcome, Failure> {
    let vc: VerifyConfig = cfg.verify.unwrap_or_default();
    let built = build_kernels(&cfg.operator)?;
    let a = built.set.tensor().clone();
    let n = a.n();

    let mut reports =
        check_poisson_axioms(&a, built.set.poisson(), vc.quad_tol, vc.fd_step)?;
    let interior = seeded_interior_points(n, 20, cfg.seed);
    reports.push(check_dilation_identity(built.set.poisson(), &interior, vc.fd_step)?);
    let boundary = seeded_boundary_points(n - 1, 100, cfg.seed);
    reports.extend(check_q_identities(
        &a,
        built.set.poisson(),
        built.set.aux(),
        &boundary,
        vc.fd_step,
    )?);
    if let Some(k) = &built.k {
        reports.extend(check_k_factor(built.set.poisson(), k, &boundary)?);
    }
    reports.push(check_decomp_pt(&a, &interior)?);
    if let Some(e) = &built.fundamental {
        reports.extend(check_fundamental(&a, e, &interior, vc.fd_step)?);
    }
    if let Some(dc) = &cfg.datum {
        let data = build_datum(dc, cfg.grid.as_ref(), base_dir)?;
        reports.extend(check_convolution_identities(
            &built.set,
            &data,
            vc.conv_height,
            vc.fd_step,
        )?);
    }

    let path = out_dir.join("verify.json");
    write_json(&path, &reports)?;

    let mut lines = Vec::with_capacity(reports.len() + 2);
    let mut all_pass = true;
    for r in &reports {
        let thr = effective_threshold(cfg, r.identity_id);
        all_pass &= r.max_residual <= thr;
        lines.push(report_line(r, thr));
    }
    lines.push(format!(
        "{}/{} identities within threshold",
        reports
            .iter()
            .filter(|r| r.max_residual <= effective_threshold(cfg, r.identity_id))
            .count(),
        reports.len()
    ));
    lines.push(format!("wrote {}", path.display()));
    Ok(Outcome { exit_code: if all_pass { 0 } else { 1 }, lines })
}

fn run_solve(cfg: &RunConfig, out_dir: &Path, base_dir: &Path) -> Result<Outcome, Failure> {
    let built = build_kernels(&cfg.operator)?;
    let dc = require_datum(cfg, Task::Solve)?;
    let data = build_datum(dc, cfg.grid.as_ref(), base_dir)?;
    let sc = cfg
        .solve
        .as_ref()
        .ok_or_else(|| Failure::config("solve task needs a 'solve' section".to_string()))?;
    let field = solve_dirichlet(&built.set, &data, &sc.heights, &sc.points)?;
    let path = out_dir.join("solve.csv");
    write_atomic(&path, field.csv().as_bytes())?;
    let lines = vec![
        format!(
            "sampled {} heights x {} points x {} components",
            sc.heights.len(),
            sc.points.len(),
            field.m
        ),
        format!("wrote {}", path.display()),
    ];
    Ok(Outcome { exit_code: 0, lines })
}

fn run_maximal(cfg: &RunConfig, out_dir: &Path, base_dir: &Path) -> Result<Outcome, Failure> {
    let built = build_kernels(&cfg.operator)?;
    let dc = require_datum(cfg, Task::MaximalReport)?;
    let data = build_datum(dc, cfg.grid.as_ref(), base_dir)?;
    let mc = cfg.maximal.ok_or_else(|| {
        Failure::config("maximal-report task needs a 'maximal' section".to_string())
    })?;
    let cone = ConeSpec::standard(mc.kappa, data.grid())?;
    let wd = wellposedness_report(&built.set, &data, mc.p, mc.ell, &cone, mc.report_stride)?;
    let json_path = out_dir.join("maximal-report.json");
    let csv_path = out_dir.join("maximal-report.csv");
    write_json(&json_path, &wd.report)?;
    write_atomic(&csv_path, wd.csv().as_bytes())?;
    let lines = vec![
        format!(
            "empirical constant {:.6e} over {} boundary points (p = {}, ell = {})",
            wd.report.empirical_c,
            wd.xprimes.len(),
            wd.report.p,
            mc.ell
        ),
        format!("wrote {}", json_path.display()),
        format!("wrote {}", csv_path.display()),
    ];
    Ok(Outcome { exit_code: 0, lines })
}

fn run_export_kernel(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, Failure> {
    let built = build_kernels(&cfg.operator)?;
    let grid = require_grid(cfg, Task::ExportKernel)?;
    grid.validate()?;
    if grid.n != built.set.n() {
        return Err(Failure::config(format!(
            "grid dimension n = {} does not match the operator dimension n = {}",
            grid.n,
            built.set.n()
        )));
    }
    let points: Vec<Vec<f64>> =
        (0..grid.total_points()).map(|flat| grid.point(flat)).collect();
    let csv = kernel_csv(built.set.poisson(), &points)?;
    let path = out_dir.join("kernel.csv");
    write_atomic(&path, csv.as_bytes())?;
    let lines = vec![
        format!("sampled the kernel at {} lattice points", points.len()),
        format!("wrote {}", path.display()),
    ];
    Ok(Outcome { exit_code: 0, lines })
}
