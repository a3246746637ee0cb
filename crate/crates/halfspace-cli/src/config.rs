//! Run configuration: strict JSON schema with unknown-key rejection.

use std::collections::BTreeMap;
use std::path::PathBuf;

use halfspace::datum::{ComplexSpec, ProfileSpec};
use halfspace::grid::GridSpec;
use halfspace::optensor::TensorLiteral;
use serde::Deserialize;

/// The task a run performs; mirrors the CLI subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    CheckTensor,
    Verify,
    Solve,
    MaximalReport,
    ExportKernel,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::CheckTensor => "check-tensor",
            Task::Verify => "verify",
            Task::Solve => "solve",
            Task::MaximalReport => "maximal-report",
            Task::ExportKernel => "export-kernel",
        }
    }
}

/// Operator description: a named family or a raw coefficient-tensor literal.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(NamedOperator),
    Literal(TensorLiteral),
}

/// Built-in operator families with closed-form kernels.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedOperator {
    /// `{"laplacian": {"n": 2}}`
    Laplacian(LaplacianSpec),
    /// `{"scalar_matrix": {"coeffs": [[{"re":2},{"re":0.5}], …]}}`
    ScalarMatrix(ScalarMatrixSpec),
    /// `{"lame": {"mu": 1, "lambda": 1}}`; optional `theta`, `n`.
    Lame(LameSpec),
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplacianSpec {
    pub n: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarMatrixSpec {
    /// Row-major `n×n` coefficient matrix of the scalar operator.
    pub coeffs: Vec<Vec<ComplexSpec>>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameSpec {
    pub mu: f64,
    pub lambda: f64,
    /// Mixing weight of the tensor representation.  Defaults to the
    /// distinguished value `μ(λ+μ)/(3μ+λ)`.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Ambient dimension (default 3).
    #[serde(default = "default_lame_n")]
    pub n: usize,
}

fn default_lame_n() -> usize {
    3
}

/// Boundary datum: either catalog profiles or a CSV sample file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumConfig {
    /// Catalog profiles, one list per solution component.
    #[serde(default)]
    pub components: Option<Vec<Vec<ProfileSpec>>>,
    /// CSV sample path (`x1,…,x{n-1},component,value`), resolved relative to
    /// the configuration file.  Mutually exclusive with `components`.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Tangential derivative order attached to the datum (CSV data cap: 2).
    #[serde(default)]
    pub ell: usize,
    /// Integrability exponent stored with the datum.
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    2.0
}

/// Parameters of the `solve` task.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Heights `t > 0` at which the solution is sampled.
    pub heights: Vec<f64>,
    /// Boundary evaluation points (each within the grid margin).
    pub points: Vec<Vec<f64>>,
}

/// Parameters of the `verify` task.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Base finite-difference step.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Normalization-quadrature tolerance.
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    /// Height for the grid-convolution identities.
    #[serde(default = "default_conv_height")]
    pub conv_height: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            fd_step: default_fd_step(),
            quad_tol: default_quad_tol(),
            conv_height: default_conv_height(),
        }
    }
}

// Small enough that second-order FD truncation sits well under every
// identity threshold for any seed, large enough to stay clear of the
// roundoff floor of central differences.
fn default_fd_step() -> f64 {
    2.5e-4
}

fn default_quad_tol() -> f64 {
    1e-7
}

fn default_conv_height() -> f64 {
    0.5
}

/// Parameters of the `maximal-report` task.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaximalConfig {
    /// Lebesgue exponent of the report (`1 < p < ∞`).
    pub p: f64,
    /// Derivative order covered by the report.
    pub ell: usize,
    /// Cone aperture.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Stride of the boundary report lattice.
    #[serde(default = "default_stride")]
    pub report_stride: usize,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

/// Full run configuration.
///
/// `operator` is always required; `grid`, `datum`, and the task sections are
/// validated per task.  Unknown keys anywhere are rejected.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorSpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub datum: Option<DatumConfig>,
    /// Optional task pin; must match the subcommand when present.
    #[serde(default)]
    pub task: Option<Task>,
    /// Per-identity residual-threshold overrides (keys are identity ids)
    /// plus the verdict tolerances `condition_a` / `n2_integral`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Seed for every random sampling routine.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Default output directory (overridden by `--out`).
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub maximal: Option<MaximalConfig>,
}

fn default_seed() -> u64 {
    halfspace::DEFAULT_SEED
}
