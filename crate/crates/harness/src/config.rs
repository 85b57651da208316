//! Experiment configuration files (TOML).
//!
//! ```toml
//! [problem]
//! builtin = "due"            # or a [problem.network] table of file paths
//! fixture = "two_path_toy"
//!
//! [grid]
//! t0 = 0.0
//! t1 = 2.0
//! bins = 24
//!
//! [[solver]]
//! kind = "fbf"               # fbf | tseng | extragradient | projected_gradient
//! step = "adaptive"          # adaptive | constant
//! rho_step = 0.5
//! tol = 1e-4
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys are rejected. A solver without `seed` starts from the
//! projection of the origin; with a seed it starts from a random feasible
//! point drawn with that seed.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vifbf_core::due::{DelayModelKind, DueScenario, Penalty, FIXTURES};
use vifbf_core::operators::{ProblemParams, BUILTIN_PROBLEMS};
use vifbf_core::solvers::{Schedule, SolveOptions};

/// Histogram edges for o/d gaps (hours) when the config gives none.
pub const DEFAULT_GAP_EDGES: &[f64] = &[0.0, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    /// Malformed TOML or an unknown or mistyped key.
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A value outside its allowed range, named by its path in the file.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(rename = "solver", default)]
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Name of a builtin instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Draws a random instance where the builtin supports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Bundled network for `builtin = "due"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    /// `affine_kernel` or `point_queue`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_exponent: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_time_scale: Option<f64>,
    /// `false` drops the non-negativity of departure rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<bool>,
    /// Network files; relative paths are resolved against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: PathBuf,
    pub links: PathBuf,
    pub od: PathBuf,
    pub paths: PathBuf,
}

/// Departure-time grid of DUE problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub t1: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Fbf,
    Tseng,
    Extragradient,
    ProjectedGradient,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fbf => "fbf",
            Self::Tseng => "tseng",
            Self::Extragradient => "extragradient",
            Self::ProjectedGradient => "projected_gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Adaptive,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// File stem of this solver's outputs; defaults to `<index>_<kind>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Step rule; `fbf` and `tseng` default to adaptive, the other
    /// baselines only support a constant step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepKind>,
    /// Absolute step (initial step under the adaptive rule).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Step as a fraction of `1/L`, with `L` the analytic bound or, when the
    /// problem has none, a sampled estimate. Without either step key the
    /// fraction is 1 for the adaptive rule and 0.5 for constant steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_lipschitz_fraction: Option<f64>,
    #[serde(default = "default_rho_step")]
    pub rho_step: f64,
    #[serde(default = "default_alpha_scale")]
    pub alpha_scale: f64,
    #[serde(default = "default_alpha_offset")]
    pub alpha_offset: f64,
    #[serde(default = "default_beta_bar")]
    pub beta_bar: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_rho_step() -> f64 {
    0.5
}

fn default_alpha_scale() -> f64 {
    Schedule::default().alpha_scale()
}

fn default_alpha_offset() -> f64 {
    Schedule::default().alpha_offset()
}

fn default_beta_bar() -> f64 {
    Schedule::default().beta_bar()
}

fn default_tol() -> f64 {
    SolveOptions::default().tol
}

fn default_kmax() -> usize {
    SolveOptions::default().kmax
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_gap_edges() -> Vec<f64> {
    DEFAULT_GAP_EDGES.to_vec()
}

impl SolverConfig {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            name: None,
            step: None,
            gamma: None,
            gamma_lipschitz_fraction: None,
            rho_step: default_rho_step(),
            alpha_scale: default_alpha_scale(),
            alpha_offset: default_alpha_offset(),
            beta_bar: default_beta_bar(),
            tol: default_tol(),
            kmax: default_kmax(),
            seed: None,
        }
    }

    /// Output file stem of the solver at `index`.
    pub fn label(&self, index: usize) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{index}_{}", self.kind.as_str()))
    }

    pub fn step_kind(&self) -> StepKind {
        match (self.step, self.kind) {
            (Some(step), _) => step,
            (None, SolverKind::Fbf | SolverKind::Tseng) => StepKind::Adaptive,
            (None, _) => StepKind::Constant,
        }
    }

    pub fn schedule(&self) -> vifbf_core::Result<Schedule> {
        Schedule::harmonic(self.alpha_scale, self.alpha_offset, self.beta_bar)
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions::new(self.tol, self.kmax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative to the output root (the config file's directory unless
    /// overridden by the environment).
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    /// Fill the `ms` trace column. Off by default so repeated runs produce
    /// identical files.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Bin edges of the o/d gap histogram.
    #[serde(default = "default_gap_edges")]
    pub gap_edges: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
            record_wall_time: false,
            gap_edges: default_gap_edges(),
        }
    }
}

impl ExperimentConfig {
    /// A single-problem config with one solver and default output.
    pub fn builtin(name: &str, solvers: Vec<SolverConfig>) -> Self {
        Self {
            problem: ProblemConfig {
                builtin: Some(name.to_string()),
                ..ProblemConfig::default()
            },
            grid: None,
            solvers,
            output: OutputConfig::default(),
        }
    }

    /// Whether the problem is a DUE instance (with o/d gap reporting).
    pub fn is_due(&self) -> bool {
        self.problem.network.is_some() || self.problem.builtin.as_deref() == Some("due")
    }

    /// DUE scenario parameters, with unset fields at their defaults.
    pub fn due_scenario(&self) -> Result<DueScenario, ConfigError> {
        let p = &self.problem;
        let mut s = DueScenario::default();
        if let Some(f) = &p.fixture {
            s.fixture = f.clone();
        }
        if let Some(g) = self.grid {
            s.t0 = g.t0;
            s.t1 = g.t1;
            s.bins = g.bins;
        }
        if let Some(m) = &p.model {
            s.model =
                DelayModelKind::parse(m).map_err(|e| invalid("problem.model", e.to_string()))?;
        }
        if p.penalty_coefficient.is_some() || p.penalty_exponent.is_some() {
            let base = Penalty::default();
            s.penalty = Penalty::new(
                p.penalty_coefficient.unwrap_or(base.coefficient()),
                p.penalty_exponent.unwrap_or(base.exponent()),
            )
            .map_err(|e| {
                let field = if p.penalty_exponent.is_some_and(|q| q != 1 && q != 2) {
                    "problem.penalty_exponent"
                } else {
                    "problem.penalty_coefficient"
                };
                invalid(field, e.to_string())
            })?;
        }
        if let Some(v) = p.kernel_scale {
            s.kernel_scale = v;
        }
        if let Some(v) = p.kernel_time_scale {
            s.kernel_time_scale = v;
        }
        if let Some(v) = p.nonneg {
            s.nonneg = v;
        }
        Ok(s)
    }

    /// Builtin-instance parameters, with unset fields at their defaults.
    pub fn problem_params(&self) -> Result<ProblemParams, ConfigError> {
        let p = &self.problem;
        let base = ProblemParams::default();
        Ok(ProblemParams {
            dim: p.dim.unwrap_or(base.dim),
            seed: p.seed,
            lower: p.lower.unwrap_or(base.lower),
            upper: p.upper.unwrap_or(base.upper),
            radius: p.radius.unwrap_or(base.radius),
            due: if self.is_due() {
                self.due_scenario()?
            } else {
                base.due
            },
        })
    }

    /// Checks every semantic constraint; errors name the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_problem()?;
        if self.solvers.is_empty() {
            return Err(invalid("solver", "at least one solver is required"));
        }
        let mut labels = HashSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            validate_solver(i, s)?;
            let label = s.label(i);
            if !labels.insert(label.clone()) {
                return Err(invalid(
                    format!("solver[{i}].name"),
                    format!("duplicate name `{label}`"),
                ));
            }
        }
        let edges = &self.output.gap_edges;
        if edges.len() < 2 {
            return Err(invalid("output.gap_edges", "need at least two edges"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "output.gap_edges",
                "edges must be finite and strictly increasing",
            ));
        }
        Ok(())
    }

    fn validate_problem(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        match (&p.builtin, &p.network) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "problem",
                    "give either `builtin` or a `network` table, not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "problem",
                    "one of `builtin` or `network` is required",
                ))
            }
            (Some(name), None) if !BUILTIN_PROBLEMS.contains(&name.as_str()) => {
                return Err(invalid(
                    "problem.builtin",
                    format!(
                        "unknown builtin `{name}` (expected one of {})",
                        BUILTIN_PROBLEMS.join(", ")
                    ),
                ))
            }
            _ => {}
        }
        if p.dim == Some(0) {
            return Err(invalid("problem.dim", "must be positive"));
        }
        if let (Some(lo), Some(hi)) = (p.lower, p.upper) {
            if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) {
                return Err(invalid(
                    "problem.upper",
                    format!("must be at least lower = {lo}"),
                ));
            }
        }
        if p.radius.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(invalid("problem.radius", "must be positive"));
        }
        let due_only = [
            ("fixture", p.fixture.is_some()),
            ("model", p.model.is_some()),
            ("penalty_coefficient", p.penalty_coefficient.is_some()),
            ("penalty_exponent", p.penalty_exponent.is_some()),
            ("kernel_scale", p.kernel_scale.is_some()),
            ("kernel_time_scale", p.kernel_time_scale.is_some()),
            ("nonneg", p.nonneg.is_some()),
        ];
        if !self.is_due() {
            if let Some((key, _)) = due_only.iter().find(|(_, set)| *set) {
                return Err(invalid(
                    format!("problem.{key}"),
                    "only applies to DUE problems",
                ));
            }
            if self.grid.is_some() {
                return Err(invalid("grid", "only applies to DUE problems"));
            }
            return Ok(());
        }
        if p.network.is_some() && p.fixture.is_some() {
            return Err(invalid(
                "problem.fixture",
                "cannot be combined with a network table",
            ));
        }
        if let Some(f) = &p.fixture {
            if !FIXTURES.contains(&f.as_str()) {
                return Err(invalid(
                    "problem.fixture",
                    format!(
                        "unknown fixture `{f}` (expected one of {})",
                        FIXTURES.join(", ")
                    ),
                ));
            }
        }
        if let Some(g) = self.grid {
            if g.bins == 0 {
                return Err(invalid("grid.bins", "must be positive"));
            }
            if !(g.t0.is_finite() && g.t1.is_finite() && g.t1 > g.t0) {
                return Err(invalid("grid.t1", "need finite t0 < t1"));
            }
        }
        if p.kernel_scale.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("problem.kernel_scale", "must be non-negative"));
        }
        if p.kernel_time_scale
            .is_some_and(|v| !(v > 0.0 && v.is_finite()))
        {
            return Err(invalid("problem.kernel_time_scale", "must be positive"));
        }
        self.due_scenario().map(|_| ())
    }
}

fn validate_solver(i: usize, s: &SolverConfig) -> Result<(), ConfigError> {
    let field = |name: &str| format!("solver[{i}].{name}");
    if let Some(name) = &s.name {
        let ok = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok {
            return Err(invalid(
                field("name"),
                "use letters, digits, `_` and `-` only",
            ));
        }
    }
    if !(s.tol > 0.0 && s.tol.is_finite()) {
        return Err(invalid(
            field("tol"),
            format!("must be positive, got {}", s.tol),
        ));
    }
    if s.kmax == 0 {
        return Err(invalid(field("kmax"), "must be at least 1"));
    }
    if s.gamma.is_some() && s.gamma_lipschitz_fraction.is_some() {
        return Err(invalid(
            field("gamma"),
            "give either gamma or gamma_lipschitz_fraction",
        ));
    }
    if s.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
        return Err(invalid(field("gamma"), "must be positive"));
    }
    if s.gamma_lipschitz_fraction
        .is_some_and(|g| !(g > 0.0 && g.is_finite()))
    {
        return Err(invalid(
            field("gamma_lipschitz_fraction"),
            "must be positive",
        ));
    }
    if !(s.rho_step > 0.0 && s.rho_step < 1.0) {
        return Err(invalid(
            field("rho_step"),
            format!("must lie in (0, 1), got {}", s.rho_step),
        ));
    }
    let adaptive_capable = matches!(s.kind, SolverKind::Fbf | SolverKind::Tseng);
    if !adaptive_capable && s.step == Some(StepKind::Adaptive) {
        return Err(invalid(
            field("step"),
            format!("{} supports only a constant step", s.kind.as_str()),
        ));
    }
    if s.kind == SolverKind::Fbf {
        if !(s.alpha_scale > 0.0 && s.alpha_scale.is_finite()) {
            return Err(invalid(field("alpha_scale"), "must be positive"));
        }
        if !(s.alpha_offset > s.alpha_scale && s.alpha_offset.is_finite()) {
            return Err(invalid(field("alpha_offset"), "must exceed alpha_scale"));
        }
        if !(s.beta_bar > 0.0 && s.beta_bar < 1.0) {
            return Err(invalid(field("beta_bar"), "must lie in (0, 1)"));
        }
        s.schedule()
            .and_then(|sch| sch.validate(s.kmax))
            .map_err(|e| invalid(field("alpha_scale"), e.to_string()))?;
    }
    Ok(())
}

/// Parses and validates a config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_column(text, span.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |nl| before.len() - nl - 1)
        + 1;
    (line, column)
}

/// TOML text that parses back to an equal config.
pub fn serialize(config: &ExperimentConfig) -> Result<String, ConfigError> {
    toml::to_string(config).map_err(|e| ConfigError::Serialize(e.to_string()))
}
