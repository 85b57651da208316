//! Projection-based solvers for `VI(X, F)`.
//!
//! [`solve_fbf`] is the anchored forward-backward-forward scheme:
//!
//! ```text
//! z_k     = P_X(x_k - g_k F(x_k))
//! r_k     = z_k + g_k (F(x_k) - F(z_k))
//! x_{k+1} = (1 - a_k - b_k) x_k + b_k r_k
//! ```
//!
//! The `-a_k x_k` pull towards the origin makes the iterates converge in norm
//! to the minimal-norm solution. The step `g_k` is either constant
//! (`g < 1/L`) or adaptive:
//!
//! ```text
//! g_{k+1} = min(rho |z_k - x_k| / |F(z_k) - F(x_k)|, g_k)   if F(z_k) != F(x_k)
//!         = g_k                                            otherwise
//! ```
//!
//! where both differences are corrected for rounding before the quotient.
//!
//! Baselines: [`solve_tseng_plain`] (`x_{k+1} = r_k`), [`solve_extragradient`]
//! and [`solve_projected_gradient`].
//!
//! All runs stop when the relative gap `|x_{k+1} - x_k|^2 / |x_k|^2` drops to
//! the tolerance. The gap can be small far from a solution when the
//! anchoring weights are small, so the residual `|x_k - z_k|` is traced too.

pub mod diagnostics;
mod schedule;

use std::time::Instant;

pub use schedule::Schedule;

use crate::error::{Error, Result};
use crate::operators::VIProblem;
use crate::space::{combine, distance, norm, HVector, TimeGrid};

/// Constant steps must satisfy `g * L <= CONSTANT_STEP_MARGIN`.
pub const CONSTANT_STEP_MARGIN: f64 = 0.99;
/// A run diverges once `|x_k| > DIVERGENCE_FACTOR * (1 + |x_0|)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Every iteration is traced up to this count, then every
/// [`SPARSE_TRACE_STRIDE`]-th one.
pub const DENSE_TRACE_LIMIT: usize = 10_000;
pub const SPARSE_TRACE_STRIDE: usize = 10;
/// Relative rounding error credited to each difference in the adaptive rule.
pub const ROUNDING_ALLOWANCE: f64 = 16.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Constant { gamma: f64 },
    Adaptive { gamma0: f64, rho: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        Self::Adaptive {
            gamma0: 1.0,
            rho: 0.5,
        }
    }
}

impl StepRule {
    /// Checks the rule against the problem and returns the initial step.
    pub fn initial_gamma(&self, problem: &VIProblem) -> Result<f64> {
        match *self {
            Self::Constant { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidStep(format!(
                        "step must be positive, got {gamma}"
                    )));
                }
                let l = problem.lipschitz_hint.ok_or_else(|| {
                    Error::InvalidStep(format!(
                        "constant step needs a Lipschitz bound, which `{}` does not provide; \
                         use the adaptive rule",
                        problem.name
                    ))
                })?;
                if gamma * l > CONSTANT_STEP_MARGIN {
                    return Err(Error::InvalidStep(format!(
                        "constant step {gamma} exceeds {CONSTANT_STEP_MARGIN}/L with L = {l}"
                    )));
                }
                Ok(gamma)
            }
            Self::Adaptive { gamma0, rho } => {
                if !(gamma0 > 0.0 && gamma0.is_finite()) {
                    return Err(Error::InvalidStep(format!(
                        "initial step must be positive, got {gamma0}"
                    )));
                }
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::InvalidStep(format!(
                        "rho must lie in (0, 1), got {rho}"
                    )));
                }
                Ok(gamma0)
            }
        }
    }
}

/// Stopping rule shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once the relative gap is at most `tol`.
    pub tol: f64,
    /// Iteration budget.
    pub kmax: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            kmax: 10_000,
        }
    }
}

impl SolveOptions {
    pub fn new(tol: f64, kmax: usize) -> Self {
        Self { tol, kmax }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) || self.kmax == 0 {
            return Err(Error::InvalidArgument(format!(
                "need tol >= 0 and kmax >= 1, got tol = {}, kmax = {}",
                self.tol, self.kmax
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIters => "max_iters",
            Self::Diverged => "diverged",
        }
    }
}

/// One traced iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Relative gap `|x_{k+1} - x_k|^2 / |x_k|^2`.
    pub eps: f64,
    /// `|x_k - z_k|` (or the analogous fixed-point residual of baselines).
    pub residual: f64,
    /// Step used in this iteration.
    pub gamma: f64,
    pub dist_to_known: Option<f64>,
    pub wall_time_ms: f64,
    /// Cumulative operator evaluations after this iteration.
    pub evals: usize,
    /// Cumulative projections after this iteration.
    pub projections: usize,
    pub x_norm: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    fn keeps(iter: usize) -> bool {
        iter < DENSE_TRACE_LIMIT || iter.is_multiple_of(SPARSE_TRACE_STRIDE)
    }

    fn push(&mut self, record: IterationRecord, last: bool) {
        if last || Self::keeps(record.iter) {
            self.records.push(record);
        }
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_final: HVector,
    /// Last point known to lie in the feasible set (`z_k` for FBF-type
    /// methods, the iterate itself for projection baselines).
    pub feasible_point: HVector,
    pub status: Status,
    /// Iterations performed.
    pub iterations: usize,
    pub evals: usize,
    pub projections: usize,
    pub trace: IterationTrace,
}

impl SolveResult {
    /// Projections per iteration, averaged over the run.
    pub fn projections_per_iteration(&self) -> f64 {
        self.projections as f64 / self.iterations.max(1) as f64
    }

    pub fn evals_per_iteration(&self) -> f64 {
        self.evals as f64 / self.iterations.max(1) as f64
    }
}

/// Relative gap between consecutive iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeGap {
    pub value: f64,
    /// `|x| = 0` while `x_next != x`: the value is `+inf`.
    pub degenerate: bool,
}

/// `|x_next - x|^2 / |x|^2`.
pub fn relative_gap(x_next: &HVector, x: &HVector, grid: &TimeGrid) -> Result<RelativeGap> {
    let step = distance(x_next, x, grid)?;
    let base = norm(x, grid)?;
    Ok(gap_from_norms(step, base))
}

fn gap_from_norms(step: f64, base: f64) -> RelativeGap {
    if step == 0.0 {
        RelativeGap {
            value: 0.0,
            degenerate: false,
        }
    } else if base == 0.0 {
        RelativeGap {
            value: f64::INFINITY,
            degenerate: true,
        }
    } else {
        RelativeGap {
            value: (step / base).powi(2),
            degenerate: false,
        }
    }
}

/// Intermediate points of one FBF step.
#[derive(Debug, Clone)]
pub struct FbfStep {
    pub z: HVector,
    pub r: HVector,
    pub fx: HVector,
    pub fz: HVector,
}

/// `z = P_X(x - g F(x))`, `r = z + g (F(x) - F(z))`. Two operator
/// evaluations, one projection.
pub fn fbf_step(problem: &VIProblem, x: &HVector, gamma: f64) -> Result<FbfStep> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidStep(format!(
            "step must be positive, got {gamma}"
        )));
    }
    let fx = problem.evaluate(x)?;
    let z = problem
        .set
        .project_point(&x.add_scaled(-gamma, &fx), &problem.grid)?;
    let fz = problem.evaluate(&z)?;
    let r = z.add_scaled(gamma, &fx.sub(&fz));
    Ok(FbfStep { z, r, fx, fz })
}

/// Adaptive step update from one FBF step. Both differences are first
/// corrected by their rounding allowance ([`ROUNDING_ALLOWANCE`] times the
/// size of the operands) in the direction that keeps the step large, so a
/// difference quotient at rounding level cannot push the step below
/// `rho / L`. `F(z) = F(x)` holds when the corrected `|F(z) - F(x)|` is not
/// positive.
pub fn adaptive_gamma_update(
    gamma: f64,
    rho: f64,
    x: &HVector,
    z: &HVector,
    fx: &HVector,
    fz: &HVector,
    grid: &TimeGrid,
) -> Result<f64> {
    let df = distance(fz, fx, grid)? - ROUNDING_ALLOWANCE * (norm(fx, grid)? + norm(fz, grid)?);
    if df <= 0.0 {
        return Ok(gamma);
    }
    let dx = distance(z, x, grid)? + ROUNDING_ALLOWANCE * (norm(x, grid)? + norm(z, grid)?);
    Ok((rho * dx / df).min(gamma))
}

/// Everything an observer sees of one FBF iteration.
#[derive(Debug)]
pub struct FbfIterate<'a> {
    pub k: usize,
    pub x: &'a HVector,
    pub step: &'a FbfStep,
    pub x_next: &'a HVector,
    pub gamma: f64,
    pub gamma_next: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Anchored FBF (constant or adaptive step).
pub fn solve_fbf(
    problem: &VIProblem,
    step: StepRule,
    schedule: &Schedule,
    x0: &HVector,
    options: SolveOptions,
) -> Result<SolveResult> {
    solve_fbf_observed(problem, step, schedule, x0, options, |_| {})
}

/// [`solve_fbf`] with a callback on every iteration.
pub fn solve_fbf_observed(
    problem: &VIProblem,
    step: StepRule,
    schedule: &Schedule,
    x0: &HVector,
    options: SolveOptions,
    mut observer: impl FnMut(&FbfIterate<'_>),
) -> Result<SolveResult> {
    let gamma0 = step.initial_gamma(problem)?;
    schedule.validate(options.kmax)?;
    drive(problem, x0, options, gamma0, |k, x, gamma| {
        let s = fbf_step(problem, x, gamma)?;
        let (alpha, beta) = (schedule.alpha(k), schedule.beta(k));
        let x_next = combine(&[1.0 - alpha - beta, beta], &[x, &s.r])?;
        let gamma_next = match step {
            StepRule::Constant { gamma } => gamma,
            StepRule::Adaptive { rho, .. } => {
                adaptive_gamma_update(gamma, rho, x, &s.z, &s.fx, &s.fz, &problem.grid)?
            }
        };
        observer(&FbfIterate {
            k,
            x,
            step: &s,
            x_next: &x_next,
            gamma,
            gamma_next,
            alpha,
            beta,
        });
        Ok(StepOutput {
            residual: distance(x, &s.z, &problem.grid)?,
            next: x_next,
            feasible: s.z,
            gamma_next,
            evals: 2,
            projections: 1,
        })
    })
}

/// Tseng's forward-backward-forward method, `x_{k+1} = r_k`.
pub fn solve_tseng_plain(
    problem: &VIProblem,
    step: StepRule,
    x0: &HVector,
    options: SolveOptions,
) -> Result<SolveResult> {
    let gamma0 = step.initial_gamma(problem)?;
    drive(problem, x0, options, gamma0, |_, x, gamma| {
        let s = fbf_step(problem, x, gamma)?;
        let gamma_next = match step {
            StepRule::Constant { gamma } => gamma,
            StepRule::Adaptive { rho, .. } => {
                adaptive_gamma_update(gamma, rho, x, &s.z, &s.fx, &s.fz, &problem.grid)?
            }
        };
        Ok(StepOutput {
            residual: distance(x, &s.z, &problem.grid)?,
            next: s.r,
            feasible: s.z,
            gamma_next,
            evals: 2,
            projections: 1,
        })
    })
}

fn check_baseline_gamma(
    problem: &VIProblem,
    gamma: f64,
    needs_lipschitz_margin: bool,
) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidStep(format!(
            "step must be positive, got {gamma}"
        )));
    }
    if let (true, Some(l)) = (needs_lipschitz_margin, problem.lipschitz_hint) {
        if gamma * l > CONSTANT_STEP_MARGIN {
            return Err(Error::InvalidStep(format!(
                "step {gamma} exceeds {CONSTANT_STEP_MARGIN}/L with L = {l}"
            )));
        }
    }
    Ok(())
}

/// Extragradient: `y = P_X(x - g F(x))`, `x+ = P_X(x - g F(y))`.
pub fn solve_extragradient(
    problem: &VIProblem,
    gamma: f64,
    x0: &HVector,
    options: SolveOptions,
) -> Result<SolveResult> {
    check_baseline_gamma(problem, gamma, true)?;
    let grid = &problem.grid;
    drive(problem, x0, options, gamma, |_, x, gamma| {
        let fx = problem.evaluate(x)?;
        let y = problem
            .set
            .project_point(&x.add_scaled(-gamma, &fx), grid)?;
        let fy = problem.evaluate(&y)?;
        let next = problem
            .set
            .project_point(&x.add_scaled(-gamma, &fy), grid)?;
        Ok(StepOutput {
            residual: distance(x, &y, grid)?,
            feasible: next.clone(),
            next,
            gamma_next: gamma,
            evals: 2,
            projections: 2,
        })
    })
}

/// Projected gradient: `x+ = P_X(x - g F(x))`. May cycle or diverge on
/// operators that are not cocoercive; that is reported through the status.
pub fn solve_projected_gradient(
    problem: &VIProblem,
    gamma: f64,
    x0: &HVector,
    options: SolveOptions,
) -> Result<SolveResult> {
    check_baseline_gamma(problem, gamma, false)?;
    let grid = &problem.grid;
    drive(problem, x0, options, gamma, |_, x, gamma| {
        let fx = problem.evaluate(x)?;
        let next = problem
            .set
            .project_point(&x.add_scaled(-gamma, &fx), grid)?;
        Ok(StepOutput {
            residual: distance(x, &next, grid)?,
            feasible: next.clone(),
            next,
            gamma_next: gamma,
            evals: 1,
            projections: 1,
        })
    })
}

struct StepOutput {
    next: HVector,
    feasible: HVector,
    residual: f64,
    gamma_next: f64,
    evals: usize,
    projections: usize,
}

/// Shared iteration loop: bookkeeping, tracing, stopping and divergence.
fn drive(
    problem: &VIProblem,
    x0: &HVector,
    options: SolveOptions,
    gamma0: f64,
    mut step: impl FnMut(usize, &HVector, f64) -> Result<StepOutput>,
) -> Result<SolveResult> {
    options.validate()?;
    if x0.shape() != problem.shape() {
        return Err(Error::Dimension {
            expected: problem.shape(),
            found: x0.shape(),
        });
    }
    let grid = &problem.grid;
    let started = Instant::now();
    let blowup = DIVERGENCE_FACTOR * (1.0 + norm(x0, grid)?);

    let mut x = x0.clone();
    let mut feasible = problem.set.project_point(x0, grid)?;
    let mut gamma = gamma0;
    let mut trace = IterationTrace::default();
    let (mut evals, mut projections) = (0usize, 0usize);

    let finish = |x: HVector, feasible: HVector, status, iterations, evals, projections, trace| {
        Ok(SolveResult {
            x_final: x,
            feasible_point: feasible,
            status,
            iterations,
            evals,
            projections,
            trace,
        })
    };

    for k in 0..options.kmax {
        let out = match step(k, &x, gamma) {
            Ok(out) => out,
            Err(Error::OperatorEvaluation { indices }) => {
                log::warn!(
                    "{}: non-finite operator values at {indices:?}",
                    problem.name
                );
                return finish(x, feasible, Status::Diverged, k, evals, projections, trace);
            }
            Err(e) => return Err(e),
        };
        evals += out.evals;
        projections += out.projections;

        let x_norm = norm(&x, grid)?;
        let step_norm = distance(&out.next, &x, grid)?;
        let eps = gap_from_norms(step_norm, x_norm).value;
        let next_norm = norm(&out.next, grid)?;
        let diverged =
            !out.next.is_finite() || !eps.is_finite() && !x_norm.eq(&0.0) || next_norm > blowup;
        let converged = !diverged && eps <= options.tol;
        let last = diverged || converged || k + 1 == options.kmax;
        let dist_to_known = match &problem.known_solution {
            Some(p) => Some(distance(&out.next, p, grid)?),
            None => None,
        };
        trace.push(
            IterationRecord {
                iter: k,
                eps,
                residual: out.residual,
                gamma,
                dist_to_known,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                evals,
                projections,
                x_norm,
                step_norm,
            },
            last,
        );
        if diverged {
            return finish(
                x,
                feasible,
                Status::Diverged,
                k + 1,
                evals,
                projections,
                trace,
            );
        }
        x = out.next;
        feasible = out.feasible;
        gamma = out.gamma_next;
        if converged {
            return finish(
                x,
                feasible,
                Status::Converged,
                k + 1,
                evals,
                projections,
                trace,
            );
        }
    }
    finish(
        x,
        feasible,
        Status::MaxIters,
        options.kmax,
        evals,
        projections,
        trace,
    )
}
