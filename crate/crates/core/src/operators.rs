//! Variational inequality problems: an operator, a feasible set and the grid
//! they live on, plus sampled regularity diagnostics and a library of
//! instances with known (minimal-norm) solutions.
//!
//! Weak-to-weak continuity of the operator is automatic in finite dimensions
//! and is not checked.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sets::FeasibleSet;
use crate::space::{distance, inner, norm, HVector, TimeGrid};

/// Slack used by the sampled monotonicity checks.
pub const MONOTONICITY_SLACK: f64 = 1e-10;

/// A single-valued map on the discretized space.
///
/// Implementations must be pure: identical inputs give bitwise-identical
/// outputs, and concurrent calls are allowed.
pub trait Operator: Send + Sync {
    fn apply(&self, x: &HVector) -> Result<HVector>;
}

impl<F> Operator for F
where
    F: Fn(&HVector) -> HVector + Send + Sync,
{
    fn apply(&self, x: &HVector) -> Result<HVector> {
        Ok(self(x))
    }
}

/// `F(x) = M x + q` over the flattened `(channel, bin)` index.
#[derive(Debug, Clone)]
pub struct Affine {
    dim: usize,
    matrix: Vec<f64>,
    offset: HVector,
}

impl Affine {
    /// `matrix` is row-major `n x n` with `n = offset.len()`.
    pub fn new(matrix: Vec<f64>, offset: HVector) -> Result<Self> {
        let dim = offset.len();
        if matrix.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                dim * dim
            )));
        }
        Ok(Self {
            dim,
            matrix,
            offset,
        })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offset(&self) -> &HVector {
        &self.offset
    }

    /// `M x` without the offset.
    pub fn linear_part(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Guaranteed upper bound on the operator norm of `x -> M x` in the
    /// weighted norm of `grid`: the smaller of the Frobenius bound and
    /// `sqrt(|B|_1 |B|_inf)` for `B = W^{1/2} M W^{-1/2}`.
    pub fn operator_norm_bound(&self, grid: &TimeGrid) -> f64 {
        let bins = grid.bins();
        let sw: Vec<f64> = (0..self.dim)
            .map(|k| grid.weights()[k % bins].sqrt())
            .collect();
        let mut frob = 0.0;
        let mut rows = vec![0.0; self.dim];
        let mut cols = vec![0.0; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let b = (self.matrix[i * self.dim + j] * sw[i] / sw[j]).abs();
                frob += b * b;
                rows[i] += b;
                cols[j] += b;
            }
        }
        let one = cols.iter().copied().fold(0.0, f64::max);
        let inf = rows.iter().copied().fold(0.0, f64::max);
        frob.sqrt().min((one * inf).sqrt())
    }
}

impl Operator for Affine {
    fn apply(&self, x: &HVector) -> Result<HVector> {
        self.offset.same_shape(x)?;
        let mut out = self.linear_part(x.as_slice());
        for (o, q) in out.iter_mut().zip(self.offset.as_slice()) {
            *o += q;
        }
        Ok(x.with_data(out))
    }
}

/// `F(x) = G(x) / (1 + |x|)`. Positive rescaling keeps the solution set of
/// the VI and pseudomonotonicity of `G`, but generally destroys monotonicity.
pub struct NormScaled {
    inner: Arc<dyn Operator>,
    grid: TimeGrid,
}

impl NormScaled {
    pub fn new(inner: Arc<dyn Operator>, grid: TimeGrid) -> Self {
        Self { inner, grid }
    }
}

impl Operator for NormScaled {
    fn apply(&self, x: &HVector) -> Result<HVector> {
        let factor = 1.0 / (1.0 + norm(x, &self.grid)?);
        Ok(self.inner.apply(x)?.scale(factor))
    }
}

/// Componentwise `max(0, x - shift)`: monotone, 1-Lipschitz, and its VI on an
/// interval containing `shift` has a whole interval of solutions.
#[derive(Debug, Clone, Copy)]
pub struct Ramp {
    pub shift: f64,
}

impl Operator for Ramp {
    fn apply(&self, x: &HVector) -> Result<HVector> {
        Ok(x.map(|v| (v - self.shift).max(0.0)))
    }
}

/// A variational inequality `find x* in X with <F(x*), x - x*> >= 0` for all
/// `x in X`.
#[derive(Clone)]
pub struct VIProblem {
    pub name: String,
    pub operator: Arc<dyn Operator>,
    pub set: FeasibleSet,
    pub grid: TimeGrid,
    /// Upper bound on the Lipschitz constant of the operator, when known
    /// analytically.
    pub lipschitz_hint: Option<f64>,
    /// Minimal-norm solution, for test instances.
    pub known_solution: Option<HVector>,
}

impl fmt::Debug for VIProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VIProblem")
            .field("name", &self.name)
            .field("set", &self.set)
            .field("grid", &self.grid)
            .field("lipschitz_hint", &self.lipschitz_hint)
            .field("known_solution", &self.known_solution)
            .finish_non_exhaustive()
    }
}

impl VIProblem {
    pub fn new(
        name: impl Into<String>,
        operator: Arc<dyn Operator>,
        set: FeasibleSet,
        grid: TimeGrid,
    ) -> Result<Self> {
        let (_, bins) = set.shape();
        if bins != grid.bins() {
            return Err(Error::Dimension {
                expected: (set.shape().0, grid.bins()),
                found: set.shape(),
            });
        }
        Ok(Self {
            name: name.into(),
            operator,
            set,
            grid,
            lipschitz_hint: None,
            known_solution: None,
        })
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    pub fn with_known_solution(mut self, p: HVector) -> Self {
        self.known_solution = Some(p);
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.set.shape()
    }

    /// One evaluation of the operator, with shape and finiteness checks.
    pub fn evaluate(&self, x: &HVector) -> Result<HVector> {
        if x.shape() != self.shape() {
            return Err(Error::Dimension {
                expected: self.shape(),
                found: x.shape(),
            });
        }
        let fx = self.operator.apply(x)?;
        if fx.shape() != x.shape() {
            return Err(Error::Dimension {
                expected: x.shape(),
                found: fx.shape(),
            });
        }
        let bad = fx.non_finite_indices();
        if !bad.is_empty() {
            return Err(Error::OperatorEvaluation { indices: bad });
        }
        Ok(fx)
    }

    /// `min <F(p), x - p>` over `n` sampled feasible `x`. Non-negative (up to
    /// rounding) exactly when `p` passes the sampled VI test.
    pub fn vi_slack(&self, p: &HVector, n: usize, seed: u64) -> Result<f64> {
        let fp = self.evaluate(p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..n {
            let x = self.set.sample(&self.grid, &mut rng)?;
            worst = worst.min(inner(&fp, &x.sub(p), &self.grid)?);
        }
        Ok(worst)
    }
}

/// Outcome of [`sample_monotonicity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub samples: usize,
    /// Pairs with `<F(x) - F(y), x - y> < -slack`.
    pub monotone_violations: usize,
    /// Ordered pairs with `<F(x), y - x> >= 0` but `<F(y), y - x> < -slack`.
    pub pseudomonotone_violations: usize,
    /// Largest violation magnitude of either kind.
    pub worst_violation: f64,
}

/// Scans `n` random pairs of feasible points for violations of monotonicity
/// and pseudomonotonicity. Deterministic given `seed`.
pub fn sample_monotonicity(problem: &VIProblem, n: usize, seed: u64) -> Result<MonotonicityReport> {
    let grid = &problem.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotonicityReport {
        samples: n,
        monotone_violations: 0,
        pseudomonotone_violations: 0,
        worst_violation: 0.0,
    };
    for _ in 0..n {
        let x = problem.set.sample(grid, &mut rng)?;
        let y = problem.set.sample(grid, &mut rng)?;
        let fx = problem.evaluate(&x)?;
        let fy = problem.evaluate(&y)?;
        let d = y.sub(&x);
        let fx_d = inner(&fx, &d, grid)?;
        let fy_d = inner(&fy, &d, grid)?;
        // <F(x) - F(y), x - y> = <F(y), d> - <F(x), d>
        let mono = fy_d - fx_d;
        if mono < -MONOTONICITY_SLACK {
            report.monotone_violations += 1;
            report.worst_violation = report.worst_violation.max(-mono);
        }
        // Both orientations of the implication.
        let forward = fx_d >= 0.0 && fy_d < -MONOTONICITY_SLACK;
        let backward = -fy_d >= 0.0 && -fx_d < -MONOTONICITY_SLACK;
        if forward || backward {
            report.pseudomonotone_violations += 1;
            let v = if forward { -fy_d } else { fx_d };
            report.worst_violation = report.worst_violation.max(v);
        }
    }
    Ok(report)
}

/// Largest difference quotient `|F(x) - F(y)| / |x - y|` over `n` random
/// feasible pairs: a lower bound on the Lipschitz constant.
pub fn estimate_lipschitz(problem: &VIProblem, n: usize, seed: u64) -> Result<f64> {
    let grid = &problem.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n {
        let x = problem.set.sample(grid, &mut rng)?;
        let y = problem.set.sample(grid, &mut rng)?;
        let dx = distance(&x, &y, grid)?;
        if dx == 0.0 {
            continue;
        }
        let df = distance(&problem.evaluate(&x)?, &problem.evaluate(&y)?, grid)?;
        best = best.max(df / dx);
    }
    Ok(best)
}

/// Size and shape parameters of the builtin instances. Unused fields are
/// ignored by instances that do not need them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub dim: usize,
    /// `None` selects the deterministic reference instance; `Some` draws a
    /// random one.
    pub seed: Option<u64>,
    pub lower: f64,
    pub upper: f64,
    pub radius: f64,
    pub due: crate::due::DueScenario,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            dim: 2,
            seed: None,
            lower: f64::NAN,
            upper: f64::NAN,
            radius: 1.0,
            due: crate::due::DueScenario::default(),
        }
    }
}

impl ProblemParams {
    fn bounds(&self, lower: f64, upper: f64) -> (f64, f64) {
        (
            if self.lower.is_nan() {
                lower
            } else {
                self.lower
            },
            if self.upper.is_nan() {
                upper
            } else {
                self.upper
            },
        )
    }
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_PROBLEMS: &[&str] = &[
    "linear_monotone",
    "skew",
    "scaled_pseudomonotone",
    "zero_operator_box",
    "ramp_interval",
    "due",
];

/// Builds a named benchmark instance.
///
/// * `linear_monotone`: `F(x) = M x + q` on a box (default `[0, 2]^d`).
///   Without a seed `M = I`, `q = -1`; with a seed `M = A^T A / d + 0.1 I` and
///   `q` Gaussian. The solution is computed by projected gradient run to
///   stagnation.
/// * `skew`: `F(a, b) = (b, -a)` on a ball around the origin; solution `0`.
/// * `scaled_pseudomonotone`: the `linear_monotone` parent rescaled by
///   `1 / (1 + |x|)`. Without a seed the parent is `M = I`, `q = (-5, 0, ..)`
///   on `[-2, 2]^d`.
/// * `zero_operator_box`: `F = 0` on a box (default `[1, 2]^d`); every point
///   solves it and the minimal-norm one is the projection of the origin.
/// * `ramp_interval`: `F(x) = max(0, x - 1)` on `[-2, 3]^d`; the solution set
///   is `[-2, 1]^d` and its minimal-norm point is `0`.
/// * `due`: dynamic user equilibrium, see [`crate::due::builtin_due_problem`].
pub fn builtin_problem(name: &str, params: &ProblemParams) -> Result<VIProblem> {
    let d = params.dim;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let grid = TimeGrid::unit();
    match name {
        "linear_monotone" => {
            let (lo, hi) = params.bounds(0.0, 2.0);
            let (matrix, offset) = match params.seed {
                None => (identity(d), vec![-1.0; d]),
                Some(seed) => random_monotone_affine(d, seed),
            };
            linear_problem(name, matrix, offset, lo, hi)
        }
        "scaled_pseudomonotone" => {
            let parent = scaled_parent(params)?;
            let affine: Arc<dyn Operator> = Arc::new(parent.affine.clone());
            let scaled = NormScaled::new(affine, grid.clone());
            // |D F| <= |M| (1 + 2n) / (1 + n)^2 + |q| / (1 + n)^2 <= |M| + |q|
            let bound =
                parent.affine.operator_norm_bound(&grid) + norm(parent.affine.offset(), &grid)?;
            let mut problem =
                VIProblem::new(name, Arc::new(scaled), parent.problem.set.clone(), grid)?
                    .with_lipschitz(bound);
            problem.known_solution = parent.problem.known_solution;
            Ok(problem)
        }
        "skew" => {
            if d != 2 {
                return Err(Error::InvalidArgument(
                    "skew problem is two-dimensional".into(),
                ));
            }
            let op = Affine::new(vec![0.0, 1.0, -1.0, 0.0], HVector::zeros(2, 1))?;
            let set = FeasibleSet::ball(HVector::zeros(2, 1), params.radius)?;
            Ok(VIProblem::new(name, Arc::new(op), set, grid)?
                .with_lipschitz(1.0)
                .with_known_solution(HVector::zeros(2, 1)))
        }
        "zero_operator_box" => {
            let (lo, hi) = params.bounds(1.0, 2.0);
            let set = FeasibleSet::uniform_box(d, 1, lo, hi)?;
            let p = set.project_point(&HVector::zeros(d, 1), &grid)?;
            let zero = |x: &HVector| HVector::zeros(x.channels(), x.bins());
            Ok(VIProblem::new(name, Arc::new(zero), set, grid)?
                .with_lipschitz(0.0)
                .with_known_solution(p))
        }
        "ramp_interval" => {
            let (lo, hi) = params.bounds(-2.0, 3.0);
            let set = FeasibleSet::uniform_box(d, 1, lo, hi)?;
            let shift = 1.0;
            if !(lo <= shift && shift <= hi) {
                return Err(Error::InvalidArgument(
                    "ramp_interval needs the box to contain the ramp shift 1".into(),
                ));
            }
            // Solution set [lo, 1]^d; its minimal-norm point is the clamp of 0.
            let p = HVector::filled(d, 1, 0.0f64.clamp(lo, shift));
            Ok(VIProblem::new(name, Arc::new(Ramp { shift }), set, grid)?
                .with_lipschitz(1.0)
                .with_known_solution(p))
        }
        "due" => crate::due::builtin_due_problem(&params.due),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// The affine parent of `scaled_pseudomonotone` for the same parameters.
pub fn scaled_pseudomonotone_parent(params: &ProblemParams) -> Result<VIProblem> {
    Ok(scaled_parent(params)?.problem)
}

struct ScaledParent {
    affine: Affine,
    problem: VIProblem,
}

fn scaled_parent(params: &ProblemParams) -> Result<ScaledParent> {
    let d = params.dim;
    let (lo, hi) = params.bounds(-2.0, 2.0);
    let (matrix, offset) = match params.seed {
        None => {
            let mut q = vec![0.0; d];
            q[0] = -5.0;
            (identity(d), q)
        }
        Some(seed) => {
            let (m, q) = random_monotone_affine(d, seed);
            (m, q.into_iter().map(|v| 3.0 * v).collect())
        }
    };
    let affine = Affine::new(matrix.clone(), HVector::from_point(&offset)?)?;
    let problem = linear_problem("linear_monotone", matrix, offset, lo, hi)?;
    Ok(ScaledParent { affine, problem })
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// `M = A^T A / d + 0.1 I` (symmetric positive definite) and Gaussian `q`.
pub fn random_monotone_affine(d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..d * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum();
            m[i * d + j] = s / d as f64 + if i == j { 0.1 } else { 0.0 };
        }
    }
    let q = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    (m, q)
}

fn linear_problem(
    name: &str,
    matrix: Vec<f64>,
    offset: Vec<f64>,
    lo: f64,
    hi: f64,
) -> Result<VIProblem> {
    let d = offset.len();
    let grid = TimeGrid::unit();
    let set = FeasibleSet::uniform_box(d, 1, lo, hi)?;
    let op = Affine::new(matrix, HVector::from_point(&offset)?)?;
    let l = op.operator_norm_bound(&grid);
    let solution = projected_gradient_to_stagnation(&op, &set, &grid, l)?;
    Ok(VIProblem::new(name, Arc::new(op), set, grid)?
        .with_lipschitz(l)
        .with_known_solution(solution))
}

/// Projected gradient with step `1 / L` until the iterate stops moving. Used
/// to pin the reference solution of symmetric positive definite instances.
fn projected_gradient_to_stagnation(
    op: &Affine,
    set: &FeasibleSet,
    grid: &TimeGrid,
    lipschitz: f64,
) -> Result<HVector> {
    let gamma = 1.0 / lipschitz.max(f64::MIN_POSITIVE);
    let mut x = set.project_point(&HVector::zeros(op.offset.channels(), 1), grid)?;
    for _ in 0..1_000_000 {
        let next = set.project_point(&x.add_scaled(-gamma, &op.apply(&x)?), grid)?;
        let step = distance(&next, &x, grid)?;
        x = next;
        if step <= 1e-15 * (1.0 + norm(&x, grid)?) {
            break;
        }
    }
    Ok(x)
}
