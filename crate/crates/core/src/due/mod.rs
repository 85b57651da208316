//! Dynamic user equilibrium (DUE) as a variational inequality over path
//! departure rates.
//!
//! Departure rates `h[p, i]` (vehicles per hour, one channel per path) live
//! in the demand set: non-negative with `sum_{p in w} sum_i w_i h[p, i] = Q_w`.
//! The operator is the effective delay
//!
//! ```text
//! Psi_p(t, h) = D_p(t, h) + c * max(0, t + D_p(t, h) - T_A)^q
//! ```
//!
//! with `D` from an affine interaction kernel or from point-queue loading. At
//! an equilibrium every used `(path, bin)` attains the smallest effective
//! delay of its o/d pair.

mod fixtures;
mod loading;
mod network;

use std::sync::Arc;

pub use fixtures::{fixture, FIXTURES};
pub use loading::{load_point_queue, PointQueueLoad};
pub use network::{read_network, write_network, Link, Network, NetworkFiles, OdPair, PathSet};

use crate::error::{Error, Result};
use crate::operators::{Operator, VIProblem};
use crate::sets::FeasibleSet;
use crate::space::{HVector, TimeGrid};

/// Late-arrival penalty `rho(x) = c * max(0, x)^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    coefficient: f64,
    exponent: u32,
}

impl Default for Penalty {
    fn default() -> Self {
        Self {
            coefficient: 1.0,
            exponent: 2,
        }
    }
}

impl Penalty {
    pub fn new(coefficient: f64, exponent: u32) -> Result<Self> {
        if !(coefficient >= 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty coefficient must be non-negative, got {coefficient}"
            )));
        }
        if !(exponent == 1 || exponent == 2) {
            return Err(Error::InvalidArgument(format!(
                "penalty exponent must be 1 or 2, got {exponent}"
            )));
        }
        Ok(Self {
            coefficient,
            exponent,
        })
    }

    pub fn off() -> Self {
        Self {
            coefficient: 0.0,
            exponent: 2,
        }
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn value(&self, lateness: f64) -> f64 {
        if self.coefficient == 0.0 || lateness <= 0.0 {
            0.0
        } else {
            self.coefficient * lateness.powi(self.exponent as i32)
        }
    }

    /// Largest slope of the penalty on lateness up to `max_slack`.
    pub fn slope_bound(&self, max_slack: f64) -> f64 {
        match self.exponent {
            1 => self.coefficient,
            _ => 2.0 * self.coefficient * max_slack.max(0.0),
        }
    }
}

/// Non-negative kernel with entries
/// `K[(p, i), (q, j)] = paths[p, q] * times[i, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionKernel {
    path_count: usize,
    bins: usize,
    paths: Vec<f64>,
    times: Vec<f64>,
}

impl InteractionKernel {
    /// `paths` is `P x P`, `times` is `M x M`, both row-major and
    /// entrywise non-negative.
    pub fn new(path_count: usize, bins: usize, paths: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if paths.len() != path_count * path_count || times.len() != bins * bins {
            return Err(Error::InvalidArgument(
                "kernel factor sizes do not match".into(),
            ));
        }
        if paths
            .iter()
            .chain(&times)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "kernel entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            path_count,
            bins,
            paths,
            times,
        })
    }

    pub fn zero(path_count: usize, bins: usize) -> Self {
        Self {
            path_count,
            bins,
            paths: vec![0.0; path_count * path_count],
            times: vec![0.0; bins * bins],
        }
    }

    /// Shared-link congestion spread in time:
    /// `paths[p, q] = sum_a [a in p][a in q] scale / cap_a` and
    /// `times[i, j] = exp(-|t_i - t_j| / time_scale) * w_j`. Since both
    /// factors are positive semidefinite after weighting, the induced delay
    /// map is monotone.
    pub fn synthetic(
        network: &Network,
        paths: &PathSet,
        grid: &TimeGrid,
        scale: f64,
        time_scale: f64,
    ) -> Result<Self> {
        if !(scale >= 0.0 && time_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need scale >= 0 and time_scale > 0, got {scale}, {time_scale}"
            )));
        }
        let np = paths.len();
        let links = network.links();
        let pos = paths.link_positions();
        let mut pf = vec![0.0; np * np];
        for p in 0..np {
            for q in 0..np {
                pf[p * np + q] = pos[p]
                    .iter()
                    .filter(|k| pos[q].contains(k))
                    .map(|&k| scale / links[k].capacity)
                    .sum();
            }
        }
        let mids = grid.midpoints();
        let m = grid.bins();
        let mut tf = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                tf[i * m + j] = (-(mids[i] - mids[j]).abs() / time_scale).exp() * grid.weights()[j];
            }
        }
        Self::new(np, m, pf, tf)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.path_count, self.bins)
    }

    pub fn entry(&self, p: usize, i: usize, q: usize, j: usize) -> f64 {
        self.paths[p * self.path_count + q] * self.times[i * self.bins + j]
    }

    /// `K h`.
    pub fn apply(&self, h: &HVector) -> HVector {
        let (np, m) = (self.path_count, self.bins);
        let mut smoothed = vec![0.0; np * m];
        for q in 0..np {
            let hq = h.channel(q);
            for i in 0..m {
                let row = &self.times[i * m..(i + 1) * m];
                smoothed[q * m + i] = row.iter().zip(hq).map(|(a, b)| a * b).sum();
            }
        }
        HVector::from_fn(np, m, |p, i| {
            (0..np)
                .map(|q| self.paths[p * np + q] * smoothed[q * m + i])
                .sum()
        })
    }

    /// Upper bound on the operator norm of `h -> K h` in the weighted norm.
    pub fn norm_bound(&self, grid: &TimeGrid) -> f64 {
        let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
        let ones = vec![1.0; self.path_count];
        scaled_norm_bound(&self.paths, &ones) * scaled_norm_bound(&self.times, &sw)
    }
}

/// Bound on the spectral norm of `B = S M S^{-1}` with `S = diag(s)`: the
/// smaller of the Frobenius norm and `sqrt(|B|_1 |B|_inf)`.
fn scaled_norm_bound(matrix: &[f64], s: &[f64]) -> f64 {
    let n = s.len();
    let mut frob = 0.0;
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let b = (matrix[i * n + j] * s[i] / s[j]).abs();
            frob += b * b;
            rows[i] += b;
            cols[j] += b;
        }
    }
    let one = cols.iter().copied().fold(0.0, f64::max);
    let inf = rows.iter().copied().fold(0.0, f64::max);
    f64::sqrt(frob).min((one * inf).sqrt())
}

/// Path delay model.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayModel {
    /// `D_p(t_i) = free_flow[p] + (K h)[p, i]`.
    AffineKernel {
        free_flow: Vec<f64>,
        kernel: InteractionKernel,
    },
    /// Point-queue loading of the network.
    PointQueue,
}

impl DelayModel {
    pub fn affine(free_flow: Vec<f64>, kernel: InteractionKernel) -> Result<Self> {
        if free_flow.len() != kernel.shape().0 {
            return Err(Error::InvalidArgument(
                "free-flow delays do not match kernel".into(),
            ));
        }
        if free_flow.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(
                "free-flow delays must be positive".into(),
            ));
        }
        Ok(Self::AffineKernel { free_flow, kernel })
    }

    /// Affine model with path free-flow times and the synthetic kernel.
    pub fn synthetic_affine(
        network: &Network,
        paths: &PathSet,
        grid: &TimeGrid,
        scale: f64,
        time_scale: f64,
    ) -> Result<Self> {
        let kernel = InteractionKernel::synthetic(network, paths, grid, scale, time_scale)?;
        Self::affine(paths.free_flow_times(network), kernel)
    }
}

/// Path delays `D_p` at bin midpoints.
pub fn path_delays(
    model: &DelayModel,
    network: &Network,
    paths: &PathSet,
    h: &HVector,
    grid: &TimeGrid,
) -> Result<HVector> {
    if h.shape() != (paths.len(), grid.bins()) {
        return Err(Error::Dimension {
            expected: (paths.len(), grid.bins()),
            found: h.shape(),
        });
    }
    match model {
        DelayModel::AffineKernel { free_flow, kernel } => {
            if kernel.shape() != h.shape() {
                return Err(Error::Dimension {
                    expected: kernel.shape(),
                    found: h.shape(),
                });
            }
            let mut d = kernel.apply(h);
            for (p, &d0) in free_flow.iter().enumerate() {
                for v in d.channel_mut(p) {
                    *v += d0;
                }
            }
            Ok(d)
        }
        DelayModel::PointQueue => Ok(load_point_queue(network, paths, h, grid)?.delays),
    }
}

fn apply_penalty(delays: HVector, penalty: &Penalty, targets: &[f64], grid: &TimeGrid) -> HVector {
    let mids = grid.midpoints();
    let mut psi = delays;
    for (p, &target) in targets.iter().enumerate() {
        for (v, &t) in psi.channel_mut(p).iter_mut().zip(&mids) {
            *v += penalty.value(t + *v - target);
        }
    }
    psi
}

fn path_targets(network: &Network, paths: &PathSet) -> Vec<f64> {
    paths
        .owner()
        .iter()
        .map(|&w| network.od_pairs()[w].target_arrival)
        .collect()
}

/// Effective delays `Psi_p(t_i, h)` at bin midpoints.
pub fn effective_delay(
    model: &DelayModel,
    penalty: &Penalty,
    network: &Network,
    paths: &PathSet,
    h: &HVector,
    grid: &TimeGrid,
) -> Result<HVector> {
    let d = path_delays(model, network, paths, h, grid)?;
    Ok(apply_penalty(
        d,
        penalty,
        &path_targets(network, paths),
        grid,
    ))
}

/// `(nu_p, nu_w)`: the smallest effective delay of each path over the bins,
/// and of each o/d pair over its paths.
pub fn min_costs(psi: &HVector, owner: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let per_path: Vec<f64> = (0..psi.channels())
        .map(|p| psi.channel(p).iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let pairs = owner.iter().copied().max().map_or(0, |w| w + 1);
    let mut per_pair = vec![f64::INFINITY; pairs];
    for (p, &w) in owner.iter().enumerate() {
        per_pair[w] = per_pair[w].min(per_path[p]);
    }
    (per_path, per_pair)
}

/// Default support threshold `1e-6 * max h`.
pub fn support_threshold(h: &HVector) -> f64 {
    1e-6 * h.as_slice().iter().copied().fold(0.0, f64::max)
}

/// Spread `max - min` of the effective delays over the supported
/// `(path, bin)` pairs (`h > theta`) of each o/d pair. `None` when a pair has
/// no supported entry.
pub fn od_gap(h: &HVector, psi: &HVector, owner: &[usize], theta: f64) -> Vec<Option<f64>> {
    let pairs = owner.iter().copied().max().map_or(0, |w| w + 1);
    let mut range: Vec<Option<(f64, f64)>> = vec![None; pairs];
    for (p, &w) in owner.iter().enumerate() {
        for (&flow, &cost) in h.channel(p).iter().zip(psi.channel(p)) {
            if flow > theta {
                let r = range[w].get_or_insert((cost, cost));
                r.0 = r.0.min(cost);
                r.1 = r.1.max(cost);
            }
        }
    }
    range
        .into_iter()
        .map(|r| r.map(|(lo, hi)| hi - lo))
        .collect()
}

/// Equilibrium support check: how far supported effective delays exceed the
/// pair minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub threshold: f64,
    /// `nu_w` per pair.
    pub min_cost: Vec<f64>,
    /// Largest `Psi - nu_w` over supported entries of each pair.
    pub worst_excess: Vec<Option<f64>>,
    /// Number of supported `(path, bin)` entries.
    pub supported: usize,
}

impl SupportReport {
    /// Whether every supported entry satisfies `Psi <= nu_w * (1 + rel_tol)`.
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.worst_excess
            .iter()
            .zip(&self.min_cost)
            .all(|(e, nu)| e.is_none_or(|e| e <= rel_tol * nu.abs()))
    }

    /// Largest `(Psi - nu_w) / nu_w` over supported entries.
    pub fn worst_relative_excess(&self) -> f64 {
        self.worst_excess
            .iter()
            .zip(&self.min_cost)
            .filter_map(|(e, nu)| e.map(|e| e / nu.abs()))
            .fold(0.0, f64::max)
    }
}

pub fn support_check(h: &HVector, psi: &HVector, owner: &[usize], theta: f64) -> SupportReport {
    let (_, nu) = min_costs(psi, owner);
    let mut worst: Vec<Option<f64>> = vec![None; nu.len()];
    let mut supported = 0;
    for (p, &w) in owner.iter().enumerate() {
        for (&flow, &cost) in h.channel(p).iter().zip(psi.channel(p)) {
            if flow > theta {
                supported += 1;
                let e = cost - nu[w];
                worst[w] = Some(worst[w].map_or(e, |v: f64| v.max(e)));
            }
        }
    }
    SupportReport {
        threshold: theta,
        min_cost: nu,
        worst_excess: worst,
        supported,
    }
}

/// The effective-delay operator of a network.
pub struct DueOperator {
    network: Network,
    paths: PathSet,
    model: DelayModel,
    penalty: Penalty,
    targets: Vec<f64>,
    grid: TimeGrid,
}

impl DueOperator {
    pub fn new(
        network: Network,
        paths: PathSet,
        model: DelayModel,
        penalty: Penalty,
        grid: TimeGrid,
    ) -> Self {
        let targets = path_targets(&network, &paths);
        Self {
            network,
            paths,
            model,
            penalty,
            targets,
            grid,
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    /// Lipschitz bound of the affine model on flows whose lateness stays
    /// below `max_slack`. `None` for point-queue loading.
    pub fn lipschitz_bound_on(&self, max_slack: f64) -> Option<f64> {
        match &self.model {
            DelayModel::AffineKernel { kernel, .. } => {
                Some(kernel.norm_bound(&self.grid) * (1.0 + self.penalty.slope_bound(max_slack)))
            }
            DelayModel::PointQueue => None,
        }
    }

    /// Global Lipschitz bound, when one exists.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        if self.penalty.coefficient() == 0.0 || self.penalty.exponent() == 1 {
            self.lipschitz_bound_on(0.0)
        } else {
            None
        }
    }
}

impl Operator for DueOperator {
    fn apply(&self, h: &HVector) -> Result<HVector> {
        let d = match self.model {
            DelayModel::PointQueue => {
                let clamped = h.map(|v| v.max(0.0));
                let cut: f64 = h.as_slice().iter().map(|v| (-v).max(0.0)).sum();
                if cut > 0.0 {
                    log::debug!(
                        "clamped negative inflow of total magnitude {cut:e} before loading"
                    );
                }
                path_delays(
                    &self.model,
                    &self.network,
                    &self.paths,
                    &clamped,
                    &self.grid,
                )?
            }
            _ => path_delays(&self.model, &self.network, &self.paths, h, &self.grid)?,
        };
        Ok(apply_penalty(d, &self.penalty, &self.targets, &self.grid))
    }
}

/// `VI(Lambda, Psi)` for a network: the demand set of the o/d pairs and the
/// effective-delay operator. `nonneg = false` keeps only the demand
/// equalities.
pub fn build_due_problem(
    network: Network,
    paths: PathSet,
    model: DelayModel,
    penalty: Penalty,
    grid: TimeGrid,
    nonneg: bool,
) -> Result<VIProblem> {
    let demands = network.od_pairs().iter().map(|od| od.demand).collect();
    let set = FeasibleSet::demand_flow(paths.owner(), demands, &grid, nonneg)?;
    if let DelayModel::AffineKernel { kernel, .. } = &model {
        if kernel.shape() != (paths.len(), grid.bins()) {
            return Err(Error::Dimension {
                expected: (paths.len(), grid.bins()),
                found: kernel.shape(),
            });
        }
    }
    let op = DueOperator::new(network, paths, model, penalty, grid.clone());
    let hint = op.lipschitz_bound();
    let problem = VIProblem::new("due", Arc::new(op), set, grid)?;
    Ok(match hint {
        Some(l) => problem.with_lipschitz(l),
        None => problem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayModelKind {
    AffineKernel,
    PointQueue,
}

impl DelayModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "affine_kernel" => Ok(Self::AffineKernel),
            "point_queue" => Ok(Self::PointQueue),
            other => Err(Error::InvalidArgument(format!(
                "unknown delay model `{other}` (expected affine_kernel or point_queue)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AffineKernel => "affine_kernel",
            Self::PointQueue => "point_queue",
        }
    }
}

/// Parameters of a DUE instance built from a bundled network.
#[derive(Debug, Clone, PartialEq)]
pub struct DueScenario {
    pub fixture: String,
    pub bins: usize,
    pub t0: f64,
    pub t1: f64,
    pub model: DelayModelKind,
    pub penalty: Penalty,
    /// Scale of the synthetic kernel.
    pub kernel_scale: f64,
    /// Time constant of the synthetic kernel, in hours.
    pub kernel_time_scale: f64,
    pub nonneg: bool,
}

impl Default for DueScenario {
    fn default() -> Self {
        Self {
            fixture: "two_path_toy".into(),
            bins: 24,
            t0: 0.0,
            t1: 2.0,
            model: DelayModelKind::AffineKernel,
            penalty: Penalty::default(),
            kernel_scale: 0.2,
            kernel_time_scale: 0.02,
            nonneg: true,
        }
    }
}

impl DueScenario {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.t0, self.t1, self.bins)
    }
}

/// Builds the DUE instance of a scenario on a bundled network.
pub fn builtin_due_problem(scenario: &DueScenario) -> Result<VIProblem> {
    let (network, paths) = fixture(&scenario.fixture)?;
    scenario_problem(network, paths, scenario)
}

/// Builds the DUE instance of a scenario on a given network.
pub fn scenario_problem(
    network: Network,
    paths: PathSet,
    scenario: &DueScenario,
) -> Result<VIProblem> {
    let grid = scenario.grid()?;
    let model = match scenario.model {
        DelayModelKind::AffineKernel => DelayModel::synthetic_affine(
            &network,
            &paths,
            &grid,
            scenario.kernel_scale,
            scenario.kernel_time_scale,
        )?,
        DelayModelKind::PointQueue => DelayModel::PointQueue,
    };
    build_due_problem(
        network,
        paths,
        model,
        scenario.penalty,
        grid,
        scenario.nonneg,
    )
}

#[cfg(test)]
mod tests;
