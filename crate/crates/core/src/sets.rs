//! Closed convex feasible sets with exact projections in the weighted inner
//! product of [`crate::space`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::space::{distance, HVector, TimeGrid};

/// Slices up to this length use the exact breakpoint scan; longer ones use
/// safeguarded bisection.
pub const EXACT_SCAN_LIMIT: usize = 100_000;

/// Interval tolerance of the bisection fallback.
const BISECTION_TOL: f64 = 1e-12;

/// Feasible set of a variational inequality.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// Componentwise bounds. Infinite bounds are allowed.
    Box { lower: HVector, upper: HVector },
    /// Closed ball in the weighted norm.
    Ball { center: HVector, radius: f64 },
    /// Path flows meeting per-group demand totals.
    DemandFlow(DemandFlowSet),
}

/// Product over groups of `{ x : sum_{c in group} sum_i w_i x[c,i] = Q }`,
/// optionally intersected with `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandFlowSet {
    groups: Vec<Vec<usize>>,
    demands: Vec<f64>,
    channels: usize,
    bins: usize,
    nonneg: bool,
}

impl DemandFlowSet {
    /// `owner[c]` is the group of channel `c`; `demands[g]` the total of group
    /// `g`.
    pub fn new(owner: &[usize], demands: Vec<f64>, grid: &TimeGrid, nonneg: bool) -> Result<Self> {
        if owner.is_empty() {
            return Err(Error::InvalidSet(
                "demand set needs at least one channel".into(),
            ));
        }
        let mut groups = vec![Vec::new(); demands.len()];
        for (c, &g) in owner.iter().enumerate() {
            let slot = groups.get_mut(g).ok_or_else(|| {
                Error::InvalidSet(format!("channel {c} assigned to missing group {g}"))
            })?;
            slot.push(c);
        }
        if let Some(g) = groups.iter().position(|g| g.is_empty()) {
            return Err(Error::InvalidSet(format!("group {g} owns no channel")));
        }
        if let Some((g, q)) = demands
            .iter()
            .enumerate()
            .find(|(_, q)| !(q.is_finite() && **q > 0.0))
        {
            return Err(Error::InvalidSet(format!(
                "demand of group {g} must be positive, got {q}"
            )));
        }
        if !(grid.span() > 0.0) {
            return Err(Error::InvalidSet("grid has zero measure".into()));
        }
        Ok(Self {
            groups,
            demands,
            channels: owner.len(),
            bins: grid.bins(),
            nonneg,
        })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    /// `sum_{c in group} sum_i w_i x[c, i]`.
    pub fn group_total(&self, group: usize, x: &HVector, grid: &TimeGrid) -> f64 {
        self.groups[group]
            .iter()
            .map(|&c| {
                x.channel(c)
                    .iter()
                    .zip(grid.weights())
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Outcome of a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub point: HVector,
    /// Shift `lambda_w` per group (demand sets only; empty otherwise).
    pub multipliers: Vec<f64>,
    /// Largest absolute constraint violation at `point`.
    pub feasibility_residual: f64,
}

impl FeasibleSet {
    /// Box with identical scalar bounds on every entry.
    pub fn uniform_box(channels: usize, bins: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new_box(
            HVector::filled(channels, bins, lower),
            HVector::filled(channels, bins, upper),
        )
    }

    pub fn new_box(lower: HVector, upper: HVector) -> Result<Self> {
        lower.same_shape(&upper)?;
        let bad = lower
            .as_slice()
            .iter()
            .zip(upper.as_slice())
            .position(|(l, u)| l.is_nan() || u.is_nan() || l > u);
        if let Some(i) = bad {
            return Err(Error::InvalidSet(format!(
                "box bounds crossed at index {i}"
            )));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn ball(center: HVector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidSet(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn demand_flow(
        owner: &[usize],
        demands: Vec<f64>,
        grid: &TimeGrid,
        nonneg: bool,
    ) -> Result<Self> {
        Ok(Self::DemandFlow(DemandFlowSet::new(
            owner, demands, grid, nonneg,
        )?))
    }

    /// `(channels, bins)` of the vectors this set lives in.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Box { lower, .. } => lower.shape(),
            Self::Ball { center, .. } => center.shape(),
            Self::DemandFlow(d) => (d.channels, d.bins),
        }
    }

    fn check(&self, x: &HVector, grid: &TimeGrid) -> Result<()> {
        if x.shape() != self.shape() || grid.bins() != x.bins() {
            return Err(Error::Dimension {
                expected: self.shape(),
                found: x.shape(),
            });
        }
        Ok(())
    }

    /// Nearest point of the set to `x` in the weighted norm.
    pub fn project(&self, x: &HVector, grid: &TimeGrid) -> Result<ProjectionReport> {
        self.check(x, grid)?;
        let (point, multipliers) = match self {
            Self::Box { lower, upper } => {
                // The weighted norm is separable, so clamping is exact.
                let data = x
                    .as_slice()
                    .iter()
                    .zip(lower.as_slice().iter().zip(upper.as_slice()))
                    .map(|(v, (l, u))| v.max(*l).min(*u))
                    .collect();
                (x.with_data(data), Vec::new())
            }
            Self::Ball { center, radius } => {
                let d = distance(x, center, grid)?;
                if d <= *radius {
                    (x.clone(), Vec::new())
                } else {
                    let t = radius / d;
                    (center.add_scaled(t, &x.sub(center)), Vec::new())
                }
            }
            Self::DemandFlow(set) => project_demand(set, x, grid),
        };
        let feasibility_residual = self.residual(&point, grid)?;
        Ok(ProjectionReport {
            point,
            multipliers,
            feasibility_residual,
        })
    }

    /// Shorthand for `project(..).point`.
    pub fn project_point(&self, x: &HVector, grid: &TimeGrid) -> Result<HVector> {
        Ok(self.project(x, grid)?.point)
    }

    /// Largest absolute violation of any defining constraint.
    pub fn residual(&self, x: &HVector, grid: &TimeGrid) -> Result<f64> {
        self.check(x, grid)?;
        Ok(match self {
            Self::Box { lower, upper } => x
                .as_slice()
                .iter()
                .zip(lower.as_slice().iter().zip(upper.as_slice()))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            Self::Ball { center, radius } => (distance(x, center, grid)? - radius).max(0.0),
            Self::DemandFlow(set) => {
                let mut worst = 0.0f64;
                for (g, q) in set.demands.iter().enumerate() {
                    worst = worst.max((set.group_total(g, x, grid) - q).abs());
                }
                if set.nonneg {
                    let neg = x.as_slice().iter().fold(0.0f64, |m, v| m.max(-v));
                    worst = worst.max(neg);
                }
                worst
            }
        })
    }

    /// Whether every defining constraint holds within `tol`.
    pub fn contains(&self, x: &HVector, grid: &TimeGrid, tol: f64) -> Result<bool> {
        Ok(self.residual(x, grid)? <= tol)
    }

    /// Gaussian draw around a representative interior point, projected onto
    /// the set. Concentrates some mass on the boundary.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Result<HVector> {
        let (channels, bins) = self.shape();
        let mut gauss = || -> f64 { rng.sample(StandardNormal) };
        let raw = match self {
            Self::Box { lower, upper } => {
                let data = lower
                    .as_slice()
                    .iter()
                    .zip(upper.as_slice())
                    .map(|(&l, &u)| {
                        let (mid, spread) = match (l.is_finite(), u.is_finite()) {
                            (true, true) => (0.5 * (l + u), (u - l).max(f64::MIN_POSITIVE)),
                            (true, false) => (l + 1.0, 1.0),
                            (false, true) => (u - 1.0, 1.0),
                            (false, false) => (0.0, 1.0),
                        };
                        mid + 0.75 * spread * gauss()
                    })
                    .collect();
                HVector::from_vec(channels, bins, data)?
            }
            Self::Ball { center, radius } => {
                let n = (channels * bins) as f64;
                let dir = HVector::from_fn(channels, bins, |_, _| gauss());
                let scale = 1.2 * radius / (n.sqrt() * grid.span().sqrt());
                center.add_scaled(scale, &dir)
            }
            Self::DemandFlow(set) => {
                let mut x = HVector::zeros(channels, bins);
                for (group, q) in set.groups.iter().zip(&set.demands) {
                    let mean = q / (group.len() as f64 * grid.span());
                    for &c in group {
                        for v in x.channel_mut(c) {
                            *v = mean + 2.0 * mean * gauss();
                        }
                    }
                }
                x
            }
        };
        self.project_point(&raw, grid)
    }
}

fn project_demand(set: &DemandFlowSet, x: &HVector, grid: &TimeGrid) -> (HVector, Vec<f64>) {
    let mut out = x.clone();
    let mut multipliers = Vec::with_capacity(set.groups.len());
    let bin_weights = grid.weights();
    for (group, &q) in set.groups.iter().zip(&set.demands) {
        let mut values = Vec::with_capacity(group.len() * bin_weights.len());
        let mut weights = Vec::with_capacity(values.capacity());
        for &c in group {
            values.extend_from_slice(x.channel(c));
            weights.extend_from_slice(bin_weights);
        }
        let (slice, lambda) = if set.nonneg {
            project_demand_slice(&values, &weights, q)
        } else {
            project_hyperplane_slice(&values, &weights, q)
        };
        for (k, &c) in group.iter().enumerate() {
            out.channel_mut(c)
                .copy_from_slice(&slice[k * bin_weights.len()..(k + 1) * bin_weights.len()]);
        }
        multipliers.push(lambda);
    }
    (out, multipliers)
}

/// Projection onto `{ x : sum_i w_i x_i = q }` without sign constraints.
fn project_hyperplane_slice(values: &[f64], weights: &[f64], q: f64) -> (Vec<f64>, f64) {
    let total_w: f64 = weights.iter().sum();
    let mass: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let lambda = (mass - q) / total_w;
    (values.iter().map(|v| v - lambda).collect(), lambda)
}

/// Solves `min sum_i w_i (x_i - v_i)^2  s.t.  sum_i w_i x_i = q, x >= 0`.
///
/// The minimizer is `x_i = max(0, v_i - lambda)` where `lambda` is the unique
/// root of the decreasing function `phi(l) = sum_i w_i max(0, v_i - l) - q`.
/// The weights cancel from the stationarity condition, so the shift does not
/// depend on them except through `phi`.
pub fn project_demand_slice(values: &[f64], weights: &[f64], q: f64) -> (Vec<f64>, f64) {
    assert_eq!(
        values.len(),
        weights.len(),
        "values/weights length mismatch"
    );
    assert!(!values.is_empty(), "empty slice");
    let lambda = if values.len() <= EXACT_SCAN_LIMIT {
        demand_shift_exact(values, weights, q)
    } else {
        demand_shift_bisection(values, weights, q)
    };
    let x = values.iter().map(|v| (v - lambda).max(0.0)).collect();
    (x, lambda)
}

/// `phi(lambda) = sum_i w_i max(0, v_i - lambda) - q`.
pub fn demand_excess(values: &[f64], weights: &[f64], q: f64, lambda: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - lambda).max(0.0))
        .sum::<f64>()
        - q
}

/// Root of [`demand_excess`] by a sorted breakpoint scan.
pub fn demand_shift_exact(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let (mut sum_w, mut sum_wv) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        sum_w += weights[i];
        sum_wv += weights[i] * values[i];
        let lambda = (sum_wv - q) / sum_w;
        // The root lies in [v_(k+1), v_(k)] once the candidate clears the next
        // breakpoint; with the top k+1 entries active phi is affine there.
        match order.get(k + 1) {
            Some(&next) if lambda < values[next] => continue,
            _ => return lambda,
        }
    }
    unreachable!("scan always returns on the last breakpoint")
}

/// Root of [`demand_excess`] by bisection, polished with a closed-form solve
/// on the identified active set.
pub fn demand_shift_bisection(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let total_w: f64 = weights.iter().sum();
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    // phi(hi) = -q < 0 and phi(lo) >= sum w (v - lo) - q = 0.
    let (mut lo, mut hi) = (vmin - q / total_w, vmax);
    while hi - lo > BISECTION_TOL * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if demand_excess(values, weights, q, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (mut sum_w, mut sum_wv) = (0.0, 0.0);
    for (v, w) in values.iter().zip(weights) {
        if *v > mid {
            sum_w += w;
            sum_wv += w * v;
        }
    }
    if sum_w > 0.0 {
        let polished = (sum_wv - q) / sum_w;
        if (polished - mid).abs() <= 1e-9 * (1.0 + mid.abs())
            && demand_excess(values, weights, q, polished).abs()
                <= demand_excess(values, weights, q, mid).abs()
        {
            return polished;
        }
    }
    mid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{inner, norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_bin(values: &[f64]) -> HVector {
        HVector::from_point(values).unwrap()
    }

    /// phi is strictly decreasing on the active range; plain bisection is the
    /// reference root finder for the hand examples.
    fn bisect_reference(values: &[f64], weights: &[f64], q: f64) -> f64 {
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if demand_excess(values, weights, q, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn slice_interior_point_is_fixed() {
        let v = [0.2, 0.3, 0.5];
        let (x, l) = project_demand_slice(&v, &[1.0, 1.0, 1.0], 1.0);
        assert!(l.abs() < 1e-15);
        for (a, b) in x.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn slice_symmetric_zero() {
        let (x, l) = project_demand_slice(&[0.0, 0.0], &[1.0, 1.0], 1.0);
        assert_eq!(x, vec![0.5, 0.5]);
        assert_eq!(l, -0.5);
    }

    #[test]
    fn slice_hand_example_matches_bisection() {
        let v = [2.0, 0.0];
        let w = [1.0, 1.0];
        let reference = bisect_reference(&v, &w, 1.0);
        assert!((reference - 1.0).abs() < 1e-12);
        let (x, l) = project_demand_slice(&v, &w, 1.0);
        assert!((l - reference).abs() < 1e-12);
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn shift_is_weight_independent_for_uniform_rescaling() {
        // Scaling all weights by c and q by c leaves the shift unchanged.
        let v = [1.5, -0.3, 0.9, 2.2];
        let w = [0.5, 1.0, 0.25, 2.0];
        let l1 = demand_shift_exact(&v, &w, 1.3);
        let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
        let l3 = demand_shift_exact(&v, &w3, 3.9);
        assert!((l1 - l3).abs() < 1e-14);
    }

    #[test]
    fn exact_and_bisection_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let q = rng.random_range(0.01..5.0);
            let a = demand_shift_exact(&v, &w, q);
            let b = demand_shift_bisection(&v, &w, q);
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
            assert!(demand_excess(&v, &w, q, a).abs() <= 1e-10 * q.max(1.0));
            assert!(demand_excess(&v, &w, q, b).abs() <= 1e-10 * q.max(1.0));
        }
    }

    #[test]
    fn ties_and_duplicates() {
        let v = [1.0, 1.0, 1.0, 1.0];
        let (x, l) = project_demand_slice(&v, &[0.25; 4], 0.5);
        assert!((l - 0.5).abs() < 1e-15);
        assert!(x.iter().all(|a| (a - 0.5).abs() < 1e-15));
    }

    #[test]
    fn box_clamp_and_membership() {
        let g = TimeGrid::unit();
        let b = FeasibleSet::uniform_box(1, 1, -1.0, 2.0).unwrap();
        assert_eq!(
            b.project_point(&one_bin(&[3.0]), &g).unwrap().as_slice(),
            &[2.0]
        );
        let inside = one_bin(&[0.5]);
        assert_eq!(b.project_point(&inside, &g).unwrap(), inside);
        let unit = FeasibleSet::uniform_box(1, 1, 0.0, 1.0).unwrap();
        assert!(unit.contains(&inside, &g, 1e-9).unwrap());
        assert!(FeasibleSet::uniform_box(1, 1, 2.0, 1.0).is_err());
    }

    #[test]
    fn ball_projection_lands_on_sphere() {
        let g = TimeGrid::uniform(0.0, 2.0, 2).unwrap();
        let ball = FeasibleSet::ball(HVector::zeros(1, 2), 1.0).unwrap();
        let x = HVector::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let p = ball.project_point(&x, &g).unwrap();
        assert!((norm(&p, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(FeasibleSet::ball(HVector::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn demand_set_hand_example() {
        let g = TimeGrid::with_weights(0.0, 1.0, vec![1.0]).unwrap();
        let set = FeasibleSet::demand_flow(&[0, 0], vec![1.0], &g, true).unwrap();
        let rep = set.project(&one_bin(&[2.0, 0.0]), &g).unwrap();
        assert_eq!(rep.point.as_slice(), &[1.0, 0.0]);
        assert_eq!(rep.multipliers, vec![1.0]);
        assert!(rep.feasibility_residual <= 1e-10);
    }

    #[test]
    fn demand_membership_detects_excess() {
        let g = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let set = FeasibleSet::demand_flow(&[0], vec![1.0], &g, true).unwrap();
        let x = HVector::from_vec(1, 2, vec![1.5, 1.5]).unwrap();
        assert!(!set.contains(&x, &g, 0.49).unwrap());
        assert!(set.contains(&x, &g, 0.51).unwrap());
    }

    #[test]
    fn demand_construction_errors() {
        let g = TimeGrid::unit();
        assert!(FeasibleSet::demand_flow(&[0, 1], vec![1.0], &g, true).is_err());
        assert!(FeasibleSet::demand_flow(&[0], vec![0.0], &g, true).is_err());
        assert!(FeasibleSet::demand_flow(&[1, 1], vec![1.0, 1.0], &g, true).is_err());
    }

    #[test]
    fn equality_only_variant_allows_negative_flow() {
        let g = TimeGrid::unit();
        let set = FeasibleSet::demand_flow(&[0, 0], vec![1.0], &g, false).unwrap();
        let p = set.project_point(&one_bin(&[3.0, 0.0]), &g).unwrap();
        assert_eq!(p.as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn projection_properties_on_random_draws() {
        let g = TimeGrid::with_weights(0.0, 2.0, vec![0.5, 1.0, 0.5]).unwrap();
        let sets = [
            FeasibleSet::uniform_box(2, 3, -1.0, 0.5).unwrap(),
            FeasibleSet::ball(HVector::filled(2, 3, 0.3), 0.7).unwrap(),
            FeasibleSet::demand_flow(&[0, 1], vec![1.0, 2.5], &g, true).unwrap(),
            FeasibleSet::demand_flow(&[0, 0], vec![1.0], &g, true).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in &sets {
            for _ in 0..20 {
                let x = HVector::from_fn(2, 3, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let y = HVector::from_fn(2, 3, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let px = set.project_point(&x, &g).unwrap();
                let py = set.project_point(&y, &g).unwrap();
                assert!(set.contains(&px, &g, 1e-8).unwrap());
                let again = set.project_point(&px, &g).unwrap();
                assert!(distance(&again, &px, &g).unwrap() <= 1e-12);
                // nonexpansive
                let lhs = distance(&px, &py, &g).unwrap();
                assert!(lhs <= distance(&x, &y, &g).unwrap() + 1e-10);
                // variational characterization against sampled members
                for _ in 0..50 {
                    let member = set.sample(&g, &mut rng).unwrap();
                    let val = inner(&x.sub(&px), &px.sub(&member), &g).unwrap();
                    assert!(val >= -1e-8, "{val}");
                }
            }
        }
    }
}
