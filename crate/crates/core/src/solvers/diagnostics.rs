//! Per-iteration checks of the FBF descent estimates against a known solution.
//!
//! For a solution `s` and `L`-Lipschitz monotone `F` every FBF step satisfies
//!
//! ```text
//! |r - s|^2 <= |x - s|^2 - (1 - (g L)^2) |x - z|^2
//! ```
//!
//! and under the adaptive rule the coefficient becomes
//! `1 - g_k^2 rho^2 / g_{k+1}^2`. With a constant step `g < 1/L` the
//! anchored iterates also stay within `max(|x_0 - s|, |s|)` of `s`.

use crate::error::Result;
use crate::space::{distance, norm, HVector, TimeGrid};

use super::FbfIterate;

/// Slack reported as a violation only below this value.
pub const DESCENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DescentMonitor {
    solution: HVector,
    grid: TimeGrid,
    lipschitz: Option<f64>,
    rho: Option<f64>,
    bound: f64,
    /// Smallest `rhs - lhs` of the Lipschitz-form inequality.
    pub worst_lipschitz_slack: f64,
    /// Smallest `rhs - lhs` of the adaptive-form inequality.
    pub worst_adaptive_slack: f64,
    /// Largest `|x_k - s|` seen, including `x_0`.
    pub max_distance: f64,
    pub iterations: usize,
    /// Steps in the order they were used.
    pub gammas: Vec<f64>,
}

impl DescentMonitor {
    /// `lipschitz` enables the constant-form check, `rho` the adaptive one.
    pub fn new(
        solution: &HVector,
        x0: &HVector,
        grid: &TimeGrid,
        lipschitz: Option<f64>,
        rho: Option<f64>,
    ) -> Result<Self> {
        let d0 = distance(x0, solution, grid)?;
        let bound = d0.max(norm(solution, grid)?);
        Ok(Self {
            solution: solution.clone(),
            grid: grid.clone(),
            lipschitz,
            rho,
            bound,
            worst_lipschitz_slack: f64::INFINITY,
            worst_adaptive_slack: f64::INFINITY,
            max_distance: d0,
            iterations: 0,
            gammas: Vec::new(),
        })
    }

    /// `max(|x_0 - s|, |s|)`.
    pub fn distance_bound(&self) -> f64 {
        self.bound
    }

    pub fn observe(&mut self, it: &FbfIterate<'_>) {
        let s = &self.solution;
        let g = &self.grid;
        let dx = distance(it.x, s, g)
            .expect("shape fixed by the solver")
            .powi(2);
        let dr = distance(&it.step.r, s, g)
            .expect("shape fixed by the solver")
            .powi(2);
        let res = distance(it.x, &it.step.z, g)
            .expect("shape fixed by the solver")
            .powi(2);
        if let Some(l) = self.lipschitz {
            let coeff = 1.0 - (it.gamma * l).powi(2);
            self.worst_lipschitz_slack = self.worst_lipschitz_slack.min(dx - coeff * res - dr);
        }
        if let Some(rho) = self.rho {
            let coeff = 1.0 - (it.gamma * rho / it.gamma_next).powi(2);
            self.worst_adaptive_slack = self.worst_adaptive_slack.min(dx - coeff * res - dr);
        }
        let next = distance(it.x_next, s, g).expect("shape fixed by the solver");
        self.max_distance = self.max_distance.max(next);
        self.iterations += 1;
        self.gammas.push(it.gamma);
    }

    pub fn lipschitz_holds(&self) -> bool {
        self.worst_lipschitz_slack >= -DESCENT_TOLERANCE
    }

    pub fn adaptive_holds(&self) -> bool {
        self.worst_adaptive_slack >= -DESCENT_TOLERANCE
    }

    pub fn bounded(&self) -> bool {
        self.max_distance <= self.bound + DESCENT_TOLERANCE
    }

    pub fn gammas_non_increasing(&self) -> bool {
        self.gammas.windows(2).all(|w| w[1] <= w[0])
    }
}
