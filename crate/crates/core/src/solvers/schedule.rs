use crate::error::{Error, Result};

/// Anchoring and relaxation sequences of the strongly convergent FBF update
/// `x+ = (1 - a_k - b_k) x + b_k r`.
///
/// The harmonic family `a_k = s / (k + o)`, `b_k = b (1 - a_k)` satisfies
/// `a_k -> 0` and `sum a_k = inf`. The floor `alpha_floor = b_0 / 2` sits
/// strictly below every `b_k`, since `b_k` increases with `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    alpha_scale: f64,
    alpha_offset: f64,
    beta_bar: f64,
}

impl Default for Schedule {
    /// `a_k = 1 / (k + 2)`, `b_k = (1 - a_k) / 2`.
    fn default() -> Self {
        Self {
            alpha_scale: 1.0,
            alpha_offset: 2.0,
            beta_bar: 0.5,
        }
    }
}

impl Schedule {
    pub fn harmonic(alpha_scale: f64, alpha_offset: f64, beta_bar: f64) -> Result<Self> {
        if !(alpha_scale > 0.0 && alpha_scale.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_scale must be positive, got {alpha_scale}"
            )));
        }
        if !(alpha_offset > alpha_scale && alpha_offset.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_offset must exceed alpha_scale so that a_0 < 1, got {alpha_offset}"
            )));
        }
        if !(beta_bar > 0.0 && beta_bar < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "beta_bar must lie in (0, 1), got {beta_bar}"
            )));
        }
        Ok(Self {
            alpha_scale,
            alpha_offset,
            beta_bar,
        })
    }

    pub fn alpha_scale(&self) -> f64 {
        self.alpha_scale
    }

    pub fn alpha_offset(&self) -> f64 {
        self.alpha_offset
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha_scale / (k as f64 + self.alpha_offset)
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta_bar * (1.0 - self.alpha(k))
    }

    /// Uniform lower bound on `b_k`.
    pub fn alpha_floor(&self) -> f64 {
        0.5 * self.beta(0)
    }

    /// Checks `a_k in (0, 1)` and `floor < b_k < 1 - a_k` for all `k <= kmax`.
    pub fn validate(&self, kmax: usize) -> Result<()> {
        let floor = self.alpha_floor();
        for k in 0..=kmax {
            let (a, b) = (self.alpha(k), self.beta(k));
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidSchedule(format!(
                    "a_{k} = {a} outside (0, 1)"
                )));
            }
            if !(b > floor && b < 1.0 - a) {
                return Err(Error::InvalidSchedule(format!(
                    "b_{k} = {b} outside ({floor}, {})",
                    1.0 - a
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sandwich_holds() {
        let s = Schedule::default();
        assert_eq!(s.alpha(0), 0.5);
        assert_eq!(s.beta(0), 0.25);
        assert_eq!(s.alpha_floor(), 0.125);
        s.validate(100_000).unwrap();
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Schedule::harmonic(1.0, 1.0, 0.5).is_err());
        assert!(Schedule::harmonic(0.0, 2.0, 0.5).is_err());
        assert!(Schedule::harmonic(1.0, 2.0, 1.0).is_err());
        assert!(Schedule::harmonic(0.1, 1.0, 0.9).is_ok());
    }

    #[test]
    fn alpha_sum_diverges_slowly() {
        let s = Schedule::default();
        let partial: f64 = (0..100_000).map(|k| s.alpha(k)).sum();
        assert!(partial > 10.0);
        assert!(s.alpha(1_000_000) < 1e-5);
    }
}
