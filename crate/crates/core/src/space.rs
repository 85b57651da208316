//! Discretized Hilbert space of square-integrable, vector-valued functions of
//! time.
//!
//! A function `h: [t0, t1] -> R^C` is represented by its values on `M`
//! quadrature bins. Every inner product and norm in the library is the
//! weighted form
//!
//! ```text
//! <u, v> = sum_c sum_i w_i u[c, i] v[c, i]
//! ```
//!
//! so that, for piecewise-constant functions, it coincides with the exact
//! `L^2` inner product. Abstract finite-dimensional problems use
//! [`TimeGrid::unit`], which makes the weighted form the Euclidean one.

use crate::error::{Error, Result};

/// Quadrature grid on a planning horizon `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid of `bins` cells, each of width `(t1 - t0) / bins`.
    pub fn uniform(t0: f64, t1: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidGrid("bin count must be positive".into()));
        }
        let width = (t1 - t0) / bins as f64;
        Self::with_weights(t0, t1, vec![width; bins])
    }

    /// Grid with explicit (possibly non-uniform) weights. The weights must be
    /// positive and sum to `t1 - t0`.
    pub fn with_weights(t0: f64, t1: f64, weights: Vec<f64>) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
            return Err(Error::InvalidGrid(format!(
                "horizon must satisfy t0 < t1, got [{t0}, {t1}]"
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidGrid("bin count must be positive".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "weights must be positive, got {w}"
            )));
        }
        let span = t1 - t0;
        let total: f64 = weights.iter().sum();
        if (total - span).abs() > 1e-12 * span.max(1.0) * weights.len() as f64 {
            return Err(Error::InvalidGrid(format!(
                "weights sum to {total}, expected {span}"
            )));
        }
        Ok(Self { t0, t1, weights })
    }

    /// Single unit-weight bin on `[0, 1]`. With this grid the weighted inner
    /// product is the plain Euclidean one over channels.
    pub fn unit() -> Self {
        Self {
            t0: 0.0,
            t1: 1.0,
            weights: vec![1.0],
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Length of the horizon, `t1 - t0`.
    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Left endpoint of every bin.
    pub fn bin_starts(&self) -> Vec<f64> {
        let mut t = self.t0;
        self.weights
            .iter()
            .map(|w| {
                let start = t;
                t += w;
                start
            })
            .collect()
    }

    /// Midpoint of every bin; used as the representative departure time.
    pub fn midpoints(&self) -> Vec<f64> {
        self.bin_starts()
            .into_iter()
            .zip(&self.weights)
            .map(|(s, w)| s + 0.5 * w)
            .collect()
    }

    /// Whether all bins have the same width (within `1e-12` relative).
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights
            .iter()
            .all(|w| (w - w0).abs() <= 1e-12 * w0.abs())
    }

    /// Splits every bin in two halves.
    pub fn refined(&self) -> Self {
        let weights = self
            .weights
            .iter()
            .flat_map(|w| [0.5 * w, 0.5 * w])
            .collect();
        Self {
            t0: self.t0,
            t1: self.t1,
            weights,
        }
    }
}

/// Element of the discretized space: a dense `(channel, bin)` array stored
/// channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    channels: usize,
    bins: usize,
    data: Vec<f64>,
}

impl HVector {
    pub fn zeros(channels: usize, bins: usize) -> Self {
        Self::filled(channels, bins, 0.0)
    }

    pub fn filled(channels: usize, bins: usize, value: f64) -> Self {
        Self {
            channels,
            bins,
            data: vec![value; channels * bins],
        }
    }

    /// Builds a vector from channel-major data.
    pub fn from_vec(channels: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || bins == 0 {
            return Err(Error::InvalidArgument(
                "vectors need at least one channel and one bin".into(),
            ));
        }
        if data.len() != channels * bins {
            return Err(Error::Dimension {
                expected: (channels, bins),
                found: (data.len(), 1),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at index {i}"
            )));
        }
        Ok(Self {
            channels,
            bins,
            data,
        })
    }

    /// Builds a vector entry by entry. Finiteness is not checked here;
    /// operator outputs are validated by the problem that evaluates them.
    pub fn from_fn(channels: usize, bins: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * bins);
        for c in 0..channels {
            for i in 0..bins {
                data.push(f(c, i));
            }
        }
        Self {
            channels,
            bins,
            data,
        }
    }

    /// Reuses the shape of `self` for new channel-major data. Panics if the
    /// length does not match. Finiteness is not checked.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len(), "data length mismatch");
        Self {
            channels: self.channels,
            bins: self.bins,
            data,
        }
    }

    /// One channel per entry, single bin. The natural layout for abstract
    /// `R^d` problems on [`TimeGrid::unit`].
    pub fn from_point(values: &[f64]) -> Result<Self> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.bins)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, channel: usize, bin: usize) -> f64 {
        self.data[channel * self.bins + bin]
    }

    pub fn set(&mut self, channel: usize, bin: usize, value: f64) {
        self.data[channel * self.bins + bin] = value;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.bins..(channel + 1) * self.bins]
    }

    pub fn channel_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.data[channel * self.bins..(channel + 1) * self.bins]
    }

    /// Flat indices of non-finite entries.
    pub fn non_finite_indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// `self - other`. Panics on shape mismatch.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sub");
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + other`. Panics on shape mismatch.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|a| factor * a)
    }

    /// `self + factor * other`. Panics on shape mismatch.
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_scaled");
        self.zip_map(other, |a, b| a + factor * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            bins: self.bins,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            bins: self.bins,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.bins != grid.bins() {
            return Err(Error::Dimension {
                expected: (self.channels, grid.bins()),
                found: self.shape(),
            });
        }
        Ok(())
    }
}

/// Weighted inner product `sum_c sum_i w_i u[c,i] v[c,i]`.
pub fn inner(u: &HVector, v: &HVector, grid: &TimeGrid) -> Result<f64> {
    u.same_shape(v)?;
    u.check_grid(grid)?;
    let w = grid.weights();
    let mut acc = 0.0;
    for c in 0..u.channels {
        let (uc, vc) = (u.channel(c), v.channel(c));
        acc += uc
            .iter()
            .zip(vc)
            .zip(w)
            .map(|((a, b), w)| w * (a * b))
            .sum::<f64>();
    }
    Ok(acc)
}

/// Norm induced by [`inner`].
pub fn norm(u: &HVector, grid: &TimeGrid) -> Result<f64> {
    Ok(inner(u, u, grid)?.max(0.0).sqrt())
}

/// `norm(u - v)`.
pub fn distance(u: &HVector, v: &HVector, grid: &TimeGrid) -> Result<f64> {
    u.same_shape(v)?;
    norm(&u.sub(v), grid)
}

/// Componentwise linear combination `sum_j coeffs[j] * vectors[j]`.
pub fn combine(coeffs: &[f64], vectors: &[&HVector]) -> Result<HVector> {
    if coeffs.len() != vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} vectors",
            coeffs.len(),
            vectors.len()
        )));
    }
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidArgument("combination needs at least one term".into()))?;
    let mut out = HVector::zeros(first.channels, first.bins);
    for (&c, v) in coeffs.iter().zip(vectors) {
        first.same_shape(v)?;
        for (o, x) in out.data.iter_mut().zip(&v.data) {
            *o += c * x;
        }
    }
    Ok(out)
}
