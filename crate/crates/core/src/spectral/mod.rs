//! Periodic collocation grids, Fourier coefficients, and multiplier operators.
//!
//! Coefficients follow the Fourier-series normalization on `[-P, P)`:
//! `f_hat(k) = (1/2P) \int f(x) e^{-i k pi x / P} dx`, approximated by the
//! trapezoid rule on the grid, with inverse `f(x) = sum_k f_hat(k) e^{i k pi x / P}`.
//! Coefficient arrays are stored in FFT order: index `j` holds mode `j` for
//! `j <= N/2` and mode `j - N` above.

mod basis;
mod multiplier;

pub use basis::{
    cross_multiplication_block, even_coords, even_multiplication_block, field_from_even_coords,
    field_from_odd_coords, odd_coords, odd_multiplication_block, EigenFailure, EigenPair, Parity,
    ParityBlockOperator,
};
pub use multiplier::{
    ddx, dispersion_gap, helmholtz_inverse, hinge_gap, rescaled_dispersion, resolvent_r_eps,
    second_derivative, MultiplierOp,
};

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid needs an even number of points >= 16, got {0}")]
    BadPointCount(usize),
    #[error("half-period must be positive and finite, got {0}")]
    BadHalfPeriod(f64),
    #[error("field has {got} values but the grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("resolvent denominator vanishes at wavenumber K = {wavenumber} (value {value:e})")]
    ResolventDenominator { wavenumber: f64, value: f64 },
    #[error("symbol is not finite at wavenumber K = {0}")]
    NonFiniteSymbol(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform grid `x_j = -P + 2P j / N` on one period cell `[-P, P)`.
#[derive(Clone)]
pub struct PeriodicGrid {
    half_period: f64,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("half_period", &self.half_period)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_period == other.half_period
    }
}

impl PeriodicGrid {
    pub fn new(half_period: f64, n: usize) -> Result<Self, SpectralError> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(SpectralError::BadPointCount(n));
        }
        if !(half_period.is_finite() && half_period > 0.0) {
            return Err(SpectralError::BadHalfPeriod(half_period));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            half_period,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_period + self.spacing() * j as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Signed mode number of FFT index `j`, in `{-N/2+1, ..., N/2}`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// `K = mode * pi / P`.
    pub fn wavenumber_of_mode(&self, mode: i64) -> f64 {
        mode as f64 * std::f64::consts::PI / self.half_period
    }

    /// Wavenumbers in FFT order; the Nyquist entry is positive.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.wavenumber_of_mode(self.mode(j)))
            .collect()
    }

    /// Index of the grid point `-x_j`.
    pub fn mirror_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (j, c) in buf.iter_mut().enumerate() {
            // e^{-iK x_j} carries the phase (-1)^j from the cell origin at -P.
            let s = if j % 2 == 0 { scale } else { -scale };
            *c *= s;
        }
        buf
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| if j % 2 == 0 { c } else { -c })
            .collect();
        self.inverse.process(&mut buf);
        buf
    }

    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse(coeffs).into_iter().map(|c| c.re).collect()
    }
}

/// A real function sampled on a [`PeriodicGrid`], with lazily cached coefficients.
#[derive(Clone)]
pub struct SpectralField {
    grid: PeriodicGrid,
    values: Vec<f64>,
    coeffs: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl SpectralField {
    pub fn new(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            coeffs: OnceLock::new(),
        })
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self {
            grid: grid.clone(),
            values,
            coeffs: OnceLock::new(),
        }
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::from_fn(grid, |_| 0.0)
    }

    /// Real part of the inverse transform of `coeffs` (FFT order).
    pub fn from_coefficients(grid: &PeriodicGrid, coeffs: Vec<Complex64>) -> Self {
        let values = grid.inverse_real(&coeffs);
        Self {
            grid: grid.clone(),
            values,
            coeffs: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; drops the cached coefficients.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.coeffs = OnceLock::new();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn coefficients(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| self.grid.forward(&self.values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            coeffs: OnceLock::new(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, SpectralError> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            coeffs: OnceLock::new(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, SpectralError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub(crate) fn same_grid(&self, other: &Self) -> Result<(), SpectralError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }

    /// Parity defect `max |f(x) - f(-x)| / 2`.
    pub fn odd_part_sup(&self) -> f64 {
        (0..self.values.len())
            .map(|j| 0.5 * (self.values[j] - self.values[self.grid.mirror_index(j)]).abs())
            .fold(0.0, f64::max)
    }
}

/// Applies a pointwise map on a grid refined by the 3/2 rule and truncates back
/// to the original modes, which removes the aliasing of quadratic terms.
pub fn dealiased_map<E>(
    f: &SpectralField,
    map: impl FnOnce(&[f64]) -> Result<Vec<f64>, E>,
) -> Result<SpectralField, E> {
    let g = f.grid();
    let n = g.len();
    let half = n / 2;
    let m = (3 * n / 2).next_multiple_of(2);
    let fine = PeriodicGrid::new(g.half_period(), m).expect("refined grid is valid");
    let c = f.coefficients();
    let zero = Complex64::new(0.0, 0.0);
    let mut fc = vec![zero; m];
    for j in 0..n {
        let mode = g.mode(j);
        if j == half {
            // Split the Nyquist coefficient so the padded field stays real.
            fc[half] += 0.5 * c[j];
            fc[m - half] += 0.5 * c[j];
        } else {
            fc[mode.rem_euclid(m as i64) as usize] = c[j];
        }
    }
    let mapped = map(&fine.inverse_real(&fc))?;
    let mc = fine.forward(&mapped);
    let mut out = vec![zero; n];
    for (j, o) in out.iter_mut().enumerate() {
        let mode = g.mode(j);
        *o = if j == half {
            mc[half] + mc[m - half]
        } else {
            mc[mode.rem_euclid(m as i64) as usize]
        };
    }
    Ok(SpectralField::from_coefficients(g, out))
}

/// Trapezoid `L^2` inner product over the cell.
pub fn l2_inner(f: &SpectralField, g: &SpectralField) -> Result<f64, SpectralError> {
    f.same_grid(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.spacing())
}

pub fn l2_norm(f: &SpectralField) -> f64 {
    l2_inner(f, f).expect("same grid").sqrt()
}

/// `(||f||^2 + ||f'||^2)^{1/2}` with the spectral derivative.
pub fn h1_norm(f: &SpectralField) -> f64 {
    let d = ddx(f);
    (l2_norm(f).powi(2) + l2_norm(&d).powi(2)).sqrt()
}

/// `(f(x) + f(-x)) / 2`.
pub fn even_projection(f: &SpectralField) -> SpectralField {
    let g = &f.grid;
    let values = (0..g.len())
        .map(|j| 0.5 * (f.values[j] + f.values[g.mirror_index(j)]))
        .collect();
    SpectralField::new(g, values).expect("length preserved")
}

/// `(f(x) - f(-x)) / 2`.
pub fn odd_projection(f: &SpectralField) -> SpectralField {
    let g = &f.grid;
    let values = (0..g.len())
        .map(|j| 0.5 * (f.values[j] - f.values[g.mirror_index(j)]))
        .collect();
    SpectralField::new(g, values).expect("length preserved")
}

/// Cosine-mode coefficients `Re f_hat(k)` for modes `0..=N/2`; these determine
/// the even part of `f`.
pub fn cosine_coefficients(f: &SpectralField) -> Vec<f64> {
    f.coefficients()[..=f.grid.len() / 2]
        .iter()
        .map(|c| c.re)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(40.0, 256).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            PeriodicGrid::new(1.0, 15),
            Err(SpectralError::BadPointCount(15))
        ));
        assert!(matches!(
            PeriodicGrid::new(1.0, 8),
            Err(SpectralError::BadPointCount(8))
        ));
        assert!(PeriodicGrid::new(-1.0, 16).is_err());
    }

    #[test]
    fn nodes_are_uniform() {
        let g = grid();
        let x = g.nodes();
        assert_eq!(x[0], -40.0);
        for w in x.windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-13);
        }
        assert_eq!(g.mirror_index(0), 0);
        assert!((x[g.mirror_index(5)] + x[5]).abs() < 1e-12);
    }

    #[test]
    fn single_mode_coefficients_follow_normalization() {
        let g = grid();
        let f = SpectralField::from_fn(&g, |x| (3.0 * PI * x / 40.0).cos());
        let c = f.coefficients();
        assert!((c[3].re - 0.5).abs() < 1e-14 && c[3].im.abs() < 1e-14);
        assert!((c[g.len() - 3].re - 0.5).abs() < 1e-14);
        let s = SpectralField::from_fn(&g, |x| (2.0 * PI * x / 40.0).sin());
        // sin = (e^{iKx} - e^{-iKx}) / 2i
        assert!((s.coefficients()[2].im + 0.5).abs() < 1e-14);
    }

    #[test]
    fn cos_norm_squared_is_half_period() {
        let g = grid();
        let f = SpectralField::from_fn(&g, |x| (PI * x / 40.0).cos());
        assert!((l2_norm(&f).powi(2) - 40.0).abs() < 1e-11);
    }

    #[test]
    fn even_odd_orthogonal() {
        let g = grid();
        let e = SpectralField::from_fn(&g, |x| (-x * x / 10.0).exp());
        let o = SpectralField::from_fn(&g, |x| x * (-x * x / 10.0).exp());
        assert!(l2_inner(&e, &o).unwrap().abs() < 1e-12);
    }

    #[test]
    fn parity_projections() {
        let g = grid();
        let e = SpectralField::from_fn(&g, |x| (x / 7.0).cos() + (-x * x).exp());
        let o = SpectralField::from_fn(&g, |x| (x / 7.0).sin() * (-x * x / 50.0).exp());
        let ep = even_projection(&e);
        for (a, b) in ep.values().iter().zip(e.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(even_projection(&o).max_abs() < 1e-14);
        let f = e.add(&o).unwrap();
        let lhs = l2_norm(&f).powi(2);
        let rhs = l2_norm(&even_projection(&f)).powi(2) + l2_norm(&odd_projection(&f)).powi(2);
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
    }

    #[test]
    fn mutation_invalidates_cache() {
        let g = grid();
        let mut f = SpectralField::zeros(&g);
        assert_eq!(f.coefficients()[0].re, 0.0);
        f.values_mut().iter_mut().for_each(|v| *v = 2.0);
        assert!((f.coefficients()[0].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dealiased_square_is_exact_for_band_limited_input() {
        let g = PeriodicGrid::new(PI, 16).unwrap();
        // cos(5x)^2 = (1 + cos 10x)/2 aliases to mode 6 on 16 points.
        let f = SpectralField::from_fn(&g, |x| (5.0 * x).cos());
        let sq = dealiased_map(&f, |v| Ok::<_, ()>(v.iter().map(|u| u * u).collect())).unwrap();
        for (a, x) in sq.values().iter().zip(g.nodes()) {
            assert!((a - 0.5).abs() < 1e-14, "{a} at {x}");
        }
        let plain = f.map(|u| u * u);
        assert!(plain.coefficients()[6].norm() > 0.1);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = SpectralField::zeros(&grid());
        let b = SpectralField::zeros(&PeriodicGrid::new(20.0, 256).unwrap());
        assert!(matches!(l2_inner(&a, &b), Err(SpectralError::GridMismatch)));
    }
}
