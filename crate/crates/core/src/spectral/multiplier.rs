use num_complex::Complex64;

use super::{PeriodicGrid, SpectralError, SpectralField};
use crate::model::{Multiplier, SymbolModel};

/// Diagonal operator in Fourier space, stored as symbol values in FFT order.
#[derive(Debug, Clone)]
pub struct MultiplierOp {
    grid: PeriodicGrid,
    symbol: Vec<f64>,
    description: String,
}

impl MultiplierOp {
    /// Builds the operator from a function of the wavenumber `K`.
    pub fn from_fn(grid: &PeriodicGrid, description: &str, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: grid.clone(),
            symbol: grid.wavenumbers().into_iter().map(f).collect(),
            description: description.to_string(),
        }
    }

    /// `K -> m(eps K)`: the long-wave rescaling of the operator `L`.
    pub fn from_symbol(
        grid: &PeriodicGrid,
        multiplier: &Multiplier,
        eps: f64,
    ) -> Result<Self, SpectralError> {
        let op = Self::from_fn(
            grid,
            &format!("{}(eps K), eps = {eps}", multiplier.name),
            |k| multiplier.eval(eps * k),
        );
        op.check_finite()?;
        Ok(op)
    }

    fn check_finite(&self) -> Result<(), SpectralError> {
        for (j, v) in self.symbol.iter().enumerate() {
            if !v.is_finite() {
                let k = self.grid.wavenumber_of_mode(self.grid.mode(j));
                return Err(SpectralError::NonFiniteSymbol(k));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Symbol values for modes `0..=N/2`.
    pub fn symbol_nonnegative(&self) -> &[f64] {
        &self.symbol[..=self.grid.len() / 2]
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField, SpectralError> {
        if f.grid() != &self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let coeffs: Vec<Complex64> = f
            .coefficients()
            .iter()
            .zip(&self.symbol)
            .map(|(c, s)| c * s)
            .collect();
        Ok(SpectralField::from_coefficients(&self.grid, coeffs))
    }

    /// Composition, which is the pointwise product of symbols.
    pub fn compose(&self, other: &Self) -> Result<Self, SpectralError> {
        if other.grid != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            symbol: self
                .symbol
                .iter()
                .zip(&other.symbol)
                .map(|(a, b)| a * b)
                .collect(),
            description: format!("({}) o ({})", self.description, other.description),
        })
    }
}

/// `nu_eps - m(eps K)`, split as `(m(0) - m(eps K)) - m''(0) eps^2 / 2` so that
/// long waves do not lose digits to cancellation.
pub fn dispersion_gap(model: &SymbolModel, eps: f64, k: f64) -> f64 {
    model.multiplier.deficit(eps * k) - 0.5 * model.mpp0 * eps * eps
}

/// `K -> eps^2 / (nu_eps - m(eps K))`.
pub fn resolvent_r_eps(
    model: &SymbolModel,
    eps: f64,
    grid: &PeriodicGrid,
) -> Result<MultiplierOp, SpectralError> {
    let mut symbol = Vec::with_capacity(grid.len());
    for k in grid.wavenumbers() {
        let den = dispersion_gap(model, eps, k);
        if !den.is_finite() {
            return Err(SpectralError::NonFiniteSymbol(k));
        }
        if den <= 1e-14 {
            return Err(SpectralError::ResolventDenominator {
                wavenumber: k,
                value: den,
            });
        }
        symbol.push(eps * eps / den);
    }
    Ok(MultiplierOp {
        grid: grid.clone(),
        symbol,
        description: format!("rescaled resolvent of {}, eps = {eps}", model.name()),
    })
}

/// `K -> (nu_eps - m(eps K)) / eps^2`, the inverse of [`resolvent_r_eps`].
pub fn rescaled_dispersion(
    model: &SymbolModel,
    eps: f64,
    grid: &PeriodicGrid,
) -> Result<MultiplierOp, SpectralError> {
    let op = MultiplierOp::from_fn(grid, "rescaled dispersion", |k| {
        dispersion_gap(model, eps, k) / (eps * eps)
    });
    op.check_finite()?;
    Ok(op)
}

/// Largest deviation, over the grid wavenumbers, of the rescaled resolvent
/// from its long-wave limit `-(2/m''(0)) / (1 + K^2)`.
pub fn hinge_gap(model: &SymbolModel, eps: f64, grid: &PeriodicGrid) -> Result<f64, SpectralError> {
    let r = resolvent_r_eps(model, eps, grid)?;
    let half = 0.5 * model.mpp0;
    Ok(r.symbol
        .iter()
        .zip(grid.wavenumbers())
        .map(|(v, k)| (v + 1.0 / (half * (1.0 + k * k))).abs())
        .fold(0.0, f64::max))
}

pub fn helmholtz_inverse(f: &SpectralField) -> SpectralField {
    MultiplierOp::from_fn(f.grid(), "(1 - d^2)^-1", |k| 1.0 / (1.0 + k * k))
        .apply(f)
        .expect("same grid")
}

pub fn second_derivative(f: &SpectralField) -> SpectralField {
    MultiplierOp::from_fn(f.grid(), "d^2", |k| -k * k)
        .apply(f)
        .expect("same grid")
}

/// Spectral derivative; the Nyquist mode is dropped.
pub fn ddx(f: &SpectralField) -> SpectralField {
    let g = f.grid();
    let nyq = g.len() / 2;
    let coeffs: Vec<Complex64> = f
        .coefficients()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if j == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, g.wavenumber_of_mode(g.mode(j)))
            }
        })
        .collect();
    SpectralField::from_coefficients(g, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::whitham_symbol;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(40.0, 256).unwrap()
    }

    fn assert_close(a: &SpectralField, b: &SpectralField, tol: f64) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_symbol() {
        let g = grid();
        let f = SpectralField::from_fn(&g, |x| (-x * x / 20.0).exp() + 0.1 * (x / 3.0).sin());
        let out = MultiplierOp::from_fn(&g, "1", |_| 1.0).apply(&f).unwrap();
        assert_close(&out, &f, 1e-14);
    }

    #[test]
    fn single_mode_eigenfunction() {
        let g = grid();
        let k = PI / 40.0;
        let f = SpectralField::from_fn(&g, |x| (k * x).cos());
        let out = helmholtz_inverse(&f);
        assert_close(&out, &f.scale(1.0 / (1.0 + k * k)), 1e-14);
    }

    #[test]
    fn whitham_on_single_mode() {
        let g = grid();
        let k = PI / 40.0;
        let f = SpectralField::from_fn(&g, |x| (k * x).cos());
        let op = MultiplierOp::from_symbol(&g, &Multiplier::whitham(), 0.1).unwrap();
        let out = op.apply(&f).unwrap();
        assert_close(&out, &f.scale(whitham_symbol(0.1 * k)), 1e-14);
    }

    #[test]
    fn resolvent_at_zero_wavenumber() {
        let g = grid();
        let r = resolvent_r_eps(&SymbolModel::whitham(), 0.1, &g).unwrap();
        assert!((r.symbol()[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn kdv_resolvent_is_helmholtz() {
        let g = grid();
        for eps in [0.3, 0.05, 0.01] {
            let r = resolvent_r_eps(&SymbolModel::kdv(), eps, &g).unwrap();
            for (v, k) in r.symbol().iter().zip(g.wavenumbers()) {
                let exact = 2.0 / (1.0 + k * k);
                assert!(
                    (v - exact).abs() <= 1e-12 * exact.max(1.0) * 100.0,
                    "{v} {exact}"
                );
            }
            assert!(hinge_gap(&SymbolModel::kdv(), eps, &g).unwrap() < 1e-12);
        }
    }

    #[test]
    fn whitham_resolvent_near_limit() {
        let g = grid();
        let r = resolvent_r_eps(&SymbolModel::whitham(), 0.05, &g).unwrap();
        let k = PI / 40.0;
        assert!((r.symbol()[1] - 6.0 / (1.0 + k * k)).abs() < 2.5e-3);
    }

    #[test]
    fn hinge_gap_scales_like_eps_squared() {
        let g = PeriodicGrid::new(40.0, 1024).unwrap();
        let m = SymbolModel::whitham();
        let ratios: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| hinge_gap(&m, e, &g).unwrap() / (e * e))
            .collect();
        let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi / lo < 2.0, "{ratios:?}");
    }

    #[test]
    fn hinge_gap_grid_converged() {
        let m = SymbolModel::whitham();
        let a = hinge_gap(&m, 0.1, &PeriodicGrid::new(40.0, 512).unwrap()).unwrap();
        let b = hinge_gap(&m, 0.1, &PeriodicGrid::new(40.0, 1024).unwrap()).unwrap();
        assert!((a - b).abs() < 0.1 * b);
    }

    #[test]
    fn resolvent_inverts_dispersion() {
        let g = grid();
        let m = SymbolModel::whitham();
        let f = SpectralField::from_fn(&g, |x| (-x * x / 30.0).exp());
        let r = resolvent_r_eps(&m, 0.2, &g).unwrap();
        let d = rescaled_dispersion(&m, 0.2, &g).unwrap();
        assert_close(&r.apply(&d.apply(&f).unwrap()).unwrap(), &f, 1e-12);
    }

    #[test]
    fn ddx_basic() {
        let g = grid();
        let k = PI / 40.0;
        let f = SpectralField::from_fn(&g, |x| (k * x).sin());
        assert_close(
            &ddx(&f),
            &SpectralField::from_fn(&g, |x| k * (k * x).cos()),
            1e-14,
        );
        assert!(ddx(&SpectralField::from_fn(&g, |_| 3.0)).max_abs() < 1e-14);
    }

    #[test]
    fn ddx_twice_matches_second_derivative() {
        let g = grid();
        let f = SpectralField::from_fn(&g, |x| (-x * x / 10.0).exp());
        assert_close(&ddx(&ddx(&f)), &second_derivative(&f), 1e-12);
    }
}
