//! The long-wave limit `-W'' + W - gamma W^2 = 0`: its soliton, its cnoidal
//! waves, and the operators `L = -d^2 + 1 - 2 gamma phi` and
//! `K = I - 2 gamma (1 - d^2)^{-1} (phi .)` built around a profile `phi`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::newton::{self, EvenFixedPoint, NewtonError, NewtonOptions};
use crate::spectral::{
    cosine_coefficients, even_coords, even_multiplication_block, field_from_even_coords,
    helmholtz_inverse, l2_inner, second_derivative, EigenFailure, EigenPair, ParityBlockOperator,
    PeriodicGrid, SpectralField,
};

#[derive(Debug, Error)]
pub enum KdvError {
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("cnoidal Newton solve diverged at half-period {half_period} (P may be below the existence threshold): {source}")]
    CnoidalDiverged {
        half_period: f64,
        #[source]
        source: NewtonError,
    },
    #[error("cnoidal solve converged to the constant state {value}")]
    ConvergedToConstant { value: f64 },
    #[error("cnoidal solve converged to a wave with a shorter period (fundamental mode {fundamental:e})")]
    ShorterPeriod { fundamental: f64 },
    #[error("profile residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error(
        "even block of the limit operator is numerically singular (smallest singular value {0:e})"
    )]
    SingularEvenBlock(f64),
    #[error("symmetric eigensolver did not converge")]
    Eigen,
}

impl From<EigenFailure> for KdvError {
    fn from(_: EigenFailure) -> Self {
        KdvError::Eigen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Solitary,
    Cnoidal,
}

/// An even solution of the limit equation on a periodic grid.
#[derive(Debug, Clone)]
pub struct LimitProfile {
    pub kind: ProfileKind,
    pub gamma: f64,
    pub field: SpectralField,
    /// `sup |-W'' + W - gamma W^2|`.
    pub residual: f64,
    pub iterations: usize,
}

impl LimitProfile {
    pub fn grid(&self) -> &PeriodicGrid {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }
}

pub fn sigma_value(gamma: f64, x: f64) -> f64 {
    let s = 1.0 / (0.5 * x).cosh();
    1.5 / gamma * s * s
}

pub fn sigma_prime_value(gamma: f64, x: f64) -> f64 {
    -sigma_value(gamma, x) * (0.5 * x).tanh()
}

/// Spectral residual `sup |-W'' + W - gamma W^2|`.
pub fn limit_residual(w: &SpectralField, gamma: f64) -> f64 {
    let wxx = second_derivative(w);
    w.values()
        .iter()
        .zip(wxx.values())
        .map(|(&u, &uxx)| (-uxx + u - gamma * u * u).abs())
        .fold(0.0, f64::max)
}

/// The soliton `(3 / 2 gamma) sech^2(x / 2)`.
pub fn sigma(gamma: f64, grid: &PeriodicGrid) -> Result<LimitProfile, KdvError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(KdvError::NonPositiveGamma(gamma));
    }
    let field = SpectralField::from_fn(grid, |x| sigma_value(gamma, x));
    Ok(LimitProfile {
        kind: ProfileKind::Solitary,
        gamma,
        residual: limit_residual(&field, gamma),
        field,
        iterations: 0,
    })
}

pub fn sigma_prime(gamma: f64, grid: &PeriodicGrid) -> SpectralField {
    SpectralField::from_fn(grid, |x| sigma_prime_value(gamma, x))
}

/// Sum of the soliton and its four nearest periodic images.
pub fn periodized_sigma(gamma: f64, grid: &PeriodicGrid) -> SpectralField {
    let period = 2.0 * grid.half_period();
    SpectralField::from_fn(grid, |x| {
        (-2..=2)
            .map(|n| sigma_value(gamma, x + period * n as f64))
            .sum()
    })
}

/// `lambda^2 sigma(lambda x)`, which solves `-W'' + lambda^2 W - gamma W^2 = 0`.
pub fn scaled_sigma(gamma: f64, lambda: f64, grid: &PeriodicGrid) -> SpectralField {
    SpectralField::from_fn(grid, |x| lambda * lambda * sigma_value(gamma, lambda * x))
}

pub fn scaling_residual(w: &SpectralField, gamma: f64, lambda: f64) -> f64 {
    let wxx = second_derivative(w);
    w.values()
        .iter()
        .zip(wxx.values())
        .map(|(&u, &uxx)| (-uxx + lambda * lambda * u - gamma * u * u).abs())
        .fold(0.0, f64::max)
}

struct CnoidalProblem {
    grid: PeriodicGrid,
    gamma: f64,
    smoothing: Vec<f64>,
}

impl EvenFixedPoint for CnoidalProblem {
    type Error = NewtonError;

    fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn smoothing(&self) -> &[f64] {
        &self.smoothing
    }

    fn nonlinear(&self, w: &SpectralField) -> Result<SpectralField, NewtonError> {
        Ok(w.map(|u| u * u))
    }

    fn linearized(&self, w: &SpectralField) -> Result<SpectralField, NewtonError> {
        Ok(w.scale(2.0))
    }
}

/// Even, `2P`-periodic solution of the limit equation, found by Newton on
/// `phi = gamma (1 - d^2)^{-1} phi^2` from the periodized soliton.
pub fn solve_cnoidal(gamma: f64, grid: &PeriodicGrid, tol: f64) -> Result<LimitProfile, KdvError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(KdvError::NonPositiveGamma(gamma));
    }
    let smoothing = (0..=grid.len() / 2)
        .map(|m| {
            let k = grid.wavenumber_of_mode(m as i64);
            gamma / (1.0 + k * k)
        })
        .collect();
    let problem = CnoidalProblem {
        grid: grid.clone(),
        gamma,
        smoothing,
    };
    let opts = NewtonOptions {
        tol: (0.01 * tol).max(1e-14),
        max_iter: 40,
        ..NewtonOptions::default()
    };
    let guess = periodized_sigma(problem.gamma, grid);
    let out =
        newton::solve(&problem, &guess, &opts).map_err(|source| KdvError::CnoidalDiverged {
            half_period: grid.half_period(),
            source,
        })?;
    let field = out.field;
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-6 * hi.abs().max(1.0) {
        return Err(KdvError::ConvergedToConstant {
            value: 0.5 * (hi + lo),
        });
    }
    let fundamental = cosine_coefficients(&field)[1].abs();
    if fundamental < 1e-10 * (hi - lo) {
        return Err(KdvError::ShorterPeriod { fundamental });
    }
    let residual = limit_residual(&field, gamma);
    if residual > tol {
        return Err(KdvError::ResidualTooLarge { residual, tol });
    }
    Ok(LimitProfile {
        kind: ProfileKind::Cnoidal,
        gamma,
        field,
        residual,
        iterations: out.iterations,
    })
}

/// `L = -d^2 + 1 - 2 gamma phi` in the real trigonometric basis.
#[derive(Debug, Clone)]
pub struct LimitOperator {
    pub gamma: f64,
    pub kind: ProfileKind,
    pub blocks: ParityBlockOperator,
}

pub fn limit_operator(profile: &LimitProfile) -> LimitOperator {
    let g = profile.grid();
    let symbol: Vec<f64> = (0..=g.len() / 2)
        .map(|m| 1.0 + g.wavenumber_of_mode(m as i64).powi(2))
        .collect();
    let potential = profile.field.scale(-2.0 * profile.gamma);
    LimitOperator {
        gamma: profile.gamma,
        kind: profile.kind,
        blocks: ParityBlockOperator::new(g, &symbol, &potential),
    }
}

impl LimitOperator {
    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        self.blocks.apply(f)
    }

    pub fn lowest_eigenpairs(
        &self,
        count: usize,
        vectors: bool,
    ) -> Result<Vec<EigenPair>, KdvError> {
        Ok(self.blocks.lowest_eigenpairs(count, vectors)?)
    }

    /// Solves `L u = f` for even `f` on the even block, where `L` is invertible.
    pub fn solve_even(&self, f: &SpectralField) -> Result<SpectralField, KdvError> {
        let rhs = even_coords(f);
        let a = &self.blocks.even;
        match a.clone().lu().solve(&rhs) {
            Some(u) if u.iter().all(|v| v.is_finite()) => {
                Ok(field_from_even_coords(self.blocks.grid(), &u))
            }
            _ => Err(KdvError::SingularEvenBlock(newton::min_singular_value(a))),
        }
    }
}

/// `L^{-1} sigma = -(2 sigma + x sigma') / 2`, from differentiating the scaling
/// family `lambda^2 sigma(lambda x)` at `lambda = 1`.
pub fn linv_sigma_closed_form(gamma: f64, grid: &PeriodicGrid) -> SpectralField {
    SpectralField::from_fn(grid, |x| {
        -0.5 * (2.0 * sigma_value(gamma, x) + x * sigma_prime_value(gamma, x))
    })
}

/// `<L^{-1} sigma, sigma> = -(3/4) ||sigma||^2 = -9 / (2 gamma^2)`.
pub fn vk_limit_closed_form(gamma: f64) -> f64 {
    -4.5 / (gamma * gamma)
}

/// `<L^{-1} phi, phi>` by a dense solve on the even block.
pub fn vk_limit_numeric(profile: &LimitProfile) -> Result<f64, KdvError> {
    let op = limit_operator(profile);
    let u = op.solve_even(&profile.field)?;
    Ok(l2_inner(&u, &profile.field).expect("same grid"))
}

/// Even block of `K` in the orthonormal cosine basis.
pub fn k_operator_even(profile: &LimitProfile) -> DMatrix<f64> {
    let g = profile.grid();
    let mut k = even_multiplication_block(&profile.field);
    for (m, mut row) in k.row_iter_mut().enumerate() {
        let km = g.wavenumber_of_mode(m as i64);
        row *= -2.0 * profile.gamma / (1.0 + km * km);
    }
    for m in 0..k.nrows() {
        k[(m, m)] += 1.0;
    }
    k
}

pub fn k_operator_min_singular(profile: &LimitProfile) -> f64 {
    newton::min_singular_value(&k_operator_even(profile))
}

/// `K f = f - 2 gamma (1 - d^2)^{-1} (phi f)` on the full space.
pub fn k_operator_apply(profile: &LimitProfile, f: &SpectralField) -> SpectralField {
    let pf = profile.field.mul(f).expect("same grid");
    f.sub(&helmholtz_inverse(&pf).scale(2.0 * profile.gamma))
        .expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ddx, l2_norm, odd_projection, MultiplierOp, Parity};

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(40.0, n).unwrap()
    }

    #[test]
    fn sigma_peak_values() {
        assert_eq!(sigma_value(6.0, 0.0), 0.25);
        assert_eq!(sigma_value(1.5, 0.0), 1.0);
        assert!(matches!(
            sigma(0.0, &grid(64)),
            Err(KdvError::NonPositiveGamma(_))
        ));
    }

    #[test]
    fn sigma_solves_limit_equation() {
        let p = sigma(6.0, &grid(2048)).unwrap();
        assert!(p.residual < 1e-11, "{}", p.residual);
        let p = sigma(6.0, &grid(1024)).unwrap();
        assert!(p.residual < 1e-11, "{}", p.residual);
    }

    #[test]
    fn sigma_norm_squared() {
        // 6 / gamma^2, checked against adaptive quadrature.
        let p = sigma(6.0, &grid(2048)).unwrap();
        assert!((l2_norm(&p.field).powi(2) - 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn sigma_shape() {
        let g = grid(512);
        let p = sigma(6.0, &g).unwrap();
        let v = p.values();
        let mid = g.len() / 2;
        assert!(sigma_prime_value(6.0, 0.0) == 0.0);
        for j in mid..g.len() - 1 {
            assert!(v[j + 1] < v[j]);
        }
    }

    #[test]
    fn sigma_prime_matches_spectral_derivative() {
        let g = grid(1024);
        let p = sigma(6.0, &g).unwrap();
        let d = ddx(&p.field).sub(&sigma_prime(6.0, &g)).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn scaling_family_residual() {
        let g = grid(2048);
        for lambda in [0.9, 1.1] {
            let w = scaled_sigma(6.0, lambda, &g);
            assert!(scaling_residual(&w, 6.0, lambda) < 1e-9);
        }
    }

    #[test]
    fn cnoidal_at_large_period_is_soliton_like() {
        let g = grid(1024);
        let p = solve_cnoidal(6.0, &g, 1e-11).unwrap();
        assert_eq!(p.kind, ProfileKind::Cnoidal);
        let peak = p.values()[g.len() / 2];
        assert!((peak - 0.25).abs() < 1e-4);
        assert!(p.field.odd_part_sup() < 1e-12);
        // Integrating the equation over a period: mean(phi - gamma phi^2) = 0.
        let mean: f64 = p.values().iter().map(|&u| u - 6.0 * u * u).sum::<f64>() / g.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn cnoidal_below_threshold_fails_cleanly() {
        // No non-constant 2P-periodic waves exist for P <= pi.
        let g = PeriodicGrid::new(3.0, 64).unwrap();
        assert!(solve_cnoidal(6.0, &g, 1e-11).is_err());
    }

    #[test]
    fn limit_operator_kills_sigma_prime() {
        let g = grid(1024);
        let p = sigma(6.0, &g).unwrap();
        let op = limit_operator(&p);
        let r = op.apply(&sigma_prime(6.0, &g));
        assert!(r.max_abs() < 1e-10, "{}", r.max_abs());
        assert!(op.blocks.asymmetry() < 1e-12);
    }

    #[test]
    fn limit_operator_on_constant() {
        let g = grid(256);
        let p = sigma(6.0, &g).unwrap();
        let out = limit_operator(&p).apply(&SpectralField::from_fn(&g, |_| 1.0));
        for (o, s) in out.values().iter().zip(p.values()) {
            assert!((o - (1.0 - 12.0 * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_operator_matches_multiplier_plus_potential() {
        let g = grid(256);
        let p = sigma(6.0, &g).unwrap();
        let f = SpectralField::from_fn(&g, |x| (x / 5.0).sin() * (-x * x / 40.0).exp() + 0.2);
        let expected = MultiplierOp::from_fn(&g, "1+K^2", |k| 1.0 + k * k)
            .apply(&f)
            .unwrap()
            .sub(&p.field.mul(&f).unwrap().scale(12.0))
            .unwrap();
        let d = limit_operator(&p).apply(&f).sub(&expected).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn poschl_teller_spectrum() {
        let p = sigma(6.0, &grid(1024)).unwrap();
        let pairs = limit_operator(&p).lowest_eigenpairs(3, false).unwrap();
        let expected = [-1.25, 0.0, 0.75];
        for (pair, e) in pairs.iter().zip(expected) {
            assert!((pair.value - e).abs() < 1e-3, "{} vs {e}", pair.value);
        }
        assert_eq!(pairs[1].parity, Parity::Odd);
    }

    #[test]
    fn closed_form_inverse() {
        let g = grid(2048);
        let p = sigma(6.0, &g).unwrap();
        let u = linv_sigma_closed_form(6.0, &g);
        assert!((u.values()[g.len() / 2] + 0.25).abs() < 1e-15);
        assert!(u.odd_part_sup() < 1e-14);
        let r = limit_operator(&p).apply(&u).sub(&p.field).unwrap();
        assert!(r.max_abs() < 1e-9);
        let vk = l2_inner(&u, &p.field).unwrap();
        assert!((vk + 0.125).abs() < 1e-8);
        assert!((vk_limit_numeric(&p).unwrap() - vk).abs() < 1e-7);
    }

    #[test]
    fn k_operator_is_identity_without_profile() {
        let g = grid(128);
        let p = LimitProfile {
            kind: ProfileKind::Solitary,
            gamma: 6.0,
            field: SpectralField::zeros(&g),
            residual: 0.0,
            iterations: 0,
        };
        assert!((k_operator_min_singular(&p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn helmholtz_bridge_identity() {
        let g = grid(512);
        let p = sigma(6.0, &g).unwrap();
        let f = SpectralField::from_fn(&g, |x| {
            (x / 3.0).cos() * (-x * x / 30.0).exp() + (x / 7.0).sin() * 0.3
        });
        let lhs = MultiplierOp::from_fn(&g, "1+K^2", |k| 1.0 + k * k)
            .apply(&k_operator_apply(&p, &f))
            .unwrap();
        let rhs = limit_operator(&p).apply(&f);
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn k_even_block_matches_full_application() {
        let g = grid(256);
        let p = sigma(6.0, &g).unwrap();
        let f = SpectralField::from_fn(&g, |x| (-x * x / 9.0).exp());
        let via_matrix = field_from_even_coords(&g, &(k_operator_even(&p) * even_coords(&f)));
        let d = via_matrix.sub(&k_operator_apply(&p, &f)).unwrap();
        assert!(d.max_abs() < 1e-13);
        assert!(odd_projection(&via_matrix).max_abs() < 1e-14);
    }
}
