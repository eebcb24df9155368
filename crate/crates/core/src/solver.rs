//! Newton solution of the rescaled traveling-wave equation
//! `Phi(W, eps) = W - R_eps[g_eps(W)] = 0`, continuation in `eps`, and the
//! map back to physical variables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kdv::{self, KdvError, LimitProfile};
use crate::model::{g_eps, ModelError, SymbolModel};
pub use crate::newton::LinearSolver;
use crate::newton::{self, EvenFixedPoint, NewtonError, NewtonOptions, NewtonOutcome};
use crate::spectral::{
    cosine_coefficients, dealiased_map, h1_norm, resolvent_r_eps, MultiplierOp, PeriodicGrid,
    SpectralError, SpectralField,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial guess is not even (odd part {0:e})")]
    GuessNotEven(f64),
    #[error("initial guess lives on a different grid than the configuration")]
    GuessGrid,
    #[error("amplitude left validity radius: {0}")]
    Amplitude(ModelError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error("independent re-evaluation gives residual {residual:e} above tolerance {tol:e}")]
    Reverification { residual: f64, tol: f64 },
    #[error("limit profile: {0}")]
    Limit(#[from] KdvError),
    #[error("decay check applies to solitary waves only")]
    DecayNotMeaningful,
}

impl From<ModelError> for SolverError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::AmplitudeOutsideRadius { .. } => SolverError::Amplitude(e),
            other => SolverError::Model(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Solitary,
    Periodic,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Solitary => "solitary",
            Mode::Periodic => "periodic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub eps: f64,
    pub mode: Mode,
    pub half_period: f64,
    pub n_points: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub linear_solver: LinearSolver,
    /// Evaluate the nonlinearity with 3/2-rule zero padding.
    pub dealias: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            mode: Mode::Solitary,
            half_period: 40.0,
            n_points: 1024,
            newton_tol: 1e-11,
            max_iter: 25,
            damping: 1.0,
            linear_solver: LinearSolver::Dense,
            dealias: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.half_period > 0.0 && self.half_period.is_finite()) {
            return bad(format!(
                "half-period must be positive, got {}",
                self.half_period
            ));
        }
        if self.n_points < 16 || !self.n_points.is_multiple_of(2) {
            return bad(format!(
                "point count must be even and >= 16, got {}",
                self.n_points
            ));
        }
        if !(self.newton_tol > 0.0) {
            return bad(format!(
                "Newton tolerance must be positive, got {}",
                self.newton_tol
            ));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PeriodicGrid, SolverError> {
        Ok(PeriodicGrid::new(self.half_period, self.n_points)?)
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            ..self.clone()
        }
    }
}

/// A converged rescaled profile `W_eps`.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub model_name: String,
    pub eps: f64,
    pub nu: f64,
    pub mode: Mode,
    pub field: SpectralField,
    /// `sup |Phi(W)|` from an evaluation independent of the Newton iterates.
    pub residual_sup: f64,
    pub newton_tol: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub parity_defect: f64,
    /// Largest coefficient in the top tenth of retained modes, relative to the largest.
    pub spectral_tail: f64,
    pub decay: Option<f64>,
}

impl WaveSolution {
    pub fn grid(&self) -> &PeriodicGrid {
        self.field.grid()
    }
}

pub fn nu_of_eps(model: &SymbolModel, eps: f64) -> f64 {
    model.nu(eps)
}

fn nonlinear(
    model: &SymbolModel,
    eps: f64,
    w: &SpectralField,
    dealias: bool,
) -> Result<SpectralField, SolverError> {
    if dealias {
        dealiased_map(w, |v| g_eps(model, eps, v).map_err(SolverError::from))
    } else {
        Ok(SpectralField::new(
            w.grid(),
            g_eps(model, eps, w.values())?,
        )?)
    }
}

/// `W - R_eps[g_eps(W)]`, evaluated with FFTs.
pub fn phi_residual(
    model: &SymbolModel,
    eps: f64,
    w: &SpectralField,
) -> Result<SpectralField, SolverError> {
    phi_residual_with(model, eps, w, false)
}

fn phi_residual_with(
    model: &SymbolModel,
    eps: f64,
    w: &SpectralField,
    dealias: bool,
) -> Result<SpectralField, SolverError> {
    let r = resolvent_r_eps(model, eps, w.grid())?;
    let g = nonlinear(model, eps, w, dealias)?;
    Ok(w.sub(&r.apply(&g)?)?)
}

struct EpsProblem<'a> {
    model: &'a SymbolModel,
    eps: f64,
    grid: PeriodicGrid,
    smoothing: Vec<f64>,
    dealias: bool,
}

impl<'a> EpsProblem<'a> {
    fn new(
        model: &'a SymbolModel,
        eps: f64,
        grid: &PeriodicGrid,
        dealias: bool,
    ) -> Result<Self, SolverError> {
        let r = resolvent_r_eps(model, eps, grid)?;
        Ok(Self {
            model,
            eps,
            grid: grid.clone(),
            smoothing: r.symbol_nonnegative().to_vec(),
            dealias,
        })
    }
}

impl EvenFixedPoint for EpsProblem<'_> {
    type Error = SolverError;

    fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn smoothing(&self) -> &[f64] {
        &self.smoothing
    }

    fn nonlinear(&self, w: &SpectralField) -> Result<SpectralField, SolverError> {
        nonlinear(self.model, self.eps, w, self.dealias)
    }

    fn linearized(&self, w: &SpectralField) -> Result<SpectralField, SolverError> {
        let d = self.model.nonlinearity.rescaled_deriv(self.eps, w.values());
        Ok(SpectralField::new(w.grid(), d)?)
    }
}

/// Dense Newton Jacobian `I - R_eps diag(eps^-2 n'(eps^2 W))` on the even block.
pub fn jacobian_even(
    model: &SymbolModel,
    eps: f64,
    w: &SpectralField,
) -> Result<DMatrix<f64>, SolverError> {
    let p = EpsProblem::new(model, eps, w.grid(), false)?;
    newton::even_jacobian(&p, w)
}

pub fn spectral_tail(f: &SpectralField) -> f64 {
    let c = cosine_coefficients(f);
    let half = f.grid().len() / 2;
    let all = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if all == 0.0 {
        return 0.0;
    }
    let start = half - half / 10;
    c[start..].iter().fold(0.0f64, |a, v| a.max(v.abs())) / all
}

pub fn newton_solve(
    model: &SymbolModel,
    config: &SolveConfig,
    guess: &SpectralField,
) -> Result<WaveSolution, SolverError> {
    config.validate()?;
    let grid = config.grid()?;
    if guess.grid() != &grid {
        return Err(SolverError::GuessGrid);
    }
    let odd = guess.odd_part_sup();
    if odd > 1e-10 * guess.max_abs().max(1.0) {
        return Err(SolverError::GuessNotEven(odd));
    }
    let problem = EpsProblem::new(model, config.eps, &grid, config.dealias)?;
    let opts = NewtonOptions {
        // Margin so the independent re-evaluation below also meets the tolerance.
        tol: 0.5 * config.newton_tol,
        max_iter: config.max_iter,
        damping: config.damping,
        linear_solver: config.linear_solver,
    };
    let NewtonOutcome {
        field,
        iterations,
        history,
        ..
    } = newton::solve(&problem, guess, &opts)?;
    let residual_sup = phi_residual_with(model, config.eps, &field, config.dealias)?.max_abs();
    if residual_sup > config.newton_tol {
        return Err(SolverError::Reverification {
            residual: residual_sup,
            tol: config.newton_tol,
        });
    }
    let mut sol = WaveSolution {
        model_name: model.name().to_string(),
        eps: config.eps,
        nu: nu_of_eps(model, config.eps),
        mode: config.mode,
        parity_defect: field.odd_part_sup(),
        spectral_tail: spectral_tail(&field),
        field,
        residual_sup,
        newton_tol: config.newton_tol,
        iterations,
        residual_history: history,
        decay: None,
    };
    if sol.mode == Mode::Solitary {
        sol.decay = Some(decay_check(&sol)?);
    }
    Ok(sol)
}

/// `max |W|` over the outer tenth of the cell; small values justify reading a
/// periodic computation as a solitary wave.
pub fn decay_check(solution: &WaveSolution) -> Result<f64, SolverError> {
    if solution.mode != Mode::Solitary {
        return Err(SolverError::DecayNotMeaningful);
    }
    let g = solution.grid();
    let edge = 0.9 * g.half_period();
    Ok(g.nodes()
        .iter()
        .zip(solution.field.values())
        .filter(|(x, _)| x.abs() >= edge)
        .fold(0.0f64, |a, (_, v)| a.max(v.abs())))
}

/// The `eps = 0` profile for a mode: the soliton, or the cnoidal wave of the same period.
pub fn limit_profile(
    model: &SymbolModel,
    mode: Mode,
    grid: &PeriodicGrid,
) -> Result<LimitProfile, SolverError> {
    let gamma = model.gamma()?;
    Ok(match mode {
        Mode::Solitary => kdv::sigma(gamma, grid)?,
        Mode::Periodic => kdv::solve_cnoidal(gamma, grid, 1e-11)?,
    })
}

#[derive(Debug, Clone)]
pub struct ContinuationRun {
    pub mode: Mode,
    pub limit: LimitProfile,
    pub solutions: Vec<WaveSolution>,
    /// `||W_eps - limit||_{H^1}` per converged rung.
    pub deviations: Vec<f64>,
    /// Least-squares slope of `log d` against `log eps`; needs two rungs.
    pub slope: Option<f64>,
    pub incomplete: bool,
    pub failure: Option<String>,
}

impl ContinuationRun {
    /// Largest `eps` that converged.
    pub fn max_converged_eps(&self) -> Option<f64> {
        self.solutions.last().map(|s| s.eps)
    }
}

pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn continue_in_eps(
    model: &SymbolModel,
    ladder: &[f64],
    base: &SolveConfig,
) -> Result<ContinuationRun, SolverError> {
    if ladder.is_empty() {
        return Err(SolverError::InvalidConfig("empty eps ladder".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::InvalidConfig(
            "eps ladder must be strictly increasing".into(),
        ));
    }
    for &e in ladder {
        base.with_eps(e).validate()?;
    }
    let grid = base.grid()?;
    let limit = limit_profile(model, base.mode, &grid)?;
    let mut run = ContinuationRun {
        mode: base.mode,
        limit,
        solutions: Vec::new(),
        deviations: Vec::new(),
        slope: None,
        incomplete: false,
        failure: None,
    };
    let mut seed = run.limit.field.clone();
    for &eps in ladder {
        match newton_solve(model, &base.with_eps(eps), &seed) {
            Ok(sol) => {
                let d = h1_norm(&sol.field.sub(&run.limit.field)?);
                seed = sol.field.clone();
                run.deviations.push(d);
                run.solutions.push(sol);
            }
            Err(e) => {
                run.incomplete = true;
                run.failure = Some(format!("eps = {eps}: {e}"));
                break;
            }
        }
    }
    let eps: Vec<f64> = run.solutions.iter().map(|s| s.eps).collect();
    run.slope = fit_slope(&eps, &run.deviations);
    Ok(run)
}

/// A traveling wave in the original variables, `u(x) = eps^2 W(eps x)`.
#[derive(Debug, Clone)]
pub struct PhysicalWave {
    pub eps: f64,
    pub nu: f64,
    pub field: SpectralField,
    pub period: f64,
    pub amplitude: f64,
    /// `sup |(nu - L) u - n(u)|` on the physical grid.
    pub residual: f64,
}

pub fn unscale(model: &SymbolModel, solution: &WaveSolution) -> Result<PhysicalWave, SolverError> {
    let eps = solution.eps;
    let g = solution.grid();
    let phys = PeriodicGrid::new(g.half_period() / eps, g.len())?;
    let u = SpectralField::new(
        &phys,
        solution
            .field
            .values()
            .iter()
            .map(|w| eps * eps * w)
            .collect(),
    )?;
    let nu = solution.nu;
    let lin = MultiplierOp::from_fn(&phys, "nu - m(k)", |k| nu - model.multiplier.eval(k));
    let nl = u.map(|v| model.nonlinearity.eval(v));
    let residual = lin.apply(&u)?.sub(&nl)?.max_abs();
    Ok(PhysicalWave {
        eps,
        nu,
        period: 2.0 * phys.half_period(),
        amplitude: u.max_abs(),
        field: u,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Multiplier, Nonlinearity};

    fn sigma_guess(grid: &PeriodicGrid, gamma: f64) -> SpectralField {
        kdv::sigma(gamma, grid).unwrap().field
    }

    #[test]
    fn speed_formula() {
        let m = SymbolModel::whitham();
        assert!((nu_of_eps(&m, 0.3) - 1.015).abs() < 1e-15);
        assert!((nu_of_eps(&m, 0.6) - 1.06).abs() < 1e-15);
        assert_eq!(nu_of_eps(&m, 0.0), 1.0);
    }

    #[test]
    fn zero_residual_at_zero() {
        let g = PeriodicGrid::new(40.0, 128).unwrap();
        let r = phi_residual(&SymbolModel::whitham(), 0.1, &SpectralField::zeros(&g)).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn kdv_symbol_has_sigma_as_exact_root() {
        let g = PeriodicGrid::new(40.0, 1024).unwrap();
        let m = SymbolModel::kdv();
        for eps in [0.3, 0.1, 0.01] {
            let r = phi_residual(&m, eps, &sigma_guess(&g, 2.0)).unwrap();
            assert!(r.max_abs() < 1e-11, "{}", r.max_abs());
        }
    }

    #[test]
    fn whitham_consistency_error_is_order_eps_squared() {
        let g = PeriodicGrid::new(40.0, 1024).unwrap();
        let m = SymbolModel::whitham();
        let s = sigma_guess(&g, 6.0);
        let a = h1_norm(&phi_residual(&m, 0.1, &s).unwrap());
        let b = h1_norm(&phi_residual(&m, 0.05, &s).unwrap());
        assert!((a / b - 4.0).abs() < 0.4, "{}", a / b);
        assert!(a < 0.1);
    }

    #[test]
    fn newton_converges_from_sigma() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig::default();
        let g = cfg.grid().unwrap();
        let sol = newton_solve(&m, &cfg, &sigma_guess(&g, 6.0)).unwrap();
        assert!(sol.iterations <= 8);
        assert!(sol.residual_sup <= 1e-11);
        assert!(sol.parity_defect <= 1e-10);
        assert!(sol.spectral_tail <= 1e-10);
        assert!(sol.decay.unwrap() <= 1e-9);
        assert!((sol.nu - (1.0 + 0.01 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn krylov_matches_dense() {
        let m = SymbolModel::whitham();
        let dense = SolveConfig {
            n_points: 256,
            ..SolveConfig::default()
        };
        let krylov = SolveConfig {
            linear_solver: LinearSolver::Krylov,
            ..dense.clone()
        };
        let g = dense.grid().unwrap();
        let a = newton_solve(&m, &dense, &sigma_guess(&g, 6.0)).unwrap();
        let b = newton_solve(&m, &krylov, &sigma_guess(&g, 6.0)).unwrap();
        assert!(a.field.sub(&b.field).unwrap().max_abs() < 1e-11);
    }

    #[test]
    fn kdv_symbol_converges_immediately() {
        let m = SymbolModel::kdv();
        let cfg = SolveConfig {
            eps: 0.3,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        let sol = newton_solve(&m, &cfg, &sigma_guess(&g, 2.0)).unwrap();
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn large_eps_is_rejected() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig {
            eps: 2.0,
            ..SolveConfig::default()
        };
        let g = PeriodicGrid::new(40.0, 1024).unwrap();
        assert!(matches!(
            newton_solve(&m, &cfg, &sigma_guess(&g, 6.0)),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn odd_guess_is_rejected() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig {
            n_points: 64,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        let guess = SpectralField::from_fn(&g, |x| (x / 10.0).sin());
        assert!(matches!(
            newton_solve(&m, &cfg, &guess),
            Err(SolverError::GuessNotEven(_))
        ));
    }

    #[test]
    fn amplitude_outside_radius_is_reported() {
        let model = SymbolModel::new(
            Multiplier::whitham(),
            Nonlinearity::quadratic().with_delta_star(1e-4),
        );
        let cfg = SolveConfig {
            n_points: 128,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        assert!(matches!(
            newton_solve(&model, &cfg, &sigma_guess(&g, 6.0)),
            Err(SolverError::Amplitude(_))
        ));
    }

    #[test]
    fn dealiased_solve_agrees() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig {
            n_points: 512,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        let a = newton_solve(&m, &cfg, &sigma_guess(&g, 6.0)).unwrap();
        let b = newton_solve(
            &m,
            &SolveConfig {
                dealias: true,
                ..cfg
            },
            &sigma_guess(&g, 6.0),
        )
        .unwrap();
        assert!(a.field.sub(&b.field).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn decay_check_contract() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig {
            half_period: 5.0,
            n_points: 128,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        let sol = newton_solve(&m, &cfg, &sigma_guess(&g, 6.0)).unwrap();
        assert!(sol.decay.unwrap() > 1e-3);
        let periodic = WaveSolution {
            mode: Mode::Periodic,
            ..sol
        };
        assert!(matches!(
            decay_check(&periodic),
            Err(SolverError::DecayNotMeaningful)
        ));
    }

    #[test]
    fn unscaled_wave() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig::default();
        let g = cfg.grid().unwrap();
        let sol = newton_solve(&m, &cfg, &sigma_guess(&g, 6.0)).unwrap();
        let w = unscale(&m, &sol).unwrap();
        assert!((w.amplitude - 2.5e-3).abs() < 1e-4 * 2.5);
        assert!(w.residual <= 1e-11 * 0.01, "{}", w.residual);
        assert!((w.period - 800.0).abs() < 1e-9);
    }

    #[test]
    fn single_rung_has_no_slope() {
        let m = SymbolModel::whitham();
        let cfg = SolveConfig {
            n_points: 256,
            ..SolveConfig::default()
        };
        let run = continue_in_eps(&m, &[0.05], &cfg).unwrap();
        assert_eq!(run.solutions.len(), 1);
        assert!(run.slope.is_none());
        assert!(!run.incomplete);
        assert!(continue_in_eps(&m, &[0.1, 0.05], &cfg).is_err());
    }

    #[test]
    fn slope_fit_recovers_power() {
        let xs = [0.1, 0.2, 0.4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((fit_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_tends_to_k_operator() {
        let m = SymbolModel::whitham();
        let g = PeriodicGrid::new(40.0, 256).unwrap();
        let limit = kdv::sigma(6.0, &g).unwrap();
        let k = kdv::k_operator_even(&limit);
        let diff = |eps: f64| {
            let j = jacobian_even(&m, eps, &limit.field).unwrap();
            (j - &k).singular_values().max()
        };
        let ratio = diff(0.1) / diff(0.05);
        assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
    }
}
