//! Spectral stability of computed waves through the linearized operator
//! `eps^-2 L_eps = eps^-2 (nu - L_eps - n'(eps^2 W))`: its eigenvalues, the
//! Vakhitov-Kolokolov quantity, and the index count.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kdv::{self, KdvError};
use crate::model::SymbolModel;
use crate::newton::min_singular_value;
use crate::solver::{self, Mode, SolverError, WaveSolution};
use crate::spectral::{
    ddx, dispersion_gap, even_coords, field_from_even_coords, l2_inner, l2_norm,
    rescaled_dispersion, EigenFailure, EigenPair, Parity, ParityBlockOperator, PeriodicGrid,
    SpectralError, SpectralField,
};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Limit(#[from] KdvError),
    #[error("eigensolver did not converge")]
    Eigen,
    #[error("even block numerically singular (smallest singular value {0:e})")]
    EvenBlockSingular(f64),
    #[error("shifted operator is not positive definite ({which}); increase mu")]
    NotPositiveDefinite { which: &'static str },
    #[error("mu must be positive, got {0}")]
    BadShift(f64),
}

impl From<EigenFailure> for StabilityError {
    fn from(_: EigenFailure) -> Self {
        StabilityError::Eigen
    }
}

/// `eps^-2 L_eps` in the real trigonometric basis.
#[derive(Debug, Clone)]
pub struct LinearizedOp {
    pub eps: f64,
    pub blocks: ParityBlockOperator,
    /// Largest diagonal magnitude, a cheap proxy for the operator norm.
    pub norm_estimate: f64,
    potential: SpectralField,
}

pub fn assemble_linearized(
    model: &SymbolModel,
    solution: &WaveSolution,
) -> Result<LinearizedOp, StabilityError> {
    let eps = solution.eps;
    let grid = solution.grid();
    let symbol: Vec<f64> = (0..=grid.len() / 2)
        .map(|m| dispersion_gap(model, eps, grid.wavenumber_of_mode(m as i64)) / (eps * eps))
        .collect();
    if let Some(m) = symbol.iter().position(|v| !v.is_finite()) {
        return Err(SpectralError::NonFiniteSymbol(grid.wavenumber_of_mode(m as i64)).into());
    }
    let q = model
        .nonlinearity
        .rescaled_deriv(eps, solution.field.values());
    let potential = SpectralField::new(grid, q.iter().map(|v| -v).collect())?;
    let blocks = ParityBlockOperator::new(grid, &symbol, &potential);
    let norm_estimate = blocks
        .even
        .diagonal()
        .iter()
        .chain(blocks.odd.diagonal().iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(LinearizedOp {
        eps,
        blocks,
        norm_estimate,
        potential,
    })
}

impl LinearizedOp {
    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        self.blocks.apply(f)
    }

    /// The same operator applied with FFTs instead of the assembled matrix.
    pub fn apply_fft(
        &self,
        model: &SymbolModel,
        f: &SpectralField,
    ) -> Result<SpectralField, StabilityError> {
        let lin = rescaled_dispersion(model, self.eps, f.grid())?.apply(f)?;
        Ok(lin.add(&self.potential.mul(f)?)?)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.blocks.grid()
    }
}

/// Lowest `count` eigenpairs with unit eigenfunctions.
pub fn eigen_structure(op: &LinearizedOp, count: usize) -> Result<Vec<EigenPair>, StabilityError> {
    Ok(op.blocks.lowest_eigenpairs(count, true)?)
}

/// `|lambda| <= max(1e-6, 10 tol eps^-2 ||op||)` counts as kernel.
pub fn kernel_tolerance(op: &LinearizedOp, newton_tol: f64) -> f64 {
    (10.0 * newton_tol * op.norm_estimate / (op.eps * op.eps)).max(1e-6)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VkResult {
    /// `<L_eps^{-1} W, W>`.
    pub value: f64,
    /// `eps^2 <L_eps^{-1} W, W>`, which is O(1).
    pub scaled: f64,
    /// `sup |L_eps u - W|` for the computed `u`, through the FFT path.
    pub residual: f64,
}

pub fn vk_quantity(
    model: &SymbolModel,
    solution: &WaveSolution,
) -> Result<VkResult, StabilityError> {
    let op = assemble_linearized(model, solution)?;
    vk_with(model, &op, solution)
}

fn vk_with(
    model: &SymbolModel,
    op: &LinearizedOp,
    solution: &WaveSolution,
) -> Result<VkResult, StabilityError> {
    let w = &solution.field;
    let a = &op.blocks.even;
    let u = match a.clone().lu().solve(&even_coords(w)) {
        Some(u) if u.iter().all(|v| v.is_finite()) => u,
        _ => return Err(StabilityError::EvenBlockSingular(min_singular_value(a))),
    };
    let u = field_from_even_coords(op.grid(), &u);
    let residual = op.apply_fft(model, &u)?.sub(w)?.max_abs();
    let scaled = l2_inner(&u, w)?;
    Ok(VkResult {
        value: scaled / (op.eps * op.eps),
        scaled,
        residual,
    })
}

/// `-(2 / m''(0)) <L^{-1} p, p>` for the limit profile `p` of the same mode;
/// the predicted value of `eps^2 <L_eps^{-1} W, W>` as `eps -> 0`.
pub fn vk_scaled_limit(
    model: &SymbolModel,
    mode: Mode,
    grid: &PeriodicGrid,
) -> Result<f64, StabilityError> {
    let gamma = model.gamma().map_err(SolverError::from)?;
    let inner = match mode {
        Mode::Solitary => kdv::vk_limit_closed_form(gamma),
        Mode::Periodic => kdv::vk_limit_numeric(&kdv::solve_cnoidal(gamma, grid, 1e-11)?)?,
    };
    Ok(-2.0 / model.mpp0 * inner)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolventCheck {
    pub mu: f64,
    /// Largest `||(eps^-2 L_eps + mu)^-1 f - (-(m''(0)/2) L + mu)^-1 f||` over the batch.
    pub value: f64,
    pub batch: usize,
    pub seed: u64,
}

pub const RESOLVENT_BATCH: usize = 16;

fn random_unit_coords(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    v / norm
}

pub fn resolvent_asymptotic_check(
    model: &SymbolModel,
    solution: &WaveSolution,
    mu: f64,
    seed: u64,
) -> Result<ResolventCheck, StabilityError> {
    if !(mu > 0.0) {
        return Err(StabilityError::BadShift(mu));
    }
    let grid = solution.grid();
    let op = assemble_linearized(model, solution)?;
    let limit = solver::limit_profile(model, solution.mode, grid)?;
    let mut lim = kdv::limit_operator(&limit).blocks;
    lim.scale(-0.5 * model.mpp0);
    let shifted = |b: &ParityBlockOperator| {
        let mut a = b.to_dense();
        for i in 0..a.nrows() {
            a[(i, i)] += mu;
        }
        a
    };
    let a = nalgebra::Cholesky::new(shifted(&op.blocks)).ok_or(
        StabilityError::NotPositiveDefinite {
            which: "linearized operator",
        },
    )?;
    let b = nalgebra::Cholesky::new(shifted(&lim)).ok_or(StabilityError::NotPositiveDefinite {
        which: "limit operator",
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..RESOLVENT_BATCH {
        let f = random_unit_coords(grid.len(), &mut rng);
        let d = a.solve(&f) - b.solve(&f);
        worst = worst.max(d.norm());
    }
    Ok(ResolventCheck {
        mu,
        value: worst,
        batch: RESOLVENT_BATCH,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SpectrallyStable,
    Inconclusive,
    IndexViolation,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::SpectrallyStable => "spectrally_stable",
            Verdict::Inconclusive => "inconclusive",
            Verdict::IndexViolation => "index_violation",
        }
    }
}

/// The four facts the verdict depends on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IndexFacts {
    pub morse_index: usize,
    pub kernel_dim: usize,
    pub kernel_alignment: f64,
    pub vk_value: f64,
}

/// `k_unstable <= n^- - k_0`, where `k_0 >= 1` is certified by a negative
/// VK value.
pub fn index_verdict(f: &IndexFacts) -> (Verdict, i64, Vec<String>) {
    let k0 = i64::from(f.vk_value < 0.0);
    let bound = f.morse_index as i64 - k0;
    let mut notes = Vec::new();
    if f.morse_index != 1 {
        notes.push(format!("Morse index is {}, expected 1", f.morse_index));
    }
    if f.kernel_dim != 1 {
        notes.push(format!("kernel dimension is {}, expected 1", f.kernel_dim));
    }
    if !notes.is_empty() {
        return (Verdict::IndexViolation, bound, notes);
    }
    if !(f.kernel_alignment > 0.999) {
        notes.push(format!(
            "kernel vector alignment with W' is {:.6}, below 0.999",
            f.kernel_alignment
        ));
    }
    if !(f.vk_value < 0.0) {
        notes.push("VK quantity is not negative; no instability is certified either".into());
    }
    let verdict = if notes.is_empty() {
        Verdict::SpectrallyStable
    } else {
        Verdict::Inconclusive
    };
    (verdict, bound, notes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    Whole,
    ZeroMean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullSpectrum {
    pub subspace: Subspace,
    pub max_real: f64,
    /// Largest distance from an eigenvalue's mirror images to the computed set.
    pub quadruple_defect: f64,
    pub eigenvalues: Vec<(f64, f64)>,
}

/// `d/dx` in the trigonometric basis, even coordinates first.
fn derivative_matrix(grid: &PeriodicGrid) -> DMatrix<f64> {
    let half = grid.len() / 2;
    let ne = half + 1;
    let mut d = DMatrix::zeros(grid.len(), grid.len());
    for m in 1..half {
        let k = grid.wavenumber_of_mode(m as i64);
        let (e, o) = (m, ne + m - 1);
        d[(e, o)] = k;
        d[(o, e)] = -k;
    }
    d
}

fn eigenvalues_of(m: DMatrix<f64>) -> Result<Vec<Complex64>, StabilityError> {
    let schur = Schur::try_new(m, f64::EPSILON, 1_000_000).ok_or(StabilityError::Eigen)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect())
}

fn quadruple_defect(ev: &[Complex64]) -> f64 {
    let nearest = |z: Complex64| ev.iter().map(|w| (w - z).norm()).fold(f64::MAX, f64::min);
    ev.iter()
        .map(|&l| {
            [-l, l.conj(), -l.conj()]
                .into_iter()
                .map(nearest)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Spectrum of `d/dx (eps^-2 L_eps)` by a dense nonsymmetric eigensolve.
pub fn full_spectrum_check(
    model: &SymbolModel,
    solution: &WaveSolution,
    subspace: Subspace,
) -> Result<FullSpectrum, StabilityError> {
    let op = assemble_linearized(model, solution)?;
    let mut a = derivative_matrix(op.grid()) * op.blocks.to_dense();
    if subspace == Subspace::ZeroMean {
        let keep: Vec<usize> = (1..a.nrows()).collect();
        a = a.select_rows(&keep).select_columns(&keep);
    }
    let ev = eigenvalues_of(a)?;
    Ok(FullSpectrum {
        subspace,
        max_real: ev.iter().map(|z| z.re).fold(f64::MIN, f64::max),
        quadruple_defect: quadruple_defect(&ev),
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub count: usize,
    pub mu: f64,
    pub seed: u64,
    pub resolvent_check: bool,
    pub full_spectrum: Option<Subspace>,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            count: 10,
            mu: 2.0,
            seed: 0,
            resolvent_check: false,
            full_spectrum: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eps: f64,
    pub mode: Mode,
    pub eigenvalues: Vec<f64>,
    pub parities: Vec<Parity>,
    pub morse_index: usize,
    pub kernel_dim: usize,
    pub kernel_tolerance: f64,
    pub kernel_alignment: f64,
    /// `||eps^-2 L_eps W'|| / ||W'||`.
    pub kernel_residual: f64,
    pub vk_value: f64,
    pub vk_scaled: f64,
    pub vk_residual: f64,
    /// Leading-order prediction for `vk_value`.
    pub vk_asymptote: f64,
    pub k_unstable_bound: i64,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
    pub parity_coupling: f64,
    pub resolvent: Option<ResolventCheck>,
    pub full_spectrum: Option<FullSpectrum>,
}

pub fn stability_report(
    model: &SymbolModel,
    solution: &WaveSolution,
    opts: &StabilityOptions,
) -> Result<StabilityReport, StabilityError> {
    let op = assemble_linearized(model, solution)?;
    let pairs = eigen_structure(&op, opts.count.max(3))?;
    let ktol = kernel_tolerance(&op, solution.newton_tol);
    let morse_index = pairs.iter().filter(|p| p.value < -ktol).count();
    let kernel: Vec<&EigenPair> = pairs.iter().filter(|p| p.value.abs() <= ktol).collect();
    let wp = ddx(&solution.field);
    let wp_norm = l2_norm(&wp);
    let kernel_alignment = pairs
        .iter()
        .min_by(|a, b| a.value.abs().total_cmp(&b.value.abs()))
        .and_then(|p| p.vector.as_ref())
        .map(|v| l2_inner(v, &wp).expect("same grid").abs() / (l2_norm(v) * wp_norm))
        .unwrap_or(0.0);
    let kernel_residual = l2_norm(&op.apply(&wp)) / wp_norm;
    let vk = vk_with(model, &op, solution)?;
    let eps2 = solution.eps * solution.eps;
    let vk_asymptote = vk_scaled_limit(model, solution.mode, solution.grid())? / eps2;
    let facts = IndexFacts {
        morse_index,
        kernel_dim: kernel.len(),
        kernel_alignment,
        vk_value: vk.value,
    };
    let (verdict, k_unstable_bound, diagnostics) = index_verdict(&facts);
    let resolvent = if opts.resolvent_check {
        Some(resolvent_asymptotic_check(
            model, solution, opts.mu, opts.seed,
        )?)
    } else {
        None
    };
    let full_spectrum = match opts.full_spectrum {
        Some(s) => Some(full_spectrum_check(model, solution, s)?),
        None => None,
    };
    let shown: Vec<&EigenPair> = pairs.iter().take(opts.count).collect();
    Ok(StabilityReport {
        eps: solution.eps,
        mode: solution.mode,
        eigenvalues: shown.iter().map(|p| p.value).collect(),
        parities: shown.iter().map(|p| p.parity).collect(),
        morse_index,
        kernel_dim: facts.kernel_dim,
        kernel_tolerance: ktol,
        kernel_alignment,
        kernel_residual,
        vk_value: vk.value,
        vk_scaled: vk.scaled,
        vk_residual: vk.residual,
        vk_asymptote,
        k_unstable_bound,
        verdict,
        diagnostics,
        parity_coupling: op.blocks.cross_sup(),
        resolvent,
        full_spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{newton_solve, SolveConfig};

    fn solve(model: &SymbolModel, eps: f64, n: usize) -> WaveSolution {
        let cfg = SolveConfig {
            eps,
            n_points: n,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        let guess = kdv::sigma(model.gamma().unwrap(), &g).unwrap().field;
        newton_solve(model, &cfg, &guess).unwrap()
    }

    #[test]
    fn verdict_table() {
        let f = |m, k, a, v| IndexFacts {
            morse_index: m,
            kernel_dim: k,
            kernel_alignment: a,
            vk_value: v,
        };
        assert_eq!(
            index_verdict(&f(1, 1, 0.9999, -1.0)).0,
            Verdict::SpectrallyStable
        );
        assert_eq!(index_verdict(&f(1, 1, 0.9999, -1.0)).1, 0);
        let (v, b, _) = index_verdict(&f(1, 1, 0.9999, 1.0));
        assert_eq!((v, b), (Verdict::Inconclusive, 1));
        assert_eq!(
            index_verdict(&f(2, 1, 0.9999, -1.0)).0,
            Verdict::IndexViolation
        );
        assert_eq!(
            index_verdict(&f(1, 2, 0.9999, -1.0)).0,
            Verdict::IndexViolation
        );
        assert_eq!(index_verdict(&f(1, 1, 0.5, -1.0)).0, Verdict::Inconclusive);
    }

    #[test]
    fn zero_wave_is_diagonal_and_positive() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.1, 64);
        let zero = WaveSolution {
            field: SpectralField::zeros(sol.grid()),
            ..sol
        };
        let op = assemble_linearized(&m, &zero).unwrap();
        let off = op.blocks.even.clone() - DMatrix::from_diagonal(&op.blocks.even.diagonal());
        assert!(off.amax() < 1e-15);
        assert!(op.blocks.even.diagonal().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn matrix_and_fft_paths_agree() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.1, 256);
        let op = assemble_linearized(&m, &sol).unwrap();
        let f = SpectralField::from_fn(sol.grid(), |x| (x / 4.0).sin() + (-x * x / 9.0).exp());
        let d = op.apply(&f).sub(&op.apply_fft(&m, &f).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-10 * op.apply(&f).max_abs());
        assert!(op.blocks.asymmetry() < 1e-10 * op.norm_estimate);
        assert!(op.blocks.cross_sup() < 1e-10);
    }

    #[test]
    fn translation_mode_is_in_the_kernel() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.1, 512);
        let op = assemble_linearized(&m, &sol).unwrap();
        let wp = ddx(&sol.field);
        assert!(l2_norm(&op.apply(&wp)) <= 1e-8 * l2_norm(&wp));
    }

    #[test]
    fn whitham_report_is_stable() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.1, 512);
        let r = stability_report(&m, &sol, &StabilityOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::SpectrallyStable, "{:?}", r.diagnostics);
        assert_eq!(r.k_unstable_bound, 0);
        assert!(r.vk_residual < 1e-9);
        assert_eq!(r.eigenvalues.len(), 10);
    }

    #[test]
    fn kdv_symbol_resolvents_coincide() {
        let m = SymbolModel::kdv();
        for eps in [0.1, 0.05] {
            let sol = solve(&m, eps, 256);
            let c = resolvent_asymptotic_check(&m, &sol, 2.0, 7).unwrap();
            assert!(c.value < 1e-9, "{}", c.value);
        }
    }

    #[test]
    fn identity_operator_spectrum_is_imaginary() {
        let g = PeriodicGrid::new(10.0, 32).unwrap();
        let ev = eigenvalues_of(derivative_matrix(&g)).unwrap();
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12));
        assert!(quadruple_defect(&ev) < 1e-12);
    }

    #[test]
    fn lowest_eigenvalue_approaches_limit_at_eps_squared() {
        let m = SymbolModel::whitham();
        let gap = |eps| {
            let sol = solve(&m, eps, 512);
            let op = assemble_linearized(&m, &sol).unwrap();
            let ev = eigen_structure(&op, 3).unwrap();
            ev[0].value + 5.0 / 24.0
        };
        let ratio = gap(0.1) / gap(0.05);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn resolvent_difference_scales_like_eps_squared() {
        let m = SymbolModel::whitham();
        let a = resolvent_asymptotic_check(&m, &solve(&m, 0.1, 512), 2.0, 0).unwrap();
        let b = resolvent_asymptotic_check(&m, &solve(&m, 0.05, 512), 2.0, 0).unwrap();
        let ratio = a.value / b.value;
        assert!((ratio - 4.0).abs() < 1.2, "{ratio}");
        assert!(matches!(
            resolvent_asymptotic_check(&m, &solve(&m, 0.1, 64), 0.0, 0),
            Err(StabilityError::BadShift(_))
        ));
    }

    #[test]
    fn grid_spectrum_is_on_the_imaginary_axis() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.05, 256);
        for sub in [Subspace::Whole, Subspace::ZeroMean] {
            let f = full_spectrum_check(&m, &sol, sub).unwrap();
            assert!(f.max_real <= 1e-7, "{:e}", f.max_real);
            assert!(f.quadruple_defect <= 1e-8, "{:e}", f.quadruple_defect);
        }
    }

    #[test]
    fn verdict_ignores_eigenvalue_order() {
        let m = SymbolModel::whitham();
        let sol = solve(&m, 0.1, 256);
        let r = stability_report(&m, &sol, &StabilityOptions::default()).unwrap();
        let mut ev = r.eigenvalues.clone();
        ev.reverse();
        let morse = ev.iter().filter(|&&v| v < -r.kernel_tolerance).count();
        let kernel = ev.iter().filter(|v| v.abs() <= r.kernel_tolerance).count();
        let facts = IndexFacts {
            morse_index: morse,
            kernel_dim: kernel,
            kernel_alignment: r.kernel_alignment,
            vk_value: r.vk_value,
        };
        assert_eq!(index_verdict(&facts).0, r.verdict);
    }
}
