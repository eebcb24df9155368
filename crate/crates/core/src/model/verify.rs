//! Sampled checks of the hypotheses on `m` and `n`.

use serde::{Deserialize, Serialize};

use super::symbol::{fd_first_derivative, fd_second_derivative};
use super::{ModelError, SymbolModel};

const ZERO_TOL: f64 = 1e-12;

/// Sample count used by the command line and the acceptance run.
pub const DEFAULT_SAMPLES: usize = 2000;
const EVEN_TOL: f64 = 1e-12;
const DERIV_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// How the tail bound `sup_{k >= k_star} m(k) < m(0)` was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPath {
    /// Only `[k_star, k_max]` was sampled; nothing is known beyond `k_max`.
    SampledToKMax,
    /// Sampled on `[k_star, k_max]`, with a declared monotone tail beyond.
    SampledPlusDeclaredMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl SampleGrid {
    fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count).map(move |i| self.start + step * i as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub model: String,
    pub checks: Vec<HypothesisCheck>,
    pub m0: f64,
    pub mpp0: f64,
    pub npp0: f64,
    /// `max_{|k| <= k_star} m''(k)` over the samples.
    pub m2: f64,
    /// `sup_{k_star <= k <= k_max} m(k)` over the samples.
    pub m1: f64,
    pub gamma: Option<f64>,
    pub k_star: f64,
    pub k_max: f64,
    pub convexity_grid: SampleGrid,
    pub tail_grid: SampleGrid,
    pub nonlinearity_grid: SampleGrid,
    pub tail_path: TailPath,
    /// `C^{3,1}` regularity on `[-k_star, k_star]` cannot be sampled; this says
    /// on what grounds it is accepted.
    pub regularity: String,
    pub deriv2_source: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn finite(what: &'static str, at: f64, v: f64) -> Result<f64, ModelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { what, at })
    }
}

fn check(name: &str, passed: bool, detail: String) -> HypothesisCheck {
    HypothesisCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Samples every hypothesis on `m` and `n` and reports pass/fail with witnesses.
///
/// A failed hypothesis yields a failing report; only a non-finite evaluation
/// (or too few samples) is an error.
pub fn verify_model(model: &SymbolModel, samples: usize) -> Result<VerificationReport, ModelError> {
    if samples < 100 {
        return Err(ModelError::TooFewSamples(samples));
    }
    let m = &model.multiplier;
    let n = &model.nonlinearity;
    let mut checks = Vec::new();

    // Nonlinearity.
    let n0 = finite("n", 0.0, n.eval(0.0))?;
    let n1 = finite("n'", 0.0, n.deriv1(0.0))?;
    let npp0 = finite("n''", 0.0, model.npp0)?;
    checks.push(check(
        "n(0) = n'(0) = 0",
        n0.abs() <= ZERO_TOL && n1.abs() <= ZERO_TOL,
        format!("n(0) = {n0:e}, n'(0) = {n1:e}"),
    ));
    checks.push(check("n''(0) > 0", npp0 > 0.0, format!("n''(0) = {npp0}")));

    let radius = 0.9 * n.delta_star.min(1.0);
    let nonlinearity_grid = SampleGrid {
        start: -radius,
        end: radius,
        count: samples,
    };
    let mut worst_d1 = 0.0f64;
    let mut worst_d2 = 0.0f64;
    for u in nonlinearity_grid.points() {
        let d1 = finite("n'", u, n.deriv1(u))?;
        let d2 = finite("n''", u, n.deriv2(u))?;
        let fd1 = finite("n", u, fd_first_derivative(|x| n.eval(x), u))?;
        let fd2 = finite("n", u, fd_second_derivative(|x| n.eval(x), u))?;
        worst_d1 = worst_d1.max((fd1 - d1).abs() / (1.0 + d1.abs()));
        worst_d2 = worst_d2.max((fd2 - d2).abs() / (1.0 + d2.abs()));
    }
    checks.push(check(
        "n', n'' consistent with n",
        worst_d1 <= DERIV_REL_TOL && worst_d2 <= DERIV_REL_TOL,
        format!("max relative mismatch n': {worst_d1:e}, n'': {worst_d2:e}"),
    ));

    // Multiplier.
    let m0 = finite("m", 0.0, model.m0)?;
    let mpp0 = finite("m''", 0.0, model.mpp0)?;
    let convexity_grid = SampleGrid {
        start: -m.k_star,
        end: m.k_star,
        count: samples | 1, // odd count puts a sample on k = 0
    };
    let tail_grid = SampleGrid {
        start: m.k_star,
        end: m.k_max,
        count: samples,
    };

    let mut even_defect = 0.0f64;
    let mut m2 = f64::NEG_INFINITY;
    for k in convexity_grid.points() {
        let d2 = finite("m''", k, m.deriv2(k))?;
        m2 = m2.max(d2);
    }
    let mut m1 = f64::NEG_INFINITY;
    for k in tail_grid.points() {
        let v = finite("m", k, m.eval(k))?;
        m1 = m1.max(v);
    }
    for k in convexity_grid.points().chain(tail_grid.points()) {
        let a = finite("m", k, m.eval(k))?;
        let b = finite("m", -k, m.eval(-k))?;
        even_defect = even_defect.max((a - b).abs() / (EVEN_TOL * (1.0 + a.abs())));
    }
    checks.push(check(
        "m even",
        even_defect <= 1.0,
        format!("max |m(k) - m(-k)| / (1e-12 (1 + |m|)) = {even_defect:e}"),
    ));
    checks.push(check("m(0) > 0", m0 > 0.0, format!("m(0) = {m0}")));
    checks.push(check(
        "m2 < 0",
        m2 < 0.0,
        format!("max m'' on [-{0}, {0}] = {m2}", m.k_star),
    ));
    checks.push(check(
        "m1 < m(0)",
        m1 < m0,
        format!("sup m on [{}, {}] = {m1} vs m(0) = {m0}", m.k_star, m.k_max),
    ));

    let gamma = (mpp0 < 0.0).then(|| -npp0 / mpp0);
    if let Some(g) = gamma {
        checks.push(check("gamma > 0", g > 0.0, format!("gamma = {g}")));
    }

    let tail_path = if m.monotone_tail {
        TailPath::SampledPlusDeclaredMonotone
    } else {
        TailPath::SampledToKMax
    };
    let regularity = if m.is_tabulated() {
        "regularity assumed (tabulated symbol)".to_string()
    } else if m.has_analytic_deriv2() {
        "closed-form symbol".to_string()
    } else {
        "regularity assumed (expression symbol)".to_string()
    };
    let deriv2_source = if m.has_analytic_deriv2() {
        "analytic"
    } else if m.is_tabulated() {
        "spline"
    } else {
        "finite difference"
    };

    Ok(VerificationReport {
        model: model.name(),
        checks,
        m0,
        mpp0,
        npp0,
        m2,
        m1,
        gamma,
        k_star: m.k_star,
        k_max: m.k_max,
        convexity_grid,
        tail_grid,
        nonlinearity_grid,
        tail_path,
        regularity,
        deriv2_source: deriv2_source.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Multiplier, Nonlinearity};

    #[test]
    fn whitham_passes_with_gamma_six() {
        let r = verify_model(&SymbolModel::whitham(), 400).unwrap();
        assert!(r.passed(), "{:#?}", r.checks);
        assert!((r.gamma.unwrap() - 6.0).abs() < 1e-6);
        assert!(r.m2 < 0.0 && r.m1 < r.m0);
        assert_eq!(r.tail_path, TailPath::SampledToKMax);
    }

    #[test]
    fn kdv_symbol_passes_with_gamma_two() {
        let r = verify_model(&SymbolModel::kdv(), 100).unwrap();
        assert!(r.passed());
        assert_eq!(r.gamma, Some(2.0));
    }

    #[test]
    fn convex_symbol_fails_m2() {
        let model = SymbolModel::new(
            Multiplier::expression("anti", "1 + k^2").unwrap(),
            Nonlinearity::quadratic(),
        );
        let r = verify_model(&model, 200).unwrap();
        assert!(!r.passed());
        let failed: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"m2 < 0"), "{failed:?}");
        assert!(r.gamma.is_none());
    }

    #[test]
    fn linear_term_in_n_is_caught() {
        let model = SymbolModel::new(
            Multiplier::whitham(),
            Nonlinearity::expression("bad", "u + u^2").unwrap(),
        );
        let r = verify_model(&model, 100).unwrap();
        assert!(!r.checks[0].passed);
    }

    #[test]
    fn non_finite_symbol_aborts() {
        let model = SymbolModel::new(
            Multiplier::expression("log", "ln(1 - k)").unwrap(),
            Nonlinearity::quadratic(),
        );
        assert!(matches!(
            verify_model(&model, 100),
            Err(ModelError::NonFinite { .. })
        ));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            verify_model(&SymbolModel::whitham(), 10),
            Err(ModelError::TooFewSamples(10))
        ));
    }
}
