//! Dispersive symbol, nonlinearity, and the structural hypotheses they must satisfy.

mod config;
mod expr;
mod nonlinearity;
mod symbol;
mod verify;

pub use config::{load_model, ModelConfig, NonlinearityConfig, SymbolConfig};
pub use expr::ExprFn;
pub use nonlinearity::{Nonlinearity, NonlinearityKind};
pub use symbol::{
    whitham_deficit, whitham_symbol, whitham_symbol_d2, Multiplier, SymbolKind, TabulatedSymbol,
};
pub use verify::{verify_model, HypothesisCheck, TailPath, VerificationReport, DEFAULT_SAMPLES};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("m''(0) = {0} is not negative; no long-wave scaling exists")]
    NonNegativeCurvature(f64),
    #[error("amplitude outside validity radius: eps^2 max|W| = {amplitude} >= delta_star = {delta_star}")]
    AmplitudeOutsideRadius { amplitude: f64, delta_star: f64 },
    #[error("{what} returned a non-finite value at {at}")]
    NonFinite { what: &'static str, at: f64 },
    #[error("need at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("bad symbol table: {0}")]
    Table(String),
    #[error("cannot parse expression {source_text:?}: {reason}")]
    Expression { source_text: String, reason: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A multiplier/nonlinearity pair with the constants every later stage uses.
///
/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone)]
pub struct SymbolModel {
    pub multiplier: Multiplier,
    pub nonlinearity: Nonlinearity,
    /// `m(0)`
    pub m0: f64,
    /// `m''(0)`
    pub mpp0: f64,
    /// `n''(0)`
    pub npp0: f64,
}

impl SymbolModel {
    pub fn new(multiplier: Multiplier, nonlinearity: Nonlinearity) -> Self {
        let m0 = multiplier.eval(0.0);
        let mpp0 = multiplier.deriv2(0.0);
        let npp0 = nonlinearity.deriv2(0.0);
        Self {
            multiplier,
            nonlinearity,
            m0,
            mpp0,
            npp0,
        }
    }

    /// `sqrt(tanh k / k)` with `n(u) = u^2`.
    pub fn whitham() -> Self {
        Self::new(Multiplier::whitham(), Nonlinearity::quadratic())
    }

    /// `1 - k^2/2` with `n(u) = u^2`; the rescaled problem is then exactly KdV.
    pub fn kdv() -> Self {
        Self::new(Multiplier::kdv(), Nonlinearity::quadratic())
    }

    pub fn name(&self) -> String {
        format!("{}/{}", self.multiplier.name, self.nonlinearity.name)
    }

    /// `gamma = -n''(0) / m''(0)`.
    pub fn gamma(&self) -> Result<f64, ModelError> {
        gamma_of(self)
    }

    /// Wave speed `m(0) - m''(0) eps^2 / 2` of the rescaled branch.
    pub fn nu(&self, eps: f64) -> f64 {
        self.m0 - 0.5 * self.mpp0 * eps * eps
    }
}

pub fn gamma_of(model: &SymbolModel) -> Result<f64, ModelError> {
    if model.mpp0 >= 0.0 || !model.mpp0.is_finite() {
        return Err(ModelError::NonNegativeCurvature(model.mpp0));
    }
    Ok(-model.npp0 / model.mpp0)
}

/// Rescaled nonlinearity `eps^-4 n(eps^2 W)`, evaluated pointwise.
pub fn g_eps(model: &SymbolModel, eps: f64, w: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_amplitude(model, eps, w)?;
    Ok(model.nonlinearity.rescaled(eps, w))
}

pub(crate) fn check_amplitude(model: &SymbolModel, eps: f64, w: &[f64]) -> Result<(), ModelError> {
    let amplitude = eps * eps * w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let delta_star = model.nonlinearity.delta_star;
    if !(amplitude < delta_star) {
        return Err(ModelError::AmplitudeOutsideRadius {
            amplitude,
            delta_star,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((SymbolModel::whitham().gamma().unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(SymbolModel::kdv().gamma().unwrap(), 2.0);
        let mut m = SymbolModel::kdv();
        m.mpp0 = -1.0 / 3.0;
        m.npp0 = 1.0;
        assert!((m.gamma().unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_rejects_convex_symbol() {
        let anti = SymbolModel::new(
            Multiplier::expression("anti", "1 + k^2").unwrap(),
            Nonlinearity::quadratic(),
        );
        assert!(matches!(
            anti.gamma(),
            Err(ModelError::NonNegativeCurvature(_))
        ));
    }

    #[test]
    fn g_eps_respects_validity_radius() {
        let model = SymbolModel::new(
            Multiplier::whitham(),
            Nonlinearity::quadratic().with_delta_star(1e-3),
        );
        assert!(g_eps(&model, 0.1, &[0.05]).is_ok());
        assert!(matches!(
            g_eps(&model, 0.1, &[0.5]),
            Err(ModelError::AmplitudeOutsideRadius { .. })
        ));
    }

    #[test]
    fn remainder_is_cubic_in_amplitude() {
        // |g - W^2| / (eps^2 max|W|^3) should not drift across a decade of eps.
        let model = SymbolModel::new(
            Multiplier::whitham(),
            Nonlinearity::expression("sin", "u^2 + sin(u)^3").unwrap(),
        );
        let w: Vec<f64> = (0..50).map(|i| 0.05 * i as f64 - 1.2).collect();
        let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut ratios = Vec::new();
        for &eps in &[0.2, 0.1, 0.05, 0.02] {
            let g = g_eps(&model, eps, &w).unwrap();
            let dev = g
                .iter()
                .zip(&w)
                .map(|(g, w)| (g - 0.5 * model.npp0 * w * w).abs())
                .fold(0.0f64, f64::max);
            ratios.push(dev / (eps * eps * wmax.powi(3)));
        }
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi < 2.0 && lo > 0.5 * hi, "{ratios:?}");
    }
}
