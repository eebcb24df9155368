//! Purely nonlinear terms `n(u)`.

use std::fmt;
use std::sync::Arc;

use super::expr::ExprFn;
use super::symbol::{fd_first_derivative, fd_second_derivative};
use super::ModelError;

/// Below this fraction of `min(delta_star, 1)` the rescaled generic nonlinearity
/// is replaced by its quadratic part, avoiding `n(eps^2 W) / eps^4` cancellation.
const CANCELLATION_GUARD: f64 = 1e-5;

#[derive(Clone)]
pub enum NonlinearityKind {
    /// `u^2`.
    Quadratic,
    /// `u^2 + u^3`.
    QuadraticCubic,
    Expression(Arc<ExprFn>),
}

impl NonlinearityKind {
    pub fn label(&self) -> &'static str {
        match self {
            NonlinearityKind::Quadratic => "quadratic",
            NonlinearityKind::QuadraticCubic => "quadratic_cubic",
            NonlinearityKind::Expression(_) => "expression",
        }
    }
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearityKind::Expression(e) => write!(f, "Expression({:?})", e.source()),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub name: String,
    pub kind: NonlinearityKind,
    /// Radius of the interval on which `n` is assumed `C^{2,1}`.
    pub delta_star: f64,
}

impl Nonlinearity {
    pub fn quadratic() -> Self {
        Self {
            name: "quadratic".into(),
            kind: NonlinearityKind::Quadratic,
            delta_star: 1e6,
        }
    }

    pub fn quadratic_cubic() -> Self {
        Self {
            name: "quadratic_cubic".into(),
            kind: NonlinearityKind::QuadraticCubic,
            delta_star: 1e6,
        }
    }

    pub fn expression(name: impl Into<String>, source: &str) -> Result<Self, ModelError> {
        Ok(Self {
            name: name.into(),
            kind: NonlinearityKind::Expression(Arc::new(ExprFn::parse(source, "u")?)),
            delta_star: 1e6,
        })
    }

    pub fn with_delta_star(mut self, delta_star: f64) -> Self {
        self.delta_star = delta_star;
        self
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Quadratic => u * u,
            NonlinearityKind::QuadraticCubic => u * u + u * u * u,
            NonlinearityKind::Expression(e) => e.eval(u),
        }
    }

    pub fn deriv1(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Quadratic => 2.0 * u,
            NonlinearityKind::QuadraticCubic => 2.0 * u + 3.0 * u * u,
            NonlinearityKind::Expression(_) => fd_first_derivative(|x| self.eval(x), u),
        }
    }

    pub fn deriv2(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Quadratic => 2.0,
            NonlinearityKind::QuadraticCubic => 2.0 + 6.0 * u,
            NonlinearityKind::Expression(_) => fd_second_derivative(|x| self.eval(x), u),
        }
    }

    fn guard_active(&self, eps: f64, w: &[f64]) -> bool {
        let amp = eps * eps * w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        amp < CANCELLATION_GUARD * self.delta_star.min(1.0)
    }

    /// Pointwise `eps^-4 n(eps^2 W)`.
    pub fn rescaled(&self, eps: f64, w: &[f64]) -> Vec<f64> {
        let e2 = eps * eps;
        match &self.kind {
            NonlinearityKind::Quadratic => w.iter().map(|&v| v * v).collect(),
            NonlinearityKind::QuadraticCubic => w.iter().map(|&v| v * v + e2 * v * v * v).collect(),
            NonlinearityKind::Expression(_) => {
                if self.guard_active(eps, w) {
                    let half = 0.5 * self.deriv2(0.0);
                    w.iter().map(|&v| half * v * v).collect()
                } else {
                    let e4 = e2 * e2;
                    w.iter().map(|&v| self.eval(e2 * v) / e4).collect()
                }
            }
        }
    }

    /// Pointwise `eps^-2 n'(eps^2 W)`, the potential in the linearization.
    pub fn rescaled_deriv(&self, eps: f64, w: &[f64]) -> Vec<f64> {
        let e2 = eps * eps;
        match &self.kind {
            NonlinearityKind::Quadratic => w.iter().map(|&v| 2.0 * v).collect(),
            NonlinearityKind::QuadraticCubic => {
                w.iter().map(|&v| 2.0 * v + 3.0 * e2 * v * v).collect()
            }
            NonlinearityKind::Expression(_) => {
                if self.guard_active(eps, w) {
                    let npp = self.deriv2(0.0);
                    w.iter().map(|&v| npp * v).collect()
                } else {
                    w.iter().map(|&v| self.deriv1(e2 * v) / e2).collect()
                }
            }
        }
    }
}
