//! User-supplied closed-form expressions of a single variable.

use std::fmt;

use super::ModelError;

thread_local! {
    static BUILTINS: meval::Context<'static> = meval::Context::new();
}

/// A parsed expression in one named variable, e.g. `sqrt(tanh(k)/k)`.
pub struct ExprFn {
    source: String,
    var: &'static str,
    expr: meval::Expr,
}

impl ExprFn {
    pub fn parse(source: &str, var: &'static str) -> Result<Self, ModelError> {
        let expr: meval::Expr = source.parse().map_err(|e| ModelError::Expression {
            source_text: source.to_string(),
            reason: format!("{e}"),
        })?;
        // Rejects unknown variables and functions up front.
        BUILTINS
            .with(|ctx| expr.clone().bind_with_context(ctx, var).map(|_| ()))
            .map_err(|e| ModelError::Expression {
                source_text: source.to_string(),
                reason: format!("{e}"),
            })?;
        Ok(Self {
            source: source.to_string(),
            var,
            expr,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at `x`; evaluation failures surface as NaN.
    pub fn eval(&self, x: f64) -> f64 {
        BUILTINS.with(|ctx| {
            self.expr
                .eval_with_context(((self.var, x), ctx))
                .unwrap_or(f64::NAN)
        })
    }
}

impl fmt::Debug for ExprFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExprFn")
            .field("source", &self.source)
            .field("var", &self.var)
            .finish()
    }
}
