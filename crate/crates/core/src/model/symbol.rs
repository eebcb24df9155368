//! Dispersion symbols `m(k)`.

use std::fmt;
use std::sync::Arc;

use super::expr::ExprFn;
use super::ModelError;

/// Taylor cut-over for `m` itself: below this the series is exact to rounding.
const WHITHAM_SERIES_CUTOFF: f64 = 1e-4;
/// Taylor cut-over for `m''`; the closed form cancels badly near the origin.
const WHITHAM_D2_SERIES_CUTOFF: f64 = 1e-2;

/// Full-dispersion water-wave symbol `sqrt(tanh(k) / k)`.
///
/// Even in `k`, equal to 1 at the origin and strictly decreasing on `[0, inf)`.
pub fn whitham_symbol(k: f64) -> f64 {
    let k = k.abs();
    if k < WHITHAM_SERIES_CUTOFF {
        let k2 = k * k;
        1.0 - k2 / 6.0 + 19.0 * k2 * k2 / 360.0
    } else {
        (k.tanh() / k).sqrt()
    }
}

/// `1 - whitham_symbol(k)`, without the cancellation of the direct difference.
pub fn whitham_deficit(k: f64) -> f64 {
    let k = k.abs();
    let one_minus_f = if k < 0.2 {
        // 1 - tanh(k)/k from the Taylor series of tanh.
        const C: [f64; 8] = [
            1.0 / 3.0,
            -2.0 / 15.0,
            17.0 / 315.0,
            -62.0 / 2835.0,
            1382.0 / 155925.0,
            -21844.0 / 6081075.0,
            929569.0 / 638512875.0,
            -6404582.0 / 10854718875.0,
        ];
        let k2 = k * k;
        C.iter().rev().fold(0.0, |acc, c| acc * k2 + c) * k2
    } else {
        1.0 - k.tanh() / k
    };
    one_minus_f / (1.0 + whitham_symbol(k))
}

/// Second derivative of [`whitham_symbol`].
pub fn whitham_symbol_d2(k: f64) -> f64 {
    let k = k.abs();
    if k < WHITHAM_D2_SERIES_CUTOFF {
        // m = 1 - k^2/6 + 19 k^4/360 - 55 k^6/3024 + ...
        let k2 = k * k;
        return -1.0 / 3.0 + 19.0 * k2 / 30.0 - 275.0 * k2 * k2 / 504.0;
    }
    let t = k.tanh();
    let c = k.cosh();
    let s = if c.is_finite() { 1.0 / (c * c) } else { 0.0 };
    let f = t / k;
    let f1 = s / k - t / (k * k);
    let f2 = -2.0 * s * t / k - 2.0 * s / (k * k) + 2.0 * t / (k * k * k);
    let m = f.sqrt();
    f2 / (2.0 * m) - f1 * f1 / (4.0 * m * m * m)
}

/// Centered second difference, five-point stencil.
pub(crate) fn fd_second_derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * (1.0 + x.abs());
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// Centered first difference.
pub(crate) fn fd_first_derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-5 * (1.0 + x.abs());
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Symbol reconstructed from samples `(k, m(k))`, `k >= 0`.
///
/// The samples are mirrored to negative `k` and interpolated with a natural
/// cubic spline, so the result is even by construction. Beyond the last sample
/// the symbol is held constant.
#[derive(Debug, Clone)]
pub struct TabulatedSymbol {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl TabulatedSymbol {
    pub fn new(k: &[f64], m: &[f64]) -> Result<Self, ModelError> {
        if k.len() != m.len() {
            return Err(ModelError::Table(format!(
                "{} wavenumbers but {} values",
                k.len(),
                m.len()
            )));
        }
        if k.len() < 3 {
            return Err(ModelError::Table("need at least 3 samples".into()));
        }
        if k[0] < 0.0 {
            return Err(ModelError::Table("wavenumbers must be >= 0".into()));
        }
        if let Some(w) = k.windows(2).find(|w| w[1] <= w[0]) {
            return Err(ModelError::Table(format!(
                "wavenumbers must be strictly increasing (found {} then {})",
                w[0], w[1]
            )));
        }
        if k.iter().chain(m).any(|v| !v.is_finite()) {
            return Err(ModelError::Table("non-finite entry".into()));
        }

        let skip = usize::from(k[0] == 0.0);
        let mut knots: Vec<f64> = k[skip..].iter().rev().map(|v| -v).collect();
        let mut values: Vec<f64> = m[skip..].iter().rev().copied().collect();
        knots.extend_from_slice(k);
        values.extend_from_slice(m);

        let second = natural_spline_second_derivatives(&knots, &values);
        Ok(Self {
            knots,
            values,
            second,
        })
    }

    fn locate(&self, k: f64) -> usize {
        let idx = self.knots.partition_point(|&x| x <= k);
        idx.clamp(1, self.knots.len() - 1) - 1
    }

    pub fn eval(&self, k: f64) -> f64 {
        let k = k.abs();
        let last = *self.knots.last().unwrap();
        if k >= last {
            return *self.values.last().unwrap();
        }
        let i = self.locate(k);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - k) / h;
        let b = (k - x0) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    pub fn deriv2(&self, k: f64) -> f64 {
        let k = k.abs();
        if k >= *self.knots.last().unwrap() {
            return 0.0;
        }
        let i = self.locate(k);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let t = (k - x0) / (x1 - x0);
        (1.0 - t) * self.second[i] + t * self.second[i + 1]
    }

    /// Largest tabulated wavenumber.
    pub fn k_last(&self) -> f64 {
        *self.knots.last().unwrap()
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Which formula backs a [`Multiplier`].
#[derive(Clone)]
pub enum SymbolKind {
    /// `sqrt(tanh(k)/k)`.
    Whitham,
    /// `1 - k^2/2`, the long-wave truncation.
    Kdv,
    Table(Arc<TabulatedSymbol>),
    Expression(Arc<ExprFn>),
}

impl SymbolKind {
    pub fn label(&self) -> &'static str {
        match self {
            SymbolKind::Whitham => "whitham",
            SymbolKind::Kdv => "kdv",
            SymbolKind::Table(_) => "table",
            SymbolKind::Expression(_) => "expression",
        }
    }
}

impl fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::Expression(e) => write!(f, "Expression({:?})", e.source()),
            other => f.write_str(other.label()),
        }
    }
}

/// An even Fourier symbol together with the sampling parameters used to check it.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub name: String,
    pub kind: SymbolKind,
    /// Convexity radius: `m'' < 0` is required on `[-k_star, k_star]`.
    pub k_star: f64,
    /// Sampling horizon for the tail bound `sup_{k >= k_star} m(k) < m(0)`.
    pub k_max: f64,
    /// User declaration that `m` is non-increasing past `k_max`.
    pub monotone_tail: bool,
}

impl Multiplier {
    pub fn whitham() -> Self {
        Self {
            name: "whitham".into(),
            kind: SymbolKind::Whitham,
            k_star: 1.0,
            k_max: 200.0,
            monotone_tail: false,
        }
    }

    pub fn kdv() -> Self {
        Self {
            name: "kdv".into(),
            kind: SymbolKind::Kdv,
            k_star: 1.0,
            k_max: 200.0,
            monotone_tail: false,
        }
    }

    pub fn tabulated(name: impl Into<String>, table: TabulatedSymbol) -> Self {
        let k_max = table.k_last();
        Self {
            name: name.into(),
            kind: SymbolKind::Table(Arc::new(table)),
            k_star: 1.0,
            k_max,
            monotone_tail: false,
        }
    }

    pub fn expression(name: impl Into<String>, source: &str) -> Result<Self, ModelError> {
        Ok(Self {
            name: name.into(),
            kind: SymbolKind::Expression(Arc::new(ExprFn::parse(source, "k")?)),
            k_star: 1.0,
            k_max: 200.0,
            monotone_tail: false,
        })
    }

    pub fn with_k_star(mut self, k_star: f64) -> Self {
        self.k_star = k_star;
        self
    }

    pub fn with_k_max(mut self, k_max: f64) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_monotone_tail(mut self, flag: bool) -> Self {
        self.monotone_tail = flag;
        self
    }

    pub fn eval(&self, k: f64) -> f64 {
        match &self.kind {
            SymbolKind::Whitham => whitham_symbol(k),
            SymbolKind::Kdv => 1.0 - 0.5 * k * k,
            SymbolKind::Table(t) => t.eval(k),
            // Expressions are sampled away from the origin so removable
            // singularities such as tanh(k)/k evaluate cleanly.
            SymbolKind::Expression(e) => e.eval(if k.abs() < 1e-8 { 1e-8 } else { k }),
        }
    }

    /// `m(0) - m(k)`, evaluated directly where a closed form allows it.
    pub fn deficit(&self, k: f64) -> f64 {
        match &self.kind {
            SymbolKind::Whitham => whitham_deficit(k),
            SymbolKind::Kdv => 0.5 * k * k,
            _ => self.eval(0.0) - self.eval(k),
        }
    }

    pub fn deriv2(&self, k: f64) -> f64 {
        match &self.kind {
            SymbolKind::Whitham => whitham_symbol_d2(k),
            SymbolKind::Kdv => -1.0,
            SymbolKind::Table(t) => t.deriv2(k),
            SymbolKind::Expression(_) => fd_second_derivative(|x| self.eval(x), k),
        }
    }

    /// True when `deriv2` is a closed form rather than a finite difference or spline.
    pub fn has_analytic_deriv2(&self) -> bool {
        matches!(self.kind, SymbolKind::Whitham | SymbolKind::Kdv)
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, SymbolKind::Table(_))
    }
}
