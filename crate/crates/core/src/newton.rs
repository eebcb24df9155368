//! Newton iteration for even fixed-point problems `W = D[g(W)]`, where `D` is
//! a Fourier multiplier and `g` acts pointwise. Unknowns are the even-basis
//! coordinates of `W`, so parity holds by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{even_coords, even_multiplication_block, field_from_even_coords};
use crate::spectral::{PeriodicGrid, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    #[default]
    Dense,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub linear_solver: LinearSolver,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 25,
            damping: 1.0,
            linear_solver: LinearSolver::Dense,
        }
    }
}

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("Jacobian numerically singular (smallest singular value {min_singular_value:e})")]
    SingularJacobian { min_singular_value: f64 },
    #[error("Krylov solve stalled after {iterations} iterations (relative residual {residual:e})")]
    KrylovStalled { iterations: usize, residual: f64 },
    #[error("iterate became non-finite")]
    NonFinite,
}

/// The pieces of `Phi(W) = W - D[g(W)]` that Newton needs.
pub trait EvenFixedPoint {
    type Error: From<NewtonError>;
    fn grid(&self) -> &PeriodicGrid;
    /// `D` on modes `0..=N/2`.
    fn smoothing(&self) -> &[f64];
    fn nonlinear(&self, w: &SpectralField) -> Result<SpectralField, Self::Error>;
    /// Pointwise derivative `g'(W)`.
    fn linearized(&self, w: &SpectralField) -> Result<SpectralField, Self::Error>;
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub field: SpectralField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

fn residual_coords<P: EvenFixedPoint>(
    p: &P,
    c: &DVector<f64>,
) -> Result<(SpectralField, DVector<f64>, f64), P::Error> {
    let w = field_from_even_coords(p.grid(), c);
    let g = even_coords(&p.nonlinear(&w)?);
    let d = p.smoothing();
    let r = DVector::from_fn(c.len(), |m, _| c[m] - d[m] * g[m]);
    let sup = field_from_even_coords(p.grid(), &r).max_abs();
    Ok((w, r, sup))
}

/// Dense Jacobian `I - diag(D) E(g'(W))` in even coordinates.
pub fn even_jacobian<P: EvenFixedPoint>(
    p: &P,
    w: &SpectralField,
) -> Result<DMatrix<f64>, P::Error> {
    let q = p.linearized(w)?;
    let mut j = even_multiplication_block(&q);
    let d = p.smoothing();
    for (mut row, &dm) in j.row_iter_mut().zip(d) {
        row *= -dm;
    }
    for m in 0..j.nrows() {
        j[(m, m)] += 1.0;
    }
    Ok(j)
}

pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    a.singular_values().min()
}

pub fn solve<P: EvenFixedPoint>(
    p: &P,
    guess: &SpectralField,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, P::Error> {
    let mut c = even_coords(guess);
    let (mut w, mut r, mut sup) = residual_coords(p, &c)?;
    let mut history = vec![sup];
    let mut it = 0;
    while sup > opts.tol {
        if it == opts.max_iter {
            return Err(NewtonError::MaxIterations {
                iterations: it,
                residual: sup,
            }
            .into());
        }
        it += 1;
        let step = match opts.linear_solver {
            LinearSolver::Dense => dense_step(p, &w, &r)?,
            LinearSolver::Krylov => krylov_step(p, &w, &r)?,
        };
        let mut t = opts.damping;
        let mut best: Option<(DVector<f64>, SpectralField, DVector<f64>, f64)> = None;
        let mut last_err = None;
        // Full step first; on residual increase, halve up to five times.
        for _ in 0..=5 {
            let trial = &c - &step * t;
            match residual_coords(p, &trial) {
                Ok((tw, tr, ts)) if ts.is_finite() => {
                    let improves = ts < sup;
                    if best.as_ref().is_none_or(|b| ts < b.3) {
                        best = Some((trial, tw, tr, ts));
                    }
                    if improves {
                        break;
                    }
                }
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
            t *= 0.5;
        }
        let Some((nc, nw, nr, ns)) = best else {
            return Err(last_err.unwrap_or_else(|| NewtonError::NonFinite.into()));
        };
        c = nc;
        w = nw;
        r = nr;
        sup = ns;
        history.push(sup);
    }
    Ok(NewtonOutcome {
        field: w,
        residual_sup: sup,
        iterations: it,
        history,
    })
}

fn dense_step<P: EvenFixedPoint>(
    p: &P,
    w: &SpectralField,
    r: &DVector<f64>,
) -> Result<DVector<f64>, P::Error> {
    let j = even_jacobian(p, w)?;
    let singular = |j: &DMatrix<f64>| NewtonError::SingularJacobian {
        min_singular_value: min_singular_value(j),
    };
    let step = j
        .clone()
        .lu()
        .solve(r)
        .filter(|s| s.iter().all(|v| v.is_finite()));
    match step {
        None => Err(singular(&j).into()),
        // A tiny pivot shows up as a huge, but finite, step.
        Some(s) if s.amax() > 1e8 * (1.0 + r.amax()) && min_singular_value(&j) < 1e-10 => {
            Err(singular(&j).into())
        }
        Some(s) => Ok(s),
    }
}

fn krylov_step<P: EvenFixedPoint>(
    p: &P,
    w: &SpectralField,
    r: &DVector<f64>,
) -> Result<DVector<f64>, P::Error> {
    let q = p.linearized(w)?;
    let grid = p.grid();
    let d = p.smoothing();
    let apply = |v: &DVector<f64>| {
        let f = field_from_even_coords(grid, v);
        let qv = even_coords(&q.mul(&f).expect("same grid"));
        DVector::from_fn(v.len(), |m, _| v[m] - d[m] * qv[m])
    };
    Ok(gmres(apply, r, 1e-13, 60, 20)?)
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
    restart: usize,
    max_cycles: usize,
) -> Result<DVector<f64>, NewtonError> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut total = 0;
    for _ in 0..max_cycles {
        let r0 = b - apply(&x);
        let beta = r0.norm();
        let rel = beta / bnorm;
        if rel <= rel_tol {
            return Ok(x);
        }
        let mut v: Vec<DVector<f64>> = vec![r0 / beta];
        let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut s = DVector::<f64>::zeros(restart + 1);
        s[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let mut wv = apply(&v[k]);
            for (i, vi) in v.iter().enumerate() {
                h[(i, k)] = wv.dot(vi);
                wv.axpy(-h[(i, k)], vi, 1.0);
            }
            let nv = wv.norm();
            h[(k + 1, k)] = nv;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let den = h[(k, k)].hypot(h[(k + 1, k)]);
            cs[k] = h[(k, k)] / den;
            sn[k] = h[(k + 1, k)] / den;
            h[(k, k)] = den;
            h[(k + 1, k)] = 0.0;
            s[k + 1] = -sn[k] * s[k];
            s[k] *= cs[k];
            k_used = k + 1;
            let rel = s[k + 1].abs() / bnorm;
            if rel <= rel_tol || nv == 0.0 {
                break;
            }
            v.push(wv / nv);
        }
        let mut y = DVector::<f64>::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut acc = s[i];
            for j in i + 1..k_used {
                acc -= h[(i, j)] * y[j];
            }
            y[i] = acc / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &v[i], 1.0);
        }
        if !x.iter().all(|t| t.is_finite()) {
            return Err(NewtonError::NonFinite);
        }
    }
    let final_rel = (b - apply(&x)).norm() / bnorm;
    if final_rel <= rel_tol.max(1e-12) {
        Ok(x)
    } else {
        Err(NewtonError::KrylovStalled {
            iterations: total,
            residual: final_rel,
        })
    }
}
