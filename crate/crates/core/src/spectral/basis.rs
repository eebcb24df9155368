//! Real trigonometric basis, orthonormal for the trapezoid inner product.
//!
//! Even block: `1/sqrt(2P)`, `cos(K_m x)/sqrt(P)` for `0 < m < N/2`, and the
//! Nyquist cosine `/sqrt(2P)`; `N/2 + 1` functions. Odd block:
//! `sin(K_m x)/sqrt(P)` for `0 < m < N/2`; `N/2 - 1` functions. Together they
//! span grid functions exactly, so every collocation operator has an exact
//! matrix in this basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PeriodicGrid, SpectralField};

fn even_norm(grid: &PeriodicGrid, m: usize) -> f64 {
    let p = grid.half_period();
    if m == 0 || m == grid.len() / 2 {
        (2.0 * p).sqrt()
    } else {
        p.sqrt()
    }
}

pub fn even_coords(f: &SpectralField) -> DVector<f64> {
    let g = f.grid();
    let c = f.coefficients();
    let half = g.len() / 2;
    DVector::from_fn(half + 1, |m, _| {
        let scale = if m == 0 || m == half { 1.0 } else { 2.0 };
        scale * even_norm(g, m) * c[m].re
    })
}

pub fn odd_coords(f: &SpectralField) -> DVector<f64> {
    let g = f.grid();
    let c = f.coefficients();
    let sp = g.half_period().sqrt();
    DVector::from_fn(g.len() / 2 - 1, |i, _| -2.0 * sp * c[i + 1].im)
}

pub fn field_from_even_coords(grid: &PeriodicGrid, c: &DVector<f64>) -> SpectralField {
    let n = grid.len();
    let half = n / 2;
    assert_eq!(c.len(), half + 1);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..=half {
        let scale = if m == 0 || m == half { 1.0 } else { 0.5 };
        let v = Complex64::new(scale * c[m] / even_norm(grid, m), 0.0);
        coeffs[m] = v;
        if m != 0 && m != half {
            coeffs[n - m] = v;
        }
    }
    SpectralField::from_coefficients(grid, coeffs)
}

pub fn field_from_odd_coords(grid: &PeriodicGrid, b: &DVector<f64>) -> SpectralField {
    let n = grid.len();
    assert_eq!(b.len(), n / 2 - 1);
    let sp = grid.half_period().sqrt();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for (i, &v) in b.iter().enumerate() {
        let m = i + 1;
        coeffs[m] = Complex64::new(0.0, -0.5 * v / sp);
        coeffs[n - m] = Complex64::new(0.0, 0.5 * v / sp);
    }
    SpectralField::from_coefficients(grid, coeffs)
}

fn wrap(n: usize, k: i64) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Matrix of `v -> q v` between even basis functions.
pub fn even_multiplication_block(q: &SpectralField) -> DMatrix<f64> {
    let g = q.grid();
    let n = g.len();
    let qh = q.coefficients();
    let p = g.half_period();
    let dim = n / 2 + 1;
    let norms: Vec<f64> = (0..dim).map(|m| even_norm(g, m)).collect();
    DMatrix::from_fn(dim, dim, |a, b| {
        let (a_, b_) = (a as i64, b as i64);
        let s = qh[wrap(n, a_ - b_)].re + qh[wrap(n, a_ + b_)].re;
        p * s / (norms[a] * norms[b])
    })
}

/// Matrix of `v -> q v` between odd basis functions.
pub fn odd_multiplication_block(q: &SpectralField) -> DMatrix<f64> {
    let g = q.grid();
    let n = g.len();
    let qh = q.coefficients();
    let dim = n / 2 - 1;
    DMatrix::from_fn(dim, dim, |a, b| {
        let (a_, b_) = (a as i64 + 1, b as i64 + 1);
        qh[wrap(n, a_ - b_)].re - qh[wrap(n, a_ + b_)].re
    })
}

/// Matrix of `v -> q v` from odd basis functions (columns) to even ones (rows).
/// Vanishes for even `q`.
pub fn cross_multiplication_block(q: &SpectralField) -> DMatrix<f64> {
    let g = q.grid();
    let n = g.len();
    let qh = q.coefficients();
    let p = g.half_period();
    let sp = p.sqrt();
    DMatrix::from_fn(n / 2 + 1, n / 2 - 1, |a, b| {
        let (m, k) = (a as i64, b as i64 + 1);
        let s = qh[wrap(n, k + m)].im + qh[wrap(n, k - m)].im;
        -p * s / (even_norm(g, a) * sp)
    })
}

/// A real symmetric grid operator `diag(symbol) + multiplication by q`,
/// split into parity blocks.
#[derive(Debug, Clone)]
pub struct ParityBlockOperator {
    grid: PeriodicGrid,
    pub even: DMatrix<f64>,
    pub odd: DMatrix<f64>,
    /// Rows even, columns odd.
    pub cross: DMatrix<f64>,
}

impl ParityBlockOperator {
    /// `symbol` holds values for modes `0..=N/2` (the operator is even in `K`).
    pub fn new(grid: &PeriodicGrid, symbol: &[f64], potential: &SpectralField) -> Self {
        let half = grid.len() / 2;
        assert_eq!(symbol.len(), half + 1);
        let mut even = even_multiplication_block(potential);
        let mut odd = odd_multiplication_block(potential);
        for m in 0..=half {
            even[(m, m)] += symbol[m];
        }
        for m in 1..half {
            odd[(m - 1, m - 1)] += symbol[m];
        }
        Self {
            grid: grid.clone(),
            even,
            odd,
            cross: cross_multiplication_block(potential),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn scale(&mut self, s: f64) {
        self.even *= s;
        self.odd *= s;
        self.cross *= s;
    }

    /// Full matrix, even coordinates first.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let ne = self.even.nrows();
        let no = self.odd.nrows();
        let mut a = DMatrix::zeros(ne + no, ne + no);
        a.view_mut((0, 0), (ne, ne)).copy_from(&self.even);
        a.view_mut((ne, ne), (no, no)).copy_from(&self.odd);
        a.view_mut((0, ne), (ne, no)).copy_from(&self.cross);
        a.view_mut((ne, 0), (no, ne))
            .copy_from(&self.cross.transpose());
        a
    }

    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        let e = even_coords(f);
        let o = odd_coords(f);
        let out_e = &self.even * &e + &self.cross * &o;
        let out_o = &self.odd * &o + self.cross.transpose() * &e;
        field_from_even_coords(&self.grid, &out_e)
            .add(&field_from_odd_coords(&self.grid, &out_o))
            .expect("same grid")
    }

    pub fn cross_sup(&self) -> f64 {
        self.cross.amax()
    }

    pub fn asymmetry(&self) -> f64 {
        let e = (&self.even - self.even.transpose()).amax();
        let o = (&self.odd - self.odd.transpose()).amax();
        e.max(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub parity: Parity,
    /// Unit-norm eigenfunction, when requested.
    pub vector: Option<SpectralField>,
}

/// The symmetric eigensolver did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigenFailure;

fn block_eigen(
    a: &DMatrix<f64>,
    vectors: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>), EigenFailure> {
    if vectors {
        let e = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(EigenFailure)?;
        Ok((e.eigenvalues, Some(e.eigenvectors)))
    } else {
        let vals = a.symmetric_eigenvalues();
        if vals.iter().all(|v| v.is_finite()) {
            Ok((vals, None))
        } else {
            Err(EigenFailure)
        }
    }
}

impl ParityBlockOperator {
    /// Lowest `count` eigenpairs over both diagonal blocks, ascending. The cross
    /// block is ignored, so the operator must commute with reflection.
    pub fn lowest_eigenpairs(
        &self,
        count: usize,
        vectors: bool,
    ) -> Result<Vec<EigenPair>, EigenFailure> {
        let (ev, evec) = block_eigen(&self.even, vectors)?;
        let (ov, ovec) = block_eigen(&self.odd, vectors)?;
        let mut order: Vec<(f64, Parity, usize)> = ev
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, Parity::Even, i))
            .chain(ov.iter().enumerate().map(|(i, &v)| (v, Parity::Odd, i)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        order.truncate(count);
        Ok(order
            .into_iter()
            .map(|(value, parity, i)| {
                let vector = match parity {
                    Parity::Even => evec
                        .as_ref()
                        .map(|m| field_from_even_coords(&self.grid, &m.column(i).into_owned())),
                    Parity::Odd => ovec
                        .as_ref()
                        .map(|m| field_from_odd_coords(&self.grid, &m.column(i).into_owned())),
                };
                EigenPair {
                    value,
                    parity,
                    vector,
                }
            })
            .collect())
    }
}
