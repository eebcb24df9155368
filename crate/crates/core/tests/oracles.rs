//! Cross-checks against independent discretizations.

use whitham_core::kdv;
use whitham_core::model::SymbolModel;
use whitham_core::solver::{newton_solve, SolveConfig};
use whitham_core::spectral::{h1_norm, PeriodicGrid};
use whitham_core::stability::{assemble_linearized, eigen_structure};

/// Number of eigenvalues below `lambda` of the symmetric tridiagonal matrix
/// with diagonal `d` and constant off-diagonal `e`, by Sturm sequence.
fn count_below(d: &[f64], e: f64, lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &di) in d.iter().enumerate() {
        q = di - lambda - if i == 0 { 0.0 } else { e * e / q };
        if q == 0.0 {
            q = 1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect(d: &[f64], e: f64, index: usize) -> f64 {
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(d, e, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn limit_spectrum_matches_finite_differences() {
    let gamma = 6.0;
    let (p, n) = (40.0, 8000);
    let h = 2.0 * p / n as f64;
    let d: Vec<f64> = (1..n)
        .map(|j| {
            let x = -p + j as f64 * h;
            2.0 / (h * h) + 1.0 - 2.0 * gamma * kdv::sigma_value(gamma, x)
        })
        .collect();
    let e = -1.0 / (h * h);
    let fd: Vec<f64> = (0..3).map(|i| bisect(&d, e, i)).collect();

    let g = PeriodicGrid::new(p, 1024).unwrap();
    let op = kdv::limit_operator(&kdv::sigma(gamma, &g).unwrap());
    let spectral: Vec<f64> = op
        .lowest_eigenpairs(3, false)
        .unwrap()
        .iter()
        .map(|e| e.value)
        .collect();
    for (a, b) in fd.iter().zip(&spectral) {
        assert!((a - b).abs() < 1e-3, "fd {fd:?} spectral {spectral:?}");
    }
    for (a, b) in spectral.iter().zip([-1.25, 0.0, 0.75]) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn doubling_resolution_leaves_the_wave_unchanged() {
    let m = SymbolModel::whitham();
    let solve = |n| {
        let cfg = SolveConfig {
            eps: 0.1,
            n_points: n,
            ..SolveConfig::default()
        };
        let g = cfg.grid().unwrap();
        newton_solve(&m, &cfg, &kdv::sigma(6.0, &g).unwrap().field).unwrap()
    };
    let (a, b) = (solve(512), solve(1024));
    let (na, nb) = (h1_norm(&a.field), h1_norm(&b.field));
    assert!((na - nb).abs() <= 1e-8 * nb, "{na} {nb}");

    let ev = |s| {
        let op = assemble_linearized(&m, s).unwrap();
        eigen_structure(&op, 3).unwrap()[0].value
    };
    assert!((ev(&a) - ev(&b)).abs() < 1e-9);
}
