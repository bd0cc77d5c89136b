use std::f64::consts::TAU;
use std::sync::Arc;

use coarea_core::gpc::{GpcBasis, GpcTable};
use coarea_core::oracle::{compare, monte_carlo, solve_realization, McEstimate, OracleSetup};
use coarea_core::shape::{ellipse_shape, random_octagon};
use num_complex::Complex64;

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn octagon_regular_member_is_refinement_stable() {
    let shape = Arc::new(random_octagon(5.0, 4.0).unwrap());
    let setup = OracleSetup::new(1.0, 100);
    let mut fine = setup.clone();
    fine.rule.panels_per_segment *= 2;
    let a = solve_realization(&shape, 0.0, &setup).unwrap();
    let b = solve_realization(&shape, 0.0, &fine).unwrap();
    let d = max_diff(&a.coefficients, &b.coefficients);
    assert!(d < 1e-6, "{d}");
}

#[test]
fn relabeling_sources_by_one_slot() {
    let shape = Arc::new(ellipse_shape(3.0, 2.0).unwrap());
    let setup = OracleSetup::new(1.0, 40);
    let mut shifted = setup.clone();
    shifted.angle_offset = TAU / 40.0;
    for z in [0.0, 1.1] {
        let a = solve_realization(&shape, z, &setup).unwrap();
        let b = solve_realization(&shape, z, &shifted).unwrap();
        assert!(max_diff(&a.coefficients, &b.coefficients) < 1e-8);
    }
}

#[test]
fn parameter_outside_domain() {
    let shape = Arc::new(random_octagon(5.0, 4.0).unwrap());
    assert!(solve_realization(&shape, 1.5, &OracleSetup::new(1.0, 40)).is_err());
}

#[test]
fn mean_is_consistent_under_more_samples() {
    let shape = Arc::new(ellipse_shape(2.0, 1.5).unwrap());
    let setup = OracleSetup::new(1.0, 30);
    let small = monte_carlo(&shape, &setup, 8, 5).unwrap();
    let large = monte_carlo(&shape, &setup, 32, 5).unwrap();
    for (i, (a, b)) in small.mean.iter().zip(&large.mean).enumerate() {
        assert!((a - b).norm() < 3.0 * small.half_width[i] + 1e-12, "mode {i}");
    }
}

#[test]
fn injected_mean_compares_exactly() {
    let mc = McEstimate::from_samples(
        2,
        &[
            (0..5).map(|k| Complex64::new(k as f64, 1.0)).collect(),
            (0..5).map(|k| Complex64::new(k as f64, -1.0)).collect(),
        ],
    )
    .unwrap();
    let table = GpcTable {
        mu: 2,
        order: 0,
        basis: GpcBasis::Legendre,
        coefficients: mc.mean.clone(),
        satisfied: vec![true; 5],
        metadata: Vec::new(),
    };
    let report = compare(&mc, &table, 1e-4);
    assert_eq!(report.max_error(), 0.0);
    assert!(report.within_interval());
    assert!(report.to_csv().starts_with("m,re_exact,im_exact,re_approx,im_approx,abs_err,half_width\n"));
    // sample std of ±1 imaginary parts is sqrt(2)
    assert!((report.rows[0].half_width - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
}
