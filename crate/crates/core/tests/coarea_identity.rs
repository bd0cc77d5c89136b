use std::f64::consts::{PI, TAU};

use coarea_core::coarea::{ellipse_grid, naive_grid, polygon_grid, CoareaGrid};
use coarea_core::quadrature::{gauss_legendre, periodic_trapezoid};
use coarea_core::shape::{ellipse_shape, random_octagon, StarShape};

type Integrand = Box<dyn Fn(f64, f64, f64) -> f64 + Sync + Send>;

/// Strictly positive products of low-order pieces in r, θ and z.
fn integrands(r_max: f64, periodic: bool) -> Vec<(String, Integrand)> {
    let combos = [
        (0, 0, 0),
        (1, 0, 0),
        (2, 0, 0),
        (3, 0, 0),
        (4, 0, 0),
        (0, 1, 0),
        (0, 2, 0),
        (0, 3, 0),
        (0, 0, 1),
        (0, 0, 2),
        (0, 0, 3),
        (0, 0, 4),
        (1, 1, 1),
        (2, 1, 2),
        (1, 2, 1),
        (2, 2, 2),
        (3, 1, 3),
        (1, 3, 2),
        (2, 3, 4),
        (4, 2, 3),
    ];
    combos
        .iter()
        .map(|&(p, j, n)| {
            let f: Integrand = Box::new(move |r: f64, th: f64, z: f64| {
                let zp = if periodic {
                    if n % 2 == 0 {
                        (n as f64 / 2.0 * z).cos()
                    } else {
                        ((n as f64 + 1.0) / 2.0 * z).sin()
                    }
                } else {
                    legendre(n, z)
                };
                (r / r_max).powi(p) * (1.0 + 0.5 * (j as f64 * th + 0.3).cos()) * (1.0 + 0.4 * zp)
            });
            (format!("r^{p} theta{j} z{n}"), f)
        })
        .collect()
}

fn legendre(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for k in 2..=n {
        let k = k as f64;
        let c = ((2.0 * k - 1.0) * x * b - (k - 1.0) * a) / k;
        a = b;
        b = c;
    }
    b
}

/// Dense tensor rule for `∫∫ f(ρ, θ, z) ρ s dθ dF`, split at the polygon vertices.
fn dense_oracle(shape: &StarShape, f: &(dyn Fn(f64, f64, f64) -> f64 + Sync), n: usize) -> f64 {
    let density = shape.domain().density();
    let z_rule = if shape.domain().is_periodic() {
        periodic_trapezoid(n, TAU)
    } else {
        let (lo, hi) = shape.domain().bounds();
        gauss_legendre(n).mapped(lo, hi)
    };
    let theta_panels: Vec<(f64, f64)> = match shape {
        StarShape::Ellipse(_) => vec![(0.0, TAU)],
        StarShape::Polygon(_) => (0..8).map(|q| (q as f64 * PI / 4.0, (q + 1) as f64 * PI / 4.0)).collect(),
    };
    let mut total = 0.0;
    for (lo, hi) in theta_panels {
        let theta_rule = if shape.domain().is_periodic() {
            periodic_trapezoid(n, TAU)
        } else {
            gauss_legendre(n).mapped(lo, hi)
        };
        for (th, wt) in theta_rule.iter() {
            for (z, wz) in z_rule.iter() {
                let ds = shape.surface_sample(th, z).line_element;
                total += wt * wz * density * ds * f(shape.rho(th, z), th, z);
            }
        }
    }
    total
}

fn max_rel_error(shape: &StarShape, grid: &CoareaGrid, oracle_n: usize) -> f64 {
    let periodic = shape.domain().is_periodic();
    integrands(shape.r_max(), periodic)
        .iter()
        .map(|(_, f)| {
            let exact = dense_oracle(shape, f.as_ref(), oracle_n);
            let got = grid.ensemble_integral_real(|r, t, z| f(r, t, z));
            (got - exact).abs() / exact.abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn ellipse_coarea_identity() {
    let s = ellipse_shape(5.0, 1.0).unwrap();
    let errs: Vec<f64> = [(15, 10), (20, 14), (30, 20)]
        .iter()
        .map(|&(m, n)| max_rel_error(&s, &ellipse_grid(&s, m, n).unwrap(), 1000))
        .collect();
    println!("ellipse coarea identity errors {errs:?}");
    assert!(errs[1] < 1e-6);
    assert!(errs[2] < 1e-2 * errs[1] && errs[1] < errs[0]);
}

#[test]
fn octagon_coarea_identity() {
    let s = random_octagon(5.0, 4.0).unwrap();
    let errs: Vec<f64> = [(15, 12), (20, 16), (30, 24)]
        .iter()
        .map(|&(m, n)| max_rel_error(&s, &polygon_grid(&s, m, n).unwrap(), 200))
        .collect();
    println!("octagon coarea identity errors {errs:?}");
    assert!(errs[1] < 1e-6);
    assert!(errs[2] < 1e-2 * errs[1] && errs[1] < errs[0]);
}

/// Adaptive bisection with a 20-point Gauss-Legendre panel rule, used only
/// as an independent 1D oracle.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        gauss_legendre(20).mapped(a, b).integrate(f)
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (panel(f, a, m), panel(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol.max(1e-15 * (l + r).abs()) {
            return l + r;
        }
        rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
    }
    rec(f, a, b, panel(f, a, b), tol, 30)
}

#[test]
fn radial_integrand_matches_adaptive_oracle() {
    // Rotation-invariant g(r): the ensemble integral reduces to
    // ∫ g(ρ(t)) ρ s dt over one fixed ellipse.
    let (a, b) = (5.0, 1.0);
    let s = ellipse_shape(a, b).unwrap();
    let g = |r: f64| (0.3 * r).cos() + r * r / 25.0;
    let oracle = adaptive(
        &|t: f64| {
            let smp = s.surface_sample(t, 0.0);
            g(s.rho(t, 0.0)) * smp.line_element
        },
        0.0,
        TAU,
        1e-13,
    );
    let grid = ellipse_grid(&s, 30, 20).unwrap();
    let got = grid.ensemble_integral_real(|r, _, _| g(r));
    assert!((got - oracle).abs() < 1e-8 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn octagon_segment_weights_match_adaptive_oracle() {
    // Σ spatial weights over one segment = ∫ Δρ(θ)/sin(θ - θ_s) dθ.
    let s = random_octagon(5.0, 4.0).unwrap();
    let grid = polygon_grid(&s, 15, 24).unwrap();
    for q in [1usize, 2] {
        let sum: f64 = grid
            .nodes
            .iter()
            .filter(|n| n.subdomain_id == q)
            .map(|n| n.spatial_weight)
            .sum();
        let (lo, hi) = ((q - 1) as f64 * PI / 4.0, q as f64 * PI / 4.0);
        let stationary = if q % 2 == 1 { lo } else { hi };
        let oracle = adaptive(
            &|t: f64| {
                let ext = (s.rho(t, 1.0) - s.rho(t, -1.0)).abs();
                let d = (t - stationary).sin().abs();
                ext / d
            },
            lo,
            hi,
            1e-13,
        );
        assert!((sum - oracle).abs() < 1e-10 * oracle, "q={q}: {sum} vs {oracle}");
    }
}

#[test]
fn naive_grid_expected_perimeter() {
    let s = ellipse_shape(5.0, 1.0).unwrap();
    let g = naive_grid(&s, 400, 400).unwrap();
    let total: f64 = g.weights.iter().sum();
    let oracle = dense_oracle(&s, &|_, _, _| 1.0, 1000);
    assert!((total - oracle).abs() < 1e-6 * oracle);
}

#[test]
fn linearity_is_exact() {
    let s = random_octagon(5.0, 4.0).unwrap();
    let g = polygon_grid(&s, 6, 5).unwrap();
    let f = |r: f64, t: f64, _z: f64| r * t.cos();
    let h = |_r: f64, _t: f64, z: f64| z * z;
    let lhs = g.ensemble_integral_real(|r, t, z| 2.5 * f(r, t, z) + h(r, t, z));
    let terms: f64 = g
        .points()
        .iter()
        .map(|p| (2.5 * f(p.r, p.theta, p.z) + h(p.r, p.theta, p.z)) * p.weight)
        .sum();
    assert_eq!(lhs, terms);
    let sep = 2.5 * g.ensemble_integral_real(f) + g.ensemble_integral_real(h);
    assert!((lhs - sep).abs() <= 1e-13 * lhs.abs().max(1.0));
}
