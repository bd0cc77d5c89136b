//! Generalized polynomial chaos in the single random parameter.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::coarea::CoareaGrid;
use crate::error::{Error, Result};
use crate::nullfield::{discretize_batch, Functional, ReconstructionKernel, WeightedGridfunction};
use crate::shape::ParameterDomain;

/// Orthogonal basis under the parameter density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpcBasis {
    /// `1, sin z, cos z, sin 2z, cos 2z, ...` under `dα/2π`.
    Fourier,
    /// Legendre polynomials under the uniform density `1/2` on `[-1, 1]`.
    Legendre,
}

impl GpcBasis {
    pub fn for_domain(domain: ParameterDomain) -> Self {
        if domain.is_periodic() {
            GpcBasis::Fourier
        } else {
            GpcBasis::Legendre
        }
    }

    /// `P_n(z)`. Fourier: `cos(⌊n/2⌋z)` for even `n`, `sin(⌊n/2⌋z)` for odd
    /// `n`, with the odd index shifted up one so `n = 1` is `sin z`.
    pub fn eval(&self, n: usize, z: f64) -> f64 {
        match self {
            GpcBasis::Fourier => {
                if n % 2 == 0 {
                    ((n / 2) as f64 * z).cos()
                } else {
                    (n.div_ceil(2) as f64 * z).sin()
                }
            }
            GpcBasis::Legendre => {
                if n == 0 {
                    return 1.0;
                }
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                p1
            }
        }
    }

    /// `γ_n = E[P_n²]`.
    pub fn norm(&self, n: usize) -> f64 {
        match self {
            GpcBasis::Fourier => {
                if n == 0 {
                    1.0
                } else {
                    0.5
                }
            }
            GpcBasis::Legendre => 1.0 / (2 * n + 1) as f64,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GpcBasis::Fourier => "fourier",
            GpcBasis::Legendre => "legendre",
        }
    }
}

/// `(2μ + 1)(N + 1)` target gridfunctions, ordered by `m` then `n`.
pub fn build_targets(
    grid: &CoareaGrid,
    basis: GpcBasis,
    kappa: f64,
    mu: usize,
    order: usize,
) -> Result<Vec<WeightedGridfunction>> {
    let functionals = target_list(basis, kappa, mu, order);
    discretize_batch(grid, &functionals)
}

pub fn target_list(basis: GpcBasis, kappa: f64, mu: usize, order: usize) -> Vec<Functional> {
    let mu = mu as i32;
    (-mu..=mu)
        .flat_map(|m| (0..=order).map(move |n| Functional::target(m, n, kappa, basis)))
        .collect()
}

/// Expansion coefficients `b_{m,n}` for `m = -μ..=μ`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcTable {
    pub mu: usize,
    pub order: usize,
    pub basis: GpcBasis,
    /// Row-major over `(m, n)`.
    pub coefficients: Vec<Complex64>,
    pub satisfied: Vec<bool>,
    /// `key=value` pairs written into the CSV header.
    pub metadata: Vec<(String, String)>,
}

impl GpcTable {
    fn index(&self, m: i32, n: usize) -> usize {
        (m + self.mu as i32) as usize * (self.order + 1) + n
    }

    pub fn get(&self, m: i32, n: usize) -> Complex64 {
        self.coefficients[self.index(m, n)]
    }

    pub fn is_satisfied(&self, m: i32, n: usize) -> bool {
        self.satisfied[self.index(m, n)]
    }

    /// Expectations `E[b_m]`, the `n = 0` column.
    pub fn expectation(&self) -> Vec<Complex64> {
        let mu = self.mu as i32;
        (-mu..=mu).map(|m| self.get(m, 0)).collect()
    }

    pub fn n_unsatisfied(&self) -> usize {
        self.satisfied.iter().filter(|s| !**s).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("m,n,re,im,satisfied\n");
        let mu = self.mu as i32;
        for m in -mu..=mu {
            for n in 0..=self.order {
                let b = self.get(m, n);
                let _ = writeln!(out, "{m},{n},{},{},{}", b.re, b.im, self.is_satisfied(m, n));
            }
        }
        out
    }
}

/// `b_{m,n} = Σ_ℓ ĉ_{(m,n),ℓ} a_ℓ`.
pub fn estimate(
    kernel: &ReconstructionKernel,
    outcomes: &[Complex64],
    basis: GpcBasis,
    mu: usize,
    order: usize,
) -> Result<GpcTable> {
    let rows = (2 * mu + 1) * (order + 1);
    if kernel.n_targets() != rows {
        return Err(Error::Dimension {
            expected: rows,
            found: kernel.n_targets(),
        });
    }
    if kernel.n_sources() != outcomes.len() {
        return Err(Error::Dimension {
            expected: kernel.n_sources(),
            found: outcomes.len(),
        });
    }
    let coefficients = (0..rows)
        .map(|t| {
            kernel
                .row(t)
                .iter()
                .zip(outcomes)
                .map(|(c, a)| c * a)
                .sum()
        })
        .collect();
    Ok(GpcTable {
        mu,
        order,
        basis,
        coefficients,
        satisfied: kernel.satisfied.clone(),
        metadata: vec![
            ("basis".into(), basis.name().into()),
            ("bound".into(), kernel.bound.to_string()),
            ("n_unsatisfied".into(), kernel.satisfied.iter().filter(|s| !**s).count().to_string()),
        ],
    })
}

/// `b_m(z) ≈ Σ_n b_{m,n} P_n(z)` for `m = -μ..=μ`.
pub fn evaluate_expansion(table: &GpcTable, z: f64) -> Vec<Complex64> {
    let mu = table.mu as i32;
    (-mu..=mu)
        .map(|m| {
            (0..=table.order)
                .map(|n| table.get(m, n) * table.basis.eval(n, z))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_legendre, periodic_trapezoid};
    use std::f64::consts::TAU;

    #[test]
    fn orthogonality() {
        for (basis, rule, density) in [
            (GpcBasis::Fourier, periodic_trapezoid(512, TAU), 1.0 / TAU),
            (GpcBasis::Legendre, gauss_legendre(512), 0.5),
        ] {
            let mut worst: f64 = 0.0;
            for n in 0..12 {
                for k in 0..12 {
                    let ip = rule.integrate(|z| basis.eval(n, z) * basis.eval(k, z)) * density;
                    let want = if n == k { basis.norm(n) } else { 0.0 };
                    worst = worst.max((ip - want).abs() / (basis.norm(n) * basis.norm(k)).sqrt());
                }
            }
            assert!(worst < 1e-10, "{basis:?}: {worst}");
        }
    }

    #[test]
    fn fourier_pattern() {
        let b = GpcBasis::Fourier;
        let z = 0.7;
        assert_eq!(b.eval(0, z), 1.0);
        assert!((b.eval(1, z) - z.sin()).abs() < 1e-15);
        assert!((b.eval(2, z) - z.cos()).abs() < 1e-15);
        assert!((b.eval(3, z) - (2.0 * z).sin()).abs() < 1e-15);
        assert!((b.eval(4, z) - (2.0 * z).cos()).abs() < 1e-15);
        for n in 0..6 {
            assert!((b.eval(n, z) - b.eval(n, z + TAU)).abs() < 1e-14);
        }
    }

    #[test]
    fn legendre_values() {
        let b = GpcBasis::Legendre;
        assert!((b.eval(2, 0.5) - (-0.125)).abs() < 1e-15);
        assert!((b.eval(3, 1.0) - 1.0).abs() < 1e-15);
        assert!((b.norm(2) - 0.2).abs() < 1e-16);
    }

    #[test]
    fn target_count() {
        assert_eq!(target_list(GpcBasis::Fourier, 1.0, 15, 3).len(), 31 * 4);
    }
}
