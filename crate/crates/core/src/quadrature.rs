//! One-dimensional quadrature rules.

use std::f64::consts::PI;

/// Nodes and positive weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine map of a rule on `[-1, 1]` onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Rule {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        Rule {
            nodes: self.nodes.iter().map(|t| mid + half * t).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    // P'_n = n (x P_n - P_{n-1}) / (x^2 - 1), valid off the endpoints.
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Weights are `2 / ((1 - x²) P'_n(x)²)`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, refined by Newton.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Chebyshev-Gauss rule for `∫_{-1}^{1} f(σ) / sqrt(1 - σ²) dσ`, nodes in the
/// classical order `σ_i = cos((2i - 1)π / 2n)`, all weights `π / n`.
pub fn chebyshev_gauss(n: usize) -> Rule {
    assert!(n >= 1, "Chebyshev-Gauss needs at least one node");
    let nf = n as f64;
    Rule {
        nodes: (1..=n)
            .map(|i| ((2.0 * i as f64 - 1.0) * PI / (2.0 * nf)).cos())
            .collect(),
        weights: vec![PI / nf; n],
    }
}

/// Periodic trapezoid rule on `[0, period)` with nodes `period·j/n`.
pub fn periodic_trapezoid(n: usize, period: f64) -> Rule {
    assert!(n >= 1, "trapezoid needs at least one node");
    let h = period / n as f64;
    Rule {
        nodes: (0..n).map(|j| h * j as f64).collect(),
        weights: vec![h; n],
    }
}

/// Closed composite trapezoid on `[lo, hi]`; a single node is the midpoint rule.
pub fn closed_trapezoid(n: usize, lo: f64, hi: f64) -> Rule {
    assert!(n >= 1, "trapezoid needs at least one node");
    if n == 1 {
        return Rule {
            nodes: vec![0.5 * (lo + hi)],
            weights: vec![hi - lo],
        };
    }
    let h = (hi - lo) / (n - 1) as f64;
    let mut weights = vec![h; n];
    weights[0] *= 0.5;
    weights[n - 1] *= 0.5;
    Rule {
        nodes: (0..n).map(|j| lo + h * j as f64).collect(),
        weights,
    }
}
