//! Brute-force reference path: one null-field solve per realization on a
//! dense surface rule, averaged over random parameter draws.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gpc::GpcTable;
use crate::nullfield::{nullfield_rhs_batch, solve_kernel, SourceLayout, SurfaceRule, WeightedGridfunction, FunctionalKind};
use crate::par;
use crate::shape::{ParameterDomain, StarShape};
use crate::specfun::{outgoing_multipoles, truncation_order, CylinderSeq, FieldSample};

pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha), seed_from_u64 + per-sample stream";
pub const SAMPLING: &str = "stratified";

/// Settings of a single-realization solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSetup {
    pub kappa: f64,
    pub sources: usize,
    pub multipole_order: usize,
    pub radial_factor: f64,
    pub angle_offset: f64,
    pub eps_ev: f64,
    pub eps_ed: f64,
    pub mu: Option<usize>,
    pub rule: SurfaceRule,
}

impl OracleSetup {
    pub fn new(kappa: f64, sources: usize) -> Self {
        Self {
            kappa,
            sources,
            multipole_order: 1,
            radial_factor: 0.95,
            angle_offset: 0.0,
            eps_ev: 1e-4,
            eps_ed: 1e-8,
            mu: None,
            rule: dense_rule(),
        }
    }

    pub fn mu(&self, shape: &StarShape) -> usize {
        self.mu.unwrap_or_else(|| truncation_order(self.kappa, shape.r_max()))
    }
}

/// Eight 20-point Gauss-Legendre panels per polygon side, 512 trapezoid
/// points on smooth boundaries.
pub fn dense_rule() -> SurfaceRule {
    SurfaceRule {
        smooth_points: 512,
        panels_per_segment: 8,
        points_per_panel: 20,
    }
}

/// `b_m(z)` for `m = -μ..=μ` on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSolve {
    pub z: f64,
    pub coefficients: Vec<Complex64>,
    pub n_unsatisfied: usize,
    pub max_relative_residual: f64,
}

pub fn solve_realization(shape: &Arc<StarShape>, z: f64, setup: &OracleSetup) -> Result<RealizationSolve> {
    let domain = shape.domain();
    let (lo, hi) = domain.bounds();
    if !domain.is_periodic() && !(lo..=hi).contains(&z) {
        return Err(Error::Parameter(format!("parameter {z} outside [{lo}, {hi}]")));
    }
    let mut layout = SourceLayout::new(shape.clone(), setup.sources, setup.multipole_order)?;
    layout.radial_factor = setup.radial_factor;
    layout.angle_offset = setup.angle_offset;
    layout.validate()?;

    let mu = setup.mu(shape);
    let kappa = setup.kappa;
    let big_p = setup.multipole_order;
    let np = 2 * big_p + 1;
    let centers: Vec<[f64; 2]> = (0..layout.count).map(|l| layout.center(l, z)).collect();
    let angular = setup.rule.angular_rule(shape);

    let rows = par::try_map_range(angular.len(), |i| {
        let (th, w) = (angular.nodes[i], angular.weights[i]);
        let smp = shape.surface_sample(th, z);
        let sw = (w * smp.line_element).sqrt();
        let r = smp.position[0].hypot(smp.position[1]);
        let phi = smp.position[1].atan2(smp.position[0]);
        let seq = CylinderSeq::new(mu, kappa * r, false)?;
        let mut targets = Vec::with_capacity(2 * mu + 1);
        for m in -(mu as i32)..=mu as i32 {
            let g = Complex64::new(0.0, 0.25) * seq.j(m) * Complex64::from_polar(1.0, -(m as f64) * phi);
            targets.push(g * sw);
        }
        let mut sources = Vec::with_capacity(centers.len() * np);
        let mut buf = vec![FieldSample::zero(); np];
        for c in &centers {
            outgoing_multipoles(big_p, kappa, smp.position, *c, &mut buf)?;
            sources.extend(buf.iter().map(|f| f.value * sw));
        }
        Ok::<_, Error>((targets, sources))
    })?;

    let targets: Vec<WeightedGridfunction> = (0..2 * mu + 1)
        .map(|t| WeightedGridfunction {
            kind: FunctionalKind::Target {
                m: t as i32 - mu as i32,
                n: 0,
            },
            entries: rows.iter().map(|row| row.0[t]).collect(),
        })
        .collect();
    let sources: Vec<WeightedGridfunction> = (0..centers.len() * np)
        .map(|s| WeightedGridfunction {
            kind: FunctionalKind::Other,
            entries: rows.iter().map(|row| row.1[s]).collect(),
        })
        .collect();

    let kernel = solve_kernel(&targets, &sources, setup.eps_ev, setup.eps_ed)?;
    let rhs = nullfield_rhs_batch(&layout, z, kappa, &setup.rule)?;
    let coefficients = (0..kernel.n_targets())
        .map(|t| kernel.row(t).iter().zip(&rhs).map(|(c, a)| c * a).sum())
        .collect();
    Ok(RealizationSolve {
        z,
        coefficients,
        n_unsatisfied: kernel.n_unsatisfied(),
        max_relative_residual: kernel.max_relative_residual(),
    })
}

/// Sample mean of `b_m` with a 95% normal-approximation half width.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mu: usize,
    pub mean: Vec<Complex64>,
    pub half_width: Vec<f64>,
    pub n_samples: usize,
    pub n_unsatisfied: usize,
}

impl McEstimate {
    pub fn from_samples(mu: usize, samples: &[Vec<Complex64>]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Parameter(format!("need at least two samples, got {n}")));
        }
        let width = 2 * mu + 1;
        if let Some(bad) = samples.iter().find(|s| s.len() != width) {
            return Err(Error::Dimension {
                expected: width,
                found: bad.len(),
            });
        }
        let nf = n as f64;
        let mean: Vec<Complex64> = (0..width)
            .map(|m| samples.iter().map(|s| s[m]).sum::<Complex64>() / nf)
            .collect();
        let half_width = (0..width)
            .map(|m| {
                let var = samples.iter().map(|s| (s[m] - mean[m]).norm_sqr()).sum::<f64>() / (nf - 1.0);
                1.96 * var.sqrt() / nf.sqrt()
            })
            .collect();
        Ok(Self {
            mu,
            mean,
            half_width,
            n_samples: n,
            n_unsatisfied: 0,
        })
    }

    pub fn get(&self, m: i32) -> Complex64 {
        self.mean[(m + self.mu as i32) as usize]
    }
}

/// Draw `i` of `n`: uniform within the `i`-th of `n` equal-probability strata,
/// from its own ChaCha20 stream so the sample set does not depend on how
/// realizations are scheduled.
pub fn draw_parameter(domain: ParameterDomain, seed: u64, i: usize, n: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let u: f64 = rng.gen();
    let (lo, hi) = domain.bounds();
    lo + (hi - lo) * (i as f64 + u) / n as f64
}

pub fn monte_carlo(shape: &Arc<StarShape>, setup: &OracleSetup, n_samples: usize, seed: u64) -> Result<McEstimate> {
    if n_samples < 2 {
        return Err(Error::Parameter(format!("need at least two samples, got {n_samples}")));
    }
    let domain = shape.domain();
    let results = par::map_range(n_samples, |i| {
        let z = draw_parameter(domain, seed, i, n_samples);
        solve_realization(shape, z, setup).map_err(|e| Error::AtParameter { z, source: Box::new(e) })
    });
    let mut ok = Vec::with_capacity(n_samples);
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(sol) => ok.push(sol),
            Err(e) => failed.push(e),
        }
    }
    if failed.len() * 100 > n_samples {
        return Err(Error::Realizations {
            failed: failed.len(),
            total: n_samples,
            first: Box::new(failed.swap_remove(0)),
        });
    }
    let samples: Vec<Vec<Complex64>> = ok.iter().map(|r| r.coefficients.clone()).collect();
    let mut est = McEstimate::from_samples(setup.mu(shape), &samples)?;
    est.n_unsatisfied = ok.iter().filter(|r| r.n_unsatisfied > 0).count();
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub m: i32,
    pub exact: Complex64,
    pub approx: Complex64,
    pub abs_err: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub tolerance: f64,
}

impl Comparison {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_err).fold(0.0, f64::max)
    }

    /// Every error within its half width plus the tolerance.
    pub fn within_interval(&self) -> bool {
        self.rows.iter().all(|r| r.abs_err <= r.half_width + self.tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,re_exact,im_exact,re_approx,im_approx,abs_err,half_width\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.m, r.exact.re, r.exact.im, r.approx.re, r.approx.im, r.abs_err, r.half_width
            );
        }
        out
    }
}

/// Per-mode comparison of the Monte Carlo mean with the table's `n = 0` column
/// over the modes both cover.
pub fn compare(mc: &McEstimate, table: &GpcTable, tolerance: f64) -> Comparison {
    let mu = mc.mu.min(table.mu) as i32;
    let rows = (-mu..=mu)
        .map(|m| {
            let exact = mc.get(m);
            let approx = table.get(m, 0);
            ComparisonRow {
                m,
                exact,
                approx,
                abs_err: (exact - approx).norm(),
                half_width: mc.half_width[(m + mc.mu as i32) as usize],
            }
        })
        .collect();
    Comparison { rows, tolerance }
}
