//! Weighted gridfunctions, reconstruction kernels and null-field outcomes.
//!
//! For a sound-soft obstacle the surface density `h = ∂u/∂ν` (normal pointing
//! into the obstacle) pairs with any outgoing wave `ψ` singular inside the
//! obstacle to give `∮ ψ h dS = ∮ (u_inc ∂_out ψ - ψ ∂_out u_inc) dS`. The
//! scattering coefficients are the pairings with `(i/4) J_m(κr) e^{-imθ}`.
//! Approximating a target by combinations of such sources in the ensemble
//! `L²(dS dF)` norm turns known source pairings into target estimates.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::{Arc, Once};

use faer::{Mat, Par};
use num_complex::Complex64;

use crate::coarea::CoareaGrid;
use crate::error::{Error, Result};
use crate::gpc::GpcBasis;
use crate::par;
use crate::quadrature::{gauss_legendre, periodic_trapezoid, Rule};
use crate::shape::StarShape;
use crate::specfun::{outgoing_multipoles, plane_wave, CylinderSeq, FieldSample};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Placement of the information sources: `L` centers at
/// `r_ℓ(z) = factor·ρ(θ_ℓ; z)(cos θ_ℓ, sin θ_ℓ)`, `θ_ℓ = offset + 2πℓ/L`, each
/// carrying multipoles `|p| ≤ P`, optionally modulated by `P_k(z)`, `k ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceLayout {
    pub shape: Arc<StarShape>,
    pub count: usize,
    pub radial_factor: f64,
    pub angle_offset: f64,
    pub multipole_order: usize,
    pub modulation_order: usize,
    pub basis: GpcBasis,
}

impl SourceLayout {
    pub fn new(shape: Arc<StarShape>, count: usize, multipole_order: usize) -> Result<Self> {
        let basis = GpcBasis::for_domain(shape.domain());
        let layout = Self {
            shape,
            count,
            radial_factor: 0.95,
            angle_offset: 0.0,
            multipole_order,
            modulation_order: 0,
            basis,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Parameter("need at least one information source".into()));
        }
        if !(self.radial_factor > 0.0 && self.radial_factor < 1.0) {
            return Err(Error::Parameter(format!(
                "source radial factor must lie in (0, 1), got {}",
                self.radial_factor
            )));
        }
        Ok(())
    }

    pub fn angle(&self, l: usize) -> f64 {
        self.angle_offset + TAU * l as f64 / self.count as f64
    }

    pub fn center(&self, l: usize, z: f64) -> [f64; 2] {
        let th = self.angle(l);
        let r = self.radial_factor * self.shape.rho(th, z);
        [r * th.cos(), r * th.sin()]
    }

    fn per_center(&self) -> usize {
        (2 * self.multipole_order + 1) * (self.modulation_order + 1)
    }

    /// Number of information functionals.
    pub fn len(&self) -> usize {
        self.count * self.per_center()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column index of source `(ℓ, p, k)`.
    pub fn index(&self, l: usize, p: i32, k: usize) -> usize {
        let pp = (p + self.multipole_order as i32) as usize;
        (l * (2 * self.multipole_order + 1) + pp) * (self.modulation_order + 1) + k
    }

    pub fn functionals(&self, kappa: f64) -> Vec<Functional> {
        let big_p = self.multipole_order as i32;
        let shared = Arc::new(self.clone());
        let mut out = Vec::with_capacity(self.len());
        for l in 0..self.count {
            for p in -big_p..=big_p {
                for k in 0..=self.modulation_order {
                    out.push(Functional::InfoSource {
                        l,
                        p,
                        k,
                        kappa,
                        layout: shared.clone(),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Target { m: i32, n: usize },
    InfoSource { l: usize, p: i32, k: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `(i/4) J_m(κ|r|) e^{-imθ} P_n(z)/γ_n`.
    Target { m: i32, n: usize, kappa: f64, basis: GpcBasis },
    /// `H_p(κ|r - r_ℓ(z)|) e^{ip∢(r - r_ℓ(z))} P_k(z)`.
    InfoSource { l: usize, p: i32, k: usize, kappa: f64, layout: Arc<SourceLayout> },
}

impl Functional {
    pub fn target(m: i32, n: usize, kappa: f64, basis: GpcBasis) -> Self {
        Functional::Target { m, n, kappa, basis }
    }

    pub fn kind(&self) -> FunctionalKind {
        match *self {
            Functional::Target { m, n, .. } => FunctionalKind::Target { m, n },
            Functional::InfoSource { l, p, k, .. } => FunctionalKind::InfoSource { l, p, k },
        }
    }

    pub fn eval(&self, r: f64, theta: f64, z: f64) -> Result<Complex64> {
        match self {
            Functional::Target { m, n, kappa, basis } => {
                let seq = CylinderSeq::new(m.unsigned_abs() as usize, kappa * r, false)?;
                Ok(target_value(*m, *n, theta, z, seq.j(*m), *basis))
            }
            Functional::InfoSource { l, p, k, kappa, layout } => {
                let x = [r * theta.cos(), r * theta.sin()];
                let center = layout.center(*l, z);
                let fs = source_field(*p, *kappa, x, center)?;
                Ok(fs.value * layout.basis.eval(*k, z))
            }
        }
    }
}

fn target_value(m: i32, n: usize, theta: f64, z: f64, j: f64, basis: GpcBasis) -> Complex64 {
    0.25 * I * j * Complex64::from_polar(1.0, -(m as f64) * theta) * basis.eval(n, z) / basis.norm(n)
}

fn source_field(p: i32, kappa: f64, x: [f64; 2], center: [f64; 2]) -> Result<FieldSample> {
    let order = p.unsigned_abs() as usize;
    let mut buf = vec![FieldSample::zero(); 2 * order + 1];
    outgoing_multipoles(order, kappa, x, center, &mut buf)?;
    Ok(buf[(p + order as i32) as usize])
}

/// A functional sampled on a grid, scaled by square-root cubature weights so
/// that plain dot products approximate ensemble inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGridfunction {
    pub kind: FunctionalKind,
    pub entries: Vec<Complex64>,
}

impl WeightedGridfunction {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ conj(self)·other`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn discretize(grid: &CoareaGrid, functional: &Functional) -> Result<WeightedGridfunction> {
    let entries = par::try_map_range(grid.len(), |i| {
        let p = grid.points()[i];
        Ok(functional.eval(p.r, p.theta, p.z)? * p.weight.sqrt())
    })?;
    Ok(WeightedGridfunction {
        kind: functional.kind(),
        entries,
    })
}

/// Discretize many functionals at once, sharing Bessel sequences and
/// multipole expansions between functionals at each cubature point.
pub fn discretize_batch(grid: &CoareaGrid, functionals: &[Functional]) -> Result<Vec<WeightedGridfunction>> {
    let max_target = functionals
        .iter()
        .filter_map(|f| match f {
            Functional::Target { m, .. } => Some(m.unsigned_abs() as usize),
            _ => None,
        })
        .max();
    let target_kappa = functionals.iter().find_map(|f| match f {
        Functional::Target { kappa, .. } => Some(*kappa),
        _ => None,
    });
    let rows = par::try_map_range(grid.len(), |i| {
        let pt = grid.points()[i];
        let sw = pt.weight.sqrt();
        let seq = match (max_target, target_kappa) {
            (Some(order), Some(kappa)) => Some(CylinderSeq::new(order, kappa * pt.r, false)?),
            _ => None,
        };
        let x = [pt.r * pt.theta.cos(), pt.r * pt.theta.sin()];
        // Multipoles per source center, filled on first use.
        let mut cache: Vec<(usize, Vec<FieldSample>)> = Vec::new();
        let mut row = Vec::with_capacity(functionals.len());
        for f in functionals {
            let v = match f {
                Functional::Target { m, n, kappa, basis } => {
                    let j = match (&seq, target_kappa) {
                        (Some(s), Some(k0)) if k0 == *kappa => s.j(*m),
                        _ => CylinderSeq::new(m.unsigned_abs() as usize, kappa * pt.r, false)?.j(*m),
                    };
                    target_value(*m, *n, pt.theta, pt.z, j, *basis)
                }
                Functional::InfoSource { l, p, k, kappa, layout } => {
                    let big_p = layout.multipole_order;
                    let slot = match cache.iter().position(|(key, _)| key == l) {
                        Some(s) => s,
                        None => {
                            let mut buf = vec![FieldSample::zero(); 2 * big_p + 1];
                            outgoing_multipoles(big_p, *kappa, x, layout.center(*l, pt.z), &mut buf)?;
                            cache.push((*l, buf));
                            cache.len() - 1
                        }
                    };
                    cache[slot].1[(p + big_p as i32) as usize].value * layout.basis.eval(*k, pt.z)
                }
            };
            row.push(v * sw);
        }
        Ok::<_, Error>(row)
    })?;
    Ok(functionals
        .iter()
        .enumerate()
        .map(|(c, f)| WeightedGridfunction {
            kind: f.kind(),
            entries: rows.iter().map(|row| row[c]).collect(),
        })
        .collect())
}

/// Per-target kernel coefficients with residuals and the bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionKernel {
    /// Row-major, targets × sources.
    pub coefficients: Vec<Complex64>,
    pub labels: Vec<FunctionalKind>,
    pub residual_norms: Vec<f64>,
    pub target_norms: Vec<f64>,
    pub bound: f64,
    pub eps_ev: f64,
    pub satisfied: Vec<bool>,
    pub rank: usize,
    n_sources: usize,
}

impl ReconstructionKernel {
    pub fn n_targets(&self) -> usize {
        self.labels.len()
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.coefficients[t * self.n_sources..(t + 1) * self.n_sources]
    }

    pub fn relative_residual(&self, t: usize) -> f64 {
        if self.target_norms[t] == 0.0 {
            self.residual_norms[t]
        } else {
            self.residual_norms[t] / self.target_norms[t]
        }
    }

    pub fn max_abs_coefficient(&self, t: usize) -> f64 {
        self.row(t).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `‖G - Ĝ‖_F` over all targets.
    pub fn frobenius_error(&self) -> f64 {
        self.residual_norms.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    pub fn max_relative_residual(&self) -> f64 {
        (0..self.n_targets()).map(|t| self.relative_residual(t)).fold(0.0, f64::max)
    }

    pub fn n_unsatisfied(&self) -> usize {
        self.satisfied.iter().filter(|s| !**s).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target_m,target_n,residual,satisfied,max_abs_coefficient\n");
        for t in 0..self.n_targets() {
            let (m, n) = match self.labels[t] {
                FunctionalKind::Target { m, n } => (m.to_string(), n.to_string()),
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{m},{n},{},{},{}",
                self.residual_norms[t],
                self.satisfied[t],
                self.max_abs_coefficient(t)
            );
        }
        out
    }
}

static SEQUENTIAL_FAER: Once = Once::new();

/// faer's own threading is disabled so results do not depend on the pool.
fn sequential_linear_algebra() {
    SEQUENTIAL_FAER.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Truncated SVD of the column-equilibrated matrix `A D`, `D = diag(1/‖a_j‖)`.
/// Without the scaling, high-order multipoles at small `κR` dominate `σ_max`
/// and the relative cut removes every low-order direction.
struct TruncatedSvd {
    u: Mat<Complex64>,
    v: Mat<Complex64>,
    sigma: Vec<f64>,
    scale: Vec<f64>,
}

impl TruncatedSvd {
    fn new(a: &Mat<Complex64>, eps_ed: f64) -> Result<Self> {
        if a.ncols() == 0 {
            return Ok(Self {
                u: Mat::zeros(a.nrows(), 0),
                v: Mat::zeros(0, 0),
                sigma: Vec::new(),
                scale: Vec::new(),
            });
        }
        let scale: Vec<f64> = (0..a.ncols())
            .map(|j| {
                let n = (0..a.nrows()).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
                if n > 0.0 && n.is_finite() {
                    1.0 / n
                } else {
                    1.0
                }
            })
            .collect();
        let scaled = Mat::<Complex64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * scale[j]);
        let svd = scaled.thin_svd().map_err(|_| Error::Svd)?;
        let s = svd.S().column_vector();
        let all: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
        let smax = all.first().copied().unwrap_or(0.0);
        let rank = all.iter().take_while(|&&x| x > eps_ed * smax && x > 0.0).count();
        Ok(Self {
            u: svd.U().subcols(0, rank).to_owned(),
            v: svd.V().subcols(0, rank).to_owned(),
            sigma: all[..rank].to_vec(),
            scale,
        })
    }

    /// Minimum-norm (in the scaled variables) least-squares solutions for
    /// every column of `b`.
    fn solve(&self, b: &Mat<Complex64>) -> Mat<Complex64> {
        let mut proj = self.u.adjoint() * b;
        for (i, s) in self.sigma.iter().enumerate() {
            for j in 0..proj.ncols() {
                proj[(i, j)] /= *s;
            }
        }
        let mut x = &self.v * &proj;
        for (i, d) in self.scale.iter().enumerate() {
            for j in 0..x.ncols() {
                x[(i, j)] *= *d;
            }
        }
        x
    }
}

/// Bounded least squares by truncated SVD, box clipping and one re-solve on
/// the unclipped coefficients.
pub fn solve_kernel(
    targets: &[WeightedGridfunction],
    sources: &[WeightedGridfunction],
    eps_ev: f64,
    eps_ed: f64,
) -> Result<ReconstructionKernel> {
    if !(eps_ed > 0.0 && eps_ev >= eps_ed) {
        return Err(Error::Parameter(format!(
            "thresholds need eps_ev >= eps_ed > 0, got eps_ev={eps_ev}, eps_ed={eps_ed}"
        )));
    }
    sequential_linear_algebra();
    let n = targets
        .first()
        .or(sources.first())
        .map(|g| g.len())
        .unwrap_or(0);
    for g in targets.iter().chain(sources) {
        if g.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: g.len(),
            });
        }
    }
    let bound = eps_ev / eps_ed;
    let ns = sources.len();
    let a = Mat::<Complex64>::from_fn(n, ns, |i, j| sources[j].entries[i]);
    let g = Mat::<Complex64>::from_fn(n, targets.len(), |i, j| targets[j].entries[i]);
    let svd = TruncatedSvd::new(&a, eps_ed)?;
    let c_all = svd.solve(&g);

    let mut coefficients = Vec::with_capacity(targets.len() * ns);
    for t in 0..targets.len() {
        let mut c: Vec<Complex64> = (0..ns).map(|j| c_all[(j, t)]).collect();
        if c.iter().any(|x| x.norm() > bound) {
            c = clip_and_resolve(&a, &targets[t].entries, c, bound, eps_ed)?;
        }
        coefficients.extend(c);
    }

    let c_mat = Mat::<Complex64>::from_fn(ns, targets.len(), |j, t| coefficients[t * ns + j]);
    let approx = &a * &c_mat;
    let residual_norms: Vec<f64> = (0..targets.len())
        .map(|t| {
            (0..n)
                .map(|i| (g[(i, t)] - approx[(i, t)]).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let target_norms: Vec<f64> = targets.iter().map(|t| t.norm()).collect();
    let satisfied = residual_norms
        .iter()
        .zip(&target_norms)
        .map(|(r, g)| *r <= eps_ev * g)
        .collect();
    Ok(ReconstructionKernel {
        coefficients,
        labels: targets.iter().map(|t| t.kind).collect(),
        residual_norms,
        target_norms,
        bound,
        eps_ev,
        satisfied,
        rank: svd.sigma.len(),
        n_sources: ns,
    })
}

fn clip(c: Complex64, bound: f64) -> Complex64 {
    let r = c.norm();
    if r > bound {
        c * (bound / r)
    } else {
        c
    }
}

fn clip_and_resolve(
    a: &Mat<Complex64>,
    g: &[Complex64],
    c: Vec<Complex64>,
    bound: f64,
    eps_ed: f64,
) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let fixed: Vec<bool> = c.iter().map(|x| x.norm() > bound).collect();
    let mut out: Vec<Complex64> = c.iter().map(|&x| clip(x, bound)).collect();
    let free: Vec<usize> = (0..c.len()).filter(|&j| !fixed[j]).collect();
    if free.is_empty() {
        return Ok(out);
    }
    let rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| {
        let mut v = g[i];
        for (j, &f) in fixed.iter().enumerate() {
            if f {
                v -= a[(i, j)] * out[j];
            }
        }
        v
    });
    let sub = Mat::<Complex64>::from_fn(n, free.len(), |i, k| a[(i, free[k])]);
    let sol = TruncatedSvd::new(&sub, eps_ed)?.solve(&rhs);
    for (k, &j) in free.iter().enumerate() {
        out[j] = clip(sol[(k, 0)], bound);
    }
    Ok(out)
}

/// Angular quadrature on a single realization of the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRule {
    /// Trapezoid points for smooth boundaries.
    pub smooth_points: usize,
    /// Gauss-Legendre panels per polygon segment.
    pub panels_per_segment: usize,
    pub points_per_panel: usize,
}

impl Default for SurfaceRule {
    fn default() -> Self {
        Self {
            smooth_points: 1024,
            panels_per_segment: 4,
            points_per_panel: 20,
        }
    }
}

impl SurfaceRule {
    /// Nodes `θ` and weights `dθ` covering one turn.
    pub fn angular_rule(&self, shape: &StarShape) -> Rule {
        match shape {
            StarShape::Ellipse(_) => periodic_trapezoid(self.smooth_points, TAU),
            StarShape::Polygon(p) => {
                let base = gauss_legendre(self.points_per_panel);
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for k in 0..p.vertex_count() {
                    let seg = p.segment_by_index(k);
                    let h = (seg.theta_hi - seg.theta_lo) / self.panels_per_segment as f64;
                    for j in 0..self.panels_per_segment {
                        let lo = seg.theta_lo + h * j as f64;
                        let panel = base.mapped(lo, lo + h);
                        nodes.extend(panel.nodes.iter().map(|&t| crate::shape::wrap_angle(t)));
                        weights.extend(panel.weights);
                    }
                }
                Rule { nodes, weights }
            }
        }
    }
}

/// Parameter rule for the outcomes `a_ℓ = ∫ rhs(z) dF`; weights include the density.
pub fn parameter_rule(shape: &StarShape, n: usize) -> Rule {
    if shape.is_deterministic() {
        return Rule {
            nodes: vec![shape.domain().bounds().0],
            weights: vec![1.0],
        };
    }
    let domain = shape.domain();
    let density = domain.density();
    let rule = if domain.is_periodic() {
        periodic_trapezoid(n, TAU)
    } else {
        let (lo, hi) = domain.bounds();
        gauss_legendre(n).mapped(lo, hi)
    };
    Rule {
        nodes: rule.nodes,
        weights: rule.weights.iter().map(|w| w * density).collect(),
    }
}

fn check_inside(shape: &StarShape, point: [f64; 2], z: f64) -> Result<()> {
    let r = point[0].hypot(point[1]);
    let th = crate::shape::wrap_angle(point[1].atan2(point[0]));
    if r >= shape.rho(th, z) {
        return Err(Error::Placement { point, z });
    }
    Ok(())
}

/// `∮ (u_inc ∂_out ψ - ψ ∂_out u_inc) dS` on the realization `z`: the pairing
/// of `ψ` with the surface density for the inward normal.
pub fn nullfield_rhs(
    shape: &StarShape,
    z: f64,
    source: &Functional,
    kappa: f64,
    rule: &SurfaceRule,
) -> Result<Complex64> {
    let Functional::InfoSource { l, p, k, layout, .. } = source else {
        return Err(Error::Parameter("null-field pairing needs an information source".into()));
    };
    let center = layout.center(*l, z);
    check_inside(shape, center, z)?;
    let angular = rule.angular_rule(shape);
    let mut acc = Complex64::new(0.0, 0.0);
    for (th, w) in angular.iter() {
        let smp = shape.surface_sample(th, z);
        let inc = plane_wave(kappa, smp.position);
        let psi = source_field(*p, kappa, smp.position, center)?;
        let nu = smp.unit_outward_normal;
        acc += (inc.value * psi.normal_derivative(nu) - psi.value * inc.normal_derivative(nu))
            * (w * smp.line_element);
    }
    Ok(acc * layout.basis.eval(*k, z))
}

/// Unmodulated pairings for every center and multipole at one realization,
/// ordered `(ℓ, p)`.
pub fn nullfield_rhs_batch(
    layout: &SourceLayout,
    z: f64,
    kappa: f64,
    rule: &SurfaceRule,
) -> Result<Vec<Complex64>> {
    let shape = layout.shape.as_ref();
    let big_p = layout.multipole_order;
    let np = 2 * big_p + 1;
    let centers: Vec<[f64; 2]> = (0..layout.count).map(|l| layout.center(l, z)).collect();
    for c in &centers {
        check_inside(shape, *c, z)?;
    }
    let angular = rule.angular_rule(shape);
    let mut acc = vec![Complex64::new(0.0, 0.0); layout.count * np];
    let mut buf = vec![FieldSample::zero(); np];
    for (th, w) in angular.iter() {
        let smp = shape.surface_sample(th, z);
        let inc = plane_wave(kappa, smp.position);
        let nu = smp.unit_outward_normal;
        let d_inc = inc.normal_derivative(nu);
        let ws = w * smp.line_element;
        for (l, c) in centers.iter().enumerate() {
            outgoing_multipoles(big_p, kappa, smp.position, *c, &mut buf)?;
            for (q, psi) in buf.iter().enumerate() {
                acc[l * np + q] += (inc.value * psi.normal_derivative(nu) - psi.value * d_inc) * ws;
            }
        }
    }
    Ok(acc)
}

/// `a = ∫ rhs(z) P_k(z) dF` for every information functional, in layout order.
pub fn information_outcomes(
    layout: &SourceLayout,
    kappa: f64,
    z_rule: &Rule,
    surface: &SurfaceRule,
) -> Result<Vec<Complex64>> {
    let per_z = par::try_map_range(z_rule.len(), |i| {
        let z = z_rule.nodes[i];
        nullfield_rhs_batch(layout, z, kappa, surface).map_err(|e| Error::AtParameter {
            z,
            source: Box::new(e),
        })
    })?;
    let np = 2 * layout.multipole_order + 1;
    let mut out = vec![Complex64::new(0.0, 0.0); layout.len()];
    for (i, rhs) in per_z.iter().enumerate() {
        let (z, w) = (z_rule.nodes[i], z_rule.weights[i]);
        for l in 0..layout.count {
            for q in 0..np {
                let p = q as i32 - layout.multipole_order as i32;
                for k in 0..=layout.modulation_order {
                    out[layout.index(l, p, k)] += rhs[l * np + q] * (w * layout.basis.eval(k, z));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarea::{circle_grid, polygon_grid};
    use crate::shape::{ellipse_shape, random_octagon};

    fn wgf(v: Vec<Complex64>) -> WeightedGridfunction {
        WeightedGridfunction {
            kind: FunctionalKind::Other,
            entries: v,
        }
    }

    #[test]
    fn exact_representation() {
        let f1 = wgf((0..20).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect());
        let f2 = wgf((0..20).map(|i| Complex64::new(0.1, (i as f64 * 0.7).cos())).collect());
        let g = wgf(f1.entries.iter().zip(&f2.entries).map(|(a, b)| 2.0 * a - I * b).collect());
        let k = solve_kernel(&[g], &[f1, f2], 1e-4, 1e-8).unwrap();
        assert!(k.residual_norms[0] < 1e-12);
        assert!(k.satisfied[0]);
        assert!((k.row(0)[0] - 2.0).norm() < 1e-12);
        assert!((k.row(0)[1] + I).norm() < 1e-12);
    }

    #[test]
    fn box_projection() {
        let f = wgf(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]);
        let g = wgf(f.entries.iter().map(|x| 2.0 * x).collect());
        let k = solve_kernel(&[g], &[f.clone()], 1e-4, 1e-4).unwrap();
        assert!((k.row(0)[0].norm() - 1.0).abs() < 1e-15);
        assert!((k.residual_norms[0] - f.norm()).abs() < 1e-12);
        assert!(!k.satisfied[0]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = wgf(vec![Complex64::new(1.0, 0.0); 3]);
        let b = wgf(vec![Complex64::new(1.0, 0.0); 4]);
        assert!(matches!(solve_kernel(&[a], &[b], 1e-4, 1e-8), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dot_conjugate_symmetry() {
        let s = Arc::new(random_octagon(5.0, 4.0).unwrap());
        let grid = polygon_grid(&s, 4, 4).unwrap();
        let layout = SourceLayout::new(s.clone(), 6, 1).unwrap();
        let fs = discretize_batch(&grid, &layout.functionals(1.0)).unwrap();
        let one = fs[0].dot(&fs[3]);
        let two = fs[3].dot(&fs[0]);
        assert_eq!(one, two.conj());
    }

    #[test]
    fn batch_matches_single() {
        let s = Arc::new(random_octagon(5.0, 4.0).unwrap());
        let grid = polygon_grid(&s, 3, 3).unwrap();
        let mut layout = SourceLayout::new(s.clone(), 4, 2).unwrap();
        layout.modulation_order = 1;
        let mut fs = layout.functionals(1.3);
        fs.push(Functional::target(-3, 2, 1.3, GpcBasis::Legendre));
        let batch = discretize_batch(&grid, &fs).unwrap();
        for (f, b) in fs.iter().zip(&batch) {
            let single = discretize(&grid, f).unwrap();
            for (x, y) in single.entries.iter().zip(&b.entries) {
                assert!((x - y).norm() <= 1e-13 * x.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn circle_rhs_reconstructs_coefficients() {
        // ψ = H_p at the origin: pairing with the inward-normal density.
        let a = 1.5;
        let kappa = 2.0;
        let shape = Arc::new(ellipse_shape(a, a).unwrap());
        let mut layout = SourceLayout::new(shape.clone(), 1, 3).unwrap();
        layout.radial_factor = 1e-300;
        let rule = SurfaceRule { smooth_points: 128, ..Default::default() };
        let rhs = nullfield_rhs_batch(&layout, 0.0, kappa, &rule).unwrap();
        // With h = Σ_n i^n (2i/(πa))/H_n(κa) e^{inθ}, the pairing with
        // H_p e^{ipθ} is 4i·i^p, and (i/4)·J_m pairs to -i^m J_m/H_m.
        for p in -3..=3i32 {
            let want = 4.0 * I * I.powi(p);
            assert!((rhs[(p + 3) as usize] - want).norm() < 1e-10 * want.norm(), "p={p}");
        }
        let target = Functional::target(2, 0, kappa, GpcBasis::Fourier);
        let rule = periodic_trapezoid(128, TAU);
        let seq = CylinderSeq::new(4, kappa * a, true).unwrap();
        let h: Vec<Complex64> = rule
            .nodes
            .iter()
            .map(|&t| {
                (-4i32..=4)
                    .map(|n| I.powi(n) * 2.0 * I / (std::f64::consts::PI * a) / seq.h(n) * Complex64::from_polar(1.0, n as f64 * t))
                    .sum()
            })
            .collect();
        let b2: Complex64 = rule
            .iter()
            .zip(&h)
            .map(|((t, w), hv)| target.eval(a, t, 0.0).unwrap() * hv * (w * a))
            .sum();
        let want = crate::specfun::circle_coefficient(2, kappa, a).unwrap();
        assert!((b2 - want).norm() < 1e-12);
    }

    #[test]
    fn placement_error() {
        let shape = Arc::new(ellipse_shape(2.0, 1.0).unwrap());
        let layout = SourceLayout::new(shape.clone(), 3, 0).unwrap();
        let f = layout.functionals(1.0);
        assert!(nullfield_rhs(&shape, 0.3, &f[0], 1.0, &SurfaceRule::default()).is_ok());
        let mut bad = layout.clone();
        bad.radial_factor = 1.2;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn circle_grid_targets_have_zero_fourier_modes() {
        let shape = Arc::new(ellipse_shape(3.0, 3.0).unwrap());
        let grid = circle_grid(3.0, 64, 8).unwrap();
        let layout = SourceLayout::new(shape, 8, 1).unwrap();
        let src = discretize_batch(&grid, &layout.functionals(1.0)).unwrap();
        let tgt = discretize_batch(&grid, &[Functional::target(1, 2, 1.0, GpcBasis::Fourier)]).unwrap();
        let k = solve_kernel(&tgt, &src, 1e-4, 1e-8).unwrap();
        assert!(k.row(0).iter().all(|c| c.norm() < 1e-12));
    }
}
