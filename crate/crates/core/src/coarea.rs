//! Cubature grids on the transition region `r_min < |r| < r_max`.
//!
//! The ensemble integral `∫∫ f(ρ(θ;z), θ, z) ρ s dθ dF(z)` is rewritten by the
//! coarea formula as a spatial integral `∫∫ Σ_k f(r, θ, z_k) |∇z_k| dF/dz r dr dθ`
//! over the fixed annulus. Each grid node stores a spatial weight for the
//! singular part of that measure and a node factor for the smooth remainder.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::quadrature::{chebyshev_gauss, closed_trapezoid, gauss_legendre, periodic_trapezoid};
use crate::shape::{Polygon, StarShape};

/// A fiber branch carried by a grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBranch {
    pub z: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub subdomain_id: usize,
    pub r: f64,
    pub theta: f64,
    pub spatial_weight: f64,
    pub node_factor: f64,
    pub branches: Vec<GridBranch>,
}

impl GridNode {
    pub fn position(&self) -> [f64; 2] {
        [self.r * self.theta.cos(), self.r * self.theta.sin()]
    }
}

/// One flattened cubature point `(r, θ, z)` with its full weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubaturePoint {
    pub r: f64,
    pub theta: f64,
    pub z: f64,
    pub weight: f64,
}

/// Grid layout requested from [`build_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    /// Chebyshev-Gauss in `r`, trapezoid in `θ` with `n_base·⌊r⌋` points per ring.
    Ellipse { m: usize, n_base: usize },
    /// Gauss-Legendre per polygon segment, `m_q` radial by `n_q` angular nodes.
    Polygon { m_q: usize, n_q: usize },
    /// Deterministic circle: `n_theta` surface points, `n_z` parameter samples each.
    Circle { n_theta: usize, n_z: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoareaGrid {
    pub spec: GridSpec,
    pub nodes: Vec<GridNode>,
    points: Vec<CubaturePoint>,
}

impl CoareaGrid {
    fn new(spec: GridSpec, nodes: Vec<GridNode>) -> Self {
        let points = nodes
            .iter()
            .flat_map(|n| {
                n.branches.iter().map(move |b| CubaturePoint {
                    r: n.r,
                    theta: n.theta,
                    z: b.z,
                    weight: b.fraction * n.spatial_weight * n.node_factor,
                })
            })
            .collect();
        Self { spec, nodes, points }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of (node, branch) pairs; the length of every gridfunction.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[CubaturePoint] {
        &self.points
    }

    pub fn total_spatial_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.spatial_weight).sum()
    }

    /// Plain weighted sum over all cubature points.
    pub fn ensemble_integral<F>(&self, f: F) -> Complex64
    where
        F: Fn(f64, f64, f64) -> Complex64 + Sync + Send,
    {
        let terms = par::map_slice(&self.points, |p| f(p.r, p.theta, p.z) * p.weight);
        terms.into_iter().sum()
    }

    pub fn ensemble_integral_real<F>(&self, f: F) -> f64
    where
        F: Fn(f64, f64, f64) -> f64 + Sync + Send,
    {
        let terms = par::map_slice(&self.points, |p| f(p.r, p.theta, p.z) * p.weight);
        terms.into_iter().sum()
    }

    /// One row per (node, branch). `weight` is `spatial_weight·node_factor`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subdomain_id,r,theta,weight,branch_index,z,branch_fraction\n");
        for n in &self.nodes {
            for (k, b) in n.branches.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    n.subdomain_id,
                    n.r,
                    n.theta,
                    n.spatial_weight * n.node_factor,
                    k,
                    b.z,
                    b.fraction
                );
            }
        }
        out
    }

    /// One row per spatial node.
    pub fn spatial_csv(&self) -> String {
        let mut out = String::from("subdomain_id,r,theta,x,y,spatial_weight,node_factor,n_branches\n");
        for n in &self.nodes {
            let [x, y] = n.position();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                n.subdomain_id,
                n.r,
                n.theta,
                x,
                y,
                n.spatial_weight,
                n.node_factor,
                n.branches.len()
            );
        }
        out
    }
}

pub fn build_grid(shape: &StarShape, spec: GridSpec) -> Result<CoareaGrid> {
    match (shape, spec) {
        (StarShape::Ellipse(e), GridSpec::Ellipse { m, n_base }) if e.a > e.b => {
            ellipse_grid(shape, m, n_base)
        }
        (StarShape::Ellipse(e), GridSpec::Circle { n_theta, n_z }) if e.a == e.b => {
            circle_grid(e.a, n_theta, n_z)
        }
        (StarShape::Polygon(_), GridSpec::Polygon { m_q, n_q }) => polygon_grid(shape, m_q, n_q),
        _ => Err(Error::Parameter(format!(
            "grid layout {spec:?} does not fit this shape"
        ))),
    }
}

/// Rings per ring index: `N^(i) = n_base·max(1, ⌊r⌋)`.
pub fn ring_count(n_base: usize, r: f64) -> usize {
    n_base * (r.floor() as usize).max(1)
}

/// Regular part of the ellipse weight: the node factor is `4·ω_reg(r)`, with
/// `ω(r) = ω_reg(r)/sqrt((a-r)(r-b))` the density of the ensemble surface
/// measure per unit `r dr dθ/2π`.
pub fn ellipse_omega_reg(a: f64, b: f64, r: f64) -> f64 {
    ((a - r) * (r - b) + a * a * b * b / ((a + r) * (r + b))).sqrt()
}

pub fn ellipse_grid(shape: &StarShape, m: usize, n_base: usize) -> Result<CoareaGrid> {
    let StarShape::Ellipse(e) = shape else {
        return Err(Error::Parameter("ellipse grid needs an ellipse".into()));
    };
    let (a, b) = (e.a, e.b);
    if a <= b || m == 0 || n_base == 0 {
        return Err(Error::Parameter(format!(
            "ellipse grid needs a > b and positive counts, got a={a}, b={b}, M={m}, N={n_base}"
        )));
    }
    let cheb = chebyshev_gauss(m);
    let rings = par::try_map_range(m, |i| {
        let r = 0.5 * (a - b) * cheb.nodes[i] + 0.5 * (a + b);
        let n_i = ring_count(n_base, r);
        let spatial_weight = cheb.weights[i] / n_i as f64;
        let mut ring = Vec::with_capacity(n_i);
        for j in 0..n_i {
            let theta = TAU * j as f64 / n_i as f64;
            let fibers = shape.fiber_solve(theta, r)?;
            if fibers.len() != 4 {
                return Err(Error::Parameter(format!(
                    "expected 4 fiber branches at r={r}, theta={theta}, found {}",
                    fibers.len()
                )));
            }
            let total: f64 = fibers.iter().map(|f| f.coarea_weight()).sum();
            let node_factor = TAU * r * ((a - r) * (r - b)).sqrt() * total;
            ring.push(GridNode {
                subdomain_id: i + 1,
                r,
                theta,
                spatial_weight,
                node_factor,
                branches: fibers
                    .iter()
                    .map(|f| GridBranch {
                        z: f.z,
                        fraction: f.coarea_weight() / total,
                    })
                    .collect(),
            });
        }
        Ok(ring)
    })?;
    Ok(CoareaGrid::new(
        GridSpec::Ellipse { m, n_base },
        rings.into_iter().flatten().collect(),
    ))
}

/// Fixed circle of radius `a`: surface nodes carry `n_z` rotation samples each.
pub fn circle_grid(a: f64, n_theta: usize, n_z: usize) -> Result<CoareaGrid> {
    if !(a > 0.0) || n_theta == 0 || n_z == 0 {
        return Err(Error::Parameter("circle grid needs a > 0 and positive counts".into()));
    }
    let theta_rule = periodic_trapezoid(n_theta, TAU);
    let z_rule = periodic_trapezoid(n_z, TAU);
    let nodes = theta_rule
        .iter()
        .map(|(theta, w)| GridNode {
            subdomain_id: 1,
            r: a,
            theta,
            spatial_weight: w,
            node_factor: a,
            branches: z_rule
                .nodes
                .iter()
                .map(|&z| GridBranch {
                    z,
                    fraction: 1.0 / n_z as f64,
                })
                .collect(),
        })
        .collect();
    Ok(CoareaGrid::new(GridSpec::Circle { n_theta, n_z }, nodes))
}

/// Repeated Gauss-Legendre grid on each polygon segment.
///
/// On a segment whose end at `θ_s` is stationary, the radial extent and
/// `∂_z ρ` both vanish like `sin(θ - θ_s)`; the spatial weight carries the
/// factor `1/sin(θ - θ_s)` and the node factor its inverse.
pub fn polygon_grid(shape: &StarShape, m_q: usize, n_q: usize) -> Result<CoareaGrid> {
    let StarShape::Polygon(poly) = shape else {
        return Err(Error::Parameter("polygon grid needs a polygon".into()));
    };
    if m_q == 0 || n_q == 0 {
        return Err(Error::Parameter("polygon grid needs positive counts".into()));
    }
    let tau = gauss_legendre(n_q);
    let sigma = gauss_legendre(m_q);
    let segments = par::try_map_range(poly.vertex_count(), |k| {
        segment_nodes(shape, poly, k, &tau, &sigma)
    })?;
    Ok(CoareaGrid::new(
        GridSpec::Polygon { m_q, n_q },
        segments.into_iter().flatten().collect(),
    ))
}

fn segment_nodes(
    shape: &StarShape,
    poly: &Polygon,
    k: usize,
    tau: &crate::quadrature::Rule,
    sigma: &crate::quadrature::Rule,
) -> Result<Vec<GridNode>> {
    let seg = poly.segment_by_index(k);
    let (z_lo, z_hi) = shape.domain().bounds();
    if seg.radius_lo.is_stationary() && seg.radius_hi.is_stationary() {
        return Err(Error::Parameter(format!(
            "segment {} does not move with the parameter",
            k + 1
        )));
    }
    let half = 0.5 * (seg.theta_hi - seg.theta_lo);
    let mid = 0.5 * (seg.theta_hi + seg.theta_lo);
    let stationary = seg.stationary_end();
    let mut nodes = Vec::with_capacity(tau.len() * sigma.len());
    for (t, wt) in tau.iter() {
        let theta = mid + half * t;
        let d_lo = seg.drho_dz(theta, z_lo);
        let d_hi = seg.drho_dz(theta, z_hi);
        let d_mid = seg.drho_dz(theta, 0.5 * (z_lo + z_hi));
        if !(d_lo.signum() == d_hi.signum() && d_lo.signum() == d_mid.signum()) {
            return Err(Error::Parameter(format!(
                "radius is not monotone in the parameter on segment {}",
                k + 1
            )));
        }
        let (r0, r1) = (seg.rho(theta, z_lo), seg.rho(theta, z_hi));
        let (r_in, r_out) = if r0 < r1 { (r0, r1) } else { (r1, r0) };
        let extent = 0.5 * (r_out - r_in);
        let omega = match stationary {
            Some(ts) => 1.0 / (theta - ts).sin().abs(),
            None => 1.0,
        };
        let theta_w = crate::shape::wrap_angle(theta);
        for (sg, ws) in sigma.iter() {
            let r = r_in + extent * (sg + 1.0);
            let fibers = shape.fiber_solve(theta_w, r)?;
            let [fiber] = fibers.as_slice() else {
                return Err(Error::Parameter(format!(
                    "expected one fiber branch at r={r}, theta={theta}, found {}",
                    fibers.len()
                )));
            };
            nodes.push(GridNode {
                subdomain_id: k + 1,
                r,
                theta: theta_w,
                spatial_weight: half * wt * ws * extent * omega,
                node_factor: r * fiber.coarea_weight() / omega,
                branches: vec![GridBranch {
                    z: fiber.z,
                    fraction: 1.0,
                }],
            });
        }
    }
    Ok(nodes)
}

/// Uniform tensor grid in `(θ, z)` for the ensemble surface measure `dS dF`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveGrid {
    pub theta_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    /// Row-major over `(θ, z)`; includes `ρ s` and the parameter density.
    pub weights: Vec<f64>,
}

impl NaiveGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let nz = self.z_nodes.len();
        self.weights
            .iter()
            .enumerate()
            .map(move |(k, &w)| (self.theta_nodes[k / nz], self.z_nodes[k % nz], w))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,z,weight\n");
        for (t, z, w) in self.iter() {
            let _ = writeln!(out, "{t},{z},{w}");
        }
        out
    }
}

/// `n` angles by `m` parameter values; periodic parameters use the periodic
/// trapezoid, intervals the closed one.
pub fn naive_grid(shape: &StarShape, m: usize, n: usize) -> Result<NaiveGrid> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter("naive grid needs positive counts".into()));
    }
    let domain = shape.domain();
    let theta_rule = periodic_trapezoid(n, TAU);
    let z_rule = if domain.is_periodic() {
        periodic_trapezoid(m, TAU)
    } else {
        let (lo, hi) = domain.bounds();
        closed_trapezoid(m, lo, hi)
    };
    let density = domain.density();
    let mut weights = Vec::with_capacity(m * n);
    for (theta, wt) in theta_rule.iter() {
        for (z, wz) in z_rule.iter() {
            let ds = shape.surface_sample(theta, z).line_element;
            weights.push(wt * wz * density * ds);
        }
    }
    Ok(NaiveGrid {
        theta_nodes: theta_rule.nodes,
        z_nodes: z_rule.nodes,
        weights,
    })
}

/// Expected perimeter of the fixed ellipse is rotation invariant; exposed for checks.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    // Gauss-Kummer series in h = ((a-b)/(a+b))², summed until negligible.
    let h = ((a - b) / (a + b)).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut hp = 1.0;
    for n in 1..200 {
        // binom(1/2, n)²
        let c = (0.5 - (n as f64 - 1.0)) / n as f64;
        term *= c;
        hp *= h;
        let add = term * term * hp;
        sum += add;
        if add.abs() < 1e-17 * sum {
            break;
        }
    }
    PI * (a + b) * sum
}
