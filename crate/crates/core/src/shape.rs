//! Random star-shaped boundaries `ρ(θ; z)` over a single random parameter.
//!
//! Two families are supported: a rotated ellipse (parameter = rotation angle,
//! uniform on `[0, 2π)`) and polygons whose vertex radii are affine in the
//! parameter, with vertex angles fixed.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Fiber branches with `|∂_z ρ|` below this are treated as irregular and dropped.
pub const STATIONARY_TOL: f64 = 1e-10;

const FIBER_TOL: f64 = 1e-12;
const GENERIC_SAMPLES: usize = 64;

/// Support of the random parameter. The density is uniform in both cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterDomain {
    /// Angle on `[0, 2π)`, density `1/2π`.
    Periodic,
    /// Interval `[lo, hi]`, density `1/(hi - lo)`.
    Interval { lo: f64, hi: f64 },
}

impl ParameterDomain {
    pub fn density(&self) -> f64 {
        match *self {
            ParameterDomain::Periodic => 1.0 / TAU,
            ParameterDomain::Interval { lo, hi } => 1.0 / (hi - lo),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ParameterDomain::Periodic => (0.0, TAU),
            ParameterDomain::Interval { lo, hi } => (lo, hi),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, ParameterDomain::Periodic)
    }

    /// Reduce into the canonical representative; `None` if outside an interval.
    pub fn canonical(&self, z: f64) -> Option<f64> {
        match *self {
            ParameterDomain::Periodic => Some(wrap_angle(z)),
            ParameterDomain::Interval { lo, hi } => {
                let slack = 1e-14 * (hi - lo);
                if z < lo - slack || z > hi + slack {
                    None
                } else {
                    Some(z.clamp(lo, hi))
                }
            }
        }
    }
}

/// Wrap into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Geometry of a boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: [f64; 2],
    pub unit_outward_normal: [f64; 2],
    /// `s = sqrt(1 + (ρ_θ/ρ)²)`.
    pub metric_s: f64,
    /// `dS/dθ = ρ s`.
    pub line_element: f64,
}

/// One solution `z` of `ρ(θ; z) = r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberBranch {
    pub z: f64,
    /// `|∇z_r| = s(θ; z) / |∂_z ρ(θ; z)|`.
    pub grad_z_magnitude: f64,
    /// Parameter density at `z`.
    pub density: f64,
}

impl FiberBranch {
    /// Coarea weight of the branch in `r dr dθ` measure: `|∇z_r| dF/dz`.
    pub fn coarea_weight(&self) -> f64 {
        self.grad_z_magnitude * self.density
    }
}

/// Ellipse with semi-axes `a ≥ b > 0`, rotated counter-clockwise by the
/// random angle. `a == b` is the fixed circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    fn denom(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        self.b * self.b * c * c + self.a * self.a * s * s
    }

    fn rho_t(&self, t: f64) -> f64 {
        self.a * self.b / self.denom(t).sqrt()
    }

    /// `ρ'(t)/ρ(t) = (a² - b²) sin(2t)/2 / (b² cos²t + a² sin²t)`.
    fn log_derivative(&self, t: f64) -> f64 {
        -(self.a * self.a - self.b * self.b) * (2.0 * t).sin() / 2.0 / self.denom(t)
    }

    /// Intersection angle `t_r` with `ρ(t_r) = r`, in `(0, π/2)`.
    pub fn intersection_angle(&self, r: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let c = (a / r) * ((r * r - b * b) / (a * a - b * b)).sqrt();
        c.clamp(-1.0, 1.0).acos()
    }
}

/// Vertex radius `base + slope·z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRadius {
    pub base: f64,
    pub slope: f64,
}

impl AffineRadius {
    pub fn at(&self, z: f64) -> f64 {
        self.base + self.slope * z
    }

    pub fn is_stationary(&self) -> bool {
        self.slope == 0.0
    }
}

/// Star-shaped polygon with fixed vertex angles and affine vertex radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    angles: Vec<f64>,
    radii: Vec<AffineRadius>,
    domain: ParameterDomain,
    r_min: f64,
    r_max: f64,
}

/// The segment containing a given angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Zero-based; segment `k` joins vertex `k - 1` (cyclically) to vertex `k`.
    pub index: usize,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub radius_lo: AffineRadius,
    pub radius_hi: AffineRadius,
}

impl Segment {
    pub fn rho(&self, theta: f64, z: f64) -> f64 {
        let (lo, hi) = (self.radius_lo.at(z), self.radius_hi.at(z));
        hi * lo * (self.theta_hi - self.theta_lo).sin() / self.denom(theta, lo, hi)
    }

    fn denom(&self, theta: f64, lo: f64, hi: f64) -> f64 {
        hi * (self.theta_hi - theta).sin() + lo * (theta - self.theta_lo).sin()
    }

    fn log_derivative(&self, theta: f64, z: f64) -> f64 {
        let (lo, hi) = (self.radius_lo.at(z), self.radius_hi.at(z));
        (hi * (self.theta_hi - theta).cos() - lo * (theta - self.theta_lo).cos())
            / self.denom(theta, lo, hi)
    }

    pub fn drho_dz(&self, theta: f64, z: f64) -> f64 {
        let (lo, hi) = (self.radius_lo.at(z), self.radius_hi.at(z));
        let rho = self.rho(theta, z);
        let sd = (self.theta_hi - self.theta_lo).sin();
        (rho / hi).powi(2) * (theta - self.theta_lo).sin() / sd * self.radius_hi.slope
            + (rho / lo).powi(2) * (self.theta_hi - theta).sin() / sd * self.radius_lo.slope
    }

    /// Angle of the stationary end of the segment, if exactly one end moves.
    pub fn stationary_end(&self) -> Option<f64> {
        match (self.radius_lo.is_stationary(), self.radius_hi.is_stationary()) {
            (true, false) => Some(self.theta_lo),
            (false, true) => Some(self.theta_hi),
            _ => None,
        }
    }

    /// Closed-form `z` with `ρ(θ; z) = r` when exactly one end moves.
    fn closed_form_fiber(&self, theta: f64, r: f64) -> Option<f64> {
        let sd = (self.theta_hi - self.theta_lo).sin();
        let s_to_hi = (self.theta_hi - theta).sin();
        let s_from_lo = (theta - self.theta_lo).sin();
        match (self.radius_lo.is_stationary(), self.radius_hi.is_stationary()) {
            (true, false) => {
                let fixed = self.radius_lo.base;
                let moving = r * fixed * s_from_lo / (fixed * sd - r * s_to_hi);
                Some((moving - self.radius_hi.base) / self.radius_hi.slope)
            }
            (false, true) => {
                let fixed = self.radius_hi.base;
                let moving = r * fixed * s_to_hi / (fixed * sd - r * s_from_lo);
                Some((moving - self.radius_lo.base) / self.radius_lo.slope)
            }
            _ => None,
        }
    }
}

impl Polygon {
    /// Polygon with vertex angles strictly increasing over less than one turn.
    pub fn new(angles: Vec<f64>, radii: Vec<AffineRadius>, domain: ParameterDomain) -> Result<Self> {
        if angles.len() < 3 || angles.len() != radii.len() {
            return Err(Error::Parameter(format!(
                "polygon needs at least 3 vertices with one radius each, got {} angles and {} radii",
                angles.len(),
                radii.len()
            )));
        }
        if !angles.windows(2).all(|w| w[0] < w[1]) || angles[angles.len() - 1] - angles[0] >= TAU {
            return Err(Error::Parameter(
                "vertex angles must be strictly increasing within one turn".into(),
            ));
        }
        let ParameterDomain::Interval { lo, hi } = domain else {
            return Err(Error::Parameter("polygon parameter must live on an interval".into()));
        };
        if radii.iter().any(|r| r.at(lo) <= 0.0 || r.at(hi) <= 0.0) {
            return Err(Error::Parameter("vertex radii must stay positive".into()));
        }
        let mut poly = Self {
            angles,
            radii,
            domain,
            r_min: 0.0,
            r_max: 0.0,
        };
        for k in 0..poly.angles.len() {
            let seg = poly.segment_by_index(k);
            if seg.theta_hi - seg.theta_lo >= PI {
                return Err(Error::Parameter("consecutive vertices must be less than π apart".into()));
            }
        }
        let (r_min, r_max) = poly.sample_bounds();
        poly.r_min = r_min;
        poly.r_max = r_max;
        Ok(poly)
    }

    fn with_bounds(mut self, r_min: f64, r_max: f64) -> Self {
        self.r_min = r_min;
        self.r_max = r_max;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn radii(&self) -> &[AffineRadius] {
        &self.radii
    }

    pub fn segment_by_index(&self, k: usize) -> Segment {
        let q = self.angles.len();
        let prev = (k + q - 1) % q;
        let theta_lo = if k == 0 { self.angles[q - 1] - TAU } else { self.angles[prev] };
        Segment {
            index: k,
            theta_lo,
            theta_hi: self.angles[k],
            radius_lo: self.radii[prev],
            radius_hi: self.radii[k],
        }
    }

    /// Segment containing `θ`, with `θ` shifted into its angular range.
    /// At a vertex the segment starting there is chosen.
    pub fn segment_at(&self, theta: f64) -> (Segment, f64) {
        let q = self.angles.len();
        let last = self.angles[q - 1];
        let mut t = (theta - (last - TAU)).rem_euclid(TAU) + (last - TAU);
        if t >= last {
            t = last - TAU;
        }
        let k = self.angles.partition_point(|&a| a <= t);
        (self.segment_by_index(k % q), t)
    }

    fn sample_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.domain.bounds();
        let mut r_min = f64::INFINITY;
        let mut r_max: f64 = 0.0;
        let zs: Vec<f64> = (0..=256).map(|i| lo + (hi - lo) * i as f64 / 256.0).collect();
        for k in 0..self.angles.len() {
            let seg = self.segment_by_index(k);
            for &z in &zs {
                let (a, b) = (seg.radius_lo.at(z), seg.radius_hi.at(z));
                r_max = r_max.max(a).max(b);
                // Distance from the origin to the segment.
                let p0 = [a * seg.theta_lo.cos(), a * seg.theta_lo.sin()];
                let p1 = [b * seg.theta_hi.cos(), b * seg.theta_hi.sin()];
                let d = [p1[0] - p0[0], p1[1] - p0[1]];
                let t = (-(p0[0] * d[0] + p0[1] * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
                r_min = r_min.min((p0[0] + t * d[0]).hypot(p0[1] + t * d[1]));
            }
        }
        (r_min, r_max)
    }
}

/// A random star-shaped boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum StarShape {
    Ellipse(Ellipse),
    Polygon(Polygon),
}

/// Randomly rotated ellipse; the circle `a == b` is accepted.
pub fn ellipse_shape(a: f64, b: f64) -> Result<StarShape> {
    if !(b > 0.0 && a >= b && a.is_finite()) {
        return Err(Error::Parameter(format!(
            "ellipse needs a >= b > 0, got a={a}, b={b}"
        )));
    }
    Ok(StarShape::Ellipse(Ellipse { a, b }))
}

/// General polygon with fixed vertex angles and affine radii.
pub fn polygon_shape(
    vertex_radii: Vec<AffineRadius>,
    vertex_angles: Vec<f64>,
    domain: ParameterDomain,
) -> Result<StarShape> {
    Polygon::new(vertex_angles, vertex_radii, domain).map(StarShape::Polygon)
}

/// Octagon with `ρ_q = a + b(1 - (-1)^q) z / 2`, `θ_q = qπ/4`, `z ~ U[-1, 1]`.
pub fn random_octagon(a: f64, b: f64) -> Result<StarShape> {
    if !(a > b && b > 0.0) {
        return Err(Error::Parameter(format!(
            "octagon needs a > b > 0, got a={a}, b={b}"
        )));
    }
    let angles = (1..=8).map(|q| q as f64 * PI / 4.0).collect::<Vec<_>>();
    let radii = (1..=8)
        .map(|q| AffineRadius {
            base: a,
            slope: if q % 2 == 1 { b } else { 0.0 },
        })
        .collect();
    let poly = Polygon::new(angles, radii, ParameterDomain::Interval { lo: -1.0, hi: 1.0 })?;
    Ok(StarShape::Polygon(poly.with_bounds(a - b, a + b)))
}

impl StarShape {
    pub fn domain(&self) -> ParameterDomain {
        match self {
            StarShape::Ellipse(_) => ParameterDomain::Periodic,
            StarShape::Polygon(p) => p.domain,
        }
    }

    pub fn density(&self, _z: f64) -> f64 {
        self.domain().density()
    }

    pub fn r_min(&self) -> f64 {
        match self {
            StarShape::Ellipse(e) => e.b,
            StarShape::Polygon(p) => p.r_min,
        }
    }

    pub fn r_max(&self) -> f64 {
        match self {
            StarShape::Ellipse(e) => e.a,
            StarShape::Polygon(p) => p.r_max,
        }
    }

    /// Circle: every realization is the same boundary.
    pub fn is_deterministic(&self) -> bool {
        match self {
            StarShape::Ellipse(e) => e.a == e.b,
            StarShape::Polygon(p) => p.radii.iter().all(AffineRadius::is_stationary),
        }
    }

    pub fn rho(&self, theta: f64, z: f64) -> f64 {
        match self {
            StarShape::Ellipse(e) => e.rho_t(theta - z),
            StarShape::Polygon(p) => {
                let (seg, t) = p.segment_at(theta);
                seg.rho(t, z)
            }
        }
    }

    pub fn drho_dtheta(&self, theta: f64, z: f64) -> f64 {
        self.rho(theta, z) * self.log_derivative(theta, z)
    }

    /// `ρ_θ / ρ`.
    pub fn log_derivative(&self, theta: f64, z: f64) -> f64 {
        match self {
            StarShape::Ellipse(e) => e.log_derivative(theta - z),
            StarShape::Polygon(p) => {
                let (seg, t) = p.segment_at(theta);
                seg.log_derivative(t, z)
            }
        }
    }

    pub fn drho_dz(&self, theta: f64, z: f64) -> f64 {
        match self {
            StarShape::Ellipse(e) => -e.rho_t(theta - z) * e.log_derivative(theta - z),
            StarShape::Polygon(p) => {
                let (seg, t) = p.segment_at(theta);
                seg.drho_dz(t, z)
            }
        }
    }

    /// `s(θ; z) = sqrt(1 + (ρ_θ/ρ)²)`.
    pub fn metric(&self, theta: f64, z: f64) -> f64 {
        self.log_derivative(theta, z).hypot(1.0)
    }

    /// Angles where `ρ` is not smooth in `θ`, in `[0, 2π)`.
    pub fn angular_breakpoints(&self, _z: f64) -> Vec<f64> {
        match self {
            StarShape::Ellipse(_) => Vec::new(),
            StarShape::Polygon(p) => {
                let mut v: Vec<f64> = p.angles.iter().map(|&a| wrap_angle(a)).collect();
                v.sort_by(f64::total_cmp);
                v
            }
        }
    }

    pub fn surface_sample(&self, theta: f64, z: f64) -> SurfaceSample {
        let rho = self.rho(theta, z);
        let rho_t = rho * self.log_derivative(theta, z);
        let (s, c) = theta.sin_cos();
        let line_element = rho.hypot(rho_t);
        SurfaceSample {
            position: [rho * c, rho * s],
            unit_outward_normal: [
                (rho_t * s + rho * c) / line_element,
                (-rho_t * c + rho * s) / line_element,
            ],
            metric_s: line_element / rho,
            line_element,
        }
    }

    /// All `z` with `ρ(θ; z) = r`, excluding stationary branches.
    pub fn fiber_solve(&self, theta: f64, r: f64) -> Result<Vec<FiberBranch>> {
        if self.is_deterministic() || !(r > self.r_min() && r < self.r_max()) {
            return Ok(Vec::new());
        }
        let candidates = match self {
            StarShape::Ellipse(e) => {
                let t = e.intersection_angle(r);
                vec![theta - t, theta + t, theta - t + PI, theta + t - PI]
            }
            StarShape::Polygon(p) => {
                let (seg, t) = p.segment_at(theta);
                match seg.closed_form_fiber(t, r) {
                    Some(z) => vec![z],
                    None => self.bracketed_roots(theta, r),
                }
            }
        };
        self.finish_branches(theta, r, candidates)
    }

    /// Generic fiber solve: sign changes of `ρ - r` on a uniform parameter
    /// grid, bisection, then one Newton polish.
    pub fn fiber_solve_generic(&self, theta: f64, r: f64) -> Result<Vec<FiberBranch>> {
        if self.is_deterministic() {
            return Ok(Vec::new());
        }
        let roots = self.bracketed_roots(theta, r);
        self.finish_branches(theta, r, roots)
    }

    fn bracketed_roots(&self, theta: f64, r: f64) -> Vec<f64> {
        let (lo, hi) = self.domain().bounds();
        let n = GENERIC_SAMPLES;
        let periodic = self.domain().is_periodic();
        // Periodic grids omit the duplicate endpoint.
        let count = if periodic { n } else { n + 1 };
        let zs: Vec<f64> = (0..count).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let g: Vec<f64> = zs.iter().map(|&z| self.rho(theta, z) - r).collect();
        let pairs = if periodic { count } else { count - 1 };
        let mut roots = Vec::new();
        for i in 0..pairs {
            let j = (i + 1) % count;
            let (z0, mut z1) = (zs[i], zs[j]);
            if periodic && j == 0 {
                z1 = hi;
            }
            let (g0, g1) = (g[i], g[j]);
            if g0 == 0.0 {
                roots.push(z0);
                continue;
            }
            if g0.signum() == g1.signum() || g1 == 0.0 {
                continue;
            }
            let (mut a, mut b) = (z0, z1);
            let mut ga = g0;
            while b - a > 1e-14 * (hi - lo) {
                let m = 0.5 * (a + b);
                let gm = self.rho(theta, m) - r;
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            let mut z = 0.5 * (a + b);
            let d = self.drho_dz(theta, z);
            if d.abs() > STATIONARY_TOL {
                let step = (self.rho(theta, z) - r) / d;
                if step.abs() < (b - a).max(1e-15) * 4.0 {
                    z -= step;
                }
            }
            roots.push(z);
        }
        roots
    }

    fn finish_branches(&self, theta: f64, r: f64, candidates: Vec<f64>) -> Result<Vec<FiberBranch>> {
        let domain = self.domain();
        let mut out = Vec::with_capacity(candidates.len());
        for z in candidates {
            let Some(z) = domain.canonical(z) else { continue };
            let dz = self.drho_dz(theta, z);
            if dz.abs() < STATIONARY_TOL {
                continue;
            }
            let residual = (self.rho(theta, z) - r).abs();
            if residual > FIBER_TOL * r {
                return Err(Error::Tolerance { theta, r, residual });
            }
            out.push(FiberBranch {
                z,
                grad_z_magnitude: self.metric(theta, z) / dz.abs(),
                density: self.density(z),
            });
        }
        Ok(out)
    }
}

/// `dt_r/dr = -ab / (r sqrt((r² - b²)(a² - r²)))` for the rotated ellipse.
pub fn dt_r_dr(a: f64, b: f64, r: f64) -> Result<f64> {
    if !(r > b && r < a) {
        return Err(Error::Domain {
            what: "intersection angle derivative",
            x: r,
        });
    }
    Ok(-a * b / (r * ((r * r - b * b) * (a * a - r * r)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn ellipse_axes() {
        let s = ellipse_shape(5.0, 1.0).unwrap();
        let alpha = 0.7;
        assert!((s.rho(alpha, alpha) - 5.0).abs() < 1e-14);
        assert!((s.rho(alpha + PI / 2.0, alpha) - 1.0).abs() < 1e-14);
        assert_eq!(s.r_min(), 1.0);
        assert_eq!(s.r_max(), 5.0);
        assert!(ellipse_shape(1.0, 2.0).is_err());
    }

    #[test]
    fn ellipse_log_derivative_closed_form() {
        let (a, b) = (5.0, 1.0);
        let e = Ellipse { a, b };
        for &t in &[0.1f64, 0.9, 2.0, 4.4] {
            let printed = (a * a - b * b) * (2.0 * t).sin() / 2.0
                / (b * b * t.cos().powi(2) + a * a * t.sin().powi(2));
            let fd_log = fd(|t| e.rho_t(t), t, 1e-6) / e.rho_t(t);
            // dρ/dt / ρ carries the opposite sign of the printed ratio.
            assert!((fd_log + printed).abs() < 1e-8);
            assert!((e.log_derivative(t) - fd_log).abs() < 1e-8);
        }
    }

    #[test]
    fn ellipse_drho_dz_matches_finite_difference() {
        let s = ellipse_shape(5.0, 1.0).unwrap();
        let alpha = 0.3;
        let theta = alpha + PI / 4.0;
        let want = fd(|z| s.rho(theta, z), alpha, 1e-6);
        assert!((s.drho_dz(theta, alpha) - want).abs() < 1e-8);
    }

    #[test]
    fn octagon_vertices() {
        let s = random_octagon(5.0, 4.0).unwrap();
        for q in 1..=8 {
            let th = q as f64 * PI / 4.0;
            for &z in &[-1.0, 0.0, 0.4, 1.0] {
                let want = 5.0 + 4.0 * (1.0 - (-1f64).powi(q)) * z / 2.0;
                assert!((s.rho(th, z) - want).abs() < 1e-12, "q={q} z={z}");
                assert!((s.rho(th - 1e-13, z) - want).abs() < 1e-9);
            }
        }
        assert_eq!(s.r_min(), 1.0);
        assert_eq!(s.r_max(), 9.0);
        // Even vertices do not move.
        for q in [2, 4, 6, 8] {
            assert!(s.drho_dz(q as f64 * PI / 4.0, 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn regular_octagon_apothem() {
        let s = random_octagon(3.0, 1.0).unwrap();
        let mid = PI / 8.0 + PI / 4.0;
        assert!((s.rho(mid, 0.0) - 3.0 * (PI / 8.0).cos()).abs() < 1e-14);
    }

    #[test]
    fn polygon_rejects_bad_input() {
        let r = AffineRadius { base: 1.0, slope: 0.0 };
        let dom = ParameterDomain::Interval { lo: -1.0, hi: 1.0 };
        assert!(polygon_shape(vec![r; 4], vec![0.0, 2.0, 1.0, 3.0], dom).is_err());
        let neg = AffineRadius { base: 0.5, slope: 1.0 };
        assert!(polygon_shape(vec![r, r, neg, r], vec![0.0, 1.0, 2.0, 3.0], dom).is_err());
        assert!(random_octagon(1.0, 2.0).is_err());
    }

    #[test]
    fn polygon_metric_closed_form_and_weight() {
        let s = random_octagon(5.0, 4.0).unwrap();
        let StarShape::Polygon(p) = &s else { unreachable!() };
        for &(theta, z) in &[(0.3, 0.2), (1.0, -0.6), (2.9, 0.9), (5.5, -0.1)] {
            let (seg, t) = p.segment_at(theta);
            let (lo, hi) = (seg.radius_lo.at(z), seg.radius_hi.at(z));
            let p0 = [lo * seg.theta_lo.cos(), lo * seg.theta_lo.sin()];
            let p1 = [hi * seg.theta_hi.cos(), hi * seg.theta_hi.sin()];
            let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
            let denom = hi * (seg.theta_hi - t).sin() + lo * (t - seg.theta_lo).sin();
            assert!((s.metric(theta, z) - len / denom).abs() < 1e-12);
            // s / |∂_z ρ| against finite differences in z.
            let dz = fd(|z| s.rho(theta, z), z, 1e-6);
            let ratio = s.metric(theta, z) / dz.abs();
            assert!((ratio - s.metric(theta, z) / s.drho_dz(theta, z).abs()).abs() < 1e-6 * ratio);
        }
    }

    #[test]
    fn normals() {
        let c = ellipse_shape(2.0, 2.0).unwrap();
        let smp = c.surface_sample(0.8, 0.0);
        assert!((smp.metric_s - 1.0).abs() < 1e-15);
        assert!((smp.unit_outward_normal[0] - 0.8f64.cos()).abs() < 1e-15);
        let e = ellipse_shape(5.0, 1.0).unwrap();
        assert!((e.surface_sample(1.2, 1.2).metric_s - 1.0).abs() < 1e-15);

        // Polygon: normal is constant along a segment and orthogonal to it.
        let s = random_octagon(5.0, 4.0).unwrap();
        let z = 0.35;
        let a = s.surface_sample(0.2, z);
        let b = s.surface_sample(0.6, z);
        assert!((a.unit_outward_normal[0] - b.unit_outward_normal[0]).abs() < 1e-14);
        assert!((a.unit_outward_normal[1] - b.unit_outward_normal[1]).abs() < 1e-14);
        let v0 = [5.0, 0.0];
        let v1 = [(5.0 + 4.0 * z) * (PI / 4.0).cos(), (5.0 + 4.0 * z) * (PI / 4.0).sin()];
        let t = [v1[0] - v0[0], v1[1] - v0[1]];
        assert!((t[0] * a.unit_outward_normal[0] + t[1] * a.unit_outward_normal[1]).abs() < 1e-13);
        assert!(a.unit_outward_normal[0] * a.position[0] + a.unit_outward_normal[1] * a.position[1] > 0.0);
    }

    #[test]
    fn ellipse_fiber_limits() {
        let e = Ellipse { a: 5.0, b: 1.0 };
        assert!((e.intersection_angle(1.0 + 1e-12) - PI / 2.0).abs() < 1e-5);
        assert!(e.intersection_angle(5.0 - 1e-12).abs() < 1e-5);
        let s = StarShape::Ellipse(e);
        for &r in &[1.01, 2.0, 3.3, 4.99] {
            let br = s.fiber_solve(0.4, r).unwrap();
            assert_eq!(br.len(), 4);
            for b in br {
                assert!((s.rho(0.4, b.z) - r).abs() < 1e-12 * r);
            }
        }
        assert!(s.fiber_solve(0.4, 0.5).unwrap().is_empty());
    }

    #[test]
    fn dt_r_dr_matches_finite_difference() {
        let e = Ellipse { a: 5.0, b: 1.0 };
        let want = fd(|r| e.intersection_angle(r), 3.0, 1e-6);
        let got = dt_r_dr(5.0, 1.0, 3.0).unwrap();
        assert!((got - want).abs() < 1e-8);
        assert!(got < 0.0);
        assert!(dt_r_dr(5.0, 1.0, 5.0).is_err());
        assert!(dt_r_dr(5.0, 1.0, 1.0).is_err());
        assert!(dt_r_dr(5.0, 1.0, 5.0 - 1e-12).unwrap().abs() > 1e4);
    }

    #[test]
    fn octagon_closed_form_agrees_with_generic() {
        let s = random_octagon(5.0, 4.0).unwrap();
        for &(theta, r) in &[(0.3, 4.0), (1.1, 6.5), (2.0, 2.0), (4.0, 8.0), (5.9, 3.0)] {
            let a = s.fiber_solve(theta, r).unwrap();
            let b = s.fiber_solve_generic(theta, r).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x.z - y.z).abs() < 1e-11);
                assert!((x.grad_z_magnitude - y.grad_z_magnitude).abs() < 1e-9 * x.grad_z_magnitude);
            }
        }
    }

    #[test]
    fn octagon_fiber_round_trip() {
        use rand::{Rng, SeedableRng};
        let s = random_octagon(5.0, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut solved = 0;
        for _ in 0..10_000 {
            let theta = rng.gen_range(0.0..TAU);
            let r = rng.gen_range(1.0..9.0);
            for b in s.fiber_solve(theta, r).unwrap() {
                assert!((s.rho(theta, b.z) - r).abs() <= 1e-12 * r);
                assert!((-1.0..=1.0).contains(&b.z));
                solved += 1;
            }
        }
        assert!(solved > 1000);
    }

    #[test]
    fn implicit_function_identities() {
        // ∂_z ρ · ∂_r z_r = 1 and |∇z_r| = s |∂_r z_r|, both sides by differences.
        let shapes = [ellipse_shape(5.0, 1.0).unwrap(), random_octagon(5.0, 4.0).unwrap()];
        for s in &shapes {
            for &(theta, r) in &[(0.3, 3.1), (1.3, 4.2), (2.5, 1.7)] {
                let br = s.fiber_solve(theta, r).unwrap();
                for (k, b) in br.iter().enumerate() {
                    let z_of_r = |rr: f64| s.fiber_solve(theta, rr).unwrap()[k].z;
                    let z_of_t = |tt: f64| s.fiber_solve(tt, r).unwrap()[k].z;
                    let dr = fd(z_of_r, r, 1e-6);
                    let dt = fd(z_of_t, theta, 1e-6);
                    let dz = fd(|z| s.rho(theta, z), b.z, 1e-6);
                    assert!((dz * dr - 1.0).abs() < 1e-6);
                    let grad = dr.hypot(dt / r);
                    assert!((grad - s.metric(theta, b.z) * dr.abs()).abs() < 1e-6 * grad);
                    assert!((grad - b.grad_z_magnitude).abs() < 1e-6 * grad);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn radial_bounds_hold(theta in 0.0..TAU, u in 0.0f64..1.0) {
            let e = ellipse_shape(5.0, 1.0).unwrap();
            let rho = e.rho(theta, u * TAU);
            prop_assert!(rho >= 1.0 - 1e-14 && rho <= 5.0 + 1e-14);
            let o = random_octagon(5.0, 4.0).unwrap();
            let rho = o.rho(theta, 2.0 * u - 1.0);
            prop_assert!(rho >= 1.0 - 1e-12 && rho <= 9.0 + 1e-12);
        }

        #[test]
        fn polygon_continuous_across_vertices(q in 1usize..=8, z in -1.0f64..1.0) {
            let o = random_octagon(5.0, 4.0).unwrap();
            let th = q as f64 * PI / 4.0;
            let left = o.rho(th - 1e-9, z);
            let right = o.rho(th + 1e-9, z);
            prop_assert!((left - right).abs() < 1e-6);
        }
    }
}
