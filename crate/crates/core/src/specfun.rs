//! Integer-order cylinder functions and the wavefunctions built from them.
//!
//! `J_n` comes from Miller's backward recurrence normalized by
//! `J_0 + 2 Σ J_2k = 1`, which is accurate for every argument in the working
//! range. `Y_0` and `Y_1` follow from the Neumann series over the same
//! sequence and higher orders from forward recurrence, which is stable for the
//! dominant solution.

use std::f64::consts::FRAC_2_PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_AT: f64 = 1e250;
const OVERFLOW_AT: f64 = 1e300;

/// Which cylinder function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CylinderKind {
    BesselJ,
    BesselY,
    Hankel1,
}

/// A cylinder function `C_m` of integer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CylinderFn {
    pub order: i32,
    pub kind: CylinderKind,
}

impl CylinderFn {
    pub fn new(kind: CylinderKind, order: i32) -> Self {
        Self { order, kind }
    }

    /// `C_m(x)`. Real kinds return a zero imaginary part.
    pub fn eval(&self, x: f64) -> Result<Complex64> {
        self.check_domain(x)?;
        let n = self.order.unsigned_abs() as usize;
        let seq = CylinderSeq::new(n + 1, x, self.kind != CylinderKind::BesselJ)?;
        Ok(self.pick(&seq, self.order))
    }

    /// `C'_m(x) = (C_{m-1}(x) - C_{m+1}(x)) / 2`.
    pub fn eval_derivative(&self, x: f64) -> Result<Complex64> {
        self.check_domain(x)?;
        let n = self.order.unsigned_abs() as usize;
        let seq = CylinderSeq::new(n + 1, x, self.kind != CylinderKind::BesselJ)?;
        Ok(0.5 * (self.pick(&seq, self.order - 1) - self.pick(&seq, self.order + 1)))
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let ok = match self.kind {
            CylinderKind::BesselJ => x >= 0.0,
            _ => x > 0.0,
        };
        if ok && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "cylinder function",
                x,
            })
        }
    }

    fn pick(&self, seq: &CylinderSeq, order: i32) -> Complex64 {
        match self.kind {
            CylinderKind::BesselJ => Complex64::new(seq.j(order), 0.0),
            CylinderKind::BesselY => Complex64::new(seq.y(order), 0.0),
            CylinderKind::Hankel1 => seq.h(order),
        }
    }
}

/// `J_n(x)`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    CylinderFn::new(CylinderKind::BesselJ, n).eval(x).map(|c| c.re)
}

/// `Y_n(x)`.
pub fn bessel_y(n: i32, x: f64) -> Result<f64> {
    CylinderFn::new(CylinderKind::BesselY, n).eval(x).map(|c| c.re)
}

/// `H_n(x) = J_n(x) + i Y_n(x)`.
pub fn hankel1(n: i32, x: f64) -> Result<Complex64> {
    CylinderFn::new(CylinderKind::Hankel1, n).eval(x)
}

/// `J_n(x)` and optionally `Y_n(x)` for all orders `0..=nmax` at one argument.
#[derive(Debug, Clone)]
pub struct CylinderSeq {
    j: Vec<f64>,
    y: Vec<f64>,
}

impl CylinderSeq {
    pub fn new(nmax: usize, x: f64, with_y: bool) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() || (with_y && x == 0.0) {
            return Err(Error::Domain {
                what: "cylinder sequence",
                x,
            });
        }
        let (j, tail) = bessel_j_sequence(nmax, x);
        let y = if with_y {
            bessel_y_sequence(nmax, x, &tail)?
        } else {
            Vec::new()
        };
        Ok(Self { j, y })
    }

    pub fn nmax(&self) -> usize {
        self.j.len() - 1
    }

    /// `J_n` for any `|n| <= nmax`.
    pub fn j(&self, n: i32) -> f64 {
        reflect(n, &self.j)
    }

    /// `Y_n` for any `|n| <= nmax`.
    pub fn y(&self, n: i32) -> f64 {
        reflect(n, &self.y)
    }

    pub fn h(&self, n: i32) -> Complex64 {
        Complex64::new(self.j(n), self.y(n))
    }

    pub fn h_prime(&self, n: i32) -> Complex64 {
        0.5 * (self.h(n - 1) - self.h(n + 1))
    }

    pub fn j_prime(&self, n: i32) -> f64 {
        0.5 * (self.j(n - 1) - self.j(n + 1))
    }
}

fn reflect(n: i32, values: &[f64]) -> f64 {
    let k = n.unsigned_abs() as usize;
    let v = values[k];
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Normalized backward recurrence. Returns `J_0..=J_nmax` and the full
/// normalized sequence up to the starting order (needed by the Neumann series).
fn bessel_j_sequence(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    if x == 0.0 {
        let mut j = vec![0.0; nmax + 1];
        j[0] = 1.0;
        return (j.clone(), j);
    }
    let top = (nmax as f64).max(x);
    let mut start = (top + 30.0 + 3.0 * top.sqrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut seq = vec![0.0; start + 2];
    seq[start] = 1e-30;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        let next = k as f64 * two_over_x * seq[k] - seq[k + 1];
        seq[k - 1] = next;
        if next.abs() > RESCALE_AT {
            for v in &mut seq[k - 1..] {
                *v /= RESCALE_AT;
            }
        }
    }
    // J_0 + 2 (J_2 + J_4 + ...) = 1, smallest terms first.
    let mut norm = 0.0;
    for k in (1..=start / 2).rev() {
        norm += seq[2 * k];
    }
    norm = seq[0] + 2.0 * norm;
    for v in &mut seq {
        *v /= norm;
    }
    seq.truncate(start + 1);
    let mut j = seq[..=nmax.min(start)].to_vec();
    j.resize(nmax + 1, 0.0);
    (j, seq)
}

fn bessel_y_sequence(nmax: usize, x: f64, jseq: &[f64]) -> Result<Vec<f64>> {
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let kmax = (jseq.len() - 2) / 2;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for k in (1..=kmax).rev() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        s0 += sign * jseq[2 * k] / kf;
        s1 += sign * (jseq[2 * k - 1] - jseq[2 * k + 1]) / kf;
    }
    let y0 = FRAC_2_PI * (log_term * jseq[0] - 2.0 * s0);
    let y1 = FRAC_2_PI * (log_term * jseq[1] - jseq[0] / x + s1);
    let mut y = Vec::with_capacity(nmax + 1);
    y.push(y0);
    if nmax >= 1 {
        y.push(y1);
    }
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
        if !next.is_finite() || next.abs() > OVERFLOW_AT {
            return Err(Error::Overflow {
                what: "Bessel Y",
                order: n as i64 + 1,
                x,
            });
        }
        y.push(next);
    }
    Ok(y)
}

/// A field value together with its Cartesian gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: Complex64,
    pub gradient: [Complex64; 2],
}

impl FieldSample {
    /// Normal derivative along `normal`.
    pub fn normal_derivative(&self, normal: [f64; 2]) -> Complex64 {
        self.gradient[0] * normal[0] + self.gradient[1] * normal[1]
    }
}

/// `H_m(κ|r - r_src|) e^{i m φ}`, `φ` the polar angle of `r - r_src`.
pub fn outgoing_source(m: i32, kappa: f64, r: [f64; 2], r_src: [f64; 2]) -> Result<FieldSample> {
    let order = m.unsigned_abs() as usize;
    let mut out = vec![FieldSample::zero(); 2 * order + 1];
    outgoing_multipoles(order, kappa, r, r_src, &mut out)?;
    Ok(out[(m + order as i32) as usize])
}

/// All multipoles `-max_order..=max_order` at once; `out[p + max_order]`.
pub fn outgoing_multipoles(
    max_order: usize,
    kappa: f64,
    r: [f64; 2],
    r_src: [f64; 2],
    out: &mut [FieldSample],
) -> Result<()> {
    if out.len() != 2 * max_order + 1 {
        return Err(Error::Dimension {
            expected: 2 * max_order + 1,
            found: out.len(),
        });
    }
    let dx = r[0] - r_src[0];
    let dy = r[1] - r_src[1];
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return Err(Error::Singularity);
    }
    let (sin_phi, cos_phi) = (dy / dist, dx / dist);
    let seq = CylinderSeq::new(max_order + 1, kappa * dist, true)?;
    let unit = Complex64::new(cos_phi, sin_phi);
    let p = max_order as i32;
    // e^{i q φ} for q = -p..=p, built by repeated multiplication from e^{-i p φ}.
    let mut phase = unit.conj().powu(max_order as u32);
    for (slot, q) in out.iter_mut().zip(-p..=p) {
        let h = seq.h(q);
        let value = h * phase;
        let radial = kappa * seq.h_prime(q) * phase;
        let angular = Complex64::new(0.0, q as f64) * value / dist;
        *slot = FieldSample {
            value,
            gradient: [
                radial * cos_phi - angular * sin_phi,
                radial * sin_phi + angular * cos_phi,
            ],
        };
        phase *= unit;
    }
    Ok(())
}

impl FieldSample {
    pub fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            gradient: [Complex64::new(0.0, 0.0); 2],
        }
    }
}

/// Incident plane wave `e^{iκx}` travelling along +x.
pub fn plane_wave(kappa: f64, r: [f64; 2]) -> FieldSample {
    let value = Complex64::from_polar(1.0, kappa * r[0]);
    FieldSample {
        value,
        gradient: [Complex64::new(0.0, kappa) * value, Complex64::new(0.0, 0.0)],
    }
}

/// Number of cylinder modes `μ = ⌈3 κ r_max⌉` kept on each side of zero.
pub fn truncation_order(kappa: f64, r_max: f64) -> usize {
    // Absorb round-off so that exact products like 3 * 0.1 * 10 stay put.
    let x = 3.0 * kappa * r_max;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-12 * x.max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

/// Sound-soft circle coefficients `-i^m J_m(κa) / H_m(κa)`.
pub fn circle_coefficient(m: i32, kappa: f64, radius: f64) -> Result<Complex64> {
    let x = kappa * radius;
    let seq = CylinderSeq::new(m.unsigned_abs() as usize, x, true)?;
    let i_pow = Complex64::new(0.0, 1.0).powi(m);
    Ok(-i_pow * seq.j(m) / seq.h(m))
}

/// Wronskian `J_m Y'_m - J'_m Y_m`, which equals `2/(πx)`.
pub fn wronskian(m: i32, x: f64) -> Result<f64> {
    let seq = CylinderSeq::new(m.unsigned_abs() as usize + 1, x, true)?;
    let yp = 0.5 * (seq.y(m - 1) - seq.y(m + 1));
    Ok(seq.j(m) * yp - seq.j_prime(m) * seq.y(m))
}
