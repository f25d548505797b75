//! Exact geometry of the upper half-plane with curvature −1.
//!
//! Points, boundary points, orientation-preserving isometries (real Möbius
//! maps), distances, Busemann functions, Hopf coordinates, shadows and
//! dynamical balls. Everything here is closed form; nothing integrates.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::ops::Mul;

/// Default grid step used to certify dynamical-ball membership.
pub const DYNAMICAL_BALL_STEP: f64 = 0.05;

/// Hyperbolicity constant of H²: pairwise distance of the inner points of
/// an ideal triangle, `2 ln((1 + √5)/2)`.
pub const H2_INSIZE: f64 = 0.962_423_650_119_206_9;

/// A point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    x: f64,
    y: f64,
}

/// The canonical basepoint `i`.
pub const BASEPOINT: HPoint = HPoint { x: 0.0, y: 1.0 };

impl HPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || y <= 0.0 {
            return Err(Error::Domain(format!(
                "({x}, {y}) is not in the upper half-plane"
            )));
        }
        Ok(Self { x, y })
    }

    pub(crate) const fn new_unchecked(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }
}

impl fmt::Display for HPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// `cosh d(p, q)`; cheaper than [`hyp_distance`] when only comparisons matter.
#[inline]
pub fn cosh_distance(p: HPoint, q: HPoint) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    1.0 + (dx * dx + dy * dy) / (2.0 * p.y * q.y)
}

/// Hyperbolic distance, via `sinh(d/2) = |p − q| / (2 √(y_p y_q))`, which
/// stays accurate for nearby points.
#[inline]
pub fn hyp_distance(p: HPoint, q: HPoint) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let chord = (dx * dx + dy * dy).sqrt();
    2.0 * (chord / (2.0 * (p.y * q.y).sqrt())).asinh()
}

/// A point of the visual boundary `R ∪ {∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryPoint {
    Finite(f64),
    Infinity,
}

impl BoundaryPoint {
    /// Angle in `[0, 2π)` of this point in the disk model centred at `o`.
    /// Infinity sits at angle 0 when `o` is on the imaginary axis.
    pub fn disk_angle(self, o: HPoint) -> f64 {
        match self {
            BoundaryPoint::Infinity => 0.0,
            BoundaryPoint::Finite(xi) => {
                let s = (xi - o.x) / o.y;
                (2.0 * 1.0_f64.atan2(-s)).rem_euclid(TAU)
            }
        }
    }

    /// Inverse of [`BoundaryPoint::disk_angle`].
    pub fn from_disk_angle(o: HPoint, angle: f64) -> Self {
        let half = 0.5 * angle.rem_euclid(TAU);
        let s = half.sin();
        if s == 0.0 {
            BoundaryPoint::Infinity
        } else {
            BoundaryPoint::Finite(o.x - o.y * half.cos() / s)
        }
    }

    /// Angular separation seen from `i`; a scale-free comparison.
    pub fn separation(self, other: BoundaryPoint) -> f64 {
        let d = (self.disk_angle(BASEPOINT) - other.disk_angle(BASEPOINT)).rem_euclid(TAU);
        d.min(TAU - d)
    }

    pub fn approx_eq(self, other: BoundaryPoint, tol: f64) -> bool {
        self.separation(other) <= tol
    }
}

/// An orientation-preserving isometry `z ↦ (az + b)/(cz + d)` with
/// `ad − bc = 1` and the first nonzero entry positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MobiusMap {
    pub const IDENTITY: MobiusMap = MobiusMap {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Builds and normalizes a map; the determinant must be positive.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !det.is_finite() || det <= 0.0 {
            return Err(Error::Invalid(format!(
                "matrix [[{a}, {b}], [{c}, {d}]] has non-positive determinant {det}"
            )));
        }
        Ok(Self { a, b, c, d }.normalized())
    }

    pub fn translation(t: f64) -> Self {
        Self {
            a: 1.0,
            b: t,
            c: 0.0,
            d: 1.0,
        }
    }

    /// `z ↦ λ z`, a hyperbolic map of translation length `|ln λ|`.
    pub fn dilation(lambda: f64) -> Self {
        let s = lambda.sqrt();
        Self {
            a: s,
            b: 0.0,
            c: 0.0,
            d: 1.0 / s,
        }
    }

    /// Rotation by `angle` about `i`.
    pub fn rotation_about_i(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self {
            a: c,
            b: s,
            c: -s,
            d: c,
        }
        .normalized()
    }

    /// Determinant, evaluated with a compensated product so the only error
    /// left is the rounding of the entries themselves.
    pub fn det(&self) -> f64 {
        let w = self.b * self.c;
        let e = (-self.b).mul_add(self.c, w);
        let f = self.a.mul_add(self.d, -w);
        f + e
    }

    /// `|det − 1|` relative to the size of the products `ad` and `bc`. Stored
    /// entries carry a relative rounding error, so a large matrix cannot have
    /// a determinant closer to 1 than about `ε·|ad|`; this measures drift
    /// beyond that floor.
    pub fn det_drift(&self) -> f64 {
        (self.det() - 1.0).abs() / (self.a * self.d).abs().max((self.b * self.c).abs()).max(1.0)
    }

    /// Sign convention plus rescaling when the determinant has drifted by
    /// more than the representable floor.
    #[must_use]
    fn renormalized(self) -> Self {
        let scale = (self.a * self.d).abs().max((self.b * self.c).abs()).max(1.0);
        let det = self.det();
        let mut m = if (det - 1.0).abs() > 8.0 * f64::EPSILON * scale && det > 0.0 {
            let k = 1.0 / det.sqrt();
            Self {
                a: self.a * k,
                b: self.b * k,
                c: self.c * k,
                d: self.d * k,
            }
        } else {
            self
        };
        let lead = [m.a, m.b, m.c, m.d]
            .into_iter()
            .find(|v| *v != 0.0)
            .unwrap_or(1.0);
        if lead < 0.0 {
            m = Self {
                a: -m.a,
                b: -m.b,
                c: -m.c,
                d: -m.d,
            };
        }
        m
    }

    /// Rescales to unit determinant and fixes the sign convention.
    #[must_use]
    pub fn normalized(self) -> Self {
        let k = 1.0 / self.det().sqrt();
        let mut m = Self {
            a: self.a * k,
            b: self.b * k,
            c: self.c * k,
            d: self.d * k,
        };
        let lead = [m.a, m.b, m.c, m.d]
            .into_iter()
            .find(|v| *v != 0.0)
            .unwrap_or(1.0);
        if lead < 0.0 {
            m = Self {
                a: -m.a,
                b: -m.b,
                c: -m.c,
                d: -m.d,
            };
        }
        m
    }

    pub fn inverse(&self) -> Self {
        Self {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
        .renormalized()
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// `cosh d(i, m(i))`, read off the matrix entries.
    pub fn cosh_displacement_at_i(&self) -> f64 {
        0.5 * (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d)
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.trace().abs() > 2.0 + 1e-12
    }

    pub fn is_parabolic(&self) -> bool {
        (self.trace().abs() - 2.0).abs() <= 1e-12 && !self.approx_identity(1e-12)
    }

    pub fn approx_identity(&self, tol: f64) -> bool {
        (self.a - 1.0).abs() <= tol
            && self.b.abs() <= tol
            && self.c.abs() <= tol
            && (self.d - 1.0).abs() <= tol
    }

    /// Max-norm distance between normalized matrices.
    pub fn distance_to(&self, other: &MobiusMap) -> f64 {
        (self.a - other.a)
            .abs()
            .max((self.b - other.b).abs())
            .max((self.c - other.c).abs())
            .max((self.d - other.d).abs())
    }

    /// Translation length `2 arccosh(|tr|/2)`; zero for non-hyperbolic maps.
    pub fn translation_length(&self) -> f64 {
        let half = 0.5 * self.trace().abs();
        if half <= 1.0 {
            0.0
        } else {
            2.0 * half.acosh()
        }
    }

    #[inline]
    pub fn apply_complex(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }

    /// Image of a point; rejects images that leave the open half-plane
    /// (only possible through overflow or underflow).
    #[inline]
    pub fn apply(&self, p: HPoint) -> Result<HPoint> {
        let q = self.apply_unchecked(p);
        if q.y > 0.0 && q.y.is_finite() && q.x.is_finite() {
            Ok(q)
        } else {
            Err(Error::Domain(format!("image of {p} left the half-plane")))
        }
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, p: HPoint) -> HPoint {
        // (a z + b)/(c z + d) with Im = y / |cz + d|^2
        let den_re = self.c * p.x + self.d;
        let den_im = self.c * p.y;
        let den = den_re * den_re + den_im * den_im;
        let num_re = self.a * p.x + self.b;
        let num_im = self.a * p.y;
        let re = (num_re * den_re + num_im * den_im) / den;
        HPoint::new_unchecked(re, p.y / den)
    }

    pub fn apply_boundary(&self, xi: BoundaryPoint) -> BoundaryPoint {
        match xi {
            BoundaryPoint::Infinity => {
                if self.c == 0.0 {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::Finite(self.a / self.c)
                }
            }
            BoundaryPoint::Finite(x) => {
                let den = self.c * x + self.d;
                if den == 0.0 {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::Finite((self.a * x + self.b) / den)
                }
            }
        }
    }

    /// Complex derivative `1/(cz + d)²`.
    #[inline]
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let w = z * self.c + self.d;
        (w * w).inv()
    }

    /// Fixed points `(repelling, attracting)` of a hyperbolic map.
    pub fn fixed_points(&self) -> Option<(BoundaryPoint, BoundaryPoint)> {
        if !self.is_hyperbolic() {
            return None;
        }
        let (p, q) = if self.c == 0.0 {
            (
                BoundaryPoint::Infinity,
                BoundaryPoint::Finite(self.b / (self.d - self.a)),
            )
        } else {
            // c z² + (d − a) z − b = 0
            let disc = ((self.d - self.a).powi(2) + 4.0 * self.b * self.c).sqrt();
            let bq = self.d - self.a;
            // numerically stable pair of roots
            let qq = -0.5 * (bq + disc.copysign(bq));
            let r1 = qq / self.c;
            let r2 = -self.b / qq;
            (BoundaryPoint::Finite(r1), BoundaryPoint::Finite(r2))
        };
        let attracting = |xi: BoundaryPoint| match xi {
            BoundaryPoint::Infinity => (self.a / self.d).abs() > 1.0,
            BoundaryPoint::Finite(x) => self.derivative(Complex64::new(x, 0.0)).norm() < 1.0,
        };
        if attracting(q) {
            Some((p, q))
        } else {
            Some((q, p))
        }
    }

    /// An isometry sending `xi_minus` to 0 and `xi_plus` to ∞.
    pub fn to_standard_axis(xi_minus: BoundaryPoint, xi_plus: BoundaryPoint) -> Result<Self> {
        use BoundaryPoint::*;
        match (xi_minus, xi_plus) {
            (Finite(m), Infinity) => Ok(Self::translation(-m)),
            (Infinity, Finite(p)) => MobiusMap::new(0.0, -1.0, 1.0, -p),
            (Finite(m), Finite(p)) if m != p => {
                if m > p {
                    MobiusMap::new(1.0, -m, 1.0, -p)
                } else {
                    MobiusMap::new(-1.0, m, 1.0, -p)
                }
            }
            _ => Err(Error::Domain("geodesic endpoints must be distinct".into())),
        }
    }

    /// An isometry sending `x` to `i` and `y` to `i e^{d(x,y)}`.
    pub fn to_vertical_segment(x: HPoint, y: HPoint) -> Self {
        UnitTangent::toward(x, y).frame()
    }
}

impl Mul for MobiusMap {
    type Output = MobiusMap;

    /// Composition: `(f * g)(z) = f(g(z))`.
    fn mul(self, g: MobiusMap) -> MobiusMap {
        MobiusMap {
            a: self.a * g.a + self.b * g.c,
            b: self.a * g.b + self.b * g.d,
            c: self.c * g.a + self.d * g.c,
            d: self.c * g.b + self.d * g.d,
        }
        .renormalized()
    }
}

/// `apply_mobius` from the operation list.
pub fn apply_mobius(m: &MobiusMap, p: HPoint) -> Result<HPoint> {
    m.apply(p)
}

/// Busemann function `B_ξ(x, y) = lim d(x, z) − d(y, z)` as `z → ξ`.
pub fn busemann_exact(xi: BoundaryPoint, x: HPoint, y: HPoint) -> f64 {
    match xi {
        BoundaryPoint::Infinity => (y.y / x.y).ln(),
        BoundaryPoint::Finite(s) => {
            let nx = (x.x - s).powi(2) + x.y * x.y;
            let ny = (y.x - s).powi(2) + y.y * y.y;
            (y.y * nx / (x.y * ny)).ln()
        }
    }
}

/// A unit tangent vector: basepoint plus Euclidean direction angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitTangent {
    pub base: HPoint,
    angle: f64,
}

impl UnitTangent {
    pub fn new(base: HPoint, angle: f64) -> Self {
        Self {
            base,
            angle: angle.rem_euclid(TAU),
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// The unit vector at `p` pointing along the geodesic toward `q`.
    pub fn toward(p: HPoint, q: HPoint) -> Self {
        let w = Complex64::new((q.x - p.x) / p.y, q.y / p.y);
        let i = Complex64::i();
        let disk = (w - i) / (w + i);
        Self::new(p, disk.arg() + FRAC_PI_2)
    }

    /// The unit vector at `p` whose geodesic ray ends at `xi`.
    pub fn toward_boundary(p: HPoint, xi: BoundaryPoint) -> Self {
        match xi {
            BoundaryPoint::Infinity => Self::new(p, FRAC_PI_2),
            BoundaryPoint::Finite(x) => {
                let w = Complex64::new((x - p.x) / p.y, 0.0);
                let i = Complex64::i();
                Self::new(p, ((w - i) / (w + i)).arg() + FRAC_PI_2)
            }
        }
    }

    /// The isometry carrying `self` to the upward vector at `i`.
    pub fn frame(&self) -> MobiusMap {
        let s = self.base.y.sqrt();
        let t = MobiusMap {
            a: 1.0 / s,
            b: -self.base.x / s,
            c: 0.0,
            d: s,
        };
        MobiusMap::rotation_about_i(FRAC_PI_2 - self.angle) * t
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.base, self.angle + std::f64::consts::PI)
    }

    /// Image of the vector under an isometry.
    pub fn pushforward(&self, m: &MobiusMap) -> Result<Self> {
        let base = m.apply(self.base)?;
        let rot = m.derivative(self.base.to_complex()).arg();
        Ok(Self::new(base, self.angle + rot))
    }

    /// Unperturbed geodesic flow `g^s`.
    pub fn flow(&self, s: f64) -> Self {
        let inv = self.frame().inverse();
        let z = HPoint::new_unchecked(0.0, s.exp());
        let base = inv.apply_unchecked(z);
        let rot = inv.derivative(z.to_complex()).arg();
        Self::new(base, FRAC_PI_2 + rot)
    }

    pub fn forward_endpoint(&self) -> BoundaryPoint {
        self.frame().inverse().apply_boundary(BoundaryPoint::Infinity)
    }

    pub fn backward_endpoint(&self) -> BoundaryPoint {
        self.frame().inverse().apply_boundary(BoundaryPoint::Finite(0.0))
    }
}

/// Hopf coordinates `(ξ₋, ξ₊, t)` with `t = B_{ξ₊}(o, πv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfCoordinates {
    pub xi_minus: BoundaryPoint,
    pub xi_plus: BoundaryPoint,
    pub t: f64,
}

pub fn hopf_coords(v: &UnitTangent, o: HPoint) -> HopfCoordinates {
    let xi_plus = v.forward_endpoint();
    HopfCoordinates {
        xi_minus: v.backward_endpoint(),
        xi_plus,
        t: busemann_exact(xi_plus, o, v.base),
    }
}

pub fn hopf_inverse(h: &HopfCoordinates, o: HPoint) -> Result<UnitTangent> {
    let m = MobiusMap::to_standard_axis(h.xi_minus, h.xi_plus)?;
    let mo = m.apply(o)?;
    let height = (h.t + mo.y.ln()).exp();
    let p = HPoint::new(0.0, height)?;
    UnitTangent::new(p, FRAC_PI_2).pushforward(&m.inverse())
}

/// A closed arc of the boundary, traversed in the positive direction of the
/// extended real line from `from` to `to`, or the whole circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryArc {
    Full,
    Arc { from: BoundaryPoint, to: BoundaryPoint },
}

impl BoundaryArc {
    pub fn new(from: BoundaryPoint, to: BoundaryPoint) -> Result<Self> {
        if from == to {
            return Err(Error::Invalid("arc endpoints must be distinct".into()));
        }
        Ok(BoundaryArc::Arc { from, to })
    }

    /// Half-open membership `[from, to)`, so an arc and its complement
    /// partition the boundary.
    pub fn contains(&self, xi: BoundaryPoint) -> bool {
        match *self {
            BoundaryArc::Full => true,
            BoundaryArc::Arc { from, to } => {
                let a = from.disk_angle(BASEPOINT);
                let span = (to.disk_angle(BASEPOINT) - a).rem_euclid(TAU);
                (xi.disk_angle(BASEPOINT) - a).rem_euclid(TAU) < span
            }
        }
    }

    /// Membership in the closed arc, with a small angular tolerance.
    pub fn contains_closed(&self, xi: BoundaryPoint, tol: f64) -> bool {
        match *self {
            BoundaryArc::Full => true,
            BoundaryArc::Arc { from, to } => {
                let a = from.disk_angle(BASEPOINT);
                let span = (to.disk_angle(BASEPOINT) - a).rem_euclid(TAU);
                let r = (xi.disk_angle(BASEPOINT) - a).rem_euclid(TAU);
                r <= span + tol || r >= TAU - tol
            }
        }
    }

    pub fn complement(&self) -> Option<Self> {
        match *self {
            BoundaryArc::Full => None,
            BoundaryArc::Arc { from, to } => Some(BoundaryArc::Arc { from: to, to: from }),
        }
    }

    /// Angular width of the arc in the disk model centred at `o`.
    pub fn angular_width(&self, o: HPoint) -> f64 {
        match *self {
            BoundaryArc::Full => TAU,
            BoundaryArc::Arc { from, to } => (to.disk_angle(o) - from.disk_angle(o)).rem_euclid(TAU),
        }
    }

    /// Whether two arcs meet, counting shared endpoints as meeting.
    pub fn intersects(&self, other: &BoundaryArc) -> bool {
        match (*self, *other) {
            (BoundaryArc::Full, _) | (_, BoundaryArc::Full) => true,
            (BoundaryArc::Arc { from: f1, to: t1 }, BoundaryArc::Arc { from: f2, to: t2 }) => {
                self.contains_closed(f2, 0.0)
                    || self.contains_closed(t2, 0.0)
                    || other.contains_closed(f1, 0.0)
                    || other.contains_closed(t1, 0.0)
            }
        }
    }

    /// Whether `p` lies in the closed half-plane bounded by the geodesic
    /// joining the endpoints, on the side of the arc.
    pub fn half_plane_contains(&self, p: HPoint) -> bool {
        match *self {
            BoundaryArc::Full => true,
            BoundaryArc::Arc { from, to } => match MobiusMap::to_standard_axis(from, to) {
                // the arc maps onto the positive reals
                Ok(m) => m.apply_unchecked(p).x >= 0.0,
                Err(_) => false,
            },
        }
    }
}

/// Boundary endpoint of the ray from `o` through `p`.
pub fn direction_from(o: HPoint, p: HPoint) -> BoundaryPoint {
    UnitTangent::toward(o, p).forward_endpoint()
}

/// Shadow of the ball `B(center, r)` seen from `o`: the endpoints of rays
/// from `o` meeting the ball. Uses `sin α = sinh r / sinh d(o, center)`.
pub fn shadow_arc(o: HPoint, center: HPoint, r: f64) -> Result<BoundaryArc> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("shadow radius must be positive, got {r}")));
    }
    let d = hyp_distance(o, center);
    if d <= r {
        return Ok(BoundaryArc::Full);
    }
    let half = (r.sinh() / d.sinh()).asin();
    let mid = direction_from(o, center).disk_angle(o);
    BoundaryArc::new(
        BoundaryPoint::from_disk_angle(o, mid - half),
        BoundaryPoint::from_disk_angle(o, mid + half),
    )
}

fn grid_count(t: f64, step: f64) -> i64 {
    (t / step - 1e-12).ceil().max(0.0) as i64
}

/// Grid-certified membership of `w` in the dynamical ball `B(v, T, ε)`:
/// `d(π g^t v, π g^t w) ≤ ε` at `t = k·step` for `k = 0..=⌈T/step⌉`.
pub fn dynamical_ball_contains(v: &UnitTangent, w: &UnitTangent, t_max: f64, eps: f64, step: f64) -> bool {
    dynamical_ball_contains_two_sided(v, w, t_max, 0.0, eps, step)
}

/// Two-sided variant `B(v; T, T', ε)` over `t ∈ [−T', T]`.
pub fn dynamical_ball_contains_two_sided(
    v: &UnitTangent,
    w: &UnitTangent,
    t_fwd: f64,
    t_back: f64,
    eps: f64,
    step: f64,
) -> bool {
    let fv = v.frame().inverse();
    let fw = w.frame().inverse();
    (-grid_count(t_back, step)..=grid_count(t_fwd, step)).all(|k| {
        let z = HPoint::new_unchecked(0.0, (k as f64 * step).exp());
        hyp_distance(fv.apply_unchecked(z), fw.apply_unchecked(z)) <= eps
    })
}
