//! Conformal perturbations `g_ε = e^{2εφ} g₀` of the hyperbolic metric.
//!
//! `φ` is a finite sum of radial bumps, optionally made periodic under a
//! group so that `g_ε` descends to the quotient surface. Geodesics are
//! integrated in a chart adapted to the problem (the unperturbed solution
//! is the imaginary axis there), distances come from two-sided angle
//! shooting, and closed geodesics from curve shortening in Fermi
//! coordinates about the hyperbolic axis.

pub(crate) mod ode;
mod relax;

use crate::error::{Error, Result};
use crate::group::{enumerate_orbit, GroupPresentation, Reducer};
use crate::kernel::{cosh_distance, hyp_distance, BoundaryPoint, HPoint, MobiusMap, UnitTangent, H2_INSIZE};
use crate::word::Word;
use num_complex::Complex64;
use ode::{dp_step, State, Stepper, Tolerance};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

/// Grid step of the finite-difference Laplacian behind the curvature
/// certificate.
pub const CERTIFICATE_GRID: f64 = 0.02;
/// Half-turn rays of the polar certificate grid; the full turn is covered
/// because each ray runs through the centre in both directions.
const CERTIFICATE_RAYS: usize = 16;
/// Safety factor applied to the finite-difference Laplacian bound.
pub const CERTIFICATE_SAFETY: f64 = 2.0;
/// Longest geodesic segment the integrator accepts.
pub const MAX_HORIZON: f64 = 100.0;
/// Convergence target of the distance solver, in length units.
pub const DISTANCE_TOL: f64 = 1e-6;

/// Quintic radial profile: `ψ(0) = 1`, `ψ(1) = 0`, `C²` contact at both
/// ends.
pub fn profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let s3 = s * s * s;
        1.0 - s3 * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn profile_derivative(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        -30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: HPoint,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    /// Value and Euclidean gradient `∂ₓ + i∂ᵧ` at `p`, for one center.
    #[inline]
    fn sample_at(&self, c: HPoint, p: HPoint) -> (f64, Complex64) {
        let ch = cosh_distance(p, c);
        let ch_r = self.radius.cosh();
        if ch >= ch_r {
            return (0.0, Complex64::new(0.0, 0.0));
        }
        let rho = ch.acosh();
        let s = rho / self.radius;
        let value = self.amplitude * profile(s);
        let sh = (ch * ch - 1.0).sqrt();
        if sh < 1e-300 {
            return (value, Complex64::new(0.0, 0.0));
        }
        let (dx, dy) = (p.x() - c.x(), p.y() - c.y());
        let (y, cy) = (p.y(), c.y());
        let gx = dx / (y * cy);
        let gy = dy / (y * cy) - (dx * dx + dy * dy) / (2.0 * y * y * cy);
        let k = self.amplitude * profile_derivative(s) / (self.radius * sh);
        (value, Complex64::new(k * gx, k * gy))
    }
}

#[derive(Debug, Clone)]
struct Periodization {
    group: GroupPresentation,
    /// `cosh` of the largest distance from `o` at which a reduced point can
    /// still meet a support.
    reach_cosh: f64,
}

/// `φ = Σ_k A_k ψ(d(·, c_k)/r_k)`, summed over group translates when
/// periodized.
#[derive(Debug, Clone)]
pub struct BumpField {
    bumps: Vec<Bump>,
    /// Centers to sum over, per bump.
    translates: Vec<Vec<HPoint>>,
    period: Option<Periodization>,
    laplacian: f64,
}

/// Value and Euclidean gradient of `φ` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    /// `∂ₓφ + i ∂ᵧφ`.
    pub grad: Complex64,
}

impl FieldSample {
    /// Length of the hyperbolic gradient, `y·|∇φ|`.
    pub fn hyperbolic_gradient_norm(&self, p: HPoint) -> f64 {
        p.y() * self.grad.norm()
    }
}

fn check_bumps(bumps: &[Bump]) -> Result<()> {
    for (k, b) in bumps.iter().enumerate() {
        if !(b.radius > 0.0 && b.radius.is_finite()) || !b.amplitude.is_finite() {
            return Err(Error::Invalid(format!(
                "bump {k}: radius must be positive and amplitude finite"
            )));
        }
    }
    Ok(())
}

/// Largest `|Δ_hyp ψ(d(·, i)/r)|` over a geodesic polar grid covering the
/// support, by the five-point stencil with hyperbolic step
/// [`CERTIFICATE_GRID`] (Euclidean step `h·y` at height `y`).
fn profile_laplacian_bound(r: f64) -> f64 {
    let h = CERTIFICATE_GRID;
    let c = HPoint::new_unchecked(0.0, 1.0);
    let f = |x: f64, y: f64| {
        let p = HPoint::new_unchecked(x, y);
        profile(cosh_distance(p, c).acosh() / r)
    };
    let radial = ((r + h) / h).ceil() as i64;
    let mut best: f64 = 0.0;
    for k in 0..CERTIFICATE_RAYS {
        let turn = MobiusMap::rotation_about_i(std::f64::consts::PI * k as f64 / CERTIFICATE_RAYS as f64);
        for j in -radial..=radial {
            let Ok(p) = turn.apply(HPoint::new_unchecked(0.0, (j as f64 * h).exp())) else {
                continue;
            };
            let (x, y) = (p.x(), p.y());
            let e = h * y;
            let lap = (f(x + e, y) + f(x - e, y) + f(x, y + e) + f(x, y - e) - 4.0 * f(x, y)) / (h * h);
            best = best.max(lap.abs());
        }
    }
    best
}

impl BumpField {
    pub fn zero() -> Self {
        Self {
            bumps: Vec::new(),
            translates: Vec::new(),
            period: None,
            laplacian: 0.0,
        }
    }

    /// A field on the plane, not periodized.
    pub fn new(bumps: Vec<Bump>) -> Result<Self> {
        check_bumps(&bumps)?;
        let translates = bumps.iter().map(|b| vec![b.center]).collect();
        let laplacian = bumps
            .iter()
            .map(|b| b.amplitude.abs() * profile_laplacian_bound(b.radius))
            .sum();
        Ok(Self {
            bumps,
            translates,
            period: None,
            laplacian,
        })
    }

    /// The `Γ`-periodization of the bumps. Each bump must be disjoint from
    /// its own translates.
    pub fn periodized(bumps: Vec<Bump>, group: &GroupPresentation) -> Result<Self> {
        let mut field = Self::new(bumps)?;
        let o = group.basepoint();
        // a point of the Dirichlet domain within r_k of γc_k satisfies
        // d(o, γc_k) ≤ 2r_k + d(o, c_k)
        let limits: Vec<f64> = field
            .bumps
            .iter()
            .map(|b| 2.0 * b.radius + hyp_distance(o, b.center))
            .collect();
        let r_orbit = field
            .bumps
            .iter()
            .zip(&limits)
            .map(|(b, l)| l + hyp_distance(o, b.center))
            .fold(0.0, f64::max);
        let orbit = enumerate_orbit(group, r_orbit + 1e-9, 1_000_000)?;
        let mut translates = Vec::with_capacity(field.bumps.len());
        for (k, (b, lim)) in field.bumps.iter().zip(&limits).enumerate() {
            let mut list = Vec::new();
            for p in &orbit.points {
                let gc = p.element.apply(b.center)?;
                if hyp_distance(o, gc) > lim + 1e-12 {
                    continue;
                }
                if !p.word.is_identity() && hyp_distance(gc, b.center) < 2.0 * b.radius {
                    return Err(Error::Invalid(format!(
                        "bump {k} overlaps its translate by {}: radius {} is too large at {}",
                        p.word, b.radius, b.center
                    )));
                }
                list.push(gc);
            }
            translates.push(list);
        }
        field.translates = translates;
        let reach = field
            .bumps
            .iter()
            .map(|b| b.radius + hyp_distance(o, b.center))
            .fold(0.0, f64::max);
        field.period = Some(Periodization {
            group: group.clone(),
            reach_cosh: reach.cosh(),
        });
        Ok(field)
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn is_periodized(&self) -> bool {
        self.period.is_some()
    }

    pub fn group(&self) -> Option<&GroupPresentation> {
        self.period.as_ref().map(|p| &p.group)
    }

    pub fn is_zero(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0)
    }

    /// `Σ|A_k|`, a bound for `sup|φ|`.
    pub fn sup_bound(&self) -> f64 {
        self.bumps.iter().map(|b| b.amplitude.abs()).sum()
    }

    /// Finite-difference bound for `sup|Δφ|`, without safety factor.
    pub fn laplacian_bound(&self) -> f64 {
        self.laplacian
    }

    pub fn evaluator(&self) -> FieldEvaluator<'_> {
        FieldEvaluator {
            field: self,
            reducer: self.period.as_ref().map(|p| Reducer::new(&p.group)),
        }
    }

    pub fn value(&self, p: HPoint) -> Result<f64> {
        Ok(self.evaluator().sample(p)?.value)
    }

    pub fn sample(&self, p: HPoint) -> Result<FieldSample> {
        self.evaluator().sample(p)
    }

    fn local(&self, q: HPoint) -> FieldSample {
        let mut value = 0.0;
        let mut grad = Complex64::new(0.0, 0.0);
        for (b, centers) in self.bumps.iter().zip(&self.translates) {
            for &c in centers {
                let (v, g) = b.sample_at(c, q);
                value += v;
                grad += g;
            }
        }
        FieldSample { value, grad }
    }
}

/// Evaluation state; a periodized field keeps a warm reducer so that
/// samples along a curve reduce in a few steps.
pub struct FieldEvaluator<'a> {
    field: &'a BumpField,
    reducer: Option<Reducer<'a>>,
}

impl FieldEvaluator<'_> {
    pub fn sample(&mut self, p: HPoint) -> Result<FieldSample> {
        let field = self.field;
        if field.bumps.is_empty() {
            return Ok(FieldSample {
                value: 0.0,
                grad: Complex64::new(0.0, 0.0),
            });
        }
        match (&mut self.reducer, &field.period) {
            (Some(red), Some(per)) => {
                let q = red.reduce(p)?;
                if cosh_distance(q, per.group.basepoint()) > per.reach_cosh {
                    return Ok(FieldSample {
                        value: 0.0,
                        grad: Complex64::new(0.0, 0.0),
                    });
                }
                let s = field.local(q);
                let jac = red.map().derivative(p.to_complex()).conj();
                Ok(FieldSample {
                    value: s.value,
                    grad: jac * s.grad,
                })
            }
            _ => Ok(field.local(p)),
        }
    }

    pub fn value(&mut self, p: HPoint) -> Result<f64> {
        Ok(self.sample(p)?.value)
    }
}

/// `g_ε = e^{2εφ} g₀`.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    phi: Arc<BumpField>,
    eps: f64,
    id: String,
}

impl ConformalMetric {
    pub fn hyperbolic() -> Self {
        Self {
            phi: Arc::new(BumpField::zero()),
            eps: 0.0,
            id: "g0".into(),
        }
    }

    /// Rejects the metric unless `|ε|·2·sup|Δφ| < 1`, which keeps the
    /// curvature `−e^{−2εφ}(1 + εΔφ)` negative.
    pub fn new(phi: Arc<BumpField>, eps: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(Error::Invalid(format!("eps must be finite, got {eps}")));
        }
        let m = Self {
            phi,
            eps,
            id: if eps == 0.0 {
                "g0".into()
            } else {
                format!("eps={eps}")
            },
        };
        let margin = m.curvature_margin();
        if margin >= 1.0 {
            return Err(Error::CurvatureCertificateMissing(format!(
                "|eps|·{CERTIFICATE_SAFETY}·sup|Δφ| = {margin:.4} ≥ 1 (eps = {eps}, Laplacian bound {:.4})",
                m.phi.laplacian_bound()
            )));
        }
        Ok(m)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn phi(&self) -> &BumpField {
        &self.phi
    }

    pub fn phi_arc(&self) -> Arc<BumpField> {
        self.phi.clone()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.eps == 0.0 || self.phi.is_zero()
    }

    /// `E = 2|ε| sup|φ|`: `e^{−E} g₀ ≤ g_ε ≤ e^{E} g₀`.
    pub fn pinching(&self) -> f64 {
        2.0 * self.eps.abs() * self.phi.sup_bound()
    }

    /// `|ε|·safety·sup|Δφ|`, which the certificate keeps below 1.
    pub fn curvature_margin(&self) -> f64 {
        self.eps.abs() * CERTIFICATE_SAFETY * self.phi.laplacian_bound()
    }

    /// `a_ε` with curvature `≤ −a_ε²`.
    pub fn curvature_rate(&self) -> f64 {
        if self.is_hyperbolic() {
            return 1.0;
        }
        let k = (-2.0 * self.eps.abs() * self.phi.sup_bound()).exp() * (1.0 - self.curvature_margin());
        k.min(1.0).sqrt()
    }

    /// Thin-triangle constant obtained by comparison with curvature `−a_ε²`.
    pub fn hyperbolicity(&self) -> f64 {
        H2_INSIZE / self.curvature_rate()
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance::default()
    }
}

/// `‖v‖^{g_ε} = e^{εφ(πv)}` for a hyperbolic unit vector.
pub fn metric_norm(metric: &ConformalMetric, v: &UnitTangent) -> Result<f64> {
    if metric.is_hyperbolic() {
        return Ok(1.0);
    }
    Ok((metric.eps * metric.phi.value(v.base)?).exp())
}

/// `d/dε ‖v‖^{g_ε}` at `ε = 0`, which is `φ(πv)`.
pub fn metric_norm_derivative(phi: &BumpField, v: &UnitTangent) -> Result<f64> {
    phi.value(v.base)
}

/// Right-hand side of the geodesic equation in a chart `w ↦ z = m(w)`,
/// state `(x, ln y, ϑ)` with direction angle `π/2 + ϑ`, unit `g_ε` speed.
fn geodesic_rhs(ev: &mut FieldEvaluator<'_>, eps: f64, m: &MobiusMap, s: &State) -> Result<State> {
    let y = s[1].exp();
    let (phi, g) = if eps == 0.0 {
        (0.0, Complex64::new(0.0, 0.0))
    } else {
        let w = Complex64::new(s[0], y);
        let z = m.apply_complex(w);
        if !(z.im > 0.0) || !z.re.is_finite() {
            return Err(Error::StepFailure(format!("chart point {w} left the half-plane")));
        }
        let f = ev.sample(HPoint::new_unchecked(z.re, z.im))?;
        (f.value, m.derivative(w).conj() * f.grad)
    };
    let f = (-eps * phi).exp();
    let (sn, cs) = s[2].sin_cos();
    Ok([
        -y * f * sn,
        f * cs,
        f * (-eps * y * g.re * cs - (eps * y * g.im - 1.0) * sn),
    ])
}

fn chart_point(m: &MobiusMap, s: &State) -> HPoint {
    let z = m.apply_complex(Complex64::new(s[0], s[1].exp()));
    HPoint::new_unchecked(z.re, z.im)
}

fn chart_vector(m: &MobiusMap, s: &State) -> UnitTangent {
    let w = Complex64::new(s[0], s[1].exp());
    let rot = m.derivative(w).arg();
    UnitTangent::new(chart_point(m, s), FRAC_PI_2 + s[2] + rot)
}

/// A sampled unit-speed `g_ε` geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub point: HPoint,
    pub direction: UnitTangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub metric_id: String,
    pub length: f64,
}

impl GeodesicPath {
    pub fn end(&self) -> UnitTangent {
        self.samples
            .last()
            .expect("a path has at least its initial sample")
            .direction
    }
}

/// Integrates the `g_ε` geodesic of the hyperbolic unit vector `v0` (its
/// `g_ε` direction) for `g_ε` time `t`.
pub fn integrate_geodesic(metric: &ConformalMetric, v0: &UnitTangent, t: f64) -> Result<GeodesicPath> {
    if !(0.0..=MAX_HORIZON).contains(&t) {
        return Err(Error::Domain(format!(
            "geodesic horizon must lie in [0, {MAX_HORIZON}], got {t}"
        )));
    }
    let chart = v0.frame().inverse();
    let eps = if metric.is_hyperbolic() { 0.0 } else { metric.eps };
    let mut ev = metric.phi.evaluator();
    let mut f = |s: &State| geodesic_rhs(&mut ev, eps, &chart, s);
    let mut st = Stepper::new(&mut f, [0.0, 0.0, 0.0], metric.tolerance())?;
    let mut samples = vec![PathSample {
        t: 0.0,
        point: v0.base,
        direction: *v0,
    }];
    while st.t < t {
        let cap = t - st.t;
        st.advance(&mut f, cap)?;
        if t - st.t < 1e-13 {
            st.t = t;
        }
        samples.push(PathSample {
            t: st.t,
            point: chart_point(&chart, &st.y),
            direction: chart_vector(&chart, &st.y),
        });
    }
    Ok(GeodesicPath {
        samples,
        metric_id: metric.id.clone(),
        length: t,
    })
}

/// `g_ε` geodesic flow for signed time.
pub fn perturbed_flow(metric: &ConformalMetric, v: &UnitTangent, t: f64) -> Result<UnitTangent> {
    if metric.is_hyperbolic() {
        return Ok(v.flow(t));
    }
    if t >= 0.0 {
        Ok(integrate_geodesic(metric, v, t)?.end())
    } else {
        Ok(integrate_geodesic(metric, &v.reversed(), -t)?.end().reversed())
    }
}

/// Where a shot from `i` meets the circle `|w| = e^{r}` of its chart.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    t: f64,
    w: Complex64,
    theta: f64,
}

fn log_radius(s: &State) -> f64 {
    let q = s[0] * (-s[1]).exp();
    s[1] + 0.5 * q.mul_add(q, 1.0).ln()
}

fn shoot_to_circle(
    ev: &mut FieldEvaluator<'_>,
    eps: f64,
    chart: &MobiusMap,
    alpha: f64,
    r: f64,
    t_max: f64,
    opts: Tolerance,
) -> Result<Crossing> {
    let mut f = |s: &State| geodesic_rhs(ev, eps, chart, s);
    let mut st = Stepper::new(&mut f, [0.0, 0.0, alpha], opts)?;
    loop {
        let (t0, y0, k0) = (st.t, st.y, st.k);
        st.advance(&mut f, f64::INFINITY)?;
        if log_radius(&st.y) >= r {
            // Illinois iteration on the length of the last step
            let (mut a, mut fa) = (0.0, log_radius(&y0) - r);
            let (mut b, mut fb) = (st.t - t0, log_radius(&st.y) - r);
            let mut best = (b, st.y);
            let mut side = 0;
            for _ in 0..60 {
                if fb.abs() < 1e-15 || (b - a).abs() < 1e-16 {
                    break;
                }
                let c = (a * fb - b * fa) / (fb - fa);
                let (yc, _, _) = dp_step(&mut f, &y0, &k0, c, opts.tol)?;
                let fc = log_radius(&yc) - r;
                best = (c, yc);
                if fc.abs() < 1e-15 {
                    break;
                }
                if (fc > 0.0) == (fb > 0.0) {
                    b = c;
                    fb = fc;
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                } else {
                    a = c;
                    fa = fc;
                    if side == -1 {
                        fb *= 0.5;
                    }
                    side = -1;
                }
            }
            let y = best.1;
            return Ok(Crossing {
                t: t0 + best.0,
                w: Complex64::new(y[0], y[1].exp()),
                theta: FRAC_PI_2 + y[2],
            });
        }
        if st.t > t_max {
            return Err(Error::ShootingDivergence(format!(
                "no crossing of the target circle within g_ε time {t_max:.3} (alpha = {alpha:e})"
            )));
        }
    }
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// How a distance was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceMethod {
    Exact,
    Shooting,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSolution {
    pub length: f64,
    pub method: DistanceMethod,
    /// Mismatch at the midpoint (Fermi offset and angle) at termination.
    pub residual: f64,
    pub iterations: usize,
    /// Initial `g_ε` direction at `x` (absent for relaxation).
    pub initial: Option<UnitTangent>,
    /// Largest hyperbolic distance of the relaxed curve from the
    /// hyperbolic segment (relaxation only).
    pub max_offset: Option<f64>,
}

struct Shot {
    u: f64,
    omega: f64,
    t: f64,
}

/// Two-sided shooting: geodesics leave `x` and `y` and must meet on the
/// perpendicular bisector of the hyperbolic segment with opposite
/// directions.
fn shoot_distance(metric: &ConformalMetric, x: HPoint, y: HPoint, d0: f64) -> Result<DistanceSolution> {
    let opts = metric.tolerance();
    let eps = metric.eps;
    let na = MobiusMap::to_vertical_segment(x, y);
    let nb = MobiusMap::to_vertical_segment(y, x);
    let (ma, mb) = (na.inverse(), nb.inverse());
    let transfer = na * mb;
    let r = 0.5 * d0;
    let t_max = 1.5 * metric.pinching().exp() * r + 2.0;
    let mut ev = metric.phi.evaluator();
    let shoot_a = |alpha: f64, ev: &mut FieldEvaluator<'_>| -> Result<Shot> {
        let c = shoot_to_circle(ev, eps, &ma, alpha, r, t_max, opts)?;
        Ok(Shot {
            u: (c.w.re / c.w.im).asinh(),
            omega: c.theta - c.w.arg(),
            t: c.t,
        })
    };
    let shoot_b = |beta: f64, ev: &mut FieldEvaluator<'_>| -> Result<Shot> {
        let c = shoot_to_circle(ev, eps, &mb, beta, r, t_max, opts)?;
        let w = transfer.apply_complex(c.w);
        let theta = c.theta + transfer.derivative(c.w).arg();
        Ok(Shot {
            u: (w.re / w.im).asinh(),
            omega: theta + PI - w.arg(),
            t: c.t,
        })
    };
    let residual = |a: &Shot, b: &Shot| [a.u - b.u, wrap(a.omega - b.omega)];
    let (mut alpha, mut beta) = (0.0, 0.0);
    let mut sa = shoot_a(alpha, &mut ev)?;
    let mut sb = shoot_b(beta, &mut ev)?;
    let mut res = residual(&sa, &sb);
    // finite-difference Jacobian once, Broyden updates afterwards
    let delta = 1e-6 / r.cosh();
    let sa_d = shoot_a(alpha + delta, &mut ev)?;
    let sb_d = shoot_b(beta + delta, &mut ev)?;
    let ra = residual(&sa_d, &sb);
    let rb = residual(&sa, &sb_d);
    let mut jac = [
        [(ra[0] - res[0]) / delta, (rb[0] - res[0]) / delta],
        [(ra[1] - res[1]) / delta, (rb[1] - res[1]) / delta],
    ];
    let norm = |r: &[f64; 2]| r[0].abs().max(r[1].abs());
    let mut best = (norm(&res), sa.t + sb.t, alpha);
    let mut iterations = 0;
    while norm(&res) > 1e-11 && iterations < 40 {
        iterations += 1;
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            break;
        }
        let mut da = -(jac[1][1] * res[0] - jac[0][1] * res[1]) / det;
        let mut db = -(-jac[1][0] * res[0] + jac[0][0] * res[1]) / det;
        let cap = da.abs().max(db.abs());
        if cap > 0.5 {
            da *= 0.5 / cap;
            db *= 0.5 / cap;
        }
        alpha += da;
        beta += db;
        sa = shoot_a(alpha, &mut ev)?;
        sb = shoot_b(beta, &mut ev)?;
        let new = residual(&sa, &sb);
        let dr = [new[0] - res[0], new[1] - res[1]];
        let step = [da, db];
        let ss = da * da + db * db;
        if ss > 0.0 {
            for (i, row) in jac.iter_mut().enumerate() {
                let jd = row[0] * step[0] + row[1] * step[1];
                let k = (dr[i] - jd) / ss;
                row[0] += k * step[0];
                row[1] += k * step[1];
            }
        }
        res = new;
        if norm(&res) < best.0 {
            best = (norm(&res), sa.t + sb.t, alpha);
        }
    }
    if best.0 > 1e-8 {
        return Err(Error::ShootingDivergence(format!(
            "midpoint mismatch {:.3e} after {iterations} iterations (d₀ = {d0:.4})",
            best.0
        )));
    }
    let initial = UnitTangent::new(HPoint::new_unchecked(0.0, 1.0), FRAC_PI_2 + best.2).pushforward(&ma)?;
    Ok(DistanceSolution {
        length: best.1,
        method: DistanceMethod::Shooting,
        residual: best.0,
        iterations,
        initial: Some(initial),
        max_offset: None,
    })
}

fn relax_segment(metric: &ConformalMetric, x: HPoint, y: HPoint) -> Result<relax::RelaxOutcome> {
    let d0 = hyp_distance(x, y);
    let chart = MobiusMap::to_vertical_segment(x, y).inverse();
    let n = ((d0 / 0.02).ceil() as usize).max(8);
    let eps = metric.eps;
    let mut ev = metric.phi.evaluator();
    let mut f = |p: HPoint| Ok(eps * ev.value(p)?);
    let out = relax::relax(&mut f, chart, 0.0, d0, n, false)?;
    if out.stalled {
        return Err(Error::ShootingDivergence(format!(
            "relaxation stalled after {} iterations",
            out.iterations
        )));
    }
    Ok(out)
}

/// Fixed-end curve shortening along the hyperbolic segment.
pub fn distance_by_relaxation(metric: &ConformalMetric, x: HPoint, y: HPoint) -> Result<DistanceSolution> {
    let out = relax_segment(metric, x, y)?;
    Ok(DistanceSolution {
        length: out.length,
        method: DistanceMethod::Relaxation,
        residual: 0.0,
        iterations: out.iterations,
        initial: None,
        max_offset: Some(out.u.iter().fold(0.0, |m, u| m.max(u.abs()))),
    })
}

/// Fermi offsets of the relaxed `g_ε` segment from `x` to `y` over the
/// hyperbolic one, at equally spaced nodes including both ends.
pub fn relaxation_profile(metric: &ConformalMetric, x: HPoint, y: HPoint) -> Result<Vec<f64>> {
    let mut u = relax_segment(metric, x, y)?.u;
    u.push(0.0);
    Ok(u)
}

/// `d^{g_ε}(x, y)` with solver diagnostics; shooting first, relaxation if
/// shooting diverges.
pub fn perturbed_distance_detailed(
    metric: &ConformalMetric,
    x: HPoint,
    y: HPoint,
) -> Result<DistanceSolution> {
    let d0 = hyp_distance(x, y);
    if metric.is_hyperbolic() || d0 == 0.0 {
        return Ok(DistanceSolution {
            length: d0,
            method: DistanceMethod::Exact,
            residual: 0.0,
            iterations: 0,
            initial: Some(UnitTangent::toward(x, y)),
            max_offset: Some(0.0),
        });
    }
    match shoot_distance(metric, x, y, d0) {
        Ok(s) => Ok(s),
        Err(Error::ShootingDivergence(msg)) => distance_by_relaxation(metric, x, y)
            .map_err(|e| Error::ShootingDivergence(format!("{msg}; fallback: {e}"))),
        Err(e) => Err(e),
    }
}

pub fn perturbed_distance(metric: &ConformalMetric, x: HPoint, y: HPoint) -> Result<f64> {
    Ok(perturbed_distance_detailed(metric, x, y)?.length)
}

/// The `g_ε` geodesic segment from `x` to `y`.
pub fn perturbed_segment(metric: &ConformalMetric, x: HPoint, y: HPoint) -> Result<GeodesicPath> {
    let sol = perturbed_distance_detailed(metric, x, y)?;
    let v = sol
        .initial
        .ok_or_else(|| Error::ShootingDivergence("segment needs a converged shot".into()))?;
    integrate_geodesic(metric, &v, sol.length)
}

/// Two-point Busemann approximation with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusemannApprox {
    pub value: f64,
    /// `2 d_ε(x, y) e^{−a_ε t}`.
    pub bound: f64,
    pub horizon: f64,
}

/// `d_ε(x, x_t) − d_ε(y, x_t)` with `x_t` at hyperbolic distance `t` from
/// `x` on the ray toward `xi`.
///
/// The recorded bound `2 d e^{−a t}` is the asymptotic form. For `y` close to
/// the ray the true error decays like `e^{2(d − t)}` and can exceed it until
/// `t` is about `2d`.
pub fn busemann_approx(
    metric: &ConformalMetric,
    xi: BoundaryPoint,
    x: HPoint,
    y: HPoint,
    t: f64,
) -> Result<BusemannApprox> {
    let d0 = hyp_distance(x, y);
    if t < d0 + 2.0 {
        return Err(Error::Domain(format!(
            "horizon {t} must be at least d₀(x, y) + 2 = {}",
            d0 + 2.0
        )));
    }
    if x == y {
        return Ok(BusemannApprox {
            value: 0.0,
            bound: 0.0,
            horizon: t,
        });
    }
    let xt = UnitTangent::toward_boundary(x, xi).flow(t).base;
    let (value, dxy) = if metric.is_hyperbolic() {
        (t - hyp_distance(y, xt), d0)
    } else {
        let dx = perturbed_distance(metric, x, xt)?;
        let dy = perturbed_distance(metric, y, xt)?;
        (dx - dy, perturbed_distance(metric, x, y)?)
    };
    Ok(BusemannApprox {
        value,
        bound: 2.0 * dxy * (-metric.curvature_rate() * t).exp(),
        horizon: t,
    })
}

/// Perturbed length of a closed geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLength {
    pub length: f64,
    /// Hyperbolic length of the relaxed curve.
    pub g0_length: f64,
    /// Translation length of the element.
    pub length0: f64,
    pub stalled: bool,
    pub iterations: usize,
    pub nodes: usize,
    /// Largest hyperbolic distance of the relaxed curve from the axis.
    pub max_offset: f64,
    /// Whether the energy never increased between iterations.
    pub monotone: bool,
}

fn node_count(metric: &ConformalMetric, span: f64) -> usize {
    let r_min = metric
        .phi
        .bumps()
        .iter()
        .map(|b| b.radius)
        .fold(f64::INFINITY, f64::min);
    let h = (0.1 * r_min).min(0.1);
    ((span / h).ceil() as usize).max(8)
}

/// Chart sending the imaginary axis to the axis of `g`, and the Fermi `s`
/// of the projection of `o`.
fn axis_chart(g: &MobiusMap, o: HPoint) -> Result<(MobiusMap, f64)> {
    let (rep, att) = g
        .fixed_points()
        .ok_or_else(|| Error::Invalid("closed geodesics need a hyperbolic element".into()))?;
    let s = MobiusMap::to_standard_axis(rep, att)?;
    let w = s.apply(o)?;
    Ok((s.inverse(), w.to_complex().norm().ln()))
}

/// `g_ε`-length of the closed geodesic of a hyperbolic element, by
/// periodic curve shortening started on the hyperbolic axis.
pub fn closed_geodesic_length_of(metric: &ConformalMetric, element: &MobiusMap) -> Result<ClosedLength> {
    let length0 = element.translation_length();
    if metric.is_hyperbolic() {
        return Ok(ClosedLength {
            length: length0,
            g0_length: length0,
            length0,
            stalled: false,
            iterations: 0,
            nodes: 0,
            max_offset: 0.0,
            monotone: true,
        });
    }
    let group = metric
        .phi
        .group()
        .ok_or_else(|| Error::Invalid("closed geodesic lengths need a periodized field".into()))?;
    let (chart, s_mid) = axis_chart(element, group.basepoint())?;
    let n = node_count(metric, length0);
    let eps = metric.eps;
    let mut ev = metric.phi.evaluator();
    let mut f = |p: HPoint| Ok(eps * ev.value(p)?);
    let out = relax::relax(&mut f, chart, s_mid - 0.5 * length0, length0, n, true)?;
    Ok(ClosedLength {
        length: out.length,
        g0_length: out.g0_length,
        length0,
        stalled: out.stalled,
        iterations: out.iterations,
        nodes: n,
        max_offset: out.u.iter().fold(0.0, |m, u| m.max(u.abs())),
        monotone: out.energies.windows(2).all(|w| w[1] <= w[0]),
    })
}

pub fn closed_geodesic_length(
    metric: &ConformalMetric,
    group: &GroupPresentation,
    rep: &Word,
) -> Result<ClosedLength> {
    if !rep.is_cyclically_reduced() || rep.is_identity() {
        return Err(Error::Invalid(format!(
            "{rep} is not a cyclically reduced nontrivial word"
        )));
    }
    closed_geodesic_length_of(metric, &group.evaluate(rep))
}

/// `∮ φ ds` along the hyperbolic closed geodesic of `element`, by
/// composite Simpson.
pub fn axis_integral(phi: &BumpField, element: &MobiusMap) -> Result<f64> {
    let length0 = element.translation_length();
    let group = match phi.group() {
        Some(g) => g,
        None if phi.is_zero() => return Ok(0.0),
        None => return Err(Error::Invalid("axis integrals need a periodized field".into())),
    };
    let (chart, s_mid) = axis_chart(element, group.basepoint())?;
    let r_min = phi.bumps().iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
    let n = 2 * ((length0 / (0.05 * r_min).min(0.05)).ceil() as usize).max(8);
    let h = length0 / n as f64;
    let s0 = s_mid - 0.5 * length0;
    let mut ev = phi.evaluator();
    let mut sum = 0.0;
    for i in 0..n {
        // periodic integrand: endpoint weights merge
        let w = if i % 2 == 0 { 2.0 } else { 4.0 };
        sum += w * ev.value(relax::fermi_point(&chart, s0 + i as f64 * h, 0.0))?;
    }
    Ok(sum * h / 3.0)
}
