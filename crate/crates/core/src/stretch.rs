//! Geodesic stretch between the hyperbolic metric and a conformal
//! perturbation, the Morse correspondence, closed-geodesic band averages,
//! and the entropy-derivative experiment.
//!
//! Invariant measures are never built: averages against the
//! Bowen–Margulis measure are replaced by uniform averages over primitive
//! classes whose length falls in a band.

use crate::error::{Error, Result};
use crate::group::{
    closed_geodesics, counting_exponent_on_grid, ClosedGeodesic, ClosedGeodesicOptions, CountNormalization,
    ExponentEstimate, GroupPresentation, MIN_EXPONENT_POINTS,
};
use crate::kernel::{hyp_distance, BoundaryPoint, HPoint, MobiusMap, UnitTangent};
use crate::metric::{
    axis_integral, closed_geodesic_length_of, perturbed_distance, perturbed_flow, relaxation_profile,
    BumpField, ConformalMetric,
};
use crate::stats::{linear_fit, mean, std_dev};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

/// Fewest classes a band average accepts.
pub const MIN_BAND_CLASSES: usize = 30;
/// Default band `[L − 1, L]` with `L = 12`.
pub const DEFAULT_BAND: (f64, f64) = (11.0, 12.0);
pub const DEFAULT_FD_STEP: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchSample {
    pub v: UnitTangent,
    pub value: f64,
    pub fd_step: f64,
    pub horizon: f64,
}

fn check_fd(fd_step: f64, horizon: f64) -> Result<()> {
    if !(1e-4..=1e-2).contains(&fd_step) {
        return Err(Error::Domain(format!(
            "fd_step must lie in [1e-4, 1e-2], got {fd_step}"
        )));
    }
    if horizon < 2.0 * fd_step + 2.0 {
        return Err(Error::Domain(format!(
            "horizon {horizon} is shorter than 2·fd_step + 2"
        )));
    }
    Ok(())
}

/// `E^{g₁→g₂}(v)`: the rate at which the `g₁`-flow of `v` advances as
/// seen by the `g₂`-Busemann function of its forward endpoint. Central
/// difference of the two-point Busemann approximation with a common far
/// point on the `g₁`-ray.
pub fn stretch_between(
    g1: &ConformalMetric,
    g2: &ConformalMetric,
    v: &UnitTangent,
    fd_step: f64,
    horizon: f64,
) -> Result<StretchSample> {
    check_fd(fd_step, horizon)?;
    let back = perturbed_flow(g1, v, -fd_step)?.base;
    let fwd = perturbed_flow(g1, v, fd_step)?.base;
    let far = perturbed_flow(g1, v, horizon)?.base;
    let value = (perturbed_distance(g2, back, far)? - perturbed_distance(g2, fwd, far)?) / (2.0 * fd_step);
    Ok(StretchSample {
        v: *v,
        value,
        fd_step,
        horizon,
    })
}

/// `E^{g₀→g₂}(v)`.
pub fn instantaneous_stretch(
    v: &UnitTangent,
    g2: &ConformalMetric,
    fd_step: f64,
    horizon: f64,
) -> Result<StretchSample> {
    stretch_between(&ConformalMetric::hyperbolic(), g2, v, fd_step, horizon)
}

/// `d^{g₂}(πv, π g₀^T v)/T`.
pub fn asymptotic_stretch(v: &UnitTangent, g2: &ConformalMetric, t: f64) -> Result<f64> {
    if t < 10.0 {
        return Err(Error::Domain(format!("asymptotic stretch needs T ≥ 10, got {t}")));
    }
    Ok(perturbed_distance(g2, v.base, v.flow(t).base)? / t)
}

/// `∫₀^T E^{g₀→g₂}(g₀^t v) dt` by the trapezoid rule on `n` intervals.
pub fn integrated_stretch(
    v: &UnitTangent,
    g2: &ConformalMetric,
    t: f64,
    n: usize,
    fd_step: f64,
    horizon: f64,
) -> Result<f64> {
    let n = n.max(1);
    let h = t / n as f64;
    let vals: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|k| instantaneous_stretch(&v.flow(k as f64 * h), g2, fd_step, horizon).map(|s| s.value))
        .collect::<Result<_>>()?;
    let inner: f64 = vals[1..n].iter().sum();
    Ok(h * (0.5 * (vals[0] + vals[n]) + inner))
}

/// Morse constant: hyperbolic geodesics stay within this `g₂`-distance of
/// the `g₂`-geodesic with the same endpoints.
///
/// A `g₀`-geodesic is a `λ`-quasi-geodesic for `g₂` with `λ = e^{E}`. In
/// curvature `≤ −a²`, the nearest-point projection onto a geodesic shrinks
/// curves at distance `R` by `cosh(aR)`, so an excursion beyond distance
/// `R` has length at most `2λR/(1 − λ/cosh aR)`; the bound is minimized
/// over `R`.
pub fn morse_constant(g2: &ConformalMetric) -> f64 {
    if g2.is_hyperbolic() {
        return 0.0;
    }
    let lambda = g2.pinching().exp();
    let a = g2.curvature_rate();
    let r0 = (lambda.acosh() / a).max(1e-9);
    (1..=2000)
        .map(|k| r0 + k as f64 * 0.005 / a)
        .filter_map(|r| {
            let q = 1.0 - lambda / (a * r).cosh();
            (q > 0.0).then(|| r + lambda * r / q)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `C₃ = 2C₂ + Δ(g₂)`.
pub fn stretch_constant(g2: &ConformalMetric) -> f64 {
    if g2.is_hyperbolic() {
        return 0.0;
    }
    2.0 * morse_constant(g2) + g2.hyperbolicity()
}

/// `Ψ^{g₀→g₂}(v)`: the point of the `g₂`-geodesic with the endpoints of
/// `v` at which the `g₂`-Busemann function of `ξ₊` relative to `πv`
/// vanishes, with the flow cocycle sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseImage {
    pub w: UnitTangent,
    pub metric_id: String,
    pub xi_minus: BoundaryPoint,
    pub xi_plus: BoundaryPoint,
    /// `(t, s(t, v))` with `s(t, v) = B^{g₂}_{ξ₊}(πv, π g₀^t v)`.
    pub cocycle: Vec<(f64, f64)>,
    /// `d^{g₂}(πv, πw)`.
    pub displacement: f64,
    /// Busemann value at `w`; zero up to solver tolerance.
    pub busemann_residual: f64,
}

/// Options of the Morse construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseOptions {
    /// Half-length of the `g₂` segment approximating the complete geodesic.
    pub reach: f64,
    /// Horizon of the Busemann approximations.
    pub horizon: f64,
    pub grid: (f64, f64, usize),
}

impl Default for MorseOptions {
    fn default() -> Self {
        Self {
            reach: 10.0,
            horizon: 12.0,
            grid: (-2.0, 2.0, 5),
        }
    }
}

/// `B(x, y) ≈ d(x, far) − d(y, far)` with `d(x, far)` precomputed.
fn busemann2(g2: &ConformalMetric, far: HPoint, dx_far: f64, y: HPoint) -> Result<f64> {
    Ok(dx_far - perturbed_distance(g2, y, far)?)
}

pub fn morse_psi(v: &UnitTangent, g2: &ConformalMetric) -> Result<MorseImage> {
    morse_psi_with(v, g2, MorseOptions::default())
}

pub fn morse_psi_with(v: &UnitTangent, g2: &ConformalMetric, opts: MorseOptions) -> Result<MorseImage> {
    let (xi_minus, xi_plus) = (v.backward_endpoint(), v.forward_endpoint());
    let x = v.base;
    let far = v.flow(opts.horizon).base;
    let dx_far = perturbed_distance(g2, x, far)?;
    let cocycle = (0..opts.grid.2)
        .map(|k| {
            let (a, b, n) = opts.grid;
            let t = if n > 1 {
                a + (b - a) * k as f64 / (n - 1) as f64
            } else {
                a
            };
            busemann2(g2, far, dx_far, v.flow(t).base).map(|s| (t, s))
        })
        .collect::<Result<Vec<_>>>()?;
    if g2.is_hyperbolic() {
        return Ok(MorseImage {
            w: *v,
            metric_id: g2.id().to_string(),
            xi_minus,
            xi_plus,
            cocycle,
            displacement: 0.0,
            busemann_residual: 0.0,
        });
    }
    // the g₂ geodesic between far points of the hyperbolic one, as a graph
    // over it in Fermi coordinates
    let p_minus = v.flow(-opts.reach).base;
    let p_plus = v.flow(opts.reach).base;
    let curve = g2_segment(g2, p_minus, p_plus)?;
    let chart = MobiusMap::to_vertical_segment(p_minus, p_plus).inverse();
    let point_at = |s: f64| -> HPoint { curve.point(&chart, s) };
    // s ↦ B(πv, q(s)) increases with slope ≈ e^{εφ}; secant from the
    // foot of πv
    let f = |s: f64| busemann2(g2, far, dx_far, point_at(s));
    let (mut s0, mut f0) = (opts.reach, f(opts.reach)?);
    let (mut s1, mut f1) = (opts.reach + 0.01, f(opts.reach + 0.01)?);
    for _ in 0..40 {
        if f1.abs() < 1e-10 || f1 == f0 {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = f(s1)?;
    }
    let q = point_at(s1);
    let ahead = point_at(s1 + 1e-4);
    let w = UnitTangent::toward(q, ahead);
    Ok(MorseImage {
        w,
        metric_id: g2.id().to_string(),
        xi_minus,
        xi_plus,
        cocycle,
        displacement: perturbed_distance(g2, x, q)?,
        busemann_residual: f1,
    })
}

/// Relaxed `g₂` segment, stored as Fermi offsets over the hyperbolic one.
struct Segment {
    d0: f64,
    u: Vec<f64>,
}

impl Segment {
    fn point(&self, chart: &MobiusMap, s: f64) -> HPoint {
        let n = self.u.len() - 1;
        let h = self.d0 / n as f64;
        let k = ((s / h).floor() as isize).clamp(0, n as isize - 1) as usize;
        let t = s / h - k as f64;
        let u = self.u[k] * (1.0 - t) + self.u[k + 1] * t;
        let es = s.exp();
        chart
            .apply(HPoint::new_unchecked(es * u.tanh(), es / u.cosh()))
            .unwrap_or(HPoint::new_unchecked(0.0, 1.0))
    }
}

fn g2_segment(g2: &ConformalMetric, x: HPoint, y: HPoint) -> Result<Segment> {
    Ok(Segment {
        d0: hyp_distance(x, y),
        u: relaxation_profile(g2, x, y)?,
    })
}

/// `Ψ^{g₂→g₀}` of a Morse image: the zero-Busemann point on the hyperbolic
/// geodesic with the same endpoints.
pub fn morse_to_hyperbolic(image: &MorseImage) -> Result<UnitTangent> {
    let axis = MobiusMap::to_standard_axis(image.xi_minus, image.xi_plus)?;
    // horocycles about ∞ are horizontal in the axis chart
    let q = axis.apply(image.w.base)?;
    UnitTangent::new(HPoint::new(0.0, q.y())?, FRAC_PI_2).pushforward(&axis.inverse())
}

/// Uniform average over primitive classes in a length band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentAverage {
    pub value: f64,
    pub band: (f64, f64),
    pub geodesic_count: usize,
    /// Standard deviation of the per-class ratios.
    pub spread: f64,
}

fn length_of(g: &ClosedGeodesic, id: &str) -> Result<f64> {
    g.lengths
        .get(id)
        .copied()
        .ok_or_else(|| Error::Invalid(format!("class {} has no length for metric {id:?}", g.rep)))
}

/// `I(g₁, g₂)`: mean of `ℓ^{g₂}/ℓ^{g₁}` over classes with `ℓ^{g₁}` in the
/// band.
pub fn current_average_i(
    geodesics: &[ClosedGeodesic],
    g1_id: &str,
    g2_id: &str,
    band: (f64, f64),
) -> Result<CurrentAverage> {
    let mut ratios = Vec::new();
    for g in geodesics {
        let l1 = length_of(g, g1_id)?;
        if l1 >= band.0 && l1 <= band.1 {
            ratios.push(length_of(g, g2_id)? / l1);
        }
    }
    if ratios.len() < MIN_BAND_CLASSES {
        return Err(Error::InsufficientData(format!(
            "{} classes with {g1_id} length in [{}, {}], need {MIN_BAND_CLASSES}",
            ratios.len(),
            band.0,
            band.1
        )));
    }
    Ok(CurrentAverage {
        value: mean(&ratios),
        band,
        geodesic_count: ratios.len(),
        spread: std_dev(&ratios),
    })
}

/// Mean over classes with hyperbolic length in the band of
/// `(1/ℓ₀) ∮ f ds`, where `integral` returns `∮ f ds` along the
/// hyperbolic closed geodesic.
pub fn bm_average_with<F>(
    geodesics: &[ClosedGeodesic],
    band: (f64, f64),
    integral: F,
) -> Result<CurrentAverage>
where
    F: Fn(&ClosedGeodesic) -> Result<f64> + Sync,
{
    let chosen: Vec<&ClosedGeodesic> = geodesics
        .iter()
        .filter(|g| g.length0 >= band.0 && g.length0 <= band.1)
        .collect();
    if chosen.len() < MIN_BAND_CLASSES {
        return Err(Error::InsufficientData(format!(
            "{} classes in [{}, {}], need {MIN_BAND_CLASSES}",
            chosen.len(),
            band.0,
            band.1
        )));
    }
    let vals: Vec<f64> = chosen
        .par_iter()
        .map(|g| integral(g).map(|i| i / g.length0))
        .collect::<Result<_>>()?;
    Ok(CurrentAverage {
        value: mean(&vals),
        band,
        geodesic_count: vals.len(),
        spread: std_dev(&vals),
    })
}

/// `⟨φ⟩` over the band.
pub fn bm_average(phi: &BumpField, geodesics: &[ClosedGeodesic], band: (f64, f64)) -> Result<CurrentAverage> {
    bm_average_with(geodesics, band, |g| axis_integral(phi, &g.element))
}

/// Perturbed lengths of every class, stored under the metric id. Returns
/// the number of relaxations that stalled.
pub fn attach_lengths(geodesics: &mut [ClosedGeodesic], metric: &ConformalMetric) -> Result<LengthReport> {
    let results: Vec<crate::metric::ClosedLength> = geodesics
        .par_iter()
        .map(|g| closed_geodesic_length_of(metric, &g.element))
        .collect::<Result<_>>()?;
    let mut stalled = 0;
    let mut katok = Vec::with_capacity(results.len());
    for (g, r) in geodesics.iter_mut().zip(&results) {
        stalled += r.stalled as usize;
        g.lengths.insert(metric.id().to_string(), r.length);
        katok.push(r.g0_length / r.length);
    }
    Ok(LengthReport {
        stalled,
        g0_over_eps: katok,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthReport {
    pub stalled: usize,
    /// Per class, hyperbolic length of the perturbed closed geodesic over
    /// its perturbed length.
    pub g0_over_eps: Vec<f64>,
}

/// Settings of the entropy-derivative experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeConfig {
    /// Classes are enumerated up to this hyperbolic length.
    pub l_max: f64,
    /// Band of the stretch and Bowen–Margulis averages.
    pub band: (f64, f64),
    /// Regression window of the length-spectrum exponent.
    pub window: (f64, f64),
    /// Orbit points per rung for the perturbed orbit-counting cross-check
    /// (0 disables it).
    pub orbit_points: usize,
    pub slack: Option<f64>,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self {
            l_max: 13.1,
            band: DEFAULT_BAND,
            window: (6.0, 11.5),
            orbit_points: 0,
            slack: None,
        }
    }
}

/// One rung of the ε ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRung {
    pub eps: f64,
    pub h: ExponentEstimate,
    /// `I(g₀, g_ε)`.
    pub i_forward: f64,
    /// `I(g_ε, g₀)`.
    pub i_backward: f64,
    pub spread_forward: f64,
    /// Proxy for `∫ ‖v‖^{g₀} dm̄^{g_ε}`.
    pub katok_proxy: f64,
    /// `h_ε ≤ proxy·h₀ + 2·se`.
    pub katok_holds: bool,
    pub stalled: usize,
    /// Exponent of perturbed orbit counting, when requested.
    pub orbit_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeExperiment {
    pub eps_ladder: Vec<f64>,
    pub h0: ExponentEstimate,
    pub h_estimates: Vec<ExponentEstimate>,
    pub rungs: Vec<DerivativeRung>,
    pub bm_avg_phi: f64,
    pub bm_count: usize,
    pub fd_slope: f64,
    pub fd_residual: f64,
    pub predicted_slope: f64,
    pub relative_error: Option<f64>,
    /// Slope of `ε ↦ I(g₀, g_ε)`.
    pub i_slope: f64,
    pub i_relative_error: Option<f64>,
    pub class_count: usize,
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Invalid("empty eps ladder".into()));
    }
    for &e in ladder {
        if !(e.abs() <= 0.05) {
            return Err(Error::Invalid(format!("|eps| must be at most 0.05, got {e}")));
        }
        if !ladder.iter().any(|&f| (f + e).abs() < 1e-12) {
            return Err(Error::Invalid(format!(
                "eps ladder is not symmetric: {e} has no partner"
            )));
        }
    }
    Ok(())
}

fn relative(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b).abs() / b.abs())
}

/// Perturbed orbit counting: the `n` nearest orbit points, re-measured in
/// `g_ε`, regressed over the part of the window they cover.
fn orbit_exponent(group: &GroupPresentation, metric: &ConformalMetric, n: usize) -> Result<f64> {
    let o = group.basepoint();
    let mut r = 4.0;
    let orbit = loop {
        let orbit = crate::group::enumerate_orbit(group, r, 10 * n + 1000)?;
        if orbit.len() >= n || r > 40.0 {
            break orbit;
        }
        r += 1.0;
    };
    let pts: Vec<HPoint> = orbit.points.iter().take(n).map(|p| p.image).collect();
    let r_cut = orbit
        .points
        .get(n.min(orbit.len()) - 1)
        .map(|p| p.dist)
        .unwrap_or(r);
    let mut d: Vec<f64> = pts
        .par_iter()
        .map(|&p| perturbed_distance(metric, o, p))
        .collect::<Result<_>>()?;
    d.sort_by(f64::total_cmp);
    let hi = r_cut * (-metric.pinching()).exp();
    let est = crate::group::counting_exponent(
        &d,
        (0.5 * hi, hi),
        crate::group::CountNormalization::Plain,
        MIN_EXPONENT_POINTS,
    )?;
    Ok(est.value)
}

/// Grid intervals for the exponent fits of the derivative experiment.
pub const DERIVATIVE_GRID: usize = 2048;

fn dense_exponent(lengths: &mut [f64], window: (f64, f64)) -> Result<ExponentEstimate> {
    lengths.sort_by(f64::total_cmp);
    counting_exponent_on_grid(
        lengths,
        window,
        CountNormalization::PrimeOrbit,
        MIN_EXPONENT_POINTS,
        DERIVATIVE_GRID,
    )
}

/// Largest perturbed orbit-counting sample per rung.
pub const MAX_ORBIT_POINTS: usize = 2000;

/// `h(g_ε)` over a symmetric ε ladder against the first-order prediction
/// `−h₀·⟨φ⟩`.
pub fn derivative_experiment(
    group: &GroupPresentation,
    phi: Arc<BumpField>,
    eps_ladder: &[f64],
    config: &DerivativeConfig,
) -> Result<DerivativeExperiment> {
    check_ladder(eps_ladder)?;
    if config.orbit_points > MAX_ORBIT_POINTS {
        return Err(Error::Invalid(format!(
            "at most {MAX_ORBIT_POINTS} orbit points per rung, got {}",
            config.orbit_points
        )));
    }
    let metrics: Vec<ConformalMetric> = eps_ladder
        .iter()
        .map(|&e| ConformalMetric::new(phi.clone(), e))
        .collect::<Result<_>>()?;
    let e_max = metrics.iter().map(|m| m.pinching()).fold(0.0, f64::max);
    if config.window.1 * e_max.exp() > config.l_max || config.band.1 * e_max.exp() > config.l_max {
        return Err(Error::Invalid(format!(
            "window end {} and band end {} must stay below l_max·e^(−E) = {:.4}",
            config.window.1,
            config.band.1,
            config.l_max * (-e_max).exp()
        )));
    }
    let opts = ClosedGeodesicOptions {
        slack: config.slack,
        ..Default::default()
    };
    let mut geodesics = closed_geodesics(group, config.l_max, opts)?;
    let mut l0: Vec<f64> = geodesics.iter().map(|g| g.length0).collect();
    let h0 = dense_exponent(&mut l0, config.window)?;
    let bm = bm_average(&phi, &geodesics, config.band)?;
    let mut rungs = Vec::with_capacity(metrics.len());
    for m in &metrics {
        let report = attach_lengths(&mut geodesics, m)?;
        let mut le: Vec<f64> = geodesics.iter().map(|g| g.lengths[m.id()]).collect();
        let h = dense_exponent(&mut le, config.window)?;
        let fwd = current_average_i(&geodesics, "g0", m.id(), config.band)?;
        let bwd = current_average_i(&geodesics, m.id(), "g0", config.band)?;
        let in_band: Vec<f64> = geodesics
            .iter()
            .zip(&report.g0_over_eps)
            .filter(|(g, _)| {
                let l = g.lengths[m.id()];
                l >= config.band.0 && l <= config.band.1
            })
            .map(|(_, r)| *r)
            .collect();
        let katok_proxy = mean(&in_band);
        let orbit_h = if config.orbit_points > 0 {
            Some(orbit_exponent(group, m, config.orbit_points)?)
        } else {
            None
        };
        rungs.push(DerivativeRung {
            eps: m.eps(),
            katok_holds: h.value <= katok_proxy * h0.value + 2.0 * h.slope_se.max(h0.slope_se),
            h,
            i_forward: fwd.value,
            i_backward: bwd.value,
            spread_forward: fwd.spread,
            katok_proxy,
            stalled: report.stalled,
            orbit_h,
        });
    }
    let mut xs: Vec<f64> = rungs.iter().map(|r| r.eps).collect();
    let mut hs: Vec<f64> = rungs.iter().map(|r| r.h.value).collect();
    let mut is: Vec<f64> = rungs.iter().map(|r| r.i_forward).collect();
    if !xs.contains(&0.0) {
        xs.push(0.0);
        hs.push(h0.value);
        is.push(1.0);
    }
    let fit = linear_fit(&xs, &hs)
        .ok_or_else(|| Error::InsufficientData("ladder needs two distinct eps".into()))?;
    let ifit = linear_fit(&xs, &is)
        .ok_or_else(|| Error::InsufficientData("ladder needs two distinct eps".into()))?;
    let predicted = -h0.value * bm.value;
    Ok(DerivativeExperiment {
        eps_ladder: eps_ladder.to_vec(),
        h_estimates: rungs.iter().map(|r| r.h).collect(),
        h0,
        rungs,
        bm_avg_phi: bm.value,
        bm_count: bm.geodesic_count,
        fd_slope: fit.slope,
        fd_residual: fit.slope_se,
        predicted_slope: predicted,
        relative_error: relative(fit.slope, predicted),
        i_slope: ifit.slope,
        i_relative_error: relative(ifit.slope, bm.value),
        class_count: geodesics.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::catalog;
    use crate::kernel::BASEPOINT;
    use crate::metric::{metric_norm, Bump};

    fn pt(x: f64, y: f64) -> HPoint {
        HPoint::new(x, y).unwrap()
    }

    fn bumped(eps: f64) -> ConformalMetric {
        let phi = BumpField::new(vec![Bump {
            center: pt(0.0, 1.0),
            radius: 1.0,
            amplitude: 1.0,
        }])
        .unwrap();
        ConformalMetric::new(Arc::new(phi), eps).unwrap()
    }

    fn samples(n: usize) -> Vec<UnitTangent> {
        (0..n)
            .map(|k| {
                let k = k as f64;
                UnitTangent::new(pt(0.4 * (1.3 * k).sin(), 1.0 + 0.5 * (0.9 * k).cos()), 0.77 * k)
            })
            .collect()
    }

    #[test]
    fn hyperbolic_stretch_is_one() {
        let g0 = ConformalMetric::hyperbolic();
        for v in samples(5) {
            let s = instantaneous_stretch(&v, &g0, DEFAULT_FD_STEP, DEFAULT_HORIZON).unwrap();
            assert!((s.value - 1.0).abs() < 1e-4);
            assert!((asymptotic_stretch(&v, &g0, 12.0).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn self_stretch_is_one_and_stretch_is_below_the_norm() {
        let m = bumped(0.03);
        for v in samples(8) {
            let s = stretch_between(&m, &m, &v, DEFAULT_FD_STEP, DEFAULT_HORIZON).unwrap();
            assert!((s.value - 1.0).abs() < 1e-3, "{}", s.value);
            let e = instantaneous_stretch(&v, &m, DEFAULT_FD_STEP, DEFAULT_HORIZON).unwrap();
            assert!(e.value > 0.0 && e.value <= metric_norm(&m, &v).unwrap() + 1e-3);
        }
    }

    #[test]
    fn nearly_constant_factor_gives_its_exponential() {
        // ψ(s) ≥ 0.998 for s ≤ 0.06, so φ is almost 1 near the centre of a
        // wide bump
        let phi = BumpField::new(vec![Bump {
            center: pt(0.0, 1.0),
            radius: 8.0,
            amplitude: 1.0,
        }])
        .unwrap();
        let m = ConformalMetric::new(Arc::new(phi), 0.04).unwrap();
        let v = UnitTangent::new(pt(0.1, 1.05), 0.3);
        let e = instantaneous_stretch(&v, &m, DEFAULT_FD_STEP, DEFAULT_HORIZON).unwrap();
        assert!((e.value / 0.04f64.exp() - 1.0).abs() < 0.01, "{}", e.value);
    }

    #[test]
    fn asymptotic_stretch_tracks_the_integrated_one() {
        let m = bumped(0.03);
        let c3 = stretch_constant(&m);
        let t = 12.0;
        for v in samples(3) {
            let a = asymptotic_stretch(&v, &m, t).unwrap();
            let e = m.pinching();
            assert!(a >= (-e).exp() && a <= e.exp());
            let i = integrated_stretch(&v, &m, t, 48, DEFAULT_FD_STEP, DEFAULT_HORIZON).unwrap();
            assert!((t * a - i).abs() <= c3);
            assert!((a - i / t).abs() <= c3 / t + 1e-2);
        }
    }

    #[test]
    fn morse_constant_grows_with_eps() {
        assert_eq!(morse_constant(&ConformalMetric::hyperbolic()), 0.0);
        let (a, b) = (morse_constant(&bumped(0.01)), morse_constant(&bumped(0.04)));
        assert!(a.is_finite() && b.is_finite() && a < b);
        assert!(stretch_constant(&bumped(0.01)) > 2.0 * a);
    }

    #[test]
    fn morse_image_is_identity_for_the_hyperbolic_metric() {
        let v = UnitTangent::new(pt(0.2, 1.3), 0.9);
        let img = morse_psi(&v, &ConformalMetric::hyperbolic()).unwrap();
        assert_eq!(img.w, v);
        for &(t, s) in &img.cocycle {
            assert!((s - t).abs() < 1e-4);
        }
    }

    #[test]
    fn morse_image_round_trip_stays_on_the_orbit() {
        let m = bumped(0.03);
        let v = UnitTangent::new(pt(0.1, 0.9), 0.4);
        let img = morse_psi(&v, &m).unwrap();
        assert!(img.busemann_residual.abs() < 1e-8);
        assert!(img.displacement <= stretch_constant(&m));
        let back = morse_to_hyperbolic(&img).unwrap();
        assert!(back.forward_endpoint().approx_eq(v.forward_endpoint(), 1e-6));
        assert!(back.backward_endpoint().approx_eq(v.backward_endpoint(), 1e-6));
        // the shift is small because w is close to v
        assert!(hyp_distance(back.base, v.base) < 1e-3);
    }

    #[test]
    fn morse_image_is_flow_equivariant() {
        let m = bumped(0.03);
        let v = UnitTangent::new(pt(0.1, 0.9), 0.4);
        let opts = MorseOptions {
            grid: (-1.0, 1.0, 3),
            ..Default::default()
        };
        let img = morse_psi_with(&v, &m, opts).unwrap();
        for &(t, s) in &img.cocycle {
            let moved = morse_psi_with(
                &v.flow(t),
                &m,
                MorseOptions {
                    grid: (0.0, 0.0, 1),
                    ..opts
                },
            )
            .unwrap();
            let flowed = perturbed_flow(&m, &img.w, s).unwrap();
            assert!(hyp_distance(moved.w.base, flowed.base) < 1e-3, "t = {t}");
        }
    }

    fn schottky() -> GroupPresentation {
        catalog::regular_schottky(2, 40f64.to_radians()).unwrap()
    }

    #[test]
    fn current_average_of_a_metric_with_itself_is_one() {
        let geodesics = closed_geodesics(&schottky(), 9.0, ClosedGeodesicOptions::default()).unwrap();
        let avg = current_average_i(&geodesics, "g0", "g0", (8.0, 9.0)).unwrap();
        assert_eq!(avg.value, 1.0);
        assert_eq!(avg.spread, 0.0);
        assert!(matches!(
            current_average_i(&geodesics, "g0", "g0", (2.0, 3.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bm_average_of_constants() {
        let geodesics = closed_geodesics(&schottky(), 9.0, ClosedGeodesicOptions::default()).unwrap();
        let one = bm_average_with(&geodesics, (8.0, 9.0), |g| Ok(g.length0)).unwrap();
        assert!((one.value - 1.0).abs() < 1e-15);
        let zero = bm_average(&BumpField::zero(), &geodesics, (8.0, 9.0)).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn ladder_must_be_symmetric_and_small() {
        let config = DerivativeConfig::default();
        let phi = Arc::new(BumpField::zero());
        for ladder in [&[0.02, 0.04][..], &[-0.06, 0.06], &[]] {
            assert!(derivative_experiment(&schottky(), phi.clone(), ladder, &config).is_err());
        }
    }

    #[test]
    fn zero_field_has_zero_slopes() {
        let config = DerivativeConfig {
            l_max: 9.5,
            band: (8.0, 9.0),
            window: (5.0, 8.5),
            ..Default::default()
        };
        let ex =
            derivative_experiment(&schottky(), Arc::new(BumpField::zero()), &[-0.02, 0.02], &config).unwrap();
        assert_eq!(ex.predicted_slope, 0.0);
        assert!(ex.fd_slope.abs() <= ex.fd_residual + 1e-12);
        assert_eq!(ex.i_slope, 0.0);
        assert!(ex.relative_error.is_none());
    }

    #[test]
    fn bump_far_from_the_core_has_no_effect() {
        let g = schottky();
        let phi = BumpField::periodized(
            vec![Bump {
                center: pt(0.0, 400.0),
                radius: 1.0,
                amplitude: 1.0,
            }],
            &g,
        )
        .unwrap();
        let config = DerivativeConfig {
            l_max: 9.5,
            band: (8.0, 9.0),
            window: (5.0, 8.5),
            ..Default::default()
        };
        let ex = derivative_experiment(&g, Arc::new(phi), &[-0.02, 0.02], &config).unwrap();
        assert!(ex.bm_avg_phi.abs() < 1e-12);
        assert!(ex.fd_slope.abs() < 1e-6 && ex.i_slope.abs() < 1e-6);
    }

    #[test]
    fn core_bump_shortens_nothing_and_lengthens_on_average() {
        let g = schottky();
        let phi = BumpField::periodized(
            vec![Bump {
                center: BASEPOINT,
                radius: 1.0,
                amplitude: 1.0,
            }],
            &g,
        )
        .unwrap();
        let m = ConformalMetric::new(Arc::new(phi), 0.02).unwrap();
        let mut geodesics = closed_geodesics(&g, 9.0, ClosedGeodesicOptions::default()).unwrap();
        let report = attach_lengths(&mut geodesics, &m).unwrap();
        assert_eq!(report.stalled, 0);
        let fwd = current_average_i(&geodesics, "g0", m.id(), (8.0, 9.0)).unwrap();
        let bwd = current_average_i(&geodesics, m.id(), "g0", (8.0, 9.0)).unwrap();
        assert!(fwd.value > 1.0 && (fwd.value * bwd.value - 1.0).abs() < 0.02);
        for g in &geodesics {
            assert!(g.lengths[m.id()] >= g.length0 - 1e-9);
        }
    }
}
