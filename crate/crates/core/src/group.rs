//! Free discrete groups in Schottky position: presentation and validation,
//! orbit enumeration, Dirichlet reduction, critical exponents, closed
//! geodesics and Patterson–Sullivan atoms.

pub mod cache;

use crate::error::{Error, Result};
use crate::kernel::{
    cosh_distance, direction_from, hyp_distance, BoundaryArc, BoundaryPoint, HPoint, MobiusMap, UnitTangent,
};
use crate::stats::linear_fit;
use crate::word::{letter_gen, letter_is_inverse, Word};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Default cap on the number of reduction steps.
pub const REDUCTION_STEP_CAP: usize = 200_000;
/// Minimum orbit count required by the exponent estimator.
pub const MIN_EXPONENT_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// Every generator hyperbolic.
    Schottky,
    /// Free product of cyclic hyperbolic or parabolic factors.
    GeometricallyFiniteFree,
}

/// A generator with its ping-pong domains: it maps the complement of the
/// half-plane over `domain_minus` onto the half-plane over `domain_plus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub label: String,
    pub map: MobiusMap,
    pub domain_minus: BoundaryArc,
    pub domain_plus: BoundaryArc,
}

impl Generator {
    pub fn new(
        label: impl Into<String>,
        map: MobiusMap,
        domain_minus: BoundaryArc,
        domain_plus: BoundaryArc,
    ) -> Self {
        Self {
            label: label.into(),
            map,
            domain_minus,
            domain_plus,
        }
    }

    /// Pairs the Euclidean disks `(c1, r1)` and `(c2, r2)` centred on the
    /// real axis: the exterior of the first goes onto the interior of the second.
    pub fn from_disks(label: impl Into<String>, minus: (f64, f64), plus: (f64, f64)) -> Result<Self> {
        let ((c1, r1), (c2, r2)) = (minus, plus);
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(Error::Invalid("disk radii must be positive".into()));
        }
        let k = (r1 * r2).sqrt();
        let map = MobiusMap::new(c2 / k, (-c2 * c1 - r1 * r2) / k, 1.0 / k, -c1 / k)?;
        Ok(Self::new(label, map, disk_arc(c1, r1)?, disk_arc(c2, r2)?))
    }

    /// The isometry carrying the geodesic over `minus` onto the geodesic
    /// over `plus` (with `minus.to ↦ plus.from`), normalized so the point of
    /// the first geodesic nearest `o` lands on the point of the second
    /// nearest `o`. Tangent arcs arranged symmetrically about `o` give a
    /// parabolic generator.
    pub fn from_arcs(
        label: impl Into<String>,
        minus: BoundaryArc,
        plus: BoundaryArc,
        o: HPoint,
    ) -> Result<Self> {
        let source = nearest_tangent(&minus, o)?;
        let target = nearest_tangent(&plus, o)?.reversed();
        let map = target.frame().inverse() * source.frame();
        Ok(Self::new(label, map, minus, plus))
    }

    /// `z ↦ z + t` with `t > 0`, domains the half-planes `Re z ≤ −t/2` and `Re z ≥ t/2`.
    pub fn parabolic_translation(label: impl Into<String>, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Invalid(format!("translation must be positive, got {t}")));
        }
        Ok(Self::new(
            label,
            MobiusMap::translation(t),
            BoundaryArc::new(BoundaryPoint::Infinity, BoundaryPoint::Finite(-t / 2.0))?,
            BoundaryArc::new(BoundaryPoint::Finite(t / 2.0), BoundaryPoint::Infinity)?,
        ))
    }

    /// `z ↦ λz` with `λ > 1`, domains `|z| ≤ λ^{-1/2}` and `|z| ≥ λ^{1/2}`.
    pub fn dilation(label: impl Into<String>, lambda: f64) -> Result<Self> {
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "dilation factor must exceed 1, got {lambda}"
            )));
        }
        let s = lambda.sqrt();
        Ok(Self::new(
            label,
            MobiusMap::dilation(lambda),
            disk_arc(0.0, 1.0 / s)?,
            BoundaryArc::new(BoundaryPoint::Finite(s), BoundaryPoint::Finite(-s))?,
        ))
    }
}

/// Unit vector at the point of the geodesic over `arc` nearest `o`,
/// pointing toward `arc.to`.
fn nearest_tangent(arc: &BoundaryArc, o: HPoint) -> Result<UnitTangent> {
    let BoundaryArc::Arc { from, to } = *arc else {
        return Err(Error::Invalid(
            "a ping-pong domain cannot be the full boundary".into(),
        ));
    };
    let m = MobiusMap::to_standard_axis(from, to)?;
    let q = m.apply(o)?;
    let foot = HPoint::new(0.0, q.x().hypot(q.y()))?;
    UnitTangent::new(foot, std::f64::consts::FRAC_PI_2).pushforward(&m.inverse())
}

/// Arc of disk-model angles `[center − half, center + half]` seen from `o`.
pub fn angular_arc(o: HPoint, center: f64, half: f64) -> Result<BoundaryArc> {
    BoundaryArc::new(
        BoundaryPoint::from_disk_angle(o, center - half),
        BoundaryPoint::from_disk_angle(o, center + half),
    )
}

/// Boundary arc under the semicircle of centre `c` and radius `r`.
pub fn disk_arc(c: f64, r: f64) -> Result<BoundaryArc> {
    BoundaryArc::new(BoundaryPoint::Finite(c - r), BoundaryPoint::Finite(c + r))
}

/// A validated free group in Schottky position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroupSpec", into = "GroupSpec")]
pub struct GroupPresentation {
    kind: GroupKind,
    generators: Vec<Generator>,
    basepoint: HPoint,
    letter_maps: Vec<MobiusMap>,
    domain_charts: Vec<MobiusMap>,
}

#[derive(Serialize, Deserialize)]
struct GroupSpec {
    kind: GroupKind,
    generators: Vec<Generator>,
    basepoint: HPoint,
}

impl TryFrom<GroupSpec> for GroupPresentation {
    type Error = Error;
    fn try_from(s: GroupSpec) -> Result<Self> {
        GroupPresentation::new(s.kind, s.generators, s.basepoint)
    }
}

impl From<GroupPresentation> for GroupSpec {
    fn from(g: GroupPresentation) -> Self {
        GroupSpec {
            kind: g.kind,
            generators: g.generators,
            basepoint: g.basepoint,
        }
    }
}

const ENDPOINT_TOL: f64 = 1e-9;

fn arc_mid(arc: &BoundaryArc) -> Option<BoundaryPoint> {
    match *arc {
        BoundaryArc::Full => None,
        BoundaryArc::Arc { from, .. } => {
            let a = from.disk_angle(crate::kernel::BASEPOINT);
            let w = arc.angular_width(crate::kernel::BASEPOINT);
            Some(BoundaryPoint::from_disk_angle(
                crate::kernel::BASEPOINT,
                a + 0.5 * w,
            ))
        }
    }
}

fn strictly_inside(arc: &BoundaryArc, xi: BoundaryPoint) -> bool {
    match *arc {
        BoundaryArc::Full => true,
        BoundaryArc::Arc { from, to } => {
            let o = crate::kernel::BASEPOINT;
            let a = from.disk_angle(o);
            let span = (to.disk_angle(o) - a).rem_euclid(TAU);
            let r = (xi.disk_angle(o) - a).rem_euclid(TAU);
            r > ENDPOINT_TOL && r < span - ENDPOINT_TOL
        }
    }
}

fn interiors_overlap(a: &BoundaryArc, b: &BoundaryArc) -> bool {
    let probes = |x: &BoundaryArc| -> Vec<BoundaryPoint> {
        match *x {
            BoundaryArc::Full => vec![],
            BoundaryArc::Arc { from, to } => {
                [Some(from), Some(to), arc_mid(x)].into_iter().flatten().collect()
            }
        }
    };
    matches!(a, BoundaryArc::Full)
        || matches!(b, BoundaryArc::Full)
        || probes(a).into_iter().any(|p| strictly_inside(b, p))
        || probes(b).into_iter().any(|p| strictly_inside(a, p))
}

impl GroupPresentation {
    pub fn new(kind: GroupKind, generators: Vec<Generator>, basepoint: HPoint) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Invalid("a group needs at least one generator".into()));
        }
        if generators.len() > u16::MAX as usize / 2 {
            return Err(Error::Invalid("too many generators".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            if generators[..i].iter().any(|h| h.label == g.label) {
                return Err(Error::Invalid(format!("duplicate generator label {:?}", g.label)));
            }
            let m = g.map.normalized();
            if (m.det() - 1.0).abs() > 1e-12 || m.approx_identity(1e-12) {
                return Err(Error::Invalid(format!("generator {} is degenerate", g.label)));
            }
            if kind == GroupKind::Schottky && !m.is_hyperbolic() {
                return Err(Error::Invalid(format!(
                    "generator {} of a Schottky group is not hyperbolic",
                    g.label
                )));
            }
            if !m.is_hyperbolic() && !m.is_parabolic() {
                return Err(Error::Invalid(format!("generator {} is elliptic", g.label)));
            }
            let (BoundaryArc::Arc { from: mf, to: mt }, BoundaryArc::Arc { from: pf, to: pt }) =
                (g.domain_minus, g.domain_plus)
            else {
                return Err(Error::Invalid(format!(
                    "generator {} has a full-boundary domain",
                    g.label
                )));
            };
            if !m.apply_boundary(mt).approx_eq(pf, 1e-9) || !m.apply_boundary(mf).approx_eq(pt, 1e-9) {
                return Err(Error::PingPongViolation(format!(
                    "generator {} does not carry the complement of its minus domain onto its plus domain",
                    g.label
                )));
            }
        }
        let domains: Vec<(String, BoundaryArc)> = generators
            .iter()
            .flat_map(|g| {
                [
                    (format!("{}+", g.label), g.domain_plus),
                    (format!("{}-", g.label), g.domain_minus),
                ]
            })
            .collect();
        for i in 0..domains.len() {
            for j in 0..i {
                if interiors_overlap(&domains[i].1, &domains[j].1) {
                    return Err(Error::PingPongViolation(format!(
                        "domains {} and {} overlap",
                        domains[j].0, domains[i].0
                    )));
                }
            }
            if domains[i].1.half_plane_contains(basepoint) {
                return Err(Error::PingPongViolation(format!(
                    "basepoint {basepoint} lies in domain {}",
                    domains[i].0
                )));
            }
        }
        let generators: Vec<Generator> = generators
            .into_iter()
            .map(|g| Generator {
                map: g.map.normalized(),
                ..g
            })
            .collect();
        let mut letter_maps = Vec::with_capacity(2 * generators.len());
        let mut domain_charts = Vec::with_capacity(2 * generators.len());
        for g in &generators {
            letter_maps.push(g.map);
            letter_maps.push(g.map.inverse());
            for arc in [g.domain_plus, g.domain_minus] {
                let BoundaryArc::Arc { from, to } = arc else {
                    unreachable!()
                };
                domain_charts.push(MobiusMap::to_standard_axis(from, to)?);
            }
        }
        Ok(Self {
            kind,
            generators,
            basepoint,
            letter_maps,
            domain_charts,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn basepoint(&self) -> HPoint {
        self.basepoint
    }

    pub fn labels(&self) -> Vec<String> {
        self.generators.iter().map(|g| g.label.clone()).collect()
    }

    pub fn letter_count(&self) -> u32 {
        self.letter_maps.len() as u32
    }

    #[inline]
    pub fn letter_map(&self, l: u32) -> &MobiusMap {
        &self.letter_maps[l as usize]
    }

    /// Ping-pong domain receiving the images of letter `l`.
    pub fn letter_domain(&self, l: u32) -> BoundaryArc {
        let g = &self.generators[letter_gen(l) as usize];
        if letter_is_inverse(l) {
            g.domain_minus
        } else {
            g.domain_plus
        }
    }

    /// Whether `p` is in the closed half-plane of the domain of letter `l`.
    pub fn in_letter_domain(&self, l: u32, p: HPoint) -> bool {
        let q = self.domain_charts[l as usize].apply_unchecked(p);
        q.x() >= -1e-9 * q.x().hypot(q.y())
    }

    /// `d(o, g o)` for every generator.
    pub fn displacements(&self) -> Vec<f64> {
        let o = self.basepoint;
        self.generators
            .iter()
            .map(|g| hyp_distance(o, g.map.apply_unchecked(o)))
            .collect()
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacements().into_iter().fold(0.0, f64::max)
    }

    /// Group element of a word, composed letter by letter from the left.
    pub fn evaluate(&self, w: &Word) -> MobiusMap {
        // same operation order as the enumeration, so results agree bit for bit
        let mut letters = w.letters();
        match letters.next() {
            None => MobiusMap::IDENTITY,
            Some(first) => letters.fold(*self.letter_map(first), |m, l| m * *self.letter_map(l)),
        }
    }

    /// Content hash of the presentation, used to key caches.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "{:?};{:e};{:e}\n",
            self.kind,
            self.basepoint.x(),
            self.basepoint.y()
        ));
        for g in &self.generators {
            let m = g.map;
            h.update(format!("{};{:e};{:e};{:e};{:e}\n", g.label, m.a, m.b, m.c, m.d));
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub word: Word,
    pub element: MobiusMap,
    pub image: HPoint,
    pub dist: f64,
}

/// Orbit points with `d(o, γo) ≤ r_max`, sorted by `(dist, word)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub basepoint: HPoint,
    pub r_max: f64,
    pub group_hash: String,
    pub points: Vec<OrbitPoint>,
    /// Largest [`MobiusMap::det_drift`] over the stored elements.
    pub det_drift: f64,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `N(R) = #{γ : d(o, γo) ≤ R}`.
    pub fn count_within(&self, r: f64) -> usize {
        self.points.partition_point(|p| p.dist <= r)
    }

    pub fn dists(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.dist).collect()
    }

    /// Restriction to a smaller radius.
    pub fn truncate(&self, r: f64) -> Orbit {
        let n = self.count_within(r);
        Orbit {
            points: self.points[..n].to_vec(),
            r_max: r.min(self.r_max),
            ..self.clone()
        }
    }
}

fn sort_points(points: &mut [OrbitPoint]) {
    points.sort_by(|a, b| a.dist.total_cmp(&b.dist).then_with(|| a.word.cmp(&b.word)));
}

/// Enumerates every reduced word with `d(o, γo) ≤ r_max` by depth-first
/// search, pruning branches beyond `r_max + 2·max displacement`.
pub fn enumerate_orbit(group: &GroupPresentation, r_max: f64, cap: usize) -> Result<Orbit> {
    enumerate_orbit_with_slack(group, r_max, cap, 2.0 * group.max_displacement())
}

pub fn enumerate_orbit_with_slack(
    group: &GroupPresentation,
    r_max: f64,
    cap: usize,
    slack: f64,
) -> Result<Orbit> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Invalid(format!("R_max must be positive, got {r_max}")));
    }
    let o = group.basepoint;
    let cosh_emit = r_max.cosh();
    let cosh_prune = (r_max + slack).cosh();
    let counter = AtomicUsize::new(1);
    let subtrees: Vec<Result<(Vec<OrbitPoint>, f64)>> = (0..group.letter_count())
        .into_par_iter()
        .map(|first| -> Result<(Vec<OrbitPoint>, f64)> {
            let mut out = Vec::new();
            let mut drift: f64 = 0.0;
            let mut stack = vec![(Word::from_letter(first), *group.letter_map(first), first)];
            while let Some((word, m, last)) = stack.pop() {
                let image = m.apply_unchecked(o);
                let ch = cosh_distance(o, image);
                if ch > cosh_prune {
                    continue;
                }
                if !group.in_letter_domain(first, image) {
                    return Err(Error::PingPongViolation(format!(
                        "image of word {word} left the domain of its first letter"
                    )));
                }
                if ch <= cosh_emit {
                    drift = drift.max(m.det_drift());
                    if counter.fetch_add(1, Ordering::Relaxed) >= cap {
                        return Err(Error::BudgetExceeded(format!(
                            "more than {cap} orbit points within {r_max}"
                        )));
                    }
                    out.push(OrbitPoint {
                        word: word.clone(),
                        element: m,
                        image,
                        dist: hyp_distance(o, image),
                    });
                }
                for l in 0..group.letter_count() {
                    if l == last ^ 1 {
                        continue;
                    }
                    let mut w = word.clone();
                    w.push_letter(l);
                    stack.push((w, m * *group.letter_map(l), l));
                }
            }
            Ok((out, drift))
        })
        .collect();
    let mut points = vec![OrbitPoint {
        word: Word::identity(),
        element: MobiusMap::IDENTITY,
        image: o,
        dist: 0.0,
    }];
    let mut det_drift: f64 = 0.0;
    for s in subtrees {
        let (p, d) = s?;
        points.extend(p);
        det_drift = det_drift.max(d);
    }
    sort_points(&mut points);
    Ok(Orbit {
        basepoint: o,
        r_max,
        group_hash: group.content_hash(),
        points,
        det_drift,
    })
}

/// Growth-exponent estimate with its regression diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub count: usize,
    /// Slope standard error of the counting regression.
    pub slope_se: f64,
    /// Poincaré partial-sum bisection estimate, when enough shells exist.
    pub bisection: Option<f64>,
    /// `max ln N(R)/R` over the window, a limsup proxy.
    pub running_max: f64,
}

/// How counts are turned into the regressed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountNormalization {
    /// `ln N(R)`.
    Plain,
    /// `ln(R·N(R))`, natural for prime-orbit counts `N(L) ~ e^{hL}/(hL)`.
    PrimeOrbit,
}

/// Grid intervals of the counting regression.
pub const EXPONENT_GRID: usize = 64;

/// Growth exponent of a sorted list of values (distances or lengths).
pub fn counting_exponent(
    sorted: &[f64],
    window: (f64, f64),
    normalization: CountNormalization,
    min_points: usize,
) -> Result<ExponentEstimate> {
    counting_exponent_on_grid(sorted, window, normalization, min_points, EXPONENT_GRID)
}

/// [`counting_exponent`] with an explicit number of grid intervals. Dense
/// grids approach the continuous least-squares fit of the step function and
/// vary smoothly when the distances move slightly.
pub fn counting_exponent_on_grid(
    sorted: &[f64],
    window: (f64, f64),
    normalization: CountNormalization,
    min_points: usize,
    grid: usize,
) -> Result<ExponentEstimate> {
    let grid = grid.max(2);
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Invalid(format!("bad regression window [{lo}, {hi}]")));
    }
    let count = sorted.partition_point(|d| *d <= hi);
    if count < min_points {
        return Err(Error::InsufficientData(format!(
            "{count} points up to {hi}, need {min_points}"
        )));
    }
    let mut xs = Vec::with_capacity(grid + 1);
    let mut ys = Vec::with_capacity(grid + 1);
    let mut running_max = f64::NEG_INFINITY;
    for k in 0..=grid {
        let r = lo + (hi - lo) * k as f64 / grid as f64;
        let n = sorted.partition_point(|d| *d <= r);
        if n == 0 {
            continue;
        }
        let y = match normalization {
            CountNormalization::Plain => (n as f64).ln(),
            CountNormalization::PrimeOrbit => (r * n as f64).ln(),
        };
        if r > 0.0 {
            running_max = running_max.max((n as f64).ln() / r);
        }
        xs.push(r);
        ys.push(y);
    }
    let fit = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData(format!("no counts inside window [{lo}, {hi}]")))?;
    Ok(ExponentEstimate {
        value: fit.slope.max(0.0),
        window,
        residual: fit.rms,
        count,
        slope_se: fit.slope_se,
        bisection: shell_bisection(sorted, window),
        running_max,
    })
}

/// Finds `s` for which the Poincaré shell sums `Σ_{shell} e^{−s d}` neither
/// grow nor decay across the window.
fn shell_bisection(sorted: &[f64], (lo, hi): (f64, f64)) -> Option<f64> {
    let width = (0.5f64).max((hi - lo) / 20.0);
    let shells = ((hi - lo) / width).floor() as usize;
    if shells < 3 {
        return None;
    }
    let start = sorted.partition_point(|d| *d < lo);
    let slope = |s: f64| -> Option<f64> {
        let mut sums = vec![0.0; shells];
        for &d in &sorted[start..] {
            let j = ((d - lo) / width) as usize;
            if j >= shells {
                break;
            }
            sums[j] += (-s * (d - lo)).exp();
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = sums
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, v)| (lo + (j as f64 + 0.5) * width, v.ln()))
            .unzip();
        if xs.len() < 3 {
            return None;
        }
        linear_fit(&xs, &ys).map(|f| f.slope)
    };
    let (mut a, mut b) = (0.0, 2.0);
    if slope(a)? <= 0.0 {
        return Some(0.0);
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if slope(m)? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Critical-exponent estimate from orbit counting on a window.
pub fn estimate_exponent(orbit: &Orbit, window: (f64, f64)) -> Result<ExponentEstimate> {
    if window.0 < 2.0 {
        return Err(Error::Invalid(format!(
            "window must start at R ≥ 2, got {}",
            window.0
        )));
    }
    if window.1 > orbit.r_max + 1e-12 {
        return Err(Error::Invalid(format!(
            "window end {} exceeds the enumeration radius {}",
            window.1, orbit.r_max
        )));
    }
    counting_exponent(
        &orbit.dists(),
        window,
        CountNormalization::Plain,
        MIN_EXPONENT_POINTS,
    )
}

/// Greedy descent to the Dirichlet domain of `o`: returns `(p', w)` with
/// `p' = w⁻¹·p` no farther from `o` than any generator image of itself.
pub fn reduce_to_domain(group: &GroupPresentation, p: HPoint) -> Result<(HPoint, Word)> {
    let mut r = Reducer::new(group);
    let q = r.reduce(p)?;
    Ok((q, r.word))
}

/// Same as [`reduce_to_domain`], starting from the guess `hint⁻¹·p`.
pub fn reduce_to_domain_from(group: &GroupPresentation, p: HPoint, hint: &Word) -> Result<(HPoint, Word)> {
    let mut r = Reducer::with_hint(group, hint);
    let q = r.reduce(p)?;
    Ok((q, r.word))
}

/// Reduction state that carries its last word over to the next call, so
/// nearby points (samples along a segment) reduce in a few steps.
#[derive(Debug, Clone)]
pub struct Reducer<'g> {
    group: &'g GroupPresentation,
    word: Word,
    /// `word⁻¹` as a matrix.
    map: MobiusMap,
}

impl<'g> Reducer<'g> {
    pub fn new(group: &'g GroupPresentation) -> Self {
        Self {
            group,
            word: Word::identity(),
            map: MobiusMap::IDENTITY,
        }
    }

    pub fn with_hint(group: &'g GroupPresentation, hint: &Word) -> Self {
        Self {
            group,
            word: hint.clone(),
            map: group.evaluate(&hint.inverse()),
        }
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    /// The isometry `word⁻¹` applied by the last reduction.
    pub fn map(&self) -> &MobiusMap {
        &self.map
    }

    /// Reduces `p`, starting from the current word.
    pub fn reduce(&mut self, p: HPoint) -> Result<HPoint> {
        let o = self.group.basepoint;
        let mut q = self.map.apply(p)?;
        let mut cur = cosh_distance(q, o);
        for _ in 0..REDUCTION_STEP_CAP {
            let mut best: Option<(f64, u32, HPoint)> = None;
            for l in 0..self.group.letter_count() {
                let r = self.group.letter_map(l).apply_unchecked(q);
                let c = cosh_distance(r, o);
                if best.is_none_or(|b| c < b.0) {
                    best = Some((c, l, r));
                }
            }
            match best {
                Some((c, l, r)) if c < cur * (1.0 - 1e-13) && r.y() > 0.0 => {
                    q = r;
                    cur = c;
                    self.map = *self.group.letter_map(l) * self.map;
                    self.word.push_letter(l ^ 1);
                }
                _ => return Ok(q),
            }
        }
        Err(Error::NonTermination(REDUCTION_STEP_CAP))
    }

    /// `d(p, Γo)`.
    pub fn distance_to_orbit(&mut self, p: HPoint) -> Result<f64> {
        let q = self.reduce(p)?;
        Ok(hyp_distance(q, self.group.basepoint))
    }
}

/// `d(p, Γo)` via reduction.
pub fn distance_to_orbit(group: &GroupPresentation, p: HPoint) -> Result<f64> {
    let (q, _) = reduce_to_domain(group, p)?;
    Ok(hyp_distance(q, group.basepoint))
}

/// A primitive conjugacy class with its lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedGeodesic {
    pub rep: Word,
    pub element: MobiusMap,
    pub length0: f64,
    /// Lengths keyed by metric id.
    pub lengths: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedGeodesicOptions {
    /// Extra enumeration radius beyond `L_max`; `None` picks a default from
    /// the generator displacements.
    pub slack: Option<f64>,
    pub dedup_inversion: bool,
    pub cap: usize,
}

impl Default for ClosedGeodesicOptions {
    fn default() -> Self {
        Self {
            slack: None,
            dedup_inversion: false,
            cap: 5_000_000,
        }
    }
}

/// Default enumeration slack for closed geodesics.
pub fn default_geodesic_slack(group: &GroupPresentation) -> f64 {
    group.max_displacement() + 1.0
}

fn canonical_class(w: &Word, dedup_inversion: bool) -> Word {
    let c = w.cyclic_canonical();
    if dedup_inversion {
        c.clone().min(w.inverse().cyclic_canonical())
    } else {
        c
    }
}

/// One record per primitive hyperbolic conjugacy class of length at most
/// `l_max`, sorted by `(length0, rep)`.
pub fn closed_geodesics(
    group: &GroupPresentation,
    l_max: f64,
    opts: ClosedGeodesicOptions,
) -> Result<Vec<ClosedGeodesic>> {
    if !(l_max > 0.0) {
        return Err(Error::Invalid(format!("L_max must be positive, got {l_max}")));
    }
    let slack = opts.slack.unwrap_or_else(|| default_geodesic_slack(group));
    let orbit = enumerate_orbit(group, l_max + slack, opts.cap)?;
    Ok(closed_geodesics_from_orbit(
        group,
        &orbit,
        l_max,
        opts.dedup_inversion,
    ))
}

/// Extracts closed geodesics from an already enumerated orbit.
pub fn closed_geodesics_from_orbit(
    group: &GroupPresentation,
    orbit: &Orbit,
    l_max: f64,
    dedup_inversion: bool,
) -> Vec<ClosedGeodesic> {
    let mut classes: BTreeMap<Word, ()> = BTreeMap::new();
    for p in &orbit.points {
        if p.word.is_identity() || !p.word.is_cyclically_reduced() || !p.word.is_primitive() {
            continue;
        }
        if !p.element.is_hyperbolic() || p.element.translation_length() > l_max + 1e-9 {
            continue;
        }
        classes.insert(canonical_class(&p.word, dedup_inversion), ());
    }
    let mut out: Vec<ClosedGeodesic> = classes
        .into_keys()
        .map(|rep| {
            let element = group.evaluate(&rep);
            let length0 = element.translation_length();
            let mut lengths = BTreeMap::new();
            lengths.insert("g0".to_string(), length0);
            ClosedGeodesic {
                rep,
                element,
                length0,
                lengths,
            }
        })
        .filter(|g| g.length0 <= l_max)
        .collect();
    out.sort_by(|a, b| a.length0.total_cmp(&b.length0).then_with(|| a.rep.cmp(&b.rep)));
    out
}

/// Growth exponent of the primitive length spectrum, regressing `ln(L·N(L))`.
pub fn length_spectrum_exponent(
    lengths: &mut [f64],
    window: (f64, f64),
    min_points: usize,
) -> Result<ExponentEstimate> {
    lengths.sort_by(f64::total_cmp);
    counting_exponent(lengths, window, CountNormalization::PrimeOrbit, min_points)
}

/// A weighted atom of a truncated Patterson–Sullivan measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub index: usize,
    pub point: HPoint,
    /// `d(o, γo)`.
    pub dist: f64,
    pub weight: f64,
    /// Boundary endpoint of the ray from `o` through `γo`.
    pub direction: BoundaryPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PattersonAtoms {
    pub s: f64,
    pub x: HPoint,
    pub atoms: Vec<Atom>,
}

impl PattersonAtoms {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// Default margin of `s` above the critical exponent estimate.
pub const PATTERSON_MARGIN: f64 = 0.05;

/// Atoms `e^{−s d(x,γo)} / Σ_γ e^{−s d(o,γo)}` over a truncated orbit.
pub fn patterson_atoms(
    orbit: &Orbit,
    s: f64,
    x: HPoint,
    delta_hat: f64,
    margin: f64,
) -> Result<PattersonAtoms> {
    if s < delta_hat + margin {
        return Err(Error::Invalid(format!(
            "Patterson exponent {s} must be at least δ̂ + margin = {}",
            delta_hat + margin
        )));
    }
    let o = orbit.basepoint;
    let norm: f64 = orbit.points.iter().map(|p| (-s * p.dist).exp()).sum();
    let atoms = orbit
        .points
        .par_iter()
        .enumerate()
        .map(|(index, p)| Atom {
            index,
            point: p.image,
            dist: p.dist,
            weight: (-s * hyp_distance(x, p.image)).exp() / norm,
            direction: direction_from(o, p.image),
        })
        .collect();
    Ok(PattersonAtoms { s, x, atoms })
}

/// Relative atom mass in `arc` among atoms with `dist ≥ r_far`.
pub fn measure_arc(atoms: &PattersonAtoms, arc: &BoundaryArc, r_far: f64) -> Result<f64> {
    let (mut inside, mut total) = (0.0, 0.0);
    for a in atoms.atoms.iter().filter(|a| a.dist >= r_far) {
        total += a.weight;
        if arc.contains(a.direction) {
            inside += a.weight;
        }
    }
    if total == 0.0 {
        return Err(Error::EmptyTail(r_far));
    }
    Ok(inside / total)
}

/// Ready-made groups used by the examples and tests.
pub mod catalog {
    use super::*;
    use crate::kernel::BASEPOINT;
    use std::f64::consts::TAU;

    /// `⟨z ↦ z + 1⟩`.
    pub fn cyclic_parabolic() -> GroupPresentation {
        let g = Generator::parabolic_translation("p", 1.0).expect("valid generator");
        GroupPresentation::new(GroupKind::GeometricallyFiniteFree, vec![g], BASEPOINT).expect("valid group")
    }

    /// `⟨z ↦ e²z⟩`, translation length 2.
    pub fn cyclic_hyperbolic() -> GroupPresentation {
        let g = Generator::dilation("h", std::f64::consts::E.powi(2)).expect("valid generator");
        GroupPresentation::new(GroupKind::Schottky, vec![g], BASEPOINT).expect("valid group")
    }

    /// Symmetric Schottky group pairing disks of radius `r` centred at
    /// `±c1` (generator a) and `±c2` (generator b).
    pub fn symmetric_schottky(c1: f64, c2: f64, r: f64) -> Result<GroupPresentation> {
        let a = Generator::from_disks("a", (-c1, r), (c1, r))?;
        let b = Generator::from_disks("b", (-c2, r), (c2, r))?;
        GroupPresentation::new(GroupKind::Schottky, vec![a, b], BASEPOINT)
    }

    /// `2k` arcs of half-width `half` equally spaced around `o` (as seen in
    /// the disk model), arc `j` paired with arc `j + k`.
    pub fn regular_schottky(k: usize, half: f64) -> Result<GroupPresentation> {
        let o = BASEPOINT;
        let step = TAU / (2 * k) as f64;
        let gens = (0..k)
            .map(|j| {
                let minus = angular_arc(o, (j as f64 + 0.5) * step, half)?;
                let plus = angular_arc(o, ((j + k) as f64 + 0.5) * step, half)?;
                Generator::from_arcs(format!("{}", (b'a' + j as u8) as char), minus, plus, o)
            })
            .collect::<Result<Vec<_>>>()?;
        GroupPresentation::new(GroupKind::Schottky, gens, o)
    }

    /// Mixed free product around `o`: each entry of `factors` is either a
    /// parabolic pair of tangent arcs of half-width `half` (`true`) or a
    /// hyperbolic pair of opposite arcs (`false`). Factors are spread
    /// evenly over the circle.
    pub fn regular_free_product(factors: &[bool], half: f64) -> Result<GroupPresentation> {
        let o = BASEPOINT;
        let slots: usize = factors.iter().map(|&p| if p { 1 } else { 2 }).sum();
        let step = TAU / slots as f64;
        let mut gens = Vec::new();
        let mut slot = 0usize;
        let mut pending = Vec::new();
        for (i, &parabolic) in factors.iter().enumerate() {
            let label = format!("{}{i}", if parabolic { "p" } else { "h" });
            if parabolic {
                let c = (slot as f64 + 0.5) * step;
                let minus = angular_arc(o, c - half, half)?;
                let plus = angular_arc(o, c + half, half)?;
                gens.push(Generator::from_arcs(label, minus, plus, o)?);
                slot += 1;
            } else {
                pending.push((label, slot));
                slot += 1;
            }
        }
        // hyperbolic factors take the remaining slots, opposite each other
        for (label, s) in pending {
            let minus = angular_arc(o, (s as f64 + 0.5) * step, half)?;
            let plus = angular_arc(o, (slot as f64 + 0.5) * step, half)?;
            slot += 1;
            gens.push(Generator::from_arcs(label, minus, plus, o)?);
        }
        let kind = if factors.iter().any(|&p| p) {
            GroupKind::GeometricallyFiniteFree
        } else {
            GroupKind::Schottky
        };
        GroupPresentation::new(kind, gens, o)
    }

    /// Free product of parabolic cyclic groups, one per cusp point, each
    /// pairing two tangent disks of radius `r` touching at the cusp.
    pub fn parabolic_free_product(cusps: &[f64], r: f64) -> Result<GroupPresentation> {
        let gens = cusps
            .iter()
            .enumerate()
            .map(|(i, &x)| Generator::from_disks(format!("p{i}"), (x - r, r), (x + r, r)))
            .collect::<Result<Vec<_>>>()?;
        GroupPresentation::new(GroupKind::GeometricallyFiniteFree, gens, BASEPOINT)
    }
}
