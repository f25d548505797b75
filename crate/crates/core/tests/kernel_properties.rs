use proptest::prelude::*;
use sprlab_core::kernel::{
    busemann_exact, dynamical_ball_contains, hopf_coords, hopf_inverse, hyp_distance, shadow_arc,
    BoundaryArc, BoundaryPoint, HPoint, MobiusMap, UnitTangent, BASEPOINT,
};
use std::f64::consts::TAU;

fn point() -> impl Strategy<Value = HPoint> {
    (-4.0..4.0f64, 0.1..6.0f64).prop_map(|(x, y)| HPoint::new(x, y).unwrap())
}

fn boundary() -> impl Strategy<Value = BoundaryPoint> {
    prop_oneof![
        1 => Just(BoundaryPoint::Infinity),
        6 => (-6.0..6.0f64).prop_map(BoundaryPoint::Finite),
    ]
}

/// `[[a, b], [c, (1 + bc)/a]]` with `a` kept away from 0.
fn isometry() -> impl Strategy<Value = MobiusMap> {
    (0.4..2.5f64, any::<bool>(), -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, neg, b, c)| {
        let a = if neg { -a } else { a };
        MobiusMap::new(a, b, c, (1.0 + b * c) / a).unwrap()
    })
}

fn tangent() -> impl Strategy<Value = UnitTangent> {
    (point(), 0.0..TAU).prop_map(|(p, a)| UnitTangent::new(p, a))
}

/// Distance through the Cayley transform `2 artanh |z − w| / |z − w̄|`.
fn disk_distance(p: HPoint, q: HPoint) -> f64 {
    let (z, w) = (p.to_complex(), q.to_complex());
    2.0 * ((z - w).norm() / (z - w.conj()).norm()).atanh()
}

/// `d(x, z) − d(y, z)` for `z` very close to `ξ`.
fn busemann_limit(xi: BoundaryPoint, x: HPoint, y: HPoint) -> f64 {
    let z = match xi {
        BoundaryPoint::Infinity => HPoint::new(0.0, 1e7).unwrap(),
        BoundaryPoint::Finite(s) => HPoint::new(s, 1e-7).unwrap(),
    };
    hyp_distance(x, z) - hyp_distance(y, z)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_matches_the_disk_model(p in point(), q in point()) {
        let d = hyp_distance(p, q);
        prop_assert!((d - disk_distance(p, q)).abs() <= 1e-8 * (1.0 + d));
        prop_assert!((d - hyp_distance(q, p)).abs() <= 1e-12);
    }

    #[test]
    fn distance_is_isometry_invariant(p in point(), q in point(), m in isometry()) {
        let d = hyp_distance(p, q);
        let dm = hyp_distance(m.apply(p).unwrap(), m.apply(q).unwrap());
        prop_assert!((d - dm).abs() <= 1e-10 * (1.0 + d), "{d} vs {dm}");
    }

    #[test]
    fn triangle_inequality(p in point(), q in point(), r in point()) {
        prop_assert!(hyp_distance(p, r) <= hyp_distance(p, q) + hyp_distance(q, r) + 1e-10);
    }

    #[test]
    fn busemann_is_the_limit_of_distance_differences(xi in boundary(), x in point(), y in point()) {
        let b = busemann_exact(xi, x, y);
        prop_assert!((b - busemann_limit(xi, x, y)).abs() <= 1e-4, "{b}");
    }

    #[test]
    fn busemann_cocycle_and_lipschitz_bound(xi in boundary(), x in point(), y in point(), z in point()) {
        let (bxy, byz, bxz) = (busemann_exact(xi, x, y), busemann_exact(xi, y, z), busemann_exact(xi, x, z));
        prop_assert!((bxy + byz - bxz).abs() <= 1e-10);
        prop_assert!(bxy.abs() <= hyp_distance(x, y) + 1e-10);
        prop_assert!(busemann_exact(xi, x, x).abs() <= 1e-14);
    }

    #[test]
    fn busemann_is_isometry_invariant(xi in boundary(), x in point(), y in point(), m in isometry()) {
        let b = busemann_exact(xi, x, y);
        let bm = busemann_exact(m.apply_boundary(xi), m.apply(x).unwrap(), m.apply(y).unwrap());
        prop_assert!((b - bm).abs() <= 1e-10 * (1.0 + b.abs()), "{b} vs {bm}");
    }

    /// With `ξ = ∞` and `x = i`, `cosh d(y, x_t) = cosh(t − log Im y) + δ` where
    /// `δ ≤ (cosh d − 1) e^{−t}`, so the error is at most `δ / sinh(t − d)`.
    /// That implies `2d·e^{−t}` once `t ≥ 2d`, but not for `t` near `d`.
    #[test]
    fn two_point_busemann_approximation(xi in boundary(), x in point(), y in point(), extra in 0.0..12.0f64) {
        let d = hyp_distance(x, y);
        let t = d + extra;
        let xt = UnitTangent::toward_boundary(x, xi).flow(t).base;
        let err = (busemann_exact(xi, x, y) - (hyp_distance(x, xt) - hyp_distance(y, xt))).abs();
        let exact = (d.cosh() - 1.0) * (-t).exp() / (t - d).sinh();
        prop_assert!(err <= exact + 1e-9, "err {err} against {exact} at d {d}, t {t}");
        if t >= 2.0 * d {
            prop_assert!(err <= 2.0 * d * (-t).exp() + 1e-9, "err {err} at d {d}, t {t}");
        }
    }

    #[test]
    fn normalization_fixes_determinant_and_sign(m in isometry(), n in isometry()) {
        for k in [m, n, m * n, (m * n).inverse()] {
            prop_assert!((k.det() - 1.0).abs() <= 1e-12);
            let lead = [k.a, k.b, k.c, k.d].into_iter().find(|v| *v != 0.0).unwrap();
            prop_assert!(lead > 0.0);
        }
        prop_assert!((m * m.inverse()).approx_identity(1e-10));
    }

    #[test]
    fn composition_acts_in_order(m in isometry(), n in isometry(), p in point()) {
        let lhs = (m * n).apply(p).unwrap();
        let rhs = m.apply(n.apply(p).unwrap()).unwrap();
        prop_assert!(hyp_distance(lhs, rhs) <= 1e-9);
    }

    #[test]
    fn hopf_coordinates_round_trip(v in tangent()) {
        let h = hopf_coords(&v, BASEPOINT);
        let w = hopf_inverse(&h, BASEPOINT).unwrap();
        prop_assert!(hyp_distance(v.base, w.base) <= 1e-8);
        prop_assert!(angle_gap(v.angle(), w.angle()) <= 1e-8);
    }

    #[test]
    fn flow_shifts_hopf_time(v in tangent(), s in -4.0..4.0f64) {
        let h = hopf_coords(&v, BASEPOINT);
        let hs = hopf_coords(&v.flow(s), BASEPOINT);
        prop_assert!((hs.t - h.t - s).abs() <= 1e-8);
        prop_assert!(hs.xi_plus.approx_eq(h.xi_plus, 1e-8));
        prop_assert!(hs.xi_minus.approx_eq(h.xi_minus, 1e-8));
    }

    /// `t(γv) = t(v) + B_{γξ₊}(o, γo)`.
    #[test]
    fn hopf_time_follows_the_cocycle(v in tangent(), m in isometry()) {
        let h = hopf_coords(&v, BASEPOINT);
        let hm = hopf_coords(&v.pushforward(&m).unwrap(), BASEPOINT);
        let shift = busemann_exact(hm.xi_plus, BASEPOINT, m.apply(BASEPOINT).unwrap());
        prop_assert!((hm.t - h.t - shift).abs() <= 1e-8, "{} vs {}", hm.t - h.t, shift);
        prop_assert!(hm.xi_plus.approx_eq(m.apply_boundary(h.xi_plus), 1e-8));
    }

    #[test]
    fn dynamical_balls_shrink_with_time_and_grow_with_radius(
        v in tangent(),
        dx in -0.05..0.05f64,
        da in -0.05..0.05f64,
        t in 0.0..4.0f64,
        eps in 0.05..1.0f64,
    ) {
        let w = UnitTangent::new(HPoint::new(v.base.x() + dx * v.base.y(), v.base.y()).unwrap(), v.angle() + da);
        prop_assert!(dynamical_ball_contains(&v, &v, t, eps, 0.05));
        if dynamical_ball_contains(&v, &w, t, eps, 0.05) {
            prop_assert!(dynamical_ball_contains(&v, &w, 0.5 * t, eps, 0.05));
            prop_assert!(dynamical_ball_contains(&v, &w, t, 2.0 * eps, 0.05));
        }
        if !dynamical_ball_contains(&v, &w, t, eps, 0.05) {
            prop_assert!(!dynamical_ball_contains(&v, &w, t + 1.0, eps, 0.05));
            prop_assert!(!dynamical_ball_contains(&v, &w, t, 0.5 * eps, 0.05));
        }
    }

    #[test]
    fn arcs_and_complements_partition_the_boundary(a in boundary(), b in boundary(), xi in boundary()) {
        prop_assume!(!a.approx_eq(b, 1e-6));
        let arc = BoundaryArc::new(a, b).unwrap();
        let comp = arc.complement().unwrap();
        prop_assert!(arc.contains(xi) != comp.contains(xi));
        let w = arc.angular_width(BASEPOINT) + comp.angular_width(BASEPOINT);
        prop_assert!((w - TAU).abs() <= 1e-12);
    }

    /// Sampled rays from `o`: a ray meets the ball exactly when its endpoint
    /// is in the shadow, away from the shadow's edges.
    #[test]
    fn shadows_match_sampled_rays(c in point(), r in 0.2..1.5f64, theta in 0.0..TAU) {
        let d = hyp_distance(BASEPOINT, c);
        prop_assume!(d > r + 0.1);
        let arc = shadow_arc(BASEPOINT, c, r).unwrap();
        let xi = BoundaryPoint::from_disk_angle(BASEPOINT, theta);
        let ray = UnitTangent::toward_boundary(BASEPOINT, xi);
        let n = 4000;
        let closest = (0..=n)
            .map(|k| hyp_distance(ray.flow((d + r + 1.0) * k as f64 / n as f64).base, c))
            .fold(f64::INFINITY, f64::min);
        prop_assume!((closest - r).abs() > 5e-3);
        prop_assert_eq!(arc.contains(xi), closest < r);
    }
}

#[test]
fn shadow_width_is_the_sine_law() {
    let c = HPoint::new(0.0, 20.0).unwrap();
    let arc = shadow_arc(BASEPOINT, c, 1.0).unwrap();
    let d = hyp_distance(BASEPOINT, c);
    let expected = 2.0 * (1.0f64.sinh() / d.sinh()).asin();
    assert!((arc.angular_width(BASEPOINT) - expected).abs() < 1e-12);
}
