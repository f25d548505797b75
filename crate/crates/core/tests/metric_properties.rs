use proptest::prelude::*;
use sprlab_core::group::catalog;
use sprlab_core::kernel::{hyp_distance, BoundaryPoint, HPoint, BASEPOINT};
use sprlab_core::metric::{
    busemann_approx, closed_geodesic_length, perturbed_distance, Bump, BumpField, ConformalMetric,
    DISTANCE_TOL,
};
use sprlab_core::word::Word;
use std::sync::{Arc, OnceLock};

fn plane_bump() -> Arc<BumpField> {
    static F: OnceLock<Arc<BumpField>> = OnceLock::new();
    F.get_or_init(|| {
        Arc::new(
            BumpField::new(vec![Bump {
                center: BASEPOINT,
                radius: 1.0,
                amplitude: 1.0,
            }])
            .unwrap(),
        )
    })
    .clone()
}

fn near_o() -> impl Strategy<Value = HPoint> {
    (-1.5..1.5f64, 0.3..3.0f64).prop_map(|(x, y)| HPoint::new(x, y).unwrap())
}

/// Length factors lie in `[e^{−E/2}, e^{E/2}]` since `g_ε = e^{2εφ} g₀`.
fn sandwich(metric: &ConformalMetric, l0: f64, l: f64) -> bool {
    let k = (0.5 * metric.pinching()).exp();
    l0 / k - DISTANCE_TOL <= l && l <= l0 * k + DISTANCE_TOL
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distances_respect_the_pinching_sandwich(x in near_o(), y in near_o(), eps in -0.045..0.045f64) {
        let metric = ConformalMetric::new(plane_bump(), eps).unwrap();
        let (d0, d) = (hyp_distance(x, y), perturbed_distance(&metric, x, y).unwrap());
        prop_assert!(sandwich(&metric, d0, d), "d0 {d0} d {d} at eps {eps}");
    }

    #[test]
    fn busemann_approximation_is_a_cocycle(x in near_o(), y in near_o(), z in near_o(), finite in any::<bool>()) {
        let metric = ConformalMetric::new(plane_bump(), 0.04).unwrap();
        let xi = if finite { BoundaryPoint::Finite(0.7) } else { BoundaryPoint::Infinity };
        let t = 12.0;
        let bxy = busemann_approx(&metric, xi, x, y, t).unwrap();
        let byz = busemann_approx(&metric, xi, y, z, t).unwrap();
        let bxz = busemann_approx(&metric, xi, x, z, t).unwrap();
        let gap = (bxy.value + byz.value - bxz.value).abs();
        let tol = 2.0 * (bxy.bound + byz.bound + bxz.bound) + 3.0 * DISTANCE_TOL;
        prop_assert!(gap <= tol, "cocycle gap {gap} against {tol}");
    }
}

#[test]
fn closed_lengths_respect_the_pinching_sandwich() {
    let g = catalog::regular_schottky(2, 40f64.to_radians()).unwrap();
    let phi = BumpField::periodized(
        vec![Bump {
            center: BASEPOINT,
            radius: 1.0,
            amplitude: 1.0,
        }],
        &g,
    )
    .unwrap();
    let phi = Arc::new(phi);
    for eps in [-0.04, 0.04] {
        let metric = ConformalMetric::new(phi.clone(), eps).unwrap();
        for w in [
            "0^1",
            "1^1",
            "0^1.1^1",
            "0^1.1^-1",
            "0^2.1^1",
            "0^1.1^1.0^-1.1^-1",
        ] {
            let rep = Word::parse_index_string(w).unwrap();
            let l0 = g.evaluate(&rep).translation_length();
            let l = closed_geodesic_length(&metric, &g, &rep).unwrap().length;
            assert!(sandwich(&metric, l0, l), "{w}: l0 {l0} l {l} at eps {eps}");
        }
    }
}
