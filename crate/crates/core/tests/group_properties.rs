use proptest::prelude::*;
use sprlab_core::group::{
    catalog, closed_geodesics, counting_exponent, distance_to_orbit, enumerate_orbit, estimate_exponent,
    length_spectrum_exponent, measure_arc, patterson_atoms, reduce_to_domain, ClosedGeodesicOptions,
    CountNormalization, GroupPresentation, Orbit, PATTERSON_MARGIN,
};
use sprlab_core::kernel::{
    hyp_distance, shadow_arc, BoundaryArc, BoundaryPoint, HPoint, MobiusMap, BASEPOINT,
};
use sprlab_core::word::Word;
use std::collections::BTreeMap;
use std::sync::OnceLock;

fn schottky() -> &'static GroupPresentation {
    static G: OnceLock<GroupPresentation> = OnceLock::new();
    G.get_or_init(|| catalog::regular_schottky(2, 40f64.to_radians()).unwrap())
}

fn schottky_orbit() -> &'static Orbit {
    static O: OnceLock<Orbit> = OnceLock::new();
    O.get_or_init(|| enumerate_orbit(schottky(), 14.0, 1_000_000).unwrap())
}

/// Every reduced word up to `max_len` letters, no pruning by distance.
fn all_words(group: &GroupPresentation, max_len: usize) -> Vec<(Word, MobiusMap, usize)> {
    let mut out = vec![(Word::identity(), MobiusMap::IDENTITY, 0)];
    let mut frontier: Vec<(Vec<u32>, MobiusMap)> = vec![(Vec::new(), MobiusMap::IDENTITY)];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for (letters, m) in &frontier {
            for l in 0..group.letter_count() {
                if letters.last().is_some_and(|&last| last == l ^ 1) {
                    continue;
                }
                let mut w = letters.clone();
                w.push(l);
                let mm = *m * *group.letter_map(l);
                out.push((Word::from_letters(w.iter().copied()), mm, len));
                next.push((w, mm));
            }
        }
        frontier = next;
    }
    out
}

fn brute_force_matches(group: &GroupPresentation, r: f64, max_len: usize) {
    let words = all_words(group, max_len);
    let dist = |m: &MobiusMap| hyp_distance(BASEPOINT, m.apply(BASEPOINT).unwrap());
    // the longest words must already be out of reach, or the oracle is incomplete
    let shortest_long = words
        .iter()
        .filter(|w| w.2 == max_len)
        .map(|w| dist(&w.1))
        .fold(f64::INFINITY, f64::min);
    assert!(
        shortest_long > r + 1.0,
        "words of length {max_len} reach {shortest_long}"
    );
    let mut expected: Vec<Word> = words
        .iter()
        .filter(|w| dist(&w.1) <= r)
        .map(|w| w.0.clone())
        .collect();
    expected.sort();
    let orbit = enumerate_orbit(group, r, 1_000_000).unwrap();
    let mut got: Vec<Word> = orbit.points.iter().map(|p| p.word.clone()).collect();
    got.sort();
    assert_eq!(got, expected);
    for p in &orbit.points {
        assert!((p.dist - hyp_distance(BASEPOINT, p.image)).abs() <= 1e-9);
    }
}

#[test]
fn enumeration_matches_unpruned_search_on_a_symmetric_schottky_group() {
    brute_force_matches(&catalog::symmetric_schottky(1.5, 4.0, 0.7).unwrap(), 8.0, 5);
}

#[test]
fn enumeration_matches_unpruned_search_on_a_regular_schottky_group() {
    brute_force_matches(schottky(), 8.0, 12);
}

#[test]
fn enumeration_matches_unpruned_search_with_cusps() {
    brute_force_matches(
        &catalog::regular_free_product(&[true, true], 30f64.to_radians()).unwrap(),
        6.0,
        12,
    );
}

#[test]
fn no_two_words_give_the_same_element() {
    let orbit = schottky_orbit().truncate(10.0);
    let key = |m: &MobiusMap| ((m.a * 1e6).round() as i64, (m.b * 1e6).round() as i64);
    let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in orbit.points.iter().enumerate() {
        buckets.entry(key(&p.element)).or_default().push(i);
    }
    // neighbouring buckets as well, so rounding cannot hide a collision
    for &(a, b) in buckets.keys() {
        let near: Vec<usize> = (-1..=1)
            .flat_map(|da| (-1..=1).map(move |db| (a + da, b + db)))
            .filter_map(|k| buckets.get(&k))
            .flatten()
            .copied()
            .collect();
        for (x, &i) in near.iter().enumerate() {
            for &j in &near[x + 1..] {
                let (p, q) = (&orbit.points[i], &orbit.points[j]);
                assert!(
                    p.element.distance_to(&q.element) > 1e-8,
                    "{} and {} collide",
                    p.word,
                    q.word
                );
            }
        }
    }
}

#[test]
fn counts_are_monotone_and_match_the_sorted_distances() {
    let orbit = schottky_orbit();
    assert!(orbit.points.windows(2).all(|w| w[0].dist <= w[1].dist));
    let mut last = 0;
    for k in 0..=140 {
        let r = 0.1 * k as f64;
        let n = orbit.count_within(r);
        assert!(n >= last);
        assert_eq!(n, orbit.points.iter().filter(|p| p.dist <= r).count());
        last = n;
    }
}

#[test]
fn cyclic_hyperbolic_exponent_is_near_zero() {
    let g = catalog::cyclic_hyperbolic();
    let orbit = enumerate_orbit(&g, 120.0, 10_000).unwrap();
    let e = estimate_exponent(&orbit, (60.0, 120.0)).unwrap();
    assert!(e.value <= 0.02, "{}", e.value);
}

#[test]
fn cyclic_parabolic_exponent_is_one_half() {
    let g = catalog::cyclic_parabolic();
    let orbit = enumerate_orbit(&g, 20.0, 1_000_000).unwrap();
    let e = estimate_exponent(&orbit, (10.0, 20.0)).unwrap();
    assert!((e.value - 0.5).abs() <= 0.05, "{}", e.value);
}

#[test]
fn counting_and_bisection_agree_on_schottky() {
    let e = estimate_exponent(schottky_orbit(), (7.0, 14.0)).unwrap();
    let b = e.bisection.expect("enough shells");
    assert!((e.value - b).abs() <= 0.02, "counting {} bisection {b}", e.value);
}

#[test]
fn extending_the_window_moves_the_estimate_within_its_residual() {
    let orbit = schottky_orbit();
    let short = estimate_exponent(orbit, (7.0, 12.0)).unwrap();
    let long = estimate_exponent(orbit, (7.0, 14.0)).unwrap();
    let tol = 3.0 * (short.residual + long.residual) + 0.02;
    assert!(
        (short.value - long.value).abs() <= tol,
        "{} {} tol {tol}",
        short.value,
        long.value
    );
}

#[test]
fn scaling_distances_scales_the_exponent_inversely() {
    let dists = schottky_orbit().dists();
    let base = counting_exponent(&dists, (7.0, 14.0), CountNormalization::Plain, 50).unwrap();
    for eps in [-0.2f64, 0.2] {
        let k = (0.5 * eps).exp();
        let scaled: Vec<f64> = dists.iter().map(|d| d * k).collect();
        let e = counting_exponent(&scaled, (7.0 * k, 14.0 * k), CountNormalization::Plain, 50).unwrap();
        assert!(
            (e.value - base.value / k).abs() <= base.residual + 1e-9,
            "{} vs {}",
            e.value,
            base.value / k
        );
    }
}

#[test]
fn prime_length_spectrum_grows_like_the_orbit() {
    let g = schottky();
    let delta = estimate_exponent(schottky_orbit(), (7.0, 14.0)).unwrap().value;
    let geos = closed_geodesics(g, 12.0, ClosedGeodesicOptions::default()).unwrap();
    let mut lengths: Vec<f64> = geos.iter().map(|c| c.length0).collect();
    let h = length_spectrum_exponent(&mut lengths, (7.0, 12.0), 50)
        .unwrap()
        .value;
    assert!((h - delta).abs() <= 0.1, "spectrum {h} orbit {delta}");
}

#[test]
fn distance_to_orbit_matches_the_nearest_orbit_point() {
    let g = schottky();
    let orbit = schottky_orbit().truncate(12.5);
    let mut checked = 0;
    for i in 0..40 {
        for j in 1..=6 {
            // points along rays from o, out to radius 6
            let angle = 0.157 * i as f64 + 0.01 * j as f64;
            let xi = BoundaryPoint::from_disk_angle(BASEPOINT, angle);
            let v = sprlab_core::kernel::UnitTangent::toward_boundary(BASEPOINT, xi);
            let p = v.flow(j as f64).base;
            let brute = orbit
                .points
                .iter()
                .map(|q| hyp_distance(p, q.image))
                .fold(f64::INFINITY, f64::min);
            let reduced = distance_to_orbit(g, p).unwrap();
            assert!((brute - reduced).abs() <= 1e-6, "{p}: {brute} vs {reduced}");
            let (q, w) = reduce_to_domain(g, p).unwrap();
            assert!(hyp_distance(g.evaluate(&w).apply(q).unwrap(), p) <= 1e-8);
            checked += 1;
        }
    }
    assert_eq!(checked, 240);
}

fn word_index(orbit: &Orbit) -> BTreeMap<Word, usize> {
    orbit
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.word.clone(), i))
        .collect()
}

#[test]
fn patterson_weights_have_the_conformal_ratio() {
    let orbit = schottky_orbit().truncate(10.0);
    let s = 1.0;
    let x = HPoint::new(0.3, 1.4).unwrap();
    let ao = patterson_atoms(&orbit, s, BASEPOINT, 0.72, PATTERSON_MARGIN).unwrap();
    let ax = patterson_atoms(&orbit, s, x, 0.72, PATTERSON_MARGIN).unwrap();
    assert!((ao.total_mass() - 1.0).abs() <= 1e-12);
    for (a, b) in ao.atoms.iter().zip(&ax.atoms) {
        let ratio = b.weight / a.weight;
        let expected = (-s * (hyp_distance(x, a.point) - hyp_distance(BASEPOINT, a.point))).exp();
        assert!((ratio / expected - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn patterson_atoms_are_equivariant() {
    let g = schottky();
    let orbit = schottky_orbit().truncate(12.0);
    let index = word_index(&orbit);
    let gamma = Word::parse_index_string("0^1.1^-1").unwrap();
    let x = HPoint::new(-0.2, 0.8).unwrap();
    let gx = g.evaluate(&gamma).apply(x).unwrap();
    let ax = patterson_atoms(&orbit, 1.0, x, 0.72, PATTERSON_MARGIN).unwrap();
    let agx = patterson_atoms(&orbit, 1.0, gx, 0.72, PATTERSON_MARGIN).unwrap();
    let mut matched = 0;
    for (i, p) in orbit.points.iter().enumerate() {
        if let Some(&j) = index.get(&gamma.inverse().concat(&p.word)) {
            assert!((agx.atoms[i].weight / ax.atoms[j].weight - 1.0).abs() <= 1e-9);
            matched += 1;
        }
    }
    assert!(matched > orbit.len() / 4, "{matched} of {}", orbit.len());
}

#[test]
fn patterson_shell_mass_decays_at_the_excess_exponent() {
    let orbit = schottky_orbit();
    let delta = estimate_exponent(orbit, (7.0, 14.0)).unwrap().value;
    let s = delta + 0.3;
    let atoms = patterson_atoms(orbit, s, BASEPOINT, delta, PATTERSON_MARGIN).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (7..14)
        .map(|r| {
            let r = r as f64;
            let m: f64 = atoms
                .atoms
                .iter()
                .filter(|a| a.dist >= r && a.dist < r + 1.0)
                .map(|a| a.weight)
                .sum();
            (r, m.ln())
        })
        .unzip();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(
        (slope + (s - delta)).abs() <= 0.1,
        "slope {slope} against {}",
        -(s - delta)
    );
}

#[test]
fn arc_measures_are_additive() {
    let orbit = schottky_orbit();
    let atoms = patterson_atoms(orbit, 0.8, BASEPOINT, 0.72, PATTERSON_MARGIN).unwrap();
    assert!((measure_arc(&atoms, &BoundaryArc::Full, 10.0).unwrap() - 1.0).abs() <= 1e-15);
    for k in 0..12 {
        let c = HPoint::new(-3.0 + 0.5 * k as f64, 0.25).unwrap();
        let arc = shadow_arc(BASEPOINT, c, 0.5).unwrap();
        let m = measure_arc(&atoms, &arc, 10.0).unwrap();
        let mc = measure_arc(&atoms, &arc.complement().unwrap(), 10.0).unwrap();
        assert!((0.0..=1.0).contains(&m));
        assert!((m + mc - 1.0).abs() <= 1e-12);
    }
}

fn word_strategy(gens: u32, max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(0..2 * gens, 1..=max_len).prop_map(Word::from_letters)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn translation_length_is_a_class_function(w in word_strategy(2, 7), u in word_strategy(2, 4)) {
        let g = schottky();
        prop_assume!(!w.is_identity());
        let conj = u.concat(&w).concat(&u.inverse());
        let l = g.evaluate(&w).translation_length();
        let lc = g.evaluate(&conj).translation_length();
        prop_assert!((l - lc).abs() <= 1e-8 * (1.0 + l), "{l} vs {lc}");
    }

    #[test]
    fn evaluation_is_a_homomorphism(w in word_strategy(2, 6), u in word_strategy(2, 6)) {
        let g = schottky();
        let lhs = g.evaluate(&w.concat(&u));
        let rhs = g.evaluate(&w) * g.evaluate(&u);
        prop_assert!(lhs.distance_to(&rhs) <= 1e-9 * (1.0 + lhs.cosh_displacement_at_i()));
        prop_assert!((g.evaluate(&w) * g.evaluate(&w.inverse())).approx_identity(1e-8));
    }

    #[test]
    fn reduction_is_idempotent_and_locally_minimal(x in -3.0..3.0f64, y in 0.05..4.0f64) {
        let g = schottky();
        let p = HPoint::new(x, y).unwrap();
        let (q, _) = reduce_to_domain(g, p).unwrap();
        let (q2, w2) = reduce_to_domain(g, q).unwrap();
        prop_assert!(w2.is_identity());
        prop_assert_eq!(q, q2);
        let dq = hyp_distance(q, BASEPOINT);
        for l in 0..g.letter_count() {
            prop_assert!(dq <= hyp_distance(g.letter_map(l).apply(q).unwrap(), BASEPOINT) + 1e-12);
        }
    }
}
