use sprlab_core::group::{
    catalog, enumerate_orbit, estimate_exponent, patterson_atoms, GroupPresentation, Orbit,
};
use sprlab_core::infinity::{
    delta_out, excursion_mass_curve, excursion_records, is_outside_excursion, spr_verdict, CompactWindow,
    SprConfig, SprVerdict, EXCURSION_STEP,
};
use sprlab_core::word::Word;
use std::collections::BTreeMap;

fn schottky() -> GroupPresentation {
    catalog::regular_schottky(2, 40f64.to_radians()).unwrap()
}

fn cusp1() -> GroupPresentation {
    catalog::regular_free_product(&[true, false], 30f64.to_radians()).unwrap()
}

fn cusp2() -> GroupPresentation {
    catalog::regular_free_product(&[true, true], 30f64.to_radians()).unwrap()
}

fn out_flags(group: &GroupPresentation, orbit: &Orbit, r_w: f64, step: f64) -> BTreeMap<Word, bool> {
    let w = CompactWindow::new(group, r_w).unwrap();
    excursion_records(group, orbit, w, step)
        .unwrap()
        .into_iter()
        .map(|r| (r.word, r.is_out))
        .collect()
}

#[test]
fn excursions_are_symmetric_under_inversion() {
    for (g, r_w) in [(schottky(), 2.0), (cusp2(), 1.5), (cusp1(), 2.0)] {
        let orbit = enumerate_orbit(&g, 12.0, 1_000_000).unwrap();
        let flags = out_flags(&g, &orbit, r_w, 0.1);
        for (w, out) in &flags {
            assert_eq!(flags.get(&w.inverse()), Some(out), "{w}");
        }
    }
}

#[test]
fn record_parameters_are_ordered() {
    let g = cusp2();
    let orbit = enumerate_orbit(&g, 12.0, 1_000_000).unwrap();
    let w = CompactWindow::new(&g, 1.5).unwrap();
    for r in excursion_records(&g, &orbit, w, EXCURSION_STEP).unwrap() {
        assert!(0.0 <= r.first_exit && r.first_exit <= r.last_entry && r.last_entry <= r.dist + 1e-12);
        assert!(r.first_exit <= r.first_return && r.first_return <= r.last_entry);
        if r.dist <= 2.0 * w.r_w {
            assert!(r.is_out, "{}", r.word);
        }
    }
}

#[test]
fn powers_along_an_axis_through_o_eventually_fail() {
    let g = catalog::cyclic_hyperbolic();
    let w = CompactWindow::new(&g, 1.5).unwrap();
    let outs: Vec<bool> = (1..12)
        .map(|n| {
            let word = Word::from_letters(std::iter::repeat_n(0, n));
            is_outside_excursion(&g, &word, &g.evaluate(&word), w, 0.1)
                .unwrap()
                .is_out
        })
        .collect();
    let first_fail = outs.iter().position(|o| !o).expect("some power fails");
    assert!(outs[first_fail..].iter().all(|o| !o), "{outs:?}");
}

#[test]
fn halving_the_step_barely_moves_the_excursion_population() {
    for (g, r_w) in [(schottky(), 2.0), (cusp2(), 1.5), (cusp1(), 2.0)] {
        let orbit = enumerate_orbit(&g, 12.0, 1_000_000).unwrap();
        let fine = out_flags(&g, &orbit, r_w, 0.1);
        let coarse = out_flags(&g, &orbit, r_w, 0.2);
        let changed = fine.iter().filter(|(w, o)| coarse[*w] != **o).count();
        let n_out = fine.values().filter(|o| **o).count();
        assert!(
            (changed as f64) < 0.02 * n_out as f64,
            "{changed} of {n_out} flipped"
        );
    }
}

#[test]
fn ladder_is_nonincreasing_within_residual() {
    let g = cusp2();
    let orbit = enumerate_orbit(&g, 16.0, 2_000_000).unwrap();
    let rungs: Vec<_> = [1.5, 2.0, 2.5]
        .iter()
        .map(|&r| {
            delta_out(
                &g,
                &orbit,
                CompactWindow::new(&g, r).unwrap(),
                (8.0, 16.0),
                EXCURSION_STEP,
            )
            .unwrap()
            .0
        })
        .collect();
    for w in rungs.windows(2) {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        assert!(
            b.value <= a.value + a.residual + b.residual,
            "{} then {}",
            a.value,
            b.value
        );
        assert!(w[1].out_count <= w[0].out_count);
    }
}

#[test]
fn parabolic_free_product_escapes_at_one_half() {
    let g = cusp2();
    let orbit = enumerate_orbit(&g, 16.0, 2_000_000).unwrap();
    let (e, _) = delta_out(
        &g,
        &orbit,
        CompactWindow::new(&g, 2.0).unwrap(),
        (8.0, 16.0),
        EXCURSION_STEP,
    )
    .unwrap();
    assert!((e.estimate.value - 0.5).abs() <= 0.1, "{}", e.estimate.value);
}

#[test]
fn excursion_mass_starts_at_one_and_decreases() {
    let g = cusp1();
    let orbit = enumerate_orbit(&g, 14.0, 2_000_000).unwrap();
    let delta = estimate_exponent(&orbit, (7.0, 14.0)).unwrap().value;
    let atoms = patterson_atoms(&orbit, delta + 0.05, orbit.basepoint, delta, 0.05).unwrap();
    let ts: Vec<f64> = (0..12).map(|k| 0.5 * k as f64).collect();
    let w = CompactWindow::new(&g, 2.0).unwrap();
    let masses = excursion_mass_curve(&g, &orbit, &atoms, w, &ts, 10.0, EXCURSION_STEP).unwrap();
    assert!((masses[0] - 1.0).abs() <= 1e-12);
    assert!(masses.windows(2).all(|m| m[1] <= m[0]), "{masses:?}");
}

#[test]
fn elementary_hyperbolic_group_has_no_gap() {
    let g = catalog::cyclic_hyperbolic();
    let orbit = enumerate_orbit(&g, 120.0, 10_000).unwrap();
    let config = SprConfig {
        ladder: vec![1.5, 2.0, 3.0],
        regression: Some((60.0, 120.0)),
        step: EXCURSION_STEP,
    };
    let report = spr_verdict(&g, &orbit, &config).unwrap();
    assert!(report.delta_full.value <= 0.02);
    assert_ne!(report.verdict, SprVerdict::Spr, "{report:?}");
}

#[test]
fn convex_cocompact_group_has_a_gap() {
    let g = schottky();
    let orbit = enumerate_orbit(&g, 14.0, 2_000_000).unwrap();
    let config = SprConfig {
        ladder: vec![2.0, 2.5, 3.0],
        regression: None,
        step: EXCURSION_STEP,
    };
    let report = spr_verdict(&g, &orbit, &config).unwrap();
    assert!(report.delta_infinity <= 0.02, "{}", report.delta_infinity);
    assert_eq!(report.verdict, SprVerdict::Spr);
    assert!((report.gap - (report.delta_full.value - report.delta_infinity)).abs() < 1e-15);
}
