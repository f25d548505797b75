//! Excursions out of a compact window, entropy out of the window, entropy
//! at infinity and SPR verdicts.
//!
//! The window is the projection of the ball `W̃ = B(o, R_W)`. A point lies
//! in `Γ·W̃` exactly when its reduction to the Dirichlet domain is within
//! `R_W` of `o`. An element is an excursion when the geodesic segment
//! `[o, γo]`, once out of `W̃`, meets no translate of `W̃` before entering
//! `γW̃`.

use crate::error::{Error, Result};
use crate::group::{
    counting_exponent, estimate_exponent, CountNormalization, GroupPresentation, Orbit, PattersonAtoms,
    Reducer,
};
use crate::kernel::{HPoint, MobiusMap};
use crate::stats::linear_fit;
use crate::word::Word;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default sampling step along segments.
pub const EXCURSION_STEP: f64 = 0.25;
/// Minimum number of excursions for an exponent estimate.
pub const MIN_EXCURSIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactWindow {
    pub r_w: f64,
}

impl CompactWindow {
    pub fn new(group: &GroupPresentation, r_w: f64) -> Result<Self> {
        let half = 0.5 * group.max_displacement();
        if !(r_w > half) {
            return Err(Error::Invalid(format!(
                "window radius {r_w} must exceed the maximal generator half-displacement {half}"
            )));
        }
        Ok(Self { r_w })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub word: Word,
    pub dist: f64,
    pub is_out: bool,
    pub first_exit: f64,
    pub last_entry: f64,
    /// First sampled parameter after `first_exit` inside `Γ·W̃`, or
    /// `last_entry` when there is none.
    pub first_return: f64,
}

impl ExcursionRecord {
    /// Arc length spent outside `Γ·W̃` after leaving `W̃`.
    pub fn excursion_length(&self) -> f64 {
        self.first_return - self.first_exit
    }
}

/// Samples `[o, γo]` on the grid `s_k = d·k/n`, `n = ⌈d/step⌉`, and tests
/// the interior samples for membership in `Γ·W̃`.
pub fn is_outside_excursion(
    group: &GroupPresentation,
    word: &Word,
    element: &MobiusMap,
    window: CompactWindow,
    step: f64,
) -> Result<ExcursionRecord> {
    if !(step > 0.0 && step <= 0.25) {
        return Err(Error::Invalid(format!(
            "sampling step must lie in (0, 0.25], got {step}"
        )));
    }
    let o = group.basepoint();
    let target = element.apply(o)?;
    let dist = crate::kernel::hyp_distance(o, target);
    let first_exit = window.r_w.min(dist);
    let last_entry = (dist - window.r_w).max(first_exit);
    let mut first_return = last_entry;
    if last_entry > first_exit {
        let back = MobiusMap::to_vertical_segment(o, target).inverse();
        let n = (dist / step).ceil() as usize;
        let mut reducer = Reducer::new(group);
        for k in 1..n {
            let s = dist * k as f64 / n as f64;
            if s <= first_exit {
                continue;
            }
            if s >= last_entry {
                break;
            }
            let p = back.apply(HPoint::new(0.0, s.exp())?)?;
            if reducer.distance_to_orbit(p)? <= window.r_w {
                first_return = s;
                break;
            }
        }
    }
    Ok(ExcursionRecord {
        word: word.clone(),
        dist,
        is_out: first_return >= last_entry,
        first_exit,
        last_entry,
        first_return,
    })
}

/// Excursion records for every orbit point, in orbit order.
pub fn excursion_records(
    group: &GroupPresentation,
    orbit: &Orbit,
    window: CompactWindow,
    step: f64,
) -> Result<Vec<ExcursionRecord>> {
    orbit
        .points
        .par_iter()
        .map(|p| is_outside_excursion(group, &p.word, &p.element, window, step))
        .collect()
}

/// Growth exponent of `Γ_W̃` counted over an enumerated orbit.
pub fn delta_out(
    group: &GroupPresentation,
    orbit: &Orbit,
    window: CompactWindow,
    regression: (f64, f64),
    step: f64,
) -> Result<(ExponentEstimateOut, Vec<ExcursionRecord>)> {
    let records = excursion_records(group, orbit, window, step)?;
    let dists: Vec<f64> = records.iter().filter(|r| r.is_out).map(|r| r.dist).collect();
    let estimate = counting_exponent(&dists, regression, CountNormalization::Plain, MIN_EXCURSIONS)?;
    Ok((
        ExponentEstimateOut {
            r_w: window.r_w,
            estimate,
            out_count: dists.len(),
        },
        records,
    ))
}

/// One rung of the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimateOut {
    pub r_w: f64,
    pub estimate: crate::group::ExponentEstimate,
    /// `#Γ_W̃` up to the enumeration radius.
    pub out_count: usize,
}

/// Entropy at infinity: the value at the last rung, with the full ladder.
pub fn delta_infinity(
    group: &GroupPresentation,
    orbit: &Orbit,
    ladder: &[CompactWindow],
    regression: (f64, f64),
    step: f64,
) -> Result<(f64, Vec<ExponentEstimateOut>)> {
    if ladder.len() < 3 {
        return Err(Error::Invalid(format!(
            "the ladder needs at least 3 rungs, got {}",
            ladder.len()
        )));
    }
    if ladder.windows(2).any(|w| w[1].r_w <= w[0].r_w) {
        return Err(Error::Invalid("ladder radii must be strictly increasing".into()));
    }
    let rungs = ladder
        .iter()
        .map(|w| delta_out(group, orbit, *w, regression, step).map(|(e, _)| e))
        .collect::<Result<Vec<_>>>()?;
    let last = rungs.last().map(|r| r.estimate.value).unwrap_or(0.0);
    Ok((last, rungs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SprVerdict {
    Spr,
    NotSpr,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprReport {
    pub delta_full: crate::group::ExponentEstimate,
    pub delta_out_ladder: Vec<ExponentEstimateOut>,
    pub delta_infinity: f64,
    pub gap: f64,
    /// Noise scale the gap is compared against.
    pub noise: f64,
    pub verdict: SprVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprConfig {
    pub ladder: Vec<f64>,
    /// Regression window; defaults to the upper half of the orbit radius.
    pub regression: Option<(f64, f64)>,
    pub step: f64,
}

/// Uncertainty of an estimate: fit RMS combined with the disagreement
/// between the counting slope and the partial-sum bisection.
pub fn estimate_noise(e: &crate::group::ExponentEstimate) -> f64 {
    let method = e.bisection.map(|b| b - e.value).unwrap_or(0.0);
    (e.residual * e.residual + method * method).sqrt()
}

/// Compares the critical exponent with the entropy at infinity. A rung
/// whose `Γ_W̃` is too small to regress is recorded as exponent 0, since a
/// finite set does not grow.
pub fn spr_verdict(group: &GroupPresentation, orbit: &Orbit, config: &SprConfig) -> Result<SprReport> {
    let regression = config.regression.unwrap_or((orbit.r_max / 2.0, orbit.r_max));
    let delta_full = estimate_exponent(orbit, regression)?;
    let ladder = config
        .ladder
        .iter()
        .map(|r| CompactWindow::new(group, *r))
        .collect::<Result<Vec<_>>>()?;
    if ladder.len() < 3 || ladder.windows(2).any(|w| w[1].r_w <= w[0].r_w) {
        return Err(Error::Invalid(
            "the ladder needs at least 3 strictly increasing rungs".into(),
        ));
    }
    let mut rungs = Vec::with_capacity(ladder.len());
    for w in &ladder {
        match delta_out(group, orbit, *w, regression, config.step) {
            Ok((e, _)) => rungs.push(e),
            Err(Error::InsufficientData(_)) => {
                let records = excursion_records(group, orbit, *w, config.step)?;
                let out_count = records.iter().filter(|r| r.is_out).count();
                rungs.push(ExponentEstimateOut {
                    r_w: w.r_w,
                    estimate: crate::group::ExponentEstimate {
                        value: 0.0,
                        window: regression,
                        residual: 0.0,
                        count: out_count,
                        slope_se: 0.0,
                        bisection: None,
                        running_max: 0.0,
                    },
                    out_count,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let last = rungs
        .last()
        .copied()
        .ok_or_else(|| Error::Invalid("empty ladder".into()))?;
    let delta_infinity = last.estimate.value;
    let gap = delta_full.value - delta_infinity;
    let noise = (estimate_noise(&delta_full).powi(2) + estimate_noise(&last.estimate).powi(2)).sqrt();
    let verdict = if gap > 2.0 * noise {
        SprVerdict::Spr
    } else if gap < -2.0 * noise {
        SprVerdict::NotSpr
    } else {
        SprVerdict::Undecided
    };
    Ok(SprReport {
        delta_full,
        delta_out_ladder: rungs,
        delta_infinity,
        gap,
        noise,
        verdict,
    })
}

/// Relative tail mass of atoms whose segment stays out of `Γ·W̃` for arc
/// length at least `t` after leaving `W̃`, for each `t` in `ts`.
pub fn excursion_mass_curve(
    group: &GroupPresentation,
    orbit: &Orbit,
    atoms: &PattersonAtoms,
    window: CompactWindow,
    ts: &[f64],
    r_far: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let tail: Vec<_> = atoms.atoms.iter().filter(|a| a.dist >= r_far).collect();
    if tail.is_empty() {
        return Err(Error::EmptyTail(r_far));
    }
    let lengths = tail
        .par_iter()
        .map(|a| {
            let p = &orbit.points[a.index];
            is_outside_excursion(group, &p.word, &p.element, window, step)
                .map(|r| (a.weight, r.excursion_length()))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = lengths.iter().map(|(w, _)| w).sum();
    Ok(ts
        .iter()
        .map(|&t| {
            lengths
                .iter()
                .filter(|(_, l)| *l >= t)
                .map(|(w, _)| w)
                .sum::<f64>()
                / total
        })
        .collect())
}

pub fn excursion_mass(
    group: &GroupPresentation,
    orbit: &Orbit,
    atoms: &PattersonAtoms,
    window: CompactWindow,
    t: f64,
    r_far: f64,
    step: f64,
) -> Result<f64> {
    Ok(excursion_mass_curve(group, orbit, atoms, window, &[t], r_far, step)?[0])
}

/// Slope of `ln mass` against `t` over the points with positive mass.
pub fn mass_decay_slope(ts: &[f64], masses: &[f64]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(t, m)| (*t, m.ln()))
        .unzip();
    linear_fit(&xs, &ys)
        .map(|f| f.slope)
        .ok_or_else(|| Error::InsufficientData("fewer than two positive excursion masses".into()))
}
