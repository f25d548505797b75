//! Discrete curve shortening in Fermi coordinates about a hyperbolic axis.
//!
//! In the chart where the axis is the imaginary half-line, a point is
//! `w = e^s (tanh u + i sech u)`: `s` runs along the axis and `u` is the
//! signed distance from it. The hyperbolic metric reads
//! `cosh²u ds² + du²`, so a curve that is a graph `u(s)` has length
//! `∫ e^{εφ} √(cosh²u + u'²) ds`. The curve is sampled at equally spaced
//! `s`; each segment contributes a term depending only on its two end
//! values, which makes the Hessian (cyclic) tridiagonal.

use crate::error::Result;
use crate::kernel::{HPoint, MobiusMap};

/// Finite-difference step on `u` for gradients and Hessians.
const FD: f64 = 1e-4;
const MAX_ITER: usize = 60;

#[derive(Debug, Clone)]
pub(crate) struct RelaxOutcome {
    /// Perturbed length of the relaxed curve.
    pub length: f64,
    /// Hyperbolic length of the same curve.
    pub g0_length: f64,
    pub u: Vec<f64>,
    pub stalled: bool,
    pub iterations: usize,
    /// Energy after every accepted iteration, starting with the initial one.
    pub energies: Vec<f64>,
}

pub(crate) fn fermi_point(chart: &MobiusMap, s: f64, u: f64) -> HPoint {
    let es = s.exp();
    chart.apply_unchecked(HPoint::new_unchecked(es * u.tanh(), es / u.cosh()))
}

struct Problem<'a, F> {
    log_factor: &'a mut F,
    chart: MobiusMap,
    s0: f64,
    h: f64,
    n: usize,
    periodic: bool,
}

impl<F: FnMut(HPoint) -> Result<f64>> Problem<'_, F> {
    fn factor(&mut self, s: f64, u: f64) -> Result<f64> {
        let p = fermi_point(&self.chart, s, u);
        Ok((self.log_factor)(p)?.exp())
    }

    fn node_s(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.h
    }

    /// Node values including the closing node.
    fn full(&self, u: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n + 1);
        if self.periodic {
            v.extend_from_slice(u);
            v.push(u[0]);
        } else {
            v.push(0.0);
            v.extend_from_slice(u);
            v.push(0.0);
        }
        v
    }

    fn element(&self, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (m.cosh().powi(2) * self.h * self.h + (b - a).powi(2)).sqrt()
    }

    fn energy(&mut self, u: &[f64]) -> Result<(f64, f64)> {
        let v = self.full(u);
        let mut nodes = Vec::with_capacity(self.n + 1);
        for (i, &ui) in v.iter().enumerate() {
            nodes.push(self.factor(self.node_s(i), ui)?);
        }
        let (mut e, mut e0) = (0.0, 0.0);
        for i in 0..self.n {
            let el = self.element(v[i], v[i + 1]);
            let mid = self.factor(self.node_s(i) + 0.5 * self.h, 0.5 * (v[i] + v[i + 1]))?;
            e += el * (nodes[i] + 4.0 * mid + nodes[i + 1]) / 6.0;
            e0 += el;
        }
        Ok((e, e0))
    }

    /// Gradient and (cyclic) tridiagonal Hessian of the energy with respect
    /// to the free node values.
    fn derivatives(&mut self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let v = self.full(u);
        let n = self.n;
        // node factors at u - FD, u, u + FD
        let mut nodes = Vec::with_capacity(n + 1);
        for (i, &ui) in v.iter().enumerate() {
            let s = self.node_s(i);
            nodes.push([
                self.factor(s, ui - FD)?,
                self.factor(s, ui)?,
                self.factor(s, ui + FD)?,
            ]);
        }
        // per-segment partials: (da, db, daa, dbb, dab)
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (v[i], v[i + 1]);
            let sm = self.node_s(i) + 0.5 * self.h;
            let um = 0.5 * (a + b);
            let mut mids = [0.0; 5];
            for (k, m) in mids.iter_mut().enumerate() {
                *m = self.factor(sm, um + (k as f64 - 2.0) * 0.5 * FD)?;
            }
            let term = |ja: i32, jb: i32| {
                let el = self.element(a + ja as f64 * FD, b + jb as f64 * FD);
                let na = nodes[i][(ja + 1) as usize];
                let nb = nodes[i + 1][(jb + 1) as usize];
                el * (na + 4.0 * mids[(ja + jb + 2) as usize] + nb) / 6.0
            };
            let t00 = term(0, 0);
            let da = (term(1, 0) - term(-1, 0)) / (2.0 * FD);
            let db = (term(0, 1) - term(0, -1)) / (2.0 * FD);
            let daa = (term(1, 0) - 2.0 * t00 + term(-1, 0)) / (FD * FD);
            let dbb = (term(0, 1) - 2.0 * t00 + term(0, -1)) / (FD * FD);
            let dab = (term(1, 1) - term(1, -1) - term(-1, 1) + term(-1, -1)) / (4.0 * FD * FD);
            parts.push([da, db, daa, dbb, dab]);
        }
        // assemble on full node indices, then drop fixed ends
        let mut g = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut off = vec![0.0; n]; // between node i and i+1
        for (i, p) in parts.iter().enumerate() {
            g[i] += p[0];
            g[i + 1] += p[1];
            diag[i] += p[2];
            diag[i + 1] += p[3];
            off[i] += p[4];
        }
        if self.periodic {
            g[0] += g[n];
            diag[0] += diag[n];
            g.truncate(n);
            diag.truncate(n);
            Ok((g, diag, off))
        } else {
            Ok((g[1..n].to_vec(), diag[1..n].to_vec(), off[1..n - 1].to_vec()))
        }
    }
}

/// Solves a symmetric tridiagonal system; `None` if not positive definite.
fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - off[i - 1] * c[i - 1];
        if !(piv > 0.0) {
            return None;
        }
        c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Cyclic tridiagonal solve by Sherman–Morrison; `off[n-1]` couples the
/// last and first unknowns.
fn cyclic(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let corner = off[n - 1];
    let gamma = -diag[0];
    let mut d2 = diag.to_vec();
    d2[0] -= gamma;
    d2[n - 1] -= corner * corner / gamma;
    let x = thomas(&d2, &off[..n - 1], rhs)?;
    let mut uvec = vec![0.0; n];
    uvec[0] = gamma;
    uvec[n - 1] = corner;
    let z = thomas(&d2, &off[..n - 1], &uvec)?;
    let fact = (x[0] + corner * x[n - 1] / gamma) / (1.0 + z[0] + corner * z[n - 1] / gamma);
    Some(x.iter().zip(&z).map(|(a, b)| a - fact * b).collect())
}

/// Relaxes the curve over `s ∈ [s0, s0 + span]` starting on the axis.
/// `log_factor` returns `εφ` at a world point. A periodic curve closes up
/// through the chart dilation by `e^{span}`; otherwise both ends stay on
/// the axis.
pub(crate) fn relax<F>(
    log_factor: &mut F,
    chart: MobiusMap,
    s0: f64,
    span: f64,
    n: usize,
    periodic: bool,
) -> Result<RelaxOutcome>
where
    F: FnMut(HPoint) -> Result<f64>,
{
    let n = n.max(4);
    let mut pb = Problem {
        log_factor,
        chart,
        s0,
        h: span / n as f64,
        n,
        periodic,
    };
    let free = if periodic { n } else { n - 1 };
    let mut u = vec![0.0; free];
    let (mut e, mut e0) = pb.energy(&u)?;
    let mut energies = vec![e];
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let (g, diag, off) = pb.derivatives(&u)?;
        let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if gmax < 1e-11 {
            break;
        }
        let dscale = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
        let mut lambda = 0.0;
        let mut accepted = None;
        for _ in 0..40 {
            let d: Vec<f64> = diag.iter().map(|x| x + lambda).collect();
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let step = if periodic {
                cyclic(&d, &off, &rhs)
            } else {
                thomas(&d, &off, &rhs)
            };
            if let Some(step) = step {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
                let (et, e0t) = pb.energy(&trial)?;
                if et <= e {
                    accepted = Some((trial, et, e0t));
                    break;
                }
            }
            lambda = if lambda == 0.0 {
                1e-8 * dscale
            } else {
                lambda * 10.0
            };
        }
        iterations += 1;
        match accepted {
            Some((trial, et, e0t)) => {
                let gain = e - et;
                u = trial;
                e = et;
                e0 = e0t;
                energies.push(e);
                if gain <= 4.0 * f64::EPSILON * e {
                    break;
                }
            }
            None => {
                stalled = gmax > 1e-7;
                break;
            }
        }
    }
    if iterations == MAX_ITER {
        stalled = true;
    }
    let mut full = pb.full(&u);
    full.pop();
    Ok(RelaxOutcome {
        length: e,
        g0_length: e0,
        u: full,
        stalled,
        iterations,
        energies,
    })
}
