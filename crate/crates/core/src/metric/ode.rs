//! Adaptive Dormand–Prince 5(4) for the three-dimensional geodesic systems
//! used by the metric module. States are `(x, ln y, angle)`; the error of
//! the first component is measured relative to the height `y`, which makes
//! the tolerance a hyperbolic one.

use crate::error::{Error, Result};

pub(crate) type State = [f64; 3];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerance {
    pub tol: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            h_min: 1e-12,
            h_max: 0.5,
        }
    }
}

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step from `y` with derivative `k1 = f(y)`.
/// Returns the fifth-order state, its derivative (reusable as the next
/// `k1`) and the scaled error norm.
pub(crate) fn dp_step<F>(f: &mut F, y: &State, k1: &State, h: f64, tol: f64) -> Result<(State, State, f64)>
where
    F: FnMut(&State) -> Result<State>,
{
    let k2 = f(&axpy(y, &[(A21, k1)], h))?;
    let k3 = f(&axpy(y, &[(A31, k1), (A32, &k2)], h))?;
    let k4 = f(&axpy(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h))?;
    let k5 = f(&axpy(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h))?;
    let k6 = f(&axpy(
        y,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        h,
    ))?;
    let y5 = axpy(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = f(&y5)?;
    let height = y[1].exp();
    let mut err: f64 = 0.0;
    for i in 0..3 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = if i == 0 { height } else { 1.0 };
        err = err.max(e.abs() / (tol * scale));
    }
    if !y5.iter().all(|v| v.is_finite()) {
        err = f64::INFINITY;
    }
    Ok((y5, k7, err))
}

/// Accepted-step driver.
pub(crate) struct Stepper {
    pub t: f64,
    pub y: State,
    pub k: State,
    h: f64,
    pub opts: Tolerance,
}

impl Stepper {
    pub fn new<F>(f: &mut F, y0: State, opts: Tolerance) -> Result<Self>
    where
        F: FnMut(&State) -> Result<State>,
    {
        let k = f(&y0)?;
        Ok(Self {
            t: 0.0,
            y: y0,
            k,
            h: 0.05_f64.min(opts.h_max),
            opts,
        })
    }

    /// Takes one accepted step of length at most `h_cap`.
    pub fn advance<F>(&mut self, f: &mut F, h_cap: f64) -> Result<()>
    where
        F: FnMut(&State) -> Result<State>,
    {
        let proposal = self.h.min(self.opts.h_max);
        let mut h = proposal.min(h_cap);
        let mut rejected = false;
        loop {
            if h < self.opts.h_min && h < h_cap {
                return Err(Error::StepFailure(format!(
                    "step size {h:e} underflow at t = {}",
                    self.t
                )));
            }
            let (y, k, err) = dp_step(f, &self.y, &self.k, h, self.opts.tol)?;
            if err <= 1.0 {
                self.t += h;
                self.y = y;
                self.k = k;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // a step shortened only by the cap says nothing about the proposal
                self.h = if !rejected && h < proposal {
                    proposal
                } else {
                    h * grow
                };
                return Ok(());
            }
            rejected = true;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
        }
    }
}
