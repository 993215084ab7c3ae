//! Dormand–Prince 5(4) with the standard continuous extension, adaptive
//! step control and event location on the dense output.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-12, max_step: f64::INFINITY, max_steps: 20_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    Any,
    /// `g` goes from negative to non-negative along the integration.
    Rising,
    /// `g` goes from positive to non-positive along the integration.
    Falling,
}

pub struct EventFn<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub crossing: Crossing,
}

impl<'a, const N: usize> EventFn<'a, N> {
    pub fn new(crossing: Crossing, g: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        EventFn { g: Box::new(g), crossing }
    }

    fn fires(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self.crossing {
            Crossing::Any => rising || falling,
            Crossing::Rising => rising,
            Crossing::Falling => falling,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    Reached,
    Event(usize),
    Blowup,
}

#[derive(Clone, Copy, Debug)]
pub struct Outcome<const N: usize> {
    pub x: f64,
    pub y: [f64; N],
    pub stop: Stop,
    /// Step size suggestion for a continuation.
    pub h_next: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

struct Trial<const N: usize> {
    y1: [f64; N],
    k1: [f64; N],
    k3: [f64; N],
    k4: [f64; N],
    k5: [f64; N],
    k6: [f64; N],
    k7: [f64; N],
    err: f64,
}

fn trial<const N: usize, F>(
    rhs: &mut F,
    x: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    tol: &Tolerances,
) -> Trial<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(x + C2 * h, &axpy(y, &[(h * A21, k1)]));
    let k3 = rhs(x + C3 * h, &axpy(y, &[(h * A31, k1), (h * A32, &k2)]));
    let k4 = rhs(x + C4 * h, &axpy(y, &[(h * A41, k1), (h * A42, &k2), (h * A43, &k3)]));
    let k5 = rhs(
        x + C5 * h,
        &axpy(y, &[(h * A51, k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
    );
    let k6 = rhs(
        x + h,
        &axpy(y, &[(h * A61, k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]),
    );
    let y1 = axpy(y, &[(h * A71, k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)]);
    let k7 = rhs(x + h, &y1);
    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
        acc += (e / sc).powi(2);
    }
    let err = (acc / N as f64).sqrt();
    Trial { y1, k1: *k1, k3, k4, k5, k6, k7, err }
}

/// Continuous extension over an accepted step.
struct Dense<const N: usize> {
    x: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn new(x: f64, h: f64, y0: &[f64; N], t: &Trial<N>) -> Self {
        let mut r = [[0.0; N]; 5];
        for i in 0..N {
            let dy = t.y1[i] - y0[i];
            let bspl = h * t.k1[i] - dy;
            r[0][i] = y0[i];
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * t.k7[i] - bspl;
            r[4][i] = h
                * (D1 * t.k1[i] + D3 * t.k3[i] + D4 * t.k4[i] + D5 * t.k5[i] + D6 * t.k6[i] + D7 * t.k7[i]);
        }
        Dense { x, h, r }
    }

    fn eval(&self, theta: f64) -> (f64, [f64; N]) {
        let t1 = 1.0 - theta;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.r[0][i]
                + theta * (self.r[1][i] + t1 * (self.r[2][i] + theta * (self.r[3][i] + t1 * self.r[4][i])));
        }
        (self.x + theta * self.h, y)
    }
}

fn initial_step<const N: usize, F>(rhs: &mut F, x: f64, y: &[f64; N], f0: &[f64; N], span: f64, tol: &Tolerances) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let sc: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let norm = |z: &[f64; N]| (z.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span.abs());
    let s = span.signum();
    let y1 = axpy(y, &[(s * h0, f0)]);
    let f1 = rhs(x + s * h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    let h = (100.0 * h0).min(h1).min(span.abs()).min(tol.max_step);
    // Norms overflow when a component starts at zero under pure relative
    // control; fall back to a small fraction of the span.
    if h.is_finite() && h > 0.0 {
        h
    } else {
        (1e-6 * span.abs()).min(tol.max_step)
    }
}

/// Integrates `y' = rhs(x, y)` from `x0` towards `x_end` (either direction),
/// stopping at the first event. `on_step` sees every accepted step end.
pub fn drive<const N: usize, F>(
    rhs: &mut F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    h_hint: Option<f64>,
    tol: &Tolerances,
    events: &[EventFn<'_, N>],
    on_step: &mut dyn FnMut(f64, &[f64; N]),
    steps_used: &mut usize,
) -> Result<Outcome<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let span = x_end - x0;
    if span == 0.0 {
        return Ok(Outcome { x: x0, y: y0, stop: Stop::Reached, h_next: h_hint.unwrap_or(1e-3) });
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = rhs(x, &y);
    let mut h = match h_hint {
        Some(h) if h > 0.0 => h.min(span.abs()).min(tol.max_step),
        _ => initial_step(rhs, x, &y, &k1, span, tol),
    };
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(x, &y)).collect();
    let mut last_rejected = false;
    loop {
        let remaining = (x_end - x) * dir;
        if remaining <= 0.0 {
            return Ok(Outcome { x: x_end, y, stop: Stop::Reached, h_next: h });
        }
        let underflow_floor = 1e-15 * x.abs().max(1.0);
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < underflow_floor && !last {
            return Err(Error::StepSizeUnderflow { t: x, h });
        }
        *steps_used += 1;
        if *steps_used > tol.max_steps {
            return Err(Error::Numerical(format!("step budget exhausted at x = {x}")));
        }
        let t = trial(rhs, x, &y, &k1, dir * h, tol);
        if !t.err.is_finite() || t.y1.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            last_rejected = true;
            if h < underflow_floor {
                return Ok(Outcome { x, y, stop: Stop::Blowup, h_next: h });
            }
            continue;
        }
        if t.err > 1.0 {
            let fac = (0.9 * t.err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            last_rejected = true;
            continue;
        }
        let x1 = if last { x_end } else { x + dir * h };
        let g_new: Vec<f64> = events.iter().map(|e| (e.g)(x1, &t.y1)).collect();
        let fired: Vec<usize> = (0..events.len()).filter(|&i| events[i].fires(g_prev[i], g_new[i])).collect();
        if !fired.is_empty() {
            let dense = Dense::new(x, dir * h, &y, &t);
            let mut best: Option<(f64, usize)> = None;
            for &i in &fired {
                let ev = &events[i];
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let g_lo = g_prev[i];
                while (hi - lo) * h > 1e-13 && hi - lo > f64::EPSILON {
                    let mid = 0.5 * (lo + hi);
                    let (xm, ym) = dense.eval(mid);
                    let gm = (ev.g)(xm, &ym);
                    let crossed = match ev.crossing {
                        Crossing::Rising => gm >= 0.0,
                        Crossing::Falling => gm <= 0.0,
                        Crossing::Any => (gm >= 0.0) != (g_lo >= 0.0) || gm == 0.0,
                    };
                    if crossed {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if best.map_or(true, |(b, _)| hi < b) {
                    best = Some((hi, i));
                }
            }
            let (theta, idx) = best.expect("at least one event fired");
            let h_ev = theta * h;
            let (x_ev, y_ev) = if theta >= 1.0 {
                (x1, t.y1)
            } else {
                let re = trial(rhs, x, &y, &k1, dir * h_ev, tol);
                (x + dir * h_ev, re.y1)
            };
            on_step(x_ev, &y_ev);
            return Ok(Outcome { x: x_ev, y: y_ev, stop: Stop::Event(idx), h_next: h });
        }
        x = x1;
        y = t.y1;
        k1 = t.k7;
        g_prev = g_new;
        on_step(x, &y);
        if y.iter().any(|v| v.abs() > 1e12) {
            return Ok(Outcome { x, y, stop: Stop::Blowup, h_next: h });
        }
        let mut fac = (0.9 * t.err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        if !last {
            h = (h * fac).min(tol.max_step);
        }
    }
}
