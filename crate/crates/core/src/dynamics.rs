//! The operator `φ`, the planar system `v' = φ⁻¹(w)`, `w' = −q(t) f(v)/δ`,
//! its energy, and the two integrators: in time, and in `v` through the
//! reduced momentum `y = 1/√(1−v'²) − 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::ode::{drive, Crossing, EventFn, Stop, Tolerances};
use crate::weight::WeightProfile;

/// Radius of the equilibrium ball used to flag "reached in infinite time".
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub t: f64,
    pub v: f64,
    pub w: f64,
}

impl PhaseState {
    pub fn new(t: f64, v: f64, w: f64) -> Self {
        PhaseState { t, v, w }
    }

    /// `v' = φ⁻¹(w)`.
    pub fn slope(&self) -> f64 {
        phi_inv(self.w)
    }
}

/// `φ(ξ) = ξ/√(1−ξ²)`.
pub fn phi(xi: f64) -> Result<f64> {
    if !(xi.abs() < 1.0) {
        return Err(Error::domain(format!("φ is defined on ]−1, 1[, got {xi}")));
    }
    Ok(xi / (1.0 - xi * xi).sqrt())
}

/// `φ⁻¹(w) = w/√(1+w²)`.
pub fn phi_inv(w: f64) -> f64 {
    // Saturate strictly below 1 where 1 − 1/(2w²) is no longer representable.
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    if w.abs() > 1e7 {
        return w.signum() * (1.0 - 0.5 / (w * w)).min(BELOW_ONE);
    }
    w / (1.0 + w * w).sqrt()
}

/// `√(1+w²) − 1`, the reduced momentum `y` of a state with momentum `w`.
pub fn kinetic(w: f64) -> f64 {
    let w2 = w * w;
    w2 / ((1.0 + w2).sqrt() + 1.0)
}

/// Inverse of [`kinetic`] on `w ≥ 0`: `√(y² + 2y)`.
pub fn momentum_from_kinetic(y: f64) -> f64 {
    let y = y.max(0.0);
    (y * (y + 2.0)).sqrt()
}

/// `E(v, w) = √(1+w²) − 1 + (c/δ) F(v)`.
pub fn energy(v: f64, w: f64, delta: f64, c: f64, n: &Nonlinearity) -> f64 {
    kinetic(w) + c / delta * n.eval_big_f(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventSpec {
    /// `v` crosses `level`; `crossing` refers to the direction of travel in
    /// integration order.
    VLevel { level: f64, crossing: CrossingSpec },
    WZero { crossing: CrossingSpec },
    /// `min(v, 1−v) < tol` and `|w| < tol`.
    Equilibrium { tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingSpec {
    Any,
    Upward,
    Downward,
}

impl From<CrossingSpec> for Crossing {
    fn from(c: CrossingSpec) -> Self {
        match c {
            CrossingSpec::Any => Crossing::Any,
            CrossingSpec::Upward => Crossing::Rising,
            CrossingSpec::Downward => Crossing::Falling,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Termination {
    TimeLimit,
    HitVLevel { level: f64 },
    HitWZero,
    ReachedEquilibrium { tolerance: f64 },
    BlowupGuard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotone {
    Increasing,
    Decreasing,
    NonMonotone,
}

/// A sampled trajectory in chronological order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub samples: Vec<PhaseState>,
    pub termination: Termination,
    pub monotone: Monotone,
    /// Direction of integration; the state where integration stopped is
    /// the last sample when forward, the first when backward.
    pub direction: Direction,
}

impl OrbitSegment {
    pub fn new(mut samples: Vec<PhaseState>, termination: Termination, direction: Direction) -> Self {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        samples.dedup_by(|a, b| a.t == b.t);
        let monotone = classify_monotone(&samples);
        OrbitSegment { samples, termination, monotone, direction }
    }

    pub fn start_state(&self) -> PhaseState {
        match self.direction {
            Direction::Forward => self.samples[0],
            Direction::Backward => *self.samples.last().unwrap(),
        }
    }

    pub fn end_state(&self) -> PhaseState {
        match self.direction {
            Direction::Forward => *self.samples.last().unwrap(),
            Direction::Backward => self.samples[0],
        }
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples.last().unwrap().t)
    }

    /// `v(t)` by cubic Hermite interpolation with slopes `φ⁻¹(w)`; `None`
    /// outside the sampled range.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        let (lo, hi) = self.t_range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = s.partition_point(|p| p.t <= t).clamp(1, s.len().max(2) - 1);
        if s.len() == 1 {
            return Some(s[0].v);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let h = b.t - a.t;
        let x = (t - a.t) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x),
            x * (1.0 - x) * (1.0 - x),
            x * x * (3.0 - 2.0 * x),
            x * x * (x - 1.0),
        );
        Some(h00 * a.v + h10 * h * a.slope() + h01 * b.v + h11 * h * b.slope())
    }

    /// CSV with header `t,v,w,vprime`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v,w,vprime\n");
        for p in &self.samples {
            let _ = writeln!(out, "{},{},{},{}", fmt17(p.t), fmt17(p.v), fmt17(p.w), fmt17(p.slope()));
        }
        out
    }

    pub fn max_v(&self) -> f64 {
        self.samples.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn classify_monotone(s: &[PhaseState]) -> Monotone {
    if s.len() < 2 {
        return Monotone::NonMonotone;
    }
    if s.windows(2).all(|p| p[1].v > p[0].v) {
        Monotone::Increasing
    } else if s.windows(2).all(|p| p[1].v < p[0].v) {
        Monotone::Decreasing
    } else {
        Monotone::NonMonotone
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    pub tolerances: Tolerances,
    /// Keep every accepted step; otherwise only the endpoints.
    pub record: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { tolerances: Tolerances::default(), record: true }
    }
}

impl IntegratorOptions {
    pub fn endpoints_only() -> Self {
        IntegratorOptions { record: false, ..Default::default() }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.tolerances.max_step = h;
        self
    }
}

/// Integrates the planar system from `start` towards `t_max`.
pub fn integrate_t(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    start: PhaseState,
    direction: Direction,
    events: &[EventSpec],
    t_max: f64,
) -> Result<OrbitSegment> {
    integrate_t_with(n, q, delta, start, direction, events, t_max, &IntegratorOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn integrate_t_with(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    start: PhaseState,
    direction: Direction,
    events: &[EventSpec],
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<OrbitSegment> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ must be positive, got {delta}")));
    }
    if !t_max.is_finite() {
        return Err(Error::domain("t_max must be finite"));
    }
    let ahead = match direction {
        Direction::Forward => t_max >= start.t,
        Direction::Backward => t_max <= start.t,
    };
    if !ahead {
        return Err(Error::domain(format!(
            "t_max = {t_max} lies behind the start time {} for {direction:?} integration",
            start.t
        )));
    }
    let mut bps = q.breakpoints(start.t, t_max);
    if direction == Direction::Backward {
        bps.reverse();
    }
    bps.push(t_max);

    let event_fns: Vec<EventFn<'_, 2>> = events
        .iter()
        .map(|e| match *e {
            EventSpec::VLevel { level, crossing } => EventFn::new(crossing.into(), move |_, y: &[f64; 2]| y[0] - level),
            EventSpec::WZero { crossing } => EventFn::new(crossing.into(), |_, y: &[f64; 2]| y[1]),
            EventSpec::Equilibrium { tol } => EventFn::new(Crossing::Falling, move |_, y: &[f64; 2]| {
                y[0].abs().min((1.0 - y[0]).abs()).max(y[1].abs()) - tol
            }),
        })
        .collect();

    let mut samples = vec![start];
    let mut x = start.t;
    let mut y = [start.v, start.w];
    let mut h_hint = None;
    let mut steps = 0usize;
    let mut termination = Termination::TimeLimit;
    for &seg_end in &bps {
        let mid = 0.5 * (x + seg_end);
        let local = q.local(mid);
        let mut rhs = |t: f64, s: &[f64; 2]| [phi_inv(s[1]), -local.eval(t) * n.eval_f(s[0]) / delta];
        let mut record = |t: f64, s: &[f64; 2]| {
            if opts.record {
                samples.push(PhaseState::new(t, s[0], s[1]));
            }
        };
        let out = drive(&mut rhs, x, y, seg_end, h_hint, &opts.tolerances, &event_fns, &mut record, &mut steps)?;
        x = out.x;
        y = out.y;
        h_hint = Some(out.h_next);
        match out.stop {
            Stop::Reached => {}
            Stop::Event(i) => {
                termination = match events[i] {
                    EventSpec::VLevel { level, .. } => Termination::HitVLevel { level },
                    EventSpec::WZero { .. } => Termination::HitWZero,
                    EventSpec::Equilibrium { tol } => Termination::ReachedEquilibrium { tolerance: tol },
                };
                break;
            }
            Stop::Blowup => {
                termination = Termination::BlowupGuard;
                break;
            }
        }
    }
    let end = PhaseState::new(x, y[0], y[1]);
    if samples.last().map_or(true, |s| s.t != end.t) {
        samples.push(end);
    }
    if let Some(bad) = samples.iter().find(|s| !(s.slope().abs() < 1.0)) {
        return Err(Error::Numerical(format!("slope left ]−1, 1[ at t = {}", bad.t)));
    }
    Ok(OrbitSegment::new(samples, termination, direction))
}

/// How the time variable is carried along a `v`-parametrized branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TimeChart {
    /// `t(v_from) = t_from`, advanced by `dt/dv = (y+1)/√(y²+2y)`.
    Anchored { t_from: f64 },
    /// `q` is frozen at its value at `t`; no time is tracked.
    Frozen { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub v: f64,
    pub y: f64,
    pub t: Option<f64>,
}

impl ReducedState {
    /// `|v'| = √(y²+2y)/(y+1)`.
    pub fn speed(&self) -> f64 {
        let y = self.y.max(0.0);
        momentum_from_kinetic(y) / (y + 1.0)
    }
}

/// Integrates `dy/dv = −q(t(v)) f(v)/δ` from `v_from` to `v_to` along a
/// monotone branch (traversed forward in time), substituting
/// `v = v_from + (v_to − v_from) sin²θ` so that turning endpoints
/// (`y = 0`) carry only integrable singularities.
pub fn integrate_v(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    chart: TimeChart,
    v_from: f64,
    v_to: f64,
    y_start: f64,
) -> Result<Vec<ReducedState>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ must be positive, got {delta}")));
    }
    if !(y_start >= 0.0) {
        return Err(Error::domain(format!("y_start must be ≥ 0, got {y_start}")));
    }
    let span = v_to - v_from;
    let (t_start, anchored) = match chart {
        TimeChart::Anchored { t_from } => (t_from, true),
        TimeChart::Frozen { t } => (t, false),
    };
    let first = ReducedState { v: v_from, y: y_start, t: anchored.then_some(t_start) };
    if span == 0.0 {
        return Ok(vec![first]);
    }
    let q0 = q.eval_q(t_start);
    let k_start = -q0 * n.eval_f(v_from) / delta;
    if y_start == 0.0 {
        if k_start * span < 0.0 {
            return Err(Error::MonotonicityLost { v: v_from });
        }
        if k_start == 0.0 && anchored {
            return Err(Error::domain(format!(
                "v = {v_from} is an equilibrium: the time chart cannot be anchored there"
            )));
        }
    }
    let theta_end = std::f64::consts::FRAC_PI_2;
    // A tiny absolute floor keeps y relatively accurate where it vanishes.
    let tol = Tolerances { rtol: 1e-12, atol: 1e-20, ..Tolerances::default() };
    let mut out = vec![first];
    let mut theta = 0.0;
    let mut state = [y_start, t_start];
    let mut h_hint = None;
    let mut steps = 0usize;
    let limit_start = if k_start != 0.0 { (2.0 * span.abs() / k_start.abs()).sqrt() } else { 0.0 };
    loop {
        let next_bp = if anchored {
            q.next_breakpoint(state[1])
        } else {
            f64::INFINITY
        };
        let probe = if next_bp.is_finite() { 0.5 * (state[1] + next_bp) } else { state[1] + 1.0 };
        let local = if anchored { q.local(probe) } else { q.local(t_start) };
        let q_end = local.eval(state[1]);
        let k_end = -q_end * n.eval_f(v_to) / delta;
        let limit_end = if k_end != 0.0 { (2.0 * span.abs() / k_end.abs()).sqrt() } else { f64::INFINITY };
        let mut rhs = |th: f64, s: &[f64; 2]| {
            let (sn, cs) = th.sin_cos();
            let v = v_from + span * sn * sn;
            let dv = span * 2.0 * sn * cs;
            let qv = if anchored { local.eval(s[1]) } else { q0 };
            let dy = -qv * n.eval_f(v) / delta * dv;
            let dt = if anchored {
                let y = s[0].max(0.0);
                let root = momentum_from_kinetic(y);
                if root > 0.0 && dv != 0.0 {
                    dv.abs() * (y + 1.0) / root
                } else if sn < 0.5 {
                    if y > 0.0 { 0.0 } else { limit_start }
                } else if y > 0.0 {
                    0.0
                } else {
                    limit_end
                }
            } else {
                0.0
            };
            [dy, dt]
        };
        // y falling to this floor marks a turning point: the endpoint when
        // it is reached next to v_to, a breakdown otherwise.
        let y_floor = 1e-9 * (1.0 + y_start);
        let mut events = vec![EventFn::new(Crossing::Falling, move |_, s: &[f64; 2]| s[0] - y_floor)];
        if next_bp.is_finite() {
            events.push(EventFn::new(Crossing::Rising, move |_, s: &[f64; 2]| s[1] - next_bp));
        }
        let mut record = |th: f64, s: &[f64; 2]| {
            let sn = th.sin();
            out.push(ReducedState {
                v: v_from + span * sn * sn,
                y: s[0].max(0.0),
                t: anchored.then_some(s[1]),
            });
        };
        let res = drive(&mut rhs, theta, state, theta_end, h_hint, &tol, &events, &mut record, &mut steps)?;
        match res.stop {
            Stop::Reached => break,
            Stop::Event(0) => {
                let sn = res.x.sin();
                let v = v_from + span * sn * sn;
                let qv = if anchored { local.eval(res.y[1]) } else { q0 };
                let k = -qv * n.eval_f(v) / delta;
                let y = res.y[0].max(0.0);
                let gap = if k != 0.0 { y / k.abs() } else { f64::INFINITY };
                if (v_to - v).abs() > 1e-6 * span.abs() + 10.0 * gap {
                    return Err(Error::MonotonicityLost { v: v + span.signum() * gap.min((v_to - v).abs()) });
                }
                // Close the last stretch with the local model y ≈ |k|·(v_to − v).
                let t_end = res.y[1] + if anchored { (2.0 * y).sqrt() / k.abs() } else { 0.0 };
                out.push(ReducedState { v: v_to, y: 0.0, t: anchored.then_some(t_end) });
                break;
            }
            Stop::Event(_) => {
                theta = res.x;
                state = res.y;
                state[1] = next_bp;
                h_hint = Some(res.h_next);
            }
            Stop::Blowup => return Err(Error::Numerical("reduced integration blew up".into())),
        }
    }
    if let Some(last) = out.last_mut() {
        last.v = v_to;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearityKind;
    use proptest::prelude::*;

    fn cubic() -> Nonlinearity {
        Nonlinearity::cubic(0.4).unwrap()
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0).unwrap(), 0.0);
        assert!((phi(0.6).unwrap() - 0.75).abs() < 1e-15);
        assert!((phi(-0.6).unwrap() + 0.75).abs() < 1e-15);
        assert!(phi(1.0).is_err());
        assert!((phi_inv(0.75) - 0.6).abs() < 1e-15);
        assert!(phi_inv(1e8) > 1.0 - 1e-15);
        assert!(phi_inv(1e300) < 1.0);
    }

    #[test]
    fn energy_reference_values() {
        let n = cubic();
        assert_eq!(energy(0.0, 0.0, 0.3, 2.0, &n), 0.0);
        assert!((energy(1.0, 0.0, 0.1, 1.0, &n) - n.f_one() / 0.1).abs() < 1e-15);
        assert!((energy(1.0, 0.0, 0.1, 1.0, &n) - 0.166667).abs() < 1e-6);
        assert!(energy(n.v0(), 0.0, 0.1, 1.0, &n).abs() < 1e-13);
    }

    #[test]
    fn equilibrium_stays_put() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let seg = integrate_t(&n, &q, 0.1, PhaseState::new(0.0, n.alpha, 0.0), Direction::Forward, &[], 20.0).unwrap();
        assert!(seg.samples.iter().all(|s| (s.v - n.alpha).abs() < 1e-12));
    }

    #[test]
    fn backward_turning_point_matches_energy_level() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let delta = 0.1;
        let gamma = 0.1;
        let z = n.zeta(gamma).unwrap();
        let start = PhaseState::new(0.0, z, 0.0);
        let ev = [EventSpec::WZero { crossing: CrossingSpec::Any }];
        let seg = integrate_t(&n, &q, delta, start, Direction::Backward, &ev, -100.0).unwrap();
        assert_eq!(seg.termination, Termination::HitWZero);
        assert!((seg.end_state().v - gamma).abs() < 1e-8);
        let e0 = energy(z, 0.0, delta, 1.0, &n);
        let drift = seg.samples.iter().map(|s| (energy(s.v, s.w, delta, 1.0, &n) - e0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-9, "drift {drift:e}");
        assert!(seg.samples.windows(2).all(|p| p[1].t > p[0].t));
    }

    #[test]
    fn splice_at_weight_jump() {
        let n = cubic();
        let delta = 0.2;
        let step = WeightProfile::stepwise(1.0, 2.0, 0.0);
        let start = PhaseState::new(-3.0, 0.05, 0.0);
        let whole = integrate_t(&n, &step, delta, start, Direction::Forward, &[], 2.0).unwrap();
        let left = integrate_t(&n, &WeightProfile::constant(1.0), delta, start, Direction::Forward, &[], 0.0).unwrap();
        let right = integrate_t(&n, &WeightProfile::constant(2.0), delta, left.end_state(), Direction::Forward, &[], 2.0)
            .unwrap();
        let (a, b) = (whole.end_state(), right.end_state());
        assert!((a.v - b.v).abs() < 1e-10 && (a.w - b.w).abs() < 1e-10);
    }

    #[test]
    fn reversibility() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let start = PhaseState::new(0.0, 0.3, 0.2);
        let fwd = integrate_t(&n, &q, 0.1, start, Direction::Forward, &[], 3.0).unwrap();
        let back = integrate_t(&n, &q, 0.1, fwd.end_state(), Direction::Backward, &[], 0.0).unwrap();
        let e = back.end_state();
        assert!((e.v - start.v).abs() < 1e-8 && (e.w - start.w).abs() < 1e-8);
    }

    #[test]
    fn reduced_closed_form_and_chart() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let ys = integrate_v(&n, &q, 0.1, TimeChart::Frozen { t: 0.0 }, 0.0, 0.4, 0.0).unwrap();
        let last = ys.last().unwrap();
        assert_eq!(last.v, 0.4);
        assert!((last.y + n.eval_big_f(0.4) / 0.1).abs() < 1e-10);
        assert!((last.y - 0.0853333).abs() < 1e-6);

        let gamma = 0.1;
        let z = n.zeta(gamma).unwrap();
        let ys = integrate_v(&n, &q, 0.1, TimeChart::Anchored { t_from: 0.0 }, gamma, z, 0.0).unwrap();
        let last = ys.last().unwrap();
        assert!(last.y.abs() < 1e-9);
        assert!(last.t.unwrap() > 0.0);
    }

    #[test]
    fn reduced_flat_nonlinearity_keeps_y() {
        let zero = Nonlinearity::unchecked(NonlinearityKind::Tabulated { nodes: vec![[0.0, 0.0], [1.0, 0.0]] }).unwrap();
        let q = WeightProfile::constant(1.0);
        let ys = integrate_v(&zero, &q, 0.1, TimeChart::Anchored { t_from: 0.0 }, 0.2, 0.7, 0.3).unwrap();
        assert!(ys.iter().all(|s| (s.y - 0.3).abs() < 1e-15));
    }

    #[test]
    fn reduced_detects_turning_inside() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let z = n.zeta(0.1).unwrap();
        match integrate_v(&n, &q, 0.1, TimeChart::Anchored { t_from: 0.0 }, 0.1, 0.9, 0.0) {
            Err(Error::MonotonicityLost { v }) => assert!((v - z).abs() < 1e-4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chart_consistency_with_time_integration() {
        let n = cubic();
        let q = WeightProfile::constant(1.0);
        let (delta, gamma) = (0.1, 0.1);
        let z = n.zeta(gamma).unwrap();
        let seg = integrate_t(
            &n,
            &q,
            delta,
            PhaseState::new(0.0, gamma, 0.0),
            Direction::Forward,
            &[EventSpec::WZero { crossing: CrossingSpec::Downward }],
            100.0,
        )
        .unwrap();
        for s in seg.samples.iter().skip(1).step_by(5) {
            let ys = integrate_v(&n, &q, delta, TimeChart::Anchored { t_from: 0.0 }, gamma, s.v, 0.0).unwrap();
            let r = ys.last().unwrap();
            assert!((r.y - kinetic(s.w)).abs() < 1e-7);
            if s.v < z - 1e-3 {
                assert!((r.t.unwrap() - s.t).abs() < 1e-7, "time mismatch at v = {}", s.v);
            }
        }
        // Arrival at a turning point is √-sensitive to the level, so the
        // full half-period is matched more loosely.
        let ys = integrate_v(&n, &q, delta, TimeChart::Anchored { t_from: 0.0 }, gamma, z, 0.0).unwrap();
        assert!((ys.last().unwrap().t.unwrap() - seg.end_state().t).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn phi_roundtrip(x in -0.999f64..0.999) {
            prop_assert!((phi_inv(phi(x).unwrap()) - x).abs() < 1e-14);
        }

        #[test]
        fn slope_stays_subluminal(w in -1e300f64..1e300) {
            prop_assert!(phi_inv(w).abs() < 1.0);
        }

        #[test]
        fn energy_drift_is_small(v in 0.05f64..0.95, w in -0.5f64..0.5, delta in 0.05f64..2.0) {
            let n = cubic();
            let q = WeightProfile::constant(1.0);
            let seg = integrate_t(&n, &q, delta, PhaseState::new(0.0, v, w), Direction::Forward,
                &[EventSpec::VLevel { level: 0.0, crossing: CrossingSpec::Any },
                  EventSpec::VLevel { level: 1.0, crossing: CrossingSpec::Any }], 2.0).unwrap();
            let e0 = energy(v, w, delta, 1.0, &n);
            let span = seg.t_range().1 - seg.t_range().0;
            for s in &seg.samples {
                prop_assert!((energy(s.v, s.w, delta, 1.0, &n) - e0).abs() < 1e-8 * span.max(1.0));
            }
        }
    }
}
