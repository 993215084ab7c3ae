//! Piecewise weights `q ∈ L∞(ℝ)`: constant pieces and uniformly sampled
//! pieces with linear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Constant {
        value: f64,
    },
    /// Samples at `origin + k·step`; when `periodic`, the samples cover one
    /// period (first and last value coincide) and repeat.
    Sampled {
        origin: f64,
        step: f64,
        values: Vec<f64>,
        #[serde(default)]
        periodic: bool,
    },
    /// `base + amplitude·|sin t|`, sampled periodically on `[0, π]`.
    AbsSine {
        base: f64,
        amplitude: f64,
        samples_per_period: usize,
    },
    /// `base + amplitude·sin t`, sampled periodically on `[0, 2π]`.
    Sine {
        base: f64,
        amplitude: f64,
        samples_per_period: usize,
    },
}

/// One piece on `[from, to[`; `None` stands for an infinite endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub from: Option<f64>,
    pub to: Option<f64>,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub t0: f64,
    pub pieces: Vec<Piece>,
}

#[derive(Clone, Debug)]
enum Realized {
    Constant(f64),
    Sampled(Samples),
}

#[derive(Clone, Debug)]
struct Samples {
    origin: f64,
    step: f64,
    values: Vec<f64>,
    periodic: bool,
    /// `cum[k] = ∫` of the interpolant from node 0 to node k, in grid units.
    cum: Vec<f64>,
}

impl Samples {
    fn new(origin: f64, step: f64, values: Vec<f64>, periodic: bool) -> Result<Self> {
        if values.len() < 2 || !(step > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sampled weight needs ≥ 2 finite values and step > 0".into()));
        }
        let mut cum = vec![0.0; values.len()];
        for k in 1..values.len() {
            cum[k] = cum[k - 1] + 0.5 * (values[k] + values[k - 1]);
        }
        Ok(Samples { origin, step, values, periodic, cum })
    }

    fn cells(&self) -> usize {
        self.values.len() - 1
    }

    /// Grid coordinate reduced to `[0, cells]` plus the number of whole
    /// periods removed.
    fn reduce(&self, t: f64) -> (f64, f64) {
        let x = (t - self.origin) / self.step;
        let n = self.cells() as f64;
        if self.periodic {
            let k = (x / n).floor();
            ((x - k * n).clamp(0.0, n), k)
        } else {
            (x, 0.0)
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let (x, _) = self.reduce(t);
        let n = self.cells();
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= n as f64 {
            return self.values[n];
        }
        let i = (x.floor() as usize).min(n - 1);
        let s = x - i as f64;
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    /// Antiderivative of the interpolant in grid units.
    fn primitive(&self, t: f64) -> f64 {
        let (x, k) = self.reduce(t);
        let n = self.cells();
        let period_mass = self.cum[n];
        let base = if x <= 0.0 {
            x * self.values[0]
        } else if x >= n as f64 {
            period_mass + (x - n as f64) * self.values[n]
        } else {
            let i = (x.floor() as usize).min(n - 1);
            let s = x - i as f64;
            let d = self.values[i + 1] - self.values[i];
            self.cum[i] + s * (self.values[i] + 0.5 * s * d)
        };
        k * period_mass + base
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.step * (self.primitive(b) - self.primitive(a))
    }

    fn nodes_in(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let lo = ((a - self.origin) / self.step).floor() as i64 + 1;
        let hi = ((b - self.origin) / self.step).ceil() as i64 - 1;
        let (lo, hi) = if self.periodic {
            (lo, hi)
        } else {
            (lo.max(0), hi.min(self.cells() as i64))
        };
        for k in lo..=hi {
            let t = self.origin + k as f64 * self.step;
            if t > a && t < b {
                out.push(t);
            }
        }
    }

    fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = self.eval(a).min(self.eval(b));
        let mut hi = self.eval(a).max(self.eval(b));
        let covers_period = self.periodic && b - a >= self.step * self.cells() as f64;
        if covers_period || !a.is_finite() || !b.is_finite() {
            for v in &self.values {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        } else {
            let mut nodes = Vec::new();
            self.nodes_in(a, b, &mut nodes);
            for t in nodes {
                let v = self.eval(t);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

#[derive(Clone, Debug)]
struct RPiece {
    from: f64,
    to: f64,
    payload: Realized,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalWeight<'a> {
    piece: &'a RPiece,
}

impl LocalWeight<'_> {
    pub fn eval(&self, t: f64) -> f64 {
        match &self.piece.payload {
            Realized::Constant(c) => *c,
            Realized::Sampled(s) => s.eval(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Varying on `]−∞, t₀]`, constant on `[t₀, +∞[`.
    LeftVarying,
    /// Constant on `]−∞, t₀]`, varying on `[t₀, +∞[`.
    RightVarying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub eta: f64,
    pub sup_norm: f64,
    pub c: f64,
    pub t0: f64,
}

#[derive(Clone, Debug)]
pub struct WeightProfile {
    spec: WeightSpec,
    pieces: Vec<RPiece>,
    pub t0: f64,
}

impl WeightProfile {
    pub fn from_spec(spec: WeightSpec) -> Result<Self> {
        if spec.pieces.is_empty() {
            return Err(Error::Config("weight needs at least one piece".into()));
        }
        if !spec.t0.is_finite() {
            return Err(Error::Config("t0 must be finite".into()));
        }
        let mut pieces = Vec::with_capacity(spec.pieces.len());
        for (i, p) in spec.pieces.iter().enumerate() {
            let from = p.from.unwrap_or(f64::NEG_INFINITY);
            let to = p.to.unwrap_or(f64::INFINITY);
            if (i == 0) != p.from.is_none() || (i + 1 == spec.pieces.len()) != p.to.is_none() {
                return Err(Error::Config("pieces must start at −∞ and end at +∞".into()));
            }
            if !(from < to) {
                return Err(Error::Config(format!("piece {i} has empty interval")));
            }
            if i > 0 && spec.pieces[i - 1].to != p.from {
                return Err(Error::Config(format!("pieces {} and {i} leave a gap or overlap", i - 1)));
            }
            let payload = match &p.payload {
                Payload::Constant { value } => {
                    if !value.is_finite() {
                        return Err(Error::Config("constant weight must be finite".into()));
                    }
                    Realized::Constant(*value)
                }
                Payload::Sampled { origin, step, values, periodic } => {
                    Realized::Sampled(Samples::new(*origin, *step, values.clone(), *periodic)?)
                }
                Payload::AbsSine { base, amplitude, samples_per_period } => {
                    let n = (*samples_per_period).max(2);
                    let step = std::f64::consts::PI / n as f64;
                    let values = (0..=n).map(|k| base + amplitude * (k as f64 * step).sin().abs()).collect();
                    Realized::Sampled(Samples::new(0.0, step, values, true)?)
                }
                Payload::Sine { base, amplitude, samples_per_period } => {
                    let n = (*samples_per_period).max(2);
                    let step = 2.0 * std::f64::consts::PI / n as f64;
                    let values: Vec<f64> = (0..=n)
                        .map(|k| if k == n { *base } else { base + amplitude * (k as f64 * step).sin() })
                        .collect();
                    Realized::Sampled(Samples::new(0.0, step, values, true)?)
                }
            };
            pieces.push(RPiece { from, to, payload });
        }
        Ok(WeightProfile { t0: spec.t0, spec, pieces })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn constant(c: f64) -> Self {
        Self::from_spec(WeightSpec {
            t0: 0.0,
            pieces: vec![Piece { from: None, to: None, payload: Payload::Constant { value: c } }],
        })
        .expect("constant weight is well formed")
    }

    /// `c₁` on `]−∞, t₀[`, `c₂` on `[t₀, +∞[`.
    pub fn stepwise(c1: f64, c2: f64, t0: f64) -> Self {
        Self::from_spec(WeightSpec {
            t0,
            pieces: vec![
                Piece { from: None, to: Some(t0), payload: Payload::Constant { value: c1 } },
                Piece { from: Some(t0), to: None, payload: Payload::Constant { value: c2 } },
            ],
        })
        .expect("stepwise weight is well formed")
    }

    /// `payload` on `]−∞, t₀[` and the constant `c` on `[t₀, +∞[`.
    pub fn left_varying(payload: Payload, c: f64, t0: f64) -> Result<Self> {
        Self::from_spec(WeightSpec {
            t0,
            pieces: vec![
                Piece { from: None, to: Some(t0), payload },
                Piece { from: Some(t0), to: None, payload: Payload::Constant { value: c } },
            ],
        })
    }

    /// The constant `c` on `]−∞, t₀[` and `payload` on `[t₀, +∞[`.
    pub fn right_varying(c: f64, payload: Payload, t0: f64) -> Result<Self> {
        Self::from_spec(WeightSpec {
            t0,
            pieces: vec![
                Piece { from: None, to: Some(t0), payload: Payload::Constant { value: c } },
                Piece { from: Some(t0), to: None, payload },
            ],
        })
    }

    fn piece_at(&self, t: f64) -> &RPiece {
        let i = self.pieces.partition_point(|p| p.to <= t);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    /// `q(t)`, right-continuous at piece boundaries.
    pub fn eval_q(&self, t: f64) -> f64 {
        match &self.piece_at(t).payload {
            Realized::Constant(c) => *c,
            Realized::Sampled(s) => s.eval(t),
        }
    }

    /// `∫ₐᵇ q`: exact on constant pieces, trapezoidal on sampled ones.
    pub fn l1_mass(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.l1_mass(b, a);
        }
        let mut acc = 0.0;
        for p in &self.pieces {
            let lo = a.max(p.from);
            let hi = b.min(p.to);
            if hi <= lo {
                continue;
            }
            acc += match &p.payload {
                Realized::Constant(c) => c * (hi - lo),
                Realized::Sampled(s) => s.integral(lo, hi),
            };
        }
        acc
    }

    /// Points in `]a, b[` where `q` is discontinuous or has a kink: piece
    /// boundaries and sample nodes, sorted ascending.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let mut out = Vec::new();
        for p in &self.pieces {
            if p.from > a && p.from < b {
                out.push(p.from);
            }
            let lo = a.max(p.from);
            let hi = b.min(p.to);
            if hi > lo {
                if let Realized::Sampled(s) = &p.payload {
                    s.nodes_in(lo, hi, &mut out);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// First breakpoint strictly after `t`, or `+∞`.
    pub fn next_breakpoint(&self, t: f64) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.pieces {
            if p.from > t {
                best = best.min(p.from);
            }
            if p.from <= t && t < p.to {
                if let Realized::Sampled(s) = &p.payload {
                    let k = ((t - s.origin) / s.step).floor() + 1.0;
                    let mut node = s.origin + k * s.step;
                    if node <= t {
                        node += s.step;
                    }
                    let inside = s.periodic || (node - s.origin) / s.step <= s.cells() as f64 + 0.5;
                    if inside && node < p.to {
                        best = best.min(node);
                    }
                }
            }
        }
        best
    }

    /// Evaluator bound to the piece containing `t`, for use on an interval
    /// free of piece boundaries.
    pub fn local(&self, t: f64) -> LocalWeight<'_> {
        LocalWeight { piece: self.piece_at(t) }
    }

    /// `(ess inf, ess sup)` of `q` on `[a, b]`; endpoints may be infinite.
    pub fn bounds_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.pieces {
            let l = a.max(p.from);
            let h = b.min(p.to);
            if h < l || (h == l && !(l == a && a == b)) {
                continue;
            }
            let (pl, ph) = match &p.payload {
                Realized::Constant(c) => (*c, *c),
                Realized::Sampled(s) => s.range_on(l, h),
            };
            lo = lo.min(pl);
            hi = hi.max(ph);
        }
        (lo, hi)
    }

    /// Value of `q` on `[t₀, +∞[` when constant there.
    pub fn tail_constant_right(&self) -> Option<f64> {
        let (lo, hi) = self.bounds_on(self.t0, f64::INFINITY);
        self.constant_on(self.t0, f64::INFINITY).then_some(lo).filter(|_| lo == hi)
    }

    /// Value of `q` on `]−∞, t₀[` when constant there.
    pub fn tail_constant_left(&self) -> Option<f64> {
        let (lo, hi) = self.bounds_on(f64::NEG_INFINITY, self.t0);
        self.constant_on(f64::NEG_INFINITY, self.t0).then_some(lo).filter(|_| lo == hi)
    }

    fn constant_on(&self, a: f64, b: f64) -> bool {
        self.pieces.iter().filter(|p| p.to > a && p.from < b).all(|p| match &p.payload {
            Realized::Constant(_) => true,
            Realized::Sampled(s) => s.values.iter().all(|v| *v == s.values[0]),
        })
    }

    /// `(η, ‖q‖∞)` on the varying half-line of `side`.
    pub fn side_bounds(&self, side: Side) -> (f64, f64) {
        match side {
            Side::LeftVarying => self.bounds_on(f64::NEG_INFINITY, self.t0),
            Side::RightVarying => self.bounds_on(self.t0, f64::INFINITY),
        }
    }

    /// Checks positivity on the varying side, constancy on the other side
    /// and (left-varying) divergence of the `L¹` mass towards `−∞`.
    pub fn check_hypotheses(&self, side: Side) -> Result<HypothesisReport> {
        let (eta, sup_norm) = self.side_bounds(side);
        let (tail, tail_name) = match side {
            Side::LeftVarying => (self.tail_constant_right(), "right"),
            Side::RightVarying => (self.tail_constant_left(), "left"),
        };
        if !(eta > 0.0) {
            return Err(Error::hypothesis(
                "positivity",
                format!("q has essential infimum {eta} ≤ 0 on the varying side"),
            ));
        }
        let c = tail.ok_or_else(|| {
            Error::hypothesis("constant-tail", format!("q is not constant on the {tail_name} half-line"))
        })?;
        if !(c > 0.0) {
            return Err(Error::hypothesis("positivity", format!("tail constant {c} ≤ 0")));
        }
        let mut t = 1.0;
        for _ in 0..4 {
            let mass = match side {
                Side::LeftVarying => self.l1_mass(self.t0 - t, self.t0),
                Side::RightVarying => self.l1_mass(self.t0, self.t0 + t),
            };
            if mass < eta * t * (1.0 - 1e-12) {
                return Err(Error::hypothesis(
                    "l1-growth",
                    format!("∫q over a window of length {t} is {mass} < η·T"),
                ));
            }
            t *= 10.0;
        }
        Ok(HypothesisReport { eta, sup_norm, c, t0: self.t0 })
    }

    /// Scales every value of `q` by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let pieces = self
            .spec
            .pieces
            .iter()
            .map(|p| Piece {
                from: p.from,
                to: p.to,
                payload: match &p.payload {
                    Payload::Constant { value } => Payload::Constant { value: k * value },
                    Payload::Sampled { origin, step, values, periodic } => Payload::Sampled {
                        origin: *origin,
                        step: *step,
                        values: values.iter().map(|v| k * v).collect(),
                        periodic: *periodic,
                    },
                    Payload::AbsSine { base, amplitude, samples_per_period } => Payload::AbsSine {
                        base: k * base,
                        amplitude: k * amplitude,
                        samples_per_period: *samples_per_period,
                    },
                    Payload::Sine { base, amplitude, samples_per_period } => Payload::Sine {
                        base: k * base,
                        amplitude: k * amplitude,
                        samples_per_period: *samples_per_period,
                    },
                },
            })
            .collect();
        Self::from_spec(WeightSpec { t0: self.t0, pieces }).expect("scaling keeps the tiling")
    }

    /// `s ↦ q(2c − s)`, the weight seen after the time reflection about
    /// `c`; the marked time `t₀` moves to `2c − t₀`. Sampled pieces are
    /// reflected node by node.
    pub fn reflected_about(&self, center: f64) -> Self {
        let t0 = center;
        let pieces = self
            .pieces
            .iter()
            .rev()
            .map(|p| {
                let payload = match &p.payload {
                    Realized::Constant(c) => Payload::Constant { value: *c },
                    Realized::Sampled(s) => Payload::Sampled {
                        origin: 2.0 * t0 - (s.origin + s.cells() as f64 * s.step),
                        step: s.step,
                        values: s.values.iter().rev().copied().collect(),
                        periodic: s.periodic,
                    },
                };
                let mirror = |x: f64| if x.is_finite() { Some(2.0 * t0 - x) } else { None };
                Piece { from: mirror(p.to), to: mirror(p.from), payload }
            })
            .collect();
        Self::from_spec(WeightSpec { t0: 2.0 * center - self.t0, pieces }).expect("reflection keeps the tiling")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn reflection_mirrors_values_and_mass() {
        let q = oscillating_left();
        let r = q.reflected_about(0.0);
        assert_eq!(r.tail_constant_left(), Some(0.3));
        for &t in &[-7.3, -1.0, -0.01, 0.5, 3.0] {
            assert!((r.eval_q(-t) - q.eval_q(t)).abs() < 1e-12, "t = {t}");
        }
        assert!((r.l1_mass(0.0, 9.0) - q.l1_mass(-9.0, 0.0)).abs() < 1e-10);
        let shifted = WeightProfile::stepwise(1.0, 2.0, 1.5).reflected_about(1.5);
        assert_eq!(shifted.eval_q(2.0), 1.0);
        assert_eq!(shifted.eval_q(0.0), 2.0);
    }

    fn oscillating_left() -> WeightProfile {
        WeightProfile::left_varying(
            Payload::Sine { base: 1.0, amplitude: 0.5, samples_per_period: 256 },
            0.3,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn eval_is_right_continuous() {
        let w = WeightProfile::stepwise(1.0, 2.0, 0.0);
        assert_eq!(w.eval_q(-1.0), 1.0);
        assert_eq!(w.eval_q(0.0), 2.0);
        assert_eq!(WeightProfile::constant(1.0).eval_q(1e3), 1.0);
    }

    #[test]
    fn masses() {
        assert_eq!(WeightProfile::constant(1.0).l1_mass(0.0, 5.0), 5.0);
        assert_eq!(WeightProfile::stepwise(1.0, 2.0, 0.0).l1_mass(-1.0, 1.0), 3.0);
        let n = 6284;
        let step = 1e-3;
        let values: Vec<f64> = (0..n).map(|k| 2.0 + (k as f64 * step).sin()).collect();
        let w = WeightProfile::left_varying(
            Payload::Sampled { origin: 0.0, step, values, periodic: false },
            1.0,
            10.0,
        )
        .unwrap();
        let two_pi = 2.0 * PI;
        // ∫₀^{2π} (2 + sin t) dt = 4π
        assert!((w.l1_mass(0.0, two_pi) - 4.0 * PI).abs() < 1e-5);
    }

    #[test]
    fn hypotheses_for_stepwise_and_oscillating() {
        let r = WeightProfile::stepwise(1.0, 0.3, 0.0).check_hypotheses(Side::LeftVarying).unwrap();
        assert_eq!(r, HypothesisReport { eta: 1.0, sup_norm: 1.0, c: 0.3, t0: 0.0 });
        let r = oscillating_left().check_hypotheses(Side::LeftVarying).unwrap();
        assert!((r.eta - 0.5).abs() < 1e-12 && (r.sup_norm - 1.5).abs() < 1e-12);
        assert_eq!((r.c, r.t0), (0.3, 0.0));
    }

    #[test]
    fn zero_piece_violates_positivity() {
        let w = WeightProfile::stepwise(0.0, 1.0, 0.0);
        match w.check_hypotheses(Side::LeftVarying) {
            Err(Error::HypothesisViolation { clause, .. }) => assert_eq!(clause, "positivity"),
            other => panic!("unexpected {other:?}"),
        }
        let w = oscillating_left();
        match w.check_hypotheses(Side::RightVarying) {
            Err(Error::HypothesisViolation { clause, .. }) => assert_eq!(clause, "constant-tail"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiling_is_enforced() {
        let bad = WeightSpec {
            t0: 0.0,
            pieces: vec![
                Piece { from: None, to: Some(0.0), payload: Payload::Constant { value: 1.0 } },
                Piece { from: Some(1.0), to: None, payload: Payload::Constant { value: 1.0 } },
            ],
        };
        assert!(WeightProfile::from_spec(bad).is_err());
    }

    #[test]
    fn breakpoints_include_boundaries_and_nodes() {
        let w = WeightProfile::stepwise(1.0, 2.0, 0.5);
        assert_eq!(w.breakpoints(-1.0, 1.0), vec![0.5]);
        assert!(w.breakpoints(0.5, 1.0).is_empty());
        let bp = oscillating_left().breakpoints(-1.0, 1.0);
        assert_eq!(*bp.last().unwrap(), 0.0);
        assert!(bp.windows(2).all(|p| p[1] > p[0]));
    }

    proptest! {
        #[test]
        fn mass_is_additive(a in -50.0f64..50.0, d1 in 0.0f64..30.0, d2 in 0.0f64..30.0) {
            let w = oscillating_left();
            let (b, c) = (a + d1, a + d1 + d2);
            prop_assert!((w.l1_mass(a, c) - w.l1_mass(a, b) - w.l1_mass(b, c)).abs() < 1e-12);
        }

        #[test]
        fn values_within_side_bounds(t in -1e4f64..0.0) {
            let w = oscillating_left();
            let (eta, sup) = w.side_bounds(Side::LeftVarying);
            let q = w.eval_q(t);
            prop_assert!(q >= eta - 1e-15 && q <= sup + 1e-15);
        }
    }
}
