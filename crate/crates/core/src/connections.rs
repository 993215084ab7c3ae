//! Heteroclinic, homoclinic and definitively periodic solutions for weights
//! that are constant on one side of `t₀`: the half-line branch `ρ ↦ κ(ρ)` is
//! intersected with a level line of the autonomous energy on the constant
//! side, and the two pieces are glued at `t₀`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::autonomous::period_t;
use crate::dynamics::{
    integrate_t_with, momentum_from_kinetic, CrossingSpec, Direction, EventSpec, IntegratorOptions, Monotone,
    OrbitSegment, PhaseState, Termination,
};
use crate::error::{Error, Result};
use crate::nonlinearity::{Balance, Nonlinearity};
use crate::numerics::{bisect, integrate};
use crate::shooting::{
    analytic_rho_bound, halfline_solution_with, kappa_branch, oscillation_threshold, shoot_window, HalfLine,
    KappaPoint, ShootResult,
};
use crate::weight::{HypothesisReport, Side, WeightProfile};

/// `|w(ρ) − κ(ρ)|` below which a grid point counts as an intersection.
const TOUCH_TOL: f64 = 1e-7;
/// Bisection on `ρ` stops once the momentum mismatch is below this.
const GLUE_TOL: f64 = 1e-11;
/// Exit detection ignores crossings slower than this.
const EXIT_SLOPE: f64 = 1e-6;
const BISTABLE_TOL: f64 = 1e-9;

/// Which level line of `√(1+w²) − 1 + (c/δ)F(v)` to follow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LevelAnchor {
    /// Level of `(1, 0)`.
    ThroughOne,
    /// Level `0`, through `(v₀, 0)` and `(0, 0)`.
    ThroughV0,
    /// Level of `(w̄, 0)` with `α < w̄ < v₀`.
    ThroughW { w_bar: f64 },
}

/// `v ↦ w(v)` on a level line of the autonomous system with `q ≡ c`.
#[derive(Clone, Debug)]
pub struct LevelCurve<'a> {
    n: &'a Nonlinearity,
    delta: f64,
    c: f64,
    anchor: LevelAnchor,
    /// Lower end of the level line when it closes at a turning point.
    low_turn: Option<f64>,
}

impl LevelCurve<'_> {
    /// `F(K) − F(v)`, computed from the nearer zero of the gap so that it
    /// keeps relative accuracy next to turning points and equilibria.
    pub fn gap(&self, v: f64) -> f64 {
        let n = self.n;
        match self.anchor {
            LevelAnchor::ThroughOne => n.integral(v, 1.0),
            LevelAnchor::ThroughV0 => {
                if v < n.alpha {
                    -n.integral(0.0, v)
                } else {
                    n.integral(v, n.v0())
                }
            }
            LevelAnchor::ThroughW { w_bar } => {
                let g = self.low_turn.expect("level through w̄ closes below α");
                if v < n.alpha {
                    -n.integral(g, v)
                } else {
                    n.integral(v, w_bar)
                }
            }
        }
    }

    /// Reduced momentum `y = (c/δ)(F(K) − F(v))`.
    pub fn reduced(&self, v: f64) -> Result<f64> {
        let g = self.gap(v);
        if g < -1e-15 {
            return Err(Error::domain(format!("v = {v} lies off the level line (F(K) − F(v) = {g:e})")));
        }
        Ok(self.c / self.delta * g.max(0.0))
    }

    /// `w(v) = √(s² + 2s)` with `s = (c/δ)(F(K) − F(v))`.
    pub fn eval(&self, v: f64) -> Result<f64> {
        Ok(momentum_from_kinetic(self.reduced(v)?))
    }

    /// Lower turning point of a closed level line.
    pub fn low_turn(&self) -> Option<f64> {
        self.low_turn
    }
}

pub fn energy_level_curve(n: &Nonlinearity, delta: f64, c: f64, anchor: LevelAnchor) -> Result<LevelCurve<'_>> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("c must be positive, got {c}")));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ must be positive, got {delta}")));
    }
    let low_turn = match anchor {
        LevelAnchor::ThroughOne => {
            if n.f_one() < -1e-12 {
                return Err(Error::hypothesis("f2", "the level of (1, 0) needs F(1) ≥ 0"));
            }
            None
        }
        LevelAnchor::ThroughV0 => None,
        LevelAnchor::ThroughW { w_bar } => {
            if !(w_bar > n.alpha && w_bar < n.v0()) {
                return Err(Error::domain(format!("w̄ = {w_bar} must lie in ]α, v₀[")));
            }
            Some(n.level_preimage_left(n.eval_big_f(w_bar))?)
        }
    };
    Ok(LevelCurve { n, delta, c, anchor, low_turn })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Classification {
    Heteroclinic,
    Homoclinic { peak: f64 },
    DefinitivelyPeriodic { period: f64 },
    FiniteTimeExit,
    NonexistenceCertified,
    Undetermined,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Heteroclinic => "heteroclinic",
            Classification::Homoclinic { .. } => "homoclinic",
            Classification::DefinitivelyPeriodic { .. } => "definitively-periodic",
            Classification::FiniteTimeExit => "finite-time-exit",
            Classification::NonexistenceCertified => "nonexistence-certified",
            Classification::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    /// A prerequisite of the condition fails.
    Inapplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub value: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl ConditionCheck {
    fn at_most(value: f64, bound: f64) -> Self {
        ConditionCheck { value, bound, verdict: if value <= bound { Verdict::Holds } else { Verdict::Fails } }
    }

    fn at_least(value: f64, bound: f64) -> Self {
        ConditionCheck { value, bound, verdict: if value >= bound { Verdict::Holds } else { Verdict::Fails } }
    }

    fn above(value: f64, bound: f64) -> Self {
        ConditionCheck { value, bound, verdict: if value > bound { Verdict::Holds } else { Verdict::Fails } }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Evaluated thresholds keyed by a descriptive name.
pub type ConditionsReport = BTreeMap<String, ConditionCheck>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionOptions {
    /// Interior points of the `ρ`-grid on which `w(ρ) − κ(ρ)` is sampled.
    pub grid_points: usize,
    /// Half-width of the glued profile around `t₀`; chosen from the decay
    /// rate at the equilibria when absent.
    pub window: Option<f64>,
    /// Horizon of the forward integration that looks for finite-time exits.
    pub exit_horizon: f64,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        ConnectionOptions { grid_points: 200, window: None, exit_horizon: 1e3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectionResult {
    pub classification: Classification,
    /// `v(t₀)` of the constructed solution.
    pub rho_star: Option<f64>,
    pub profile: Option<OrbitSegment>,
    pub conditions: ConditionsReport,
    /// `(|Δv|, |Δw|)` between the two pieces at `t₀`.
    pub glue_jump: Option<[f64; 2]>,
    pub diagnostics: Vec<String>,
}

impl ConnectionResult {
    fn empty(classification: Classification, conditions: ConditionsReport) -> Self {
        ConnectionResult {
            classification,
            rho_star: None,
            profile: None,
            conditions,
            glue_jump: None,
            diagnostics: Vec::new(),
        }
    }
}

/// `−F(ρ)/(F(1) − F(ρ))`: the ratio `c₂/c₁` for which a stepwise weight
/// connects `0` to `1` through `v(t₀) = ρ`. Increasing on `]0, α]`.
pub fn stepwise_ratio(n: &Nonlinearity, rho: f64) -> f64 {
    let f = n.eval_big_f(rho);
    -f / (n.f_one() - f)
}

fn check_bistable(n: &Nonlinearity) -> Result<()> {
    if (n.beta - n.alpha).abs() > BISTABLE_TOL {
        return Err(Error::hypothesis(
            "bistable",
            format!("f must have a single interior zero, found α = {} < β = {}", n.alpha, n.beta),
        ));
    }
    Ok(())
}

/// Side on which `q` varies; the other side must be constant.
fn configuration(q: &WeightProfile) -> Result<(Side, HypothesisReport)> {
    match q.check_hypotheses(Side::LeftVarying) {
        Ok(r) => Ok((Side::LeftVarying, r)),
        Err(left) => match q.check_hypotheses(Side::RightVarying) {
            Ok(r) => Ok((Side::RightVarying, r)),
            Err(_) => Err(left),
        },
    }
}

fn require_left(q: &WeightProfile) -> Result<HypothesisReport> {
    q.check_hypotheses(Side::LeftVarying)
}

/// Slowest exponential rate at the equilibria `0` and `1` for `q ≥ q_min`.
fn decay_rate(n: &Nonlinearity, q_min: f64, delta: f64) -> f64 {
    let h = 1e-6;
    let d0 = (n.eval_f(h) / h).abs();
    let d1 = (n.eval_f(1.0 - h) / h).abs();
    (q_min * d0.min(d1) / delta).sqrt()
}

fn profile_window(opts: &ConnectionOptions, n: &Nonlinearity, q_min: f64, delta: f64) -> f64 {
    opts.window.unwrap_or_else(|| (30.0 / decay_rate(n, q_min, delta)).max(10.0))
}

fn rho_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let m = points.max(2);
    (1..=m).map(|i| lo + (hi - lo) * i as f64 / (m + 1) as f64).collect()
}

/// A bracket `[lo, hi]` of a sign change of `w − κ`, or a touching point.
#[derive(Clone, Copy, Debug)]
struct Bracket {
    lo: f64,
    hi: f64,
    touching: bool,
}

fn find_brackets(points: &[KappaPoint], level: &dyn Fn(f64) -> Option<f64>) -> Vec<Bracket> {
    let d: Vec<Option<(f64, f64)>> = points
        .iter()
        .map(|p| {
            if !p.converged {
                return None;
            }
            level(p.rho).map(|w| (p.rho, w - p.kappa))
        })
        .collect();
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (rho, di) in d.into_iter().flatten() {
        if di.abs() <= TOUCH_TOL {
            out.push(Bracket { lo: rho, hi: rho, touching: true });
        } else if let Some((r0, d0)) = prev {
            if d0.abs() > TOUCH_TOL && d0.signum() != di.signum() {
                out.push(Bracket { lo: r0, hi: rho, touching: false });
            }
        }
        prev = Some((rho, di));
    }
    out
}

/// Refines a bracket at a frozen horizon; returns the shot at `ρ*` and
/// `w(ρ*) − κ(ρ*)`.
#[allow(clippy::too_many_arguments)]
fn refine(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    side: HalfLine,
    level: &dyn Fn(f64) -> Option<f64>,
    bracket: Bracket,
    window: f64,
) -> Result<(ShootResult, f64)> {
    let mid = 0.5 * (bracket.lo + bracket.hi);
    let horizon = halfline_solution_with(n, q, delta, t0, side, mid, window)?.horizon;
    let eval = |rho: f64| -> Result<(ShootResult, f64)> {
        let r = shoot_window(n, q, delta, t0, side, horizon, rho)?;
        let w = level(rho).ok_or_else(|| Error::domain(format!("ρ = {rho} lies off the level line")))?;
        let d = w - r.terminal_w;
        Ok((r, d))
    };
    if bracket.touching {
        return eval(bracket.lo);
    }
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (mut best, mut d_lo) = eval(lo)?;
    let mut d_best = d_lo;
    let (hi_shot, d_hi) = eval(hi)?;
    if d_hi.abs() < d_best.abs() {
        best = hi_shot;
        d_best = d_hi;
    }
    while d_best.abs() > GLUE_TOL && hi - lo > 1e-15 {
        let m = 0.5 * (lo + hi);
        if !(m > lo && m < hi) {
            break;
        }
        let (r, d) = eval(m)?;
        if d.abs() < d_best.abs() {
            best = r;
            d_best = d;
        }
        if d.signum() == d_lo.signum() {
            lo = m;
            d_lo = d;
        } else {
            hi = m;
        }
    }
    Ok((best, d_best))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum End {
    Regular,
    Turning,
    Equilibrium,
}

/// Samples of the autonomous orbit along `level` from `from` to `to`,
/// with `t` computed by quadrature of `dt/dv = (y+1)/√(y²+2y)` in a
/// variable adapted to the endpoints: `sin²` towards a turning point,
/// `e^{−σ}` from a regular point and `e^{−σ²}` from a turning point
/// towards an equilibrium. `time_sign = −1` builds the branch backwards in
/// time, ending at `from`. Stops once `|t − t_from|` exceeds `extent`.
#[allow(clippy::too_many_arguments)]
fn level_branch(
    curve: &LevelCurve<'_>,
    from: f64,
    from_kind: End,
    to: f64,
    to_kind: End,
    t_from: f64,
    time_sign: f64,
    extent: f64,
) -> Result<Vec<PhaseState>> {
    let n = curve.n;
    let k = curve.c / curve.delta;
    let span = to - from;
    let w_sign = span.signum() * time_sign;
    // v(p) and |dv/dp| for the chosen map.
    let map = |p: f64| -> (f64, f64) {
        match (from_kind, to_kind) {
            (_, End::Turning) => {
                let (s, c) = p.sin_cos();
                (from + span * s * s, (span * 2.0 * s * c).abs())
            }
            (End::Turning, End::Equilibrium) => {
                let e = (-p * p).exp();
                (to - span * e, (span * 2.0 * p * e).abs())
            }
            _ => {
                let e = (-p).exp();
                (to - span * e, (span * e).abs())
            }
        }
    };
    let lim = |v: f64| (2.0 * span.abs() / (k * n.eval_f(v).abs())).sqrt();
    let lim_start = if from_kind == End::Turning { lim(from) } else { 0.0 };
    let lim_end = if to_kind == End::Turning { lim(to) } else { 0.0 };
    let density = |p: f64| -> f64 {
        let (v, dv) = map(p);
        let y = k * curve.gap(v).max(0.0);
        let root = momentum_from_kinetic(y);
        if root > 0.0 && dv > 0.0 {
            (y + 1.0) / root * dv
        } else if p < 0.5 {
            lim_start
        } else {
            lim_end
        }
    };
    let state = |t: f64, p: f64| -> Result<PhaseState> {
        let (v, _) = map(p);
        let w = w_sign * momentum_from_kinetic(curve.reduced(v)?);
        Ok(PhaseState::new(t, v, w))
    };
    let mut out = vec![state(t_from, 0.0)?];
    let mut t = t_from;
    match to_kind {
        End::Turning => {
            const NODES: usize = 256;
            let h = FRAC_PI_2 / NODES as f64;
            for i in 1..=NODES {
                let (a, b) = ((i - 1) as f64 * h, i as f64 * h);
                t += time_sign * integrate(density, a, b, 1e-13, 1e-12)?;
                let mut s = state(t, b)?;
                if i == NODES {
                    s.v = to;
                    s.w = 0.0;
                }
                out.push(s);
                if (t - t_from).abs() > extent {
                    break;
                }
            }
        }
        _ => {
            let h = if from_kind == End::Turning { 0.02 } else { 0.05 };
            let mut p = 0.0;
            loop {
                let b = p + h;
                t += time_sign * integrate(density, p, b, 1e-11, 1e-10)?;
                p = b;
                let s = state(t, p)?;
                // Closer than this, rounding of `v` next to `to` dominates
                // the quadrature; the remaining motion is padded as constant.
                let settled = (s.v - to).abs() <= 1e-8;
                out.push(s);
                if (t - t_from).abs() > extent {
                    break;
                }
                if settled {
                    out.push(PhaseState::new(t_from + time_sign * extent * 1.0001, to, 0.0));
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Left piece of a profile: the half-line orbit cut to `[t₀ − window, t₀]`.
fn left_piece(shot: &ShootResult, t0: f64, window: f64) -> Vec<PhaseState> {
    let lo = t0 - window;
    let s = &shot.orbit.samples;
    let first = s.partition_point(|p| p.t < lo).saturating_sub(1);
    s[first..].to_vec()
}

fn right_piece_of_mirror(shot: &ShootResult, t0: f64, window: f64) -> Vec<PhaseState> {
    let hi = t0 + window;
    let s = &shot.orbit.samples;
    let last = (s.partition_point(|p| p.t <= hi) + 1).min(s.len());
    s[..last].to_vec()
}

fn glue(mut a: Vec<PhaseState>, b: Vec<PhaseState>) -> (OrbitSegment, [f64; 2]) {
    let end = *a.last().unwrap();
    let start = b[0];
    let jump = [(end.v - start.v).abs(), (end.w - start.w).abs()];
    a.extend(b.into_iter().skip(1));
    (OrbitSegment::new(a, Termination::TimeLimit, Direction::Forward), jump)
}

fn branch_level<'a>(
    n: &'a Nonlinearity,
    delta: f64,
    c: f64,
    anchor: LevelAnchor,
) -> Result<(LevelCurve<'a>, impl Fn(f64) -> Option<f64> + 'a)> {
    let curve = energy_level_curve(n, delta, c, anchor)?;
    let probe = curve.clone();
    Ok((curve, move |v: f64| probe.eval(v).ok()))
}

fn grid_report(brackets: &[Bracket]) -> Vec<String> {
    brackets
        .iter()
        .skip(1)
        .map(|b| {
            if b.touching {
                format!("additional touching point at ρ = {}", b.lo)
            } else {
                format!("additional sign change in [{}, {}]", b.lo, b.hi)
            }
        })
        .collect()
}

/// Heteroclinic from 0 to 1 for a weight constant on one side of `t₀`.
pub fn find_heteroclinic(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    opts: &ConnectionOptions,
) -> Result<ConnectionResult> {
    check_bistable(n)?;
    let (side, hyp) = configuration(q)?;
    match side {
        Side::LeftVarying => heteroclinic_left(n, q, delta, &hyp, opts),
        Side::RightVarying => heteroclinic_mirrored(n, q, delta, &hyp, opts),
    }
}

fn heteroclinic_left(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    hyp: &HypothesisReport,
    opts: &ConnectionOptions,
) -> Result<ConnectionResult> {
    let t0 = hyp.t0;
    let c = hyp.c;
    let mut conditions = nonexistence_conditions(n, hyp);
    conditions.insert("heteroclinic-sufficient".into(), ConditionCheck::at_most(c, hyp.eta * stepwise_ratio(n, n.alpha)));
    let window = profile_window(opts, n, hyp.eta.min(c), delta);
    let (curve, level) = branch_level(n, delta, c, LevelAnchor::ThroughOne)?;
    let grid = rho_grid(0.0, n.alpha, opts.grid_points);
    let points = kappa_branch(n, q, delta, t0, HalfLine::Left, &grid);
    let brackets = find_brackets(&points, &level);
    let Some(&bracket) = brackets.first() else {
        let certified = conditions["oscillation-bound"].holds() && conditions["nonexistence-threshold"].holds();
        let class = if certified { Classification::NonexistenceCertified } else { Classification::Undetermined };
        let mut r = ConnectionResult::empty(class, conditions);
        r.diagnostics.push(format!("no intersection of κ with the level of (1, 0) on {} grid points", grid.len()));
        return Ok(r);
    };
    let (shot, d) = refine(n, q, delta, t0, HalfLine::Left, &level, bracket, window)?;
    let rho = shot.orbit.end_state().v;
    let left = left_piece(&shot, t0, window);
    let right = level_branch(&curve, rho, End::Regular, 1.0, End::Equilibrium, t0, 1.0, window)?;
    let (profile, jump) = glue(left, right);
    let mut diagnostics = grid_report(&brackets);
    diagnostics.push(format!("momentum mismatch at t₀: {d:e}"));
    Ok(ConnectionResult {
        classification: Classification::Heteroclinic,
        rho_star: Some(rho),
        profile: Some(profile),
        conditions,
        glue_jump: Some(jump),
        diagnostics,
    })
}

/// Constant weight `c` on `]−∞, t₀[`: the left piece lies on the level of
/// `(0, 0)`, the right piece is the half-line solution towards 1.
fn heteroclinic_mirrored(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    hyp: &HypothesisReport,
    opts: &ConnectionOptions,
) -> Result<ConnectionResult> {
    let t0 = hyp.t0;
    let c = hyp.c;
    let mut conditions = ConditionsReport::new();
    conditions.insert(
        "mirrored-heteroclinic-sufficient".into(),
        ConditionCheck::at_least(c, hyp.sup_norm / stepwise_ratio(n, n.alpha)),
    );
    let window = profile_window(opts, n, hyp.eta.min(c), delta);
    let (curve, level) = branch_level(n, delta, c, LevelAnchor::ThroughV0)?;
    let grid = rho_grid(n.alpha, n.v0(), opts.grid_points);
    let points = kappa_branch(n, q, delta, t0, HalfLine::Right, &grid);
    let brackets = find_brackets(&points, &level);
    let Some(&bracket) = brackets.first() else {
        let mut r = ConnectionResult::empty(Classification::Undetermined, conditions);
        r.diagnostics.push(format!("no intersection of κ with the level of (0, 0) on {} grid points", grid.len()));
        return Ok(r);
    };
    let (shot, d) = refine(n, q, delta, t0, HalfLine::Right, &level, bracket, window)?;
    let rho = shot.orbit.start_state().v;
    let mut left = level_branch(&curve, rho, End::Regular, 0.0, End::Equilibrium, t0, -1.0, window)?;
    left.reverse();
    let right = right_piece_of_mirror(&shot, t0, window);
    let (profile, jump) = glue(left, right);
    let mut diagnostics = grid_report(&brackets);
    diagnostics.push(format!("momentum mismatch at t₀: {d:e}"));
    Ok(ConnectionResult {
        classification: Classification::Heteroclinic,
        rho_star: Some(rho),
        profile: Some(profile),
        conditions,
        glue_jump: Some(jump),
        diagnostics,
    })
}

/// Homoclinic with maximum `v₀` for a weight constant on `[t₀, +∞[`.
///
/// The half-line branch is intersected with the level through `(v₀, 0)`.
/// When `c < η` the two curves only meet at the origin; then the solution
/// is sought with its peak at `t₀`, by integrating backwards from
/// `(t₀, v₀, 0)` and accepting a monotone descent to `0`.
pub fn find_homoclinic(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    opts: &ConnectionOptions,
) -> Result<ConnectionResult> {
    check_bistable(n)?;
    if n.balance == Balance::Balanced {
        return Err(Error::hypothesis("f2", "homoclinic solutions need F(1) > 0"));
    }
    let hyp = require_left(q)?;
    let (t0, c, eta) = (hyp.t0, hyp.c, hyp.eta);
    let mut conditions = ConditionsReport::new();
    conditions.insert("homoclinic-sufficient".into(), ConditionCheck::at_most(c, eta));
    let window = profile_window(opts, n, eta.min(c), delta);
    let v0 = n.v0();
    let (curve, level) = branch_level(n, delta, c, LevelAnchor::ThroughV0)?;
    let grid = rho_grid(0.0, n.alpha, opts.grid_points);
    let points = kappa_branch(n, q, delta, t0, HalfLine::Left, &grid);
    let brackets = find_brackets(&points, &level);
    let mut diagnostics = grid_report(&brackets);

    if let Some(&bracket) = brackets.first() {
        let (shot, d) = refine(n, q, delta, t0, HalfLine::Left, &level, bracket, window)?;
        let rho = shot.orbit.end_state().v;
        let left = left_piece(&shot, t0, window);
        let up = level_branch(&curve, rho, End::Regular, v0, End::Turning, t0, 1.0, window)?;
        let t_peak = up.last().unwrap().t;
        let mut right = up;
        if t_peak - t0 < window {
            let down = level_branch(&curve, v0, End::Turning, 0.0, End::Equilibrium, t_peak, 1.0, window - (t_peak - t0))?;
            right.extend(down.into_iter().skip(1));
        }
        let (profile, jump) = glue(left, right);
        diagnostics.push(format!("momentum mismatch at t₀: {d:e}"));
        return Ok(ConnectionResult {
            classification: Classification::Homoclinic { peak: profile.max_v() },
            rho_star: Some(rho),
            profile: Some(profile),
            conditions,
            glue_jump: Some(jump),
            diagnostics,
        });
    }
    if !conditions["homoclinic-sufficient"].holds() {
        diagnostics.push("no intersection with the level through (v₀, 0) and c > η".into());
        let mut r = ConnectionResult::empty(Classification::Undetermined, conditions);
        r.diagnostics = diagnostics;
        return Ok(r);
    }
    // Peak at t₀. The descent is followed until it settles, however narrow
    // the requested window, and trimmed afterwards.
    let reach = window.max((30.0 / decay_rate(n, eta.min(c), delta)).max(10.0));
    let events = [
        EventSpec::WZero { crossing: CrossingSpec::Any },
        EventSpec::VLevel { level: 0.0, crossing: CrossingSpec::Any },
    ];
    let back = integrate_t_with(
        n,
        q,
        delta,
        PhaseState::new(t0, v0, 0.0),
        Direction::Backward,
        &events,
        t0 - reach,
        &IntegratorOptions::default(),
    )?;
    let far = back.samples[0];
    let descends = back.monotone == Monotone::Increasing && far.v >= 0.0 && far.v < 1e-5;
    if !descends {
        diagnostics.push(format!(
            "backward orbit from (v₀, 0) at t₀ does not settle at 0 (v = {:e} at t = {})",
            far.v, far.t
        ));
        let mut r = ConnectionResult::empty(Classification::Undetermined, conditions);
        r.diagnostics = diagnostics;
        return Ok(r);
    }
    let right = level_branch(&curve, v0, End::Turning, 0.0, End::Equilibrium, t0, 1.0, window)?;
    let first = back.samples.partition_point(|p| p.t < t0 - window).saturating_sub(1);
    let mut left = back.samples[first..].to_vec();
    if far.t > t0 - window {
        // Settled within tolerance before the window edge.
        left.insert(0, PhaseState::new(t0 - window * 1.0001, 0.0, 0.0));
    }
    let (profile, jump) = glue(left, right);
    diagnostics.push("peak placed at t₀".into());
    Ok(ConnectionResult {
        classification: Classification::Homoclinic { peak: profile.max_v() },
        rho_star: Some(v0),
        profile: Some(profile),
        conditions,
        glue_jump: Some(jump),
        diagnostics,
    })
}

/// Solution with `v(−∞) = 0` that follows a periodic orbit of the
/// autonomous system after `t₀`.
///
/// Levels through `(w̄, 0)` are tried with `F(w̄) = λF(α)` for decreasing
/// `λ`, i.e. `w̄` moving up towards `v₀`.
pub fn find_definitively_periodic(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    opts: &ConnectionOptions,
) -> Result<ConnectionResult> {
    check_bistable(n)?;
    let hyp = require_left(q)?;
    let (t0, c) = (hyp.t0, hyp.c);
    let fa = n.eval_big_f(n.alpha);
    let window = profile_window(opts, n, hyp.eta.min(c), delta);
    let grid = rho_grid(0.0, n.alpha, opts.grid_points);
    let points = kappa_branch(n, q, delta, t0, HalfLine::Left, &grid);
    let mut conditions = ConditionsReport::new();
    let mut diagnostics = Vec::new();
    for lambda in [0.5, 0.25, 0.1, 0.03, 0.01, 1e-3, 1e-4] {
        let w_bar = n.level_preimage_right(lambda * fa)?;
        let (curve, level) = branch_level(n, delta, c, LevelAnchor::ThroughW { w_bar })?;
        let brackets = find_brackets(&points, &level);
        let Some(&bracket) = brackets.first() else { continue };
        let bound = hyp.sup_norm * (-fa) / (n.eval_big_f(w_bar) - fa);
        conditions.insert("periodic-tail-sufficient".into(), ConditionCheck::at_least(c, bound));
        let (shot, d) = refine(n, q, delta, t0, HalfLine::Left, &level, bracket, window)?;
        let rho = shot.orbit.end_state().v;
        let low = curve.low_turn().expect("closed level");
        let half = period_t(n, low, delta / c)?;
        let left = left_piece(&shot, t0, window);
        let mut right = level_branch(&curve, rho, End::Regular, w_bar, End::Turning, t0, 1.0, window)?;
        let mut upward = false;
        while right.last().unwrap().t < t0 + window {
            let s = *right.last().unwrap();
            let (a, b) = if upward { (low, w_bar) } else { (w_bar, low) };
            let leg = level_branch(&curve, a, End::Turning, b, End::Turning, s.t, 1.0, t0 + window - s.t)?;
            right.extend(leg.into_iter().skip(1));
            upward = !upward;
        }
        let (profile, jump) = glue(left, right);
        diagnostics.extend(grid_report(&brackets));
        diagnostics.push(format!("level through w̄ = {w_bar}, lower turning point {low}"));
        diagnostics.push(format!("momentum mismatch at t₀: {d:e}"));
        return Ok(ConnectionResult {
            classification: Classification::DefinitivelyPeriodic { period: 2.0 * half },
            rho_star: Some(rho),
            profile: Some(profile),
            conditions,
            glue_jump: Some(jump),
            diagnostics,
        });
    }
    diagnostics.push("no level through (w̄, 0) meets the κ-branch".into());
    let mut r = ConnectionResult::empty(Classification::Undetermined, conditions);
    r.diagnostics = diagnostics;
    Ok(r)
}

/// Prediction for `q ≡ c₁` before `t₀` and `q ≡ c₂` after, with the
/// matching value `ρ = v(t₀)` of a witness solution where one exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepwisePrediction {
    pub classification: Classification,
    pub witness_rho: Option<f64>,
}

/// Relative tolerance for `c₂ = c₁`.
const EQUAL_TOL: f64 = 1e-12;

/// Decision table for stepwise weights, from energy matching at `t₀`: the
/// left piece lies on the `c₁`-level of `(0, 0)`, so `y(ρ) = −c₁F(ρ)/δ`, and
/// must meet the `c₂`-level of `(1, 0)`, of `(v₀, 0)` or of a periodic
/// orbit.
pub fn classify_stepwise(n: &Nonlinearity, c1: f64, c2: f64, delta: f64) -> Result<StepwisePrediction> {
    check_bistable(n)?;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::hypothesis("positivity", format!("c₁ = {c1}, c₂ = {c2} must be positive")));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("δ must be positive"));
    }
    let fa = n.eval_big_f(n.alpha);
    let equal = (c2 - c1).abs() <= EQUAL_TOL * c1.max(c2);
    let balanced = n.balance == Balance::Balanced;
    let prediction = if c2 > c1 && !equal {
        // Witness: the level with F(w̄) = ½(1 − c₁/c₂)F(α) meets the left
        // level where F(ρ) = ½F(α).
        let lambda = 0.5 * (1.0 - c1 / c2);
        let w_bar = if balanced && lambda * fa == 0.0 { n.v0() } else { n.level_preimage_right(lambda * fa)? };
        let low = n.level_preimage_left(n.eval_big_f(w_bar))?;
        let rho = n.level_preimage_left(0.5 * fa)?;
        let period = 2.0 * period_t(n, low, delta / c2)?;
        StepwisePrediction { classification: Classification::DefinitivelyPeriodic { period }, witness_rho: Some(rho) }
    } else if equal {
        let classification =
            if balanced { Classification::Heteroclinic } else { Classification::Homoclinic { peak: n.v0() } };
        StepwisePrediction { classification, witness_rho: None }
    } else if balanced {
        StepwisePrediction { classification: Classification::FiniteTimeExit, witness_rho: None }
    } else {
        let ratio = c2 / c1;
        if ratio > stepwise_ratio(n, n.alpha) {
            StepwisePrediction { classification: Classification::FiniteTimeExit, witness_rho: None }
        } else {
            let rho = if ratio == stepwise_ratio(n, n.alpha) {
                n.alpha
            } else {
                bisect(|r| stepwise_ratio(n, r) - ratio, 0.0, n.alpha)?
            };
            if rho < 1e-9 {
                return Err(Error::DegenerateCase(format!(
                    "c₂/c₁ = {ratio:e} matches only in the limit ρ → 0 (ρ = {rho:e})"
                )));
            }
            StepwisePrediction { classification: Classification::Heteroclinic, witness_rho: Some(rho) }
        }
    };
    Ok(prediction)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub exited: bool,
    pub t: f64,
    pub v: f64,
    pub slope: f64,
}

/// Integrates forward from `start` and reports the first time `v` leaves
/// `[0, 1]` with `|v'| > 1e-6`.
pub fn detect_exit(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    start: PhaseState,
    horizon: f64,
) -> Result<ExitReport> {
    let events = [
        EventSpec::VLevel { level: 0.0, crossing: CrossingSpec::Downward },
        EventSpec::VLevel { level: 1.0, crossing: CrossingSpec::Upward },
    ];
    let seg = integrate_t_with(
        n,
        q,
        delta,
        start,
        Direction::Forward,
        &events,
        start.t + horizon,
        &IntegratorOptions::endpoints_only(),
    )?;
    let end = seg.end_state();
    let slope = end.slope();
    let exited = matches!(seg.termination, Termination::HitVLevel { .. }) && slope.abs() > EXIT_SLOPE;
    Ok(ExitReport { exited, t: end.t, v: end.v, slope })
}

/// Exit test for the solution with `v(−∞) = 0` and `v(t₀) = ρ`: the
/// half-line solution continued forward past `t₀`.
pub fn exit_from_halfline(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    rho: f64,
    horizon: f64,
) -> Result<ExitReport> {
    let t0 = q.t0;
    let shot = halfline_solution_with(n, q, delta, t0, HalfLine::Left, rho, 0.0)?;
    detect_exit(n, q, delta, PhaseState::new(t0, shot.orbit.end_state().v, shot.terminal_w), horizon)
}

/// Thresholds of the nonexistence argument for a left-varying weight.
fn nonexistence_conditions(n: &Nonlinearity, hyp: &HypothesisReport) -> ConditionsReport {
    let mut report = ConditionsReport::new();
    let threshold = oscillation_threshold(n, hyp.sup_norm);
    report.insert("oscillation-bound".into(), ConditionCheck::above(hyp.eta, threshold));
    let mut nonexistence = ConditionCheck::above(hyp.c, threshold);
    if !report["oscillation-bound"].holds() {
        nonexistence.verdict = Verdict::Inapplicable;
    }
    report.insert("nonexistence-threshold".into(), nonexistence);
    report
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonexistenceReport {
    pub certified: bool,
    pub conditions: ConditionsReport,
    /// Bound on `v(t₀)` of left half-line solutions, when available.
    pub rho_bound: Option<f64>,
    /// Maximizer of the critical ratio `C(ρ)` over a grid on `[0, M]`.
    pub ratio_argmax: Option<f64>,
}

/// `C(ρ) = (−‖q‖∞F(α) − η(F(ρ) − F(α)))/(F(1) − F(ρ))`: heteroclinics
/// through `v(t₀) = ρ` are excluded for `c > C(ρ)`.
pub fn critical_ratio(n: &Nonlinearity, eta: f64, sup: f64, rho: f64) -> f64 {
    let fa = n.eval_big_f(n.alpha);
    let fr = n.eval_big_f(rho);
    (-sup * fa - eta * (fr - fa)) / (n.f_one() - fr)
}

/// Sufficient conditions for the absence of heteroclinics with a
/// left-varying weight.
pub fn certify_nonexistence(n: &Nonlinearity, q: &WeightProfile, _delta: f64) -> Result<NonexistenceReport> {
    check_bistable(n)?;
    let hyp = require_left(q)?;
    let mut conditions = nonexistence_conditions(n, &hyp);
    let certified = conditions["oscillation-bound"].holds() && conditions["nonexistence-threshold"].holds();
    let mut rho_bound = None;
    let mut ratio_argmax = None;
    if conditions["oscillation-bound"].holds() {
        let m = analytic_rho_bound(n, q, hyp.t0)?;
        rho_bound = Some(m);
        let grid = 2000;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=grid {
            let rho = m * i as f64 / grid as f64;
            let v = critical_ratio(n, hyp.eta, hyp.sup_norm, rho);
            if v > best.0 {
                best = (v, rho);
            }
        }
        ratio_argmax = Some(best.1);
        if m < n.alpha {
            let sharpened = critical_ratio(n, hyp.eta, hyp.sup_norm, m);
            conditions.insert("nonexistence-threshold-sharpened".into(), ConditionCheck::above(hyp.c, sharpened));
        }
    }
    Ok(NonexistenceReport { certified, conditions, rho_bound, ratio_argmax })
}
