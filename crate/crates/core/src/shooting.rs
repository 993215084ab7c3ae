//! Shooting for the mixed Neumann–Dirichlet problems on `[t₀−T, t₀]` and
//! `[t₀, t₀+T]`, their limits as `T → +∞`, and the branch of terminal
//! momenta `ρ ↦ κ(ρ)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    fmt17, integrate_t_with, kinetic, momentum_from_kinetic, CrossingSpec, Direction, EventSpec,
    IntegratorOptions, Monotone, OrbitSegment, PhaseState, Termination,
};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::bisect;
use crate::ode::Tolerances;
use crate::weight::WeightProfile;

/// Largest acceptable `|v(t₀) − ρ|` of a returned shot.
pub const SHOOT_RESIDUAL: f64 = 1e-9;
/// Bisection on `ω` stops once the undershooting side is this close to `ρ`.
const INTERNAL_RESIDUAL: f64 = 1e-12;
/// Number of cells of the upward scan on `]0, α[`.
const SCAN_CELLS: usize = 100;
/// Smallest `ω` tried; the state is integrated with pure relative error
/// control, so it stays meaningful down to here.
const OMEGA_FLOOR: f64 = 1e-280;
const FIRST_HORIZON: f64 = 1.0;
const MAX_DOUBLINGS: usize = 12;
/// Cauchy threshold on the terminal momentum between doublings.
const CAUCHY_TOL: f64 = 1e-9;
/// Distance from the equilibrium required at the far end of a half-line
/// solution.
const FAR_END_TOL: f64 = 1e-6;

/// Which half-line problem: `]−∞, t₀]` with `v(−∞) = 0`, or `[t₀, +∞[`
/// with `v(+∞) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfLine {
    Left,
    Right,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootResult {
    /// Value at the Neumann end, where `w = 0`.
    pub omega: f64,
    pub orbit: OrbitSegment,
    pub rho: f64,
    /// `w` at the Dirichlet end `t₀`.
    pub terminal_w: f64,
    /// `v` strictly increasing on every sample.
    pub monotone_certificate: bool,
    /// Length `T` of the window that produced the orbit.
    pub horizon: f64,
    /// `|v(t₀) − ρ|`.
    pub residual: f64,
}

/// `γ·exp(−‖q‖∞·L·T²/δ)` with the sup norm of `q` on `[t₀−T, t₀]`: below
/// this value the orbit from `(ω, 0)` at `t₀−T` stays under `γ` up to `t₀`.
pub fn omega_gamma_bound(n: &Nonlinearity, q: &WeightProfile, delta: f64, t0: f64, horizon: f64, gamma: f64) -> f64 {
    let sup = q.bounds_on(t0 - horizon, t0).1;
    gamma * (-sup * n.lipschitz * horizon * horizon / delta).exp()
}

/// State at `t_to` of the solution through `state = (v, w)` at `t_from`.
pub fn poincare_map(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t_from: f64,
    t_to: f64,
    state: (f64, f64),
) -> Result<(f64, f64)> {
    if t_from == t_to {
        return Ok(state);
    }
    let direction = if t_to > t_from { Direction::Forward } else { Direction::Backward };
    let start = PhaseState::new(t_from, state.0, state.1);
    let seg = integrate_t_with(n, q, delta, start, direction, &[], t_to, &IntegratorOptions::endpoints_only())?;
    if seg.termination == Termination::BlowupGuard {
        return Err(Error::Numerical(format!("orbit from {state:?} blew up before t = {t_to}")));
    }
    let end = seg.end_state();
    Ok((end.v, end.w))
}

/// Tolerances for shooting from `(ω, 0)`: the absolute floor scales with
/// `ω`, so orbits starting exponentially close to `0` keep their relative
/// accuracy.
fn shooting_options(record: bool, omega: f64) -> IntegratorOptions {
    let rtol = 1e-11;
    let atol = (1e-3 * rtol * omega).clamp(1e-300, 1e-14);
    IntegratorOptions { tolerances: Tolerances { rtol, atol, ..Tolerances::default() }, record }
}

/// The increasing solution of `v'(t₀−T) = 0`, `v(t₀) = ρ` with the
/// smallest `ω = v(t₀−T)`.
///
/// `ρ` may exceed `α`; there a solution need not exist and the search ends
/// in `BracketingFailure`.
fn shoot_left_core(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    horizon: f64,
    rho: f64,
) -> Result<ShootResult> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ must be positive, got {delta}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("T must be positive and finite, got {horizon}")));
    }
    if rho == n.alpha {
        return Err(Error::domain("ρ = α is excluded: α is an equilibrium"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("ρ = {rho} must lie in ]0, 1[")));
    }
    let t_start = t0 - horizon;
    let (inf, _) = q.bounds_on(t_start, t0);
    if !(inf > 0.0) {
        return Err(Error::hypothesis("positivity", format!("q has infimum {inf} ≤ 0 on [{t_start}, {t0}]")));
    }
    let events = [
        EventSpec::VLevel { level: rho, crossing: CrossingSpec::Upward },
        // A turn before ρ rules out an increasing solution.
        EventSpec::WZero { crossing: CrossingSpec::Downward },
    ];
    // `Some(v(t₀))` when the orbit from ω stays below ρ, `None` once it
    // reaches ρ increasingly by t₀.
    let probe = |omega: f64| -> Result<Option<f64>> {
        if omega >= rho && rho < n.alpha {
            return Ok(None);
        }
        let start = PhaseState::new(t_start, omega, 0.0);
        let seg = integrate_t_with(n, q, delta, start, Direction::Forward, &events, t0, &shooting_options(false, omega))?;
        let end = seg.end_state();
        Ok(match seg.termination {
            Termination::HitVLevel { .. } => None,
            Termination::TimeLimit if end.v >= rho && end.w > 0.0 => None,
            _ => Some(end.v),
        })
    };

    let alpha = n.alpha;
    let mut lo = omega_gamma_bound(n, q, delta, t0, horizon, rho.min(alpha)).max(OMEGA_FLOOR);
    let mut lo_end = loop {
        match probe(lo)? {
            Some(v) => break v,
            None if lo > OMEGA_FLOOR => lo = (lo * 1e-6).max(OMEGA_FLOOR),
            None => {
                return Err(Error::BracketingFailure(format!(
                    "every ω ≥ {OMEGA_FLOOR:e} reaches ρ = {rho} before t₀"
                )))
            }
        }
    };
    let mut hi = None;
    // Below α the orbit from (ρ, 0) trivially reaches ρ, which closes the scan.
    let cap = if rho < alpha { rho } else { alpha };
    for k in 1..=SCAN_CELLS {
        let omega = (alpha * k as f64 / SCAN_CELLS as f64).min(cap);
        if omega <= lo {
            continue;
        }
        match probe(omega)? {
            None => {
                hi = Some(omega);
                break;
            }
            Some(v) => {
                lo = omega;
                lo_end = v;
            }
        }
    }
    let mut hi = hi.ok_or_else(|| {
        Error::BracketingFailure(format!("no ω in ]0, α[ reaches ρ = {rho} increasingly within T = {horizon}"))
    })?;

    while rho - lo_end > INTERNAL_RESIDUAL {
        // Geometric midpoints while the bracket spans orders of magnitude.
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if !(mid > lo && mid < hi) {
            break;
        }
        match probe(mid)? {
            Some(v) => {
                lo = mid;
                lo_end = v;
            }
            None => hi = mid,
        }
    }

    let start = PhaseState::new(t_start, lo, 0.0);
    let orbit = integrate_t_with(n, q, delta, start, Direction::Forward, &events, t0, &shooting_options(true, lo))?;
    let end = orbit.end_state();
    let residual = (end.v - rho).abs();
    if !(residual < SHOOT_RESIDUAL) {
        return Err(Error::Numerical(format!(
            "shooting for ρ = {rho} stalled with |v(t₀) − ρ| = {residual:e} (ω ∈ [{lo:e}, {hi:e}])"
        )));
    }
    let monotone_certificate =
        orbit.monotone == Monotone::Increasing && orbit.samples.iter().skip(1).all(|s| s.w > 0.0);
    Ok(ShootResult { omega: lo, terminal_w: end.w, orbit, rho, monotone_certificate, horizon, residual })
}

/// Strictly increasing solution on `[t₀−T, t₀]` with `v'(t₀−T) = 0` and
/// `v(t₀) = ρ ∈ ]0, α[`, taking the smallest admissible `ω = v(t₀−T)`.
pub fn shoot_mixed_left(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    horizon: f64,
    rho: f64,
) -> Result<ShootResult> {
    if !(rho > 0.0 && rho < n.alpha) {
        return Err(Error::domain(format!("ρ = {rho} must lie in ]0, α = {}[", n.alpha)));
    }
    shoot_left_core(n, q, delta, t0, horizon, rho)
}

/// The time reflection `t ↦ 2t₀ − t`, `v ↦ 1 − v` maps the right problem
/// for `(f, q)` onto the left problem for `(−f(1−·), q(2t₀−·))`.
struct Mirror {
    n: Nonlinearity,
    q: WeightProfile,
    t0: f64,
}

impl Mirror {
    fn new(n: &Nonlinearity, q: &WeightProfile, t0: f64) -> Result<Self> {
        Ok(Mirror { n: n.reflected()?, q: q.reflected_about(t0), t0 })
    }

    fn unmap(&self, r: ShootResult) -> ShootResult {
        let t0 = self.t0;
        let samples = r.orbit.samples.iter().map(|s| PhaseState::new(2.0 * t0 - s.t, 1.0 - s.v, s.w)).collect();
        let termination = match r.orbit.termination {
            Termination::HitVLevel { level } => Termination::HitVLevel { level: 1.0 - level },
            other => other,
        };
        ShootResult {
            omega: 1.0 - r.omega,
            orbit: OrbitSegment::new(samples, termination, Direction::Backward),
            rho: 1.0 - r.rho,
            ..r
        }
    }
}

/// Mirror image of [`shoot_mixed_left`]: `v(t₀) = ρ ∈ ]β, 1[`, `v'(t₀+T) = 0`,
/// with `ω = v(t₀+T)` as close to 1 as admissible. The search runs on the
/// reflected problem, where `1 − ω` is resolved to full relative precision.
pub fn shoot_mixed_right(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    horizon: f64,
    rho: f64,
) -> Result<ShootResult> {
    if rho == n.beta {
        return Err(Error::domain("ρ = β is excluded: β is an equilibrium"));
    }
    if !(rho > n.beta && rho < 1.0) {
        return Err(Error::domain(format!("ρ = {rho} must lie in ]β = {}, 1[", n.beta)));
    }
    let m = Mirror::new(n, q, t0)?;
    let r = shoot_left_core(&m.n, &m.q, delta, t0, horizon, 1.0 - rho)?;
    Ok(m.unmap(r))
}

/// Half-line solution through `v(t₀) = ρ`, obtained as the limit of the
/// mixed problems for `T = 1, 2, 4, …` (at least `min_horizon`).
///
/// The limit is declared once the terminal momentum moves by less than
/// `1e-9·max(1, |w|)` between doublings and the far end lies within `1e-6`
/// of the equilibrium. Left: `ρ ∈ ]0, 1[ \ {α}`; beyond `α` a solution need
/// not exist. Right: `ρ ∈ ]0, 1[ \ {β}`, mirrored.
pub fn halfline_solution_with(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    side: HalfLine,
    rho: f64,
    min_horizon: f64,
) -> Result<ShootResult> {
    match side {
        HalfLine::Left => halfline_left(n, q, delta, t0, rho, min_horizon),
        HalfLine::Right => {
            let m = Mirror::new(n, q, t0)?;
            if rho == n.beta {
                return Err(Error::domain("ρ = β is excluded: β is an equilibrium"));
            }
            let r = halfline_left(&m.n, &m.q, delta, t0, 1.0 - rho, min_horizon)?;
            Ok(m.unmap(r))
        }
    }
}

/// Mixed problem on the fixed window of length `horizon` next to `t₀` on
/// `side`, without restricting `ρ` to the monotone range. Used to refine
/// intersections at a frozen horizon, where the terminal momentum depends
/// continuously on `ρ`.
pub fn shoot_window(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    side: HalfLine,
    horizon: f64,
    rho: f64,
) -> Result<ShootResult> {
    match side {
        HalfLine::Left => shoot_left_core(n, q, delta, t0, horizon, rho),
        HalfLine::Right => {
            let m = Mirror::new(n, q, t0)?;
            if rho == n.beta {
                return Err(Error::domain("ρ = β is excluded: β is an equilibrium"));
            }
            Ok(m.unmap(shoot_left_core(&m.n, &m.q, delta, t0, horizon, 1.0 - rho)?))
        }
    }
}

/// [`halfline_solution_with`] without a minimal horizon.
pub fn halfline_solution(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    side: HalfLine,
    rho: f64,
) -> Result<ShootResult> {
    halfline_solution_with(n, q, delta, t0, side, rho, 0.0)
}

fn halfline_left(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    rho: f64,
    min_horizon: f64,
) -> Result<ShootResult> {
    let (inf, _) = q.bounds_on(f64::NEG_INFINITY, t0);
    if !(inf > 0.0) {
        return Err(Error::hypothesis(
            "positivity",
            format!("q has essential infimum {inf} ≤ 0 on the half-line"),
        ));
    }
    let mut trend = Vec::new();
    let mut horizon = FIRST_HORIZON;
    let mut prev: Option<f64> = None;
    let mut last_failure = None;
    for _ in 0..=MAX_DOUBLINGS {
        // Above α short windows may be too brief to reach ρ at all.
        let r = match shoot_left_core(n, q, delta, t0, horizon, rho) {
            Ok(r) => r,
            Err(e @ Error::BracketingFailure(_)) if rho > n.alpha => {
                last_failure = Some(e);
                horizon *= 2.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        trend.push(r.terminal_w);
        let settled = prev.is_some_and(|w| (r.terminal_w - w).abs() < CAUCHY_TOL * r.terminal_w.abs().max(1.0));
        if settled && r.omega < FAR_END_TOL && horizon >= min_horizon {
            return Ok(r);
        }
        prev = Some(r.terminal_w);
        horizon *= 2.0;
    }
    Err(match (trend.is_empty(), last_failure) {
        (true, Some(e)) => e,
        _ => Error::NoConvergence { doublings: MAX_DOUBLINGS, trend },
    })
}

/// `√(s² + 2s)`, the momentum of reduced momentum `s`.
fn momentum(s: f64) -> f64 {
    momentum_from_kinetic(s)
}

/// One point of the branch of terminal momenta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    pub rho: f64,
    /// Last terminal momentum computed; NaN when shooting failed outright.
    pub kappa: f64,
    pub converged: bool,
    /// Momentum bounds obtained by replacing `q` with its infimum and
    /// supremum on the half-line.
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Momentum bounds `√(s²+2s)` at `ρ` from `η ≤ q ≤ ‖q‖∞` on the half-line.
pub fn kappa_bounds(n: &Nonlinearity, q: &WeightProfile, delta: f64, t0: f64, side: HalfLine, rho: f64) -> (f64, f64) {
    let (eta, sup, gap) = match side {
        HalfLine::Left => {
            let (lo, hi) = q.bounds_on(f64::NEG_INFINITY, t0);
            (lo, hi, -n.integral(0.0, rho))
        }
        HalfLine::Right => {
            let (lo, hi) = q.bounds_on(t0, f64::INFINITY);
            (lo, hi, n.integral(rho, 1.0))
        }
    };
    // Only a nonnegative gap gives a bound; past the level turning point the
    // reduced momentum is not controlled from below.
    let s_lo = (eta * gap / delta).max(0.0);
    let s_hi = (sup * gap / delta).max(0.0);
    let (a, b) = (momentum(s_lo), momentum(s_hi));
    (a.min(b), a.max(b))
}

/// Half-line solutions over `grid`, evaluated in parallel. Failures are
/// flagged per point.
pub fn kappa_branch(
    n: &Nonlinearity,
    q: &WeightProfile,
    delta: f64,
    t0: f64,
    side: HalfLine,
    grid: &[f64],
) -> Vec<KappaPoint> {
    grid.par_iter()
        .map(|&rho| {
            let (lower_bound, upper_bound) = kappa_bounds(n, q, delta, t0, side, rho);
            let (kappa, converged) = match halfline_solution(n, q, delta, t0, side, rho) {
                Ok(r) => (r.terminal_w, true),
                Err(Error::NoConvergence { trend, .. }) => (trend.last().copied().unwrap_or(f64::NAN), false),
                Err(_) => (f64::NAN, false),
            };
            KappaPoint { rho, kappa, converged, lower_bound, upper_bound }
        })
        .collect()
}

/// CSV `rho,kappa,converged,lower_bound,upper_bound`.
pub fn kappa_csv(points: &[KappaPoint]) -> String {
    let mut out = String::from("rho,kappa,converged,lower_bound,upper_bound\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt17(p.rho),
            fmt17(p.kappa),
            p.converged,
            fmt17(p.lower_bound),
            fmt17(p.upper_bound)
        );
    }
    out
}

/// Largest Dirichlet value of the left half-line problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxRhoBound {
    /// Largest `ρ` on the `1e-3` grid above `α` whose half-line solution
    /// converged.
    pub empirical: f64,
    /// Root of `−‖q‖∞F(α) − η(F(ρ) − F(α)) = 0`; solutions satisfy `ρ ≤` it.
    pub analytic: f64,
}

/// `‖q‖∞·(−F(α))/(F(1) − F(α))`: the infimum of `q` must exceed it for the
/// Dirichlet value of left half-line solutions to stay away from 1.
pub fn oscillation_threshold(n: &Nonlinearity, sup: f64) -> f64 {
    let fa = n.eval_big_f(n.alpha);
    sup * (-fa) / (n.f_one() - fa)
}

/// Analytic bound on the Dirichlet value of left half-line solutions.
pub fn analytic_rho_bound(n: &Nonlinearity, q: &WeightProfile, t0: f64) -> Result<f64> {
    let (eta, sup) = q.bounds_on(f64::NEG_INFINITY, t0);
    let threshold = oscillation_threshold(n, sup);
    if !(eta > threshold) {
        return Err(Error::hypothesis(
            "oscillation-bound",
            format!("η = {eta} does not exceed ‖q‖∞(−F(α))/(F(1)−F(α)) = {threshold}"),
        ));
    }
    let fa = n.eval_big_f(n.alpha);
    let target = fa * (1.0 - sup / eta);
    // target ∈ [0, F(1)[, so the root lies in [v₀, 1[ where F increases.
    if target <= 0.0 {
        return Ok(n.v0());
    }
    bisect(|v| n.eval_big_f(v) - target, n.v0(), 1.0)
}

/// Empirical and analytic bounds on `ρ` for the left half-line problem.
/// The scan runs in parallel blocks and stops at the first failure.
pub fn max_rho_bound(n: &Nonlinearity, q: &WeightProfile, delta: f64, t0: f64) -> Result<MaxRhoBound> {
    let analytic = analytic_rho_bound(n, q, t0)?;
    const STEP: f64 = 1e-3;
    const BLOCK: usize = 32;
    let mut empirical = n.alpha;
    let mut k = 1usize;
    'scan: loop {
        let block: Vec<f64> = (k..k + BLOCK).map(|j| n.alpha + j as f64 * STEP).take_while(|r| *r < 1.0).collect();
        if block.is_empty() {
            break;
        }
        let ok: Vec<bool> =
            block.par_iter().map(|&rho| halfline_solution(n, q, delta, t0, HalfLine::Left, rho).is_ok()).collect();
        for (rho, good) in block.iter().zip(ok) {
            if !good {
                break 'scan;
            }
            empirical = *rho;
        }
        k += BLOCK;
    }
    Ok(MaxRhoBound { empirical, analytic })
}

/// Reduced momentum of the left half-line solution for constant `q ≡ c`:
/// `−cF(ρ)/δ`.
pub fn constant_weight_kappa(n: &Nonlinearity, c: f64, delta: f64, rho: f64) -> f64 {
    momentum(-c * n.integral(0.0, rho) / delta)
}

/// `√(1+w²) − 1` for external callers comparing momenta through energies.
pub fn reduced_momentum(w: f64) -> f64 {
    kinetic(w)
}
