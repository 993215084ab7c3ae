//! The autonomous problem `q ≡ 1`: travel times and periods, the special
//! orbits through `(ζ(γ), 0)`, and the closed-form `δ → 0⁺` limit profiles.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    integrate_t_with, momentum_from_kinetic, CrossingSpec, Direction, EventSpec, IntegratorOptions,
    OrbitSegment, PhaseState, Termination, EQUILIBRIUM_TOL,
};
use crate::error::{Error, Result};
use crate::nonlinearity::{Balance, Nonlinearity};
use crate::numerics::integrate;
use crate::weight::WeightProfile;

const QUAD_TOL: f64 = 1e-12;

/// `(δ + G)/√(G(G + 2δ))`: `dt/dv` on an autonomous level where the
/// potential gap is `G ≥ 0`.
fn time_density(g: f64, delta: f64) -> f64 {
    (delta + g) / (g * (g + 2.0 * delta)).sqrt()
}

/// Gap `−F_γ(v) = F(γ) − F(v) ≥ 0` for `v ∈ [γ, ζ]`, taken from the nearer
/// endpoint so that it keeps relative accuracy at both ends.
fn level_gap(n: &Nonlinearity, gamma: f64, zeta: f64, v: f64) -> f64 {
    if v <= n.alpha {
        -n.integral(gamma, v)
    } else {
        n.integral(v, zeta)
    }
    .max(0.0)
}

/// Half-period `T_{γ,δ}` of the periodic orbit oscillating between `γ` and
/// `ζ(γ)`.
pub fn period_t(n: &Nonlinearity, gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < n.alpha) {
        return Err(Error::domain(format!("γ = {gamma} must lie in ]0, α = {}[", n.alpha)));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("δ must be positive"));
    }
    let zeta = n.zeta(gamma)?;
    let span = zeta - gamma;
    // Limits of the integrand at the turning ends, where G vanishes linearly.
    let lim_lo = (2.0 * delta * span / n.eval_f(gamma).abs()).sqrt();
    let lim_hi = (2.0 * delta * span / n.eval_f(zeta).abs()).sqrt();
    let integrand = |th: f64| {
        let (s, c) = th.sin_cos();
        let v = gamma + span * s * s;
        let g = level_gap(n, gamma, zeta, v);
        if g <= 0.0 {
            return if th < 1.0 { lim_lo } else { lim_hi };
        }
        time_density(g, delta) * span * 2.0 * s * c
    };
    integrate(integrand, 0.0, FRAC_PI_2, QUAD_TOL, QUAD_TOL)
}

/// `∫_{v_lo}^{v_hi} (δ − F)/√(F(F − 2δ)) dv`: time spent by the orbit through
/// `(v₀, 0)` between the two values.
pub fn travel_time_truncated(n: &Nonlinearity, delta: f64, v_lo: f64, v_hi: f64) -> Result<f64> {
    let v0 = n.v0();
    if !(v_lo > 0.0 && v_lo < v_hi && v_hi <= v0) {
        return Err(Error::domain(format!("need 0 < v_lo < v_hi ≤ v₀, got [{v_lo}, {v_hi}]")));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("δ must be positive"));
    }
    let gap = |v: f64| level_gap(n, 0.0, v0, v);
    let mid = 0.5 * (v_lo + v_hi);
    // Lower half in s = ln v to absorb the logarithmic growth near 0.
    let lower = integrate(
        |s: f64| {
            let v = s.exp();
            time_density(gap(v), delta) * v
        },
        v_lo.ln(),
        mid.ln(),
        QUAD_TOL,
        QUAD_TOL,
    )?;
    // Upper half with v = v_hi − (v_hi − mid) sin²θ, removing the turning
    // singularity when v_hi = v₀.
    let span = v_hi - mid;
    let lim = if v_hi == v0 { (2.0 * delta * span / n.eval_f(v0).abs()).sqrt() } else { 0.0 };
    let upper = integrate(
        |th: f64| {
            let (s, c) = th.sin_cos();
            let v = v_hi - span * s * s;
            let g = gap(v);
            if g <= 0.0 {
                return lim;
            }
            time_density(g, delta) * span * 2.0 * s * c
        },
        0.0,
        FRAC_PI_2,
        QUAD_TOL,
        QUAD_TOL,
    )?;
    Ok(lower + upper)
}

fn symmetric_orbit(
    n: &Nonlinearity,
    delta: f64,
    start: PhaseState,
    half_window: f64,
    stop_at_equilibrium: bool,
) -> Result<OrbitSegment> {
    if !(half_window > 0.0) {
        return Err(Error::domain("window must be positive"));
    }
    let q = WeightProfile::constant(1.0);
    let opts = IntegratorOptions::default().with_max_step(0.02_f64.max(half_window / 2e4));
    let events: Vec<EventSpec> = if stop_at_equilibrium {
        vec![
            EventSpec::Equilibrium { tol: EQUILIBRIUM_TOL },
            EventSpec::VLevel { level: 0.0, crossing: CrossingSpec::Any },
            EventSpec::VLevel { level: 1.0, crossing: CrossingSpec::Any },
            // Integration error shifts the level by ~1e-12, so near the saddle
            // the computed orbit turns back instead of converging.
            EventSpec::WZero { crossing: CrossingSpec::Any },
        ]
    } else {
        Vec::new()
    };
    let fwd = integrate_t_with(n, &q, delta, start, Direction::Forward, &events, start.t + half_window, &opts)?;
    let bwd = integrate_t_with(n, &q, delta, start, Direction::Backward, &events, start.t - half_window, &opts)?;
    let mut samples = bwd.samples;
    samples.extend(fwd.samples.iter().skip(1));
    let termination = if fwd.termination == bwd.termination { fwd.termination } else { Termination::TimeLimit };
    Ok(OrbitSegment::new(samples, termination, Direction::Forward))
}

/// The orbit with `v(0) = ζ(γ)`, `v'(0) = 0`, integrated over
/// `[−half_window, half_window]`. For `γ = 0` this is the homoclinic orbit
/// through `(v₀, 0)`, cut where it enters the equilibrium ball or turns
/// back next to it.
pub fn autonomous_special_orbit(n: &Nonlinearity, delta: f64, gamma: f64, half_window: f64) -> Result<OrbitSegment> {
    if gamma == 0.0 && n.balance == Balance::Balanced {
        return Err(Error::DegenerateConstant(
            "the orbit through (1, 0) is the constant 1 when F(1) = 0".into(),
        ));
    }
    let zeta = n.zeta(gamma)?;
    symmetric_orbit(n, delta, PhaseState::new(0.0, zeta, 0.0), half_window, gamma == 0.0)
}

/// Initial state `(0, α, φ(d_α))` of the balanced-case orbit on the level
/// `E = F(γ)/δ`, crossing `v = α` with positive slope.
pub fn heteroclinic_ic(n: &Nonlinearity, delta: f64, gamma: f64) -> Result<PhaseState> {
    if n.balance != Balance::Balanced {
        return Err(Error::domain("the crossing state at α is defined for balanced f only"));
    }
    if !(gamma >= 0.0 && gamma < n.alpha) {
        return Err(Error::domain(format!("γ = {gamma} must lie in [0, α[")));
    }
    let y = -n.integral(gamma, n.alpha) / delta;
    Ok(PhaseState::new(0.0, n.alpha, momentum_from_kinetic(y)))
}

/// Balanced-case orbit through [`heteroclinic_ic`]: the heteroclinic from 0
/// to 1 when `γ = 0`, periodic between `γ` and `ζ(γ)` otherwise.
pub fn autonomous_heteroclinic_orbit(n: &Nonlinearity, delta: f64, gamma: f64, half_window: f64) -> Result<OrbitSegment> {
    let start = heteroclinic_ic(n, delta, gamma)?;
    symmetric_orbit(n, delta, start, half_window, gamma == 0.0)
}

/// Piecewise-linear profile with slopes in `{−1, 0, 1}`.
///
/// Non-periodic: `slopes[i]` holds on the `i`-th of the `breakpoints.len()+1`
/// intervals cut by the breakpoints. Periodic: the breakpoints span exactly
/// one period and `slopes` has one entry per interval between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub periodic: Option<f64>,
    pub anchor: (f64, f64),
}

impl LimitProfile {
    fn values_at_breakpoints(&self) -> Vec<f64> {
        let b = &self.breakpoints;
        let (ta, va) = self.anchor;
        let ta = self.reduce(ta);
        let k = b.partition_point(|x| *x <= ta);
        let slope_at = |i: usize| -> f64 {
            if self.periodic.is_some() {
                self.slopes[i.min(self.slopes.len() - 1)]
            } else {
                self.slopes[i]
            }
        };
        let mut vals = vec![0.0; b.len()];
        // Interval index containing ta is k (non-periodic) or k−1 (periodic).
        let idx = if self.periodic.is_some() { k.saturating_sub(1) } else { k };
        if k > 0 {
            vals[k - 1] = va - slope_at(idx) * (ta - b[k - 1]);
            for i in (0..k - 1).rev() {
                let s = if self.periodic.is_some() { slope_at(i) } else { slope_at(i + 1) };
                vals[i] = vals[i + 1] - s * (b[i + 1] - b[i]);
            }
        }
        if k < b.len() {
            vals[k] = va + slope_at(idx) * (b[k] - ta);
            for i in k + 1..b.len() {
                let s = if self.periodic.is_some() { slope_at(i - 1) } else { slope_at(i) };
                vals[i] = vals[i - 1] + s * (b[i] - b[i - 1]);
            }
        }
        vals
    }

    fn reduce(&self, t: f64) -> f64 {
        match self.periodic {
            Some(p) => {
                let b0 = self.breakpoints[0];
                b0 + (t - b0).rem_euclid(p)
            }
            None => t,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        let vals = self.values_at_breakpoints();
        let t = self.reduce(t);
        let k = b.partition_point(|x| *x <= t);
        match self.periodic {
            Some(_) => {
                let i = k.clamp(1, b.len() - 1);
                vals[i - 1] + self.slopes[i - 1] * (t - b[i - 1])
            }
            None => {
                if k == 0 {
                    vals[0] - self.slopes[0] * (b[0] - t)
                } else {
                    vals[k - 1] + self.slopes[k] * (t - b[k - 1])
                }
            }
        }
    }

    /// Checks slopes, continuity-implied range `[0, 1]` and periodic closure.
    pub fn validate(&self) -> Result<()> {
        let expected = if self.periodic.is_some() { self.breakpoints.len() - 1 } else { self.breakpoints.len() + 1 };
        if self.slopes.len() != expected {
            return Err(Error::domain("slopes/breakpoints length mismatch"));
        }
        if self.slopes.iter().any(|s| ![-1.0, 0.0, 1.0].contains(s)) {
            return Err(Error::domain("slopes must lie in {−1, 0, 1}"));
        }
        let vals = self.values_at_breakpoints();
        if vals.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) {
            return Err(Error::domain("profile leaves [0, 1]"));
        }
        if let Some(p) = self.periodic {
            let b = &self.breakpoints;
            if ((b[b.len() - 1] - b[0]) - p).abs() > 1e-12 * p.max(1.0) {
                return Err(Error::domain("breakpoints must span one period"));
            }
            if (vals[0] - vals[vals.len() - 1]).abs() > 1e-12 {
                return Err(Error::domain("periodic profile does not close"));
            }
        } else if self.slopes[0] != 0.0 || self.slopes[self.slopes.len() - 1] != 0.0 {
            return Err(Error::domain("non-periodic profile must be flat at both ends"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum AutonomousScenario {
    /// `γ = 0` first, then `δ → 0⁺`: a single tent of height `v₀`.
    Gamma0Delta0,
    /// Fixed `γ`, `δ → 0⁺`: sawtooth between `γ` and `ζ(γ)`.
    FixedGammaDelta0 { gamma: f64 },
    /// `δ → 0⁺` first, then `γ → 0⁺`: sawtooth between 0 and `v₀`.
    Delta0Gamma0,
    /// Balanced `f`: the ramp `t + α` clipped to `[0, 1]`.
    BalancedHeteroclinic,
}

pub fn limit_profile_autonomous(n: &Nonlinearity, scenario: AutonomousScenario) -> Result<LimitProfile> {
    let need_positive = || {
        if n.balance != Balance::Positive {
            Err(Error::domain("this limit requires F(1) > 0"))
        } else {
            Ok(())
        }
    };
    let v0 = n.v0();
    let profile = match scenario {
        AutonomousScenario::Gamma0Delta0 => {
            need_positive()?;
            LimitProfile {
                breakpoints: vec![-v0, 0.0, v0],
                slopes: vec![0.0, 1.0, -1.0, 0.0],
                periodic: None,
                anchor: (0.0, v0),
            }
        }
        AutonomousScenario::FixedGammaDelta0 { gamma } => {
            need_positive()?;
            if !(gamma > 0.0 && gamma < n.alpha) {
                return Err(Error::domain(format!("γ = {gamma} must lie in ]0, α[")));
            }
            let zeta = n.zeta(gamma)?;
            let h = zeta - gamma;
            LimitProfile {
                breakpoints: vec![-h, 0.0, h],
                slopes: vec![1.0, -1.0],
                periodic: Some(2.0 * h),
                anchor: (0.0, zeta),
            }
        }
        AutonomousScenario::Delta0Gamma0 => {
            need_positive()?;
            LimitProfile {
                breakpoints: vec![-v0, 0.0, v0],
                slopes: vec![1.0, -1.0],
                periodic: Some(2.0 * v0),
                anchor: (0.0, v0),
            }
        }
        AutonomousScenario::BalancedHeteroclinic => {
            if n.balance != Balance::Balanced {
                return Err(Error::domain("the ramp limit requires F(1) = 0"));
            }
            let a = n.alpha;
            LimitProfile {
                breakpoints: vec![-a, 1.0 - a],
                slopes: vec![0.0, 1.0, 0.0],
                periodic: None,
                anchor: (0.0, a),
            }
        }
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{energy, integrate_t};

    fn cubic(a: f64) -> Nonlinearity {
        Nonlinearity::cubic(a).unwrap()
    }

    #[test]
    fn period_limit_and_monotonicity() {
        let n = cubic(0.4);
        let z = n.zeta(0.1).unwrap();
        let t = period_t(&n, 0.1, 1e-6).unwrap();
        assert!((t - (z - 0.1)).abs() < 1e-3 * (z - 0.1));
        let mut prev = 0.0;
        for d in [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let t = period_t(&n, 0.1, d).unwrap();
            assert!(t > prev);
            prev = t;
        }
        assert!(period_t(&n, 0.0, 0.1).is_err());
        assert!(period_t(&n, 0.4, 0.1).is_err());
    }

    #[test]
    fn period_diverges_as_gamma_vanishes() {
        let n = cubic(0.4);
        let t: Vec<f64> = [1e-3, 1e-6, 1e-9, 1e-12].iter().map(|&g| period_t(&n, g, 0.1).unwrap()).collect();
        // Logarithmic growth: equal increments per factor 1e-3 in γ.
        let steps: Vec<f64> = t.windows(2).map(|p| p[1] - p[0]).collect();
        assert!(steps.iter().all(|s| *s > 1.0), "{t:?}");
        assert!((steps[2] / steps[1] - 1.0).abs() < 0.05, "{steps:?}");
    }

    #[test]
    fn half_period_matches_time_domain() {
        let n = cubic(0.4);
        let q = WeightProfile::constant(1.0);
        let t = period_t(&n, 0.1, 0.1).unwrap();
        let seg = integrate_t(
            &n,
            &q,
            0.1,
            PhaseState::new(0.0, 0.1, 0.0),
            Direction::Forward,
            &[EventSpec::WZero { crossing: CrossingSpec::Downward }],
            100.0,
        )
        .unwrap();
        assert!((seg.end_state().t - t).abs() < 1e-8);
    }

    #[test]
    fn truncated_travel_time() {
        let n = cubic(0.4);
        let v0 = n.v0();
        let t: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&lo| travel_time_truncated(&n, 0.1, lo, v0).unwrap()).collect();
        assert!(t[0] < t[1] && t[1] < t[2]);
        let (d1, d2) = (t[1] - t[0], t[2] - t[1]);
        assert!((d2 / d1 - 1.0).abs() < 0.2);
        assert!(travel_time_truncated(&n, 0.1, v0 - 1e-9, v0).unwrap() < 1e-3);
        assert!(travel_time_truncated(&n, 0.1, 0.5, 0.4).is_err());
    }

    #[test]
    fn truncated_travel_time_matches_time_domain() {
        let n = cubic(0.4);
        let v0 = n.v0();
        let tt = travel_time_truncated(&n, 0.1, v0 / 2.0, v0).unwrap();
        let seg = integrate_t(
            &n,
            &WeightProfile::constant(1.0),
            0.1,
            PhaseState::new(0.0, v0, 0.0),
            Direction::Forward,
            &[EventSpec::VLevel { level: v0 / 2.0, crossing: CrossingSpec::Downward }],
            100.0,
        )
        .unwrap();
        assert!((seg.end_state().t - tt).abs() < 1e-5);
    }

    #[test]
    fn special_orbits() {
        let n = cubic(0.4);
        let orbit = autonomous_special_orbit(&n, 0.1, 0.1, 12.0).unwrap();
        let e0 = n.eval_big_f(0.1) / 0.1;
        for s in &orbit.samples {
            assert!((energy(s.v, s.w, 0.1, 1.0, &n) - e0).abs() < 1e-8);
        }
        let homo = autonomous_special_orbit(&n, 0.1, 0.0, 30.0).unwrap();
        let first = homo.samples[0];
        let last = homo.samples.last().unwrap();
        assert!(first.v < 1e-4 && last.v < 1e-4, "{first:?} {last:?} {:?}", homo.termination);
        assert!((homo.max_v() - n.v0()).abs() < 1e-12);
        assert!(matches!(autonomous_special_orbit(&cubic(0.5), 0.1, 0.0, 5.0), Err(Error::DegenerateConstant(_))));
    }

    #[test]
    fn balanced_crossing_state() {
        let n = cubic(0.5);
        let s = heteroclinic_ic(&n, 0.1, 0.0).unwrap();
        let slope = s.slope();
        assert!((1.0 / (1.0 - slope * slope).sqrt() - 1.15625).abs() < 1e-12);
        let near = heteroclinic_ic(&n, 0.1, 0.5 - 1e-7).unwrap();
        assert!(near.slope() < 1e-6);
        assert!(heteroclinic_ic(&n, 1e9, 0.0).unwrap().slope() < 1e-4);
        assert!(heteroclinic_ic(&cubic(0.4), 0.1, 0.0).is_err());
        let orbit = autonomous_heteroclinic_orbit(&n, 0.1, 0.0, 30.0).unwrap();
        assert_eq!(orbit.monotone, crate::dynamics::Monotone::Increasing, "{:?} {:?}", orbit.samples.first(), orbit.samples.last());
    }

    #[test]
    fn limit_profiles() {
        let n = cubic(0.4);
        let v0 = n.v0();
        let tent = limit_profile_autonomous(&n, AutonomousScenario::Gamma0Delta0).unwrap();
        assert!((tent.value(0.0) - v0).abs() < 1e-15);
        assert_eq!(tent.value(-v0), 0.0);
        assert!(tent.value(v0).abs() < 1e-15);
        assert_eq!(tent.value(5.0), 0.0);
        assert!((tent.value(0.3) - (v0 - 0.3)).abs() < 1e-15);

        let saw = limit_profile_autonomous(&n, AutonomousScenario::FixedGammaDelta0 { gamma: 0.1 }).unwrap();
        let z = n.zeta(0.1).unwrap();
        let p = saw.periodic.unwrap();
        assert!((p - 2.0 * (z - 0.1)).abs() < 1e-15);
        assert!((saw.value(z - 0.1) - 0.1).abs() < 1e-12);
        assert!((saw.value(3.0 * p) - z).abs() < 1e-12);
        assert!((saw.value(0.25) - (z - 0.25)).abs() < 1e-12);

        let s4 = limit_profile_autonomous(&n, AutonomousScenario::Delta0Gamma0).unwrap();
        assert!((s4.value(v0) - 0.0).abs() < 1e-12 && (s4.value(2.0 * v0) - v0).abs() < 1e-12);

        let b = cubic(0.5);
        let ramp = limit_profile_autonomous(&b, AutonomousScenario::BalancedHeteroclinic).unwrap();
        assert_eq!(ramp.value(-1.0), 0.0);
        assert!((ramp.value(0.2) - 0.7).abs() < 1e-15);
        assert_eq!(ramp.value(2.0), 1.0);
        assert!(limit_profile_autonomous(&b, AutonomousScenario::Gamma0Delta0).is_err());
        assert!(limit_profile_autonomous(&n, AutonomousScenario::BalancedHeteroclinic).is_err());
    }
}
