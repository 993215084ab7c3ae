//! Dependence of the glued connections on `δ`: convergence to piecewise
//! linear profiles with slopes `±1` as `δ → 0⁺` and flattening around
//! `v(t₀)` as `δ → +∞`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonomous::LimitProfile;
use crate::connections::{find_heteroclinic, find_homoclinic, ConnectionOptions, ConnectionResult};
use crate::dynamics::OrbitSegment;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::weight::WeightProfile;

/// Half-width of the window around `t₀` on which profiles are compared.
pub const SWEEP_HALF_WINDOW: f64 = 2.0;
/// Evaluation points of the sup-norms on the window.
const WINDOW_POINTS: usize = 4001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    Heteroclinic,
    Homoclinic,
}

/// `0` before `t₀ − v*`, slope `1` up to `1`, then `1`.
pub fn limit_profile_heteroclinic(v_star: f64, t0: f64) -> LimitProfile {
    let start = t0 - v_star;
    LimitProfile {
        breakpoints: vec![start, start + 1.0],
        slopes: vec![0.0, 1.0, 0.0],
        periodic: None,
        anchor: (start, 0.0),
    }
}

/// Tent of height `v₀` rising from `0` at `t₀ − v*`.
pub fn limit_profile_homoclinic(v_star: f64, v0: f64, t0: f64) -> LimitProfile {
    let start = t0 - v_star;
    LimitProfile {
        breakpoints: vec![start, start + v0, start + 2.0 * v0],
        slopes: vec![0.0, 1.0, -1.0, 0.0],
        periodic: None,
        anchor: (start, 0.0),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: ConnectionKind,
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    /// `v_δ(t₀)` per `δ`.
    pub v_star_estimates: Vec<f64>,
    /// Sup-distance to the limit profile on `window`.
    pub sup_distances: Vec<f64>,
    /// `sup |v_δ − v_δ(t₀)|` on `window`.
    pub flattening: Vec<f64>,
    /// `v_δ'` at the middle of the limiting ramp (heteroclinic) or of its
    /// rising edge (homoclinic).
    pub ramp_slopes: Vec<f64>,
    /// `max v_δ`.
    pub peaks: Vec<f64>,
    pub window: [f64; 2],
    /// Limit of `v_δ(t₀)` as `δ → 0⁺`, extrapolated linearly from the two
    /// smallest `δ`.
    pub v_star: f64,
    /// `|v* − v_δ(t₀)|` at the smallest `δ`.
    pub spread: f64,
    /// Constructed connection per `δ`.
    #[serde(skip)]
    pub profiles: Vec<OrbitSegment>,
}

impl SweepReport {
    /// Whether `sup_distances` never increases as `δ` decreases.
    pub fn distances_nonincreasing(&self) -> bool {
        self.sup_distances.windows(2).all(|p| p[1] <= p[0])
    }

    /// Whether `flattening` never increases as `δ` increases.
    pub fn flattening_decreases_with_delta(&self) -> bool {
        self.flattening.windows(2).all(|p| p[0] <= p[1])
    }
}

fn construct(
    n: &Nonlinearity,
    q: &WeightProfile,
    kind: ConnectionKind,
    delta: f64,
    opts: &ConnectionOptions,
) -> Result<(f64, OrbitSegment)> {
    let r: ConnectionResult = match kind {
        ConnectionKind::Heteroclinic => find_heteroclinic(n, q, delta, opts)?,
        ConnectionKind::Homoclinic => find_homoclinic(n, q, delta, opts)?,
    };
    match (r.rho_star, r.profile) {
        (Some(rho), Some(p)) => Ok((rho, p)),
        _ => Err(Error::Undetermined(format!(
            "no {} found at δ = {delta}: {}",
            match kind {
                ConnectionKind::Heteroclinic => "heteroclinic",
                ConnectionKind::Homoclinic => "homoclinic",
            },
            r.diagnostics.join("; ")
        ))),
    }
}

fn window_grid(window: [f64; 2]) -> impl Iterator<Item = f64> {
    let h = (window[1] - window[0]) / (WINDOW_POINTS - 1) as f64;
    (0..WINDOW_POINTS).map(move |i| window[0] + h * i as f64)
}

/// `sup |v − L|` over the window grid and the profile's own samples in it.
pub fn sup_distance(profile: &OrbitSegment, limit: &LimitProfile, window: [f64; 2]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for t in window_grid(window) {
        let v = profile
            .value_at(t)
            .ok_or_else(|| Error::domain(format!("profile does not cover t = {t}")))?;
        sup = sup.max((v - limit.value(t)).abs());
    }
    for s in profile.samples.iter().filter(|s| s.t >= window[0] && s.t <= window[1]) {
        sup = sup.max((s.v - limit.value(s.t)).abs());
    }
    Ok(sup)
}

fn flattening(profile: &OrbitSegment, level: f64, window: [f64; 2]) -> f64 {
    window_grid(window)
        .filter_map(|t| profile.value_at(t))
        .chain(profile.samples.iter().filter(|s| s.t >= window[0] && s.t <= window[1]).map(|s| s.v))
        .fold(0.0, |m, v| m.max((v - level).abs()))
}

fn slope_at(profile: &OrbitSegment, t: f64) -> f64 {
    let s = &profile.samples;
    let i = s.partition_point(|p| p.t <= t).clamp(1, s.len() - 1);
    let (a, b) = (s[i - 1], s[i]);
    let x = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
    a.slope() + x * (b.slope() - a.slope())
}

/// Builds the connection for every `δ` and compares it with the limit
/// profiles. The existence conditions do not depend on `δ`.
pub fn delta_sweep(
    n: &Nonlinearity,
    q: &WeightProfile,
    kind: ConnectionKind,
    deltas: &[f64],
    opts: &ConnectionOptions,
) -> Result<SweepReport> {
    if deltas.is_empty() {
        return Err(Error::domain("at least one δ is required"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::domain(format!("δ must be positive, got {d}")));
    }
    let mut deltas = deltas.to_vec();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let t0 = q.t0;
    let window = [t0 - SWEEP_HALF_WINDOW, t0 + SWEEP_HALF_WINDOW];
    let opts = ConnectionOptions { window: Some(opts.window.unwrap_or(0.0).max(SWEEP_HALF_WINDOW + 0.5)), ..opts.clone() };
    let built: Vec<(f64, OrbitSegment)> =
        deltas.par_iter().map(|&d| construct(n, q, kind, d, &opts)).collect::<Result<_>>()?;
    let rhos: Vec<f64> = built.iter().map(|b| b.0).collect();
    let m = rhos.len();
    let v_star = if m >= 2 {
        let (d1, d2) = (deltas[m - 1], deltas[m - 2]);
        let (r1, r2) = (rhos[m - 1], rhos[m - 2]);
        r1 - d1 * (r2 - r1) / (d2 - d1)
    } else {
        rhos[0]
    };
    let spread = (v_star - rhos[m - 1]).abs();
    // A homoclinic glued at its peak has v_δ(t₀) = v₀ for every δ; its
    // tent is anchored the same way.
    let top = match kind {
        ConnectionKind::Heteroclinic => n.alpha,
        ConnectionKind::Homoclinic => n.v0(),
    };
    let v_star_clamped = v_star.clamp(f64::MIN_POSITIVE, top);
    let limit = match kind {
        ConnectionKind::Heteroclinic => limit_profile_heteroclinic(v_star_clamped, t0),
        ConnectionKind::Homoclinic => limit_profile_homoclinic(v_star_clamped, n.v0(), t0),
    };
    let t_mid = match kind {
        ConnectionKind::Heteroclinic => t0 - v_star_clamped + 0.5,
        ConnectionKind::Homoclinic => t0 - v_star_clamped + 0.5 * n.v0(),
    };
    let mut sup_distances = Vec::with_capacity(m);
    let mut flat = Vec::with_capacity(m);
    let mut ramp_slopes = Vec::with_capacity(m);
    let mut peaks = Vec::with_capacity(m);
    for (rho, profile) in &built {
        sup_distances.push(sup_distance(profile, &limit, window)?);
        flat.push(flattening(profile, *rho, window));
        ramp_slopes.push(slope_at(profile, t_mid));
        peaks.push(profile.max_v());
    }
    Ok(SweepReport {
        kind,
        deltas,
        v_star_estimates: rhos,
        sup_distances,
        flattening: flat,
        ramp_slopes,
        peaks,
        window,
        v_star,
        spread,
        profiles: built.into_iter().map(|b| b.1).collect(),
    })
}
