//! The reaction term `f`, its potential `F(v) = ∫₀ᵛ f`, and the structural
//! roots `α ≤ β`, `v₀` and `ζ(γ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, gauss_legendre};

const SCAN_SAMPLES: usize = 10_000;
const BALANCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `f(s) = s(1−s)(s−a)`.
    CubicBistable { a: f64 },
    /// Coefficients in ascending degree.
    Polynomial { coefficients: Vec<f64> },
    /// Sorted `(s, f(s))` nodes spanning `[0, 1]`, linearly interpolated.
    Tabulated { nodes: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    /// `F(1) > 0`.
    Positive,
    /// `F(1) = 0`.
    Balanced,
}

#[derive(Clone, Debug)]
enum Repr {
    Cubic { a: f64 },
    Poly { coef: Vec<f64>, anti: Vec<f64>, gl: (Vec<f64>, Vec<f64>) },
    Table { s: Vec<f64>, f: Vec<f64>, cum: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    repr: Repr,
    pub alpha: f64,
    pub beta: f64,
    pub lipschitz: f64,
    pub balance: Balance,
    v0: f64,
    f_one: f64,
}

impl Nonlinearity {
    /// Builds `f` and checks the sign pattern `f < 0` on `]0,α[`, `f > 0` on
    /// `]β,1[`, `f(0) = f(1) = 0`, and `F(1) ≥ 0`.
    pub fn new(kind: NonlinearityKind) -> Result<Self> {
        let mut n = Self::unchecked(kind)?;
        n.validate()?;
        n.v0 = n.find_v0()?;
        Ok(n)
    }

    /// Builds `f` without enforcing the sign pattern. Structural roots that
    /// cannot be located are left as NaN.
    pub fn unchecked(kind: NonlinearityKind) -> Result<Self> {
        let repr = match &kind {
            NonlinearityKind::CubicBistable { a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(Error::hypothesis("f1", format!("cubic root a = {a} must lie in ]0,1[")));
                }
                Repr::Cubic { a: *a }
            }
            NonlinearityKind::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("polynomial needs finite coefficients".into()));
                }
                let mut anti = vec![0.0];
                anti.extend(coefficients.iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)));
                let gl = gauss_legendre(coefficients.len().div_ceil(2) + 1);
                Repr::Poly { coef: coefficients.clone(), anti, gl }
            }
            NonlinearityKind::Tabulated { nodes } => {
                if nodes.len() < 2 {
                    return Err(Error::Config("tabulated f needs at least two nodes".into()));
                }
                let s: Vec<f64> = nodes.iter().map(|p| p[0]).collect();
                let f: Vec<f64> = nodes.iter().map(|p| p[1]).collect();
                if s.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("tabulated nodes must strictly increase".into()));
                }
                if s[0] != 0.0 || *s.last().unwrap() != 1.0 {
                    return Err(Error::Config("tabulated nodes must span [0, 1]".into()));
                }
                let mut cum = vec![0.0; s.len()];
                for i in 1..s.len() {
                    cum[i] = cum[i - 1] + 0.5 * (f[i] + f[i - 1]) * (s[i] - s[i - 1]);
                }
                Repr::Table { s, f, cum }
            }
        };
        let mut n = Nonlinearity {
            kind,
            repr,
            alpha: f64::NAN,
            beta: f64::NAN,
            lipschitz: 0.0,
            balance: Balance::Positive,
            v0: f64::NAN,
            f_one: 0.0,
        };
        n.f_one = n.eval_big_f(1.0);
        n.balance = if n.f_one.abs() <= BALANCE_TOL { Balance::Balanced } else { Balance::Positive };
        n.lipschitz = n.estimate_lipschitz();
        if let Some((a, b)) = n.locate_interior_zeros() {
            n.alpha = a;
            n.beta = b;
        }
        if n.alpha.is_finite() {
            n.v0 = n.find_v0().unwrap_or(f64::NAN);
        }
        Ok(n)
    }

    pub fn cubic(a: f64) -> Result<Self> {
        Self::new(NonlinearityKind::CubicBistable { a })
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    /// `u ↦ −f(1 − u)`: the reaction term seen by `1 − v` after a time
    /// reflection. Its potential is `F(1 − u) − F(1)`, so it is built
    /// without the sign checks on `F`.
    pub fn reflected(&self) -> Result<Self> {
        let kind = match &self.kind {
            NonlinearityKind::CubicBistable { a } => NonlinearityKind::CubicBistable { a: 1.0 - a },
            NonlinearityKind::Polynomial { coefficients } => {
                // −p(1 − u) expanded by repeated synthetic shifts.
                let d = coefficients.len();
                let mut c: Vec<f64> = coefficients.clone();
                for i in 0..d {
                    for j in (i..d - 1).rev() {
                        c[j] += c[j + 1];
                    }
                }
                let coefficients =
                    c.iter().enumerate().map(|(k, x)| if k % 2 == 0 { -x } else { *x }).collect();
                NonlinearityKind::Polynomial { coefficients }
            }
            NonlinearityKind::Tabulated { nodes } => NonlinearityKind::Tabulated {
                nodes: nodes.iter().rev().map(|p| [1.0 - p[0], -p[1]]).collect(),
            },
        };
        Self::unchecked(kind)
    }

    fn validate(&self) -> Result<()> {
        let scale = 1.0 + self.lipschitz;
        if self.eval_f(0.0).abs() > 1e-12 * scale || self.raw_f(1.0).abs() > 1e-12 * scale {
            return Err(Error::hypothesis("f1", "f must vanish at 0 and 1"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::hypothesis(
                "f1",
                "f must be negative near 0, positive near 1, with a sign change in ]0,1[",
            ));
        }
        if self.f_one < -BALANCE_TOL {
            return Err(Error::hypothesis("f2", format!("F(1) = {:e} < 0", self.f_one)));
        }
        Ok(())
    }

    /// Scans for the first and last interior zero; `None` when the sign
    /// pattern fails.
    fn locate_interior_zeros(&self) -> Option<(f64, f64)> {
        let h = 1.0 / SCAN_SAMPLES as f64;
        let vals: Vec<f64> = (0..=SCAN_SAMPLES).map(|i| self.raw_f(i as f64 * h)).collect();
        let interior = 1..SCAN_SAMPLES;
        let ia = interior.clone().find(|&i| vals[i] >= 0.0)?;
        let ib = interior.rev().find(|&i| vals[i] <= 0.0)?;
        if ia == 1 || ib == SCAN_SAMPLES - 1 {
            return None;
        }
        let refine = |lo: usize, hi: usize| -> Option<f64> {
            if vals[lo] == 0.0 {
                return Some(lo as f64 * h);
            }
            if vals[hi] == 0.0 {
                return Some(hi as f64 * h);
            }
            bisect(|s| self.raw_f(s), lo as f64 * h, hi as f64 * h).ok()
        };
        let alpha = refine(ia - 1, ia)?;
        if ib <= ia {
            return Some((alpha, alpha));
        }
        let beta = refine(ib, ib + 1)?;
        Some((alpha, beta.max(alpha)))
    }

    fn raw_f(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Cubic { a } => s * (1.0 - s) * (s - a),
            Repr::Poly { coef, .. } => horner(coef, s),
            Repr::Table { s: xs, f, .. } => {
                let i = segment(xs, s);
                let t = (s - xs[i]) / (xs[i + 1] - xs[i]);
                f[i] + t * (f[i + 1] - f[i])
            }
        }
    }

    /// `f(s)`, extended by zero outside `[0, 1]`.
    pub fn eval_f(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        self.raw_f(s)
    }

    /// `F(v) = ∫₀ᵛ f`.
    pub fn eval_big_f(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match &self.repr {
            Repr::Cubic { a } => v * v * (-a / 2.0 + v * ((1.0 + a) / 3.0 - v / 4.0)),
            Repr::Poly { anti, .. } => horner(anti, v),
            Repr::Table { s, f, cum } => {
                let i = segment(s, v);
                let dx = v - s[i];
                let slope = (f[i + 1] - f[i]) / (s[i + 1] - s[i]);
                cum[i] + dx * (f[i] + 0.5 * slope * dx)
            }
        }
    }

    /// `F(1)`.
    pub fn f_one(&self) -> f64 {
        self.f_one
    }

    /// `∫ₐᵇ f`, accurate relative to its own size even when `a` and `b`
    /// are close (a difference of `F` values is not).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        if hi <= lo {
            return 0.0;
        }
        let value = match &self.repr {
            Repr::Table { s, f, .. } => {
                let mut acc = 0.0;
                let mut x = lo;
                while x < hi {
                    let i = segment(s, x);
                    let end = s[i + 1].min(hi);
                    let fx = self.raw_f(x);
                    let fe = f[i] + (end - s[i]) / (s[i + 1] - s[i]) * (f[i + 1] - f[i]);
                    acc += 0.5 * (fx + fe) * (end - x);
                    if end <= x {
                        break;
                    }
                    x = end;
                }
                acc
            }
            _ => {
                let (nodes, weights) = match &self.repr {
                    Repr::Poly { gl, .. } => (gl.0.clone(), gl.1.clone()),
                    _ => gauss_legendre(3),
                };
                let c = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                h * nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * self.raw_f(c + h * x))
                    .sum::<f64>()
            }
        };
        sign * value
    }

    /// `F_γ(v) = F(v) − F(γ)`.
    pub fn f_gamma(&self, gamma: f64, v: f64) -> f64 {
        self.integral(gamma, v)
    }

    /// The unique zero of `F` in `]α, 1]`; exactly 1 in the balanced case.
    pub fn find_v0(&self) -> Result<f64> {
        if self.balance == Balance::Balanced {
            return Ok(1.0);
        }
        if !self.alpha.is_finite() {
            return Err(Error::NoRoot("α is undefined".into()));
        }
        let fa = self.eval_big_f(self.alpha);
        if fa >= 0.0 || self.f_one <= 0.0 {
            return Err(Error::NoRoot(format!(
                "F does not change sign on ]α, 1] (F(α) = {fa:e}, F(1) = {:e})",
                self.f_one
            )));
        }
        bisect(|v| self.eval_big_f(v), self.alpha, 1.0)
    }

    /// Cached `v₀`.
    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// `ζ(γ)`: the zero of `F_γ` in `]α, v₀]`.
    pub fn zeta(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0 && gamma < self.alpha) {
            return Err(Error::domain(format!("γ = {gamma} must lie in [0, α = {}[", self.alpha)));
        }
        if gamma == 0.0 {
            return Ok(self.v0);
        }
        self.level_preimage_right(self.eval_big_f(gamma))
    }

    /// The `v ∈ [0, α]` with `F(v) = level`, for `F(α) ≤ level ≤ 0`.
    pub fn level_preimage_left(&self, level: f64) -> Result<f64> {
        let fa = self.eval_big_f(self.alpha);
        if !(level <= 0.0 && level >= fa) {
            return Err(Error::domain(format!("level {level:e} outside [F(α), 0]")));
        }
        if level == 0.0 {
            return Ok(0.0);
        }
        bisect(|v| self.eval_big_f(v) - level, 0.0, self.alpha)
    }

    /// The `v ∈ [β, v₀]` with `F(v) = level`, for `F(β) ≤ level ≤ 0`.
    pub fn level_preimage_right(&self, level: f64) -> Result<f64> {
        let fb = self.eval_big_f(self.beta);
        if !(level <= 0.0 && level >= fb) {
            return Err(Error::domain(format!("level {level:e} outside [F(β), 0]")));
        }
        if level == 0.0 {
            return Ok(self.v0);
        }
        bisect(|v| self.eval_big_f(v) - level, self.beta, self.v0)
    }

    /// Lipschitz constant of `f` on `[0, 1]`.
    pub fn estimate_lipschitz(&self) -> f64 {
        match &self.repr {
            Repr::Table { s, f, .. } => s
                .windows(2)
                .zip(f.windows(2))
                .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max),
            Repr::Cubic { a } => {
                let coef = [0.0, -a, 1.0 + a, -1.0];
                poly_derivative_sup(&coef)
            }
            Repr::Poly { coef, .. } => poly_derivative_sup(coef),
        }
    }
}

fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(coef: &[f64]) -> Vec<f64> {
    coef.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

/// `max |p'|` on `[0, 1]`, attained at an endpoint or a zero of `p''`.
fn poly_derivative_sup(coef: &[f64]) -> f64 {
    let d1 = derivative(coef);
    if d1.is_empty() {
        return 0.0;
    }
    let d2 = derivative(&d1);
    let mut best = horner(&d1, 0.0).abs().max(horner(&d1, 1.0).abs());
    if !d2.is_empty() {
        let n = 4096;
        let h = 1.0 / n as f64;
        for i in 0..n {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (fa, fb) = (horner(&d2, a), horner(&d2, b));
            if fa == 0.0 {
                best = best.max(horner(&d1, a).abs());
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                if let Ok(r) = bisect(|x| horner(&d2, x), a, b) {
                    best = best.max(horner(&d1, r).abs());
                }
            }
        }
    }
    best
}

fn segment(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}
