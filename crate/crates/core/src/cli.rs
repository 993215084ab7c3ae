//! Command-line front end: a declarative scenario file, one command per run,
//! `summary.json` plus plot-ready tables in the output directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::asymptotics::{delta_sweep, limit_profile_heteroclinic, limit_profile_homoclinic, ConnectionKind};
use crate::autonomous::{
    autonomous_heteroclinic_orbit, autonomous_special_orbit, limit_profile_autonomous, period_t, AutonomousScenario,
    LimitProfile,
};
use crate::connections::{
    certify_nonexistence, classify_stepwise, energy_level_curve, find_definitively_periodic, find_heteroclinic,
    find_homoclinic, Classification, ConnectionOptions, ConnectionResult, LevelAnchor,
};
use crate::dynamics::OrbitSegment;
use crate::error::{Error, Result};
use crate::nonlinearity::{Balance, Nonlinearity, NonlinearityKind};
use crate::shooting::{halfline_solution, kappa_branch, shoot_mixed_left, shoot_mixed_right, HalfLine, ShootResult};
use crate::weight::{Payload, Piece, WeightProfile, WeightSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    AutonomousOrbit,
    Period,
    Shoot,
    Halfline,
    KappaBranch,
    Heteroclinic,
    Homoclinic,
    PeriodicTail,
    ClassifyStepwise,
    Nonexistence,
    Sweep,
    LimitProfile,
    /// Graphs of `f`, `F`, `F_γ` and energy level lines.
    Curves,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

/// A number or a list of numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Scalars::One(x) => vec![*x],
            Scalars::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum WeightConfig {
    Constant {
        value: f64,
    },
    /// `c1` before `t0`, `c2` from `t0` on.
    Stepwise {
        c1: f64,
        c2: f64,
        #[serde(default)]
        t0: f64,
    },
    LeftVarying {
        payload: Payload,
        c: f64,
        #[serde(default)]
        t0: f64,
    },
    RightVarying {
        c: f64,
        payload: Payload,
        #[serde(default)]
        t0: f64,
    },
    Pieces {
        t0: f64,
        pieces: Vec<Piece>,
    },
}

impl WeightConfig {
    pub fn build(&self) -> Result<WeightProfile> {
        match self {
            WeightConfig::Constant { value } => WeightProfile::from_spec(WeightSpec {
                t0: 0.0,
                pieces: vec![Piece { from: None, to: None, payload: Payload::Constant { value: *value } }],
            }),
            WeightConfig::Stepwise { c1, c2, t0 } => WeightProfile::from_spec(WeightSpec {
                t0: *t0,
                pieces: vec![
                    Piece { from: None, to: Some(*t0), payload: Payload::Constant { value: *c1 } },
                    Piece { from: Some(*t0), to: None, payload: Payload::Constant { value: *c2 } },
                ],
            }),
            WeightConfig::LeftVarying { payload, c, t0 } => WeightProfile::left_varying(payload.clone(), *c, *t0),
            WeightConfig::RightVarying { c, payload, t0 } => WeightProfile::right_varying(*c, payload.clone(), *t0),
            WeightConfig::Pieces { t0, pieces } => {
                WeightProfile::from_spec(WeightSpec { t0: *t0, pieces: pieces.clone() })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Grid {
    /// `points` interior points of `]from, to[`.
    pub fn interior(&self) -> Vec<f64> {
        let m = self.points;
        (1..=m).map(|i| self.from + (self.to - self.from) * i as f64 / (m + 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum ProfileScenario {
    Gamma0Delta0,
    FixedGammaDelta0 {
        gamma: f64,
    },
    Delta0Gamma0,
    BalancedHeteroclinic,
    Heteroclinic {
        v_star: f64,
        #[serde(default)]
        t0: f64,
    },
    Homoclinic {
        v_star: f64,
        #[serde(default)]
        t0: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Scalars>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<HalfLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ConnectionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ProfileScenario>,
    /// Weights of the level lines drawn by `curves`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Scalars>,
    /// Points per sampled curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out_dir(), format: Format::Both }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub nonlinearity: NonlinearityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Scalars>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    /// TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn deltas(&self) -> Result<Vec<f64>> {
        let d = self.delta.as_ref().ok_or_else(|| Error::Config("delta is required".into()))?.values();
        if d.is_empty() {
            return Err(Error::Config("delta list is empty".into()));
        }
        if let Some(x) = d.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("delta must be positive, got {x}")));
        }
        Ok(d)
    }

    fn delta(&self) -> Result<f64> {
        let d = self.deltas()?;
        if d.len() != 1 {
            return Err(Error::Config("this command takes a single delta".into()));
        }
        Ok(d[0])
    }

    fn gammas(&self, default: Option<f64>) -> Result<Vec<f64>> {
        let g = match (&self.params.gamma, default) {
            (Some(g), _) => g.values(),
            (None, Some(d)) => vec![d],
            (None, None) => return Err(Error::Config("params.gamma is required".into())),
        };
        if g.is_empty() {
            return Err(Error::Config("params.gamma is empty".into()));
        }
        Ok(g)
    }

    fn weight(&self) -> Result<WeightProfile> {
        self.weight.as_ref().ok_or_else(|| Error::Config("weight is required".into()))?.build()
    }

    fn rho(&self) -> Result<f64> {
        self.params.rho.ok_or_else(|| Error::Config("params.rho is required".into()))
    }

    fn connection_options(&self) -> ConnectionOptions {
        let d = ConnectionOptions::default();
        ConnectionOptions {
            grid_points: self.params.grid_points.unwrap_or(d.grid_points),
            window: self.params.window.or(d.window),
            exit_horizon: self.params.exit_horizon.unwrap_or(d.exit_horizon),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "minkowski-orbits", version, about = "Connecting orbits of δ(φ(v'))' + q(t)f(v) = 0")]
pub struct Cli {
    /// Overrides the command named in the configuration.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Scenario file (TOML, or JSON with a `.json` extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table format; overrides `output.format`.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for grid evaluations.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Seed recorded with the run for randomized checks.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => 1,
        Error::HypothesisViolation { .. } => 2,
        Error::Undetermined(_) => 3,
        _ => 4,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::NoRoot(_) => "no-root",
        Error::HypothesisViolation { .. } => "hypothesis-violation",
        Error::StepSizeUnderflow { .. } => "step-size-underflow",
        Error::MonotonicityLost { .. } => "monotonicity-lost",
        Error::BracketingFailure(_) => "bracketing-failure",
        Error::NoConvergence { .. } => "no-convergence",
        Error::DegenerateConstant(_) => "degenerate-constant",
        Error::DegenerateCase(_) => "degenerate-case",
        Error::Undetermined(_) => "undetermined",
        Error::Numerical(_) => "numerical",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

/// Pretty JSON with every float written as `{:.16e}`, so identical runs
/// give identical bytes.
struct Fixed17(PrettyFormatter<'static>);

impl Formatter for Fixed17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Numerical(format!("JSON serialization: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

/// Writes tables in the configured format and records their names.
struct Sink {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Sink {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, stem: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        if matches!(self.format, Format::Csv | Format::Both) {
            let mut csv = columns.join(",");
            csv.push('\n');
            for r in rows {
                let cells: Vec<String> = r.iter().map(|x| format!("{x:.16e}")).collect();
                csv.push_str(&cells.join(","));
                csv.push('\n');
            }
            self.write(&format!("{stem}.csv"), &csv)?;
        }
        if matches!(self.format, Format::Json | Format::Both) {
            let v = json!({ "columns": columns, "rows": rows });
            self.write(&format!("{stem}.json"), &to_json_string(&v)?)?;
        }
        Ok(())
    }

    fn orbit(&mut self, stem: &str, orbit: &OrbitSegment) -> Result<()> {
        let rows: Vec<Vec<f64>> = orbit.samples.iter().map(|p| vec![p.t, p.v, p.w, p.slope()]).collect();
        self.table(stem, &["t", "v", "w", "vprime"], &rows)
    }
}

/// Compact decimal label for file names.
fn label(x: f64) -> String {
    format!("{x}")
}

struct Outcome {
    outputs: Value,
    undetermined: bool,
}

impl Outcome {
    fn done(outputs: Value) -> Self {
        Outcome { outputs, undetermined: false }
    }
}

fn shot_json(r: &ShootResult) -> Value {
    json!({
        "omega": r.omega,
        "rho": r.rho,
        "terminal_w": r.terminal_w,
        "terminal_slope": crate::dynamics::phi_inv(r.terminal_w),
        "monotone_certificate": r.monotone_certificate,
        "horizon": r.horizon,
        "residual": r.residual,
    })
}

fn connection_json(r: &ConnectionResult) -> Value {
    json!({
        "classification": r.classification.name(),
        "classification_detail": to_value(&r.classification),
        "rho_star": r.rho_star,
        "glue_jump": r.glue_jump,
        "conditions": to_value(&r.conditions),
        "diagnostics": r.diagnostics,
    })
}

fn limit_profile_rows(p: &LimitProfile, lo: f64, hi: f64, samples: usize) -> Vec<Vec<f64>> {
    let m = samples.max(2);
    (0..m)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (m - 1) as f64;
            vec![t, p.value(t)]
        })
        .collect()
}

fn execute(command: Command, cfg: &ScenarioConfig, n: &Nonlinearity, sink: &mut Sink) -> Result<Outcome> {
    let p = &cfg.params;
    match command {
        Command::AutonomousOrbit => {
            let half = p.half_window.unwrap_or(10.0);
            let mut runs = Vec::new();
            for &delta in &cfg.deltas()? {
                for &gamma in &cfg.gammas(Some(0.0))? {
                    let orbit = match n.balance {
                        Balance::Positive => autonomous_special_orbit(n, delta, gamma, half)?,
                        Balance::Balanced => autonomous_heteroclinic_orbit(n, delta, gamma, half)?,
                    };
                    let stem = format!("orbit_gamma{}_delta{}", label(gamma), label(delta));
                    sink.orbit(&stem, &orbit)?;
                    let min_v = orbit.samples.iter().map(|s| s.v).fold(f64::INFINITY, f64::min);
                    let half_period = if gamma > 0.0 { Some(period_t(n, gamma, delta)?) } else { None };
                    runs.push(json!({
                        "gamma": gamma,
                        "delta": delta,
                        "table": stem,
                        "max_v": orbit.max_v(),
                        "min_v": min_v,
                        "half_period": half_period,
                        "termination": to_value(&orbit.termination),
                    }));
                }
            }
            Ok(Outcome::done(json!({ "orbits": runs })))
        }
        Command::Period => {
            let mut rows = Vec::new();
            let mut runs = Vec::new();
            for &delta in &cfg.deltas()? {
                for &gamma in &cfg.gammas(None)? {
                    let zeta = n.zeta(gamma)?;
                    let t = period_t(n, gamma, delta)?;
                    rows.push(vec![gamma, delta, zeta, t]);
                    runs.push(json!({
                        "gamma": gamma,
                        "delta": delta,
                        "zeta": zeta,
                        "half_period": t,
                        "small_delta_limit": zeta - gamma,
                    }));
                }
            }
            sink.table("periods", &["gamma", "delta", "zeta", "half_period"], &rows)?;
            Ok(Outcome::done(json!({ "periods": runs })))
        }
        Command::Shoot => {
            let q = cfg.weight()?;
            let delta = cfg.delta()?;
            let horizon = p.horizon.ok_or_else(|| Error::Config("params.horizon is required".into()))?;
            let rho = cfg.rho()?;
            let r = match p.side.unwrap_or(HalfLine::Left) {
                HalfLine::Left => shoot_mixed_left(n, &q, delta, q.t0, horizon, rho)?,
                HalfLine::Right => shoot_mixed_right(n, &q, delta, q.t0, horizon, rho)?,
            };
            sink.orbit("orbit", &r.orbit)?;
            Ok(Outcome::done(shot_json(&r)))
        }
        Command::Halfline => {
            let q = cfg.weight()?;
            let delta = cfg.delta()?;
            let r = halfline_solution(n, &q, delta, q.t0, p.side.unwrap_or(HalfLine::Left), cfg.rho()?)?;
            sink.orbit("orbit", &r.orbit)?;
            Ok(Outcome::done(shot_json(&r)))
        }
        Command::KappaBranch => {
            let q = cfg.weight()?;
            let delta = cfg.delta()?;
            let side = p.side.unwrap_or(HalfLine::Left);
            let grid = match &p.rho_grid {
                Some(g) if g.points > 0 => g.interior(),
                Some(_) => return Err(Error::Config("params.rho_grid needs points > 0".into())),
                None => {
                    let (lo, hi) = match side {
                        HalfLine::Left => (0.0, n.alpha),
                        HalfLine::Right => (n.alpha, 1.0),
                    };
                    Grid { from: lo, to: hi, points: p.grid_points.unwrap_or(50) }.interior()
                }
            };
            let points = kappa_branch(n, &q, delta, q.t0, side, &grid);
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|k| vec![k.rho, k.kappa, f64::from(u8::from(k.converged)), k.lower_bound, k.upper_bound])
                .collect();
            sink.table("kappa", &["rho", "kappa", "converged", "lower_bound", "upper_bound"], &rows)?;
            let unconverged = points.iter().filter(|k| !k.converged).count();
            let bounds_hold = points
                .iter()
                .filter(|k| k.converged)
                .all(|k| k.kappa >= k.lower_bound * (1.0 - 1e-9) && k.kappa <= k.upper_bound * (1.0 + 1e-9));
            Ok(Outcome::done(json!({
                "points": points.len(),
                "unconverged": unconverged,
                "bounds_hold": bounds_hold,
            })))
        }
        Command::Heteroclinic | Command::Homoclinic | Command::PeriodicTail => {
            let q = cfg.weight()?;
            let opts = cfg.connection_options();
            let mut runs = Vec::new();
            let mut undetermined = false;
            for &delta in &cfg.deltas()? {
                let r = match command {
                    Command::Heteroclinic => find_heteroclinic(n, &q, delta, &opts)?,
                    Command::Homoclinic => find_homoclinic(n, &q, delta, &opts)?,
                    _ => find_definitively_periodic(n, &q, delta, &opts)?,
                };
                let mut entry = connection_json(&r);
                entry["delta"] = json!(delta);
                if let Some(profile) = &r.profile {
                    let stem = format!("profile_delta{}", label(delta));
                    sink.orbit(&stem, profile)?;
                    entry["table"] = json!(stem);
                }
                undetermined |= r.classification == Classification::Undetermined;
                runs.push(entry);
            }
            Ok(Outcome { outputs: json!({ "runs": runs }), undetermined })
        }
        Command::ClassifyStepwise => {
            let (c1, c2) = match &cfg.weight {
                Some(WeightConfig::Stepwise { c1, c2, .. }) => (*c1, *c2),
                _ => return Err(Error::Config("classify-stepwise needs a stepwise weight".into())),
            };
            let mut runs = Vec::new();
            for &delta in &cfg.deltas()? {
                let r = classify_stepwise(n, c1, c2, delta)?;
                runs.push(json!({
                    "delta": delta,
                    "classification": r.classification.name(),
                    "classification_detail": to_value(&r.classification),
                    "witness_rho": r.witness_rho,
                }));
            }
            let first = runs[0]["classification"].clone();
            Ok(Outcome::done(json!({ "c1": c1, "c2": c2, "classification": first, "runs": runs })))
        }
        Command::Nonexistence => {
            let q = cfg.weight()?;
            let delta = cfg.delta()?;
            let r = certify_nonexistence(n, &q, delta)?;
            Ok(Outcome { undetermined: !r.certified, outputs: to_value(&r) })
        }
        Command::Sweep => {
            let q = cfg.weight()?;
            let kind = p.kind.unwrap_or(ConnectionKind::Heteroclinic);
            let r = delta_sweep(n, &q, kind, &cfg.deltas()?, &cfg.connection_options())?;
            for (d, profile) in r.deltas.iter().zip(&r.profiles) {
                sink.orbit(&format!("sweep_delta{}", label(*d)), profile)?;
            }
            let mut out = to_value(&r);
            out["distances_nonincreasing"] = json!(r.distances_nonincreasing());
            out["flattening_decreases_with_delta"] = json!(r.flattening_decreases_with_delta());
            Ok(Outcome::done(out))
        }
        Command::LimitProfile => {
            let scenario = p.scenario.clone().ok_or_else(|| Error::Config("params.scenario is required".into()))?;
            let profile = match scenario {
                ProfileScenario::Gamma0Delta0 => limit_profile_autonomous(n, AutonomousScenario::Gamma0Delta0)?,
                ProfileScenario::FixedGammaDelta0 { gamma } => {
                    limit_profile_autonomous(n, AutonomousScenario::FixedGammaDelta0 { gamma })?
                }
                ProfileScenario::Delta0Gamma0 => limit_profile_autonomous(n, AutonomousScenario::Delta0Gamma0)?,
                ProfileScenario::BalancedHeteroclinic => {
                    limit_profile_autonomous(n, AutonomousScenario::BalancedHeteroclinic)?
                }
                ProfileScenario::Heteroclinic { v_star, t0 } => {
                    check_v_star(n, v_star)?;
                    limit_profile_heteroclinic(v_star, t0)
                }
                ProfileScenario::Homoclinic { v_star, t0 } => {
                    check_v_star(n, v_star)?;
                    limit_profile_homoclinic(v_star, n.v0(), t0)
                }
            };
            profile.validate()?;
            let half = p.half_window.unwrap_or(5.0);
            let rows = limit_profile_rows(&profile, -half, half, p.samples.unwrap_or(1001));
            sink.table("limit_profile", &["t", "v"], &rows)?;
            let peak = rows.iter().map(|r| r[1]).fold(f64::NEG_INFINITY, f64::max);
            Ok(Outcome::done(json!({ "profile": to_value(&profile), "peak": peak })))
        }
        Command::Curves => curves(cfg, n, sink),
    }
}

fn check_v_star(n: &Nonlinearity, v_star: f64) -> Result<()> {
    if !(v_star > 0.0 && v_star <= n.alpha) {
        return Err(Error::Config(format!("v_star = {v_star} must lie in ]0, α = {}]", n.alpha)));
    }
    Ok(())
}

/// `f` and `F` on `[0, 1]`, `F_γ` per `γ`, and the upper halves of the
/// level lines through `(1, 0)` and `(v₀, 0)` per weight `c`.
fn curves(cfg: &ScenarioConfig, n: &Nonlinearity, sink: &mut Sink) -> Result<Outcome> {
    let m = cfg.params.samples.unwrap_or(1001).max(2);
    let grid: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let rows: Vec<Vec<f64>> = grid.iter().map(|&s| vec![s, n.eval_f(s), n.eval_big_f(s)]).collect();
    sink.table("f", &["s", "f", "F"], &rows)?;
    let mut gammas = Vec::new();
    if let Some(g) = &cfg.params.gamma {
        for gamma in g.values() {
            let rows: Vec<Vec<f64>> = grid.iter().map(|&v| vec![v, n.f_gamma(gamma, v)]).collect();
            sink.table(&format!("f_gamma{}", label(gamma)), &["v", "F_gamma"], &rows)?;
            let zeta = if gamma > 0.0 && gamma < n.alpha { Some(n.zeta(gamma)?) } else { None };
            gammas.push(json!({ "gamma": gamma, "F_gamma_level": n.eval_big_f(gamma), "zeta": zeta }));
        }
    }
    let mut levels = Vec::new();
    if let Some(c) = &cfg.params.c {
        let delta = cfg.delta()?;
        for c in c.values() {
            let mut anchors = vec![("v0", LevelAnchor::ThroughV0)];
            if n.balance == Balance::Positive {
                anchors.push(("one", LevelAnchor::ThroughOne));
            }
            for (name, anchor) in anchors {
                let curve = energy_level_curve(n, delta, c, anchor)?;
                let rows: Vec<Vec<f64>> =
                    grid.iter().filter_map(|&v| curve.eval(v).ok().map(|w| vec![v, w])).collect();
                let stem = format!("level_{name}_c{}", label(c));
                sink.table(&stem, &["v", "w"], &rows)?;
                levels.push(json!({ "c": c, "through": name, "table": stem, "w_at_0": curve.eval(0.0).ok() }));
            }
        }
    }
    Ok(Outcome::done(json!({
        "alpha": n.alpha,
        "v0": n.v0(),
        "F_alpha": n.eval_big_f(n.alpha),
        "F_one": n.f_one(),
        "gammas": gammas,
        "levels": levels,
    })))
}

fn write_summary(dir: &Path, summary: &Value) -> Result<()> {
    fs::write(dir.join("summary.json"), to_json_string(summary)?)?;
    Ok(())
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    run_cli(&cli)
}

pub fn run_cli(cli: &Cli) -> i32 {
    let started = Instant::now();
    let mut cfg = match ScenarioConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    let command = match (cli.command, cfg.command) {
        (Some(a), Some(b)) if a != b => {
            eprintln!("error: configuration error: command {} conflicts with {} in the configuration", a.name(), b.name());
            return 1;
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => {
            eprintln!("error: configuration error: no command given");
            return 1;
        }
    };
    cfg.command = Some(command);
    let dir = cfg.output.dir.clone();
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: configuration error: output directory {}: {e}", dir.display());
        return 1;
    }
    // Any failure to build f is a configuration error.
    let n = match Nonlinearity::new(cfg.nonlinearity.clone()) {
        Ok(n) => n,
        Err(e) => return fail(&dir, command, &cfg, cli.seed, Error::Config(e.to_string())),
    };
    if let Some(w) = &cfg.weight {
        if let Err(e) = w.build() {
            return fail(&dir, command, &cfg, cli.seed, Error::Config(e.to_string()));
        }
    }
    let threads = cli.parallel.unwrap_or(1).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(&dir, command, &cfg, cli.seed, Error::Config(e.to_string())),
    };
    let mut sink = Sink { dir: dir.clone(), format: cfg.output.format, files: Vec::new() };
    let result = pool.install(|| execute(command, &cfg, &n, &mut sink));
    let elapsed = started.elapsed().as_secs_f64();
    let code = match result {
        Ok(outcome) => {
            let status = if outcome.undetermined { "undetermined" } else { "ok" };
            let summary = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command.name(),
                "status": status,
                "seed": cli.seed,
                "config": to_value(&cfg),
                "outputs": outcome.outputs,
                "files": sink.files,
            });
            if let Err(e) = write_summary(&dir, &summary) {
                eprintln!("error: {e}");
                return 1;
            }
            if outcome.undetermined {
                eprintln!("{}: classification undetermined", command.name());
                3
            } else {
                0
            }
        }
        Err(e) => return fail(&dir, command, &cfg, cli.seed, e),
    };
    let timings = json!({ "command": command.name(), "elapsed_seconds": elapsed, "threads": threads });
    let _ = fs::write(dir.join("timings.json"), to_json_string(&timings).unwrap_or_default());
    code
}

fn fail(dir: &Path, command: Command, cfg: &ScenarioConfig, seed: u64, e: Error) -> i32 {
    let code = exit_code(&e);
    eprintln!("error: {e}");
    let mut diagnostic = json!({ "kind": error_kind(&e), "message": e.to_string() });
    if let Error::NoConvergence { trend, .. } = &e {
        diagnostic["trend"] = json!(trend);
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "status": "error",
        "exit_code": code,
        "seed": seed,
        "config": to_value(cfg),
        "error": diagnostic,
    });
    let _ = write_summary(dir, &summary);
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioConfig {
        toml::from_str(
            r#"
            command = "heteroclinic"
            delta = [0.1, 0.01]
            [nonlinearity]
            kind = "cubic-bistable"
            a = 0.4
            [weight]
            shape = "left-varying"
            c = 0.3
            payload = { type = "abs-sine", base = 1.0, amplitude = 0.5, samples_per_period = 64 }
            [params]
            rho_grid = { from = 0.0, to = 0.4, points = 20 }
            scenario = { scenario = "heteroclinic", v_star = 0.2 }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_round_trips_through_fixed_json() {
        let cfg = sample();
        let text = to_json_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
        assert!(text.contains("1.0000000000000001e-1"));
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&json!({ "x": 1.0 / 3.0, "n": 3 })).unwrap();
        assert!(s.contains("3.3333333333333331e-1"), "{s}");
        assert!(s.contains("\"n\": 3"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::hypothesis("f2", "x")), 2);
        assert_eq!(exit_code(&Error::Undetermined("x".into())), 3);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"nonlinearity": {"kind": "cubic-bistable", "a": 0.4}, "dleta": 0.1}"#;
        assert!(matches!(ScenarioConfig::from_json(bad), Err(Error::Config(_))));
    }
}
