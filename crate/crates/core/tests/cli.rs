use std::fs;
use std::path::Path;
use std::process::Command;

use minkowski_orbits::cli::{to_json_string, ScenarioConfig};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minkowski-orbits"))
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const CUBIC: &str = "[nonlinearity]\nkind = \"cubic-bistable\"\na = 0.4\n";

#[test]
fn equal_stepwise_weights_are_homoclinic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &format!("command = \"classify-stepwise\"\ndelta = 0.1\n{CUBIC}[weight]\nshape = \"stepwise\"\nc1 = 1.0\nc2 = 1.0\n"),
    );
    let out = tmp.path().join("out");
    let st = bin().arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["outputs"]["classification"], "homoclinic");
    assert_eq!(s["schema_version"], 1);
}

#[test]
fn tent_limit_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &format!("{CUBIC}[params]\nscenario = {{ scenario = \"gamma0-delta0\" }}\n"),
    );
    let out = tmp.path().join("out");
    let st = bin().arg("limit-profile").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let s = summary(&out);
    assert!((s["outputs"]["peak"].as_f64().unwrap() - 0.666667).abs() < 1e-6);
    assert_eq!(s["outputs"]["profile"]["slopes"].as_array().unwrap().len(), 4);
}

#[test]
fn nonlinearity_without_sign_change_is_a_config_error_naming_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "command = \"period\"\ndelta = 0.1\n[nonlinearity]\nkind = \"polynomial\"\ncoefficients = [0.0, 1.0, -1.0]\n[params]\ngamma = 0.1\n",
    );
    let out = tmp.path().join("out");
    let o = bin().arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("(f1)"), "{err}");
    assert_eq!(summary(&out)["status"], "error");
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, body: String| {
        let cfg = write(tmp.path(), name, &body);
        let out = tmp.path().join(name.replace(".toml", ""));
        bin().arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap().code()
    };
    // Missing delta.
    assert_eq!(run("a.toml", format!("command = \"period\"\n{CUBIC}[params]\ngamma = 0.1\n")), Some(1));
    // Homoclinic solutions need F(1) > 0.
    let balanced = "[nonlinearity]\nkind = \"cubic-bistable\"\na = 0.5\n[weight]\nshape = \"constant\"\nvalue = 1.0\n";
    assert_eq!(run("b.toml", format!("command = \"homoclinic\"\ndelta = 0.1\n{balanced}")), Some(2));
    // Oscillation too strong to certify anything.
    let wild = "[weight]\nshape = \"left-varying\"\nc = 0.5\npayload = { type = \"abs-sine\", base = 1.0, amplitude = 3.0, samples_per_period = 32 }\n";
    assert_eq!(run("c.toml", format!("command = \"nonexistence\"\ndelta = 0.1\n{CUBIC}{wild}")), Some(3));
}

#[test]
fn runs_are_deterministic_and_echo_their_config() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "command = \"kappa-branch\"\ndelta = 0.1\n{CUBIC}[weight]\nshape = \"left-varying\"\nc = 0.3\npayload = {{ type = \"abs-sine\", base = 1.0, amplitude = 0.5, samples_per_period = 64 }}\n[params]\nrho_grid = {{ from = 0.0, to = 0.4, points = 8 }}\n"
    );
    let cfg = write(tmp.path(), "k.toml", &body);
    let mut texts = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let st = bin()
            .args(["--parallel", threads, "--format", "csv", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        assert!(out.join("kappa.csv").exists() && !out.join("kappa.json").exists());
        let text = fs::read_to_string(out.join("summary.json")).unwrap();
        texts.push(text.replace(&out.display().to_string(), "OUT"));
    }
    assert_eq!(texts[0], texts[1]);
    let s: Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(s["outputs"]["bounds_hold"], true);
    let echoed = ScenarioConfig::from_json(&s["config"].to_string()).unwrap();
    let again = ScenarioConfig::from_json(&to_json_string(&echoed).unwrap()).unwrap();
    assert_eq!(echoed, again);
    let mut original = ScenarioConfig::load(&cfg).unwrap();
    original.output = echoed.output.clone();
    original.command = echoed.command;
    assert_eq!(original, echoed);
}
