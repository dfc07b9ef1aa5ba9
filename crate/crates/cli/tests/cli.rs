use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coint-forward"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

const SHORT_SYNTH: &str = "[synth]\nyears = 1.0\n";

#[test]
fn synth_writes_panels_and_truth() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "a", "--seed", "4"]);
    for f in ["gas_quotes.csv", "crude_quotes.csv", "truth_params.json", "truth_motion.csv", "effective_config.toml"] {
        assert!(d.path().join("a").join(f).exists(), "{f}");
    }
    ok(d.path(), &["synth", "--out", "b", "--seed", "4"]);
    same_files(&d.path().join("a"), &d.path().join("b"));
    ok(d.path(), &["synth", "--out", "c", "--seed", "5"]);
    assert_ne!(
        fs::read(d.path().join("a/gas_quotes.csv")).unwrap(),
        fs::read(d.path().join("c/gas_quotes.csv")).unwrap()
    );
    let echoed = fs::read_to_string(d.path().join("a/effective_config.toml")).unwrap();
    assert!(echoed.contains("seed = 4"));
}

#[test]
fn calibrate_recovers_time_constants() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "synth.toml", SHORT_SYNTH);
    ok(d.path(), &["synth", "--config", "synth.toml", "--out", "data", "--seed", "1"]);
    write(d.path(), "cal.toml", "gas = \"data/gas_quotes.csv\"\ncrude = \"data/crude_quotes.csv\"\n");
    let out = ok(d.path(), &["calibrate", "--config", "cal.toml", "--out", "fit"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tau1"));
    let truth = json(&d.path().join("data/truth_params.json"));
    let fit = json(&d.path().join("fit/params.json"));
    for e in ["gas", "crude"] {
        for k in ["tau1", "tau2"] {
            let (a, b) = (fit["vol"][e][k].as_f64().unwrap(), truth["vol"][e][k].as_f64().unwrap());
            assert!((a / b - 1.0).abs() < 0.1, "{e} {k}: {a} vs {b}");
        }
    }
    for f in ["calibration_report.json", "pi.csv", "sigma_sigma_t.csv", "theta_prime.csv", "centering_surface.csv"] {
        assert!(d.path().join("fit").join(f).exists(), "{f}");
    }
}

#[test]
fn missing_crude_file_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "synth.toml", SHORT_SYNTH);
    ok(d.path(), &["synth", "--config", "synth.toml", "--out", "data"]);
    write(d.path(), "cal.toml", "gas = \"data/gas_quotes.csv\"\ncrude = \"data/missing.csv\"\n");
    let out = run(d.path(), &["calibrate", "--config", "cal.toml", "--out", "fit"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!d.path().join("fit").exists());
}

#[test]
fn constant_prices_are_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "synth.toml", SHORT_SYNTH);
    ok(d.path(), &["synth", "--config", "synth.toml", "--out", "data"]);
    let text = fs::read_to_string(d.path().join("data/gas_quotes.csv")).unwrap();
    let flat: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                format!("{l}\n")
            } else {
                let mut f: Vec<&str> = l.split(',').collect();
                f[2] = "42";
                format!("{}\n", f.join(","))
            }
        })
        .collect();
    write(d.path(), "flat.csv", &flat);
    write(d.path(), "cal.toml", "gas = \"flat.csv\"\ncrude = \"data/crude_quotes.csv\"\n");
    let out = run(d.path(), &["calibrate", "--config", "cal.toml", "--out", "fit"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.path().join("fit").exists());
}

#[test]
fn simulate_writes_one_id_per_path() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "sim.toml",
        "[simulation]\npaths = 3\nhorizon = 0.5\nmaturities = [0.5, 1.0]\nrecord_every = 20\n",
    );
    ok(d.path(), &["simulate", "--config", "sim.toml", "--out", "s"]);
    let csv = fs::read_to_string(d.path().join("s/scenarios.csv")).unwrap();
    let ids: std::collections::BTreeSet<&str> =
        csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec!["0", "1", "2"]);
    let bin = fs::read(d.path().join("s/scenarios.bin")).unwrap();
    assert_eq!(&bin[..6], b"CFSCEN");
}

#[test]
fn risk_neutral_simulation_stays_within_error_bars() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "sim.toml",
        "[simulation]\nmeasure = \"Q\"\npaths = 4000\nhorizon = 1.0\nmaturities = [1.0, 2.0]\nrecord_every = 73\n",
    );
    ok(d.path(), &["simulate", "--config", "sim.toml", "--out", "s", "--seed", "8"]);
    let diag = json(&d.path().join("s/diagnostics.json"));
    let z = diag["max_deviation_in_std_errors"].as_f64().unwrap();
    assert!(z < 4.0, "{z}");
}

#[test]
fn validate_fixtures_pass() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["validate", "--out", "h"]);
    assert_eq!(json(&d.path().join("h/validation.json"))["all_pass"], true);
    write(d.path(), "ind.toml", "[validate]\nfixture = \"independent\"\n");
    ok(d.path(), &["validate", "--config", "ind.toml", "--out", "i", "--seed", "2"]);
    let v = json(&d.path().join("i/validation.json"));
    let fixture = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "fixture_cointegration").unwrap();
    assert_eq!(fixture["expected_rejection"], false);
    assert_eq!(fixture["pass"], true);
}

#[test]
fn corrupt_params_are_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "bad.json", "{\"version\": 1, \"vol\": ");
    write(d.path(), "bad.toml", "params = \"bad.json\"\n");
    let out = run(d.path(), &["validate", "--config", "bad.toml", "--out", "v"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("v").exists());
}

#[test]
fn unknown_config_key_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "typo.toml", "sede = 1\n");
    let out = run(d.path(), &["synth", "--config", "typo.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_seed() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "s.toml", "seed = 3\n[synth]\nyears = 0.2\n");
    ok(d.path(), &["synth", "--config", "s.toml", "--out", "a", "--seed", "7"]);
    let echoed = fs::read_to_string(d.path().join("a/effective_config.toml")).unwrap();
    assert!(echoed.starts_with("seed = 7"));
}

#[test]
fn centered_historical_simulation_stays_within_tolerance() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "sim.toml",
        "[simulation]\nmeasure = \"P\"\npaths = 4000\nhorizon = 1.0\nmaturities = [1.0, 2.0]\nrecord_every = 73\n",
    );
    ok(d.path(), &["simulate", "--config", "sim.toml", "--out", "s", "--seed", "12"]);
    let diag = json(&d.path().join("s/diagnostics.json"));
    for cell in diag["cells"].as_array().unwrap() {
        let dev = cell["deviation"].as_f64().unwrap().abs();
        let se = cell["std_error"].as_f64().unwrap();
        assert!(dev <= 1e-3 + 3.0 * se, "{cell}");
    }
    let used = json(&d.path().join("s/params_used.json"));
    assert!(!used["theta_prime"]["values"].as_array().unwrap().is_empty(), "theta' was not fitted");
}
