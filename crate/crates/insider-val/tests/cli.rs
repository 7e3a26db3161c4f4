//! End-to-end tests driving the compiled binary: exit codes, report
//! determinism, schema conformance, and the CSV dump format.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_insider-val"));
    // keep the ambient environment from leaking seeds into tests
    cmd.env_remove("INSIDER_VAL_SEED");
    cmd
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn parse_report(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).expect("report file");
    serde_json::from_str(&text).expect("report parses")
}

#[test]
fn symmetric_binary_signal_is_worth_half_the_capital() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let config = repo_path("examples/gbm_binary.toml");
    let output = run(&[
        "value",
        "--config",
        config.to_str().unwrap(),
        "--v-grid",
        "0.5,1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = parse_report(&out);
    let entries = report["outputs"]["value"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for (entry, want) in entries.iter().zip([0.25, 0.5, 1.0]) {
        assert_eq!(entry["method"], "closed");
        assert_eq!(entry["pi"].as_f64().unwrap(), want);
        assert_eq!(entry["universal"].as_f64().unwrap(), want);
    }
}

#[test]
fn identical_config_and_seed_give_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "diagnose".to_string(),
            "--paths".into(),
            "1000".into(),
            "--steps".into(),
            "2".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(bin().args(args(&a)).status().unwrap().success());
    assert!(bin().args(args(&b)).status().unwrap().success());
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    // the sidecar carries the timing so the report can stay stable
    assert!(dir.path().join("a.json.meta.json").exists());

    // the environment seed changes the output, an explicit --seed beats it
    let c = dir.path().join("c.json");
    let mut cmd = bin();
    cmd.args(args(&c)).env("INSIDER_VAL_SEED", "7");
    assert!(cmd.status().unwrap().success());
    let bytes_c = std::fs::read(&c).unwrap();
    assert_ne!(bytes_a, bytes_c);
    let d = dir.path().join("d.json");
    let mut cmd = bin();
    cmd.args(args(&d))
        .args(["--seed", "7"])
        .env("INSIDER_VAL_SEED", "99999");
    assert!(cmd.status().unwrap().success());
    assert_eq!(bytes_c, std::fs::read(&d).unwrap());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    // malformed utility block: validation error, no report written
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[utility]\nkind = \"qwe\"\n").unwrap();
    let out = dir.path().join("never.json");
    let output = run(&[
        "value",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(!out.exists());

    // unknown config key
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "banana = 1\n").unwrap();
    let output = run(&["value", "--config", unknown.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    // continuous signal cannot enter the optimizer: applicability error
    let output = run(&["optimize", "--model", "reflection"]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");

    // unwritable report destination
    let output = run(&["value", "--out", "/nonexistent-dir/report.json"]);
    assert_eq!(output.status.code(), Some(4));

    // missing config file
    let output = run(&["value", "--config", "/nonexistent-dir/missing.toml"]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn optimize_rejects_model_flag_meant_for_other_tasks() {
    // r on a non-binary model is a config error, not a crash
    let output = run(&["diagnose", "--model", "poisson-pair", "--r", "0.5"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn replicate_dumps_wealth_paths_next_to_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let output = run(&[
        "replicate",
        "--paths",
        "3",
        "--steps",
        "64",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,wealth,oracle,density"));
    // three paths, 65 grid points each
    assert_eq!(lines.clone().count(), 3 * 65);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "1"); // wealth starts at v = 1
    assert_eq!(first[1], first[2]); // target starts there too
    let report = parse_report(&dir.path().join("w.json"));
    assert_eq!(report["task"], "replicate");
    assert!(report["outputs"]["replicate"]["report"]["rms_sup_error"]
        .as_f64()
        .unwrap()
        .is_finite());
    assert_eq!(
        report["outputs"]["replicate"]["csv_path"].as_str().unwrap(),
        csv.to_str().unwrap()
    );
}

#[test]
fn reports_validate_against_the_shipped_schema() {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(repo_path("schemas/report.schema.json")).unwrap())
            .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "diagnose",
            vec!["diagnose".into(), "--paths".into(), "1000".into(), "--steps".into(), "2".into()],
        ),
        (
            "optimize",
            vec!["optimize".into(), "--paths".into(), "1000".into(), "--steps".into(), "1".into()],
        ),
        ("value", vec!["value".into(), "--bounds".into(), "--method".into(), "root".into()]),
        (
            "replicate",
            vec!["replicate".into(), "--paths".into(), "2".into(), "--steps".into(), "32".into()],
        ),
    ];
    for (name, mut args) in runs {
        let out = dir.path().join(format!("{name}.json"));
        args.extend(["--out".into(), out.to_str().unwrap().to_string()]);
        let output = bin().args(&args).output().unwrap();
        assert!(output.status.success(), "{name}: {output:?}");
        let report = parse_report(&out);
        if let Err(msg) = validate(&schema, &report, &schema) {
            panic!("{name} report violates schema: {msg}");
        }
        // emitted floats parse to exact doubles: re-encoding loses nothing
        let rebuilt: Value =
            serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(report, rebuilt, "{name} report does not round-trip");
    }
}

/// Just enough of JSON Schema for the shipped file: type, required,
/// properties, items, enum, and local $ref.
fn validate(schema: &Value, inst: &Value, root: &Value) -> Result<(), String> {
    if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
        let path = reference
            .strip_prefix("#/")
            .ok_or_else(|| format!("unsupported $ref {reference}"))?;
        let mut target = root;
        for part in path.split('/') {
            target = target
                .get(part)
                .ok_or_else(|| format!("dangling $ref {reference}"))?;
        }
        return validate(target, inst, root);
    }
    if let Some(types) = schema.get("type") {
        let names: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            other => return Err(format!("malformed type {other}")),
        };
        let ok = names.iter().any(|name| match *name {
            "object" => inst.is_object(),
            "array" => inst.is_array(),
            "string" => inst.is_string(),
            "number" => inst.is_number(),
            "integer" => inst.as_f64().map_or(false, |x| x.fract() == 0.0),
            "boolean" => inst.is_boolean(),
            "null" => inst.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{inst} is not of type {names:?}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(inst) {
            return Err(format!("{inst} not in {allowed:?}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if inst.get(key).is_none() {
                return Err(format!("missing required key {key} in {inst}"));
            }
        }
    }
    if let (Some(props), Some(obj)) = (
        schema.get("properties").and_then(Value::as_object),
        inst.as_object(),
    ) {
        for (key, sub) in props {
            if let Some(value) = obj.get(key) {
                validate(sub, value, root).map_err(|e| format!("{key}: {e}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), inst.as_array()) {
        for (i, value) in arr.iter().enumerate() {
            validate(items, value, root).map_err(|e| format!("[{i}]: {e}"))?;
        }
    }
    Ok(())
}
