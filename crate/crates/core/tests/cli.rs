use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const RESONANCE: &str = r#"
[model]
preset = "remark27"
l1 = 2
l2 = 1
v = "constant_one"
c = "tuned"
u0 = 1

[grid]
n = 8

[bs]
nystrom_n = 6
z_list = [-0.1, -0.01, -0.001]
oracle_n = 4

[efimov]
sr_r_list = [20.0, 40.0]
"#;

fn write_config(dir: &TempDir, text: &str) -> String {
    let p = dir.path().join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fock-spectra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn classify_tuned_resonance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let out = run(&["classify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["classification"]["verdict"], "resonance");
    assert!(v["bands"].is_null());
}

#[test]
fn fock_oracle_agrees() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let out = run(&["fock-oracle", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let rows = v["oracle"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["equal"] == true));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad_z = RESONANCE.replace("z_list = [-0.1, -0.01, -0.001]", "z_list = [0.1]");
    let out = run(&["count", "--config", &write_config(&dir, &bad_z)]);
    assert_eq!(out.status.code(), Some(2));

    let typo = RESONANCE.replace("[model]", "[modle]");
    let out = run(&["classify", "--config", &write_config(&dir, &typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean `model`"));

    let cfg = write_config(&dir, RESONANCE);
    let out = run(&["count", "--config", &cfg, "--z", "-0.1,0.2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["classify", "--config", &cfg, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_3_with_stage() {
    let dir = TempDir::new().unwrap();
    // far below c*: Delta(p, z) < 0 near p = 0, so T(z) is undefined
    let weak = RESONANCE.replace("c = \"tuned\"", "c = 1.0");
    let out = run(&["count", "--config", &write_config(&dir, &weak)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical error in count"));
}

#[test]
fn io_errors_exit_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let missing = dir.path().join("no/such/dir/out.json");
    let out = run(&["classify", "--config", &cfg, "--out", &missing.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["classify", "--config", &dir.path().join("absent.toml").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn csv_headers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let out = run(&["count", "--config", &cfg, "--format", "csv", "--z", "-0.1,-0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z,log_abs_z,N"));
    assert_eq!(lines.count(), 2);

    let out = run(&["sr-convergence", "--config", &cfg, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("r,count,half_count_over_r,u0_reference"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn efimov_coef_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let out = run(&["efimov-coef", "--config", &cfg]);
    let v = json_of(&out);
    let e = &v["efimov"];
    for key in ["s", "l", "u0", "per_degree_thresholds"] {
        assert!(!e[key].is_null(), "missing {key}");
    }
    assert!((e["u0"].as_f64().unwrap() - 0.04093568101920775).abs() < 1e-10);
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Checks the keywords the shipped schema uses: `type`, `enum`, `required`,
/// `properties`, `additionalProperties` and `items`.
fn validate(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, v),
            Value::Array(ts) => ts.iter().any(|s| type_matches(s.as_str().unwrap(), v)),
            _ => false,
        };
        if !ok {
            return Err(format!("{path}: expected type {t}, got {v}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            return Err(format!("{path}: {v} not in {options:?}"));
        }
    }
    if let Value::Object(obj) = v {
        if let Some(Value::Array(req)) = schema.get("required") {
            for k in req {
                if !obj.contains_key(k.as_str().unwrap()) {
                    return Err(format!("{path}: missing key {k}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, child) in obj {
            let sub = props.and_then(|p| p.get(k));
            match (sub, schema.get("additionalProperties")) {
                (Some(s), _) => validate(s, child, &format!("{path}.{k}"))?,
                (None, Some(Value::Bool(false))) => {
                    return Err(format!("{path}: unexpected key {k}"))
                }
                (None, Some(s @ Value::Object(_))) => validate(s, child, &format!("{path}.{k}"))?,
                _ => {}
            }
        }
    }
    if let (Value::Array(items), Some(s)) = (v, schema.get("items")) {
        for (i, item) in items.iter().enumerate() {
            validate(s, item, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn validator_rejects_bad_documents() {
    let s = schema();
    assert!(validate(&s, &serde_json::json!({"config": {}}), "$").is_err());
    assert!(validate(&s, &serde_json::json!([]), "$").is_err());
}

#[test]
fn report_is_deterministic_and_matches_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&["report", "--config", &cfg, "--deterministic", "--out", &out.to_string_lossy()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert!(v.get("timing").is_none());
    validate(&schema(), &v, "$").unwrap();
    // hypothesis_ok = false at c* surfaces as a warning
    let warnings = v["warnings"].as_array().unwrap();
    assert_eq!(v["bands"]["hypothesis_ok"], false);
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("hypothesis_ok")));
}

#[test]
fn timed_report_matches_schema_and_honours_thread_cap() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, RESONANCE);
    let out = Command::new(env!("CARGO_BIN_EXE_fock-spectra"))
        .args(["report", "--config", &cfg])
        .env("FOCK_SPECTRA_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!(v["timing"].is_object());
    validate(&schema(), &v, "$").unwrap();
}
