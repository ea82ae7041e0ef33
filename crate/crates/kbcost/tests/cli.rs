//! End-to-end runs of the `kbcost` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const KB: &str = "e(1,2).\ne(2,3).\ne(3,4).\n\
path(X,Y) :- e(X,Y).\npath(X,Z) :- path(X,Y), e(Y,Z).\n";

/// Same graph with `path(1,3)` stored, so losing it is recoverable.
const STORED_KB: &str = "e(1,2).\ne(2,3).\ne(3,4).\n\
path(X,Y) :- e(X,Y).\npath(X,Z) :- path(X,Y), e(Y,Z).\n%stored\npath(1,3)\n";

const LOSS: &str = "{\"lost\": [\"path(1,3)\"], \"spurious\": []}\n";

const WORKLOAD: &str = "{\"horizon\": 1000, \"rho\": 1}\n\
{\"query\": \"path(1,4)\", \"prob\": 0.6}\n\
{\"query\": \"path(2,4) & e(1,2)\", \"prob\": 0.4}\n";

fn fixture(name: &str, text: &str) -> String {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn kbcost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbcost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema() -> Value {
    let text = include_str!("../schema/report.schema.json");
    serde_json::from_str(text).unwrap()
}

/// The subset of JSON Schema the shipped schema uses. Unknown keywords
/// fail loudly so the schema cannot drift past the validator.
fn validate(root: &Value, schema: &Value, v: &Value, path: &str, errs: &mut Vec<String>) {
    let Some(s) = schema.as_object() else {
        errs.push(format!("{path}: schema is not an object"));
        return;
    };
    for (key, rule) in s {
        match key.as_str() {
            "$schema" | "title" | "$defs" => {}
            "$ref" => {
                let name = rule.as_str().unwrap().trim_start_matches("#/$defs/");
                validate(root, &root["$defs"][name], v, path, errs);
            }
            "type" => {
                let kinds: Vec<&str> = match rule {
                    Value::String(t) => vec![t.as_str()],
                    Value::Array(ts) => ts.iter().map(|t| t.as_str().unwrap()).collect(),
                    _ => unreachable!(),
                };
                let ok = kinds.iter().any(|k| match *k {
                    "object" => v.is_object(),
                    "array" => v.is_array(),
                    "string" => v.is_string(),
                    "boolean" => v.is_boolean(),
                    "null" => v.is_null(),
                    "number" => v.is_number(),
                    "integer" => v.is_u64() || v.is_i64(),
                    _ => false,
                });
                if !ok {
                    errs.push(format!("{path}: {v} is not {kinds:?}"));
                }
            }
            "required" => {
                for r in rule.as_array().unwrap() {
                    let r = r.as_str().unwrap();
                    if v.as_object().is_some_and(|o| !o.contains_key(r)) {
                        errs.push(format!("{path}: missing {r}"));
                    }
                }
            }
            "properties" => {
                if let Some(o) = v.as_object() {
                    for (k, sub) in rule.as_object().unwrap() {
                        if let Some(x) = o.get(k) {
                            validate(root, sub, x, &format!("{path}/{k}"), errs);
                        }
                    }
                }
            }
            "additionalProperties" => {
                if let Some(o) = v.as_object() {
                    let known = s.get("properties").and_then(Value::as_object);
                    for (k, x) in o {
                        if known.is_some_and(|p| p.contains_key(k)) {
                            continue;
                        }
                        match rule {
                            Value::Bool(false) => errs.push(format!("{path}: unexpected {k}")),
                            Value::Bool(true) => {}
                            sub => validate(root, sub, x, &format!("{path}/{k}"), errs),
                        }
                    }
                }
            }
            "items" => {
                if let Some(a) = v.as_array() {
                    for (i, x) in a.iter().enumerate() {
                        validate(root, rule, x, &format!("{path}/{i}"), errs);
                    }
                }
            }
            "enum" => {
                if !rule.as_array().unwrap().contains(v) {
                    errs.push(format!("{path}: {v} not in {rule}"));
                }
            }
            "const" => {
                if rule != v {
                    errs.push(format!("{path}: {v} != {rule}"));
                }
            }
            "minimum" => {
                if v.as_f64().is_some_and(|x| x < rule.as_f64().unwrap()) {
                    errs.push(format!("{path}: {v} below {rule}"));
                }
            }
            "minLength" | "maxLength" => {
                if let Some(t) = v.as_str() {
                    let n = t.chars().count() as u64;
                    let lim = rule.as_u64().unwrap();
                    if (key == "minLength" && n < lim) || (key == "maxLength" && n > lim) {
                        errs.push(format!("{path}: length {n} violates {key} {lim}"));
                    }
                }
            }
            "oneOf" => {
                let matching = rule
                    .as_array()
                    .unwrap()
                    .iter()
                    .filter(|sub| {
                        let mut e = Vec::new();
                        validate(root, sub, v, path, &mut e);
                        e.is_empty()
                    })
                    .count();
                if matching != 1 {
                    errs.push(format!("{path}: {matching} oneOf branches match"));
                }
            }
            other => errs.push(format!("{path}: unsupported keyword {other}")),
        }
    }
}

fn schema_errors(v: &Value) -> Vec<String> {
    let root = schema();
    let mut errs = Vec::new();
    validate(&root, &root, v, "", &mut errs);
    errs
}

#[test]
fn depth_of_a_fact_is_zero() {
    let kb = fixture("fact.kb", KB);
    let out = kbcost(&["depth", "--kb", &kb, "--query", "e(1,2)"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["result"]["depth"], 0);
    assert!(schema_errors(&r).is_empty(), "{:?}", schema_errors(&r));
}

#[test]
fn allocate_report_is_schema_valid() {
    let kb = fixture("alloc.kb", KB);
    let w = fixture("alloc.jsonl", WORKLOAD);
    let out = kbcost(&["allocate", "--kb", &kb, "--workload", &w, "--budget", "512"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json_of(&out);
    assert_eq!(schema_errors(&r), Vec::<String>::new());
    assert!(r["result"]["allocation"]["delta"].is_number());
    assert!(r["result"]["allocation"]["budget_use"].is_number());
    assert!(r["result"]["dr_check"]["violation_rate"].is_number());
    assert!(r["proxy_disclaimer"].is_string());
}

#[test]
fn schema_rejects_a_tampered_report() {
    let kb = fixture("tamper.kb", KB);
    let out = kbcost(&["depth", "--kb", &kb, "--query", "e(1,2)"]);
    let mut r = json_of(&out);
    r["conjunction_elimination"] = true.into();
    assert!(!schema_errors(&r).is_empty());
    let mut r = json_of(&out);
    r["result"].as_object_mut().unwrap().remove("witness");
    assert!(!schema_errors(&r).is_empty());
    let mut r = json_of(&out);
    r["command"] = "frobnicate".into();
    assert!(!schema_errors(&r).is_empty());
}

#[test]
fn every_command_emits_schema_valid_json() {
    let kb = fixture("all.kb", STORED_KB);
    let w = fixture("all.jsonl", WORKLOAD);
    let noise = fixture("all.noise.json", LOSS);
    let q = "path(1,4)";
    let runs: Vec<Vec<&str>> = vec![
        vec!["core", "--kb", &kb],
        vec!["depth", "--kb", &kb, "--query", q],
        vec!["trace", "--kb", &kb, "--query", q],
        vec!["encode", "--kb", &kb, "--query", q],
        vec!["nsearch", "--kb", &kb, "--query", q],
        vec!["tradeoff", "--kb", &kb, "--workload", &w],
        vec![
            "fc", "--kb", &kb, "--query", q, "--c-lo", "0.5", "--c-hi", "2",
        ],
        vec!["cluster", "--kb", &kb, "--workload", &w, "--budget", "64"],
        vec!["noise", "--kb", &kb, "--query", q, "--noise", &noise],
        vec![
            "twophase",
            "--kb",
            &kb,
            "--workload",
            &w,
            "--noise",
            &noise,
            "--sla-depth",
            "3",
            "--budget",
            "400",
        ],
        vec!["richness", "--m", "5", "--n", "2"],
        vec!["tightness", "--m", "16", "--samples", "5"],
    ];
    for args in runs {
        let out = kbcost(&args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let r = json_of(&out);
        assert_eq!(r["command"], args[0]);
        assert_eq!(schema_errors(&r), Vec::<String>::new(), "{args:?}");
    }
}

#[test]
fn feasible_twophase_restores_the_loss_once() {
    let kb = fixture("feas.kb", STORED_KB);
    let w = fixture(
        "feas.jsonl",
        "{\"horizon\": 10}\n{\"query\": \"path(1,4)\", \"prob\": 1.0}\n",
    );
    let noise = fixture("feas.noise.json", LOSS);
    let out = kbcost(&[
        "twophase",
        "--kb",
        &kb,
        "--workload",
        &w,
        "--noise",
        &noise,
        "--sla-depth",
        "1",
        "--budget",
        "200",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json_of(&out);
    let selected: Vec<&str> = r["result"]["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(selected.iter().filter(|s| **s == "path(1,3)").count(), 1);
    assert!(r["result"]["max_depth"].as_u64().unwrap() <= 1);
}

#[test]
fn unknown_subcommand_exits_two_with_usage() {
    let out = kbcost(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn parse_error_exits_two() {
    let kb = fixture("bad.kb", "p(a\n");
    let out = kbcost(&["depth", "--kb", &kb, "--query", "p(a)"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn unreachable_query_exits_one_with_report() {
    let kb = fixture("unreach.kb", KB);
    let out = kbcost(&["depth", "--kb", &kb, "--query", "path(4,1)"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["result"]["depth"], "unreachable");
}

#[test]
fn budget_short_twophase_exits_one() {
    let kb = fixture("short.kb", STORED_KB);
    let w = fixture("short.jsonl", WORKLOAD);
    let noise = fixture("short.noise.json", LOSS);
    let out = kbcost(&[
        "twophase",
        "--kb",
        &kb,
        "--workload",
        &w,
        "--noise",
        &noise,
        "--sla-depth",
        "3",
        "--budget",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r = json_of(&out);
    assert_eq!(r["result"]["feasible"], false);
    assert_eq!(r["result"]["reasons"][0]["kind"], "budget_short");
}

#[test]
fn reruns_are_byte_identical() {
    let kb = fixture("det.kb", KB);
    let w = fixture("det.jsonl", WORKLOAD);
    for args in [
        vec!["allocate", "--kb", &kb, "--workload", &w, "--budget", "64"],
        vec![
            "tradeoff",
            "--kb",
            &kb,
            "--query",
            "path(1,4)",
            "--format",
            "csv-summary",
        ],
        vec![
            "noise",
            "--kb",
            &kb,
            "--query",
            "path(1,4)",
            "--pollution-rate",
            "0.5",
        ],
    ] {
        let a = kbcost(&args);
        let b = kbcost(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn csv_sweep_has_one_row_per_frequency() {
    let kb = fixture("csv.kb", KB);
    let out = kbcost(&[
        "tradeoff",
        "--kb",
        &kb,
        "--query",
        "path(1,4)",
        "--frequency",
        "1,2,4,8,16",
        "--format",
        "csv-summary",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<_> = rdr.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 5);
    let freqs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(freqs, [1.0, 2.0, 4.0, 8.0, 16.0]);
}

#[test]
fn default_sweep_covers_seventeen_points() {
    let kb = fixture("sweep.kb", KB);
    let out = kbcost(&["tradeoff", "--kb", &kb, "--query", "path(1,4)"]);
    let r = json_of(&out);
    assert_eq!(r["result"]["rows"].as_array().unwrap().len(), 17);
}

#[test]
fn floats_carry_six_significant_digits() {
    let kb = fixture("float.kb", KB);
    let out = kbcost(&[
        "tradeoff",
        "--kb",
        &kb,
        "--query",
        "path(1,4)",
        "--frequency",
        "3",
    ]);
    let r = json_of(&out);
    let c = r["result"]["rows"][0]["cost_cache"].as_f64().unwrap();
    assert_eq!(c, format!("{c:.5e}").parse::<f64>().unwrap());
}

#[test]
fn digests_change_with_input() {
    let a = fixture("dig_a.kb", KB);
    let b = fixture("dig_b.kb", &format!("{KB}e(4,5).\n"));
    let da = json_of(&kbcost(&["core", "--kb", &a]))["input_digests"]["kb"].clone();
    let db = json_of(&kbcost(&["core", "--kb", &b]))["input_digests"]["kb"].clone();
    assert_ne!(da, db);
    assert!(da.as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn proxy_free_reports_carry_no_disclaimer() {
    let kb = fixture("nodisc.kb", KB);
    let r = json_of(&kbcost(&["depth", "--kb", &kb, "--query", "path(1,4)"]));
    assert!(r["proxy_disclaimer"].is_null());
}

#[test]
fn verify_covers_every_module_and_exits_zero() {
    let out = kbcost(&["verify", "--quick"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let r = json_of(&out);
    assert_eq!(schema_errors(&r), Vec::<String>::new());
    let modules: std::collections::BTreeSet<&str> = r["result"]["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["module"].as_str().unwrap())
        .collect();
    for m in [
        "kbmodel", "closure", "depth", "trace", "tradeoff", "alloc", "noise", "cli",
    ] {
        assert!(modules.contains(m), "{m} missing");
    }
    assert_eq!(r["result"]["failed"].as_array().unwrap().len(), 0);
}

#[test]
fn flipped_serial_bound_is_reported_not_hidden() {
    let out = kbcost(&["verify", "--quick", "--serial-bound", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json_of(&out);
    let flagged = r["result"]["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "serializability_ratio")
        .map(|c| c["detail"]["flagged"].as_u64().unwrap());
    assert!(flagged.is_some_and(|n| n > 0), "{flagged:?}");
}
