//! Input and output file formats.
//!
//! - KB: the text grammar of [`kbcost_core::parse_kb`].
//! - Workload: JSON Lines. The first record is the header
//!   `{"horizon": N, "rho": r, "c_hit": c}` (`rho`, `c_hit` optional), then
//!   one `{"query": "...", "prob": p}` per line.
//! - Candidates: one formula per line with an optional `@cost=<bits>`
//!   suffix; `#` starts a comment.
//! - Noise: one JSON object with `lost`/`spurious` formula lists, or with
//!   `loss_rate`, `pollution_rate` and `seed` for a generated spec.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;

use kbcost_core::noise::NoiseSpec;
use kbcost_core::tradeoff::{CostModel, Workload};
use kbcost_core::{parse_formula, parse_kb, Formula, KnowledgeBase};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// File contents with their `sha256:<hex>` digest.
#[derive(Clone, Debug)]
pub struct Input {
    pub path: String,
    pub text: String,
    pub digest: String,
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn read_input(path: &str) -> Result<Input> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    let digest = digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "not valid UTF-8"))?;
    Ok(Input {
        path: path.to_string(),
        text,
        digest,
    })
}

pub fn parse_kb_input(input: &Input) -> Result<KnowledgeBase> {
    parse_kb(&input.text).map_err(|e| CliError::format(&input.path, e.to_string()))
}

/// Parses a formula given on the command line or in a data file.
pub fn formula(text: &str, origin: &str) -> Result<Formula> {
    parse_formula(text.trim()).map_err(|e| CliError::format(origin, format!("`{text}`: {e}")))
}

/// Workload header values; `None` where the file leaves the default.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct WorkloadHeader {
    pub horizon: u64,
    pub rho: Option<f64>,
    pub c_hit: Option<f64>,
}

pub fn parse_workload(text: &str, path: &str) -> Result<(Workload, WorkloadHeader)> {
    let mut header = None;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at = format!("{path}:{}", i + 1);
        let v: Value =
            serde_json::from_str(line).map_err(|e| CliError::format(&at, e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| CliError::format(&at, "record is not an object"))?;
        if header.is_none() {
            let horizon = obj
                .get("horizon")
                .and_then(Value::as_u64)
                .ok_or_else(|| CliError::format(&at, "first record must carry `horizon`"))?;
            let num = |k: &str| -> Result<Option<f64>> {
                match obj.get(k) {
                    None => Ok(None),
                    Some(x) => x
                        .as_f64()
                        .map(Some)
                        .ok_or_else(|| CliError::format(&at, format!("`{k}` is not a number"))),
                }
            };
            header = Some(WorkloadHeader {
                horizon,
                rho: num("rho")?,
                c_hit: num("c_hit")?,
            });
            continue;
        }
        let q = obj
            .get("query")
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::format(&at, "record lacks `query`"))?;
        let p = obj
            .get("prob")
            .and_then(Value::as_f64)
            .ok_or_else(|| CliError::format(&at, "record lacks `prob`"))?;
        entries.push((formula(q, &at)?, p));
    }
    let header = header.ok_or_else(|| CliError::format(path, "missing header record"))?;
    let workload = Workload::new(entries, header.horizon)?;
    Ok((workload, header))
}

pub fn write_workload(workload: &Workload, model: &CostModel) -> String {
    let mut out = String::new();
    let header = json!({"horizon": workload.horizon, "rho": model.rho, "c_hit": model.c_hit});
    writeln!(out, "{header}").unwrap();
    for (q, p) in &workload.entries {
        writeln!(out, "{}", json!({"query": q.to_string(), "prob": p})).unwrap();
    }
    out
}

/// Candidate formulas with optional explicit costs.
pub fn parse_candidates(text: &str, path: &str) -> Result<Vec<(Formula, Option<u64>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = format!("{path}:{}", i + 1);
        let (f, cost) = match line.split_once('@') {
            Some((f, suffix)) => {
                let bits = suffix
                    .trim()
                    .strip_prefix("cost=")
                    .ok_or_else(|| CliError::format(&at, "expected `@cost=<bits>`"))?;
                let bits: u64 = bits
                    .trim()
                    .parse()
                    .map_err(|_| CliError::format(&at, format!("bad cost `{bits}`")))?;
                (f, Some(bits))
            }
            None => (line, None),
        };
        out.push((formula(f, &at)?, cost));
    }
    Ok(out)
}

pub fn write_candidates(entries: &[(Formula, Option<u64>)]) -> String {
    let mut out = String::new();
    for (f, cost) in entries {
        match cost {
            Some(c) => writeln!(out, "{f} @cost={c}").unwrap(),
            None => writeln!(out, "{f}").unwrap(),
        }
    }
    out
}

/// A noise file: explicit sets or generation parameters.
#[derive(Clone, PartialEq, Debug)]
pub enum NoiseInput {
    Explicit(NoiseSpec),
    Generated {
        loss_rate: f64,
        pollution_rate: f64,
        seed: u64,
    },
}

pub fn parse_noise(text: &str, path: &str) -> Result<NoiseInput> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| CliError::format(path, "noise spec is not an object"))?;
    let explicit = obj.contains_key("lost") || obj.contains_key("spurious");
    let generated = obj.contains_key("loss_rate") || obj.contains_key("pollution_rate");
    if explicit == generated {
        return Err(CliError::format(
            path,
            "give either `lost`/`spurious` or `loss_rate`/`pollution_rate`",
        ));
    }
    if explicit {
        let list = |k: &str| -> Result<BTreeSet<Formula>> {
            match obj.get(k) {
                None => Ok(BTreeSet::new()),
                Some(Value::Array(xs)) => xs
                    .iter()
                    .map(|x| {
                        x.as_str()
                            .ok_or_else(|| {
                                CliError::format(path, format!("`{k}` holds a non-string"))
                            })
                            .and_then(|s| formula(s, path))
                    })
                    .collect(),
                Some(_) => Err(CliError::format(path, format!("`{k}` is not a list"))),
            }
        };
        return Ok(NoiseInput::Explicit(NoiseSpec::new(
            list("lost")?,
            list("spurious")?,
        )));
    }
    let rate = |k: &str| -> Result<f64> {
        match obj.get(k) {
            None => Ok(0.0),
            Some(x) => x
                .as_f64()
                .ok_or_else(|| CliError::format(path, format!("`{k}` is not a number"))),
        }
    };
    let seed = match obj.get("seed") {
        None => 0,
        Some(x) => x
            .as_u64()
            .ok_or_else(|| CliError::format(path, "`seed` is not an unsigned integer"))?,
    };
    Ok(NoiseInput::Generated {
        loss_rate: rate("loss_rate")?,
        pollution_rate: rate("pollution_rate")?,
        seed,
    })
}

pub fn write_noise(input: &NoiseInput) -> String {
    let v = match input {
        NoiseInput::Explicit(spec) => {
            let list = |s: &BTreeSet<Formula>| -> Value {
                s.iter().map(|f| Value::String(f.to_string())).collect()
            };
            let mut m = Map::new();
            m.insert("lost".into(), list(&spec.lost));
            m.insert("spurious".into(), list(&spec.spurious));
            Value::Object(m)
        }
        NoiseInput::Generated {
            loss_rate,
            pollution_rate,
            seed,
        } => json!({"loss_rate": loss_rate, "pollution_rate": pollution_rate, "seed": seed}),
    };
    format!("{v}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_roundtrip() {
        let text =
            "{\"horizon\": 100, \"rho\": 2}\n{\"query\": \"p(a) & q(b)\", \"prob\": 0.25}\n\n\
                    {\"query\": \"q(b)\", \"prob\": 0.75}\n";
        let (w, h) = parse_workload(text, "w").unwrap();
        assert_eq!((h.horizon, h.rho, h.c_hit), (100, Some(2.0), None));
        assert_eq!(w.entries.len(), 2);
        let model = CostModel::new(2.0, 1.0).unwrap();
        let (w2, _) = parse_workload(&write_workload(&w, &model), "w").unwrap();
        assert_eq!(w, w2);
    }

    #[test]
    fn workload_errors_name_the_line() {
        let err = parse_workload("{\"horizon\": 1}\n{\"prob\": 1}\n", "w.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("w.jsonl:2"));
        assert_eq!(err.exit_code(), 2);
        assert!(parse_workload("{\"query\": \"p(a)\", \"prob\": 1}\n", "w").is_err());
    }

    #[test]
    fn candidates_with_costs_and_comments() {
        let text = "# cache\np(a) @cost=12\nq(a) & r(b)   # no cost\n\n";
        let c = parse_candidates(text, "c").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].1, Some(12));
        assert_eq!(c[1].1, None);
        assert_eq!(parse_candidates(&write_candidates(&c), "c").unwrap(), c);
        assert!(parse_candidates("p(a) @size=3", "c").is_err());
    }

    #[test]
    fn noise_forms() {
        let e = parse_noise(r#"{"lost": ["p(a)"], "spurious": []}"#, "n").unwrap();
        assert!(matches!(&e, NoiseInput::Explicit(s) if s.lost.len() == 1));
        assert_eq!(parse_noise(&write_noise(&e), "n").unwrap(), e);
        let g = parse_noise(r#"{"loss_rate": 0.1, "seed": 5}"#, "n").unwrap();
        assert_eq!(
            g,
            NoiseInput::Generated {
                loss_rate: 0.1,
                pollution_rate: 0.0,
                seed: 5
            }
        );
        assert!(parse_noise(r#"{"lost": [], "loss_rate": 0.1}"#, "n").is_err());
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest(b"abc"),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
