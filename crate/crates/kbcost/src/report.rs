//! Machine-readable command reports.
//!
//! JSON reports have a fixed top-level field order and every float rounded
//! to 6 significant digits, so identical inputs give identical bytes.

use serde_json::{Map, Number, Value};

use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Attached to every report with a field derived from the description proxy.
pub const PROXY_DISCLAIMER: &str = "fields named proxy* are computable upper bounds on \
conditional description length (pointer, trace or raw encoding), not Kolmogorov complexity";

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    CsvSummary,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv-summary" => Ok(OutputFormat::CsvSummary),
            _ => Err(format!("unknown format `{s}` (json, csv-summary)")),
        }
    }
}

/// Row table for `csv-summary`.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct Report {
    pub command: String,
    pub inputs: Vec<(String, String)>,
    pub parameters: Map<String, Value>,
    pub result: Value,
    pub uses_proxy: bool,
    /// Rows for `csv-summary`; scalar result fields are flattened otherwise.
    pub table: Option<Table>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            inputs: Vec::new(),
            parameters: Map::new(),
            result: Value::Null,
            uses_proxy: false,
            table: None,
        }
    }

    pub fn input(&mut self, name: &str, digest: &str) -> &mut Self {
        self.inputs.push((name.to_string(), digest.to_string()));
        self
    }

    pub fn param(&mut self, name: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(name.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> Value {
        let mut top = Map::new();
        top.insert("command".into(), self.command.clone().into());
        top.insert("tool_version".into(), TOOL_VERSION.into());
        let digests: Map<String, Value> = self
            .inputs
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        top.insert("input_digests".into(), Value::Object(digests));
        top.insert("parameters".into(), Value::Object(self.parameters.clone()));
        top.insert("result".into(), self.result.clone());
        top.insert(
            "proxy_disclaimer".into(),
            if self.uses_proxy {
                PROXY_DISCLAIMER.into()
            } else {
                Value::Null
            },
        );
        top.insert("conjunction_elimination".into(), false.into());
        round_floats(Value::Object(top))
    }

    pub fn emit(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json())
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            OutputFormat::CsvSummary => self.csv_summary(),
        }
    }

    fn csv_summary(&self) -> Result<String> {
        let table = match &self.table {
            Some(t) => t.clone(),
            None => {
                let mut rows = Vec::new();
                flatten("", &round_floats(self.result.clone()), &mut rows);
                Table {
                    header: vec!["field".into(), "value".into()],
                    rows: rows
                        .into_iter()
                        .map(|(k, v)| vec![Value::String(k), v])
                        .collect(),
                }
            }
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Failed(e.to_string());
        w.write_record(&table.header).map_err(fail)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| cell(&round_floats(v.clone()))))
                .map_err(fail)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Failed(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Failed(e.to_string()))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Scalar leaves of `v` keyed by dotted path; arrays are indexed.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(k), x, out);
            }
        }
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&join(&i.to_string()), x, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// `x` rounded to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Rounds every non-integer number to 6 significant digits; integers are kept.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round6(n.as_f64().unwrap_or(0.0));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(round_floats).collect()),
        Value::Object(m) => {
            Value::Object(m.into_iter().map(|(k, x)| (k, round_floats(x))).collect())
        }
        other => other,
    }
}

/// JSON number for a float; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    Number::from_f64(x).map_or(Value::Null, Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_keeps_six_significant_digits() {
        assert_eq!(round6(19.931568569324174), 19.9316);
        assert_eq!(round6(0.000123456789), 0.000123457);
        assert_eq!(round6(-2.5), -2.5);
        let v = round_floats(json!({"a": [1.23456789, 7], "b": {"c": 1e-20}}));
        assert_eq!(v, json!({"a": [1.23457, 7], "b": {"c": 1e-20}}));
    }

    #[test]
    fn field_order_is_fixed() {
        let mut r = Report::new("depth");
        r.input("kb", "sha256:00").param("query", "q(a)");
        r.result = json!({"depth": 0});
        let s = r.emit(OutputFormat::Json).unwrap();
        let keys = [
            "\"command\"",
            "\"tool_version\"",
            "\"input_digests\"",
            "\"parameters\"",
            "\"result\"",
            "\"proxy_disclaimer\"",
            "\"conjunction_elimination\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| s.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(r.emit(OutputFormat::Json).unwrap(), s);
    }

    #[test]
    fn csv_flattens_without_a_table() {
        let mut r = Report::new("x");
        r.result = json!({"a": 1, "b": [0.5, "s"]});
        let s = r.emit(OutputFormat::CsvSummary).unwrap();
        assert_eq!(s, "field,value\na,1\nb.0,0.5\nb.1,s\n");
    }
}
