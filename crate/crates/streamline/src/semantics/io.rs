//! JSON input and report rendering.
//!
//! Run inputs look like
//!
//! ```json
//! {
//!   "params":  { "N": 8 },
//!   "heap":    { "a": { "0": 3, "-1": "12345678901234567890" } },
//!   "streams": { "in": [1, 2, 3] }
//! }
//! ```
//!
//! Integers may be JSON numbers or decimal strings (for values outside the
//! 64-bit range); heap keys are decimal strings since JSON keys are always
//! strings. Reports render with the same convention, so outputs can be fed
//! back in as inputs where shapes overlap.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::ast::{Int, Name};

use super::{ExecReport, Outcome, State};

/// Contents of a run-input file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Input {
    pub params: BTreeMap<Name, Int>,
    pub heap: BTreeMap<Name, BTreeMap<Int, Int>>,
    pub streams: BTreeMap<Name, Vec<Int>>,
}

pub fn parse_input(text: &str) -> Result<Input, String> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let top = as_object(&value, "input")?;
    let mut input = Input::default();
    for (key, val) in top {
        match key.as_str() {
            "params" => {
                for (name, v) in as_object(val, "params")? {
                    input
                        .params
                        .insert(name.clone(), as_int(v, &format!("params.{name}"))?);
                }
            }
            "heap" => {
                for (name, cells) in as_object(val, "heap")? {
                    let ctx = format!("heap.{name}");
                    let mut map = BTreeMap::new();
                    for (idx, v) in as_object(cells, &ctx)? {
                        let i = idx.trim().parse::<Int>().map_err(|_| {
                            format!("{ctx}: key `{idx}` is not a decimal integer")
                        })?;
                        map.insert(i, as_int(v, &format!("{ctx}.{idx}"))?);
                    }
                    input.heap.insert(name.clone(), map);
                }
            }
            "streams" => {
                for (name, items) in as_object(val, "streams")? {
                    let ctx = format!("streams.{name}");
                    let Value::Array(items) = items else {
                        return Err(format!("{ctx}: expected an array"));
                    };
                    let mut seq = Vec::with_capacity(items.len());
                    for (k, v) in items.iter().enumerate() {
                        seq.push(as_int(v, &format!("{ctx}[{k}]"))?);
                    }
                    input.streams.insert(name.clone(), seq);
                }
            }
            other => {
                return Err(format!(
                    "unknown input key `{other}` (expected params, heap, streams)"
                ))
            }
        }
    }
    Ok(input)
}

fn as_object<'v>(v: &'v Value, ctx: &str) -> Result<&'v Map<String, Value>, String> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(format!("{ctx}: expected a JSON object")),
    }
}

fn as_int(v: &Value, ctx: &str) -> Result<Int, String> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Int::from(i))
            } else if let Some(u) = n.as_u64() {
                Ok(Int::from(u))
            } else {
                Err(format!("{ctx}: expected an integer, got `{n}`"))
            }
        }
        Value::String(s) => s
            .trim()
            .parse::<Int>()
            .map_err(|_| format!("{ctx}: `{s}` is not a decimal integer")),
        other => Err(format!("{ctx}: expected an integer, got {other}")),
    }
}

/// Renders as a JSON number when the value fits in 64 bits, otherwise as a
/// decimal string.
pub fn int_to_json(n: &Int) -> Value {
    match i64::try_from(n) {
        Ok(i) => json!(i),
        Err(_) => json!(n.to_string()),
    }
}

pub fn input_to_json(input: &Input) -> Value {
    json!({
        "params": input.params.iter().map(|(k, v)| (k.clone(), int_to_json(v))).collect::<Map<_, _>>(),
        "heap": input.heap.iter().map(|(a, cells)| {
            (a.clone(), Value::Object(cells.iter().map(|(i, v)| (i.to_string(), int_to_json(v))).collect()))
        }).collect::<Map<_, _>>(),
        "streams": input.streams.iter().map(|(s, items)| {
            (s.clone(), Value::Array(items.iter().map(int_to_json).collect()))
        }).collect::<Map<_, _>>(),
    })
}

pub fn state_to_json(state: &State) -> Value {
    json!({
        "regs": state.regs.iter().map(|(k, v)| (k.clone(), int_to_json(v))).collect::<Map<_, _>>(),
        "heap": state.heap.iter().map(|(a, cells)| {
            (a.clone(), Value::Object(cells.iter().map(|(i, v)| (i.to_string(), int_to_json(v))).collect()))
        }).collect::<Map<_, _>>(),
        "streams": state.streams.iter().map(|(s, items)| {
            (s.clone(), Value::Array(items.iter().map(int_to_json).collect()))
        }).collect::<Map<_, _>>(),
    })
}

pub fn report_to_json(report: &ExecReport) -> Value {
    let (status, reason) = match &report.outcome {
        Outcome::Normal => ("normal", None),
        Outcome::Stuck(msg) => ("stuck", Some(msg.clone())),
        Outcome::OutOfFuel => ("out-of-fuel", None),
    };
    let counts = |c: &super::AccessCounts| {
        json!({
            "heap_reads": c.heap_reads,
            "heap_writes": c.heap_writes,
            "stream_reads": c.stream_reads,
            "stream_writes": c.stream_writes,
        })
    };
    let mut out = json!({
        "status": status,
        "steps": report.steps,
        "rules": report.rules,
        "state": state_to_json(&report.state),
        "counts": { "total": counts(&report.total), "kernel": counts(&report.kernel) },
    });
    if let Some(reason) = reason {
        out["stuck_reason"] = json!(reason);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_parse_numbers_and_decimal_strings() {
        let input = parse_input(
            r#"{"params": {"N": 4}, "heap": {"a": {"0": 1, "-2": "98765432109876543210"}}, "streams": {"in": [5, "6"]}}"#,
        )
        .unwrap();
        assert_eq!(input.params["N"], Int::from(4));
        assert_eq!(input.heap["a"][&Int::from(-2)], "98765432109876543210".parse().unwrap());
        assert_eq!(input.streams["in"], vec![Int::from(5), Int::from(6)]);
    }

    #[test]
    fn bad_inputs_name_the_offending_path() {
        assert!(parse_input(r#"{"params": {"N": 1.5}}"#).unwrap_err().contains("params.N"));
        assert!(parse_input(r#"{"heap": {"a": {"x": 1}}}"#)
            .unwrap_err()
            .contains("heap.a: key `x`"));
        assert!(parse_input(r#"{"volume": 11}"#).unwrap_err().contains("unknown input key"));
    }

    #[test]
    fn input_rendering_roundtrips() {
        let text = r#"{"params": {"N": 4}, "heap": {"a": {"-1": 7}}, "streams": {"in": [1]}}"#;
        let input = parse_input(text).unwrap();
        let rendered = input_to_json(&input).to_string();
        assert_eq!(parse_input(&rendered).unwrap(), input);
    }

    #[test]
    fn oversized_integers_render_as_strings() {
        let big: Int = "98765432109876543210".parse().unwrap();
        assert_eq!(int_to_json(&big), serde_json::json!("98765432109876543210"));
        assert_eq!(int_to_json(&Int::from(-3)), serde_json::json!(-3));
    }
}
