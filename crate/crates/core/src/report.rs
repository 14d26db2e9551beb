//! The JSON envelope every command writes, and its shape check.
//!
//! Reals are written as 17-significant-digit strings, so a valid document
//! contains no JSON floating-point numbers at all.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ENVELOPE_KEYS: [&str; 6] = ["tool_version", "command", "seed", "config", "reports", "wall_time_ms"];

fn to_value<T: Serialize>(what: &str, v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Internal(format!("serialising {what}: {e}")))
}

/// Wrap reports with the invocation metadata. `wall_time_ms` stays null
/// unless timings were requested, keeping default output byte-stable.
pub fn envelope<C: Serialize, R: Serialize>(
    command: &str,
    seed: u64,
    config: &C,
    reports: &[R],
    wall_time_ms: Option<u64>,
) -> Result<Value> {
    let mut m = Map::new();
    m.insert("tool_version".into(), Value::String(TOOL_VERSION.into()));
    m.insert("command".into(), Value::String(command.into()));
    m.insert("seed".into(), Value::from(seed));
    m.insert("config".into(), to_value("config", config)?);
    m.insert("reports".into(), to_value("reports", &reports)?);
    m.insert("wall_time_ms".into(), wall_time_ms.map_or(Value::Null, Value::from));
    let v = Value::Object(m);
    validate(&v)?;
    Ok(v)
}

fn find_float(v: &Value, path: &mut String) -> bool {
    match v {
        Value::Number(n) => !(n.is_u64() || n.is_i64()),
        Value::Array(items) => items.iter().enumerate().any(|(i, x)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let hit = find_float(x, path);
            if !hit {
                path.truncate(len);
            }
            hit
        }),
        Value::Object(m) => m.iter().any(|(k, x)| {
            let len = path.len();
            path.push('.');
            path.push_str(k);
            let hit = find_float(x, path);
            if !hit {
                path.truncate(len);
            }
            hit
        }),
        _ => false,
    }
}

/// Exact top-level keys, an array of reports, and no float literals.
pub fn validate(v: &Value) -> Result<()> {
    let obj = v.as_object().ok_or_else(|| Error::Internal("report envelope is not an object".into()))?;
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut want = ENVELOPE_KEYS.to_vec();
    want.sort_unstable();
    if keys != want {
        return Err(Error::Internal(format!("envelope keys {keys:?}, expected {want:?}")));
    }
    if !obj["reports"].is_array() {
        return Err(Error::Internal("`reports` is not an array".into()));
    }
    let mut path = String::from("$");
    if find_float(v, &mut path) {
        return Err(Error::Internal(format!("floating-point literal at {path}")));
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialise");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::scenarios::{run_scenario, ScenarioConfig};

    #[test]
    fn scenario_envelope_validates() {
        let cfg = ScenarioConfig::with_seed(4);
        let r = run_scenario("intermediate_loss_design", &cfg).unwrap();
        let v = envelope("run", 4, &cfg, &[r], None).unwrap();
        assert_eq!(v["wall_time_ms"], Value::Null);
        assert_eq!(v["tool_version"], TOOL_VERSION);
    }

    #[test]
    fn floats_and_extra_keys_are_rejected() {
        let good = json!({"tool_version": "x", "command": "c", "seed": 1, "config": {}, "reports": [], "wall_time_ms": null});
        validate(&good).unwrap();
        let mut bad = good.clone();
        bad["reports"] = json!([{"a": [1, 2.5]}]);
        match validate(&bad) {
            Err(Error::Internal(msg)) => assert!(msg.contains("$.reports[0].a[1]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut extra = good.clone();
        extra["runtime"] = json!(3);
        assert!(validate(&extra).is_err());
        let mut missing = good;
        missing.as_object_mut().unwrap().remove("seed");
        assert!(validate(&missing).is_err());
    }
}
