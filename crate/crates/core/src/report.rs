//! Deterministic JSON rendering.
//!
//! Every float is written with 17 significant digits so that output is
//! byte-identical across runs and round-trips to the same `f64`. Exact
//! results additionally carry their rational values as `"a/b"` strings.

use serde::Serialize;
use serde_json::{json, Map, Number, Value};

use crate::adjust::AdjustmentResult;
use crate::error::{Error, Result};
use crate::nullmodels::EstimateResult;
use crate::scalar::Scalar;

/// 17 significant digits in scientific notation; non-finite values use
/// their usual names.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.16e}");
        match s.split_once('e') {
            Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
            _ => s,
        }
    } else {
        x.to_string()
    }
}

fn float_value(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(fmt_float(x).parse::<Number>().expect("formatted float is valid JSON"))
    } else {
        Value::String(x.to_string())
    }
}

/// Rewrites every non-integer number in place.
fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => {
            if let Some(x) = n.as_f64() {
                *v = float_value(x);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::Object(map) => map.values_mut().for_each(normalize),
        _ => {}
    }
}

/// Pretty-printed JSON with normalized floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Input(format!("serialization failed: {e}")))?;
    normalize(&mut v);
    Ok(render(&v))
}

pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn scalar<S: Scalar>(x: &S) -> Value {
    float_value(x.to_f64())
}

pub fn estimate_json<S: Scalar>(e: &EstimateResult<S>) -> Value {
    let mut m = Map::new();
    m.insert("value".into(), scalar(&e.value));
    m.insert("method".into(), json!(e.method.as_str()));
    m.insert("stderr".into(), e.mc_std_error.map(float_value).unwrap_or(Value::Null));
    if let Some(n) = e.samples {
        m.insert("samples".into(), json!(n));
    }
    if S::EXACT {
        m.insert("exact".into(), json!(e.value.render()));
    }
    Value::Object(m)
}

pub fn adjustment_json<S: Scalar>(r: &AdjustmentResult<S>) -> Value {
    let mut m = Map::new();
    m.insert("index".into(), json!(r.index));
    m.insert("model".into(), json!(r.model.as_str()));
    m.insert("max_spec".into(), json!(r.max_spec));
    m.insert("raw".into(), scalar(&r.raw));
    m.insert("expected".into(), estimate_json(&r.expected));
    m.insert("max".into(), scalar(&r.max_value));
    m.insert("adjusted".into(), scalar(&r.adjusted));
    m.insert("degenerate".into(), json!(r.degenerate));
    m.insert("convention_c".into(), scalar(&r.convention_c));
    m.insert("seed".into(), r.expected.seed.map(|s| json!(s)).unwrap_or(Value::Null));
    if S::EXACT {
        m.insert(
            "exact".into(),
            json!({
                "raw": r.raw.render(),
                "expected": r.expected.value.render(),
                "max": r.max_value.render(),
                "adjusted": r.adjusted.render(),
                "convention_c": r.convention_c.render(),
            }),
        );
    }
    if !r.notes.is_empty() {
        m.insert("notes".into(), json!(r.notes));
    }
    Value::Object(m)
}
