//! Canonical response encoding: object keys sorted, floats rounded to
//! [`FLOAT_DIGITS`] significant digits then printed shortest-round-trip.

use serde::Serialize;
use serde_json::{Number, Value};

pub const FLOAT_DIGITS: usize = 9;

pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", FLOAT_DIGITS - 1, v).parse().expect("exponent form parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|f| Number::from_f64(round_sig(f)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

pub fn canonical_json<S: Serialize>(value: &S) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&canonicalize(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig(-123456789.87), -123456790.0);
        assert_eq!(round_sig(2.5e-300), 2.5e-300);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn keys_sorted_and_integers_untouched() {
        let s = canonical_json(&json!({"b": [1.0 / 3.0, 7], "a": {"z": u64::MAX, "y": 0.5}})).unwrap();
        assert_eq!(s, r#"{"a":{"y":0.5,"z":18446744073709551615},"b":[0.333333333,7]}"#);
    }
}
