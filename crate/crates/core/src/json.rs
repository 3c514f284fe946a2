//! Canonical JSON: object keys sorted, floats rounded to 9 significant
//! digits, two-space indentation. Equal values always serialize to the
//! same bytes.

use serde::Serialize;
use serde_json::Value;

use crate::Result;

pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    Ok(out)
}

/// Shortest decimal form of `x` after rounding to 9 significant digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let mut s = format!("{rounded}");
    if !s.contains(['.', 'e', 'E']) {
        s.push_str(".0");
    }
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(v: &Value, level: usize, out: &mut String) {
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64 number")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(level + 1, out);
                write_value(item, level + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(level, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                indent(level + 1, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*k], level + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(level, out);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_rounded_and_keys_sorted() {
        let s = to_canonical_string(&json!({"b": 0.1 + 0.2, "a": 2, "c": [1.0, -0.0, 2.0 / 3.0]})).unwrap();
        assert_eq!(s, "{\n  \"a\": 2,\n  \"b\": 0.3,\n  \"c\": [\n    1.0,\n    0.0,\n    0.666666667\n  ]\n}");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], json!(0.3));
    }

    #[test]
    fn tiny_and_huge_values() {
        assert_eq!(format_float(1e-7), "0.0000001");
        assert_eq!(format_float(123456789012.0), "123456789000.0");
        assert_eq!(format_float(f64::NAN), "null");
    }
}
