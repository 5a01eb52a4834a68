use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Applies [`sig12`] to every number in `v`. Non-finite numbers become null.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => {
                serde_json::Number::from_f64(sig12(x)).map_or(Value::Null, Value::Number)
            }
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        sig12(x).to_string()
    }
}

/// Writes pretty JSON to `path`, or to stdout when `path` is `None`.
pub fn emit_json(v: Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&round_json(v))? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

/// Coordinate column names: `t, x1, …`.
pub fn coord_headers(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim)
        .map(|k| {
            if k == 0 {
                format!("{prefix}t")
            } else {
                format!("{prefix}x{k}")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(sig12(0.1 + 0.2), 0.3);
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
        let v = round_json(json!({"a": [2.0000000000001, 3], "b": f64::NAN.to_string()}));
        assert_eq!(v["a"][0], json!(2.0));
        assert_eq!(v["a"][1], json!(3));
        assert_eq!(fmt_num(f64::NAN), "");
    }
}
