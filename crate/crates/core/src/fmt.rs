//! Bit-stable text output: every float is written with 17 significant digits.

use std::io;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

/// Float rendering shared by the JSON and CSV writers. Non-finite values
/// become `null` in JSON and `nan`/`inf` in CSV.
pub fn float17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Float17Formatter;

impl Formatter for Float17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(float17(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    // Everything else keeps the compact layout.
    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        CompactFormatter.begin_array(writer)
    }
}

/// Serialize `value` as single-line JSON with 17-digit floats.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Float17Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// Reads a float that may have been written as `null`, taking it as +inf.
/// Clearances with nothing in range are the only such values.
pub fn f64_or_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 12345.678, 0.0] {
            let s = float17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        let line = to_json_line(&serde_json::json!({"a": [0.1, 2], "b": f64::NAN})).unwrap();
        assert_eq!(line, r#"{"a":[1.0000000000000001e-1,2],"b":null}"#);
        let back: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(back["a"][0].as_f64().unwrap(), 0.1);
    }
}
