//! Serde adapter for `f64` fields that may legitimately be infinite.
//!
//! JSON has no infinity, so `+inf` is written as the string `"unbounded"`,
//! `-inf` as `"-unbounded"` and NaN as `"nan"`. Finite values stay numbers.

use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("unbounded")
    } else {
        s.serialize_str("-unbounded")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Tag(String),
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Tag(t) => match t.as_str() {
            "unbounded" | "inf" => Ok(f64::INFINITY),
            "-unbounded" | "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(de::Error::custom(format!("expected a number or \"unbounded\", got {other:?}"))),
        },
    }
}
