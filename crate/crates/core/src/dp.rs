//! Client-level clipping and Gaussian noising.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_vector, Params, Scalar, StreamRng, TOL_ZERO_NORM};

/// How the clipping threshold is chosen each round.
///
/// Serialized as a number for a fixed threshold or the string `"median"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipMode {
    Fixed(f64),
    /// Lower median of the round's pre-clip update norms.
    Median,
}

impl ClipMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClipMode::Fixed(c) if !(c > 0.0) => Err(Error::config(format!("clip threshold must be > 0 (got {c})"))),
            _ => Ok(()),
        }
    }
}

impl Serialize for ClipMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClipMode::Fixed(c) => s.serialize_f64(*c),
            ClipMode::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for ClipMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ClipMode;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive clipping threshold or \"median\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<ClipMode, E> {
                Ok(ClipMode::Fixed(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ClipMode, E> {
                Ok(ClipMode::Fixed(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ClipMode, E> {
                Ok(ClipMode::Fixed(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ClipMode, E> {
                match v {
                    "median" => Ok(ClipMode::Median),
                    "inf" | "none" => Ok(ClipMode::Fixed(f64::INFINITY)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Gaussian noise with per-coordinate variance `sigma^2 C^2 / S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn std(&self, clip: f64, sampled: usize) -> f64 {
        self.sigma * clip / (sampled as f64).sqrt()
    }

    pub fn variance(&self, clip: f64, sampled: usize) -> f64 {
        self.sigma * self.sigma * clip * clip / sampled as f64
    }
}

/// Scales `v` onto the ball of radius `c` if it lies outside.
///
/// Vectors already inside are returned unchanged, so clipping is idempotent.
pub fn clip<T: Scalar>(v: &Params<T>, c: T) -> Params<T> {
    let norm = v.l2_norm();
    if norm <= c {
        return v.clone();
    }
    let mut factor = c / norm;
    let mut out = v.scale(factor);
    while out.l2_norm() > c {
        factor *= T::one() - T::epsilon();
        out = v.scale(factor);
    }
    out
}

/// Adds `N(0, sigma^2 C^2 / S)` to every coordinate.
pub fn add_noise(
    v: &Params<f64>,
    spec: NoiseSpec,
    clip: f64,
    sampled: usize,
    rng: &mut StreamRng,
) -> Result<Params<f64>> {
    if sampled == 0 {
        return Err(Error::config("sampled client count must be >= 1"));
    }
    if spec.sigma == 0.0 {
        return Ok(v.clone());
    }
    let std = spec.std(clip, sampled);
    if !std.is_finite() {
        return Err(Error::config(format!("noise std is {std}; noise needs a finite clipping threshold")));
    }
    let noise = gaussian_vector::<f64, _>(v.len(), std, rng);
    v.add(&noise)
}

/// Clipping threshold for the round.
///
/// The median mode takes the lower median, so the threshold is always one of
/// the observed norms; it is floored at [`TOL_ZERO_NORM`] to stay positive.
pub fn resolve_clip_threshold(preclip_norms: &[f64], mode: ClipMode) -> Result<f64> {
    match mode {
        ClipMode::Fixed(c) => {
            mode.validate()?;
            Ok(c)
        }
        ClipMode::Median => {
            if preclip_norms.is_empty() {
                return Err(Error::config("median clipping needs at least one update norm"));
            }
            Ok(lower_median(preclip_norms).max(TOL_ZERO_NORM))
        }
    }
}

pub fn lower_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// L2 sensitivity of the mean of `sampled` clipped updates under
/// add/remove-one-client adjacency.
pub fn sensitivity(clip: f64, sampled: usize) -> f64 {
    clip / sampled as f64
}
