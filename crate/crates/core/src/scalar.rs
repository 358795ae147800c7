//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the model head is computed in: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance under which two objective values count as tied.
    fn tie_tolerance() -> Self;

    /// Relative tolerance used when checking pooled values against map means.
    fn pooling_tolerance() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }
}

impl Scalar for f64 {
    fn tie_tolerance() -> Self {
        1e-9
    }

    fn pooling_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn tie_tolerance() -> Self {
        1e-5
    }

    fn pooling_tolerance() -> Self {
        1e-5
    }
}

/// Absolute tie tolerance around `reference`.
pub(crate) fn tie_band<T: Scalar>(reference: T) -> T {
    T::tie_tolerance() * reference.abs().max(T::one())
}


/// Serde adapter for reals that may be infinite; JSON has no infinity literal.
pub(crate) mod extended_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Scalar;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<T: Scalar, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        let f = v.to_f64_lossy();
        if f.is_finite() {
            Repr::Num(f).serialize(s)
        } else if f.is_nan() {
            Repr::Text("nan".into()).serialize(s)
        } else if f > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Text("-inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let f = match Repr::deserialize(d)? {
            Repr::Num(f) => f,
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "invalid extended real {other:?}"
                    )))
                }
            },
        };
        T::from_f64(f).ok_or_else(|| serde::de::Error::custom("value not representable"))
    }
}
