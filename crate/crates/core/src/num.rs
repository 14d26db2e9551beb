//! Serde adapters that write reals as decimal strings with 17 significant
//! digits, which round-trip every finite `f64` bit-exactly. Non-finite
//! values are written as `"inf"`, `"-inf"` and `"nan"`.

use serde::{Deserialize, Deserializer, Serializer};

pub fn format(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(*x))
}

/// Input side accepts either the string form or a plain JSON number.
#[derive(Deserialize)]
#[serde(untagged)]
enum Raw {
    Text(String),
    Number(f64),
}

impl Raw {
    fn real<E: serde::de::Error>(self) -> Result<f64, E> {
        match self {
            Raw::Number(x) => Ok(x),
            Raw::Text(s) => parse(&s).ok_or_else(|| E::custom(format!("bad real `{s}`"))),
        }
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Raw::deserialize(d)?.real()
}

pub mod vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::format(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<super::Raw>::deserialize(d)?.into_iter().map(super::Raw::real).collect()
    }
}

pub mod vecvec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for row in xs {
            let row: Vec<String> = row.iter().map(|x| super::format(*x)).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let raw = Vec::<Vec<super::Raw>>::deserialize(d)?;
        raw.into_iter().map(|row| row.into_iter().map(super::Raw::real).collect()).collect()
    }
}

pub mod vecvecvec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[Vec<Vec<f64>>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for block in xs {
            let block: Vec<Vec<String>> = block.iter().map(|row| row.iter().map(|x| super::format(*x)).collect()).collect();
            seq.serialize_element(&block)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Vec<f64>>>, D::Error> {
        let raw = Vec::<Vec<Vec<super::Raw>>>::deserialize(d)?;
        raw.into_iter().map(|block| block.into_iter().map(|row| row.into_iter().map(super::Raw::real).collect()).collect()).collect()
    }
}

pub mod opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&super::format(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<super::Raw>::deserialize(d)?.map(super::Raw::real).transpose()
    }
}

pub mod optvec {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&v.iter().map(|x| super::format(*x)).collect::<Vec<_>>()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let raw = Option::<Vec<super::Raw>>::deserialize(d)?;
        raw.map(|v| v.into_iter().map(super::Raw::real).collect()).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn finite_reals_round_trip_bit_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse(&format(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn non_finite_tokens() {
        assert_eq!(format(f64::NEG_INFINITY), "-inf");
        assert!(parse("nan").unwrap().is_nan());
        assert_eq!(format(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn plain_numbers_are_accepted_on_input() {
        #[derive(serde::Deserialize)]
        struct W {
            #[serde(with = "super")]
            a: f64,
            #[serde(with = "super::vec")]
            b: Vec<f64>,
        }
        let w: W = serde_json::from_str(r#"{"a": 1.5, "b": [2, "3.0", "-inf"]}"#).unwrap();
        assert_eq!(w.a, 1.5);
        assert_eq!(&w.b[..2], &[2.0, 3.0]);
        assert_eq!(w.b[2], f64::NEG_INFINITY);
    }
}
