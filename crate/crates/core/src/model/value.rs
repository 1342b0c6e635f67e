use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Content carried by an event through a port.
///
/// The set is closed so every value a sequential run can carry also crosses
/// the distributed wire encoding unchanged.
#[derive(Debug, Clone)]
pub enum EventValue {
    Integer(i64),
    Real(f64),
    Text(String),
    List(Vec<EventValue>),
}

impl PartialEq for EventValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Integer(a), Self::Integer(b)) => a == b,
            // Bitwise, with all NaNs equal: a decoded NaN need not keep its payload.
            (Self::Real(a), Self::Real(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Self::Text(a), Self::Text(b)) => a == b,
            (Self::List(a), Self::List(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for EventValue {}

impl From<i64> for EventValue {
    fn from(v: i64) -> Self {
        Self::Integer(v)
    }
}

impl From<f64> for EventValue {
    fn from(v: f64) -> Self {
        Self::Real(v)
    }
}

impl From<&str> for EventValue {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

impl From<String> for EventValue {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl fmt::Display for EventValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Integer(v) => write!(f, "{v}"),
            Self::Real(v) => write!(f, "{v:?}"),
            Self::Text(v) => write!(f, "{v:?}"),
            Self::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

// Wire form: {"int":5} | {"real":1.5} | {"text":"a"} | {"list":[...]}.
// Non-finite reals travel as the strings "inf", "-inf" and "nan".
#[derive(Serialize, Deserialize)]
enum Tagged {
    #[serde(rename = "int")]
    Integer(i64),
    #[serde(rename = "real")]
    Real(#[serde(with = "crate::model::value::real")] f64),
    #[serde(rename = "text")]
    Text(String),
    #[serde(rename = "list")]
    List(Vec<EventValue>),
}

impl Serialize for EventValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Integer(v) => Tagged::Integer(*v).serialize(serializer),
            Self::Real(v) => Tagged::Real(*v).serialize(serializer),
            Self::Text(v) => Tagged::Text(v.clone()).serialize(serializer),
            Self::List(v) => Tagged::List(v.clone()).serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for EventValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match Tagged::deserialize(deserializer)? {
            Tagged::Integer(v) => Self::Integer(v),
            Tagged::Real(v) => Self::Real(v),
            Tagged::Text(v) => Self::Text(v),
            Tagged::List(v) => Self::List(v),
        })
    }
}

/// Serde helpers for reals that may be infinite or NaN.
pub(crate) mod real {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Symbol(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            serializer.serialize_f64(*v)
        } else if v.is_nan() {
            serializer.serialize_str("nan")
        } else if *v > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(v),
            Repr::Symbol(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid real {other:?}"))),
            },
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, serializer),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(deserializer)?.map(|w| w.0))
        }
    }
}

/// Events waiting on one port during a simulation cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageBag(Vec<EventValue>);

impl MessageBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: impl Into<EventValue>) {
        self.0.push(value.into());
    }

    pub fn extend_from_slice(&mut self, values: &[EventValue]) {
        self.0.extend_from_slice(values);
    }

    pub fn values(&self) -> &[EventValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }
}

impl fmt::Display for MessageBag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

impl From<Vec<EventValue>> for MessageBag {
    fn from(values: Vec<EventValue>) -> Self {
        Self(values)
    }
}

/// The named bags of one side (inputs or outputs) of a component.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortBags {
    ports: Vec<(String, MessageBag)>,
}

impl PortBags {
    pub fn with_ports<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            ports: names.into_iter().map(|n| (n.into(), MessageBag::new())).collect(),
        }
    }

    pub fn index_of(&self, port: &str) -> Option<usize> {
        self.ports.iter().position(|(n, _)| n == port)
    }

    pub fn get(&self, port: &str) -> Option<&MessageBag> {
        self.ports.iter().find(|(n, _)| n == port).map(|(_, b)| b)
    }

    /// Values on `port`, or an empty slice when the port is absent or idle.
    pub fn values(&self, port: &str) -> &[EventValue] {
        self.get(port).map(MessageBag::values).unwrap_or(&[])
    }

    pub fn bag_mut(&mut self, port: &str) -> Option<&mut MessageBag> {
        self.ports.iter_mut().find(|(n, _)| n == port).map(|(_, b)| b)
    }

    pub fn bag_at(&self, index: usize) -> &MessageBag {
        &self.ports[index].1
    }

    pub fn bag_at_mut(&mut self, index: usize) -> &mut MessageBag {
        &mut self.ports[index].1
    }

    /// Appends `value` to `port`. Returns false when no such port exists.
    pub fn push(&mut self, port: &str, value: impl Into<EventValue>) -> bool {
        match self.bag_mut(port) {
            Some(bag) => {
                bag.push(value);
                true
            }
            None => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MessageBag)> {
        self.ports.iter().map(|(n, b)| (n.as_str(), b))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ports.iter().map(|(n, _)| n.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.ports.iter().all(|(_, b)| b.is_empty())
    }

    pub fn total_len(&self) -> usize {
        self.ports.iter().map(|(_, b)| b.len()).sum()
    }

    pub fn clear(&mut self) {
        for (_, bag) in &mut self.ports {
            bag.clear();
        }
    }

    /// `port=[v,..]` for every non-empty port, joined by spaces.
    pub(crate) fn describe(&self) -> String {
        let mut out = String::new();
        for (name, bag) in self.iter().filter(|(_, b)| !b.is_empty()) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(name);
            out.push('=');
            out.push_str(&bag.to_string());
        }
        out
    }
}
