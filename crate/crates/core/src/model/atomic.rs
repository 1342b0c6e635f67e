use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use super::value::PortBags;

/// Failure raised by a model's transition or output function.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransitionError(pub String);

impl TransitionError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Behavior of a DEVS atomic model.
///
/// Implementations own their state (phase, sigma and model data). The
/// simulator calls exactly one of `delta_int`, `delta_ext` or `delta_con`
/// per cycle in which the model is imminent or receives input, and calls
/// `lambda` only when the model is imminent. `time_advance` must return the
/// current sigma; `f64::INFINITY` marks a passive model.
pub trait Atomic: Send {
    fn initialize(&mut self) {}

    fn time_advance(&self) -> f64;

    fn delta_int(&mut self) -> Result<(), TransitionError>;

    fn delta_ext(&mut self, elapsed: f64, inputs: &PortBags) -> Result<(), TransitionError>;

    /// Internal and external events collide. Default: internal first, then
    /// external with zero elapsed time.
    fn delta_con(&mut self, inputs: &PortBags) -> Result<(), TransitionError> {
        self.delta_int()?;
        self.delta_ext(0.0, inputs)
    }

    fn lambda(&self, outputs: &mut PortBags);

    fn phase(&self) -> &str;

    /// Short text snapshot of the state, compared across backends.
    fn state_summary(&self) -> String {
        format!("{} sigma={}", self.phase(), self.time_advance())
    }
}

/// Declarative description of an atomic component inside a [`ModelGraph`].
///
/// A spec names a model kind known to a [`ModelRegistry`], which turns it
/// into a live [`Atomic`] when a coordinator is built.
///
/// [`ModelGraph`]: super::ModelGraph
/// [`ModelRegistry`]: super::ModelRegistry
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicSpec {
    pub name: String,
    pub model: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// CPU seconds burnt inside the internal transition.
    pub delay_int: f64,
    /// CPU seconds burnt inside the external transition.
    pub delay_ext: f64,
    pub params: BTreeMap<String, String>,
}

impl AtomicSpec {
    pub fn new(name: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            model: model.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            delay_int: 0.0,
            delay_ext: 0.0,
            params: BTreeMap::new(),
        }
    }

    pub fn input(mut self, port: impl Into<String>) -> Self {
        self.inputs.push(port.into());
        self
    }

    pub fn output(mut self, port: impl Into<String>) -> Self {
        self.outputs.push(port.into());
        self
    }

    pub fn delays(mut self, delay_int: f64, delay_ext: f64) -> Self {
        self.delay_int = delay_int;
        self.delay_ext = delay_ext;
        self
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn param_f64(&self, key: &str) -> Result<Option<f64>, TransitionError> {
        self.params
            .get(key)
            .map(|raw| {
                parse_seconds(raw).ok_or_else(|| {
                    TransitionError::new(format!("atomic {}: parameter {key}={raw:?} is not a number", self.name))
                })
            })
            .transpose()
    }

    pub fn param_u64(&self, key: &str) -> Result<Option<u64>, TransitionError> {
        self.params
            .get(key)
            .map(|raw| {
                raw.parse::<u64>().map_err(|_| {
                    TransitionError::new(format!("atomic {}: parameter {key}={raw:?} is not a count", self.name))
                })
            })
            .transpose()
    }
}

impl Eq for AtomicSpec {}

impl Hash for AtomicSpec {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.model.hash(state);
        self.inputs.hash(state);
        self.outputs.hash(state);
        self.delay_int.to_bits().hash(state);
        self.delay_ext.to_bits().hash(state);
        self.params.hash(state);
    }
}

/// Parses a decimal number of seconds; accepts `inf`/`infinity`.
pub fn parse_seconds(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    match raw.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Some(f64::INFINITY),
        _ => raw.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}
