use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{Atomic, AtomicSpec, ModelError};
use crate::kernel::Counters;

/// Shared resources handed to factories when live atomics are created.
#[derive(Debug, Clone, Default)]
pub struct BuildContext {
    pub counters: Arc<Counters>,
}

pub type AtomicFactory = Arc<dyn Fn(&AtomicSpec, &BuildContext) -> Result<Box<dyn Atomic>, ModelError> + Send + Sync>;

/// A model kind: its port signature and how to instantiate it.
#[derive(Clone)]
pub struct ModelKind {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub factory: AtomicFactory,
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelKind")
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

/// Maps model kind names (the `model` attribute of an atomic) to factories.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    kinds: BTreeMap<String, ModelKind>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with the DEVStone and EF-P/GPT kinds.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        crate::devstone::register(&mut r);
        crate::gpt::register(&mut r);
        r
    }

    pub fn register<F>(&mut self, name: &str, inputs: &[&str], outputs: &[&str], factory: F) -> &mut Self
    where
        F: Fn(&AtomicSpec, &BuildContext) -> Result<Box<dyn Atomic>, ModelError> + Send + Sync + 'static,
    {
        self.kinds.insert(
            name.to_owned(),
            ModelKind {
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
                outputs: outputs.iter().map(|s| s.to_string()).collect(),
                factory: Arc::new(factory),
            },
        );
        self
    }

    pub fn kind(&self, name: &str) -> Option<&ModelKind> {
        self.kinds.get(name)
    }

    /// A spec named `name` of kind `model` with the kind's port signature.
    pub fn spec(&self, name: &str, model: &str) -> Result<AtomicSpec, ModelError> {
        let kind = self.kinds.get(model).ok_or_else(|| ModelError::UnknownKind {
            atomic: name.to_owned(),
            kind: model.to_owned(),
        })?;
        let mut spec = AtomicSpec::new(name, model);
        spec.inputs = kind.inputs.clone();
        spec.outputs = kind.outputs.clone();
        Ok(spec)
    }

    pub fn build(&self, spec: &AtomicSpec, ctx: &BuildContext) -> Result<Box<dyn Atomic>, ModelError> {
        let kind = self.kinds.get(&spec.model).ok_or_else(|| ModelError::UnknownKind {
            atomic: spec.name.clone(),
            kind: spec.model.clone(),
        })?;
        (kind.factory)(spec, ctx)
    }
}
