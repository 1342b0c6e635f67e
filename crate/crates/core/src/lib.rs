//! Parallel DEVS simulation engine.
//!
//! A [`ModelGraph`] describes a coupled model once; the same graph runs
//! under the [`SequentialCoordinator`], the worker-pool
//! [`ParallelCoordinator`] and the socket-based distributed coordinator.
//! The [`devstone`] module generates the DEVStone benchmark family.

pub mod cpu;
pub mod devstone;
pub mod distributed;
pub mod gpt;
pub mod harness;
pub mod kernel;
pub mod manifest;
pub mod model;
pub mod parallel;
pub mod plan;

pub use kernel::{
    CounterTriple, Counters, HierarchicalCoordinator, RunReport, SequentialCoordinator, SimError, SimOptions,
    SimulationClock,
};
pub use parallel::{ParallelCoordinator, PoolPlan};
pub use model::{
    flatten, validate, Atomic, AtomicSpec, Component, Coupling, CouplingKind, EventValue, MessageBag, ModelError,
    ModelGraph, ModelRegistry, PortBags, PortRef, TransitionError,
};
