//! DEVStone synthetic benchmark: LI, HI and HO generators, the benchmark
//! atomic, the CPU-time delay loop, delay sampling and count formulas.

mod atomic;
mod busy;
mod delay;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use atomic::{DevstoneAtomic, SeedGenerator};
pub use busy::busy_cpu;
pub use delay::{sample_delays, DelayDistribution};

use crate::model::{AtomicSpec, Component, CouplingKind, ModelError, ModelGraph, ModelRegistry};

/// Model kind of the benchmark atomic.
pub const DEVSTONE_KIND: &str = "devstone";
/// Model kind of the one-shot trigger.
pub const SEED_KIND: &str = "seed";
/// Name of the trigger atomic at the top level.
pub const SEED_NAME: &str = "generator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Li,
    Hi,
    Ho,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Li => "LI",
            Shape::Hi => "HI",
            Shape::Ho => "HO",
        })
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LI" => Ok(Shape::Li),
            "HI" => Ok(Shape::Hi),
            "HO" => Ok(Shape::Ho),
            _ => Err(format!("unknown DEVStone shape {s:?} (expected LI, HI or HO)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevstoneConfig {
    pub shape: Shape,
    pub width: usize,
    pub depth: usize,
    pub delay: DelayDistribution,
    pub seed: u64,
}

impl DevstoneConfig {
    pub fn new(shape: Shape, width: usize, depth: usize) -> Self {
        Self {
            shape,
            width,
            depth,
            delay: DelayDistribution::Constant(0.0),
            seed: 0,
        }
    }

    /// HO with zero delays.
    pub fn ho(width: usize, depth: usize) -> Self {
        Self::new(Shape::Ho, width, depth)
    }

    pub fn with_delay(mut self, delay: DelayDistribution) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), DevstoneError> {
        if self.depth < 1 {
            return Err(DevstoneError::Config("depth must be at least 1".into()));
        }
        if self.width < 1 || (self.depth >= 2 && self.width < 2) {
            return Err(DevstoneError::Config(format!(
                "width must be at least 2 when depth >= 2 (got w={}, d={})",
                self.width, self.depth
            )));
        }
        Ok(())
    }

    /// Name of the generated top-level graph, e.g. `ho-15-15`.
    pub fn model_name(&self) -> String {
        format!("{}-{}-{}", self.shape.to_string().to_lowercase(), self.width, self.depth)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DevstoneError {
    #[error("invalid DEVStone configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A generated benchmark: the hierarchical graph (trigger plus root
/// benchmark coupled) and the delay drawn for every benchmark atomic.
#[derive(Debug, Clone)]
pub struct DevstoneModel {
    pub config: DevstoneConfig,
    pub graph: ModelGraph,
    /// Benchmark atomics in depth-first order with their delay; the trigger
    /// is not listed and always has zero delay.
    pub delays: Vec<(String, f64)>,
}

impl DevstoneModel {
    /// The root benchmark coupled model (level 1), without the trigger.
    pub fn benchmark(&self) -> &ModelGraph {
        self.graph.coupleds().next().expect("generated graph has a root coupled")
    }
}

fn level_name(level: usize) -> String {
    format!("C{level}")
}

fn atomic_name(i: usize, level: usize) -> String {
    format!("A{i}_{level}")
}

/// Benchmark atomic names in depth-first order.
fn atomic_names(width: usize, depth: usize) -> Vec<String> {
    let mut names = Vec::new();
    for level in 1..depth {
        names.extend((1..width).map(|i| atomic_name(i, level)));
    }
    names.push(atomic_name(1, depth));
    names
}

pub fn generate(config: &DevstoneConfig) -> Result<DevstoneModel, DevstoneError> {
    config.check()?;
    let names = atomic_names(config.width, config.depth);
    let delays = sample_delays(config.delay, &names, config.seed);
    let lookup: HashMap<&str, f64> = delays.iter().map(|(n, d)| (n.as_str(), *d)).collect();

    let root = build_level(config, 1, &lookup)?;
    let mut top = ModelGraph::new(config.model_name());
    top.add_component(seed_spec(SEED_NAME))?;
    let root_name = root.name.clone();
    top.add_component(root)?;
    top.connect(SEED_NAME, "out", &root_name, "in1")?;
    if config.shape == Shape::Ho {
        top.connect(SEED_NAME, "out", &root_name, "in2")?;
    }
    Ok(DevstoneModel {
        config: config.clone(),
        graph: top,
        delays,
    })
}

fn benchmark_spec(name: String, delay: f64) -> AtomicSpec {
    AtomicSpec::new(name, DEVSTONE_KIND)
        .input("in")
        .output("out")
        .delays(delay, delay)
}

fn seed_spec(name: &str) -> AtomicSpec {
    AtomicSpec::new(name, SEED_KIND).output("out")
}

fn build_level(config: &DevstoneConfig, level: usize, delays: &HashMap<&str, f64>) -> Result<ModelGraph, DevstoneError> {
    let me = level_name(level);
    let mut g = ModelGraph::new(&me).with_input("in1").with_output("out1");
    if config.shape == Shape::Ho {
        g = g.with_input("in2").with_output("out2");
    }

    if level == config.depth {
        let a = atomic_name(1, level);
        g.add_component(benchmark_spec(a.clone(), delays[a.as_str()]))?;
        g.connect(&me, "in1", &a, "in")?;
        g.connect(&a, "out", &me, "out1")?;
        return Ok(g);
    }

    let chain: Vec<String> = (1..config.width).map(|i| atomic_name(i, level)).collect();
    for a in &chain {
        g.add_component(benchmark_spec(a.clone(), delays[a.as_str()]))?;
    }
    let child = build_level(config, level + 1, delays)?;
    let child_name = child.name.clone();
    g.add_component(child)?;

    g.connect(&me, "in1", &child_name, "in1")?;
    match config.shape {
        Shape::Li | Shape::Hi => {
            for a in &chain {
                g.connect(&me, "in1", a, "in")?;
            }
        }
        Shape::Ho => {
            g.connect(&me, "in2", &child_name, "in2")?;
            for a in &chain {
                g.connect(&me, "in2", a, "in")?;
            }
        }
    }
    if config.shape != Shape::Li {
        for pair in chain.windows(2) {
            g.connect(&pair[0], "out", &pair[1], "in")?;
        }
    }
    g.connect(&child_name, "out1", &me, "out1")?;
    if config.shape == Shape::Ho {
        for a in &chain {
            g.connect(a, "out", &me, "out2")?;
        }
    }
    Ok(g)
}

/// Structural and dynamic counts of a benchmark (trigger excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExpectedCounts {
    pub atomics: u64,
    pub eic: u64,
    pub ic: u64,
    pub eoc: u64,
    pub delt_ints: u64,
    pub delt_exts: u64,
    pub events: u64,
}

/// Closed-form HO counts for width `w` and depth `d`.
pub fn expected_counts(w: u64, d: u64) -> ExpectedCounts {
    let transitions = 1 + (d - 1) * (w * w - w) / 2;
    ExpectedCounts {
        atomics: 1 + (d - 1) * (w - 1),
        eic: 1 + (d - 1) * (w + 1),
        ic: (d - 1) * (w.saturating_sub(2)),
        eoc: 1 + (d - 1) * w,
        delt_ints: transitions,
        delt_exts: transitions,
        events: transitions,
    }
}

/// Counts atomics and couplings of a benchmark graph by walking it,
/// summing over every coupled level.
pub fn structural_counts(benchmark: &ModelGraph) -> ExpectedCounts {
    let mut c = ExpectedCounts::default();
    walk(benchmark, &mut c);
    c
}

fn walk(g: &ModelGraph, c: &mut ExpectedCounts) {
    for comp in g.components() {
        match comp {
            Component::Atomic(_) => c.atomics += 1,
            Component::Coupled(child) => walk(child, c),
        }
    }
    for coupling in g.couplings() {
        match coupling.kind {
            CouplingKind::Eic => c.eic += 1,
            CouplingKind::Ic => c.ic += 1,
            CouplingKind::Eoc => c.eoc += 1,
        }
    }
}

/// Adds the `devstone` and `seed` kinds.
pub fn register(registry: &mut ModelRegistry) {
    registry.register(DEVSTONE_KIND, &["in"], &["out"], |spec, ctx| {
        Ok(Box::new(DevstoneAtomic::new(
            spec.delay_int,
            spec.delay_ext,
            Arc::clone(&ctx.counters),
        )))
    });
    registry.register(SEED_KIND, &[], &["out"], |_, _| Ok(Box::new(SeedGenerator::default())));
}
