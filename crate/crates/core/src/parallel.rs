//! Worker-pool parallel coordinator.
//!
//! Atomics are assigned to named pools. In each phase the pools run one
//! after another in declared order; inside a pool the phase tasks run
//! concurrently on that pool's threads. Output propagation happens on the
//! coordinator thread between the lambda and delta phases, so the traces
//! are identical to the sequential coordinator's.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::kernel::{Counters, FlatModel, RunReport, SimError, SimOptions, SimulationClock, Simulator};
use crate::model::{ModelGraph, ModelRegistry};

/// Logical CPUs, the default worker count of a pool.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub name: String,
    pub workers: usize,
}

/// Ordered worker pools plus the pool of every atomic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolPlan {
    pools: Vec<Pool>,
    assignment: BTreeMap<String, String>,
}

impl PoolPlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// One pool holding every listed atomic.
    pub fn single<I, S>(pool: &str, workers: usize, atomics: I) -> Result<Self, SimError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut plan = Self::new();
        plan.add_pool(pool, workers)?;
        for a in atomics {
            plan.assign(a, pool)?;
        }
        Ok(plan)
    }

    pub fn add_pool(&mut self, name: &str, workers: usize) -> Result<&mut Self, SimError> {
        if workers == 0 {
            return Err(SimError::Plan(format!("pool {name:?} needs at least one worker")));
        }
        if self.pools.iter().any(|p| p.name == name) {
            return Err(SimError::Plan(format!("duplicate pool {name:?}")));
        }
        self.pools.push(Pool {
            name: name.to_owned(),
            workers,
        });
        Ok(self)
    }

    pub fn assign(&mut self, atomic: impl Into<String>, pool: &str) -> Result<&mut Self, SimError> {
        let atomic = atomic.into();
        if !self.pools.iter().any(|p| p.name == pool) {
            return Err(SimError::Plan(format!("atomic {atomic:?} assigned to unknown pool {pool:?}")));
        }
        self.assignment.insert(atomic, pool.to_owned());
        Ok(self)
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn pool_of(&self, atomic: &str) -> Option<&str> {
        self.assignment.get(atomic).map(String::as_str)
    }

    pub fn assignment(&self) -> &BTreeMap<String, String> {
        &self.assignment
    }

    /// Worker counts joined by `x`, e.g. `4x2`.
    pub fn label(&self) -> String {
        self.pools
            .iter()
            .map(|p| p.workers.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Lambda,
    Delta,
}

/// One executed phase task, with start and end offsets from coordinator
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub cycle: u64,
    pub phase: Phase,
    pub pool: usize,
    pub atomic: String,
    pub start: Duration,
    pub end: Duration,
}

/// Marks the single-threaded propagation step of a cycle in the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationRecord {
    pub cycle: u64,
    pub start: Duration,
    pub end: Duration,
}

#[derive(Debug, Default)]
struct TaskLog {
    tasks: Vec<TaskRecord>,
    propagations: Vec<PropagationRecord>,
}

struct PoolRuntime {
    name: String,
    threads: rayon::ThreadPool,
}

pub struct ParallelCoordinator {
    model: FlatModel,
    pools: Vec<PoolRuntime>,
    /// Pool index of every simulator.
    pool_of: Vec<usize>,
    label: String,
    imminent: Option<Vec<usize>>,
    epoch: Instant,
    log: Option<Arc<Mutex<TaskLog>>>,
}

impl std::fmt::Debug for ParallelCoordinator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelCoordinator")
            .field("model", &self.model.name())
            .field("pools", &self.pools.iter().map(|p| &p.name).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl ParallelCoordinator {
    /// Flattens `graph` and checks that `plan` covers exactly its atomics.
    pub fn new(graph: &ModelGraph, registry: &ModelRegistry, plan: &PoolPlan, options: SimOptions) -> Result<Self, SimError> {
        let model = FlatModel::build(graph, registry, Arc::new(Counters::new()), options)?;
        let index: HashMap<&str, usize> = plan.pools.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();

        let mut pool_of = Vec::with_capacity(model.simulators().len());
        for sim in model.simulators() {
            let pool = plan
                .pool_of(sim.name())
                .ok_or_else(|| SimError::Plan(format!("atomic {:?} is not assigned to any pool", sim.name())))?;
            pool_of.push(index[pool]);
        }
        if let Some(extra) = plan
            .assignment
            .keys()
            .find(|a| !model.simulators().iter().any(|s| s.name() == a.as_str()))
        {
            return Err(SimError::Plan(format!("plan assigns unknown atomic {extra:?}")));
        }

        let pools = plan
            .pools
            .iter()
            .map(|p| {
                let name = p.name.clone();
                rayon::ThreadPoolBuilder::new()
                    .num_threads(p.workers)
                    .thread_name(move |i| format!("{name}-{i}"))
                    .build()
                    .map(|threads| PoolRuntime {
                        name: p.name.clone(),
                        threads,
                    })
                    .map_err(|e| SimError::Plan(format!("cannot start pool {:?}: {e}", p.name)))
            })
            .collect::<Result<_, _>>()?;

        Ok(Self {
            model,
            pools,
            pool_of,
            label: plan.label(),
            imminent: None,
            epoch: Instant::now(),
            log: None,
        })
    }

    /// Records start and end of every phase task and propagation step.
    pub fn enable_task_log(&mut self) {
        self.log = Some(Arc::new(Mutex::new(TaskLog::default())));
    }

    pub fn task_log(&self) -> (Vec<TaskRecord>, Vec<PropagationRecord>) {
        match &self.log {
            Some(log) => {
                let log = log.lock().unwrap();
                (log.tasks.clone(), log.propagations.clone())
            }
            None => (Vec::new(), Vec::new()),
        }
    }

    pub fn model(&self) -> &FlatModel {
        &self.model
    }

    pub fn clock(&self) -> SimulationClock {
        self.model.clock
    }

    pub fn ta(&self) -> f64 {
        self.model.ta()
    }

    fn run_phase(&mut self, phase: Phase) -> Result<(), SimError> {
        let (cycle, t) = (self.model.cycle(), self.model.clock.t);
        let epoch = self.epoch;
        for (p, pool) in self.pools.iter().enumerate() {
            let mut tasks: Vec<&mut Simulator> = self
                .model
                .sims
                .iter_mut()
                .zip(&self.pool_of)
                .filter(|(_, owner)| **owner == p)
                .map(|(s, _)| s)
                .collect();
            if tasks.is_empty() {
                continue;
            }
            let log = self.log.as_ref();
            pool.threads.install(|| {
                tasks.par_iter_mut().with_max_len(1).try_for_each(|sim| {
                    let start = epoch.elapsed();
                    let outcome = catch_unwind(AssertUnwindSafe(|| match phase {
                        Phase::Lambda => {
                            sim.lambda(cycle, t);
                            Ok(())
                        }
                        Phase::Delta => sim.deltfcn(cycle, t).map(|_| ()),
                    }));
                    if let Some(log) = log {
                        log.lock().unwrap().tasks.push(TaskRecord {
                            cycle,
                            phase,
                            pool: p,
                            atomic: sim.name().to_owned(),
                            start,
                            end: epoch.elapsed(),
                        });
                    }
                    outcome.unwrap_or_else(|payload| {
                        Err(SimError::Panic {
                            atomic: sim.name().to_owned(),
                            message: panic_message(payload.as_ref()),
                        })
                    })
                })
            })?;
        }
        Ok(())
    }

    /// Lambda tasks of every pool, then single-threaded propagation.
    pub fn lambda(&mut self) -> Result<(), SimError> {
        let imminent = self.model.imminent();
        self.run_phase(Phase::Lambda)?;
        let start = self.epoch.elapsed();
        self.model.propagate(&imminent);
        if let Some(log) = &self.log {
            log.lock().unwrap().propagations.push(PropagationRecord {
                cycle: self.model.cycle(),
                start,
                end: self.epoch.elapsed(),
            });
        }
        self.imminent = Some(imminent);
        Ok(())
    }

    pub fn deltfcn(&mut self) -> Result<(), SimError> {
        if self.imminent.take().is_none() {
            return Err(SimError::Protocol("deltfcn called before lambda".into()));
        }
        self.run_phase(Phase::Delta)
    }

    pub fn simulate(&mut self, max_iterations: u64) -> Result<RunReport, SimError> {
        let started = Instant::now();
        let mut done = 0;
        while done < max_iterations {
            let t = self.ta();
            if t == f64::INFINITY {
                break;
            }
            self.model.begin_cycle(t);
            self.lambda()?;
            self.deltfcn()?;
            self.model.end_cycle();
            done += 1;
        }
        let wall = started.elapsed().as_secs_f64();
        Ok(self.model.finish("parallel", self.label.clone(), wall))
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devstone::{self, DevstoneConfig};
    use crate::gpt::{self, GptParams};
    use crate::kernel::SequentialCoordinator;
    use crate::model::{Atomic, AtomicSpec, PortBags, TransitionError};

    fn options() -> SimOptions {
        SimOptions {
            trace: true,
            profile: false,
        }
    }

    fn names(g: &ModelGraph) -> Vec<String> {
        crate::model::flatten(g).unwrap().atomics().map(|a| a.name.clone()).collect()
    }

    #[test]
    fn single_pool_matches_sequential_on_gpt() {
        let g = gpt::gpt(GptParams::default());
        let r = ModelRegistry::standard();
        let seq = SequentialCoordinator::new(&g, &r, options()).unwrap().simulate(u64::MAX).unwrap();
        let plan = PoolPlan::single("all", 1, names(&g)).unwrap();
        let par = ParallelCoordinator::new(&g, &r, &plan, options())
            .unwrap()
            .simulate(u64::MAX)
            .unwrap();
        assert_eq!(seq.traces, par.traces);
        assert_eq!(seq.counters, par.counters);
        assert_eq!(seq.final_states, par.final_states);
        assert_eq!(par.workers, "1");
    }

    #[test]
    fn missing_atomic_is_named() {
        let g = gpt::gpt(GptParams::default());
        let plan = PoolPlan::single("all", 2, ["generator", "processor"]).unwrap();
        let err = ParallelCoordinator::new(&g, &ModelRegistry::standard(), &plan, options()).unwrap_err();
        assert!(err.to_string().contains("transducer"), "{err}");
    }

    #[test]
    fn unknown_pool_and_zero_workers_are_rejected() {
        let mut plan = PoolPlan::new();
        assert!(plan.add_pool("p", 0).is_err());
        plan.add_pool("p", 1).unwrap();
        assert!(plan.add_pool("p", 2).is_err());
        assert!(plan.assign("a", "q").is_err());
    }

    #[test]
    fn pools_run_in_order_within_each_phase() {
        let model = devstone::generate(&DevstoneConfig::ho(4, 3)).unwrap();
        let all = names(&model.graph);
        let mut plan = PoolPlan::new();
        plan.add_pool("L1", 2).unwrap().add_pool("L2", 2).unwrap();
        for (i, a) in all.iter().enumerate() {
            plan.assign(a.clone(), if i % 2 == 0 { "L1" } else { "L2" }).unwrap();
        }
        let mut c = ParallelCoordinator::new(&model.graph, &ModelRegistry::standard(), &plan, options()).unwrap();
        c.enable_task_log();
        let report = c.simulate(u64::MAX).unwrap();
        let (tasks, props) = c.task_log();
        assert_eq!(props.len() as u64, report.cycles);
        for cycle in 1..=report.cycles {
            let of = |phase, pool| tasks.iter().filter(move |r| r.cycle == cycle && r.phase == phase && r.pool == pool);
            for phase in [Phase::Lambda, Phase::Delta] {
                let l1_end = of(phase, 0).map(|r| r.end).max().unwrap();
                let l2_start = of(phase, 1).map(|r| r.start).min().unwrap();
                assert!(l1_end <= l2_start, "cycle {cycle} {phase:?}");
            }
            let prop = props.iter().find(|p| p.cycle == cycle).unwrap();
            let lambda_end = tasks.iter().filter(|r| r.cycle == cycle && r.phase == Phase::Lambda).map(|r| r.end).max();
            let delta_start = tasks.iter().filter(|r| r.cycle == cycle && r.phase == Phase::Delta).map(|r| r.start).min();
            assert!(lambda_end.unwrap() <= prop.start && prop.end <= delta_start.unwrap());
        }
        // one lambda and one delta task per simulator per cycle
        assert_eq!(tasks.len() as u64, 2 * all.len() as u64 * report.cycles);
    }

    #[test]
    fn panicking_model_is_reported_by_name() {
        struct Bomb;
        impl Atomic for Bomb {
            fn time_advance(&self) -> f64 {
                0.0
            }
            fn delta_int(&mut self) -> Result<(), TransitionError> {
                panic!("boom")
            }
            fn delta_ext(&mut self, _: f64, _: &PortBags) -> Result<(), TransitionError> {
                Ok(())
            }
            fn lambda(&self, _: &mut PortBags) {}
            fn phase(&self) -> &str {
                "armed"
            }
        }
        let mut r = ModelRegistry::empty();
        r.register("bomb", &[], &[], |_, _| Ok(Box::new(Bomb)));
        let mut g = ModelGraph::new("m");
        g.add_component(AtomicSpec::new("bomb1", "bomb")).unwrap();
        let plan = PoolPlan::single("p", 2, ["bomb1"]).unwrap();
        let err = ParallelCoordinator::new(&g, &r, &plan, options())
            .unwrap()
            .simulate(10)
            .unwrap_err();
        match err {
            SimError::Panic { atomic, message } => {
                assert_eq!(atomic, "bomb1");
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
