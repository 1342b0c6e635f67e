use std::collections::BTreeMap;
use std::net::TcpListener;
use std::net::TcpStream;
use std::thread::{self, JoinHandle};

use super::coordinator::{run_coordinator, DistributedRun};
use super::service::SimulatorService;
use super::{CoordinatorOptions, DistributedError};
use crate::model::{flatten, ModelGraph, ModelRegistry};
use crate::plan::{DistributedPlan, Endpoint};

/// A plan that puts every atomic of `graph` on `host` with ports the OS
/// reports free right now.
pub fn local_plan(graph: &ModelGraph, host: &str) -> Result<DistributedPlan, DistributedError> {
    let flat = flatten(graph)?;
    let names: Vec<String> = flat.atomics().map(|a| a.name.clone()).collect();
    // hold every probe open until all ports are known so none repeats
    let mut probes = Vec::with_capacity(names.len() * 2);
    for _ in 0..names.len() * 2 {
        let l = TcpListener::bind((host, 0)).map_err(|e| DistributedError::Io {
            context: format!("probing a free port on {host}"),
            source: e,
        })?;
        probes.push(l);
    }
    let ports: Vec<u16> = probes
        .iter()
        .map(|l| l.local_addr().map(|a| a.port()))
        .collect::<Result<_, _>>()
        .map_err(|e| DistributedError::Io {
            context: "reading a probed port".into(),
            source: e,
        })?;
    drop(probes);
    let endpoints: BTreeMap<String, Endpoint> = names
        .into_iter()
        .zip(ports.chunks(2))
        .map(|(name, p)| {
            let ep = Endpoint {
                host: host.to_owned(),
                main_port: p[0],
                aux_port: p[1],
            };
            (name, ep)
        })
        .collect();
    let mut plan = DistributedPlan::new(flat, endpoints)?;
    plan.coordinator_host = host.to_owned();
    Ok(plan)
}

/// Starts one simulator service.
pub trait Launcher {
    fn launch(&self, plan: &DistributedPlan, atomic: &str) -> Result<Box<dyn ServiceHandle>, DistributedError>;
}

pub trait ServiceHandle: Send {
    /// Blocks until the service has finished.
    fn wait(self: Box<Self>) -> Result<(), DistributedError>;
    /// Makes a service that never got a coordinator give up.
    fn kill(&mut self);
}

/// Runs services as threads of the current process.
pub struct ThreadLauncher {
    pub registry: ModelRegistry,
}

struct ThreadService {
    main_addr: String,
    join: Option<JoinHandle<Result<(), DistributedError>>>,
}

impl ServiceHandle for ThreadService {
    fn wait(mut self: Box<Self>) -> Result<(), DistributedError> {
        match self.join.take().map(JoinHandle::join) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(DistributedError::Protocol(format!(
                "service at {} panicked",
                self.main_addr
            ))),
            None => Ok(()),
        }
    }

    fn kill(&mut self) {
        // an immediate hang-up ends the session as if the coordinator left
        if let Ok(s) = TcpStream::connect(&self.main_addr) {
            drop(s);
        }
    }
}

impl Launcher for ThreadLauncher {
    fn launch(&self, plan: &DistributedPlan, atomic: &str) -> Result<Box<dyn ServiceHandle>, DistributedError> {
        let service = SimulatorService::bind(plan, atomic, self.registry.clone(), Default::default())?;
        let main_addr = service.endpoint().main_addr();
        let join = thread::Builder::new()
            .name(atomic.to_owned())
            .spawn(move || service.run())
            .map_err(|e| DistributedError::Io {
                context: format!("spawning service {atomic}"),
                source: e,
            })?;
        Ok(Box::new(ThreadService {
            main_addr,
            join: Some(join),
        }))
    }
}

/// Launches every service of `plan`, coordinates one run and waits for the
/// services to exit.
pub fn run_local(
    plan: &DistributedPlan,
    launcher: &dyn Launcher,
    max_iterations: u64,
    options: CoordinatorOptions,
) -> Result<DistributedRun, DistributedError> {
    let mut handles = Vec::new();
    let mut launched = Ok(());
    for a in plan.graph.atomics() {
        match launcher.launch(plan, &a.name) {
            Ok(h) => handles.push(h),
            Err(e) => {
                launched = Err(e);
                break;
            }
        }
    }
    let run = launched.and_then(|()| run_coordinator(plan, max_iterations, options));
    if run.is_err() {
        for h in &mut handles {
            h.kill();
        }
    }
    let mut first_failure = None;
    for h in handles {
        if let Err(e) = h.wait() {
            first_failure.get_or_insert(e);
        }
    }
    let run = run?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(run),
    }
}
