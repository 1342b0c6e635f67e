//! Socket-distributed backend.
//!
//! Every atomic runs in its own simulator service. The coordinator drives
//! the cycle with GET_TN, CLOCK, LAMBDA and DELTFCN broadcasts over one
//! persistent connection per service. During LAMBDA each imminent service
//! pushes its outputs straight to the destination services' propagation
//! ports, so values never travel through the coordinator.

mod coordinator;
mod frame;
mod local;
mod service;

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

pub use coordinator::{run_coordinator, DistributedRun, FrameStats};
pub use frame::{read_frame, write_frame, Command, FrameError, WireFrame, MAX_FRAME_BYTES};
pub use local::{local_plan, run_local, Launcher, ServiceHandle, ThreadLauncher};
pub use service::{serve_simulator, SimulatorService};

use crate::kernel::{AtomicProfile, CounterTriple, SimOptions};
use crate::model::{EventValue, ModelError};
use crate::plan::PlanError;

/// Port name marking an ACK that reports a failure; the message is the
/// first value.
pub const ERROR_PORT: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    /// Budget for establishing a connection, retries included.
    pub connect: Duration,
    /// Longest wait for one reply frame.
    pub read: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            connect: Duration::from_secs(5),
            read: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoordinatorOptions {
    pub sim: SimOptions,
    pub timeouts: Timeouts,
}

#[derive(Debug, thiserror::Error)]
pub enum DistributedError {
    #[error("no atomic named {0:?} in the plan")]
    UnknownAtomic(String),
    #[error("cannot bind {addr} for {atomic:?}: {source}")]
    Bind {
        atomic: String,
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot reach {atomic:?} at {addr}: {reason}")]
    Unreachable { atomic: String, addr: String, reason: String },
    #[error("timed out waiting for {atomic:?} at {addr}")]
    Timeout { atomic: String, addr: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("bad frame from {peer}: {source}")]
    Frame {
        peer: String,
        #[source]
        source: FrameError,
    },
    #[error("atomic {atomic:?} failed: {message}")]
    Remote { atomic: String, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Connects to `addr`, retrying refused attempts until the connect budget
/// runs out. Services may still be starting when the first attempt is made.
pub(crate) fn connect_with_retry(atomic: &str, addr: &str, timeouts: &Timeouts) -> Result<TcpStream, DistributedError> {
    let unreachable = |reason: String| DistributedError::Unreachable {
        atomic: atomic.to_owned(),
        addr: addr.to_owned(),
        reason,
    };
    let deadline = Instant::now() + timeouts.connect;
    let target = addr
        .to_socket_addrs()
        .map_err(|e| unreachable(e.to_string()))?
        .next()
        .ok_or_else(|| unreachable("address does not resolve".into()))?;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(unreachable(format!("no answer within {:?}", timeouts.connect)));
        }
        match TcpStream::connect_timeout(&target, left) {
            Ok(stream) => {
                stream.set_nodelay(true).ok();
                stream
                    .set_read_timeout(Some(timeouts.read))
                    .map_err(|e| unreachable(e.to_string()))?;
                return Ok(stream);
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::ConnectionRefused | io::ErrorKind::ConnectionReset) => {
                thread::sleep(Duration::from_millis(20).min(left));
            }
            Err(e) => return Err(unreachable(e.to_string())),
        }
    }
}

/// What a service reports in its EXIT acknowledgement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExitStats {
    pub counters: CounterTriple,
    pub unrouted: u64,
    pub state: String,
    pub trace: Vec<String>,
    pub profile: Option<AtomicProfile>,
}

impl ExitStats {
    pub fn to_values(&self) -> Vec<EventValue> {
        let int = |v: u64| EventValue::Integer(v as i64);
        vec![
            int(self.counters.num_delt_ints),
            int(self.counters.num_delt_exts),
            int(self.counters.num_events),
            int(self.unrouted),
            EventValue::Text(self.state.clone()),
            EventValue::List(self.trace.iter().map(|l| EventValue::Text(l.clone())).collect()),
            EventValue::List(match &self.profile {
                Some(p) => vec![
                    EventValue::Real(p.cpu_seconds_int),
                    EventValue::Real(p.cpu_seconds_ext),
                    EventValue::Real(p.cpu_seconds_con),
                ],
                None => Vec::new(),
            }),
        ]
    }

    pub fn from_values(atomic: &str, values: &[EventValue]) -> Result<Self, DistributedError> {
        let bad = || DistributedError::Protocol(format!("malformed EXIT statistics from {atomic:?}"));
        let int = |i: usize| match values.get(i) {
            Some(EventValue::Integer(v)) if *v >= 0 => Ok(*v as u64),
            _ => Err(bad()),
        };
        let list = |i: usize| match values.get(i) {
            Some(EventValue::List(v)) => Ok(v),
            _ => Err(bad()),
        };
        let state = match values.get(4) {
            Some(EventValue::Text(s)) => s.clone(),
            _ => return Err(bad()),
        };
        let trace = list(5)?
            .iter()
            .map(|v| match v {
                EventValue::Text(s) => Ok(s.clone()),
                _ => Err(bad()),
            })
            .collect::<Result<_, _>>()?;
        let reals: Vec<f64> = list(6)?
            .iter()
            .map(|v| match v {
                EventValue::Real(r) => Ok(*r),
                _ => Err(bad()),
            })
            .collect::<Result<_, _>>()?;
        let profile = match reals.as_slice() {
            [] => None,
            [i, e, c] => Some(AtomicProfile {
                name: atomic.to_owned(),
                cpu_seconds_int: *i,
                cpu_seconds_ext: *e,
                cpu_seconds_con: *c,
            }),
            _ => return Err(bad()),
        };
        Ok(Self {
            counters: CounterTriple {
                num_delt_ints: int(0)?,
                num_delt_exts: int(1)?,
                num_events: int(2)?,
            },
            unrouted: int(3)?,
            state,
            trace,
            profile,
        })
    }
}
