use std::path::PathBuf;
use std::process::{Child, Command, Stdio};

use pdevs_core::distributed::{DistributedError, Launcher, ServiceHandle};
use pdevs_core::plan::DistributedPlan;

/// Starts every service as `<exe> serve --plan <plan> --atomic <name>`.
pub struct ProcessLauncher {
    pub exe: PathBuf,
    pub plan_file: PathBuf,
}

struct ChildService {
    atomic: String,
    child: Child,
}

impl ServiceHandle for ChildService {
    fn wait(mut self: Box<Self>) -> Result<(), DistributedError> {
        let status = self.child.wait().map_err(|e| DistributedError::Io {
            context: format!("waiting for service {}", self.atomic),
            source: e,
        })?;
        if status.success() {
            Ok(())
        } else {
            Err(DistributedError::Remote {
                atomic: self.atomic.clone(),
                message: format!("service process exited with {status}"),
            })
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
    }
}

impl Launcher for ProcessLauncher {
    fn launch(&self, plan: &DistributedPlan, atomic: &str) -> Result<Box<dyn ServiceHandle>, DistributedError> {
        if plan.endpoint(atomic).is_none() {
            return Err(DistributedError::UnknownAtomic(atomic.to_owned()));
        }
        let child = Command::new(&self.exe)
            .arg("serve")
            .arg("--plan")
            .arg(&self.plan_file)
            .arg("--atomic")
            .arg(atomic)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|e| DistributedError::Io {
                context: format!("spawning service {atomic}"),
                source: e,
            })?;
        Ok(Box::new(ChildService {
            atomic: atomic.to_owned(),
            child,
        }))
    }
}
