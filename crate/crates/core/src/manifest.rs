//! Kubernetes pod manifests for a distributed plan.
//!
//! Every container group becomes one single-container pod whose command
//! starts one `serve` process per atomic in the group. A final pod runs
//! the coordinator.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::plan::DistributedPlan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestOptions {
    pub image: String,
    /// Executable inside the image.
    pub binary: String,
    /// Where the plan file is mounted inside every container.
    pub plan_path: String,
    /// Name of the ConfigMap that holds the plan file.
    pub config_map: String,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self {
            image: "pdevs:latest".into(),
            binary: "pdevs".into(),
            plan_path: "/plan/plan.xml".into(),
            config_map: "pdevs-plan".into(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("atomic {0:?} has no container group")]
    Ungrouped(String),
    #[error("group {group:?}: port {port} is used by both {first:?} and {second:?}")]
    PortCollision {
        group: String,
        port: u16,
        first: String,
        second: String,
    },
    #[error("group name {0:?} has no usable characters for a pod name")]
    BadGroup(String),
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Pod {
    api_version: &'static str,
    kind: &'static str,
    metadata: Metadata,
    spec: PodSpec,
}

#[derive(Serialize)]
struct Metadata {
    name: String,
    labels: BTreeMap<&'static str, String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PodSpec {
    hostname: String,
    restart_policy: &'static str,
    containers: Vec<Container>,
    volumes: Vec<Volume>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Container {
    name: String,
    image: String,
    command: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    ports: Vec<ContainerPort>,
    volume_mounts: Vec<VolumeMount>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ContainerPort {
    container_port: u16,
    protocol: &'static str,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VolumeMount {
    name: &'static str,
    mount_path: String,
    read_only: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Volume {
    name: &'static str,
    config_map: ConfigMapRef,
}

#[derive(Serialize)]
struct ConfigMapRef {
    name: String,
}

/// Lowercase alphanumerics and dashes, as pod names require.
fn dns_label(raw: &str) -> Result<String, ManifestError> {
    let mut s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    s.truncate(63);
    let s = s.trim_matches('-').to_owned();
    if s.is_empty() {
        Err(ManifestError::BadGroup(raw.to_owned()))
    } else {
        Ok(s)
    }
}

fn shell_quote(s: &str) -> String {
    if s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./:".contains(c)) {
        s.to_owned()
    } else {
        format!("'{}'", s.replace('\'', "'\\''"))
    }
}

fn plan_mount(options: &ManifestOptions) -> (Vec<VolumeMount>, Vec<Volume>) {
    let dir = match options.plan_path.rfind('/') {
        Some(0) | None => "/".to_owned(),
        Some(i) => options.plan_path[..i].to_owned(),
    };
    let mounts = vec![VolumeMount {
        name: "plan",
        mount_path: dir,
        read_only: true,
    }];
    let volumes = vec![Volume {
        name: "plan",
        config_map: ConfigMapRef {
            name: options.config_map.clone(),
        },
    }];
    (mounts, volumes)
}

fn pod(name: String, group: &str, command: Vec<String>, ports: Vec<ContainerPort>, options: &ManifestOptions) -> Pod {
    let (volume_mounts, volumes) = plan_mount(options);
    Pod {
        api_version: "v1",
        kind: "Pod",
        metadata: Metadata {
            labels: BTreeMap::from([("app", "pdevs".to_owned()), ("group", group.to_owned())]),
            name: name.clone(),
        },
        spec: PodSpec {
            hostname: name.clone(),
            restart_policy: "Never",
            containers: vec![Container {
                name,
                image: options.image.clone(),
                command,
                ports,
                volume_mounts,
            }],
            volumes,
        },
    }
}

/// Multi-document YAML: one pod per group in group-name order, then the
/// coordinator pod.
pub fn emit_manifest(
    plan: &DistributedPlan,
    groups: &BTreeMap<String, String>,
    options: &ManifestOptions,
) -> Result<String, ManifestError> {
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in plan.graph.atomics() {
        let group = groups.get(&a.name).ok_or_else(|| ManifestError::Ungrouped(a.name.clone()))?;
        members.entry(group).or_default().push(&a.name);
    }

    let mut pods = Vec::new();
    let mut names = BTreeSet::new();
    for (group, atomics) in &members {
        let mut owner: BTreeMap<u16, &str> = BTreeMap::new();
        for atomic in atomics {
            let ep = plan.endpoint(atomic).expect("plan covers every atomic");
            for port in [ep.main_port, ep.aux_port] {
                if let Some(first) = owner.insert(port, atomic) {
                    return Err(ManifestError::PortCollision {
                        group: group.to_string(),
                        port,
                        first: first.to_owned(),
                        second: atomic.to_string(),
                    });
                }
            }
        }
        let serve: Vec<String> = atomics
            .iter()
            .map(|a| {
                format!(
                    "{} serve --plan {} --atomic {} &",
                    shell_quote(&options.binary),
                    shell_quote(&options.plan_path),
                    shell_quote(a)
                )
            })
            .collect();
        let script = format!("{} wait", serve.join(" "));
        let mut name = dns_label(group)?;
        if !names.insert(name.clone()) || name == "coordinator" {
            name = format!("{name}-{}", names.len());
            names.insert(name.clone());
        }
        let ports = owner
            .keys()
            .map(|&p| ContainerPort {
                container_port: p,
                protocol: "TCP",
            })
            .collect();
        pods.push(pod(name, group, vec!["sh".into(), "-c".into(), script], ports, options));
    }
    pods.push(pod(
        "coordinator".into(),
        "coordinator",
        vec![
            options.binary.clone(),
            "coordinate".into(),
            "--plan".into(),
            options.plan_path.clone(),
        ],
        Vec::new(),
        options,
    ));

    let mut out = String::new();
    for p in &pods {
        out.push_str("---\n");
        out.push_str(&serde_yaml::to_string(p).expect("pods always serialize"));
    }
    Ok(out)
}
