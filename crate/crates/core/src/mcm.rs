//! Multicore cluster model: topology, cost functions, cache-share budgets,
//! the task-graph application model and the placement advisor.
//!
//! Topologies are read from TOML:
//!
//! ```toml
//! [[machines]]
//! csi = 1.0
//! gmc_bytes = 17179869184
//!
//! [[machines.processors]]
//! cores = 2
//!
//! [[machines.processors.caches]]
//! level = 2
//! cmc_bytes = 6291456
//! # members = [0, 1]   (processor-local core indices; default: all)
//!
//! [latency]
//! seconds_per_byte = [[0.0]]
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIB: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoreAddr {
    pub machine: usize,
    pub processor: usize,
    pub core: usize,
}

impl std::fmt::Display for CoreAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.machine, self.processor, self.core)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cache {
    pub level: u8,
    pub cmc_bytes: u64,
    /// Processor-local indices of the cores sharing this cache.
    #[serde(default)]
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Processor {
    pub cores: usize,
    #[serde(default)]
    pub caches: Vec<Cache>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Machine {
    /// Computational slowdown index.
    pub csi: f64,
    pub gmc_bytes: u64,
    pub processors: Vec<Processor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Latency {
    pub seconds_per_byte: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTopology {
    #[serde(default)]
    pub name: Option<String>,
    pub machines: Vec<Machine>,
    pub latency: Latency,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("malformed topology: {0}")]
    Syntax(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> TopologyError {
    TopologyError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ClusterTopology {
    /// Parses and validates a TOML topology description.
    pub fn load(text: &str) -> Result<Self, TopologyError> {
        let topo: ClusterTopology = toml::from_str(text).map_err(|e| TopologyError::Syntax(e.to_string()))?;
        let topo = topo.normalized();
        topo.validate()?;
        Ok(topo)
    }

    /// Homogeneous `machines × processors × cores` cluster with one shared
    /// cache of `cmc_bytes` per processor and uniform inter-machine latency.
    pub fn uniform(machines: usize, processors: usize, cores: usize, cmc_bytes: u64, seconds_per_byte: f64) -> Self {
        let machine = Machine {
            csi: 1.0,
            gmc_bytes: 16 * 1024 * MIB,
            processors: vec![
                Processor {
                    cores,
                    caches: vec![Cache {
                        level: 2,
                        cmc_bytes,
                        members: (0..cores).collect(),
                    }],
                };
                processors
            ],
        };
        let latency = (0..machines)
            .map(|i| {
                (0..machines)
                    .map(|j| if i == j { 0.0 } else { seconds_per_byte })
                    .collect()
            })
            .collect();
        Self {
            name: Some(format!("{machines}x{processors}x{cores}")),
            machines: vec![machine; machines],
            latency: Latency {
                seconds_per_byte: latency,
            },
        }
    }

    fn normalized(mut self) -> Self {
        for m in &mut self.machines {
            for p in &mut m.processors {
                for c in &mut p.caches {
                    if c.members.is_empty() {
                        c.members = (0..p.cores).collect();
                    }
                    c.members.sort_unstable();
                }
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.machines.is_empty() {
            return Err(invalid("machines", "at least one machine is required"));
        }
        for (i, m) in self.machines.iter().enumerate() {
            let mp = format!("machines[{i}]");
            if !(m.csi.is_finite() && m.csi > 0.0) {
                return Err(invalid(format!("{mp}.csi"), "must be a positive number"));
            }
            if m.processors.is_empty() {
                return Err(invalid(
                    format!("{mp}.processors"),
                    "at least one processor is required",
                ));
            }
            for (j, p) in m.processors.iter().enumerate() {
                let pp = format!("{mp}.processors[{j}]");
                if p.cores == 0 {
                    return Err(invalid(format!("{pp}.cores"), "must be at least 1"));
                }
                let mut by_level: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
                for (c, cache) in p.caches.iter().enumerate() {
                    let cp = format!("{pp}.caches[{c}]");
                    if cache.cmc_bytes == 0 {
                        return Err(invalid(format!("{cp}.cmc_bytes"), "must be positive"));
                    }
                    if cache.cmc_bytes >= m.gmc_bytes {
                        return Err(invalid(
                            format!("{cp}.cmc_bytes"),
                            format!(
                                "cache capacity {} must be below global memory {}",
                                cache.cmc_bytes, m.gmc_bytes
                            ),
                        ));
                    }
                    if let Some(&bad) = cache.members.iter().find(|&&k| k >= p.cores) {
                        return Err(invalid(format!("{cp}.members"), format!("core {bad} out of range")));
                    }
                    by_level.entry(cache.level).or_default().extend(&cache.members);
                }
                for (level, mut members) in by_level {
                    members.sort_unstable();
                    if members != (0..p.cores).collect::<Vec<_>>() {
                        return Err(invalid(
                            format!("{pp}.caches"),
                            format!("level {level} caches must partition the processor's cores"),
                        ));
                    }
                }
            }
        }
        let lat = &self.latency.seconds_per_byte;
        let n = self.machines.len();
        if lat.len() != n || lat.iter().any(|row| row.len() != n) {
            return Err(invalid("latency.seconds_per_byte", format!("must be a {n}x{n} matrix")));
        }
        for i in 0..n {
            for j in 0..n {
                let v = lat[i][j];
                let path = format!("latency.seconds_per_byte[{i}][{j}]");
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid(path, "must be finite and nonnegative"));
                }
                if i == j && v != 0.0 {
                    return Err(invalid(path, "diagonal must be zero"));
                }
                if v != lat[j][i] {
                    return Err(invalid(path, "matrix must be symmetric"));
                }
            }
        }
        Ok(())
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    pub fn n_cores(&self) -> usize {
        self.machines.iter().flat_map(|m| &m.processors).map(|p| p.cores).sum()
    }

    /// All cores in address order.
    pub fn cores(&self) -> Vec<CoreAddr> {
        let mut out = Vec::new();
        for (i, m) in self.machines.iter().enumerate() {
            for (j, p) in m.processors.iter().enumerate() {
                out.extend((0..p.cores).map(|k| CoreAddr {
                    machine: i,
                    processor: j,
                    core: k,
                }));
            }
        }
        out
    }

    pub fn machine_cores(&self, machine: usize) -> Vec<CoreAddr> {
        self.cores().into_iter().filter(|c| c.machine == machine).collect()
    }

    pub fn latency(&self, a: usize, b: usize) -> f64 {
        self.latency.seconds_per_byte[a][b]
    }

    /// The budget-relevant cache of a core: the highest-level cache that
    /// contains it.
    pub fn shared_cache(&self, core: CoreAddr) -> Option<&Cache> {
        self.machines[core.machine].processors[core.processor]
            .caches
            .iter()
            .filter(|c| c.members.contains(&core.core))
            .max_by_key(|c| c.level)
    }

    /// Cores sharing a cache with `core` at some level, excluding itself.
    pub fn neighbors(&self, core: CoreAddr) -> Vec<CoreAddr> {
        let p = &self.machines[core.machine].processors[core.processor];
        let mut out: Vec<usize> = p
            .caches
            .iter()
            .filter(|c| c.members.contains(&core.core))
            .flat_map(|c| c.members.iter().copied())
            .filter(|&k| k != core.core)
            .collect();
        out.sort_unstable();
        out.dedup();
        out.into_iter().map(|k| CoreAddr { core: k, ..core }).collect()
    }

    /// List byte budget of a worker running on `core`, one thread per core.
    pub fn worker_budget(&self, core: CoreAddr) -> Option<u64> {
        self.shared_cache(core)
            .map(|c| cache_budget(c.cmc_bytes, c.members.len()))
    }

    pub fn exec_time(&self, epsilon: f64, machine: usize) -> f64 {
        exec_time(self.machines[machine].csi, epsilon)
    }

    pub fn comm_time(&self, omega: f64, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else {
            omega * self.latency(a, b)
        }
    }
}

pub fn exec_time(csi: f64, epsilon: f64) -> f64 {
    csi * epsilon
}

/// True when a message is short enough that shared memory beats the
/// interconnect.
pub fn is_short_message(omega: u64, cfg: &McmConfig) -> bool {
    omega < cfg.lb_msg_bytes
}

pub fn cache_budget(cmc_bytes: u64, threads_sharing: usize) -> u64 {
    cmc_bytes / threads_sharing.max(1) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmConfig {
    /// Message size below which communicating tasks are kept together.
    pub lb_msg_bytes: u64,
}

impl Default for McmConfig {
    fn default() -> Self {
        Self { lb_msg_bytes: 8 * MIB }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    SameMachine,
    SameMachineNonNeighborCores,
    DifferentMachine,
}

/// Placement class for two tasks with data needs `mu_u`, `mu_v` and,
/// if they communicate, `omega` bytes exchanged. Tasks that fit in the
/// cache together share a machine whatever they exchange, which in
/// particular covers messages under `lb_msg_bytes`.
pub fn allocation_advice(mu_u: u64, mu_v: u64, omega: Option<u64>, cmc: u64, _cfg: &McmConfig) -> Placement {
    if mu_u.saturating_add(mu_v) < cmc {
        return Placement::SameMachine;
    }
    match omega {
        None => Placement::SameMachineNonNeighborCores,
        Some(w) if w >= cmc => Placement::SameMachineNonNeighborCores,
        Some(_) => Placement::DifferentMachine,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub epsilon: f64,
    pub mu_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub omega_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskGraphError {
    #[error("edge {0} refers to a missing vertex")]
    DanglingEdge(usize),
    #[error("vertex {0} has an invalid computational weight")]
    BadWeight(usize),
    #[error("the graph contains a cycle")]
    Cyclic,
}

/// Application model: a DAG of weighted tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
}

impl TaskGraph {
    pub fn new(tasks: Vec<Task>, edges: Vec<Edge>) -> Result<Self, TaskGraphError> {
        for (v, t) in tasks.iter().enumerate() {
            if !(t.epsilon.is_finite() && t.epsilon >= 0.0) {
                return Err(TaskGraphError::BadWeight(v));
            }
        }
        for (e, edge) in edges.iter().enumerate() {
            if edge.from >= tasks.len() || edge.to >= tasks.len() {
                return Err(TaskGraphError::DanglingEdge(e));
            }
        }
        let graph = Self { tasks, edges };
        graph.topological_order()?;
        Ok(graph)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn topological_order(&self) -> Result<Vec<usize>, TaskGraphError> {
        let n = self.tasks.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            indegree[e.to] += 1;
            out[e.from].push(e.to);
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &w in &out[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(w);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(TaskGraphError::Cyclic)
        }
    }

    /// Advice for the endpoints of edge `e`.
    pub fn advise_edge(&self, e: usize, cmc: u64, cfg: &McmConfig) -> Placement {
        let edge = &self.edges[e];
        allocation_advice(
            self.tasks[edge.from].mu_bytes,
            self.tasks[edge.to].mu_bytes,
            Some(edge.omega_bytes),
            cmc,
            cfg,
        )
    }
}
