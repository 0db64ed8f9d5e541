//! Parallel branch-and-bound over a multicore cluster model: message
//! protocol, load-balancing actors, termination detection and runtimes.
//!
//! One leader, one manager per machine and one worker per core cooperate
//! through messages only. The same actors run either on real threads
//! ([`Runtime::Threads`]) or inside a seeded discrete-event simulator
//! ([`Runtime::Simulated`]) whose virtual clock makes every run
//! bit-reproducible.

pub mod actors;
pub mod message;
pub mod sim;
pub mod termination;
pub mod threaded;
pub mod transport;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use spp_core::metrics::{RunStats, ThreadStats};
use spp_core::search::{NodeCounters, Solution};
use spp_core::{ClusterTopology, CoreAddr, SppInstance, Traversal, VarId};
use thiserror::Error;

use crate::actors::{Leader, MachineShared, Manager, ManagerConfig, Worker, WorkerConfig};
pub use crate::sim::{DelayRule, SimConfig};
pub use crate::termination::TerminationMode;
pub use crate::transport::TransportKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Runtime {
    Threads {
        transport: TransportKind,
        /// Wall-clock limit for the whole run.
        timeout: Option<Duration>,
    },
    Simulated(SimConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelConfig {
    pub traversal: Traversal,
    /// Per-worker list limit in bytes; defaults to the worker's cache share.
    pub list_limit: Option<usize>,
    /// Waiting workers a manager needs before asking other machines.
    pub nt: usize,
    /// Without balancing, workers only get the initial distribution.
    pub balancing: bool,
    pub cutoff: Option<u64>,
    pub termination: TerminationMode,
    pub node_limit: Option<u64>,
    pub worker_backoff: Duration,
    pub manager_backoff: Duration,
    pub runtime: Runtime,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            traversal: Traversal::Breadth,
            list_limit: None,
            nt: 1,
            balancing: true,
            cutoff: None,
            termination: TerminationMode::CounterMatching,
            node_limit: None,
            worker_backoff: Duration::from_micros(100),
            manager_backoff: Duration::from_micros(500),
            runtime: Runtime::Threads {
                transport: TransportKind::Memory,
                timeout: None,
            },
        }
    }
}

impl ParallelConfig {
    pub fn simulated(seed: u64) -> Self {
        Self {
            runtime: Runtime::Simulated(SimConfig::with_seed(seed)),
            ..Self::default()
        }
    }

    /// List budget of every worker.
    pub fn budgets(&self, topology: &ClusterTopology) -> BTreeMap<CoreAddr, Option<usize>> {
        topology
            .cores()
            .into_iter()
            .map(|c| {
                let budget = self
                    .list_limit
                    .or_else(|| topology.worker_budget(c).map(|b| b as usize));
                (c, budget)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("node limit of {0} reached before the search finished")]
    NodeLimit(u64),
    #[error("simulation exceeded {0} events")]
    EventLimit(u64),
    #[error("run exceeded its time limit of {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Post-run consistency checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    /// Every worker received `Terminate`.
    pub terminated: bool,
    pub created: u64,
    pub consumed: u64,
    /// Nodes left in lists or dropped after termination.
    pub stranded_nodes: u64,
    pub violations: Vec<String>,
    /// Workers whose list outgrew budget plus one node.
    pub budget_overruns: Vec<CoreAddr>,
    pub messages: u64,
    pub local_termination_reports: u64,
    pub remote_requests: u64,
}

impl Audit {
    pub fn is_conserved(&self) -> bool {
        self.created == self.consumed && self.stranded_nodes == 0
    }

    pub fn is_clean(&self) -> bool {
        self.terminated && self.is_conserved() && self.violations.is_empty() && self.budget_overruns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOutcome {
    pub solution: Solution,
    pub stats: RunStats,
    pub audit: Audit,
}

/// Solves `inst` on the cluster described by `topology`.
pub fn run_parallel(
    inst: &SppInstance,
    topology: &ClusterTopology,
    cfg: &ParallelConfig,
) -> Result<ParallelOutcome, RunError> {
    topology.validate().map_err(|e| RunError::Config(e.to_string()))?;
    if cfg.nt == 0 {
        return Err(RunError::Config("NT must be at least 1".into()));
    }
    match &cfg.runtime {
        Runtime::Simulated(sim) => sim::run(inst, topology, cfg, sim),
        Runtime::Threads { transport, timeout } => threaded::run(inst, topology, cfg, *transport, *timeout),
    }
}

/// Every actor of one run, before it starts.
pub(crate) struct Cluster {
    pub leader: Leader,
    pub managers: Vec<Manager>,
    pub workers: Vec<Worker>,
    pub machines: Vec<Arc<MachineShared>>,
    pub budgets: BTreeMap<CoreAddr, Option<usize>>,
}

impl Cluster {
    pub fn build(topology: &ClusterTopology, cfg: &ParallelConfig) -> Self {
        let machines: Vec<Arc<MachineShared>> = (0..topology.n_machines())
            .map(|_| Arc::new(MachineShared::new(cfg.cutoff)))
            .collect();
        let budgets = cfg.budgets(topology);
        let shared_budgets = Arc::new(budgets.clone());
        let workers = topology
            .cores()
            .into_iter()
            .map(|c| {
                Worker::new(
                    c,
                    topology,
                    WorkerConfig {
                        balancing: cfg.balancing,
                        traversal: cfg.traversal,
                        budget: budgets[&c],
                        backoff: cfg.worker_backoff.as_secs_f64(),
                    },
                    Arc::clone(&machines[c.machine]),
                    Arc::clone(&shared_budgets),
                )
            })
            .collect();
        let managers = (0..topology.n_machines())
            .map(|m| {
                Manager::new(
                    m,
                    topology,
                    ManagerConfig {
                        balancing: cfg.balancing,
                        nt: cfg.nt,
                        backoff: cfg.manager_backoff.as_secs_f64(),
                    },
                    Arc::clone(&machines[m]),
                )
            })
            .collect();
        Self {
            leader: Leader::new(topology, cfg.termination),
            managers,
            workers,
            machines,
            budgets,
        }
    }

    /// Collects the solution, metrics and audit once all actors stopped.
    pub fn assemble(
        mut self,
        inst: &SppInstance,
        topology: &ClusterTopology,
        cfg: &ParallelConfig,
        wall_seconds: f64,
        messages: u64,
    ) -> ParallelOutcome {
        let mut best: Option<(u64, Vec<VarId>)> = None;
        for m in &self.machines {
            if let Some((cost, vars)) = m.incumbent.best() {
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, vars));
                }
            }
        }
        let mut audit = Audit {
            terminated: self.workers.iter().all(Worker::is_done),
            messages,
            ..Audit::default()
        };
        let mut threads: Vec<ThreadStats> = Vec::with_capacity(self.workers.len());
        for w in &mut self.workers {
            w.finish();
            audit.stranded_nodes += w.pending_nodes() + w.dropped_nodes;
            audit.violations.extend(w.violations.iter().cloned());
            if let (Traversal::Breadth, Some(budget)) = (cfg.traversal, self.budgets[&w.addr]) {
                if w.stats.peak_list_bytes > budget + w.stats.max_node_bytes {
                    audit.budget_overruns.push(w.addr);
                }
            }
            threads.push(w.stats.clone());
        }
        for m in &self.managers {
            audit.stranded_nodes += m.pending_nodes() + m.dropped_nodes;
            audit.violations.extend(m.violations.iter().cloned());
            audit.local_termination_reports += m.reports;
            audit.remote_requests += m.remote_requests;
        }
        audit.violations.extend(self.leader.violations.iter().cloned());
        let mut totals: NodeCounters = self.leader.counters;
        for t in &threads {
            totals.merge(&t.counters);
        }
        audit.created = totals.created;
        audit.consumed = totals.consumed();
        let solution = Solution::from_best(best, cfg.cutoff, totals);
        let stats = RunStats {
            instance: inst.name.clone(),
            topology: topology_label(topology),
            balancing: cfg.balancing,
            status: solution.status,
            best_cost: solution.best_cost,
            wall_seconds,
            threads,
            leader: self.leader.counters,
            seq_seconds: None,
        };
        ParallelOutcome { solution, stats, audit }
    }
}

/// `machines x processors x cores` for uniform clusters, else the name.
pub fn topology_label(topology: &ClusterTopology) -> String {
    let m = topology.n_machines();
    let p = topology.machines[0].processors.len();
    let c = topology.machines[0].processors[0].cores;
    let uniform = topology
        .machines
        .iter()
        .all(|mc| mc.processors.len() == p && mc.processors.iter().all(|pr| pr.cores == c));
    match (&topology.name, uniform) {
        (Some(name), false) => name.clone(),
        _ => format!("{m}x{p}x{c}"),
    }
}
