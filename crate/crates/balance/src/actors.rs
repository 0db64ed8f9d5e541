//! Worker, manager and leader state machines.
//!
//! Actors never touch each other's state. Each handler receives one
//! message and appends the messages and timers it wants to an [`Outbox`];
//! the runtime (deterministic simulator or threads) delivers them.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use spp_core::incumbent::Incumbent;
use spp_core::metrics::ThreadStats;
use spp_core::search::{process_node, Explorer, NodeCounters, NodeOutcome, Quiet};
use spp_core::{BnbNode, ClusterTopology, CoreAddr, SharedIncumbent, SppInstance, Traversal, VarId};

use crate::message::{Addr, Message, TransferCounts};
use crate::termination::{Decision, TerminationDetector, TerminationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// An idle worker retries after its manager had nothing for it.
    WorkerRetry,
    /// A manager with waiting workers tries again.
    ManagerRetry,
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub sends: Vec<(Addr, Message)>,
    /// `(delay in seconds, kind)`, addressed to the actor itself.
    pub timers: Vec<(f64, TimerKind)>,
}

impl Outbox {
    pub fn send(&mut self, to: Addr, msg: Message) {
        self.sends.push((to, msg));
    }

    pub fn timer(&mut self, delay: f64, kind: TimerKind) {
        self.timers.push((delay, kind));
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timers.is_empty()
    }
}

/// The per-machine node list filled by remote transfers. Guarded by a mutex
/// so that producer and consumer may live on different threads.
#[derive(Debug, Default)]
pub struct GlobalList {
    nodes: Mutex<VecDeque<BnbNode>>,
}

impl GlobalList {
    pub fn produce(&self, nodes: Vec<BnbNode>) {
        self.lock().extend(nodes);
    }

    pub fn consume_all(&self) -> Vec<BnbNode> {
        self.lock().drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<BnbNode>> {
        self.nodes.lock().expect("global list lock poisoned")
    }
}

/// State shared by every thread of one machine.
#[derive(Debug)]
pub struct MachineShared {
    pub incumbent: SharedIncumbent,
    pub ml: GlobalList,
    sent: AtomicU64,
    received: AtomicU64,
}

impl MachineShared {
    pub fn new(cutoff: Option<u64>) -> Self {
        Self {
            incumbent: SharedIncumbent::new(cutoff),
            ml: GlobalList::default(),
            sent: AtomicU64::new(0),
            received: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> TransferCounts {
        TransferCounts {
            sent: self.sent.load(Ordering::Acquire),
            received: self.received.load(Ordering::Acquire),
        }
    }

    fn note_sent(&self, n: usize) {
        self.sent.fetch_add(n as u64, Ordering::AcqRel);
    }

    fn note_received(&self, n: usize) {
        self.received.fetch_add(n as u64, Ordering::AcqRel);
    }
}

/// Records whether an offer lowered the shared threshold.
struct Tracking<'a> {
    inner: &'a SharedIncumbent,
    improved: Cell<Option<u64>>,
}

impl Incumbent for Tracking<'_> {
    fn threshold(&self) -> u64 {
        self.inner.threshold()
    }

    fn offer(&self, cost: u64, vars: &[VarId]) -> bool {
        let lowered = self.inner.offer(cost, vars);
        if lowered {
            self.improved.set(Some(cost));
        }
        lowered
    }
}

/// Local probe order of a worker: the other cores of its processor
/// cyclically after itself, then the cores of the other processors of the
/// machine, processors cyclically after its own.
pub fn probe_order(topology: &ClusterTopology, me: CoreAddr) -> Vec<CoreAddr> {
    let procs = &topology.machines[me.machine].processors;
    let mut out = Vec::new();
    let cores = procs[me.processor].cores;
    for step in 1..cores {
        out.push(CoreAddr {
            core: (me.core + step) % cores,
            ..me
        });
    }
    for step in 1..procs.len() {
        let j = (me.processor + step) % procs.len();
        out.extend((0..procs[j].cores).map(|k| CoreAddr {
            machine: me.machine,
            processor: j,
            core: k,
        }));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerPhase {
    /// Waiting for the leader's initial distribution.
    Initial,
    Working,
    /// Waiting for the reply of the `n`-th local probe target.
    Probing(usize),
    WaitingManager,
    Backoff,
    Done,
}

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub balancing: bool,
    pub traversal: Traversal,
    pub budget: Option<usize>,
    pub backoff: f64,
}

pub struct Worker {
    pub addr: CoreAddr,
    probe_order: Vec<CoreAddr>,
    explorer: Explorer,
    phase: WorkerPhase,
    phase_since: f64,
    cfg: WorkerConfig,
    machine: Arc<MachineShared>,
    budgets: Arc<BTreeMap<CoreAddr, Option<usize>>>,
    pub stats: ThreadStats,
    pub violations: Vec<String>,
    /// Nodes that arrived after termination.
    pub dropped_nodes: u64,
}

impl Worker {
    pub fn new(
        addr: CoreAddr,
        topology: &ClusterTopology,
        cfg: WorkerConfig,
        machine: Arc<MachineShared>,
        budgets: Arc<BTreeMap<CoreAddr, Option<usize>>>,
    ) -> Self {
        Self {
            addr,
            probe_order: probe_order(topology, addr),
            explorer: Explorer::new(cfg.traversal, cfg.budget),
            phase: WorkerPhase::Initial,
            phase_since: 0.0,
            cfg,
            machine,
            budgets,
            stats: ThreadStats::new(addr),
            violations: Vec::new(),
            dropped_nodes: 0,
        }
    }

    pub fn phase(&self) -> WorkerPhase {
        self.phase
    }

    pub fn has_work(&self) -> bool {
        self.phase == WorkerPhase::Working && self.explorer.has_work()
    }

    pub fn is_done(&self) -> bool {
        self.phase == WorkerPhase::Done
    }

    pub fn explorer(&self) -> &Explorer {
        &self.explorer
    }

    /// Nodes still held (nonzero only after an unsafe termination).
    pub fn pending_nodes(&self) -> u64 {
        self.explorer.pending() as u64
    }

    fn me(&self) -> Addr {
        Addr::Worker(self.addr)
    }

    fn enter(&mut self, phase: WorkerPhase, now: f64) {
        let spent = (now - self.phase_since).max(0.0);
        match self.phase {
            WorkerPhase::Probing(_) => self.stats.local_balance_seconds += spent,
            WorkerPhase::WaitingManager | WorkerPhase::Backoff => self.stats.global_balance_seconds += spent,
            _ => {}
        }
        self.phase = phase;
        self.phase_since = now;
    }

    fn violation(&mut self, what: String) {
        self.violations.push(format!("{}: {what}", self.me()));
    }

    fn on_idle(&mut self, now: f64, out: &mut Outbox) {
        if self.cfg.balancing && !self.probe_order.is_empty() {
            self.stats.local_req += 1;
            out.send(Addr::Worker(self.probe_order[0]), Message::LoadRequest);
            self.enter(WorkerPhase::Probing(0), now);
        } else {
            self.escalate(now, out);
        }
    }

    fn escalate(&mut self, now: f64, out: &mut Outbox) {
        // without balancing this only tells the manager the worker is idle
        if self.cfg.balancing {
            self.stats.global_req += 1;
        }
        out.send(Addr::Manager(self.addr.machine), Message::LoadRequest);
        self.enter(WorkerPhase::WaitingManager, now);
    }

    /// Starts looking for work once the local lists ran dry.
    pub fn settle(&mut self, now: f64, out: &mut Outbox) {
        if self.phase == WorkerPhase::Working && !self.explorer.has_work() {
            self.on_idle(now, out);
        }
    }

    pub fn handle(&mut self, from: Addr, msg: Message, now: f64, out: &mut Outbox) {
        if self.phase == WorkerPhase::Done {
            self.dropped_nodes += msg.nodes().len() as u64;
            return;
        }
        match msg {
            Message::Load(nodes) => {
                if nodes.is_empty() {
                    self.violation(format!("empty Load from {from}"));
                }
                let expected = match self.phase {
                    WorkerPhase::Initial => from == Addr::Leader,
                    WorkerPhase::Probing(i) => from == Addr::Worker(self.probe_order[i]),
                    WorkerPhase::WaitingManager => from == Addr::Manager(self.addr.machine),
                    _ => false,
                };
                if !expected {
                    self.violation(format!("unexpected Load from {from} in {:?}", self.phase));
                }
                self.machine.note_received(nodes.len());
                self.explorer.receive(nodes);
                self.enter(WorkerPhase::Working, now);
            }
            Message::NoLoad => match self.phase {
                WorkerPhase::Initial if from == Addr::Leader => {
                    self.enter(WorkerPhase::Working, now);
                    self.on_idle(now, out);
                }
                WorkerPhase::Probing(i) if from == Addr::Worker(self.probe_order[i]) => {
                    if i + 1 < self.probe_order.len() {
                        self.stats.local_req += 1;
                        out.send(Addr::Worker(self.probe_order[i + 1]), Message::LoadRequest);
                        self.enter(WorkerPhase::Probing(i + 1), now);
                    } else {
                        self.escalate(now, out);
                    }
                }
                WorkerPhase::WaitingManager if from == Addr::Manager(self.addr.machine) => {
                    self.enter(WorkerPhase::Backoff, now);
                    out.timer(self.cfg.backoff, TimerKind::WorkerRetry);
                }
                phase => self.violation(format!("unexpected NoLoad from {from} in {phase:?}")),
            },
            Message::LoadRequest => self.on_request(from, out),
            Message::Terminate => {
                self.enter(WorkerPhase::Done, now);
                self.finish();
            }
            other => self.violation(format!("unexpected {:?} from {from}", other.kind())),
        }
    }

    fn on_request(&mut self, from: Addr, out: &mut Outbox) {
        let have = self.explorer.list_len();
        // a donor keeps its last node so two peers cannot bounce it forever
        if have == 0 || self.explorer.pending() < 2 {
            out.send(from, Message::NoLoad);
            return;
        }
        let mut k = have / 2;
        if let Addr::Worker(requester) = from {
            if let Some(Some(budget)) = self.budgets.get(&requester) {
                k = k.min(self.explorer.fitting(*budget));
            }
        }
        let nodes = self.explorer.give(k.max(1));
        self.machine.note_sent(nodes.len());
        out.send(from, Message::Load(nodes));
    }

    pub fn on_timer(&mut self, kind: TimerKind, now: f64, out: &mut Outbox) {
        if kind == TimerKind::WorkerRetry && self.phase == WorkerPhase::Backoff {
            self.enter(WorkerPhase::Working, now);
            self.on_idle(now, out);
        }
    }

    /// Processes one node. Returns its work estimate, or `None` if idle.
    pub fn step(&mut self, inst: &SppInstance, out: &mut Outbox) -> Option<u64> {
        if self.phase != WorkerPhase::Working {
            return None;
        }
        let tracking = Tracking {
            inner: &self.machine.incumbent,
            improved: Cell::new(None),
        };
        let work = self
            .explorer
            .step(inst, &tracking, &mut self.stats.counters, &mut Quiet)?;
        if let Some(cost) = tracking.improved.get() {
            out.send(Addr::Manager(self.addr.machine), Message::NewIncumbent(cost));
        }
        Some(work)
    }

    /// Copies list statistics into `stats`.
    pub fn finish(&mut self) {
        self.stats.peak_list_bytes = self.explorer.peak_list_bytes();
        self.stats.max_node_bytes = self.explorer.max_node_bytes();
    }
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub balancing: bool,
    /// Waiting workers needed before asking other machines.
    pub nt: usize,
    pub backoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CollectFor {
    Remote(usize),
    Local,
}

struct Collection {
    target: CollectFor,
    pending: BTreeSet<CoreAddr>,
    nodes: Vec<BnbNode>,
}

pub struct Manager {
    pub machine: usize,
    n_machines: usize,
    workers: Vec<CoreAddr>,
    waiting: BTreeSet<CoreAddr>,
    shared: Arc<MachineShared>,
    cfg: ManagerConfig,
    cursor: usize,
    round_left: usize,
    outstanding: Option<usize>,
    collection: Option<Collection>,
    queued: VecDeque<usize>,
    seq: u64,
    reported: bool,
    best_forwarded: u64,
    retry_pending: bool,
    terminated: bool,
    pub remote_requests: u64,
    pub reports: u64,
    pub violations: Vec<String>,
    pub dropped_nodes: u64,
}

impl Manager {
    pub fn new(machine: usize, topology: &ClusterTopology, mut cfg: ManagerConfig, shared: Arc<MachineShared>) -> Self {
        let workers = topology.machine_cores(machine);
        cfg.nt = cfg.nt.clamp(1, workers.len().max(1));
        let n_machines = topology.n_machines();
        Self {
            machine,
            n_machines,
            workers,
            waiting: BTreeSet::new(),
            shared,
            cfg,
            cursor: (machine + 1) % n_machines,
            round_left: 0,
            outstanding: None,
            collection: None,
            queued: VecDeque::new(),
            seq: 0,
            reported: false,
            best_forwarded: u64::MAX,
            retry_pending: false,
            terminated: false,
            remote_requests: 0,
            reports: 0,
            violations: Vec::new(),
            dropped_nodes: 0,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn waiting(&self) -> usize {
        self.waiting.len()
    }

    fn all_waiting(&self) -> bool {
        self.waiting.len() == self.workers.len()
    }

    fn violation(&mut self, what: String) {
        self.violations.push(format!("MT{}: {what}", self.machine));
    }

    fn next_remote(&self, x: usize) -> usize {
        let next = (x + 1) % self.n_machines;
        if next == self.machine {
            (next + 1) % self.n_machines
        } else {
            next
        }
    }

    fn schedule_retry(&mut self, out: &mut Outbox) {
        if !self.retry_pending {
            self.retry_pending = true;
            out.timer(self.cfg.backoff, TimerKind::ManagerRetry);
        }
    }

    fn start_round(&mut self, out: &mut Outbox) {
        if self.outstanding.is_some() {
            self.violation("second remote request while one is outstanding".into());
            return;
        }
        if self.n_machines == 1 {
            self.round_exhausted(out);
            return;
        }
        self.round_left = self.n_machines - 1;
        self.probe_next(out);
    }

    fn probe_next(&mut self, out: &mut Outbox) {
        let x = self.cursor;
        self.cursor = self.next_remote(x);
        self.round_left -= 1;
        self.outstanding = Some(x);
        self.remote_requests += 1;
        out.send(Addr::Manager(x), Message::GlobalLoadRequest);
    }

    fn round_exhausted(&mut self, out: &mut Outbox) {
        if self.all_waiting() && self.shared.ml.is_empty() && self.collection.is_none() {
            if !self.reported {
                self.seq += 1;
                self.reported = true;
                self.reports += 1;
                out.send(
                    Addr::Leader,
                    Message::LocalTermination {
                        counts: self.shared.counts(),
                        seq: self.seq,
                    },
                );
            }
            if self.cfg.balancing && self.n_machines > 1 {
                self.schedule_retry(out);
            }
        } else if self.cfg.balancing {
            self.schedule_retry(out);
        }
    }

    /// Hands every node in the global list to the waiting workers, split
    /// as evenly as possible in address order.
    fn distribute(&mut self, out: &mut Outbox) {
        if self.waiting.is_empty() || self.shared.ml.is_empty() {
            return;
        }
        let mut nodes = self.shared.ml.consume_all().into_iter();
        let total = nodes.len();
        let idle = std::mem::take(&mut self.waiting);
        let (q, r) = (total / idle.len(), total % idle.len());
        for (i, w) in idle.into_iter().enumerate() {
            let share = q + usize::from(i < r);
            if share == 0 {
                out.send(Addr::Worker(w), Message::NoLoad);
            } else {
                let part: Vec<BnbNode> = nodes.by_ref().take(share).collect();
                self.shared.note_sent(part.len());
                out.send(Addr::Worker(w), Message::Load(part));
            }
        }
    }

    fn start_collection(&mut self, target: CollectFor, out: &mut Outbox) {
        if let CollectFor::Remote(x) = target {
            if !self.shared.ml.is_empty() {
                let nodes = self.shared.ml.consume_all();
                self.shared.note_sent(nodes.len());
                out.send(Addr::Manager(x), Message::GlobalLoad(nodes));
                return self.next_queued(out);
            }
        }
        let pending: BTreeSet<CoreAddr> = match target {
            CollectFor::Remote(_) => self.workers.iter().copied().collect(),
            CollectFor::Local => self
                .workers
                .iter()
                .copied()
                .filter(|w| !self.waiting.contains(w))
                .collect(),
        };
        for w in &pending {
            out.send(Addr::Worker(*w), Message::LoadRequest);
        }
        self.collection = Some(Collection {
            target,
            pending,
            nodes: Vec::new(),
        });
        self.finish_collection_if_done(out);
    }

    fn next_queued(&mut self, out: &mut Outbox) {
        if let Some(x) = self.queued.pop_front() {
            self.start_collection(CollectFor::Remote(x), out);
        } else {
            self.maybe_start_round(out);
        }
    }

    /// Workers that queued up while the manager was busy still need a round.
    fn maybe_start_round(&mut self, out: &mut Outbox) {
        if self.cfg.balancing
            && self.outstanding.is_none()
            && self.collection.is_none()
            && self.waiting.len() >= self.cfg.nt
            && !self.retry_pending
        {
            self.start_round(out);
        }
    }

    fn collection_reply(&mut self, from: CoreAddr, nodes: Vec<BnbNode>, out: &mut Outbox) {
        let Some(c) = self.collection.as_mut() else {
            self.violation(format!("reply from {from} outside a collection"));
            return;
        };
        if !c.pending.remove(&from) {
            self.violation(format!("duplicate collection reply from {from}"));
            return;
        }
        self.shared.note_received(nodes.len());
        c.nodes.extend(nodes);
        self.finish_collection_if_done(out);
    }

    fn finish_collection_if_done(&mut self, out: &mut Outbox) {
        if !self.collection.as_ref().is_some_and(|c| c.pending.is_empty()) {
            return;
        }
        let Collection { target, nodes, .. } = self.collection.take().expect("checked above");
        match target {
            CollectFor::Remote(x) => {
                if nodes.is_empty() {
                    out.send(Addr::Manager(x), Message::GlobalNoLoad);
                } else {
                    self.shared.note_sent(nodes.len());
                    out.send(Addr::Manager(x), Message::GlobalLoad(nodes));
                }
            }
            CollectFor::Local => {
                if nodes.is_empty() {
                    if self.outstanding.is_none() && self.n_machines > 1 {
                        self.start_round(out);
                    } else {
                        self.round_exhausted(out);
                    }
                } else {
                    self.shared.ml.produce(nodes);
                    self.distribute(out);
                }
            }
        }
        self.next_queued(out);
    }

    pub fn handle(&mut self, from: Addr, msg: Message, out: &mut Outbox) {
        if self.terminated {
            self.dropped_nodes += msg.nodes().len() as u64;
            return;
        }
        match (from, msg) {
            (Addr::Worker(w), Message::LoadRequest) => {
                if !self.waiting.insert(w) {
                    self.violation(format!("{w} asked twice"));
                }
                if !self.shared.ml.is_empty() {
                    self.distribute(out);
                } else if !self.cfg.balancing {
                    self.round_exhausted(out);
                } else {
                    self.maybe_start_round(out);
                }
            }
            (Addr::Worker(w), Message::Load(nodes)) => self.collection_reply(w, nodes, out),
            (Addr::Worker(w), Message::NoLoad) => self.collection_reply(w, Vec::new(), out),
            (Addr::Worker(_), Message::NewIncumbent(cost)) => {
                self.shared.incumbent.lower_to(cost);
                if cost < self.best_forwarded {
                    self.best_forwarded = cost;
                    for m in (0..self.n_machines).filter(|&m| m != self.machine) {
                        out.send(Addr::Manager(m), Message::NewIncumbent(cost));
                    }
                }
            }
            (Addr::Manager(_) | Addr::Leader, Message::NewIncumbent(cost)) => {
                self.shared.incumbent.lower_to(cost);
                self.best_forwarded = self.best_forwarded.min(cost);
            }
            (Addr::Manager(x), Message::GlobalLoadRequest) => {
                if self.collection.is_some() {
                    self.queued.push_back(x);
                } else {
                    self.start_collection(CollectFor::Remote(x), out);
                }
            }
            (Addr::Manager(x), Message::GlobalLoad(nodes)) => {
                if self.outstanding != Some(x) {
                    self.violation(format!("unsolicited GlobalLoad from MT{x}"));
                }
                self.outstanding = None;
                self.round_left = 0;
                self.cursor = (self.machine + 1) % self.n_machines;
                if self.reported {
                    self.reported = false;
                    out.send(Addr::Leader, Message::Revoke { seq: self.seq });
                }
                self.shared.note_received(nodes.len());
                self.shared.ml.produce(nodes);
                self.distribute(out);
            }
            (Addr::Manager(x), Message::GlobalNoLoad) => {
                if self.outstanding != Some(x) {
                    self.violation(format!("unsolicited GlobalNoLoad from MT{x}"));
                }
                self.outstanding = None;
                if self.round_left > 0 && !self.waiting.is_empty() {
                    self.probe_next(out);
                } else {
                    self.round_left = 0;
                    self.round_exhausted(out);
                }
            }
            (Addr::Leader, Message::TerminationProbe { epoch }) => {
                out.send(
                    Addr::Leader,
                    Message::TerminationAck {
                        epoch,
                        seq: self.seq,
                        idle: self.reported,
                        counts: self.shared.counts(),
                    },
                );
            }
            (Addr::Leader, Message::Terminate) => {
                self.terminated = true;
                for w in &self.workers {
                    out.send(Addr::Worker(*w), Message::Terminate);
                }
            }
            (from, other) => self.violation(format!("unexpected {:?} from {from}", other.kind())),
        }
    }

    pub fn on_timer(&mut self, kind: TimerKind, out: &mut Outbox) {
        if kind != TimerKind::ManagerRetry {
            return;
        }
        self.retry_pending = false;
        if self.terminated || self.waiting.is_empty() {
            return;
        }
        if self.outstanding.is_some() || self.collection.is_some() {
            self.schedule_retry(out);
        } else if self.all_waiting() {
            self.start_round(out);
        } else {
            self.start_collection(CollectFor::Local, out);
        }
    }

    /// Nodes parked in the global list (nonzero only after an unsafe
    /// termination).
    pub fn pending_nodes(&self) -> u64 {
        self.shared.ml.len() as u64
    }
}

pub struct Leader {
    workers: Vec<CoreAddr>,
    n_machines: usize,
    detector: TerminationDetector,
    pub counters: NodeCounters,
    terminated: bool,
    pub violations: Vec<String>,
}

impl Leader {
    pub fn new(topology: &ClusterTopology, mode: TerminationMode) -> Self {
        Self {
            workers: topology.cores(),
            n_machines: topology.n_machines(),
            detector: TerminationDetector::new(mode, topology.n_machines()),
            counters: NodeCounters::default(),
            terminated: false,
            violations: Vec::new(),
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Solves the root and spreads its children over all workers.
    /// Returns the work estimate of the root.
    pub fn start(&mut self, inst: &SppInstance, incumbent: &SharedIncumbent, out: &mut Outbox) -> u64 {
        let tracking = Tracking {
            inner: incumbent,
            improved: Cell::new(None),
        };
        self.counters.created += 1;
        let processed = process_node(inst, BnbNode::root(inst), &tracking, &mut self.counters, &mut Quiet);
        if let Some(cost) = tracking.improved.get() {
            for m in 0..self.n_machines {
                out.send(Addr::Manager(m), Message::NewIncumbent(cost));
            }
        }
        let children = match processed.outcome {
            NodeOutcome::Expanded(children) => children,
            _ => Vec::new(),
        };
        let (q, r) = (children.len() / self.workers.len(), children.len() % self.workers.len());
        let mut children = children.into_iter();
        for (i, w) in self.workers.iter().enumerate() {
            let share = q + usize::from(i < r);
            if share == 0 {
                out.send(Addr::Worker(*w), Message::NoLoad);
            } else {
                let part: Vec<BnbNode> = children.by_ref().take(share).collect();
                self.detector.add_leader_sent(part.len() as u64);
                out.send(Addr::Worker(*w), Message::Load(part));
            }
        }
        processed.work
    }

    pub fn handle(&mut self, from: Addr, msg: Message, out: &mut Outbox) {
        let Addr::Manager(m) = from else {
            self.violations
                .push(format!("LT: unexpected {:?} from {from}", msg.kind()));
            return;
        };
        let decision = match msg {
            Message::LocalTermination { counts, seq } => self.detector.on_report(m, counts, seq),
            Message::Revoke { seq } => self.detector.on_revoke(m, seq),
            Message::TerminationAck {
                epoch,
                seq,
                idle,
                counts,
            } => self.detector.on_ack(m, epoch, seq, idle, counts),
            other => {
                self.violations
                    .push(format!("LT: unexpected {:?} from {from}", other.kind()));
                Decision::Wait
            }
        };
        match decision {
            Decision::Wait => {}
            Decision::Probe { epoch } => {
                for m in 0..self.n_machines {
                    out.send(Addr::Manager(m), Message::TerminationProbe { epoch });
                }
            }
            Decision::Terminate => {
                self.terminated = true;
                for m in 0..self.n_machines {
                    out.send(Addr::Manager(m), Message::Terminate);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spp_core::mcm::MIB;

    fn topo(m: usize, p: usize, c: usize) -> ClusterTopology {
        ClusterTopology::uniform(m, p, c, 6 * MIB, 8e-9)
    }

    fn core(machine: usize, processor: usize, core: usize) -> CoreAddr {
        CoreAddr {
            machine,
            processor,
            core,
        }
    }

    #[test]
    fn probe_order_walks_processor_then_machine() {
        let t = topo(1, 2, 2);
        assert_eq!(
            probe_order(&t, core(0, 0, 0)),
            vec![core(0, 0, 1), core(0, 1, 0), core(0, 1, 1)]
        );
        assert_eq!(
            probe_order(&t, core(0, 1, 1)),
            vec![core(0, 1, 0), core(0, 0, 0), core(0, 0, 1)]
        );
        assert!(probe_order(&topo(2, 1, 1), core(1, 0, 0)).is_empty());
    }

    fn worker(t: &ClusterTopology, addr: CoreAddr, budget: Option<usize>) -> Worker {
        let budgets = Arc::new(t.cores().into_iter().map(|c| (c, budget)).collect());
        Worker::new(
            addr,
            t,
            WorkerConfig {
                balancing: true,
                traversal: Traversal::Breadth,
                budget: None,
                backoff: 1e-4,
            },
            Arc::new(MachineShared::new(None)),
            budgets,
        )
    }

    fn nodes(n: usize) -> Vec<BnbNode> {
        (0..n)
            .map(|i| BnbNode {
                active_items: vec![0, 1],
                active_vars: vec![i as VarId],
                fixed_one: vec![],
                fixed_cost: i as u64,
                pi: vec![0.0, 0.0],
                level: 1,
                lb: 0.0,
            })
            .collect()
    }

    #[test]
    fn idle_worker_probes_neighbors_then_manager() {
        let t = topo(1, 2, 2);
        let mut w = worker(&t, core(0, 0, 0), None);
        let mut out = Outbox::default();
        w.handle(Addr::Leader, Message::NoLoad, 0.0, &mut out);
        let targets: Vec<Addr> = vec![
            Addr::Worker(core(0, 0, 1)),
            Addr::Worker(core(0, 1, 0)),
            Addr::Worker(core(0, 1, 1)),
        ];
        for (i, t) in targets.iter().enumerate() {
            assert_eq!(out.sends.last().unwrap(), &(*t, Message::LoadRequest));
            assert_eq!(w.phase(), WorkerPhase::Probing(i));
            w.handle(*t, Message::NoLoad, 0.0, &mut out);
        }
        assert_eq!(out.sends.last().unwrap(), &(Addr::Manager(0), Message::LoadRequest));
        assert_eq!(out.sends.len(), 4);
        assert_eq!((w.stats.local_req, w.stats.global_req), (3, 1));
        w.handle(Addr::Manager(0), Message::NoLoad, 0.0, &mut out);
        assert_eq!(w.phase(), WorkerPhase::Backoff);
        assert_eq!(out.timers, vec![(1e-4, TimerKind::WorkerRetry)]);
        assert!(w.violations.is_empty());
    }

    #[test]
    fn single_core_machine_escalates_directly() {
        let t = topo(2, 1, 1);
        let mut w = worker(&t, core(1, 0, 0), None);
        let mut out = Outbox::default();
        w.handle(Addr::Leader, Message::NoLoad, 0.0, &mut out);
        assert_eq!(out.sends, vec![(Addr::Manager(1), Message::LoadRequest)]);
    }

    #[test]
    fn request_gives_half_clamped_by_budget() {
        let t = topo(1, 1, 2);
        let size = nodes(1)[0].size_bytes();
        let mut w = worker(&t, core(0, 0, 0), Some(3 * size));
        let mut out = Outbox::default();
        w.handle(Addr::Leader, Message::Load(nodes(10)), 0.0, &mut out);
        w.handle(Addr::Worker(core(0, 0, 1)), Message::LoadRequest, 0.0, &mut out);
        let Message::Load(given) = &out.sends[0].1 else {
            panic!("expected Load")
        };
        assert_eq!(given.len(), 3);
        // oldest first, values untouched
        assert_eq!(given[0], nodes(1)[0]);
        // a manager is not clamped
        w.handle(Addr::Manager(0), Message::LoadRequest, 0.0, &mut out);
        let Message::Load(given) = &out.sends[1].1 else {
            panic!("expected Load")
        };
        assert_eq!(given.len(), 3);
        let mut w2 = worker(&t, core(0, 0, 1), None);
        w2.handle(Addr::Worker(core(0, 0, 0)), Message::LoadRequest, 0.0, &mut out);
        assert_eq!(out.sends[2].1, Message::NoLoad);
    }

    #[test]
    fn request_with_ample_budget_gives_half() {
        let t = topo(1, 1, 2);
        let mut w = worker(&t, core(0, 0, 0), Some(1 << 20));
        let mut out = Outbox::default();
        w.handle(Addr::Leader, Message::Load(nodes(10)), 0.0, &mut out);
        w.handle(Addr::Worker(core(0, 0, 1)), Message::LoadRequest, 0.0, &mut out);
        assert_eq!(out.sends[0].1.nodes().len(), 5);
        // at least one node even when none fits, but never the last one
        let mut w1 = worker(&t, core(0, 0, 1), Some(0));
        w1.handle(Addr::Leader, Message::Load(nodes(2)), 0.0, &mut out);
        w1.handle(Addr::Worker(core(0, 0, 0)), Message::LoadRequest, 0.0, &mut out);
        assert_eq!(out.sends[1].1.nodes().len(), 1);
        w1.handle(Addr::Worker(core(0, 0, 0)), Message::LoadRequest, 0.0, &mut out);
        assert_eq!(out.sends[2].1, Message::NoLoad);
    }

    fn manager(t: &ClusterTopology, machine: usize, nt: usize) -> Manager {
        Manager::new(
            machine,
            t,
            ManagerConfig {
                balancing: true,
                nt,
                backoff: 1e-3,
            },
            Arc::new(MachineShared::new(None)),
        )
    }

    fn remote_requests(out: &Outbox) -> Vec<Addr> {
        out.sends
            .iter()
            .filter(|(_, m)| *m == Message::GlobalLoadRequest)
            .map(|(to, _)| *to)
            .collect()
    }

    #[test]
    fn threshold_gates_remote_requests() {
        let t = topo(2, 2, 2);
        let mut m = manager(&t, 0, 4);
        let mut out = Outbox::default();
        for k in 0..3 {
            m.handle(Addr::Worker(core(0, k / 2, k % 2)), Message::LoadRequest, &mut out);
        }
        assert!(remote_requests(&out).is_empty());
        m.handle(Addr::Worker(core(0, 1, 1)), Message::LoadRequest, &mut out);
        assert_eq!(remote_requests(&out), vec![Addr::Manager(1)]);

        let mut m = manager(&t, 0, 1);
        let mut out = Outbox::default();
        m.handle(Addr::Worker(core(0, 0, 0)), Message::LoadRequest, &mut out);
        m.handle(Addr::Worker(core(0, 0, 1)), Message::LoadRequest, &mut out);
        assert_eq!(remote_requests(&out), vec![Addr::Manager(1)]);
    }

    #[test]
    fn global_load_split_by_address() {
        let t = topo(2, 2, 2);
        let mut m = manager(&t, 0, 1);
        let mut out = Outbox::default();
        for k in [3, 1, 0, 2] {
            m.handle(Addr::Worker(core(0, k / 2, k % 2)), Message::LoadRequest, &mut out);
        }
        out.sends.clear();
        m.handle(Addr::Manager(1), Message::GlobalLoad(nodes(5)), &mut out);
        let shares: Vec<(Addr, usize)> = out.sends.iter().map(|(a, msg)| (*a, msg.nodes().len())).collect();
        assert_eq!(
            shares,
            vec![
                (Addr::Worker(core(0, 0, 0)), 2),
                (Addr::Worker(core(0, 0, 1)), 1),
                (Addr::Worker(core(0, 1, 0)), 1),
                (Addr::Worker(core(0, 1, 1)), 1),
            ]
        );
        assert_eq!(m.waiting(), 0);
        assert!(m.violations.is_empty());
    }

    #[test]
    fn small_global_load_leaves_some_without() {
        let t = topo(2, 2, 2);
        let mut m = manager(&t, 0, 1);
        let mut out = Outbox::default();
        for k in 0..4 {
            m.handle(Addr::Worker(core(0, k / 2, k % 2)), Message::LoadRequest, &mut out);
        }
        out.sends.clear();
        m.handle(Addr::Manager(1), Message::GlobalLoad(nodes(2)), &mut out);
        let noload = out.sends.iter().filter(|(_, m)| *m == Message::NoLoad).count();
        assert_eq!(noload, 2);
    }

    #[test]
    fn collection_waits_for_every_worker() {
        let t = topo(2, 1, 2);
        let mut m = manager(&t, 1, 1);
        let mut out = Outbox::default();
        m.handle(Addr::Manager(0), Message::GlobalLoadRequest, &mut out);
        assert_eq!(out.sends.len(), 2);
        m.handle(Addr::Worker(core(1, 0, 0)), Message::Load(nodes(3)), &mut out);
        assert_eq!(out.sends.len(), 2);
        m.handle(Addr::Worker(core(1, 0, 1)), Message::Load(nodes(2)), &mut out);
        assert_eq!(out.sends[2].0, Addr::Manager(0));
        assert_eq!(out.sends[2].1.kind(), crate::message::MsgKind::GlobalLoad);
        assert_eq!(out.sends[2].1.nodes().len(), 5);

        let mut out = Outbox::default();
        m.handle(Addr::Manager(0), Message::GlobalLoadRequest, &mut out);
        m.handle(Addr::Worker(core(1, 0, 0)), Message::NoLoad, &mut out);
        m.handle(Addr::Worker(core(1, 0, 1)), Message::NoLoad, &mut out);
        assert_eq!(out.sends.last().unwrap(), &(Addr::Manager(0), Message::GlobalNoLoad));
    }

    #[test]
    fn round_visits_every_other_machine_once() {
        let t = topo(4, 1, 1);
        let mut m = manager(&t, 2, 1);
        let mut out = Outbox::default();
        m.handle(Addr::Worker(core(2, 0, 0)), Message::LoadRequest, &mut out);
        for x in [3, 0, 1] {
            assert_eq!(remote_requests(&out).last(), Some(&Addr::Manager(x)));
            m.handle(Addr::Manager(x), Message::GlobalNoLoad, &mut out);
        }
        assert_eq!(remote_requests(&out).len(), 3);
        let reports: Vec<_> = out
            .sends
            .iter()
            .filter(|(_, msg)| matches!(msg, Message::LocalTermination { .. }))
            .collect();
        assert_eq!(reports.len(), 1);
        // load arriving mid-round cancels the termination entry
        let mut m = manager(&t, 2, 1);
        let mut out = Outbox::default();
        m.handle(Addr::Worker(core(2, 0, 0)), Message::LoadRequest, &mut out);
        m.handle(Addr::Manager(3), Message::GlobalNoLoad, &mut out);
        m.handle(Addr::Manager(0), Message::GlobalLoad(nodes(1)), &mut out);
        assert!(out
            .sends
            .iter()
            .all(|(_, msg)| !matches!(msg, Message::LocalTermination { .. })));
    }

    #[test]
    fn incumbent_forwarded_only_when_strictly_better() {
        let t = topo(3, 1, 1);
        let mut m = manager(&t, 0, 1);
        let mut out = Outbox::default();
        m.handle(Addr::Worker(core(0, 0, 0)), Message::NewIncumbent(10), &mut out);
        assert_eq!(out.sends.len(), 2);
        m.handle(Addr::Worker(core(0, 0, 0)), Message::NewIncumbent(10), &mut out);
        m.handle(Addr::Manager(1), Message::NewIncumbent(7), &mut out);
        m.handle(Addr::Worker(core(0, 0, 0)), Message::NewIncumbent(8), &mut out);
        assert_eq!(out.sends.len(), 2);
        assert_eq!(m.shared.incumbent.threshold(), 7);
    }
}
