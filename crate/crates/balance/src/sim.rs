//! Deterministic discrete-event runtime.
//!
//! Actors run one event at a time on a virtual clock. Node processing takes
//! `work × seconds_per_work` virtual seconds, messages take a latency drawn
//! from the cluster model, and both are perturbed by a seeded jitter. Each
//! sender-receiver pair is delivered in order. Busy times are virtual, so
//! two runs with the same seed produce identical reports.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spp_core::{ClusterTopology, CoreAddr, SppInstance};

use crate::actors::{Outbox, TimerKind};
use crate::message::{Addr, Envelope, Message, MsgKind};
use crate::{Cluster, ParallelConfig, ParallelOutcome, RunError};

/// Extra delay for selected messages, used to provoke races.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRule {
    pub kind: MsgKind,
    pub from: Option<Addr>,
    pub to: Option<Addr>,
    /// Which matching message to delay, counting from 0.
    pub occurrence: usize,
    pub extra_seconds: f64,
    /// Let later messages on the same channel overtake the delayed one.
    pub fifo_exempt: bool,
}

impl DelayRule {
    fn matches(&self, env: &Envelope) -> bool {
        env.msg.kind() == self.kind && self.from.is_none_or(|a| a == env.from) && self.to.is_none_or(|a| a == env.to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub seconds_per_work: f64,
    /// Relative half-width of the uniform jitter on durations.
    pub jitter: f64,
    pub intra_latency: f64,
    /// Fixed part of an inter-machine message; the size-dependent part
    /// comes from the topology.
    pub inter_latency: f64,
    pub delays: Vec<DelayRule>,
    pub max_events: u64,
    /// Print every delivery and timer to stderr.
    pub trace: bool,
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            seconds_per_work: 2e-8,
            jitter: 0.1,
            intra_latency: 2e-6,
            inter_latency: 5e-5,
            delays: Vec::new(),
            max_events: 50_000_000,
            trace: false,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

#[derive(Debug)]
enum Event {
    Deliver(Envelope),
    StepDone(usize),
    Timer(Addr, TimerKind),
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: the heap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    inst: &'a SppInstance,
    topology: &'a ClusterTopology,
    cfg: &'a SimConfig,
    node_limit: Option<u64>,
    cluster: Cluster,
    index: BTreeMap<CoreAddr, usize>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    rng: ChaCha8Rng,
    busy: Vec<bool>,
    mailbox: Vec<Vec<Envelope>>,
    channel_clock: BTreeMap<(Addr, Addr), f64>,
    rule_hits: Vec<usize>,
    messages: u64,
    consumed: u64,
    end_time: f64,
}

impl Sim<'_> {
    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn jitter(&mut self) -> f64 {
        if self.cfg.jitter > 0.0 {
            1.0 + self.rng.gen_range(-self.cfg.jitter..=self.cfg.jitter)
        } else {
            1.0
        }
    }

    fn latency(&mut self, env: &Envelope) -> f64 {
        let (a, b) = (env.from.machine(), env.to.machine());
        let base = if a == b {
            self.cfg.intra_latency
        } else {
            self.cfg.inter_latency + self.topology.comm_time(env.msg.payload_bytes() as f64, a, b)
        };
        base * self.jitter()
    }

    fn dispatch(&mut self, from: Addr, out: Outbox, now: f64) {
        for (to, msg) in out.sends {
            let env = Envelope { from, to, msg };
            self.messages += 1;
            let mut at = now + self.latency(&env);
            let mut exempt = false;
            for (i, rule) in self.cfg.delays.iter().enumerate() {
                if rule.matches(&env) {
                    if self.rule_hits[i] == rule.occurrence {
                        at += rule.extra_seconds;
                        exempt |= rule.fifo_exempt;
                    }
                    self.rule_hits[i] += 1;
                }
            }
            if !exempt {
                let clock = self.channel_clock.entry((from, to)).or_insert(f64::NEG_INFINITY);
                at = at.max(*clock);
                *clock = at;
            }
            self.push(at, Event::Deliver(env));
        }
        for (delay, kind) in out.timers {
            self.push(now + delay, Event::Timer(from, kind));
        }
    }

    fn deliver(&mut self, env: Envelope, now: f64) -> Result<(), RunError> {
        let mut out = Outbox::default();
        let to = env.to;
        match to {
            Addr::Worker(c) => {
                let w = self.index[&c];
                if self.busy[w] {
                    self.mailbox[w].push(env);
                    return Ok(());
                }
                let terminate = env.msg == Message::Terminate;
                self.cluster.workers[w].handle(env.from, env.msg, now, &mut out);
                if terminate {
                    self.end_time = self.end_time.max(now);
                }
                self.dispatch(to, out, now);
                return self.advance_worker(w, now);
            }
            Addr::Manager(m) => self.cluster.managers[m].handle(env.from, env.msg, &mut out),
            Addr::Leader => self.cluster.leader.handle(env.from, env.msg, &mut out),
        }
        self.dispatch(to, out, now);
        Ok(())
    }

    /// Lets an unoccupied worker look for work or start its next node.
    fn advance_worker(&mut self, w: usize, now: f64) -> Result<(), RunError> {
        let me = Addr::Worker(self.cluster.workers[w].addr);
        let mut out = Outbox::default();
        self.cluster.workers[w].settle(now, &mut out);
        self.dispatch(me, out, now);
        if !self.cluster.workers[w].has_work() {
            return Ok(());
        }
        let mut out = Outbox::default();
        let Some(work) = self.cluster.workers[w].step(self.inst, &mut out) else {
            return Ok(());
        };
        self.consumed += 1;
        if let Some(limit) = self.node_limit {
            if self.consumed > limit {
                return Err(RunError::NodeLimit(limit));
            }
        }
        let dur = work.max(1) as f64 * self.cfg.seconds_per_work * self.jitter();
        self.cluster.workers[w].stats.busy_seconds += dur;
        self.busy[w] = true;
        self.dispatch(me, out, now + dur);
        self.push(now + dur, Event::StepDone(w));
        Ok(())
    }

    fn step_done(&mut self, w: usize, now: f64) -> Result<(), RunError> {
        self.busy[w] = false;
        let me = Addr::Worker(self.cluster.workers[w].addr);
        for env in std::mem::take(&mut self.mailbox[w]) {
            let mut out = Outbox::default();
            if env.msg == Message::Terminate {
                self.end_time = self.end_time.max(now);
            }
            self.cluster.workers[w].handle(env.from, env.msg, now, &mut out);
            self.dispatch(me, out, now);
        }
        self.advance_worker(w, now)
    }

    fn timer(&mut self, addr: Addr, kind: TimerKind, now: f64) -> Result<(), RunError> {
        let mut out = Outbox::default();
        match addr {
            Addr::Worker(c) => {
                let w = self.index[&c];
                self.cluster.workers[w].on_timer(kind, now, &mut out);
                self.dispatch(addr, out, now);
                if !self.busy[w] {
                    return self.advance_worker(w, now);
                }
                return Ok(());
            }
            Addr::Manager(m) => self.cluster.managers[m].on_timer(kind, &mut out),
            Addr::Leader => {}
        }
        self.dispatch(addr, out, now);
        Ok(())
    }
}

struct TraceMsg<'a>(&'a Message);

impl std::fmt::Debug for TraceMsg<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Message::Load(n) => write!(f, "Load({})", n.len()),
            Message::GlobalLoad(n) => write!(f, "GlobalLoad({})", n.len()),
            other => write!(f, "{other:?}"),
        }
    }
}

pub(crate) fn run(
    inst: &SppInstance,
    topology: &ClusterTopology,
    cfg: &ParallelConfig,
    sim_cfg: &SimConfig,
) -> Result<ParallelOutcome, RunError> {
    let cluster = Cluster::build(topology, cfg);
    let index: BTreeMap<CoreAddr, usize> = topology.cores().into_iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = index.len();
    let mut sim = Sim {
        inst,
        topology,
        cfg: sim_cfg,
        node_limit: cfg.node_limit,
        cluster,
        index,
        queue: BinaryHeap::new(),
        seq: 0,
        rng: ChaCha8Rng::seed_from_u64(sim_cfg.seed),
        busy: vec![false; n],
        mailbox: vec![Vec::new(); n],
        channel_clock: BTreeMap::new(),
        rule_hits: vec![0; sim_cfg.delays.len()],
        messages: 0,
        consumed: 0,
        end_time: 0.0,
    };

    let mut out = Outbox::default();
    let incumbent = &sim.cluster.machines[0].incumbent;
    let work = sim.cluster.leader.start(inst, incumbent, &mut out);
    let t0 = work.max(1) as f64 * sim_cfg.seconds_per_work;
    sim.dispatch(Addr::Leader, out, t0);

    let mut events = 0u64;
    let mut last = t0;
    while let Some(Scheduled { time, event, .. }) = sim.queue.pop() {
        events += 1;
        last = time;
        if events > sim_cfg.max_events {
            return Err(RunError::EventLimit(sim_cfg.max_events));
        }
        if sim_cfg.trace {
            match &event {
                Event::Deliver(env) => eprintln!("{time:.6} {} -> {}: {:?}", env.from, env.to, TraceMsg(&env.msg)),
                Event::Timer(addr, kind) => eprintln!("{time:.6} timer {addr} {kind:?}"),
                Event::StepDone(_) => {}
            }
        }
        match event {
            Event::Deliver(env) => sim.deliver(env, time)?,
            Event::StepDone(w) => sim.step_done(w, time)?,
            Event::Timer(addr, kind) => sim.timer(addr, kind, time)?,
        }
    }
    let wall = if sim.end_time > 0.0 { sim.end_time } else { last };
    let messages = sim.messages;
    Ok(sim.cluster.assemble(inst, topology, cfg, wall, messages))
}
