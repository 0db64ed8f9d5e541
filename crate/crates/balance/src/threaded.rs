//! Runtime with one OS thread per actor.
//!
//! Workers interleave node processing with mailbox polling; managers and the
//! leader block on their mailboxes. Busy times are measured wall-clock time
//! spent inside node steps.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};
use spp_core::{ClusterTopology, SppInstance};

use crate::actors::{Leader, Manager, Outbox, TimerKind, Worker};
use crate::message::{Addr, Envelope};
use crate::transport::{read_frames, Link, Mailboxes, MemoryLink, Router, SocketLink, TransportKind};
use crate::{Cluster, ParallelConfig, ParallelOutcome, RunError};

const IDLE_POLL: Duration = Duration::from_millis(20);

struct Control {
    start: Instant,
    abort: AtomicBool,
    error: Mutex<Option<RunError>>,
    consumed: AtomicU64,
    messages: AtomicU64,
    node_limit: Option<u64>,
    timeout: Option<Duration>,
}

impl Control {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::Acquire)
    }

    fn fail(&self, err: RunError) {
        let mut slot = self.error.lock().unwrap_or_else(|e| e.into_inner());
        slot.get_or_insert(err);
        self.abort.store(true, Ordering::Release);
    }

    fn count_node(&self) {
        let n = self.consumed.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(limit) = self.node_limit {
            if n > limit {
                self.fail(RunError::NodeLimit(limit));
            }
        }
    }

    fn check_timeout(&self) {
        if let Some(t) = self.timeout {
            if self.start.elapsed() > t {
                self.fail(RunError::Timeout(t));
            }
        }
    }
}

struct Ctx<'a> {
    router: &'a Router,
    ctl: &'a Control,
}

impl Ctx<'_> {
    /// Sends everything in `out`; returns its timers as absolute deadlines.
    fn flush(&self, from: Addr, out: Outbox, timers: &mut Vec<(Instant, TimerKind)>) {
        for (to, msg) in out.sends {
            self.ctl.messages.fetch_add(1, Ordering::Relaxed);
            if let Err(e) = self.router.send(Envelope { from, to, msg }) {
                self.ctl.fail(RunError::Transport(e.to_string()));
            }
        }
        let now = Instant::now();
        timers.extend(
            out.timers
                .into_iter()
                .map(|(d, k)| (now + Duration::from_secs_f64(d), k)),
        );
    }
}

fn due_timers(timers: &mut Vec<(Instant, TimerKind)>) -> Vec<TimerKind> {
    let now = Instant::now();
    let mut due = Vec::new();
    timers.retain(|&(at, k)| {
        if at <= now {
            due.push(k);
            false
        } else {
            true
        }
    });
    due
}

fn wait_for(timers: &[(Instant, TimerKind)]) -> Duration {
    let now = Instant::now();
    timers
        .iter()
        .map(|&(at, _)| at.saturating_duration_since(now))
        .min()
        .map_or(IDLE_POLL, |d| d.min(IDLE_POLL))
}

fn worker_loop(mut w: Worker, rx: &Receiver<Envelope>, inst: &SppInstance, cx: &Ctx) -> Worker {
    let me = Addr::Worker(w.addr);
    let mut timers = Vec::new();
    while !cx.ctl.aborted() && !w.is_done() {
        while let Ok(env) = rx.try_recv() {
            let mut out = Outbox::default();
            w.handle(env.from, env.msg, cx.ctl.now(), &mut out);
            cx.flush(me, out, &mut timers);
        }
        if w.is_done() {
            break;
        }
        for kind in due_timers(&mut timers) {
            let mut out = Outbox::default();
            w.on_timer(kind, cx.ctl.now(), &mut out);
            cx.flush(me, out, &mut timers);
        }
        let mut out = Outbox::default();
        w.settle(cx.ctl.now(), &mut out);
        cx.flush(me, out, &mut timers);
        if w.has_work() {
            let mut out = Outbox::default();
            let t = Instant::now();
            if w.step(inst, &mut out).is_some() {
                w.stats.busy_seconds += t.elapsed().as_secs_f64();
                cx.ctl.count_node();
            }
            cx.flush(me, out, &mut timers);
        } else {
            match rx.recv_timeout(wait_for(&timers)) {
                Ok(env) => {
                    let mut out = Outbox::default();
                    w.handle(env.from, env.msg, cx.ctl.now(), &mut out);
                    cx.flush(me, out, &mut timers);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
    }
    w
}

fn manager_loop(mut m: Manager, machine: usize, rx: &Receiver<Envelope>, cx: &Ctx) -> Manager {
    let me = Addr::Manager(machine);
    let mut timers = Vec::new();
    while !cx.ctl.aborted() && !m.is_terminated() {
        for kind in due_timers(&mut timers) {
            let mut out = Outbox::default();
            m.on_timer(kind, &mut out);
            cx.flush(me, out, &mut timers);
        }
        match rx.recv_timeout(wait_for(&timers)) {
            Ok(env) => {
                let mut out = Outbox::default();
                m.handle(env.from, env.msg, &mut out);
                cx.flush(me, out, &mut timers);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    m
}

fn leader_loop(
    mut leader: Leader,
    rx: &Receiver<Envelope>,
    cx: &Ctx,
    cluster_start: impl FnOnce(&mut Leader, &mut Outbox),
) -> Leader {
    let mut timers = Vec::new();
    let mut out = Outbox::default();
    cluster_start(&mut leader, &mut out);
    cx.flush(Addr::Leader, out, &mut timers);
    while !cx.ctl.aborted() && !leader.is_terminated() {
        cx.ctl.check_timeout();
        match rx.recv_timeout(IDLE_POLL) {
            Ok(env) => {
                let mut out = Outbox::default();
                leader.handle(env.from, env.msg, &mut out);
                cx.flush(Addr::Leader, out, &mut timers);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    leader
}

pub(crate) fn run(
    inst: &SppInstance,
    topology: &ClusterTopology,
    cfg: &ParallelConfig,
    transport: TransportKind,
    timeout: Option<Duration>,
) -> Result<ParallelOutcome, RunError> {
    let Cluster {
        leader,
        managers,
        workers,
        machines,
        budgets,
    } = Cluster::build(topology, cfg);

    let mut addrs = vec![Addr::Leader];
    addrs.extend((0..managers.len()).map(Addr::Manager));
    addrs.extend(workers.iter().map(|w| Addr::Worker(w.addr)));
    let mut senders = BTreeMap::new();
    let mut receivers = BTreeMap::new();
    for a in addrs {
        let (tx, rx) = unbounded();
        senders.insert(a, tx);
        receivers.insert(a, rx);
    }
    let mailboxes = Mailboxes(senders);
    let (link, readers): (Box<dyn Link>, Vec<_>) = match transport {
        TransportKind::Memory => (Box::new(MemoryLink::new(mailboxes.clone())), Vec::new()),
        TransportKind::Socket => {
            let (link, readers) =
                SocketLink::connect(topology.n_machines()).map_err(|e| RunError::Transport(e.to_string()))?;
            (Box::new(link), readers)
        }
    };
    let router = Router { mailboxes, link };
    let ctl = Control {
        start: Instant::now(),
        abort: AtomicBool::new(false),
        error: Mutex::new(None),
        consumed: AtomicU64::new(0),
        messages: AtomicU64::new(0),
        node_limit: cfg.node_limit,
        timeout,
    };
    let cx = Ctx {
        router: &router,
        ctl: &ctl,
    };
    let root_incumbent = &machines[0].incumbent;

    let (leader, managers, workers, wall) = thread::scope(|s| {
        let reader_handles: Vec<_> = readers
            .into_iter()
            .map(|stream| {
                let (boxes, ctl) = (&router.mailboxes, &ctl);
                s.spawn(move || {
                    if let Err(e) = read_frames(stream, |env| boxes.post(env)) {
                        if !ctl.aborted() {
                            ctl.fail(RunError::Transport(e.to_string()));
                        }
                    }
                })
            })
            .collect();
        let worker_handles: Vec<_> = workers
            .into_iter()
            .map(|w| {
                let rx = &receivers[&Addr::Worker(w.addr)];
                let cx = &cx;
                s.spawn(move || worker_loop(w, rx, inst, cx))
            })
            .collect();
        let manager_handles: Vec<_> = managers
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let rx = &receivers[&Addr::Manager(i)];
                let cx = &cx;
                s.spawn(move || manager_loop(m, i, rx, cx))
            })
            .collect();
        let leader = leader_loop(leader, &receivers[&Addr::Leader], &cx, |l, out| {
            l.start(inst, root_incumbent, out);
        });
        let workers: Vec<Worker> = worker_handles
            .into_iter()
            .map(|h| h.join().expect("worker thread"))
            .collect();
        let wall = ctl.now();
        let managers: Vec<Manager> = manager_handles
            .into_iter()
            .map(|h| h.join().expect("manager thread"))
            .collect();
        router.link.close();
        for h in reader_handles {
            h.join().expect("reader thread");
        }
        (leader, managers, workers, wall)
    });

    if let Some(err) = ctl.error.lock().unwrap_or_else(|e| e.into_inner()).take() {
        return Err(err);
    }
    let mut late_nodes = 0u64;
    for rx in receivers.values() {
        while let Ok(env) = rx.try_recv() {
            late_nodes += env.msg.nodes().len() as u64;
        }
    }
    let cluster = Cluster {
        leader,
        managers,
        workers,
        machines,
        budgets,
    };
    let messages = ctl.messages.load(Ordering::Relaxed);
    let mut outcome = cluster.assemble(inst, topology, cfg, wall, messages);
    outcome.audit.stranded_nodes += late_nodes;
    Ok(outcome)
}
