//! Message vocabulary and its byte encoding.
//!
//! A frame is a little-endian `u32` length (of everything after it), a
//! one-byte kind tag, the sender and receiver addresses, then the payload.

use std::fmt;

use spp_core::{BnbNode, CoreAddr};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addr {
    Leader,
    Manager(usize),
    Worker(CoreAddr),
}

impl Addr {
    /// Machine hosting this endpoint; the leader lives on machine 0.
    pub fn machine(&self) -> usize {
        match self {
            Addr::Leader => 0,
            Addr::Manager(m) => *m,
            Addr::Worker(c) => c.machine,
        }
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Leader => write!(f, "LT"),
            Addr::Manager(m) => write!(f, "MT{m}"),
            Addr::Worker(c) => write!(f, "T{c}"),
        }
    }
}

/// Snapshot of a machine's node-transfer counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferCounts {
    /// Nodes this machine put into `Load`/`GlobalLoad` messages.
    pub sent: u64,
    /// Nodes this machine took out of `Load`/`GlobalLoad` messages.
    pub received: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Load(Vec<BnbNode>),
    NoLoad,
    /// Worker to worker, worker to its manager, or manager to its workers
    /// while collecting. The origin is the envelope's sender.
    LoadRequest,
    /// Manager to manager.
    GlobalLoadRequest,
    GlobalLoad(Vec<BnbNode>),
    GlobalNoLoad,
    NewIncumbent(u64),
    LocalTermination {
        counts: TransferCounts,
        seq: u64,
    },
    /// Withdraws the report with this sequence number.
    Revoke {
        seq: u64,
    },
    TerminationProbe {
        epoch: u64,
    },
    TerminationAck {
        epoch: u64,
        seq: u64,
        idle: bool,
        counts: TransferCounts,
    },
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Load = 1,
    NoLoad,
    LoadRequest,
    GlobalLoadRequest,
    GlobalLoad,
    GlobalNoLoad,
    NewIncumbent,
    LocalTermination,
    Revoke,
    TerminationProbe,
    TerminationAck,
    Terminate,
}

impl MsgKind {
    const ALL: [MsgKind; 12] = [
        MsgKind::Load,
        MsgKind::NoLoad,
        MsgKind::LoadRequest,
        MsgKind::GlobalLoadRequest,
        MsgKind::GlobalLoad,
        MsgKind::GlobalNoLoad,
        MsgKind::NewIncumbent,
        MsgKind::LocalTermination,
        MsgKind::Revoke,
        MsgKind::TerminationProbe,
        MsgKind::TerminationAck,
        MsgKind::Terminate,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self {
            Message::Load(_) => MsgKind::Load,
            Message::NoLoad => MsgKind::NoLoad,
            Message::LoadRequest => MsgKind::LoadRequest,
            Message::GlobalLoadRequest => MsgKind::GlobalLoadRequest,
            Message::GlobalLoad(_) => MsgKind::GlobalLoad,
            Message::GlobalNoLoad => MsgKind::GlobalNoLoad,
            Message::NewIncumbent(_) => MsgKind::NewIncumbent,
            Message::LocalTermination { .. } => MsgKind::LocalTermination,
            Message::Revoke { .. } => MsgKind::Revoke,
            Message::TerminationProbe { .. } => MsgKind::TerminationProbe,
            Message::TerminationAck { .. } => MsgKind::TerminationAck,
            Message::Terminate => MsgKind::Terminate,
        }
    }

    /// Nodes carried, if any.
    pub fn nodes(&self) -> &[BnbNode] {
        match self {
            Message::Load(n) | Message::GlobalLoad(n) => n,
            _ => &[],
        }
    }

    /// Payload size used for transfer-time estimates.
    pub fn payload_bytes(&self) -> usize {
        16 + self.nodes().iter().map(BnbNode::size_bytes).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: Addr,
    pub to: Addr,
    pub msg: Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("unknown address tag {0}")]
    UnknownAddr(u8),
    #[error("{0} trailing bytes after frame payload")]
    Trailing(usize),
    #[error("{0} message must carry at least one node")]
    EmptyLoad(&'static str),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection too large for a frame"));
    }
    fn addr(&mut self, a: &Addr) {
        match a {
            Addr::Leader => self.u8(0),
            Addr::Manager(m) => {
                self.u8(1);
                self.len(*m);
            }
            Addr::Worker(c) => {
                self.u8(2);
                self.len(c.machine);
                self.len(c.processor);
                self.len(c.core);
            }
        }
    }
    fn ids(&mut self, ids: &[u32]) {
        self.len(ids.len());
        ids.iter().for_each(|&v| self.u32(v));
    }
    fn node(&mut self, n: &BnbNode) {
        self.u32(n.level);
        self.u64(n.fixed_cost);
        self.f64(n.lb);
        self.ids(&n.active_items);
        self.ids(&n.active_vars);
        self.ids(&n.fixed_one);
        self.len(n.pi.len());
        n.pi.iter().for_each(|&p| self.f64(p));
    }
    fn nodes(&mut self, nodes: &[BnbNode]) {
        self.len(nodes.len());
        nodes.iter().for_each(|n| self.node(n));
    }
    fn counts(&mut self, c: &TransferCounts) {
        self.u64(c.sent);
        self.u64(c.received);
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.0.len() < N {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("split length"))
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        // every element takes at least 4 bytes; reject absurd lengths early
        if n > self.0.len() {
            return Err(WireError::Truncated);
        }
        Ok(n)
    }
    fn index(&mut self) -> Result<usize, WireError> {
        Ok(self.u32()? as usize)
    }
    fn addr(&mut self) -> Result<Addr, WireError> {
        match self.u8()? {
            0 => Ok(Addr::Leader),
            1 => Ok(Addr::Manager(self.index()?)),
            2 => Ok(Addr::Worker(CoreAddr {
                machine: self.index()?,
                processor: self.index()?,
                core: self.index()?,
            })),
            t => Err(WireError::UnknownAddr(t)),
        }
    }
    fn ids(&mut self) -> Result<Vec<u32>, WireError> {
        let n = self.len()?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn node(&mut self) -> Result<BnbNode, WireError> {
        let level = self.u32()?;
        let fixed_cost = self.u64()?;
        let lb = self.f64()?;
        let active_items = self.ids()?;
        let active_vars = self.ids()?;
        let fixed_one = self.ids()?;
        let n = self.len()?;
        let pi = (0..n).map(|_| self.f64()).collect::<Result<_, _>>()?;
        Ok(BnbNode {
            active_items,
            active_vars,
            fixed_one,
            fixed_cost,
            pi,
            level,
            lb,
        })
    }
    fn nodes(&mut self, kind: &'static str) -> Result<Vec<BnbNode>, WireError> {
        let n = self.len()?;
        if n == 0 {
            return Err(WireError::EmptyLoad(kind));
        }
        (0..n).map(|_| self.node()).collect()
    }
    fn counts(&mut self) -> Result<TransferCounts, WireError> {
        Ok(TransferCounts {
            sent: self.u64()?,
            received: self.u64()?,
        })
    }
}

/// Serializes an envelope into one frame.
pub fn encode(env: &Envelope) -> Vec<u8> {
    let mut w = Writer(vec![0; 4]);
    w.u8(env.msg.kind().tag());
    w.addr(&env.from);
    w.addr(&env.to);
    match &env.msg {
        Message::Load(nodes) | Message::GlobalLoad(nodes) => w.nodes(nodes),
        Message::NewIncumbent(cost) => w.u64(*cost),
        Message::LocalTermination { counts, seq } => {
            w.counts(counts);
            w.u64(*seq);
        }
        Message::Revoke { seq } => w.u64(*seq),
        Message::TerminationProbe { epoch } => w.u64(*epoch),
        Message::TerminationAck {
            epoch,
            seq,
            idle,
            counts,
        } => {
            w.u64(*epoch);
            w.u64(*seq);
            w.u8(u8::from(*idle));
            w.counts(counts);
        }
        Message::NoLoad
        | Message::LoadRequest
        | Message::GlobalLoadRequest
        | Message::GlobalNoLoad
        | Message::Terminate => {}
    }
    let body = u32::try_from(w.0.len() - 4).expect("frame too large");
    w.0[..4].copy_from_slice(&body.to_le_bytes());
    w.0
}

/// Length of the frame starting at `buf`, if its header is complete.
pub fn frame_len(buf: &[u8]) -> Option<usize> {
    let head: [u8; 4] = buf.get(..4)?.try_into().ok()?;
    Some(4 + u32::from_le_bytes(head) as usize)
}

/// Parses exactly one frame.
pub fn decode(frame: &[u8]) -> Result<Envelope, WireError> {
    let total = frame_len(frame).ok_or(WireError::Truncated)?;
    if frame.len() < total {
        return Err(WireError::Truncated);
    }
    if frame.len() > total {
        return Err(WireError::Trailing(frame.len() - total));
    }
    let mut r = Reader(&frame[4..]);
    let tag = r.u8()?;
    let kind = MsgKind::from_tag(tag).ok_or(WireError::UnknownKind(tag))?;
    let from = r.addr()?;
    let to = r.addr()?;
    let msg = match kind {
        MsgKind::Load => Message::Load(r.nodes("Load")?),
        MsgKind::GlobalLoad => Message::GlobalLoad(r.nodes("GlobalLoad")?),
        MsgKind::NoLoad => Message::NoLoad,
        MsgKind::LoadRequest => Message::LoadRequest,
        MsgKind::GlobalLoadRequest => Message::GlobalLoadRequest,
        MsgKind::GlobalNoLoad => Message::GlobalNoLoad,
        MsgKind::Terminate => Message::Terminate,
        MsgKind::NewIncumbent => Message::NewIncumbent(r.u64()?),
        MsgKind::LocalTermination => Message::LocalTermination {
            counts: r.counts()?,
            seq: r.u64()?,
        },
        MsgKind::Revoke => Message::Revoke { seq: r.u64()? },
        MsgKind::TerminationProbe => Message::TerminationProbe { epoch: r.u64()? },
        MsgKind::TerminationAck => Message::TerminationAck {
            epoch: r.u64()?,
            seq: r.u64()?,
            idle: r.u8()? != 0,
            counts: r.counts()?,
        },
    };
    if !r.0.is_empty() {
        return Err(WireError::Trailing(r.0.len()));
    }
    Ok(Envelope { from, to, msg })
}
