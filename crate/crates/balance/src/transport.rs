//! Message delivery between machines for the threaded runtime.
//!
//! Every endpoint owns a mailbox. Messages between endpoints of the same
//! machine go straight into the mailbox; messages between machines go
//! through a [`Link`], either in memory or as framed bytes over loopback
//! TCP. Both keep per-channel order.

use std::collections::BTreeMap;
use std::io::{self, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::Mutex;

use crossbeam_channel::Sender;
use thiserror::Error;

use crate::message::{decode, encode, frame_len, Addr, Envelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    Memory,
    Socket,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memory" => Ok(TransportKind::Memory),
            "socket" => Ok(TransportKind::Socket),
            other => Err(format!("unknown transport `{other}` (memory|socket)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("no mailbox for {0}")]
    UnknownAddr(Addr),
    #[error("mailbox of {0} is closed")]
    Closed(Addr),
    #[error("socket error: {0}")]
    Io(String),
    #[error("bad frame: {0}")]
    Frame(String),
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}

/// Senders for every endpoint's mailbox.
#[derive(Debug, Clone)]
pub struct Mailboxes(pub BTreeMap<Addr, Sender<Envelope>>);

impl Mailboxes {
    pub fn post(&self, env: Envelope) -> Result<(), TransportError> {
        let to = env.to;
        self.0
            .get(&to)
            .ok_or(TransportError::UnknownAddr(to))?
            .send(env)
            .map_err(|_| TransportError::Closed(to))
    }
}

pub trait Link: Send + Sync {
    /// Carries an envelope to another machine.
    fn send(&self, env: Envelope) -> Result<(), TransportError>;

    /// Flushes and closes outgoing channels.
    fn close(&self);
}

pub struct MemoryLink {
    mailboxes: Mailboxes,
}

impl MemoryLink {
    pub fn new(mailboxes: Mailboxes) -> Self {
        Self { mailboxes }
    }
}

impl Link for MemoryLink {
    fn send(&self, env: Envelope) -> Result<(), TransportError> {
        self.mailboxes.post(env)
    }

    fn close(&self) {}
}

/// One loopback TCP connection per ordered machine pair.
pub struct SocketLink {
    writers: BTreeMap<(usize, usize), Mutex<TcpStream>>,
}

impl SocketLink {
    /// Connects every machine to every other one. Returns the link and the
    /// receiving ends, to be drained with [`read_frames`].
    pub fn connect(machines: usize) -> Result<(Self, Vec<TcpStream>), TransportError> {
        let listeners = (0..machines)
            .map(|_| TcpListener::bind("127.0.0.1:0"))
            .collect::<io::Result<Vec<_>>>()?;
        let mut writers = BTreeMap::new();
        let mut readers = Vec::new();
        for (b, listener) in listeners.iter().enumerate() {
            let addr = listener.local_addr()?;
            for a in (0..machines).filter(|&a| a != b) {
                let out = TcpStream::connect(addr)?;
                out.set_nodelay(true)?;
                let (inc, _) = listener.accept()?;
                writers.insert((a, b), Mutex::new(out));
                readers.push(inc);
            }
        }
        Ok((Self { writers }, readers))
    }
}

impl Link for SocketLink {
    fn send(&self, env: Envelope) -> Result<(), TransportError> {
        let key = (env.from.machine(), env.to.machine());
        let stream = self.writers.get(&key).ok_or(TransportError::UnknownAddr(env.to))?;
        let frame = encode(&env);
        let mut stream = stream
            .lock()
            .map_err(|_| TransportError::Io("writer lock poisoned".into()))?;
        stream.write_all(&frame)?;
        Ok(())
    }

    fn close(&self) {
        for w in self.writers.values() {
            if let Ok(s) = w.lock() {
                let _ = s.shutdown(Shutdown::Write);
            }
        }
    }
}

/// Decodes frames from `stream` until the peer closes it, handing each
/// envelope to `deliver`.
pub fn read_frames(
    stream: TcpStream,
    mut deliver: impl FnMut(Envelope) -> Result<(), TransportError>,
) -> Result<(), TransportError> {
    let mut reader = BufReader::new(stream);
    loop {
        let mut head = [0u8; 4];
        match reader.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let total = frame_len(&head).expect("four header bytes");
        let mut frame = vec![0u8; total];
        frame[..4].copy_from_slice(&head);
        reader.read_exact(&mut frame[4..])?;
        let env = decode(&frame).map_err(|e| TransportError::Frame(e.to_string()))?;
        deliver(env)?;
    }
}

/// Routes an envelope: same machine directly, otherwise through the link.
pub struct Router {
    pub mailboxes: Mailboxes,
    pub link: Box<dyn Link>,
}

impl Router {
    pub fn send(&self, env: Envelope) -> Result<(), TransportError> {
        if env.from.machine() == env.to.machine() {
            self.mailboxes.post(env)
        } else {
            self.link.send(env)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Message;
    use spp_core::{BnbNode, CoreAddr};

    #[test]
    fn socket_link_preserves_order_and_content() {
        let (link, readers) = SocketLink::connect(2).unwrap();
        assert_eq!(readers.len(), 2);
        let node = BnbNode {
            active_items: vec![1, 4],
            active_vars: vec![0, 2, 9],
            fixed_one: vec![3],
            fixed_cost: 17,
            pi: vec![0.25, -1.5],
            level: 2,
            lb: 18.5,
        };
        let sent: Vec<Envelope> = (0..50u64)
            .map(|i| Envelope {
                from: Addr::Manager(0),
                to: Addr::Worker(CoreAddr {
                    machine: 1,
                    processor: 0,
                    core: 0,
                }),
                msg: if i % 2 == 0 {
                    Message::NewIncumbent(i)
                } else {
                    Message::Load(vec![node.clone(); i as usize % 4 + 1])
                },
            })
            .collect();
        for env in &sent {
            link.send(env.clone()).unwrap();
        }
        link.close();
        let mut got = Vec::new();
        for r in readers {
            read_frames(r, |env| {
                got.push(env);
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(got, sent);
    }

    #[test]
    fn parses_kind() {
        assert_eq!("socket".parse::<TransportKind>(), Ok(TransportKind::Socket));
        assert!("udp".parse::<TransportKind>().is_err());
    }
}
