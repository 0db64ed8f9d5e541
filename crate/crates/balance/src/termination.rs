//! Leader-side termination detection.
//!
//! Managers send a `LocalTermination` report when every local worker is
//! waiting and the machine holds no nodes, and `Revoke` it when load arrives
//! later. In counter-matching mode the leader acts only when every machine
//! has a live report and the node counts balance; it then asks every
//! manager to confirm that nothing changed since its report, and terminates
//! only if all confirmations match. The naive mode terminates as soon as
//! every manager has reported, which is unsafe with messages in flight.

use crate::message::TransferCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminationMode {
    #[default]
    CounterMatching,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Report {
    counts: TransferCounts,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Wait,
    /// Ask every manager to confirm its report.
    Probe {
        epoch: u64,
    },
    Terminate,
}

#[derive(Debug, Clone)]
pub struct TerminationDetector {
    mode: TerminationMode,
    reports: Vec<Option<Report>>,
    /// Reports with a lower sequence number are known to be withdrawn.
    floor: Vec<u64>,
    /// Nodes the leader itself sent.
    leader_sent: u64,
    epoch: u64,
    wave: Option<Vec<Option<bool>>>,
    decided: bool,
}

impl TerminationDetector {
    pub fn new(mode: TerminationMode, machines: usize) -> Self {
        Self {
            mode,
            reports: vec![None; machines],
            floor: vec![0; machines],
            leader_sent: 0,
            epoch: 0,
            wave: None,
            decided: false,
        }
    }

    pub fn mode(&self) -> TerminationMode {
        self.mode
    }

    pub fn add_leader_sent(&mut self, nodes: u64) {
        self.leader_sent += nodes;
    }

    pub fn is_decided(&self) -> bool {
        self.decided
    }

    fn balanced(&self) -> bool {
        let (mut sent, mut received) = (self.leader_sent, 0u64);
        for r in self.reports.iter().flatten() {
            sent += r.counts.sent;
            received += r.counts.received;
        }
        sent == received
    }

    fn evaluate(&mut self) -> Decision {
        if self.decided || self.reports.iter().any(Option::is_none) {
            return Decision::Wait;
        }
        match self.mode {
            TerminationMode::Naive => {
                self.decided = true;
                Decision::Terminate
            }
            TerminationMode::CounterMatching => {
                if self.wave.is_some() || !self.balanced() {
                    return Decision::Wait;
                }
                self.epoch += 1;
                self.wave = Some(vec![None; self.reports.len()]);
                Decision::Probe { epoch: self.epoch }
            }
        }
    }

    pub fn on_report(&mut self, machine: usize, counts: TransferCounts, seq: u64) -> Decision {
        let stale = seq < self.floor[machine] || matches!(self.reports[machine], Some(r) if r.seq > seq);
        if !stale {
            self.reports[machine] = Some(Report { counts, seq });
        }
        self.evaluate()
    }

    pub fn on_revoke(&mut self, machine: usize, seq: u64) -> Decision {
        self.floor[machine] = self.floor[machine].max(seq + 1);
        if matches!(self.reports[machine], Some(r) if r.seq <= seq) {
            self.reports[machine] = None;
        }
        Decision::Wait
    }

    pub fn on_ack(&mut self, machine: usize, epoch: u64, seq: u64, idle: bool, counts: TransferCounts) -> Decision {
        if self.decided || epoch != self.epoch {
            return Decision::Wait;
        }
        let Some(wave) = self.wave.as_mut() else {
            return Decision::Wait;
        };
        let unchanged = idle && self.reports[machine] == Some(Report { counts, seq });
        wave[machine] = Some(unchanged);
        if !unchanged {
            // whatever was stored is outdated; wait for the next report
            let floor = if idle { seq } else { seq + 1 };
            self.floor[machine] = self.floor[machine].max(floor);
            if matches!(self.reports[machine], Some(r) if r.seq < floor) {
                self.reports[machine] = None;
            }
        }
        if wave.iter().any(Option::is_none) {
            return Decision::Wait;
        }
        let confirmed = wave.iter().all(|a| *a == Some(true));
        self.wave = None;
        if confirmed && self.balanced() {
            self.decided = true;
            Decision::Terminate
        } else {
            self.evaluate()
        }
    }
}
