//! Incumbent bookkeeping: the pruning threshold and the best known
//! partition.
//!
//! The threshold only moves down. A leaf is recorded as the best solution
//! when it does not exceed the threshold and beats the recorded one, so
//! equal-cost leaves found later never replace an earlier solution.

use std::cell::{Cell, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::instance::VarId;

/// Threshold value meaning "no incumbent yet".
pub const NO_INCUMBENT: u64 = u64::MAX;

pub trait Incumbent {
    fn threshold(&self) -> u64;

    /// Offers a feasible leaf. Returns true when the threshold dropped.
    fn offer(&self, cost: u64, vars: &[VarId]) -> bool;
}

/// Single-threaded incumbent.
#[derive(Debug)]
pub struct LocalIncumbent {
    threshold: Cell<u64>,
    best: RefCell<Option<(u64, Vec<VarId>)>>,
}

impl LocalIncumbent {
    pub fn new(cutoff: Option<u64>) -> Self {
        Self {
            threshold: Cell::new(cutoff.unwrap_or(NO_INCUMBENT)),
            best: RefCell::new(None),
        }
    }

    pub fn best(&self) -> Option<(u64, Vec<VarId>)> {
        self.best.borrow().clone()
    }
}

impl Incumbent for LocalIncumbent {
    fn threshold(&self) -> u64 {
        self.threshold.get()
    }

    fn offer(&self, cost: u64, vars: &[VarId]) -> bool {
        let threshold = self.threshold.get();
        if cost > threshold {
            return false;
        }
        let mut best = self.best.borrow_mut();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            *best = Some((cost, vars.to_vec()));
        }
        if cost < threshold {
            self.threshold.set(cost);
            true
        } else {
            false
        }
    }
}

/// Machine-wide incumbent shared by worker threads.
#[derive(Debug)]
pub struct SharedIncumbent {
    threshold: AtomicU64,
    best: Mutex<Option<(u64, Vec<VarId>)>>,
}

impl SharedIncumbent {
    pub fn new(cutoff: Option<u64>) -> Self {
        Self {
            threshold: AtomicU64::new(cutoff.unwrap_or(NO_INCUMBENT)),
            best: Mutex::new(None),
        }
    }

    /// Applies a cost learned from elsewhere. True if it was an improvement.
    pub fn lower_to(&self, cost: u64) -> bool {
        self.threshold.fetch_min(cost, Ordering::AcqRel) > cost
    }

    pub fn best(&self) -> Option<(u64, Vec<VarId>)> {
        self.best.lock().expect("incumbent lock poisoned").clone()
    }
}

impl Incumbent for SharedIncumbent {
    fn threshold(&self) -> u64 {
        self.threshold.load(Ordering::Acquire)
    }

    fn offer(&self, cost: u64, vars: &[VarId]) -> bool {
        if cost > self.threshold() {
            return false;
        }
        {
            let mut best = self.best.lock().expect("incumbent lock poisoned");
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                *best = Some((cost, vars.to_vec()));
            }
        }
        self.lower_to(cost)
    }
}
