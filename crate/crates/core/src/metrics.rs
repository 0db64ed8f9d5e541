//! Evaluation quantities and report rendering.
//!
//! # Report schemas
//!
//! Summary CSV, one row per run, columns in this order:
//! `instance, topology, balancing, threads, status, best_cost, wall_seconds,
//! total_nodes, un_factor, cv, local_req, global_req, local_time_frac,
//! global_time_frac, seq_seconds, speedup, efficiency`.
//! `best_cost`, `seq_seconds`, `speedup` and `efficiency` may be empty.
//! `cv` is empty when every thread was idle.
//!
//! Thread CSV, one row per worker thread:
//! `thread, machine, processor, core, busy_seconds, nodes, created,
//! local_req, global_req, local_balance_seconds, global_balance_seconds,
//! peak_list_bytes, max_node_bytes`.
//!
//! The JSON report is the serde form of [`RunStats`].
//!
//! Balancing time fractions are measured against wall time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcm::CoreAddr;
use crate::search::{NodeCounters, SolveStatus};

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "instance",
    "topology",
    "balancing",
    "threads",
    "status",
    "best_cost",
    "wall_seconds",
    "total_nodes",
    "un_factor",
    "cv",
    "local_req",
    "global_req",
    "local_time_frac",
    "global_time_frac",
    "seq_seconds",
    "speedup",
    "efficiency",
];

pub const THREAD_COLUMNS: [&str; 13] = [
    "thread",
    "machine",
    "processor",
    "core",
    "busy_seconds",
    "nodes",
    "created",
    "local_req",
    "global_req",
    "local_balance_seconds",
    "global_balance_seconds",
    "peak_list_bytes",
    "max_node_bytes",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no thread timings were given")]
    Empty,
    #[error("thread timings must be finite and nonnegative")]
    Negative,
    #[error("mean time is zero")]
    ZeroMean,
    #[error("times must be positive")]
    NonPositive,
    #[error("failed to render report: {0}")]
    Render(String),
}

fn check(times: &[f64]) -> Result<(), MetricsError> {
    if times.is_empty() {
        return Err(MetricsError::Empty);
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(MetricsError::Negative);
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `1 - mean/max` over per-thread busy times; 0 when all are zero.
pub fn unbalance_factor(times: &[f64]) -> Result<f64, MetricsError> {
    check(times)?;
    let max = times.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - mean(times) / max)
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(times: &[f64]) -> Result<f64, MetricsError> {
    check(times)?;
    let mu = mean(times);
    if mu == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    let var = times.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / times.len() as f64;
    Ok(var.sqrt() / mu)
}

/// Returns `(speedup, efficiency)`.
pub fn speedup_efficiency(seq_time: f64, par_time: f64, total_cores: usize) -> Result<(f64, f64), MetricsError> {
    if !(seq_time > 0.0 && par_time > 0.0) || total_cores == 0 {
        return Err(MetricsError::NonPositive);
    }
    let speedup = seq_time / par_time;
    Ok((speedup, speedup / total_cores as f64))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub stddev: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let m = mean(xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        Some(Self {
            mean: m,
            stddev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadStats {
    pub addr: CoreAddr,
    /// Time spent processing nodes, excluding waits for messages.
    pub busy_seconds: f64,
    pub counters: NodeCounters,
    /// Requests sent to same-machine workers.
    pub local_req: u64,
    /// Requests escalated to the machine's manager.
    pub global_req: u64,
    pub local_balance_seconds: f64,
    pub global_balance_seconds: f64,
    pub peak_list_bytes: usize,
    pub max_node_bytes: usize,
}

impl ThreadStats {
    pub fn new(addr: CoreAddr) -> Self {
        Self {
            addr,
            busy_seconds: 0.0,
            counters: NodeCounters::default(),
            local_req: 0,
            global_req: 0,
            local_balance_seconds: 0.0,
            global_balance_seconds: 0.0,
            peak_list_bytes: 0,
            max_node_bytes: 0,
        }
    }

    /// Nodes whose processing finished on this thread.
    pub fn nodes(&self) -> u64 {
        self.counters.consumed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub instance: String,
    pub topology: String,
    pub balancing: bool,
    pub status: SolveStatus,
    pub best_cost: Option<u64>,
    pub wall_seconds: f64,
    /// Worker threads in address order.
    pub threads: Vec<ThreadStats>,
    /// Work done outside the workers (the root, on the leader).
    pub leader: NodeCounters,
    pub seq_seconds: Option<f64>,
}

impl RunStats {
    pub fn busy_times(&self) -> Vec<f64> {
        self.threads.iter().map(|t| t.busy_seconds).collect()
    }

    pub fn totals(&self) -> NodeCounters {
        let mut total = self.leader;
        for t in &self.threads {
            total.merge(&t.counters);
        }
        total
    }

    pub fn total_nodes(&self) -> u64 {
        self.totals().consumed()
    }

    pub fn local_req(&self) -> u64 {
        self.threads.iter().map(|t| t.local_req).sum()
    }

    pub fn global_req(&self) -> u64 {
        self.threads.iter().map(|t| t.global_req).sum()
    }

    pub fn un_factor(&self) -> f64 {
        unbalance_factor(&self.busy_times()).unwrap_or(0.0)
    }

    pub fn cv(&self) -> Option<f64> {
        coefficient_of_variation(&self.busy_times()).ok()
    }

    fn time_frac(&self, f: impl Fn(&ThreadStats) -> f64) -> f64 {
        if self.threads.is_empty() || self.wall_seconds <= 0.0 {
            return 0.0;
        }
        self.threads.iter().map(f).sum::<f64>() / (self.threads.len() as f64 * self.wall_seconds)
    }

    pub fn local_time_frac(&self) -> f64 {
        self.time_frac(|t| t.local_balance_seconds)
    }

    pub fn global_time_frac(&self) -> f64 {
        self.time_frac(|t| t.global_balance_seconds)
    }

    pub fn speedup_efficiency(&self) -> Option<(f64, f64)> {
        speedup_efficiency(self.seq_seconds?, self.wall_seconds, self.threads.len()).ok()
    }

    pub fn summary_row(&self) -> SummaryRow {
        let se = self.speedup_efficiency();
        SummaryRow {
            instance: self.instance.clone(),
            topology: self.topology.clone(),
            balancing: self.balancing,
            threads: self.threads.len(),
            status: self.status,
            best_cost: self.best_cost,
            wall_seconds: self.wall_seconds,
            total_nodes: self.total_nodes(),
            un_factor: self.un_factor(),
            cv: self.cv(),
            local_req: self.local_req(),
            global_req: self.global_req(),
            local_time_frac: self.local_time_frac(),
            global_time_frac: self.global_time_frac(),
            seq_seconds: self.seq_seconds,
            speedup: se.map(|s| s.0),
            efficiency: se.map(|s| s.1),
        }
    }

    pub fn thread_rows(&self) -> Vec<ThreadRow> {
        self.threads
            .iter()
            .enumerate()
            .map(|(i, t)| ThreadRow {
                thread: i,
                machine: t.addr.machine,
                processor: t.addr.processor,
                core: t.addr.core,
                busy_seconds: t.busy_seconds,
                nodes: t.nodes(),
                created: t.counters.created,
                local_req: t.local_req,
                global_req: t.global_req,
                local_balance_seconds: t.local_balance_seconds,
                global_balance_seconds: t.global_balance_seconds,
                peak_list_bytes: t.peak_list_bytes,
                max_node_bytes: t.max_node_bytes,
            })
            .collect()
    }

    /// Conservation across the run: every created node was consumed.
    pub fn is_conserved(&self) -> bool {
        let t = self.totals();
        t.created == t.consumed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub topology: String,
    pub balancing: bool,
    pub threads: usize,
    pub status: SolveStatus,
    pub best_cost: Option<u64>,
    pub wall_seconds: f64,
    pub total_nodes: u64,
    pub un_factor: f64,
    pub cv: Option<f64>,
    pub local_req: u64,
    pub global_req: u64,
    pub local_time_frac: f64,
    pub global_time_frac: f64,
    pub seq_seconds: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadRow {
    pub thread: usize,
    pub machine: usize,
    pub processor: usize,
    pub core: usize,
    pub busy_seconds: f64,
    pub nodes: u64,
    pub created: u64,
    pub local_req: u64,
    pub global_req: u64,
    pub local_balance_seconds: f64,
    pub global_balance_seconds: f64,
    pub peak_list_bytes: usize,
    pub max_node_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Renders rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| MetricsError::Render(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Render(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| MetricsError::Render(e.to_string()))
}

/// Renders one run: the summary row for CSV, the full stats for JSON.
pub fn report(stats: &RunStats, format: ReportFormat) -> Result<String, MetricsError> {
    match format {
        ReportFormat::Csv => to_csv(&[stats.summary_row()]),
        ReportFormat::Json => serde_json::to_string_pretty(stats).map_err(|e| MetricsError::Render(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn unbalance_examples() {
        assert_eq!(unbalance_factor(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!(close(unbalance_factor(&[1.0, 1.0, 1.0, 5.0]).unwrap(), 0.6));
        assert_eq!(unbalance_factor(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(unbalance_factor(&[]), Err(MetricsError::Empty));
        assert_eq!(unbalance_factor(&[1.0, -1.0]), Err(MetricsError::Negative));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[2.0, 2.0]).unwrap(), 0.0);
        assert!(close(coefficient_of_variation(&[2.0, 4.0]).unwrap(), 1.0 / 3.0));
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]), Err(MetricsError::ZeroMean));
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup_efficiency(5.0, 5.0, 1).unwrap(), (1.0, 1.0));
        assert_eq!(speedup_efficiency(10.0, 2.5, 16).unwrap(), (4.0, 0.25));
        assert!(speedup_efficiency(0.0, 1.0, 1).is_err());
    }

    fn sample() -> RunStats {
        let mut threads: Vec<ThreadStats> = (0..2)
            .map(|k| {
                ThreadStats::new(CoreAddr {
                    machine: 0,
                    processor: 0,
                    core: k,
                })
            })
            .collect();
        threads[0].busy_seconds = 2.0;
        threads[0].counters = NodeCounters {
            created: 4,
            expanded: 2,
            pruned_bound: 1,
            pruned_deadend: 0,
            feasible: 1,
        };
        threads[0].local_req = 1;
        threads[1].busy_seconds = 4.0;
        threads[1].counters = NodeCounters {
            created: 0,
            expanded: 0,
            pruned_bound: 3,
            pruned_deadend: 0,
            feasible: 0,
        };
        threads[1].global_req = 2;
        threads[1].global_balance_seconds = 0.5;
        RunStats {
            instance: "I4-6-0.5-1".into(),
            topology: "1x1x2".into(),
            balancing: true,
            status: SolveStatus::Optimal,
            best_cost: Some(17),
            wall_seconds: 5.0,
            threads,
            leader: NodeCounters {
                created: 4,
                expanded: 1,
                ..NodeCounters::default()
            },
            seq_seconds: Some(8.0),
        }
    }

    #[test]
    fn csv_header_matches_schema() {
        let text = report(&sample(), ReportFormat::Csv).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, SUMMARY_COLUMNS.join(","));
        let threads = to_csv(&sample().thread_rows()).unwrap();
        assert_eq!(threads.lines().next().unwrap(), THREAD_COLUMNS.join(","));
        assert_eq!(threads.lines().count(), 3);
    }

    #[test]
    fn json_round_trips() {
        let stats = sample();
        let text = report(&stats, ReportFormat::Json).unwrap();
        let back: RunStats = serde_json::from_str(&text).unwrap();
        assert_eq!(back, stats);
    }

    #[test]
    fn totals_are_consistent() {
        let s = sample();
        let per_thread: u64 = s.thread_rows().iter().map(|r| r.nodes).sum();
        assert_eq!(per_thread + s.leader.consumed(), s.total_nodes());
        assert!(s.is_conserved());
        let row = s.summary_row();
        assert!(close(row.un_factor, 0.25));
        assert_eq!(row.local_req, 1);
        assert_eq!(row.global_req, 2);
        assert!(close(row.global_time_frac, 0.05));
        assert_eq!(row.speedup, Some(1.6));
    }

    proptest! {
        #[test]
        fn unbalance_in_unit_range(times in proptest::collection::vec(0.0f64..100.0, 1..16)) {
            let u = unbalance_factor(&times).unwrap();
            prop_assert!((0.0..1.0).contains(&u) || u == 0.0);
            let all_equal = times.iter().all(|t| *t == times[0]);
            if all_equal {
                prop_assert_eq!(u, 0.0);
            }
        }

        #[test]
        fn cv_scale_invariant(times in proptest::collection::vec(0.1f64..100.0, 1..16), k in 0.1f64..50.0) {
            let a = coefficient_of_variation(&times).unwrap();
            let scaled: Vec<f64> = times.iter().map(|t| t * k).collect();
            let b = coefficient_of_variation(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn efficiency_not_above_speedup(seq in 0.01f64..100.0, par in 0.01f64..100.0, cores in 1usize..64) {
            let (s, e) = speedup_efficiency(seq, par, cores).unwrap();
            prop_assert!(e <= s);
        }
    }
}
