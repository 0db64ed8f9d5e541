//! Node processing, memory-budgeted node lists and the sequential solver.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{dual_bound, DualView};
use crate::incumbent::{Incumbent, LocalIncumbent, NO_INCUMBENT};
use crate::instance::{SppInstance, VarId};
use crate::node::{expand, select_branch_item, BnbNode};

/// Slack subtracted before rounding a bound up to the next integer cost.
pub const PRUNE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traversal {
    /// FIFO list, bounded by a byte budget with depth-first overflow.
    #[default]
    Breadth,
    /// LIFO list: plain depth-first search.
    Depth,
}

impl std::str::FromStr for Traversal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "breadth" => Ok(Traversal::Breadth),
            "depth" => Ok(Traversal::Depth),
            other => Err(format!("unknown traversal `{other}` (breadth|depth)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounters {
    /// Nodes brought into existence here (children, plus the root for
    /// whoever processes it).
    pub created: u64,
    pub expanded: u64,
    pub pruned_bound: u64,
    pub pruned_deadend: u64,
    pub feasible: u64,
}

impl NodeCounters {
    /// Nodes whose processing finished here.
    pub fn consumed(&self) -> u64 {
        self.expanded + self.pruned_bound + self.pruned_deadend + self.feasible
    }

    pub fn merge(&mut self, other: &NodeCounters) {
        self.created += other.created;
        self.expanded += other.expanded;
        self.pruned_bound += other.pruned_bound;
        self.pruned_deadend += other.pruned_deadend;
        self.feasible += other.feasible;
    }
}

/// Called on each node right after its bound is computed.
pub trait NodeObserver {
    fn bounded(&mut self, node: &BnbNode);
}

/// Observer that ignores everything.
pub struct Quiet;

impl NodeObserver for Quiet {
    fn bounded(&mut self, _node: &BnbNode) {}
}

impl<F: FnMut(&BnbNode)> NodeObserver for F {
    fn bounded(&mut self, node: &BnbNode) {
        self(node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    Feasible { cost: u64 },
    DeadEnd,
    PrunedByBound { lb: f64 },
    Expanded(Vec<BnbNode>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub outcome: NodeOutcome,
    /// Deterministic effort estimate (coefficient visits).
    pub work: u64,
}

/// True when `lb` proves the node cannot beat `threshold`.
pub fn bound_prunes(lb: f64, threshold: u64) -> bool {
    threshold != NO_INCUMBENT && (lb - PRUNE_TOL).ceil() >= threshold as f64
}

/// Handles one node: leaf check, dead-end check, dual bound, pruning and
/// branching. Updates `counters`; children are counted as created.
pub fn process_node(
    inst: &SppInstance,
    mut node: BnbNode,
    incumbent: &impl Incumbent,
    counters: &mut NodeCounters,
    observer: &mut impl NodeObserver,
) -> Processed {
    if node.active_items.is_empty() {
        incumbent.offer(node.fixed_cost, &node.fixed_one);
        counters.feasible += 1;
        return Processed {
            outcome: NodeOutcome::Feasible { cost: node.fixed_cost },
            work: 1 + node.fixed_one.len() as u64,
        };
    }
    let scan = (node.active_items.len() + node.active_vars.len()) as u64;
    let item = match select_branch_item(&node, inst) {
        Ok(item) => item,
        Err(_) => {
            counters.pruned_deadend += 1;
            return Processed {
                outcome: NodeOutcome::DeadEnd,
                work: scan,
            };
        }
    };
    let view = DualView::from_active(inst, &node.active_items, &node.active_vars);
    let pi = std::mem::take(&mut node.pi);
    let bound = dual_bound(&view, pi, node.fixed_cost as f64, node.is_root());
    node.pi = bound.pi;
    node.lb = bound.lb_total;
    observer.bounded(&node);
    let work = scan + bound.work;
    if bound_prunes(node.lb, incumbent.threshold()) {
        counters.pruned_bound += 1;
        return Processed {
            outcome: NodeOutcome::PrunedByBound { lb: node.lb },
            work,
        };
    }
    let children = expand(&node, inst, item);
    counters.expanded += 1;
    counters.created += children.len() as u64;
    let work = work + children.iter().map(|c| c.size_bytes() as u64 / 8).sum::<u64>();
    Processed {
        outcome: NodeOutcome::Expanded(children),
        work,
    }
}

/// A worker's local node list with a running byte total. The back holds the
/// newest nodes and the front the oldest; breadth mode consumes from the
/// front, depth mode from the back.
#[derive(Debug, Clone, Default)]
pub struct NodeList {
    nodes: VecDeque<BnbNode>,
    bytes: usize,
    traversal: Traversal,
}

impl NodeList {
    pub fn new(traversal: Traversal) -> Self {
        Self {
            nodes: VecDeque::new(),
            bytes: 0,
            traversal,
        }
    }

    pub fn traversal(&self) -> Traversal {
        self.traversal
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    /// Adds nodes given in the order they should be explored.
    pub fn push_batch(&mut self, batch: Vec<BnbNode>) {
        self.bytes += batch.iter().map(BnbNode::size_bytes).sum::<usize>();
        match self.traversal {
            Traversal::Breadth => self.nodes.extend(batch),
            Traversal::Depth => self.nodes.extend(batch.into_iter().rev()),
        }
    }

    pub fn pop_next(&mut self) -> Option<BnbNode> {
        let node = match self.traversal {
            Traversal::Breadth => self.nodes.pop_front(),
            Traversal::Depth => self.nodes.pop_back(),
        }?;
        self.bytes -= node.size_bytes();
        Some(node)
    }

    pub fn pop_newest(&mut self) -> Option<BnbNode> {
        let node = self.nodes.pop_back()?;
        self.bytes -= node.size_bytes();
        Some(node)
    }

    /// How many of the oldest nodes fit, cumulatively, in `budget` bytes.
    pub fn oldest_fitting(&self, budget: usize) -> usize {
        let mut total = 0usize;
        self.nodes
            .iter()
            .take_while(|n| {
                total += n.size_bytes();
                total <= budget
            })
            .count()
    }

    /// Removes the `k` oldest nodes, returned in exploration order.
    pub fn take_oldest(&mut self, k: usize) -> Vec<BnbNode> {
        let k = k.min(self.nodes.len());
        let mut taken: Vec<BnbNode> = self.nodes.drain(..k).collect();
        self.bytes -= taken.iter().map(BnbNode::size_bytes).sum::<usize>();
        if self.traversal == Traversal::Depth {
            taken.reverse();
        }
        taken
    }

    pub fn iter(&self) -> impl Iterator<Item = &BnbNode> {
        self.nodes.iter()
    }
}

/// A node list plus the private depth-first stack used once the list
/// outgrows its byte budget. Nodes on the stack are never shared with other
/// workers; they form the recursion of the overflow procedure.
#[derive(Debug, Clone)]
pub struct Explorer {
    list: NodeList,
    dfs: Vec<BnbNode>,
    budget: Option<usize>,
    peak_list_bytes: usize,
    max_node_bytes: usize,
}

impl Explorer {
    pub fn new(traversal: Traversal, budget: Option<usize>) -> Self {
        Self {
            list: NodeList::new(traversal),
            dfs: Vec::new(),
            budget,
            peak_list_bytes: 0,
            max_node_bytes: 0,
        }
    }

    pub fn list(&self) -> &NodeList {
        &self.list
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn has_work(&self) -> bool {
        !self.dfs.is_empty() || !self.list.is_empty()
    }

    /// Nodes held locally (list and overflow stack).
    pub fn pending(&self) -> usize {
        self.dfs.len() + self.list.len()
    }

    pub fn peak_list_bytes(&self) -> usize {
        self.peak_list_bytes
    }

    pub fn max_node_bytes(&self) -> usize {
        self.max_node_bytes
    }

    /// Accepts nodes (in exploration order) into the list.
    pub fn receive(&mut self, nodes: Vec<BnbNode>) {
        self.note_sizes(&nodes);
        self.list.push_batch(nodes);
        self.enforce_budget();
    }

    /// Hands out the `k` oldest list nodes.
    pub fn give(&mut self, k: usize) -> Vec<BnbNode> {
        self.list.take_oldest(k)
    }

    /// Number of oldest list nodes fitting in `budget` bytes.
    pub fn fitting(&self, budget: usize) -> usize {
        self.list.oldest_fitting(budget)
    }

    pub fn list_len(&self) -> usize {
        self.list.len()
    }

    fn note_sizes(&mut self, nodes: &[BnbNode]) {
        if let Some(m) = nodes.iter().map(BnbNode::size_bytes).max() {
            self.max_node_bytes = self.max_node_bytes.max(m);
        }
    }

    /// In breadth mode, moves the newest list nodes onto the depth-first
    /// stack until the list fits its budget again.
    pub fn enforce_budget(&mut self) {
        if let (Traversal::Breadth, Some(budget)) = (self.list.traversal(), self.budget) {
            let mut overflow = Vec::new();
            while self.list.bytes() > budget {
                match self.list.pop_newest() {
                    Some(node) => overflow.push(node),
                    None => break,
                }
            }
            // The newest node is solved first.
            self.dfs.extend(overflow.into_iter().rev());
        }
        self.peak_list_bytes = self.peak_list_bytes.max(self.list.bytes());
    }

    /// Processes one node; `None` when there is nothing to do.
    pub fn step(
        &mut self,
        inst: &SppInstance,
        incumbent: &impl Incumbent,
        counters: &mut NodeCounters,
        observer: &mut impl NodeObserver,
    ) -> Option<u64> {
        let (node, from_stack) = match self.dfs.pop() {
            Some(node) => (node, true),
            None => (self.list.pop_next()?, false),
        };
        let processed = process_node(inst, node, incumbent, counters, observer);
        if let NodeOutcome::Expanded(children) = processed.outcome {
            self.note_sizes(&children);
            if from_stack {
                self.dfs.extend(children.into_iter().rev());
            } else {
                self.list.push_batch(children);
                self.enforce_budget();
            }
        }
        Some(processed.work)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolverConfig {
    pub traversal: Traversal,
    /// List byte budget (breadth mode only).
    pub budget_bytes: Option<usize>,
    /// Initial pruning threshold; only solutions of cost at most this value
    /// are sought.
    pub cutoff: Option<u64>,
    pub node_limit: Option<u64>,
}

impl SolverConfig {
    /// Plain depth-first search without budget: the reference baseline.
    pub fn depth_first() -> Self {
        Self {
            traversal: Traversal::Depth,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// A cutoff was given and no solution at or below it was reached.
    NoSolutionWithinCutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub best_cost: Option<u64>,
    pub chosen_vars: Vec<VarId>,
    pub counters: NodeCounters,
}

impl Solution {
    pub fn from_best(best: Option<(u64, Vec<VarId>)>, cutoff: Option<u64>, counters: NodeCounters) -> Self {
        match best {
            Some((cost, mut vars)) => {
                vars.sort_unstable();
                Self {
                    status: SolveStatus::Optimal,
                    best_cost: Some(cost),
                    chosen_vars: vars,
                    counters,
                }
            }
            None => Self {
                status: if cutoff.is_some() {
                    SolveStatus::NoSolutionWithinCutoff
                } else {
                    SolveStatus::Infeasible
                },
                best_cost: None,
                chosen_vars: Vec::new(),
                counters,
            },
        }
    }

    /// Checks that an optimal solution is a partition with the stated cost.
    pub fn verify(&self, inst: &SppInstance) -> Result<(), String> {
        if self.status != SolveStatus::Optimal {
            return Ok(());
        }
        if !inst.is_partition(&self.chosen_vars) {
            return Err("chosen variables do not partition the items".into());
        }
        if Some(inst.cost_of(&self.chosen_vars)) != self.best_cost {
            return Err("chosen variables do not add up to the best cost".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("node limit of {0} reached before the search finished")]
    NodeLimit(u64),
}

pub fn solve_sequential(inst: &SppInstance, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    solve_sequential_observed(inst, cfg, &mut Quiet)
}

pub fn solve_sequential_observed(
    inst: &SppInstance,
    cfg: &SolverConfig,
    observer: &mut impl NodeObserver,
) -> Result<Solution, SolveError> {
    let incumbent = LocalIncumbent::new(cfg.cutoff);
    let mut counters = NodeCounters {
        created: 1,
        ..NodeCounters::default()
    };
    let mut explorer = Explorer::new(cfg.traversal, cfg.budget_bytes);
    explorer.receive(vec![BnbNode::root(inst)]);
    while explorer.step(inst, &incumbent, &mut counters, observer).is_some() {
        if let Some(limit) = cfg.node_limit {
            if counters.consumed() >= limit && explorer.has_work() {
                return Err(SolveError::NodeLimit(limit));
            }
        }
    }
    Ok(Solution::from_best(incumbent.best(), cfg.cutoff, counters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate, GeneratorParams};

    fn tiny() -> SppInstance {
        SppInstance::new("tiny", 2, vec![4, 1, 3], vec![vec![0, 1], vec![0], vec![1]]).unwrap()
    }

    fn brute_force(inst: &SppInstance) -> Option<u64> {
        let n = inst.n_vars();
        (0u32..1 << n)
            .filter_map(|mask| {
                let vars: Vec<VarId> = (0..n as VarId).filter(|v| mask >> v & 1 == 1).collect();
                inst.is_partition(&vars).then(|| inst.cost_of(&vars))
            })
            .min()
    }

    #[test]
    fn example_optimum_keeps_first_found() {
        let sol = solve_sequential(&tiny(), &SolverConfig::depth_first()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.best_cost, Some(4));
        // {v1} closes the root's first child and is found first
        assert_eq!(sol.chosen_vars, vec![0]);
        sol.verify(&tiny()).unwrap();
    }

    #[test]
    fn uncovered_item_is_infeasible() {
        let inst = SppInstance::new("gap", 3, vec![1, 2], vec![vec![0], vec![1]]).unwrap();
        let sol = solve_sequential(&inst, &SolverConfig::depth_first()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert_eq!(sol.counters.pruned_deadend, 1);
    }

    #[test]
    fn matches_enumeration_and_conserves_nodes() {
        for seed in 0..60u64 {
            for (p, cover) in [(0.3, true), (0.5, false)] {
                let mut params = GeneratorParams::new(7, 12, p, seed);
                params.ensure_coverage = cover;
                let inst = generate(&params).unwrap();
                let expected = brute_force(&inst);
                for cfg in [
                    SolverConfig::depth_first(),
                    SolverConfig {
                        traversal: Traversal::Breadth,
                        budget_bytes: Some(600),
                        ..SolverConfig::default()
                    },
                ] {
                    let sol = solve_sequential(&inst, &cfg).unwrap();
                    assert_eq!(sol.best_cost, expected, "seed {seed} p {p} {cfg:?}");
                    sol.verify(&inst).unwrap();
                    assert_eq!(sol.counters.created, sol.counters.consumed());
                }
            }
        }
    }

    #[test]
    fn zero_budget_is_depth_first() {
        let inst = generate(&GeneratorParams::new(12, 30, 0.25, 5)).unwrap();
        let dfs = solve_sequential(&inst, &SolverConfig::depth_first()).unwrap();
        let zero = solve_sequential(
            &inst,
            &SolverConfig {
                traversal: Traversal::Breadth,
                budget_bytes: Some(0),
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert_eq!(dfs.best_cost, zero.best_cost);
        assert_eq!(dfs.counters, zero.counters);
    }

    #[test]
    fn budget_bounds_list_bytes() {
        let inst = generate(&GeneratorParams::new(14, 40, 0.2, 11)).unwrap();
        for budget in [0usize, 500, 2_000, 20_000] {
            let mut ex = Explorer::new(Traversal::Breadth, Some(budget));
            let inc = LocalIncumbent::new(None);
            let mut counters = NodeCounters::default();
            ex.receive(vec![BnbNode::root(&inst)]);
            while ex.step(&inst, &inc, &mut counters, &mut Quiet).is_some() {
                assert!(ex.list().bytes() <= budget);
            }
            assert!(ex.peak_list_bytes() <= budget + ex.max_node_bytes());
        }
    }

    #[test]
    fn node_limit_is_an_error_not_an_answer() {
        let inst = generate(&GeneratorParams::new(14, 40, 0.2, 3)).unwrap();
        let cfg = SolverConfig {
            node_limit: Some(3),
            ..SolverConfig::depth_first()
        };
        assert_eq!(solve_sequential(&inst, &cfg), Err(SolveError::NodeLimit(3)));
    }

    #[test]
    fn cutoff_at_optimum_reports_status() {
        let inst = generate(&GeneratorParams::new(9, 20, 0.3, 2)).unwrap();
        let opt = solve_sequential(&inst, &SolverConfig::depth_first())
            .unwrap()
            .best_cost
            .unwrap();
        let below = solve_sequential(
            &inst,
            &SolverConfig {
                cutoff: Some(opt - 1),
                ..SolverConfig::depth_first()
            },
        )
        .unwrap();
        assert_eq!(below.status, SolveStatus::NoSolutionWithinCutoff);
        let above = solve_sequential(
            &inst,
            &SolverConfig {
                cutoff: Some(opt + 1),
                ..SolverConfig::depth_first()
            },
        )
        .unwrap();
        assert_eq!(above.best_cost, Some(opt));
    }

    #[test]
    fn list_orders() {
        let inst = tiny();
        let root = BnbNode::root(&inst);
        let mk = |level: u32| BnbNode { level, ..root.clone() };
        let mut fifo = NodeList::new(Traversal::Breadth);
        fifo.push_batch(vec![mk(1), mk(2), mk(3)]);
        assert_eq!(fifo.pop_next().unwrap().level, 1);
        assert_eq!(fifo.pop_newest().unwrap().level, 3);
        let mut lifo = NodeList::new(Traversal::Depth);
        lifo.push_batch(vec![mk(1), mk(2), mk(3)]);
        assert_eq!(lifo.pop_next().unwrap().level, 1);
        lifo.push_batch(vec![mk(4), mk(5)]);
        // oldest are 3 then 2; exploration order puts 2 first
        let taken: Vec<u32> = lifo.take_oldest(2).iter().map(|n| n.level).collect();
        assert_eq!(taken, vec![2, 3]);
        assert_eq!(lifo.bytes(), 2 * root.size_bytes());
    }
}
