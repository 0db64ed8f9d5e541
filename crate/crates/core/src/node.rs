//! Branch-and-bound subproblems and the branching rule.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::instance::{ItemId, SppInstance, VarId};

/// Fixed per-node overhead in the byte accounting.
pub const NODE_BASE_BYTES: usize = 64;
const WORD: usize = 8;

/// A subproblem: the items still to cover, the variables still allowed,
/// the variables fixed to one so far and the inherited duals (aligned with
/// `active_items`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbNode {
    pub active_items: Vec<ItemId>,
    pub active_vars: Vec<VarId>,
    pub fixed_one: Vec<VarId>,
    pub fixed_cost: u64,
    pub pi: Vec<f64>,
    pub level: u32,
    /// Last computed lower bound (fixed cost included); inherited from the
    /// parent until the node is bounded itself.
    pub lb: f64,
}

impl BnbNode {
    pub fn root(inst: &SppInstance) -> Self {
        Self {
            active_items: (0..inst.m_items as ItemId).collect(),
            active_vars: (0..inst.n_vars() as VarId).collect(),
            fixed_one: Vec::new(),
            fixed_cost: 0,
            pi: vec![0.0; inst.m_items],
            level: 0,
            lb: 0.0,
        }
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    /// `64 + 8·(|items| + |vars| + |π| + |fixed|)`.
    pub fn size_bytes(&self) -> usize {
        NODE_BASE_BYTES
            + WORD * (self.active_items.len() + self.active_vars.len() + self.pi.len() + self.fixed_one.len())
    }

    fn pi_of(&self, item: ItemId) -> f64 {
        self.active_items
            .binary_search(&item)
            .map(|pos| self.pi[pos])
            .unwrap_or(0.0)
    }

    /// Active variables covering `item`, ascending.
    pub fn covering_vars<'a>(&'a self, inst: &'a SppInstance, item: ItemId) -> impl Iterator<Item = VarId> + 'a {
        inst.rows[item as usize]
            .iter()
            .copied()
            .filter(|v| self.active_vars.binary_search(v).is_ok())
    }

    /// Number of active items a variable leaves uncovered (`δ_i`).
    pub fn uncovered_by(&self, inst: &SppInstance, var: VarId) -> usize {
        self.active_items.len() - inst.columns[var as usize].len()
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn check_invariants(&self, inst: &SppInstance) -> Result<(), String> {
        if !is_strictly_ascending(&self.active_items) || !is_strictly_ascending(&self.active_vars) {
            return Err("active sets not strictly ascending".into());
        }
        if self.pi.len() != self.active_items.len() {
            return Err("pi not aligned with active items".into());
        }
        if self.level as usize != self.fixed_one.len() {
            return Err("level differs from number of fixed variables".into());
        }
        let mut owner = vec![None; inst.m_items];
        for &v in &self.fixed_one {
            for &item in &inst.columns[v as usize] {
                if let Some(other) = owner[item as usize].replace(v) {
                    return Err(format!("fixed variables {other} and {v} overlap on item {item}"));
                }
            }
        }
        if inst.cost_of(&self.fixed_one) != self.fixed_cost {
            return Err("fixed cost differs from the sum of fixed variables".into());
        }
        for (item, o) in owner.iter().enumerate() {
            let active = self.active_items.binary_search(&(item as ItemId)).is_ok();
            if active == o.is_some() {
                return Err(format!("item {item} is both/neither active and fixed"));
            }
        }
        for &v in &self.active_vars {
            let col = &inst.columns[v as usize];
            if col.iter().any(|&it| owner[it as usize].is_some()) {
                return Err(format!("active variable {v} covers a fixed item"));
            }
        }
        Ok(())
    }
}

fn is_strictly_ascending(ids: &[u32]) -> bool {
    ids.windows(2).all(|w| w[0] < w[1])
}

/// The node has an active item no active variable can cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadEnd {
    pub item: ItemId,
}

/// Per active item: (covering count, Σ δ_i over covering variables).
fn branch_scores(node: &BnbNode, inst: &SppInstance) -> Vec<(usize, usize)> {
    let mut scores = vec![(0usize, 0usize); node.active_items.len()];
    for &v in &node.active_vars {
        let delta = node.uncovered_by(inst, v);
        for item in &inst.columns[v as usize] {
            let pos = node
                .active_items
                .binary_search(item)
                .expect("active variable covers an inactive item");
            scores[pos].0 += 1;
            scores[pos].1 += delta;
        }
    }
    scores
}

/// Picks the item whose children would keep the fewest constraints in
/// total, ties to the smallest id.
pub fn select_branch_item(node: &BnbNode, inst: &SppInstance) -> Result<ItemId, DeadEnd> {
    let scores = branch_scores(node, inst);
    if let Some(pos) = scores.iter().position(|&(count, _)| count == 0) {
        return Err(DeadEnd {
            item: node.active_items[pos],
        });
    }
    let (pos, _) = scores
        .iter()
        .enumerate()
        .min_by_key(|&(pos, &(_, score))| (score, pos))
        .expect("select_branch_item on a node without active items");
    Ok(node.active_items[pos])
}

/// Child ordering key: reduced cost per remaining constraint. Children that
/// close the node (`δ = 0`) come first.
fn child_ratio(node: &BnbNode, inst: &SppInstance, var: VarId) -> f64 {
    let delta = node.uncovered_by(inst, var);
    if delta == 0 {
        return f64::NEG_INFINITY;
    }
    let reduced: f64 =
        inst.costs[var as usize] as f64 - inst.columns[var as usize].iter().map(|&it| node.pi_of(it)).sum::<f64>();
    reduced / delta as f64
}

/// Variables covering `item`, in the order their children are explored.
pub fn child_order(node: &BnbNode, inst: &SppInstance, item: ItemId) -> Vec<VarId> {
    let mut keyed: Vec<(f64, VarId)> = node
        .covering_vars(inst, item)
        .map(|v| (child_ratio(node, inst, v), v))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, v)| v).collect()
}

/// The child where `var` is fixed to one.
pub fn fix_to_one(node: &BnbNode, inst: &SppInstance, var: VarId) -> BnbNode {
    let col = &inst.columns[var as usize];
    let mut keep = Vec::with_capacity(node.active_items.len());
    let mut pi = Vec::with_capacity(node.active_items.len());
    for (&item, &p) in node.active_items.iter().zip(&node.pi) {
        if col.binary_search(&item).is_err() {
            keep.push(item);
            pi.push(p);
        }
    }
    let active_vars = node
        .active_vars
        .iter()
        .copied()
        .filter(|&v| !overlaps(&inst.columns[v as usize], col))
        .collect();
    let mut fixed_one = node.fixed_one.clone();
    fixed_one.push(var);
    BnbNode {
        active_items: keep,
        active_vars,
        fixed_one,
        fixed_cost: node.fixed_cost + inst.costs[var as usize],
        pi,
        level: node.level + 1,
        lb: node.lb,
    }
}

fn overlaps(a: &[ItemId], b: &[ItemId]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return true,
        }
    }
    false
}

/// One child per active variable covering `item`, in exploration order.
pub fn expand(node: &BnbNode, inst: &SppInstance, item: ItemId) -> Vec<BnbNode> {
    child_order(node, inst, item)
        .into_iter()
        .map(|v| fix_to_one(node, inst, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate, GeneratorParams};
    use proptest::prelude::*;

    fn tiny() -> SppInstance {
        SppInstance::new("tiny", 2, vec![4, 1, 3], vec![vec![0, 1], vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn size_accounting() {
        let empty = BnbNode {
            active_items: vec![],
            active_vars: vec![],
            fixed_one: vec![],
            fixed_cost: 0,
            pi: vec![],
            level: 0,
            lb: 0.0,
        };
        assert_eq!(empty.size_bytes(), 64);
        let root = BnbNode::root(&tiny());
        assert_eq!(root.size_bytes(), 64 + 16 + 24 + 16);
    }

    #[test]
    fn single_item_is_selected() {
        let inst = tiny();
        let mut node = BnbNode::root(&inst);
        node = fix_to_one(&node, &inst, 1);
        assert_eq!(node.active_items, vec![1]);
        assert_eq!(select_branch_item(&node, &inst), Ok(1));
    }

    #[test]
    fn tie_breaks_to_smallest_item() {
        let inst = tiny();
        let root = BnbNode::root(&inst);
        // δ = (0, 1, 1): item 0 scores δ1+δ2 = 1, item 1 scores δ1+δ3 = 1
        assert_eq!(branch_scores(&root, &inst), vec![(2, 1), (2, 1)]);
        assert_eq!(select_branch_item(&root, &inst), Ok(0));
    }

    #[test]
    fn dead_end_detected() {
        let inst = SppInstance::new("d", 3, vec![1, 1], vec![vec![0, 1], vec![1, 2]]).unwrap();
        let root = BnbNode::root(&inst);
        let child = fix_to_one(&root, &inst, 0);
        // item 2 remains but its only cover overlaps item 1
        assert_eq!(child.active_items, vec![2]);
        assert!(child.active_vars.is_empty());
        assert_eq!(select_branch_item(&child, &inst), Err(DeadEnd { item: 2 }));
    }

    #[test]
    fn children_of_example() {
        let inst = tiny();
        let mut root = BnbNode::root(&inst);
        root.pi = vec![1.0, 3.0];
        let kids = expand(&root, &inst, 0);
        assert_eq!(kids.len(), 2);
        // v1 closes the node (δ = 0) and goes first
        assert_eq!(kids[0].fixed_one, vec![0]);
        assert!(kids[0].active_items.is_empty());
        assert!(kids[0].active_vars.is_empty());
        assert_eq!(kids[0].fixed_cost, 4);
        // v2: ratio (1 - 1)/1 = 0
        assert_eq!(kids[1].fixed_one, vec![1]);
        assert_eq!(kids[1].active_items, vec![1]);
        assert_eq!(kids[1].active_vars, vec![2]);
        assert_eq!(kids[1].pi, vec![3.0]);
        for k in &kids {
            k.check_invariants(&inst).unwrap();
        }
    }

    fn score_brute_force(node: &BnbNode, inst: &SppInstance, item: ItemId) -> usize {
        inst.columns
            .iter()
            .enumerate()
            .filter(|(v, col)| node.active_vars.contains(&(*v as VarId)) && col.contains(&item))
            .map(|(_, col)| node.active_items.iter().filter(|it| !col.contains(it)).count())
            .sum()
    }

    proptest! {
        #[test]
        fn random_expansions_keep_invariants(seed in any::<u64>(), path in prop::collection::vec(any::<prop::sample::Index>(), 0..4)) {
            let inst = generate(&GeneratorParams::new(8, 14, 0.35, seed)).unwrap();
            let mut node = BnbNode::root(&inst);
            node.pi = (0..inst.m_items).map(|j| j as f64 * 0.5 - 1.0).collect();
            for pick in path {
                let Ok(item) = select_branch_item(&node, &inst) else { break };
                // the chosen item attains the minimum score
                let best = node.active_items.iter().map(|&it| score_brute_force(&node, &inst, it)).min().unwrap();
                prop_assert_eq!(score_brute_force(&node, &inst, item), best);
                let kids = expand(&node, &inst, item);
                prop_assert!(!kids.is_empty());
                // ordering matches a brute-force sort of the ratio keys
                let keys: Vec<f64> = kids.iter().map(|k| child_ratio(&node, &inst, *k.fixed_one.last().unwrap())).collect();
                prop_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
                for k in &kids {
                    prop_assert!(k.check_invariants(&inst).is_ok(), "{:?}", k.check_invariants(&inst));
                    prop_assert!(k.size_bytes() <= node.size_bytes());
                    // π survives unchanged on the remaining items
                    for (it, p) in k.active_items.iter().zip(&k.pi) {
                        prop_assert_eq!(*p, node.pi_of(*it));
                    }
                }
                if kids.is_empty() { break; }
                node = kids[pick.index(kids.len())].clone();
                if node.active_items.is_empty() { break; }
            }
        }
    }
}
