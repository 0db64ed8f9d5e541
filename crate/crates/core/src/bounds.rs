//! Dual-ascent lower bounds for set partitioning subproblems.
//!
//! The dual of the LP relaxation is `max Σ π_j  s.t.  Σ_{j ∈ col_i} π_j ≤ c_i`
//! with free `π`. Any feasible `π` gives a valid lower bound. The heuristic
//! alternates a *forward* step, which raises every free `π_j` by a common
//! amount until some constraint saturates, and a *backward* step, which
//! shifts value away from items covered by several saturated columns so the
//! next forward step can make more progress.

use crate::instance::{ItemId, SppInstance, VarId};

/// Relative tolerance under which a dual constraint counts as saturated.
pub const SATURATION_TOL: f64 = 1e-9;

/// Iteration counts and `θ` schedule for [`dual_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSchedule {
    pub iterations: usize,
    pub theta: f64,
    pub theta_decay: f64,
}

impl DualSchedule {
    pub const ROOT: DualSchedule = DualSchedule {
        iterations: 10,
        theta: 0.5,
        theta_decay: 0.7,
    };
    pub const NODE: DualSchedule = DualSchedule {
        iterations: 5,
        theta: 0.3,
        theta_decay: 0.7,
    };

    pub fn for_node(is_root: bool) -> Self {
        if is_root {
            Self::ROOT
        } else {
            Self::NODE
        }
    }
}

/// A subproblem restricted to its active items and variables, re-indexed
/// locally (items `0..n_items`, variables `0..n_vars`).
#[derive(Debug, Clone)]
pub struct DualView {
    costs: Vec<f64>,
    cols: Vec<Vec<usize>>,
    rows: Vec<Vec<usize>>,
}

impl DualView {
    /// `cols` must only reference items below `n_items`.
    pub fn new(n_items: usize, costs: Vec<f64>, cols: Vec<Vec<usize>>) -> Self {
        assert_eq!(costs.len(), cols.len());
        let mut rows = vec![Vec::new(); n_items];
        for (i, col) in cols.iter().enumerate() {
            for &j in col {
                rows[j].push(i);
            }
        }
        Self { costs, cols, rows }
    }

    /// Builds the view of a node. Every active variable's column must lie
    /// inside `active_items` (both slices sorted ascending).
    pub fn from_active(inst: &SppInstance, active_items: &[ItemId], active_vars: &[VarId]) -> Self {
        let cols = active_vars
            .iter()
            .map(|&v| {
                inst.columns[v as usize]
                    .iter()
                    .map(|it| {
                        active_items
                            .binary_search(it)
                            .expect("active column covers an inactive item")
                    })
                    .collect()
            })
            .collect();
        let costs = active_vars.iter().map(|&v| inst.costs[v as usize] as f64).collect();
        Self::new(active_items.len(), costs, cols)
    }

    /// The whole instance as a view.
    pub fn full(inst: &SppInstance) -> Self {
        let cols = inst
            .columns
            .iter()
            .map(|c| c.iter().map(|&j| j as usize).collect())
            .collect();
        Self::new(inst.m_items, inst.costs.iter().map(|&c| c as f64).collect(), cols)
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn cost(&self, var: usize) -> f64 {
        self.costs[var]
    }

    pub fn col(&self, var: usize) -> &[usize] {
        &self.cols[var]
    }

    pub fn row(&self, item: usize) -> &[usize] {
        &self.rows[item]
    }

    fn eps(&self, var: usize) -> f64 {
        SATURATION_TOL * self.costs[var].abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub pi: Vec<f64>,
    pub slack: Vec<f64>,
    pub saturated: Vec<bool>,
    pub lb: f64,
}

impl DualState {
    pub fn new(view: &DualView, pi: Vec<f64>) -> Self {
        assert_eq!(pi.len(), view.n_items());
        let mut state = Self {
            pi,
            slack: vec![0.0; view.n_vars()],
            saturated: vec![false; view.n_vars()],
            lb: 0.0,
        };
        state.refresh(view);
        state
    }

    pub fn zero(view: &DualView) -> Self {
        Self::new(view, vec![0.0; view.n_items()])
    }

    /// Recomputes slacks, saturation flags and the bound from `pi`.
    pub fn refresh(&mut self, view: &DualView) {
        for var in 0..view.n_vars() {
            self.refresh_var(view, var);
        }
        self.lb = self.pi.iter().sum();
    }

    fn refresh_var(&mut self, view: &DualView, var: usize) {
        let used: f64 = view.col(var).iter().map(|&j| self.pi[j]).sum();
        self.slack[var] = view.cost(var) - used;
        self.saturated[var] = self.slack[var] <= view.eps(var);
    }

    /// Largest violation of `Σ π_j ≤ c_i` beyond the saturation tolerance,
    /// recomputed from scratch. `None` when dual feasible.
    pub fn infeasibility(&self, view: &DualView) -> Option<(usize, f64)> {
        (0..view.n_vars())
            .map(|var| {
                let used: f64 = view.col(var).iter().map(|&j| self.pi[j]).sum();
                (var, used - view.cost(var) - view.eps(var))
            })
            .filter(|&(_, excess)| excess > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn is_feasible(&self, view: &DualView) -> bool {
        self.infeasibility(view).is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTrace {
    /// Number of variables that became saturated in each inner iteration.
    pub newly_saturated: Vec<usize>,
    /// Elementary coefficient visits, used as a deterministic cost measure.
    pub work: u64,
}

impl ForwardTrace {
    pub fn iterations(&self) -> usize {
        self.newly_saturated.len()
    }
}

/// Raises the free duals as far as possible.
///
/// An item is free when it has at least one covering variable and none of
/// them is saturated. Each inner iteration adds the largest common `Δ1`
/// keeping every constraint feasible: `min slack_i / k_i` over the
/// variables touching `k_i ≥ 1` free items.
pub fn forward_step(view: &DualView, state: &mut DualState) -> ForwardTrace {
    let mut trace = ForwardTrace::default();
    let n_items = view.n_items();
    let mut free = vec![false; n_items];
    let mut touched = vec![0usize; view.n_vars()];

    loop {
        let mut any_free = false;
        for (j, f) in free.iter_mut().enumerate() {
            let row = view.row(j);
            *f = !row.is_empty() && row.iter().all(|&i| !state.saturated[i]);
            any_free |= *f;
            trace.work += row.len() as u64;
        }
        if !any_free {
            break;
        }

        let mut delta = f64::INFINITY;
        let mut argmin = usize::MAX;
        for var in 0..view.n_vars() {
            let k = view.col(var).iter().filter(|&&j| free[j]).count();
            trace.work += view.col(var).len() as u64;
            touched[var] = k;
            if k > 0 {
                let step = state.slack[var].max(0.0) / k as f64;
                if step < delta {
                    delta = step;
                    argmin = var;
                }
            }
        }
        debug_assert!(argmin != usize::MAX, "free item without covering variable");

        for (j, &f) in free.iter().enumerate() {
            if f {
                state.pi[j] += delta;
            }
        }
        let mut fresh = 0;
        for var in 0..view.n_vars() {
            if touched[var] > 0 {
                let before = state.saturated[var];
                state.refresh_var(view, var);
                if var == argmin && !state.saturated[var] {
                    // Rounding left the binding column a hair above the
                    // tolerance; it is binding by construction.
                    state.saturated[var] = true;
                }
                if state.saturated[var] && !before {
                    fresh += 1;
                }
            }
        }
        trace.newly_saturated.push(fresh);
    }
    state.lb = state.pi.iter().sum();
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    ThetaOutOfRange,
    NonPositiveBound,
    ZeroCoefficientSum,
    NonPositiveStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackwardOutcome {
    Skipped(SkipReason),
    Applied {
        /// The step that would hit `θ·lb` exactly.
        target: f64,
        /// The step actually applied (smaller when clamped for feasibility).
        applied: f64,
        clamped: bool,
    },
}

/// Redistributes dual value so the bound drops to `θ·lb`.
///
/// Item `j` moves by `Δ2·coeff_j`, where `coeff_j = 1` if no saturated
/// variable covers it and `-(α_j - 1)` otherwise (`α_j` = saturated
/// variables covering `j`). `Δ2` is clamped so no constraint is violated.
pub fn backward_step(view: &DualView, state: &mut DualState, theta: f64) -> BackwardOutcome {
    if !(theta > 0.0 && theta < 1.0) {
        return BackwardOutcome::Skipped(SkipReason::ThetaOutOfRange);
    }
    if state.lb <= 0.0 {
        return BackwardOutcome::Skipped(SkipReason::NonPositiveBound);
    }
    let coeff: Vec<f64> = (0..view.n_items())
        .map(|j| {
            let alpha = view.row(j).iter().filter(|&&i| state.saturated[i]).count();
            if alpha == 0 {
                1.0
            } else {
                -((alpha - 1) as f64)
            }
        })
        .collect();
    let sum: f64 = coeff.iter().sum();
    if sum == 0.0 {
        return BackwardOutcome::Skipped(SkipReason::ZeroCoefficientSum);
    }
    let target = state.lb * (theta - 1.0) / sum;
    if target <= 0.0 || !target.is_finite() {
        return BackwardOutcome::Skipped(SkipReason::NonPositiveStep);
    }

    let mut applied = target;
    let mut clamped = false;
    for var in 0..view.n_vars() {
        let gain: f64 = view.col(var).iter().map(|&j| coeff[j]).sum();
        if gain > 0.0 {
            let limit = state.slack[var].max(0.0) / gain;
            if limit < applied {
                applied = limit;
                clamped = true;
            }
        }
    }
    for (p, c) in state.pi.iter_mut().zip(&coeff) {
        *p += applied * c;
    }
    state.refresh(view);
    BackwardOutcome::Applied {
        target,
        applied,
        clamped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBound {
    /// `fixed_cost + Σ π_j`.
    pub lb_total: f64,
    pub pi: Vec<f64>,
    pub work: u64,
}

/// Runs the forward/backward schedule starting from inherited duals.
/// The backward step is not run after the last forward step.
pub fn dual_bound(view: &DualView, inherited_pi: Vec<f64>, fixed_cost: f64, is_root: bool) -> DualBound {
    let schedule = DualSchedule::for_node(is_root);
    let mut state = DualState::new(view, inherited_pi);
    let mut theta = schedule.theta;
    let mut work = view.nnz() as u64;
    for t in 1..=schedule.iterations {
        work += forward_step(view, &mut state).work;
        if t < schedule.iterations {
            backward_step(view, &mut state, theta);
            work += 2 * view.nnz() as u64;
        }
        theta *= schedule.theta_decay;
    }
    DualBound {
        lb_total: fixed_cost + state.lb,
        pi: state.pi,
        work,
    }
}
