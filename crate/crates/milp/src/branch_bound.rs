//! Best-bound branch-and-bound over binary variables.
//!
//! Nodes are processed in fixed-size batches popped in (bound, id) order;
//! the relaxations of a batch may be solved in parallel, but results are
//! merged in batch order, so node counts and solutions are identical for
//! any thread count. Branching picks the most fractional binary, ties going
//! to the lowest variable index.

use crate::{solve_lp, Clause, MixedIntegerProgram, Solution, SolveStatus};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Nodes per batch; constant so batching never depends on thread count.
const BATCH: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct BranchBoundOptions {
    /// Feasibility/optimality tolerance passed through to the LP solver.
    pub tol: f64,
    /// A binary counts as integral within this distance of 0 or 1.
    pub integrality_tol: f64,
    /// Maximum number of relaxations solved before giving up.
    pub node_limit: usize,
    /// Solve batch relaxations on the rayon pool.
    pub parallel: bool,
    /// Accept incumbents within this relative gap of the best bound; zero
    /// proves exact optimality. Nonzero values stop the search from
    /// enumerating cost-tied solutions.
    pub rel_gap: f64,
}

impl Default for BranchBoundOptions {
    fn default() -> Self {
        BranchBoundOptions {
            tol: 1e-7,
            integrality_tol: 1e-6,
            node_limit: 100_000,
            parallel: false,
            rel_gap: 0.0,
        }
    }
}

struct Node {
    id: u64,
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Min-heap ordering on (bound, id).
struct HeapEntry(Node);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.bound == other.0.bound && self.0.id == other.0.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so BinaryHeap pops the lowest bound, then lowest id.
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

pub fn branch_and_bound(mip: &MixedIntegerProgram, opts: &BranchBoundOptions) -> Solution {
    branch_and_bound_traced(mip, opts, &mut Vec::new())
}

/// As [`branch_and_bound`], also recording the global dual bound before each
/// batch (used by tests to check bound monotonicity).
pub fn branch_and_bound_traced(
    mip: &MixedIntegerProgram,
    opts: &BranchBoundOptions,
    bound_trace: &mut Vec<f64>,
) -> Solution {
    debug_assert!(mip.validate().is_ok());
    let mut lp = mip.lp.clone();
    // Clause rows tighten every relaxation; propagation handles the fixings.
    for clause in &mip.clauses {
        let mut row = vec![0.0; lp.num_vars()];
        match clause {
            Clause::AtLeastOne(members) => {
                for &v in members {
                    row[v] = 1.0;
                }
                lp.add_row(row, 1.0, f64::INFINITY);
            }
            Clause::AtMostOne(members) => {
                for &v in members {
                    row[v] = 1.0;
                }
                lp.add_row(row, f64::NEG_INFINITY, 1.0);
            }
        }
    }
    for &b in &mip.binaries {
        lp.var_lower[b] = lp.var_lower[b].max(0.0);
        lp.var_upper[b] = lp.var_upper[b].min(1.0);
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    {
        let mut lower = lp.var_lower.clone();
        let mut upper = lp.var_upper.clone();
        if propagate(mip, &mut lower, &mut upper) {
            heap.push(HeapEntry(Node {
                id: next_id,
                bound: f64::NEG_INFINITY,
                lower,
                upper,
            }));
            next_id += 1;
        }
    }

    let mut incumbent: Option<Solution> = None;
    let mut nodes = 0usize;
    let mut hit_limit = false;

    let cutoff_of = |incumbent: &Option<Solution>| {
        incumbent
            .as_ref()
            .map(|s| s.objective - opts.tol - opts.rel_gap * s.objective.abs())
            .unwrap_or(f64::INFINITY)
    };

    while !heap.is_empty() {
        let cutoff = cutoff_of(&incumbent);

        // Pop a deterministic batch of still-viable nodes.
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH {
            match heap.pop() {
                Some(HeapEntry(node)) => {
                    if node.bound >= cutoff {
                        continue;
                    }
                    batch.push(node);
                }
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        if nodes + batch.len() > opts.node_limit {
            batch.truncate(opts.node_limit.saturating_sub(nodes));
            hit_limit = true;
            if batch.is_empty() {
                break;
            }
        }
        bound_trace.push(global_bound(&batch, &heap, &incumbent));

        let solve_node = |node: &Node| {
            let mut sub = lp.clone();
            sub.var_lower.clone_from(&node.lower);
            sub.var_upper.clone_from(&node.upper);
            solve_lp(&sub, opts.tol)
        };
        let results: Vec<Solution> = if opts.parallel {
            batch.par_iter().map(solve_node).collect()
        } else {
            batch.iter().map(solve_node).collect()
        };
        nodes += batch.len();

        for (node, sol) in batch.into_iter().zip(results) {
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => continue,
                // Binaries are boxed, so unbounded relaxations reflect an
                // unbounded continuous part shared by every node.
                SolveStatus::Unbounded => return Solution::unbounded(),
                SolveStatus::IterationLimit => {
                    hit_limit = true;
                    continue;
                }
            }
            if sol.objective >= cutoff_of(&incumbent) {
                continue;
            }
            match most_fractional(&mip.binaries, &sol.x, opts.integrality_tol) {
                None => {
                    incumbent = Some(sol);
                }
                Some(var) => {
                    // Round-and-repair: before any incumbent exists, try the
                    // relaxation's binaries rounded to the nearest bit. An
                    // early incumbent lets the gap cutoff prune cost-tied
                    // subtrees that best-bound order would otherwise flood.
                    if incumbent.is_none() {
                        if let Some(heur) = rounded_incumbent(mip, &lp, &node, &sol.x, opts) {
                            if heur.objective < cutoff_of(&incumbent) {
                                incumbent = Some(heur);
                            }
                        }
                    }
                    for fix_to_one in [false, true] {
                        let mut lower = node.lower.clone();
                        let mut upper = node.upper.clone();
                        if fix_to_one {
                            lower[var] = 1.0;
                        } else {
                            upper[var] = 0.0;
                        }
                        if propagate(mip, &mut lower, &mut upper) {
                            heap.push(HeapEntry(Node {
                                id: next_id,
                                bound: sol.objective,
                                lower,
                                upper,
                            }));
                        }
                        next_id += 1;
                    }
                }
            }
        }
        if hit_limit {
            break;
        }
    }

    match incumbent {
        Some(mut sol) => {
            sol.status = if hit_limit {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Optimal
            };
            sol.nodes = nodes;
            sol
        }
        None => {
            let mut sol = if hit_limit {
                Solution {
                    status: SolveStatus::IterationLimit,
                    x: Vec::new(),
                    objective: f64::INFINITY,
                    nodes: 0,
                }
            } else {
                Solution::infeasible()
            };
            sol.nodes = nodes;
            sol
        }
    }
}

fn global_bound(batch: &[Node], heap: &BinaryHeap<HeapEntry>, incumbent: &Option<Solution>) -> f64 {
    let mut g = incumbent
        .as_ref()
        .map(|s| s.objective)
        .unwrap_or(f64::INFINITY);
    for node in batch {
        g = g.min(node.bound);
    }
    if let Some(HeapEntry(top)) = heap.peek() {
        g = g.min(top.bound);
    }
    g
}

/// Fix every binary to the rounded relaxation value (within the node's
/// bounds), propagate, and solve the continuous rest.
fn rounded_incumbent(
    mip: &MixedIntegerProgram,
    lp: &crate::LinearProgram,
    node: &Node,
    x: &[f64],
    opts: &BranchBoundOptions,
) -> Option<Solution> {
    let mut lower = node.lower.clone();
    let mut upper = node.upper.clone();
    for &v in &mip.binaries {
        let bit = x[v].round().clamp(lower[v], upper[v]).round();
        lower[v] = bit;
        upper[v] = bit;
    }
    if !propagate(mip, &mut lower, &mut upper) {
        return None;
    }
    let mut sub = lp.clone();
    sub.var_lower = lower;
    sub.var_upper = upper;
    let sol = solve_lp(&sub, opts.tol);
    (sol.status == SolveStatus::Optimal).then_some(sol)
}

fn most_fractional(binaries: &[usize], x: &[f64], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &v in binaries {
        let dist = (x[v] - x[v].round()).abs();
        if dist > int_tol {
            match best {
                Some((_, d)) if dist <= d => {}
                _ => best = Some((v, dist)),
            }
        }
    }
    best.map(|(v, _)| v)
}

/// Apply clause fixings to fixpoint. Returns false on conflict.
fn propagate(mip: &MixedIntegerProgram, lower: &mut [f64], upper: &mut [f64]) -> bool {
    let fixed_one = |v: usize, lower: &[f64]| lower[v] >= 0.5;
    let fixed_zero = |v: usize, upper: &[f64]| upper[v] <= 0.5;
    loop {
        let mut changed = false;
        for v in 0..lower.len() {
            if lower[v] > upper[v] {
                return false;
            }
        }
        for clause in &mip.clauses {
            match clause {
                Clause::AtMostOne(members) => {
                    let ones: Vec<usize> = members
                        .iter()
                        .copied()
                        .filter(|&v| fixed_one(v, lower))
                        .collect();
                    if ones.len() > 1 {
                        return false;
                    }
                    if ones.len() == 1 {
                        for &v in members {
                            if v != ones[0] && !fixed_zero(v, upper) {
                                if fixed_one(v, lower) {
                                    return false;
                                }
                                upper[v] = 0.0;
                                changed = true;
                            }
                        }
                    }
                }
                Clause::AtLeastOne(members) => {
                    if members.iter().any(|&v| fixed_one(v, lower)) {
                        continue;
                    }
                    let free: Vec<usize> = members
                        .iter()
                        .copied()
                        .filter(|&v| !fixed_zero(v, upper))
                        .collect();
                    match free.len() {
                        0 => return false,
                        1 => {
                            lower[free[0]] = 1.0;
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        if !changed {
            return true;
        }
    }
}
