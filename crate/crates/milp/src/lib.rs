//! Dense mixed-integer linear programming for small scheduling problems.
//!
//! The crate is intentionally minimal: a two-phase dense simplex over
//! bounded variables ([`solve_lp`]) and a best-bound branch-and-bound over
//! binary variables with logical-clause propagation ([`branch_and_bound`]).
//! Problem sizes are expected in the tens of variables and low hundreds of
//! rows, so everything is dense and deterministic; there is no presolve
//! beyond clause propagation and no cutting planes.

mod branch_bound;
mod simplex;

pub use branch_bound::{branch_and_bound, branch_and_bound_traced, BranchBoundOptions};
pub use simplex::solve_lp;

use std::fmt::Write as _;

/// `min c·x` subject to `row_lower <= A x <= row_upper` and
/// `var_lower <= x <= var_upper`. Infinite bounds mark one-sided rows and
/// free/unbounded variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// Dense constraint rows, each of length `objective.len()`.
    pub rows: Vec<Vec<f64>>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
            var_lower: vec![0.0; num_vars],
            var_upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Add a row with the given bounds; use `-INFINITY`/`INFINITY` for
    /// one-sided constraints and equal bounds for an equality.
    pub fn add_row(&mut self, coeffs: Vec<f64>, lower: f64, upper: f64) {
        assert_eq!(coeffs.len(), self.num_vars(), "row length mismatch");
        self.rows.push(coeffs);
        self.row_lower.push(lower);
        self.row_upper.push(upper);
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.num_vars();
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(MilpError::Dimension("variable bound length".into()));
        }
        let m = self.rows.len();
        if self.row_lower.len() != m || self.row_upper.len() != m {
            return Err(MilpError::Dimension("row bound length".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(MilpError::Dimension(format!("row {i} length")));
            }
            if self.row_lower[i] > self.row_upper[i] {
                return Err(MilpError::InconsistentBounds(format!("row {i}")));
            }
        }
        for j in 0..n {
            if self.var_lower[j] > self.var_upper[j] {
                return Err(MilpError::InconsistentBounds(format!("variable {j}")));
            }
            if self.var_lower[j].is_nan() || self.var_upper[j].is_nan() {
                return Err(MilpError::InconsistentBounds(format!("variable {j} NaN")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(MilpError::InconsistentBounds("objective not finite".into()));
        }
        Ok(())
    }

    /// Primal residual of `x`: the largest violation over rows and variable
    /// bounds. Used by tests and by incumbent verification.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.num_vars() {
            worst = worst.max(self.var_lower[j] - x[j]);
            worst = worst.max(x[j] - self.var_upper[j]);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(self.row_lower[i] - ax);
            worst = worst.max(ax - self.row_upper[i]);
        }
        worst
    }
}

/// Logical side constraints over binary variables, applied both as linear
/// rows in relaxations and as 0/1 fixings during propagation.
#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    AtLeastOne(Vec<usize>),
    AtMostOne(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    /// Indices of variables restricted to {0, 1}.
    pub binaries: Vec<usize>,
    pub clauses: Vec<Clause>,
}

impl MixedIntegerProgram {
    pub fn validate(&self) -> Result<(), MilpError> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        for &b in &self.binaries {
            if b >= n {
                return Err(MilpError::Dimension(format!("binary index {b}")));
            }
        }
        let is_binary = |v: usize| self.binaries.contains(&v);
        for clause in &self.clauses {
            let members = match clause {
                Clause::AtLeastOne(m) | Clause::AtMostOne(m) => m,
            };
            if members.is_empty() {
                return Err(MilpError::Dimension("empty clause".into()));
            }
            for &v in members {
                if !is_binary(v) {
                    return Err(MilpError::Dimension(format!(
                        "clause references non-binary variable {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Dump the instance in a CPLEX-LP-style plain-text format for
    /// cross-checking with external tools. Deterministic output.
    pub fn to_lp_format(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ {name}");
        let _ = writeln!(out, "Minimize");
        let mut obj = String::from(" obj:");
        for (j, &c) in self.lp.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(obj, " {} x{}", fmt_signed(c), j);
            }
        }
        let _ = writeln!(out, "{obj}");
        let _ = writeln!(out, "Subject To");
        for (i, row) in self.lp.rows.iter().enumerate() {
            let mut body = String::new();
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    let _ = write!(body, " {} x{}", fmt_signed(a), j);
                }
            }
            let lo = self.lp.row_lower[i];
            let hi = self.lp.row_upper[i];
            if lo == hi {
                let _ = writeln!(out, " r{i}:{body} = {lo}");
            } else {
                if lo.is_finite() {
                    let _ = writeln!(out, " r{i}lo:{body} >= {lo}");
                }
                if hi.is_finite() {
                    let _ = writeln!(out, " r{i}hi:{body} <= {hi}");
                }
            }
        }
        for (k, clause) in self.clauses.iter().enumerate() {
            match clause {
                Clause::AtLeastOne(m) => {
                    let body: Vec<String> = m.iter().map(|v| format!("+1 x{v}")).collect();
                    let _ = writeln!(out, " c{k}: {} >= 1", body.join(" "));
                }
                Clause::AtMostOne(m) => {
                    let body: Vec<String> = m.iter().map(|v| format!("+1 x{v}")).collect();
                    let _ = writeln!(out, " c{k}: {} <= 1", body.join(" "));
                }
            }
        }
        let _ = writeln!(out, "Bounds");
        for j in 0..self.lp.num_vars() {
            let _ = writeln!(
                out,
                " {} <= x{} <= {}",
                self.lp.var_lower[j], j, self.lp.var_upper[j]
            );
        }
        if !self.binaries.is_empty() {
            let _ = writeln!(out, "Binaries");
            let names: Vec<String> = self.binaries.iter().map(|v| format!("x{v}")).collect();
            let _ = writeln!(out, " {}", names.join(" "));
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn fmt_signed(v: f64) -> String {
    if v >= 0.0 {
        format!("+{v}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Variable values in original problem space; empty unless an incumbent
    /// or optimum exists.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Branch-and-bound nodes whose relaxation was solved (0 for plain LPs).
    pub nodes: usize,
}

impl Solution {
    pub(crate) fn infeasible() -> Self {
        Solution {
            status: SolveStatus::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            nodes: 0,
        }
    }

    pub(crate) fn unbounded() -> Self {
        Solution {
            status: SolveStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NEG_INFINITY,
            nodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MilpError {
    Dimension(String),
    InconsistentBounds(String),
}

impl std::fmt::Display for MilpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MilpError::Dimension(s) => write!(f, "dimension mismatch: {s}"),
            MilpError::InconsistentBounds(s) => write!(f, "inconsistent bounds: {s}"),
        }
    }
}

impl std::error::Error for MilpError {}
