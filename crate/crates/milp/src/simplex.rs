//! Two-phase dense primal simplex.
//!
//! The bounded-variable program is rewritten into canonical form
//! `min c·y  s.t.  A y = b, y >= 0` (lower bounds shifted out, free
//! variables split, finite upper bounds turned into rows), then solved with
//! a full-tableau simplex. The entering rule is Dantzig's most-negative
//! reduced cost, falling back to Bland's rule after a run of degenerate
//! pivots so cycling cannot occur.

use crate::{LinearProgram, Solution, SolveStatus};

const MAX_ITERS: usize = 50_000;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 40;
const PIVOT_TOL: f64 = 1e-9;
/// Deterministic right-hand-side perturbation applied after row
/// equilibration; breaks ratio-test ties so degenerate problems do not
/// stall, while staying orders of magnitude below every tolerance.
const RHS_PERT: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// Equal lower and upper bound; substituted into rows and objective.
    Fixed(f64),
    /// Finite lower bound: x = offset + y.
    Shifted { col: usize, offset: f64 },
    /// No lower bound, finite upper: x = offset - y.
    Mirrored { col: usize, offset: f64 },
    /// Free variable: x = pos - neg.
    Split { pos: usize, neg: usize },
}

enum Rel {
    Le,
    Ge,
    Eq,
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    total: usize,
    is_artificial: Vec<bool>,
    maps: Vec<VarMap>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

/// Solve `lp` to the given primal feasibility/optimality tolerance.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Solution {
    debug_assert!(lp.validate().is_ok());
    let mut tab = match build_tableau(lp) {
        Ok(t) => t,
        Err(()) => return Solution::infeasible(),
    };

    // Phase 1: drive artificials to zero.
    if tab.is_artificial.iter().any(|&x| x) {
        let phase1: Vec<f64> = tab
            .is_artificial
            .iter()
            .map(|&art| if art { 1.0 } else { 0.0 })
            .collect();
        match tab.run_phase(&phase1, true) {
            PhaseEnd::Optimal => {}
            // Phase-1 objective is bounded below by zero; unbounded cannot
            // happen, but treat defensively as a limit.
            PhaseEnd::Unbounded | PhaseEnd::IterationLimit => {
                return iteration_limit_solution(lp, &tab)
            }
        }
        let scale = 1.0 + tab.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tab.phase_objective(&phase1) > tol * scale {
            return Solution::infeasible();
        }
        tab.evict_artificials();
    }

    let phase2 = tab.cost.clone();
    match tab.run_phase(&phase2, false) {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return Solution::unbounded(),
        PhaseEnd::IterationLimit => return iteration_limit_solution(lp, &tab),
    }

    let x = tab.extract(lp.num_vars());
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Solution {
        status: SolveStatus::Optimal,
        x,
        objective,
        nodes: 0,
    }
}

fn iteration_limit_solution(lp: &LinearProgram, tab: &Tableau) -> Solution {
    let x = tab.extract(lp.num_vars());
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Solution {
        status: SolveStatus::IterationLimit,
        x,
        objective,
        nodes: 0,
    }
}

/// Returns Err(()) when a constant row is already infeasible.
fn build_tableau(lp: &LinearProgram) -> Result<Tableau, ()> {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    for j in 0..n {
        let lo = lp.var_lower[j];
        let hi = lp.var_upper[j];
        if lo.is_finite() {
            if hi.is_finite() && hi - lo == 0.0 {
                maps.push(VarMap::Fixed(lo));
            } else {
                maps.push(VarMap::Shifted {
                    col: ncols,
                    offset: lo,
                });
                ncols += 1;
            }
        } else if hi.is_finite() {
            maps.push(VarMap::Mirrored {
                col: ncols,
                offset: hi,
            });
            ncols += 1;
        } else {
            maps.push(VarMap::Split {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }

    // Rows over the canonical (shifted) columns, prior to slack assembly.
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::new();
    let mut push_row = |coeffs: &[f64], rel: Rel, rhs: f64| -> Result<(), ()> {
        if coeffs.iter().all(|&a| a == 0.0) {
            let ok = match rel {
                Rel::Le => rhs >= -PIVOT_TOL,
                Rel::Ge => rhs <= PIVOT_TOL,
                Rel::Eq => rhs.abs() <= PIVOT_TOL,
            };
            return if ok { Ok(()) } else { Err(()) };
        }
        rows.push((coeffs.to_vec(), rel, rhs));
        Ok(())
    };

    for (i, row) in lp.rows.iter().enumerate() {
        let mut coeffs = vec![0.0; ncols];
        let mut shift = 0.0;
        for j in 0..n {
            let a = row[j];
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Fixed(v) => shift += a * v,
                VarMap::Shifted { col, offset } => {
                    coeffs[col] += a;
                    shift += a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    coeffs[col] -= a;
                    shift += a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        let lo = lp.row_lower[i];
        let hi = lp.row_upper[i];
        if lo.is_finite() && hi.is_finite() && lo == hi {
            push_row(&coeffs, Rel::Eq, lo - shift)?;
        } else {
            if lo.is_finite() {
                push_row(&coeffs, Rel::Ge, lo - shift)?;
            }
            if hi.is_finite() {
                push_row(&coeffs, Rel::Le, hi - shift)?;
            }
        }
    }

    // Finite upper bounds of shifted variables become rows.
    for j in 0..n {
        if let VarMap::Shifted { col, offset } = maps[j] {
            let hi = lp.var_upper[j];
            if hi.is_finite() {
                let mut coeffs = vec![0.0; ncols];
                coeffs[col] = 1.0;
                push_row(&coeffs, Rel::Le, hi - offset)?;
            }
        }
    }

    // Assemble slack and artificial columns with nonnegative right-hand side.
    let m = rows.len();
    let mut n_slack = 0;
    let mut n_art = 0;
    for (coeffs, _, rhs) in rows.iter_mut() {
        // Equilibrate: scale every row to a unit largest coefficient.
        let scale = coeffs.iter().fold(0.0f64, |s, a| s.max(a.abs()));
        if scale > 0.0 {
            for a in coeffs.iter_mut() {
                *a /= scale;
            }
            *rhs /= scale;
        }
    }
    for (i, (coeffs, rel, rhs)) in rows.iter_mut().enumerate() {
        if *rhs < 0.0 {
            for a in coeffs.iter_mut() {
                *a = -*a;
            }
            *rhs = -*rhs;
            *rel = match *rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
        *rhs += RHS_PERT * (i + 1) as f64;
        match *rel {
            Rel::Le => n_slack += 1,
            Rel::Ge => {
                n_slack += 1;
                n_art += 1;
            }
            Rel::Eq => n_art += 1,
        }
    }

    let total = ncols + n_slack + n_art;
    let mut a = vec![vec![0.0; total]; m];
    let mut b = vec![0.0; m];
    let mut basis = vec![0usize; m];
    let mut is_artificial = vec![false; total];
    let mut slack_at = ncols;
    let mut art_at = ncols + n_slack;
    for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
        a[i][..ncols].copy_from_slice(&coeffs);
        b[i] = rhs;
        match rel {
            Rel::Le => {
                a[i][slack_at] = 1.0;
                basis[i] = slack_at;
                slack_at += 1;
            }
            Rel::Ge => {
                a[i][slack_at] = -1.0;
                slack_at += 1;
                a[i][art_at] = 1.0;
                is_artificial[art_at] = true;
                basis[i] = art_at;
                art_at += 1;
            }
            Rel::Eq => {
                a[i][art_at] = 1.0;
                is_artificial[art_at] = true;
                basis[i] = art_at;
                art_at += 1;
            }
        }
    }

    let mut cost = vec![0.0; total];
    for j in 0..n {
        let c = lp.objective[j];
        match maps[j] {
            VarMap::Fixed(_) => {}
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    Ok(Tableau {
        a,
        b,
        cost,
        basis,
        total,
        is_artificial,
        maps,
    })
}

impl Tableau {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn phase_objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(&self.b)
            .map(|(&j, &v)| cost[j] * v)
            .sum()
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.a[r][col];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.b[r] /= p;
        self.a[r][col] = 1.0;
        for i in 0..self.m() {
            if i == r {
                continue;
            }
            let f = self.a[i][col];
            if f == 0.0 {
                continue;
            }
            let (head, tail) = if i < r {
                let (h, t) = self.a.split_at_mut(r);
                (&mut h[i], &t[0])
            } else {
                let (h, t) = self.a.split_at_mut(i);
                (&mut t[0], &h[r])
            };
            for (x, y) in head.iter_mut().zip(tail.iter()) {
                *x -= f * *y;
            }
            head[col] = 0.0;
            self.b[i] -= f * self.b[r];
            if self.b[i] < 0.0 && self.b[i] > -PIVOT_TOL {
                self.b[i] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    /// Run the simplex for the given cost vector. `allow_artificial` permits
    /// artificial columns as entering candidates (phase 1 only).
    fn run_phase(&mut self, cost: &[f64], allow_artificial: bool) -> PhaseEnd {
        let mut degenerate_run = 0usize;
        let cost_scale = 1.0 + cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let enter_tol = PIVOT_TOL * cost_scale;
        for _ in 0..MAX_ITERS {
            let mut cb = vec![0.0; self.m()];
            for (i, &bj) in self.basis.iter().enumerate() {
                cb[i] = cost[bj];
            }
            let use_bland = degenerate_run >= DEGENERATE_RUN;

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.total {
                if !allow_artificial && self.is_artificial[j] {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.m() {
                    if cb[i] != 0.0 {
                        d -= cb[i] * self.a[i][j];
                    }
                }
                if d < -enter_tol {
                    if use_bland {
                        entering = Some((j, d));
                        break;
                    }
                    match entering {
                        Some((_, best)) if d >= best => {}
                        _ => entering = Some((j, d)),
                    }
                }
            }
            let Some((col, _)) = entering else {
                return PhaseEnd::Optimal;
            };

            // Ratio test; ties broken on the smallest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m() {
                let aij = self.a[i][col];
                if aij > PIVOT_TOL {
                    let ratio = self.b[i] / aij;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r_best, best)) => {
                            if ratio < best - PIVOT_TOL
                                || (ratio < best + PIVOT_TOL
                                    && self.basis[i] < self.basis[r_best])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return PhaseEnd::Unbounded;
            };
            if ratio.abs() <= PIVOT_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
        PhaseEnd::IterationLimit
    }

    /// Pivot leftover basic artificials out of the basis (or drop their rows
    /// when redundant) so phase 2 can ban artificial columns entirely.
    fn evict_artificials(&mut self) {
        let mut r = 0;
        while r < self.m() {
            if self.is_artificial[self.basis[r]] {
                let col = (0..self.total)
                    .find(|&j| !self.is_artificial[j] && self.a[r][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.a.remove(r);
                        self.b.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    /// Map the canonical basic solution back to original variable space.
    fn extract(&self, n: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.total];
        for (i, &bj) in self.basis.iter().enumerate() {
            y[bj] = self.b[i];
        }
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match self.maps[j] {
                VarMap::Fixed(v) => v,
                VarMap::Shifted { col, offset } => offset + y[col],
                VarMap::Mirrored { col, offset } => offset - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            };
        }
        x
    }
}
