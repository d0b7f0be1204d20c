//! Dense two-phase simplex for `max c·v  s.t.  A v = b, v ≥ 0`.
//!
//! Artificial columns stay in the tableau through phase II so the final
//! reduced costs yield the dual solution, which certifies optimality
//! independently of the pivoting.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tableau entries allowed before a problem is rejected as too large.
pub const MAX_TABLEAU_ENTRIES: usize = 1 << 24;
pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Equality rows `(coefficients, rhs)`.
    pub equalities: Vec<(Vec<f64>, f64)>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            equalities: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, rhs: f64) {
        self.equalities.push((coefficients, rhs));
    }

    /// Adds a row given as sparse `(column, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let mut row = vec![0.0; self.vars()];
        for &(j, v) in terms {
            row[j] += v;
        }
        self.add_row(row, rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.vars();
        if n == 0 {
            return Err(Error::Shape("LP without variables".into()));
        }
        if let Some((k, _)) = self
            .equalities
            .iter()
            .enumerate()
            .find(|(_, (row, _))| row.len() != n)
        {
            return Err(Error::Shape(format!("LP row {k} does not have {n} coefficients")));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self
                .equalities
                .iter()
                .all(|(row, b)| b.is_finite() && row.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("non-finite LP data".into()));
        }
        Ok(())
    }

    /// `max_i |A_i·v - b_i|`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|(row, b)| (row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// Smallest improving index; never cycles.
    #[default]
    Bland,
    /// Most improving reduced cost, switching to Bland after a run of
    /// degenerate pivots.
    Dantzig,
    /// Most improving reduced cost per unit edge length, with the same
    /// Bland fallback.
    SteepestEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal value; `NaN` unless optimal.
    pub optimum: f64,
    pub solution: Vec<f64>,
    /// Dual multipliers of the equality rows.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    /// Largest `c_j - y·A_j`; non-positive up to tolerance at optimality.
    pub max_reduced_cost: f64,
    pub duality_gap: f64,
}

struct Tableau {
    rows: usize,
    /// Real variables, then one artificial per row.
    cols: usize,
    real: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    d: Vec<f64>,
    value: f64,
    iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + c];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        self.rhs[r] /= p;
        let prow = self.t[r * cols..(r + 1) * cols].to_vec();
        let rhs_r = self.rhs[r];
        for i in (0..self.rows).filter(|&i| i != r) {
            let row = &mut self.t[i * cols..(i + 1) * cols];
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
                self.rhs[i] -= f * rhs_r;
                if self.rhs[i].abs() < 1e-14 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (v, &pv) in self.d.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.d[c] = 0.0;
            self.value += f * rhs_r;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    fn entering(&self, allowed: usize, rule: PivotRule, bland: bool) -> Option<usize> {
        let mut candidates = (0..allowed).filter(|&j| self.d[j] > OPTIMALITY_TOL);
        if bland {
            return candidates.next();
        }
        match rule {
            PivotRule::Bland => candidates.next(),
            PivotRule::Dantzig => candidates.max_by(|&a, &b| self.d[a].total_cmp(&self.d[b])),
            PivotRule::SteepestEdge => {
                let mut norms = vec![1.0; allowed];
                for i in 0..self.rows {
                    let row = &self.t[i * self.cols..i * self.cols + allowed];
                    for (acc, v) in norms.iter_mut().zip(row) {
                        *acc += v * v;
                    }
                }
                candidates.max_by(|&a, &b| {
                    (self.d[a] / norms[a].sqrt()).total_cmp(&(self.d[b] / norms[b].sqrt()))
                })
            }
        }
    }

    /// Ratio test. Near-ties go to the largest pivot element, or to the
    /// smallest basic index when `bland` is set.
    fn leaving(&self, c: usize, bland: bool) -> Option<usize> {
        let col_max = (0..self.rows).fold(0.0f64, |acc, i| acc.max(self.at(i, c).abs()));
        let tol = PIVOT_TOL.max(1e-9 * col_max);
        let mut min_ratio = f64::INFINITY;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > tol {
                min_ratio = min_ratio.min(self.rhs[i] / a);
            }
        }
        if min_ratio == f64::INFINITY {
            return None;
        }
        let slack = 1e-12 * (1.0 + min_ratio.abs());
        let mut best: Option<usize> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a <= tol || self.rhs[i] / a > min_ratio + slack {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let better = if bland {
                        self.basis[i] < self.basis[j]
                    } else {
                        a > self.at(j, c)
                    };
                    Some(if better { i } else { j })
                }
            };
        }
        best
    }

    /// Pivots until optimal. With `stop_at_zero` (phase I) it also stops
    /// once the objective reaches its known maximum of zero.
    fn run(&mut self, rule: PivotRule, max_iter: usize, stop_at_zero: bool) -> Result<Step> {
        let allowed = self.real;
        let mut degenerate = 0usize;
        loop {
            if stop_at_zero && self.value >= 0.0 {
                return Ok(Step::Optimal);
            }
            if self.iterations >= max_iter {
                return Err(Error::Lp(format!("no convergence after {max_iter} pivots")));
            }
            let bland = rule == PivotRule::Bland || degenerate > self.rows.max(50);
            let Some(c) = self.entering(allowed, rule, bland) else {
                return Ok(Step::Optimal);
            };
            let Some(r) = self.leaving(c, bland) else {
                return Ok(Step::Unbounded);
            };
            if self.rhs[r] == 0.0 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    solve_lp_with(problem, PivotRule::Bland)
}

/// Indices of a maximal linearly independent subset of the equality rows,
/// or `None` when a dependent row contradicts the others.
fn independent_rows(problem: &LpProblem) -> Option<Vec<usize>> {
    let n = problem.vars();
    let mut pivots: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut keep = Vec::new();
    for (i, (row, b)) in problem.equalities.iter().enumerate() {
        let scale = row.iter().fold(b.abs(), |acc, v| acc.max(v.abs())).max(1.0);
        let mut r = row.clone();
        let mut rhs = *b;
        for (p, v, vb) in &pivots {
            let f = r[*p];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(v) {
                    *x -= f * y;
                }
                rhs -= f * vb;
            }
        }
        let (col, peak) = (0..n).fold((0, 0.0f64), |(c, m), j| {
            if r[j].abs() > m {
                (j, r[j].abs())
            } else {
                (c, m)
            }
        });
        if peak > 1e-9 * scale {
            let piv = r[col];
            r.iter_mut().for_each(|x| *x /= piv);
            pivots.push((col, r, rhs / piv));
            keep.push(i);
        } else if rhs.abs() > FEASIBILITY_TOL * scale {
            return None;
        }
    }
    Some(keep)
}

pub fn solve_lp_with(problem: &LpProblem, rule: PivotRule) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.vars();
    if problem.equalities.len().checked_mul(n + problem.equalities.len()).is_none_or(|s| s > MAX_TABLEAU_ENTRIES) {
        return Err(Error::TooLarge(format!(
            "LP with {} rows and {n} variables",
            problem.equalities.len()
        )));
    }
    let Some(keep) = independent_rows(problem) else {
        return Ok(infeasible(n, problem.equalities.len(), 0));
    };
    let reduced = LpProblem {
        objective: problem.objective.clone(),
        equalities: keep.iter().map(|&i| problem.equalities[i].clone()).collect(),
    };
    let (status, x, reduced_duals, iterations) = simplex(&reduced, rule)?;
    match status {
        LpStatus::Optimal => {
            let mut duals = vec![0.0; problem.equalities.len()];
            for (&i, y) in keep.iter().zip(reduced_duals) {
                duals[i] = y;
            }
            certify(problem, x, duals, iterations)
        }
        LpStatus::Infeasible => Ok(infeasible(n, problem.equalities.len(), iterations)),
        LpStatus::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            optimum: f64::INFINITY,
            solution: Vec::new(),
            duals: Vec::new(),
            iterations,
            primal_residual: f64::NAN,
            max_reduced_cost: f64::NAN,
            duality_gap: f64::NAN,
        }),
    }
}

/// Two-phase simplex on a problem with independent rows: status, primal
/// point, duals and pivot count.
fn simplex(problem: &LpProblem, rule: PivotRule) -> Result<(LpStatus, Vec<f64>, Vec<f64>, usize)> {
    let n = problem.vars();
    let m = problem.equalities.len();
    let cols = n + m;
    let mut sign = vec![1.0; m];
    let mut tab = Tableau {
        rows: m,
        cols,
        real: n,
        t: vec![0.0; m * cols],
        rhs: vec![0.0; m],
        basis: (n..n + m).collect(),
        d: vec![0.0; cols],
        value: 0.0,
        iterations: 0,
    };
    for (i, (row, b)) in problem.equalities.iter().enumerate() {
        if *b < 0.0 {
            sign[i] = -1.0;
        }
        for (j, &a) in row.iter().enumerate() {
            tab.t[i * cols + j] = sign[i] * a;
        }
        tab.t[i * cols + n + i] = 1.0;
        tab.rhs[i] = sign[i] * b;
    }
    let max_iter = 50 * (cols + m) + 1000;

    // Phase I: maximize -Σ artificials.
    for i in 0..m {
        for j in 0..n {
            tab.d[j] += tab.at(i, j);
        }
        tab.value -= tab.rhs[i];
    }
    tab.run(rule, max_iter, true)?;
    let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if tab.value < -FEASIBILITY_TOL * scale {
        return Ok((LpStatus::Infeasible, Vec::new(), Vec::new(), tab.iterations));
    }
    // Drive zero-level artificials out of the basis where possible; rows
    // where that fails are redundant and keep their artificial at zero.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase II.
    tab.d = vec![0.0; cols];
    tab.d[..n].copy_from_slice(&problem.objective);
    tab.value = 0.0;
    for r in 0..m {
        let cb = if tab.basis[r] < n { problem.objective[tab.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..cols {
                tab.d[j] -= cb * tab.at(r, j);
            }
            tab.value += cb * tab.rhs[r];
        }
    }
    if let Step::Unbounded = tab.run(rule, max_iter, false)? {
        return Ok((LpStatus::Unbounded, Vec::new(), Vec::new(), tab.iterations));
    }

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs[r].max(0.0);
        }
    }
    let duals: Vec<f64> = (0..m).map(|i| -sign[i] * tab.d[tab.real + i]).collect();
    Ok((LpStatus::Optimal, x, duals, tab.iterations))
}

fn infeasible(n: usize, m: usize, iterations: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        optimum: f64::NAN,
        solution: vec![0.0; n],
        duals: vec![0.0; m],
        iterations,
        primal_residual: f64::NAN,
        max_reduced_cost: f64::NAN,
        duality_gap: f64::NAN,
    }
}

/// Checks primal feasibility, dual feasibility and a zero duality gap
/// against the original data.
fn certify(problem: &LpProblem, x: Vec<f64>, duals: Vec<f64>, iterations: usize) -> Result<LpSolution> {
    let n = problem.vars();
    let primal_residual = problem.residual(&x);
    let mut reduced = problem.objective.clone();
    for ((row, _), &y) in problem.equalities.iter().zip(&duals) {
        if y != 0.0 {
            for j in 0..n {
                reduced[j] -= y * row[j];
            }
        }
    }
    let max_reduced_cost = reduced.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let optimum: f64 = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let dual_value: f64 = problem.equalities.iter().zip(&duals).map(|((_, b), y)| b * y).sum();
    let duality_gap = (optimum - dual_value).abs();
    let scale = 1.0 + optimum.abs();
    if primal_residual > FEASIBILITY_TOL
        || max_reduced_cost > OPTIMALITY_TOL * scale
        || duality_gap > OPTIMALITY_TOL * scale
    {
        return Err(Error::Lp(format!(
            "certificate failed: residual {primal_residual:.3e}, reduced cost {max_reduced_cost:.3e}, gap {duality_gap:.3e}"
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        optimum,
        solution: x,
        duals,
        iterations,
        primal_residual,
        max_reduced_cost,
        duality_gap,
    })
}
