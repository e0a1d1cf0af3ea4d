//! Exact 0-1 integer linear programming.
//!
//! Programs have the form `minimize c·x subject to A·x <= b, x ∈ {0,1}^N`.
//! [`solve`] is a depth-first branch and bound; [`solve_exhaustive`] walks all
//! `2^N` assignments and serves as the reference for small programs.
//!
//! Both solvers share the leaf arithmetic ([`ZeroOneProgram::objective_of`],
//! [`ZeroOneProgram::is_satisfied`]) and the same total order on solutions:
//! lower objective first, then the lexicographically smallest assignment
//! (`false < true`). Pruning in branch and bound is conservative so both
//! return the same assignment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest program [`solve_exhaustive`] accepts.
pub const EXHAUSTIVE_MAX_VARS: usize = 24;

const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum IlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite coefficient: {0}")]
    NonFinite(String),
    #[error("{vars} variables exceed the exhaustive limit of {max}")]
    TooLarge { vars: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZeroOneProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub variable_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution {
    pub status: Status,
    /// Empty when infeasible.
    pub assignment: Vec<bool>,
    /// `+inf` when infeasible.
    pub objective_value: f64,
}

impl IlpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    fn infeasible() -> Self {
        IlpSolution {
            status: Status::Infeasible,
            assignment: Vec::new(),
            objective_value: f64::INFINITY,
        }
    }
}

impl ZeroOneProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let variable_names = (0..objective.len()).map(|i| format!("x{i}")).collect();
        ZeroOneProgram {
            objective,
            constraints: Vec::new(),
            variable_names,
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.variable_names = names;
        self
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, coeffs: Vec<f64>, bound: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            bound,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), IlpError> {
        let n = self.objective.len();
        if self.variable_names.len() != n {
            return Err(IlpError::Dimension(format!(
                "{} variable names for {n} variables",
                self.variable_names.len()
            )));
        }
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(IlpError::NonFinite(format!("objective[{i}]")));
        }
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return Err(IlpError::Dimension(format!(
                    "constraint `{}` has {} coefficients for {n} variables",
                    c.name,
                    c.coeffs.len()
                )));
            }
            if !c.bound.is_finite() {
                return Err(IlpError::NonFinite(format!("bound of `{}`", c.name)));
            }
            if let Some(i) = c.coeffs.iter().position(|a| !a.is_finite()) {
                return Err(IlpError::NonFinite(format!("`{}`[{i}]", c.name)));
            }
        }
        Ok(())
    }

    /// `c·x`, summed in index order.
    pub fn objective_of(&self, x: &[bool]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .filter(|(_, &on)| on)
            .map(|(c, _)| *c)
            .sum()
    }

    /// Whether `x` satisfies constraint `j`, to `1e-9` relative / `1e-12`
    /// absolute tolerance.
    pub fn constraint_satisfied(&self, j: usize, x: &[bool]) -> bool {
        let c = &self.constraints[j];
        let (mut lhs, mut mag) = (0.0, 0.0);
        for (a, _) in c.coeffs.iter().zip(x).filter(|(_, &on)| on) {
            lhs += a;
            mag += a.abs();
        }
        lhs <= c.bound + REL_TOL * c.bound.abs() + ABS_TOL * (1.0 + mag)
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        (0..self.constraints.len()).all(|j| self.constraint_satisfied(j, x))
    }

    /// Renders the program in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self
            .variable_names
            .iter()
            .enumerate()
            .map(|(i, n)| lp_name(n, i))
            .collect();
        let linear = |coeffs: &[f64]| {
            let mut s = String::new();
            for (c, name) in coeffs.iter().zip(&names) {
                if *c != 0.0 {
                    let sign = if *c < 0.0 { '-' } else { '+' };
                    let _ = write!(s, " {sign} {} {name}", c.abs());
                }
            }
            if s.is_empty() {
                s.push_str(" 0 ");
                s.push_str(names.first().map(String::as_str).unwrap_or("x0"));
            }
            s
        };
        let mut out = String::from("\\ 0-1 program\nMinimize\n obj:");
        out.push_str(&linear(&self.objective));
        out.push_str("\nSubject To\n");
        for (j, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(
                out,
                " {}:{} <= {}",
                lp_name(&c.name, j),
                linear(&c.coeffs),
                c.bound
            );
        }
        out.push_str("Binary\n");
        for n in &names {
            let _ = writeln!(out, " {n}");
        }
        out.push_str("End\n");
        out
    }
}

fn lp_name(raw: &str, idx: usize) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.chars().next() {
        Some(c) if c.is_ascii_alphabetic() => cleaned,
        Some(_) => format!("v_{cleaned}"),
        None => format!("v{idx}"),
    }
}

/// Replaces `best` with `cand` if `cand` ranks earlier.
fn improves(cand_obj: f64, cand: &[bool], best: &Option<(f64, Vec<bool>)>) -> bool {
    match best {
        None => true,
        Some((obj, x)) => cand_obj < *obj || (cand_obj == *obj && cand < x.as_slice()),
    }
}

/// Reference solver: enumerates every assignment in lexicographic order.
pub fn solve_exhaustive(program: &ZeroOneProgram) -> Result<IlpSolution, IlpError> {
    program.validate()?;
    let n = program.num_vars();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(IlpError::TooLarge {
            vars: n,
            max: EXHAUSTIVE_MAX_VARS,
        });
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut x = vec![false; n];
    for mask in 0u32..(1u32 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (mask >> (n - 1 - i)) & 1 == 1;
        }
        if !program.is_satisfied(&x) {
            continue;
        }
        let obj = program.objective_of(&x);
        if improves(obj, &x, &best) {
            best = Some((obj, x.clone()));
        }
    }
    Ok(match best {
        Some((objective_value, assignment)) => IlpSolution {
            status: Status::Optimal,
            assignment,
            objective_value,
        },
        None => IlpSolution::infeasible(),
    })
}

/// One constraint row prepared for bounding: rescaled to unit magnitude.
struct Row {
    coeffs: Vec<f64>,
    bound: f64,
    /// Slack under which a node's minimum left-hand side still counts as
    /// feasible; covers the leaf tolerance plus rounding.
    slack: f64,
    /// `suffix_min[k] = Σ_{i >= k} min(0, a_i)`
    suffix_min: Vec<f64>,
}

struct Search<'a> {
    program: &'a ZeroOneProgram,
    rows: Vec<Row>,
    suffix_min_obj: Vec<f64>,
    x: Vec<bool>,
    lhs: Vec<f64>,
    best: Option<(f64, Vec<bool>)>,
    stop_at_first: bool,
    scratch: Vec<(f64, f64)>,
}

impl<'a> Search<'a> {
    fn new(program: &'a ZeroOneProgram, stop_at_first: bool) -> Self {
        let n = program.num_vars();
        let rows = program
            .constraints
            .iter()
            .map(|c| {
                let scale = c
                    .coeffs
                    .iter()
                    .fold(c.bound.abs(), |m, a| m.max(a.abs()))
                    .max(f64::MIN_POSITIVE);
                let coeffs: Vec<f64> = c.coeffs.iter().map(|a| a / scale).collect();
                let bound = c.bound / scale;
                let mag: f64 = coeffs.iter().map(|a| a.abs()).sum();
                let slack = 2.0 * (REL_TOL * bound.abs() + ABS_TOL * (1.0 + mag) + ABS_TOL / scale);
                let mut suffix_min = vec![0.0; n + 1];
                for i in (0..n).rev() {
                    suffix_min[i] = suffix_min[i + 1] + coeffs[i].min(0.0);
                }
                Row {
                    coeffs,
                    bound,
                    slack,
                    suffix_min,
                }
            })
            .collect::<Vec<_>>();
        let mut suffix_min_obj = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix_min_obj[i] = suffix_min_obj[i + 1] + program.objective[i].min(0.0);
        }
        let m = rows.len();
        Search {
            program,
            rows,
            suffix_min_obj,
            x: vec![false; n],
            lhs: vec![0.0; m],
            best: None,
            stop_at_first,
            scratch: Vec::with_capacity(n),
        }
    }

    fn done(&self) -> bool {
        self.stop_at_first && self.best.is_some()
    }

    /// Lower bound on the objective of free variables `k..`, or `None` if the
    /// node is provably infeasible.
    fn bound(&mut self, k: usize) -> Option<f64> {
        let c = &self.program.objective;
        let mut best = self.suffix_min_obj[k];
        for (row, lhs) in self.rows.iter().zip(&self.lhs) {
            let residual = row.bound - lhs;
            if row.suffix_min[k] > residual + row.slack {
                return None;
            }
            // LP relaxation of this row alone: start from the unconstrained
            // optimum and buy back the excess at the cheapest rate.
            let mut excess = -residual;
            for (ci, a) in c[k..].iter().zip(&row.coeffs[k..]) {
                if *ci < 0.0 {
                    excess += a;
                }
            }
            if excess <= 0.0 {
                continue;
            }
            self.scratch.clear();
            for (&ci, &a) in c[k..].iter().zip(&row.coeffs[k..]) {
                if ci < 0.0 && a > 0.0 {
                    self.scratch.push((-ci / a, a));
                } else if ci >= 0.0 && a < 0.0 {
                    self.scratch.push((ci / -a, -a));
                }
            }
            self.scratch.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut cost = 0.0;
            let mut need = excess;
            for &(rate, amount) in &self.scratch {
                let take = amount.min(need);
                cost += rate * take;
                need -= take;
                if need <= 0.0 {
                    break;
                }
            }
            if need > row.slack {
                return None;
            }
            best = best.max(self.suffix_min_obj[k] + cost);
        }
        Some(best)
    }

    fn descend(&mut self, k: usize, fixed_obj: f64) {
        if self.done() {
            return;
        }
        let n = self.x.len();
        if k == n {
            if self.program.is_satisfied(&self.x) {
                let obj = self.program.objective_of(&self.x);
                if improves(obj, &self.x, &self.best) {
                    self.best = Some((obj, self.x.clone()));
                }
            }
            return;
        }
        let Some(rest) = self.bound(k) else { return };
        if let Some((inc, _)) = &self.best {
            let lower = fixed_obj + rest;
            let tol = REL_TOL * (1.0 + inc.abs().max(lower.abs()));
            if lower > inc + tol {
                return;
            }
        }
        let preferred = self.program.objective[k] < 0.0;
        for value in [preferred, !preferred] {
            self.x[k] = value;
            if value {
                for (row, lhs) in self.rows.iter().zip(self.lhs.iter_mut()) {
                    *lhs += row.coeffs[k];
                }
            }
            let obj = fixed_obj
                + if value {
                    self.program.objective[k]
                } else {
                    0.0
                };
            self.descend(k + 1, obj);
            if value {
                for (row, lhs) in self.rows.iter().zip(self.lhs.iter_mut()) {
                    *lhs -= row.coeffs[k];
                }
            }
            if self.done() {
                break;
            }
        }
        self.x[k] = false;
    }
}

/// Exact branch and bound.
pub fn solve(program: &ZeroOneProgram) -> Result<IlpSolution, IlpError> {
    program.validate()?;
    let mut search = Search::new(program, false);
    search.descend(0, 0.0);
    Ok(match search.best {
        Some((objective_value, assignment)) => IlpSolution {
            status: Status::Optimal,
            assignment,
            objective_value,
        },
        None => IlpSolution::infeasible(),
    })
}

/// Whether some binary vector satisfies every constraint.
pub fn is_feasible(program: &ZeroOneProgram) -> Result<bool, IlpError> {
    program.validate()?;
    let mut search = Search::new(program, true);
    search.descend(0, 0.0);
    Ok(search.best.is_some())
}

/// Indices of an irreducible infeasible subset of the constraints, found by
/// a deletion filter in index order. Empty when the program is feasible.
pub fn infeasible_subset(program: &ZeroOneProgram) -> Result<Vec<usize>, IlpError> {
    if is_feasible(program)? {
        return Ok(Vec::new());
    }
    let mut keep: Vec<usize> = (0..program.constraints.len()).collect();
    let mut i = 0;
    while i < keep.len() {
        let mut trial = program.clone();
        trial.constraints = keep
            .iter()
            .enumerate()
            .filter(|&(pos, _)| pos != i)
            .map(|(_, &j)| program.constraints[j].clone())
            .collect();
        if is_feasible(&trial)? {
            i += 1;
        } else {
            keep.remove(i);
        }
    }
    Ok(keep)
}
