//! Exact rational linear feasibility with strict inequalities.
//!
//! Strict rows `l > r` are relaxed to `l >= r + y` with one slack `y >= 0`
//! shared by all of them, and `y` is maximized with a two-phase simplex over
//! `BigRational` using Bland's rule. The strict system is solvable iff the
//! optimum is positive or unbounded.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
            Relation::Le => "<=",
            Relation::Lt => "<",
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Relation::Gt | Relation::Lt)
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub label: String,
    pub terms: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn lhs(&self, x: &[Rational]) -> Rational {
        self.terms
            .iter()
            .fold(rational::zero(), |acc, (v, c)| acc + c * &x[*v])
    }
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    vars: Vec<String>,
    index: HashMap<String, usize>,
    pub constraints: Vec<Constraint>,
    /// All variables are required to be non-negative.
    pub nonneg: bool,
}

impl Default for LinearSystem {
    fn default() -> Self {
        LinearSystem::new(true)
    }
}

impl LinearSystem {
    pub fn new(nonneg: bool) -> LinearSystem {
        LinearSystem {
            vars: Vec::new(),
            index: HashMap::new(),
            constraints: Vec::new(),
            nonneg,
        }
    }

    /// Declares a variable, returning the existing index for a known name.
    pub fn var(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        self.vars.push(name.clone());
        self.index.insert(name, self.vars.len() - 1);
        self.vars.len() - 1
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add(
        &mut self,
        label: impl Into<String>,
        terms: Vec<(usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) {
        self.constraints.push(Constraint {
            label: label.into(),
            terms,
            relation,
            rhs,
        });
    }

    pub fn has_strict(&self) -> bool {
        self.constraints.iter().any(|c| c.relation.is_strict())
    }

    /// Human-readable dump, one constraint per line.
    pub fn to_lp_text(&self) -> String {
        let mut out = String::new();
        let strict = self.has_strict();
        if strict {
            out.push_str("maximize\n  obj: y\n");
        } else {
            out.push_str("feasibility\n");
        }
        out.push_str("subject to\n");
        for c in &self.constraints {
            let mut lhs = String::new();
            for (i, (v, coef)) in c.terms.iter().enumerate() {
                let sign = if coef.is_negative() { "-" } else { "+" };
                if i == 0 && !coef.is_negative() {
                    let _ = write!(lhs, "{} {}", rational::format(coef), self.vars[*v]);
                } else {
                    let _ = write!(lhs, " {} {} {}", sign, rational::format(&coef.abs()), self.vars[*v]);
                }
            }
            if lhs.is_empty() {
                lhs.push('0');
            }
            let (rel, extra) = match c.relation {
                Relation::Gt => (">=", " + y"),
                Relation::Lt => ("<=", " - y"),
                r => (r.symbol(), ""),
            };
            let _ = writeln!(out, "  {}: {} {} {}{}", c.label, lhs, rel, rational::format(&c.rhs), extra);
        }
        out.push_str("bounds\n");
        if self.nonneg {
            out.push_str("  all variables >= 0\n");
        } else {
            out.push_str("  all variables free\n");
        }
        if strict {
            out.push_str("  y >= 0\n");
        }
        out.push_str("end\n");
        out
    }

    fn check(&self) -> Result<()> {
        for c in &self.constraints {
            if let Some((v, _)) = c.terms.iter().find(|(v, _)| *v >= self.vars.len()) {
                return Err(Error::MalformedSystem(format!(
                    "row {} references undeclared variable #{v}",
                    c.label
                )));
            }
        }
        Ok(())
    }

    /// Checks an assignment exactly: equalities with zero residue, weak rows
    /// hold, strict rows hold with margin at least `slack` (which must be
    /// positive when strict rows exist).
    pub fn satisfied_by(&self, x: &[Rational], slack: Option<&Rational>) -> bool {
        if x.len() != self.vars.len() {
            return false;
        }
        if self.nonneg && x.iter().any(|v| v.is_negative()) {
            return false;
        }
        let margin = slack.cloned().unwrap_or_else(rational::zero);
        if self.has_strict() && !margin.is_positive() {
            return false;
        }
        self.constraints.iter().all(|c| {
            let l = c.lhs(x);
            match c.relation {
                Relation::Eq => l == c.rhs,
                Relation::Ge => l >= c.rhs,
                Relation::Le => l <= c.rhs,
                Relation::Gt => l >= &c.rhs + &margin,
                Relation::Lt => l <= &c.rhs - &margin,
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    /// `slack` is the optimum `y*` (positive), or `None` without strict rows.
    Feasible {
        assignment: Vec<Rational>,
        slack: Option<Rational>,
    },
    /// The relaxation is empty, or its optimum slack is not positive.
    Infeasible { best_slack: Option<Rational> },
    /// The slack is unbounded; `assignment` is one member of the family,
    /// chosen with slack 1.
    SlackUnbounded { assignment: Vec<Rational> },
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible { .. })
    }

    pub fn assignment(&self) -> Option<&[Rational]> {
        match self {
            LpOutcome::Feasible { assignment, .. } | LpOutcome::SlackUnbounded { assignment } => {
                Some(assignment)
            }
            LpOutcome::Infeasible { .. } => None,
        }
    }

    /// The margin by which strict rows hold in the returned assignment.
    pub fn margin(&self) -> Option<Rational> {
        match self {
            LpOutcome::Feasible { slack, .. } => slack.clone(),
            LpOutcome::SlackUnbounded { .. } => Some(rational::one()),
            LpOutcome::Infeasible { .. } => None,
        }
    }
}

pub fn solve(system: &LinearSystem) -> Result<LpOutcome> {
    system.check()?;
    let strict = system.has_strict();
    match relaxation(system, None)? {
        Simplex::Infeasible => Ok(LpOutcome::Infeasible { best_slack: None }),
        Simplex::Optimal(x, y) => {
            if !strict {
                Ok(LpOutcome::Feasible {
                    assignment: x,
                    slack: None,
                })
            } else if y.is_positive() {
                Ok(LpOutcome::Feasible {
                    assignment: x,
                    slack: Some(y),
                })
            } else {
                Ok(LpOutcome::Infeasible {
                    best_slack: Some(y),
                })
            }
        }
        Simplex::Unbounded => match relaxation(system, Some(rational::one()))? {
            Simplex::Optimal(x, _) => Ok(LpOutcome::SlackUnbounded { assignment: x }),
            _ => unreachable!("capped relaxation of an unbounded problem"),
        },
    }
}

enum Simplex {
    Optimal(Vec<Rational>, Rational),
    Infeasible,
    Unbounded,
}

/// Standard-form rows `a.x = b` of a system (strict rows carry `-y`),
/// plus the column count, the column of `y` and whether variables are split.
struct StandardForm {
    rows: Vec<(Vec<(usize, Rational)>, Rational)>,
    ncols: usize,
    y_col: Option<usize>,
    split: bool,
    n: usize,
}

fn standard_form(system: &LinearSystem, cap: Option<Rational>) -> StandardForm {
    let n = system.n_vars();
    let split = !system.nonneg;
    let base_cols = if split { 2 * n } else { n };
    let strict = system.has_strict();
    let y_col = base_cols;
    let mut ncols = base_cols + usize::from(strict);
    let mut rows: Vec<(Vec<(usize, Rational)>, Rational)> = Vec::new();
    for c in &system.constraints {
        let mut terms: Vec<(usize, Rational)> = Vec::new();
        let sign = if matches!(c.relation, Relation::Le | Relation::Lt) {
            -rational::one()
        } else {
            rational::one()
        };
        for (v, coef) in &c.terms {
            let k = coef * &sign;
            terms.push((*v, k.clone()));
            if split {
                terms.push((n + v, -k));
            }
        }
        let rhs = &c.rhs * &sign;
        match c.relation {
            Relation::Eq => {}
            Relation::Ge | Relation::Le => {
                terms.push((ncols, -rational::one()));
                ncols += 1;
            }
            Relation::Gt | Relation::Lt => {
                terms.push((y_col, -rational::one()));
                terms.push((ncols, -rational::one()));
                ncols += 1;
            }
        }
        rows.push((terms, rhs));
    }
    if let (Some(cap), true) = (cap, strict) {
        rows.push((
            vec![(y_col, rational::one()), (ncols, rational::one())],
            cap,
        ));
        ncols += 1;
    }
    StandardForm {
        rows,
        ncols,
        y_col: strict.then_some(y_col),
        split,
        n,
    }
}

impl StandardForm {
    fn originals(&self, sol: &[Rational]) -> Vec<Rational> {
        (0..self.n)
            .map(|i| {
                if self.split {
                    &sol[i] - &sol[self.n + i]
                } else {
                    sol[i].clone()
                }
            })
            .collect()
    }
}

/// Maximizes `y` over the relaxation, optionally capped at `cap`.
fn relaxation(system: &LinearSystem, cap: Option<Rational>) -> Result<Simplex> {
    let form = standard_form(system, cap);
    let mut objective = vec![rational::zero(); form.ncols];
    if let Some(y) = form.y_col {
        objective[y] = -rational::one();
    }
    Ok(match minimize(&form.rows, form.ncols, &objective) {
        Phase::Infeasible => Simplex::Infeasible,
        Phase::Unbounded => Simplex::Unbounded,
        Phase::Optimal(sol) => {
            let y = form.y_col.map_or_else(rational::zero, |c| sol[c].clone());
            Simplex::Optimal(form.originals(&sol), y)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Optimum {
    Optimal {
        assignment: Vec<Rational>,
        value: Rational,
    },
    Infeasible,
    Unbounded,
}

/// Maximizes a linear objective over a system without strict rows.
pub fn maximize(system: &LinearSystem, objective: &[(usize, Rational)]) -> Result<Optimum> {
    system.check()?;
    if system.has_strict() {
        return Err(Error::MalformedSystem(
            "strict rows are not supported when optimizing".into(),
        ));
    }
    let form = standard_form(system, None);
    let mut cost = vec![rational::zero(); form.ncols];
    for (v, k) in objective {
        if *v >= form.n {
            return Err(Error::MalformedSystem(format!("objective references #{v}")));
        }
        cost[*v] -= k;
        if form.split {
            cost[form.n + v] += k;
        }
    }
    Ok(match minimize(&form.rows, form.ncols, &cost) {
        Phase::Infeasible => Optimum::Infeasible,
        Phase::Unbounded => Optimum::Unbounded,
        Phase::Optimal(sol) => {
            let assignment = form.originals(&sol);
            let value = objective
                .iter()
                .fold(rational::zero(), |acc, (v, k)| acc + k * &assignment[*v]);
            Optimum::Optimal { assignment, value }
        }
    })
}

enum Phase {
    Optimal(Vec<Rational>),
    Infeasible,
    Unbounded,
}

/// Dense two-phase simplex: minimize `c.x` subject to sparse rows `a.x = b`
/// and `x >= 0`.
fn minimize(rows: &[(Vec<(usize, Rational)>, Rational)], ncols: usize, c: &[Rational]) -> Phase {
    let m = rows.len();
    let width = ncols + m;
    let mut t: Vec<Vec<Rational>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rational> = Vec::with_capacity(m);
    for (i, (terms, b)) in rows.iter().enumerate() {
        let mut row = vec![rational::zero(); width];
        for (j, k) in terms {
            row[*j] += k;
        }
        let mut b = b.clone();
        if b.is_negative() {
            for v in row.iter_mut() {
                *v = -&*v;
            }
            b = -b;
        }
        row[ncols + i] = rational::one();
        t.push(row);
        rhs.push(b);
    }
    let mut basis: Vec<usize> = (ncols..ncols + m).collect();

    // Phase 1: minimize the sum of artificials.
    let mut cost = vec![rational::zero(); width];
    let mut value = rational::zero();
    for i in 0..m {
        for j in 0..ncols {
            if !t[i][j].is_zero() {
                cost[j] -= &t[i][j];
            }
        }
        value -= &rhs[i];
    }
    let allowed = |j: usize| j < ncols;
    if !run(&mut t, &mut rhs, &mut basis, &mut cost, &mut value, &allowed) {
        unreachable!("phase 1 is bounded below by zero");
    }
    if !value.is_zero() {
        return Phase::Infeasible;
    }
    // Drive remaining artificials out of the basis, dropping redundant rows.
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= ncols {
            if let Some(j) = (0..ncols).find(|&j| !t[i][j].is_zero()) {
                pivot(&mut t, &mut rhs, &mut cost, &mut value, i, j);
                basis[i] = j;
            } else {
                t.remove(i);
                rhs.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2.
    let mut cost: Vec<Rational> = (0..width)
        .map(|j| if j < ncols { c[j].clone() } else { rational::zero() })
        .collect();
    let mut value = rational::zero();
    for i in 0..t.len() {
        let cb = &c[basis[i]];
        if cb.is_zero() {
            continue;
        }
        for j in 0..ncols {
            if !t[i][j].is_zero() {
                cost[j] -= cb * &t[i][j];
            }
        }
        value -= cb * &rhs[i];
    }
    if !run(&mut t, &mut rhs, &mut basis, &mut cost, &mut value, &allowed) {
        return Phase::Unbounded;
    }
    let mut x = vec![rational::zero(); ncols];
    for (i, &b) in basis.iter().enumerate() {
        x[b] = rhs[i].clone();
    }
    Phase::Optimal(x)
}

/// Simplex iterations with Bland's rule. Returns false when unbounded.
fn run(
    t: &mut [Vec<Rational>],
    rhs: &mut [Rational],
    basis: &mut [usize],
    cost: &mut [Rational],
    value: &mut Rational,
    allowed: &dyn Fn(usize) -> bool,
) -> bool {
    loop {
        let Some(col) = (0..cost.len()).find(|&j| allowed(j) && cost[j].is_negative()) else {
            return true;
        };
        let mut best: Option<(usize, Rational)> = None;
        for i in 0..t.len() {
            if !t[i][col].is_positive() {
                continue;
            }
            let ratio = &rhs[i] / &t[i][col];
            let better = match &best {
                None => true,
                Some((bi, br)) => ratio < *br || (ratio == *br && basis[i] < basis[*bi]),
            };
            if better {
                best = Some((i, ratio));
            }
        }
        let Some((row, _)) = best else {
            return false;
        };
        pivot(t, rhs, cost, value, row, col);
        basis[row] = col;
    }
}

fn pivot(
    t: &mut [Vec<Rational>],
    rhs: &mut [Rational],
    cost: &mut [Rational],
    value: &mut Rational,
    row: usize,
    col: usize,
) {
    let p = t[row][col].clone();
    for v in t[row].iter_mut() {
        if !v.is_zero() {
            *v /= &p;
        }
    }
    rhs[row] /= &p;
    let nz: Vec<usize> = (0..t[row].len()).filter(|&j| !t[row][j].is_zero()).collect();
    let prow = t[row].clone();
    let prhs = rhs[row].clone();
    for i in 0..t.len() {
        if i == row || t[i][col].is_zero() {
            continue;
        }
        let f = t[i][col].clone();
        for &j in &nz {
            let d = &f * &prow[j];
            t[i][j] -= d;
        }
        rhs[i] -= &f * &prhs;
    }
    if !cost[col].is_zero() {
        let f = cost[col].clone();
        for &j in &nz {
            let d = &f * &prow[j];
            cost[j] -= d;
        }
        *value -= &f * &prhs;
    }
}
