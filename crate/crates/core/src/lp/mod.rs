//! Bounded-variable linear programming.
//!
//! Problems are stated as `minimize c·x` subject to sparse linear rows and
//! per-variable bounds. The solver is a revised simplex method that keeps
//! nonbasic variables at either bound, so reduced costs and row duals come
//! straight out of the final basis. Sign convention is minimization with
//! `r_j = c_j - y·A_j`.

mod kkt;
pub(crate) mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kkt::{verify_kkt, verify_kkt_with_tol, KktViolation, ViolationKind};

/// Primal feasibility tolerance used inside the simplex.
pub const FEAS_TOL: f64 = 1e-7;
/// Relative tolerance for duality checks.
pub const DUALITY_TOL: f64 = 1e-6;
/// Smallest pivot element the ratio tests accept.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

/// A sparse linear row `sum(coef * x[var]) REL rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Row activity at `x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed amount by which `x` violates the row; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }

    /// Activity range `[lo, hi]` implied by the relation.
    pub fn range(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Empty program over `num_vars` variables bounded in `[0, +inf)` with zero cost.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn with_objective(mut self, objective: Vec<f64>) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::InvalidProblem(format!(
                "vector lengths disagree with num_vars = {n}"
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidProblem(format!("objective[{j}] is not finite")));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidProblem(format!(
                    "variable {j} has bounds [{l}, {u}]"
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidProblem(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(Error::InvalidProblem(format!(
                        "row {i} references variable {j} of {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidProblem(format!(
                        "row {i} has non-finite coefficient on variable {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|r| r.violation(x))
            .fold(0.0, f64::max);
        let bounds = (0..self.num_vars)
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

/// Human-readable listing, one row per line. Used for bug reports.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn terms(f: &mut fmt::Formatter<'_>, coeffs: &[(usize, f64)]) -> fmt::Result {
            if coeffs.is_empty() {
                return write!(f, "0");
            }
            for (k, &(j, a)) in coeffs.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                let sign = if a < 0.0 { '-' } else { '+' };
                write!(f, "{sign} {} x{j}", a.abs())?;
            }
            Ok(())
        }
        writeln!(f, "minimize")?;
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        write!(f, "  obj: ")?;
        terms(f, &obj)?;
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for (i, row) in self.constraints.iter().enumerate() {
            write!(f, "  r{i}: ")?;
            terms(f, &row.coeffs)?;
            writeln!(f, " {} {}", row.relation, row.rhs)?;
        }
        writeln!(f, "bounds")?;
        for j in 0..self.num_vars {
            writeln!(f, "  {} <= x{j} <= {}", self.lower[j], self.upper[j])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Position of a variable relative to the final basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint row.
    pub duals: Vec<f64>,
    /// `c_j - y·A_j` per structural variable.
    pub reduced_costs: Vec<f64>,
    /// Statuses of structural variables followed by one logical per row.
    pub basis: Vec<VarStatus>,
    pub iterations: usize,
}

impl LpSolution {
    pub(crate) fn without_solution(status: LpStatus, lp: &LinearProgram, iterations: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; lp.num_vars],
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            duals: vec![0.0; lp.constraints.len()],
            reduced_costs: vec![0.0; lp.num_vars],
            basis: Vec::new(),
            iterations,
        }
    }
}

/// Solves `lp` from a slack basis.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let mut engine = simplex::Simplex::new(lp);
    engine.solve_to_solution(lp)
}
