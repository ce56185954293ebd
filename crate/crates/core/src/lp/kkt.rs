use serde::{Deserialize, Serialize};

use super::{LinearProgram, LpSolution, DUALITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Row activity outside its range.
    PrimalRow,
    /// Variable outside its bounds.
    PrimalBound,
    /// Reported reduced cost differs from `c - A^T y`.
    ReducedCostMismatch,
    /// Reduced cost sign inconsistent with where the variable sits.
    DualVariable,
    /// Row multiplier sign inconsistent with the row activity.
    DualRow,
    /// Reported objective differs from `c·x`.
    ObjectiveMismatch,
    /// Primal and dual objectives disagree.
    DualityGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktViolation {
    pub kind: ViolationKind,
    /// Row or variable index; zero for whole-problem records.
    pub index: usize,
    pub magnitude: f64,
}

/// Checks primal feasibility, dual feasibility and complementary slackness of
/// `sol` with the default relative tolerance.
pub fn verify_kkt(lp: &LinearProgram, sol: &LpSolution) -> Vec<KktViolation> {
    verify_kkt_with_tol(lp, sol, DUALITY_TOL)
}

pub fn verify_kkt_with_tol(lp: &LinearProgram, sol: &LpSolution, tol: f64) -> Vec<KktViolation> {
    let mut out = Vec::new();
    let mut push = |kind, index, magnitude: f64| {
        out.push(KktViolation {
            kind,
            index,
            magnitude,
        })
    };
    let x = &sol.primal;
    let y = &sol.duals;
    let n = lp.num_vars;

    let activity: Vec<f64> = lp.constraints.iter().map(|r| r.activity(x)).collect();
    for (i, row) in lp.constraints.iter().enumerate() {
        let v = row.violation(x);
        if v > tol * row.rhs.abs().max(1.0) {
            push(ViolationKind::PrimalRow, i, v);
        }
    }
    for j in 0..n {
        let v = (lp.lower[j] - x[j]).max(x[j] - lp.upper[j]);
        if v > tol * lp.lower[j].abs().max(lp.upper[j].abs()).clamp(1.0, 1e12) {
            push(ViolationKind::PrimalBound, j, v);
        }
    }

    // reduced costs recomputed from the row multipliers
    let mut rc = lp.objective.clone();
    for (i, row) in lp.constraints.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            rc[j] -= y[i] * a;
        }
    }
    let scale = lp.objective.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    let dtol = tol * scale;
    for j in 0..n {
        let diff = (rc[j] - sol.reduced_costs[j]).abs();
        if diff > dtol {
            push(ViolationKind::ReducedCostMismatch, j, diff);
        }
        let ptol = tol * x[j].abs().max(1.0);
        let above_lower = x[j] > lp.lower[j] + ptol;
        let below_upper = x[j] < lp.upper[j] - ptol;
        if above_lower && rc[j] > dtol {
            push(ViolationKind::DualVariable, j, rc[j]);
        }
        if below_upper && rc[j] < -dtol {
            push(ViolationKind::DualVariable, j, -rc[j]);
        }
    }
    for (i, row) in lp.constraints.iter().enumerate() {
        let (lo, hi) = row.range();
        let ptol = tol * row.rhs.abs().max(1.0);
        if activity[i] > lo + ptol && y[i] > dtol {
            push(ViolationKind::DualRow, i, y[i]);
        }
        if activity[i] < hi - ptol && y[i] < -dtol {
            push(ViolationKind::DualRow, i, -y[i]);
        }
    }

    let primal_obj = lp.objective_value(x);
    let obj_scale = primal_obj.abs().max(1.0);
    let mismatch = (primal_obj - sol.objective).abs();
    if mismatch > tol * obj_scale {
        push(ViolationKind::ObjectiveMismatch, 0, mismatch);
    }

    // Dual objective: each multiplier is charged at the bound it supports.
    // Multipliers within tolerance of zero are charged at the actual value.
    let charge = |mult: f64, value: f64, lo: f64, hi: f64| -> f64 {
        if mult.abs() <= dtol {
            mult * value
        } else if mult > 0.0 {
            mult * lo
        } else {
            mult * hi
        }
    };
    let mut dual_obj = 0.0;
    for j in 0..n {
        dual_obj += charge(rc[j], x[j], lp.lower[j], lp.upper[j]);
    }
    for (i, row) in lp.constraints.iter().enumerate() {
        let (lo, hi) = row.range();
        dual_obj += charge(y[i], activity[i], lo, hi);
    }
    let gap = (primal_obj - dual_obj).abs();
    if !gap.is_finite() || gap > tol * obj_scale {
        push(ViolationKind::DualityGap, 0, gap);
    }
    out
}
