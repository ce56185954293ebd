//! VMCP instances, the MILP built from them, and consolidation plans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorInfo;
use crate::lp::{LinearProgram, Relation};
use crate::mip::{MipProblem, VarKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmSpec {
    /// Demand per resource, in the order of `Instance::resources`.
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    /// Catalog type, 1-based.
    pub type_id: usize,
    pub capacity: Vec<f64>,
    /// Maximum power draw in watts.
    pub p_max: f64,
}

/// Cost coefficients. Matrices are indexed `[vm type][server]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub run: Vec<f64>,
    pub assign: Vec<Vec<f64>>,
    pub mig: Vec<Vec<f64>>,
    pub new: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
    pub resources: Vec<String>,
    pub vm_types: Vec<VmSpec>,
    pub servers: Vec<ServerSpec>,
    /// Current allocation, `n[i][j]` VMs of type `i` on server `j`.
    pub n: Vec<Vec<u64>>,
    pub d_new: Vec<u64>,
    pub costs: Costs,
}

impl Instance {
    pub fn num_vm_types(&self) -> usize {
        self.vm_types.len()
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    /// Old VMs of type `i` across all servers.
    pub fn d(&self, i: usize) -> u64 {
        self.n[i].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (ni, nj, nr) = (self.num_vm_types(), self.num_servers(), self.resources.len());
        let dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got == want {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!("{what}: expected {want}, got {got}")))
            }
        };
        let nonneg = |what: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what} must be finite and non-negative, got {v}")))
            }
        };
        for (i, vm) in self.vm_types.iter().enumerate() {
            dim(&format!("vm type {i} demand"), vm.demand.len(), nr)?;
            vm.demand.iter().try_for_each(|&u| nonneg("demand", u))?;
        }
        for (j, s) in self.servers.iter().enumerate() {
            dim(&format!("server {j} capacity"), s.capacity.len(), nr)?;
            s.capacity.iter().try_for_each(|&c| nonneg("capacity", c))?;
            nonneg("p_max", s.p_max)?;
        }
        dim("rows of n", self.n.len(), ni)?;
        for row in &self.n {
            dim("columns of n", row.len(), nj)?;
        }
        dim("d_new", self.d_new.len(), ni)?;
        dim("run costs", self.costs.run.len(), nj)?;
        self.costs.run.iter().try_for_each(|&c| nonneg("run cost", c))?;
        for (name, m) in [
            ("assign", &self.costs.assign),
            ("mig", &self.costs.mig),
            ("new", &self.costs.new),
        ] {
            dim(&format!("rows of {name} costs"), m.len(), ni)?;
            for row in m {
                dim(&format!("columns of {name} costs"), row.len(), nj)?;
                row.iter().try_for_each(|&c| nonneg(name, c))?;
            }
        }
        Ok(())
    }

    /// Trivial upper bound on `x[i][j]`: the number of old VMs of type `i`,
    /// capped by how many fit on server `j`. Zero demands do not restrict.
    pub fn upper_bound_v(&self, i: usize, j: usize) -> u64 {
        let mut v = self.d(i);
        for (r, &u) in self.vm_types[i].demand.iter().enumerate() {
            if u > 0.0 {
                let fit = (self.servers[j].capacity[r] / u).floor();
                v = v.min(fit.max(0.0) as u64);
            }
        }
        v
    }
}

/// How the allocation term of the objective is costed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// `c_assign · x`, the allocation decided by the plan.
    #[default]
    Allocation,
    /// `c_assign · n`, a constant offset taken literally from the formulation
    /// as printed. Kept for audits.
    LiteralOffset,
}

/// Column layout of the VMCP MILP: `x`, then `z`, then `x_new`, then `y`,
/// each matrix block row-major over (vm type, server).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarMap {
    pub num_vm_types: usize,
    pub num_servers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    X(usize, usize),
    Z(usize, usize),
    XNew(usize, usize),
    Y(usize),
}

impl VarMap {
    fn block(&self) -> usize {
        self.num_vm_types * self.num_servers
    }

    pub fn x(&self, i: usize, j: usize) -> usize {
        i * self.num_servers + j
    }

    pub fn z(&self, i: usize, j: usize) -> usize {
        self.block() + i * self.num_servers + j
    }

    pub fn x_new(&self, i: usize, j: usize) -> usize {
        2 * self.block() + i * self.num_servers + j
    }

    pub fn y(&self, j: usize) -> usize {
        3 * self.block() + j
    }

    pub fn num_vars(&self) -> usize {
        3 * self.block() + self.num_servers
    }

    /// Indices of the server activation binaries.
    pub fn binaries(&self) -> std::ops::Range<usize> {
        3 * self.block()..self.num_vars()
    }

    /// Indices of the general integer variables (`x`, `z`, `x_new`).
    pub fn integers(&self) -> std::ops::Range<usize> {
        0..3 * self.block()
    }

    pub fn decode(&self, k: usize) -> Option<VarRef> {
        let b = self.block();
        let s = self.num_servers;
        if k >= self.num_vars() {
            None
        } else if k >= 3 * b {
            Some(VarRef::Y(k - 3 * b))
        } else {
            let (blk, r) = (k / b, k % b);
            let (i, j) = (r / s, r % s);
            Some(match blk {
                0 => VarRef::X(i, j),
                1 => VarRef::Z(i, j),
                _ => VarRef::XNew(i, j),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmcpModel {
    pub problem: MipProblem,
    pub vars: VarMap,
    /// Constant added to the MILP objective to obtain the plan cost.
    pub objective_offset: f64,
}

pub fn build_mip(inst: &Instance) -> VmcpModel {
    build_mip_with(inst, ObjectiveMode::Allocation)
}

/// Rows are laid out as capacity `(r, j)`, migration `(i, j)`, old demand
/// `i`, new demand `i`.
pub fn build_mip_with(inst: &Instance, mode: ObjectiveMode) -> VmcpModel {
    let (ni, nj) = (inst.num_vm_types(), inst.num_servers());
    let vars = VarMap {
        num_vm_types: ni,
        num_servers: nj,
    };
    let nv = vars.num_vars();
    let mut objective = vec![0.0; nv];
    let mut upper = vec![f64::INFINITY; nv];
    let mut kinds = vec![VarKind::Integer; nv];
    let mut offset = 0.0;
    for i in 0..ni {
        for j in 0..nj {
            match mode {
                ObjectiveMode::Allocation => objective[vars.x(i, j)] = inst.costs.assign[i][j],
                ObjectiveMode::LiteralOffset => offset += inst.costs.assign[i][j] * inst.n[i][j] as f64,
            }
            objective[vars.z(i, j)] = inst.costs.mig[i][j];
            objective[vars.x_new(i, j)] = inst.costs.new[i][j];
            upper[vars.x(i, j)] = inst.upper_bound_v(i, j) as f64;
        }
    }
    for j in 0..nj {
        objective[vars.y(j)] = inst.costs.run[j];
        upper[vars.y(j)] = 1.0;
        kinds[vars.y(j)] = VarKind::Binary;
    }
    let mut lp = LinearProgram::new(nv)
        .with_objective(objective)
        .with_bounds(vec![0.0; nv], upper);
    for r in 0..inst.resources.len() {
        for j in 0..nj {
            let mut coeffs = Vec::with_capacity(2 * ni + 1);
            for i in 0..ni {
                let u = inst.vm_types[i].demand[r];
                if u != 0.0 {
                    coeffs.push((vars.x(i, j), u));
                    coeffs.push((vars.x_new(i, j), u));
                }
            }
            coeffs.push((vars.y(j), -inst.servers[j].capacity[r]));
            lp.add_constraint(coeffs, Relation::Le, 0.0);
        }
    }
    for i in 0..ni {
        for j in 0..nj {
            lp.add_constraint(
                vec![(vars.x(i, j), 1.0), (vars.z(i, j), -1.0)],
                Relation::Le,
                inst.n[i][j] as f64,
            );
        }
    }
    for i in 0..ni {
        lp.add_constraint((0..nj).map(|j| (vars.x(i, j), 1.0)).collect(), Relation::Eq, inst.d(i) as f64);
    }
    for i in 0..ni {
        lp.add_constraint(
            (0..nj).map(|j| (vars.x_new(i, j), 1.0)).collect(),
            Relation::Eq,
            inst.d_new[i] as f64,
        );
    }
    VmcpModel {
        problem: MipProblem::new(lp, kinds),
        vars,
        objective_offset: offset,
    }
}

/// A consolidation plan. Matrices are indexed `[vm type][server]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub x: Vec<Vec<u64>>,
    pub y: Vec<u64>,
    pub z: Vec<Vec<u64>>,
    pub x_new: Vec<Vec<u64>>,
}

impl Plan {
    pub fn zeros(num_vm_types: usize, num_servers: usize) -> Self {
        let m = vec![vec![0; num_servers]; num_vm_types];
        Self {
            x: m.clone(),
            y: vec![0; num_servers],
            z: m.clone(),
            x_new: m,
        }
    }

    /// Reads a plan from a MILP solution vector, rounding to integers.
    pub fn from_solution(vars: &VarMap, sol: &[f64]) -> Self {
        let get = |k: usize| sol[k].round().max(0.0) as u64;
        let mut p = Self::zeros(vars.num_vm_types, vars.num_servers);
        for i in 0..vars.num_vm_types {
            for j in 0..vars.num_servers {
                p.x[i][j] = get(vars.x(i, j));
                p.z[i][j] = get(vars.z(i, j));
                p.x_new[i][j] = get(vars.x_new(i, j));
            }
        }
        for j in 0..vars.num_servers {
            p.y[j] = get(vars.y(j));
        }
        p
    }

    /// The plan as a MILP solution vector.
    pub fn to_solution(&self, vars: &VarMap) -> Vec<f64> {
        let mut v = vec![0.0; vars.num_vars()];
        for i in 0..vars.num_vm_types {
            for j in 0..vars.num_servers {
                v[vars.x(i, j)] = self.x[i][j] as f64;
                v[vars.z(i, j)] = self.z[i][j] as f64;
                v[vars.x_new(i, j)] = self.x_new[i][j] as f64;
            }
        }
        for j in 0..vars.num_servers {
            v[vars.y(j)] = self.y[j] as f64;
        }
        v
    }

    fn check_dims(&self, inst: &Instance) -> Result<()> {
        let (ni, nj) = (inst.num_vm_types(), inst.num_servers());
        let ok = |m: &Vec<Vec<u64>>| m.len() == ni && m.iter().all(|r| r.len() == nj);
        if ok(&self.x) && ok(&self.z) && ok(&self.x_new) && self.y.len() == nj {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "plan does not match an instance with {ni} vm types and {nj} servers"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintFamily {
    /// Resource capacity of an active server, indices `(r, j)`.
    Capacity,
    /// Migration count covers growth over the current allocation, `(i, j)`.
    Migration,
    /// All old VMs of a type are placed, `(i)`.
    OldDemand,
    /// All new VMs of a type are placed, `(i)`.
    NewDemand,
    /// `x[i][j]` within its trivial upper bound, `(i, j)`.
    UpperBound,
    /// Activation is 0 or 1, `(j)`.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub family: ConstraintFamily,
    pub indices: Vec<usize>,
    /// `rhs - lhs` for inequalities (negative when violated); signed
    /// difference for equalities.
    pub slack: f64,
}

/// Re-evaluates every constraint family on `plan`. Empty means feasible.
pub fn check_plan(inst: &Instance, plan: &Plan) -> Result<Vec<PlanViolation>> {
    plan.check_dims(inst)?;
    let (ni, nj) = (inst.num_vm_types(), inst.num_servers());
    let mut out = Vec::new();
    for j in 0..nj {
        if plan.y[j] > 1 {
            out.push(PlanViolation {
                family: ConstraintFamily::Binary,
                indices: vec![j],
                slack: 1.0 - plan.y[j] as f64,
            });
        }
    }
    for r in 0..inst.resources.len() {
        for j in 0..nj {
            let load: f64 = (0..ni)
                .map(|i| inst.vm_types[i].demand[r] * (plan.x[i][j] + plan.x_new[i][j]) as f64)
                .sum();
            let slack = inst.servers[j].capacity[r] * plan.y[j] as f64 - load;
            if slack < 0.0 {
                out.push(PlanViolation {
                    family: ConstraintFamily::Capacity,
                    indices: vec![r, j],
                    slack,
                });
            }
        }
    }
    for i in 0..ni {
        for j in 0..nj {
            let slack = plan.z[i][j] as i128 + inst.n[i][j] as i128 - plan.x[i][j] as i128;
            if slack < 0 {
                out.push(PlanViolation {
                    family: ConstraintFamily::Migration,
                    indices: vec![i, j],
                    slack: slack as f64,
                });
            }
            let v = inst.upper_bound_v(i, j);
            if plan.x[i][j] > v {
                out.push(PlanViolation {
                    family: ConstraintFamily::UpperBound,
                    indices: vec![i, j],
                    slack: v as f64 - plan.x[i][j] as f64,
                });
            }
        }
    }
    for i in 0..ni {
        let placed: u64 = plan.x[i].iter().sum();
        if placed != inst.d(i) {
            out.push(PlanViolation {
                family: ConstraintFamily::OldDemand,
                indices: vec![i],
                slack: inst.d(i) as f64 - placed as f64,
            });
        }
        let placed_new: u64 = plan.x_new[i].iter().sum();
        if placed_new != inst.d_new[i] {
            out.push(PlanViolation {
                family: ConstraintFamily::NewDemand,
                indices: vec![i],
                slack: inst.d_new[i] as f64 - placed_new as f64,
            });
        }
    }
    Ok(out)
}

pub fn plan_cost(inst: &Instance, plan: &Plan) -> Result<f64> {
    plan_cost_with(inst, plan, ObjectiveMode::Allocation)
}

pub fn plan_cost_with(inst: &Instance, plan: &Plan, mode: ObjectiveMode) -> Result<f64> {
    plan.check_dims(inst)?;
    let c = &inst.costs;
    let mut total = 0.0;
    for i in 0..inst.num_vm_types() {
        for j in 0..inst.num_servers() {
            let alloc = match mode {
                ObjectiveMode::Allocation => plan.x[i][j],
                ObjectiveMode::LiteralOffset => inst.n[i][j],
            };
            total += c.assign[i][j] * alloc as f64
                + c.mig[i][j] * plan.z[i][j] as f64
                + c.new[i][j] * plan.x_new[i][j] as f64;
        }
    }
    for j in 0..inst.num_servers() {
        total += c.run[j] * plan.y[j] as f64;
    }
    Ok(total)
}
