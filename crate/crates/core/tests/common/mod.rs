//! Independent oracles shared by the integration tests. Nothing here calls
//! into the simplex or branch-and-bound code.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use vmc_core::lp::{LinearProgram, Relation};
use vmc_core::generator::{catalog, derive_costs, PowerModel, RESOURCES};
use vmc_core::mip::{MipProblem, VarKind};
use vmc_core::model::{Instance, ServerSpec, VmSpec};

/// Random LP that is feasible by construction: rows are built around a point
/// inside the box. Variables with an infinite upper bound get a non-negative
/// cost so the objective stays bounded below.
pub fn random_feasible_lp<R: Rng>(rng: &mut R, max_vars: usize, max_rows: usize, all_finite: bool) -> LinearProgram {
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(0..=max_rows);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut objective = Vec::with_capacity(n);
    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let l = -(rng.random_range(0..=3) as f64);
        let width = rng.random_range(1..=6) as f64;
        let open = !all_finite && rng.random_bool(0.2);
        lower.push(l);
        upper.push(if open { f64::INFINITY } else { l + width });
        let c = rng.random_range(-10..=10) as f64;
        objective.push(if open { c.abs() } else { c });
        x0.push(l + (rng.random_range(0..=(2.0 * width) as i64) as f64) / 2.0);
    }
    let mut lp = LinearProgram::new(n)
        .with_objective(objective)
        .with_bounds(lower, upper);
    for _ in 0..m {
        let density = rng.random_range(0.2..0.8);
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(density) {
                let a = rng.random_range(-5..=5) as f64;
                if a != 0.0 {
                    coeffs.push((j, a));
                }
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let slack = if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0..=8) as f64 };
        let (rel, rhs) = match rng.random_range(0..5) {
            0 => (Relation::Eq, act),
            1 | 2 => (Relation::Ge, act - slack),
            _ => (Relation::Le, act + slack),
        };
        lp.add_constraint(coeffs, rel, rhs);
    }
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    (0..lp.num_vars).all(|j| x[j] >= lp.lower[j] - tol && x[j] <= lp.upper[j] + tol)
        && lp
            .constraints
            .iter()
            .all(|r| r.violation(x) <= tol * r.rhs.abs().max(1.0))
}

/// Minimum of the LP over all vertices, found by solving every square system
/// of active hyperplanes. Requires finite bounds. `None` when infeasible.
pub fn vertex_enumeration_min(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars;
    // every row and every bound is a candidate active hyperplane; equality
    // rows are enforced by the feasibility check
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in &lp.constraints {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coeffs {
            a[j] += v;
        }
        planes.push((a, r.rhs));
    }
    for j in 0..n {
        assert!(lp.lower[j].is_finite() && lp.upper[j].is_finite());
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    best_over_subsets(lp, &[], &planes, n)
}

fn best_over_subsets(
    lp: &LinearProgram,
    forced: &[(Vec<f64>, f64)],
    optional: &[(Vec<f64>, f64)],
    need: usize,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..need).collect();
    let k = optional.len();
    if need > k {
        return None;
    }
    loop {
        let mut a: Vec<Vec<f64>> = forced.iter().map(|h| h.0.clone()).collect();
        let mut b: Vec<f64> = forced.iter().map(|h| h.1).collect();
        for &i in &idx {
            a.push(optional[i].0.clone());
            b.push(optional[i].1);
        }
        if let Some(x) = solve_square(a, b) {
            if feasible(lp, &x, 1e-9) {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + k - need {
                break;
            }
            if i == 0 && idx[0] == k - need {
                return best;
            }
        }
        idx[i] += 1;
        for t in i + 1..need {
            idx[t] = idx[t - 1] + 1;
        }
        if need == 0 {
            return best;
        }
    }
}

/// Exact minimum of a pure-integer problem by depth-first enumeration of the
/// integer points. Partial assignments are discarded only when interval
/// arithmetic proves a row unsatisfiable or the objective cannot beat the
/// best point found. Continuous variables must be absent.
pub fn enumerate_integer_min(p: &MipProblem) -> Option<f64> {
    let lp = p.to_lp();
    let n = lp.num_vars;
    assert!(p.integrality.iter().all(|k| *k != VarKind::Continuous));
    let lo: Vec<i64> = (0..n).map(|j| lp.lower[j].ceil() as i64).collect();
    let hi: Vec<i64> = (0..n).map(|j| lp.upper[j].floor() as i64).collect();
    if (0..n).any(|j| lo[j] > hi[j]) {
        return None;
    }
    let mut rows: Vec<Row> = lp
        .constraints
        .iter()
        .map(|r| {
            let (l, h) = r.range();
            (r.coeffs.clone(), l, h)
        })
        .collect();
    rows.iter_mut().for_each(|r| r.0.retain(|e| e.1 != 0.0));
    let mut best = f64::INFINITY;
    let mut x = vec![0i64; n];
    enumerate_rec(&lp, &rows, &lo, &hi, 0, &mut x, &mut best);
    best.is_finite().then_some(best)
}

/// Sparse coefficients with lower and upper row bounds.
type Row = (Vec<(usize, f64)>, f64, f64);

fn enumerate_rec(
    lp: &LinearProgram,
    rows: &[Row],
    lo: &[i64],
    hi: &[i64],
    depth: usize,
    x: &mut Vec<i64>,
    best: &mut f64,
) {
    let n = lp.num_vars;
    // interval checks with variables >= depth still free
    for (coeffs, l, h) in rows {
        let (mut min, mut max) = (0.0, 0.0);
        for &(j, a) in coeffs {
            if j < depth {
                min += a * x[j] as f64;
                max += a * x[j] as f64;
            } else {
                let (u, v) = (a * lo[j] as f64, a * hi[j] as f64);
                min += u.min(v);
                max += u.max(v);
            }
        }
        if min > h + 1e-9 || max < l - 1e-9 {
            return;
        }
    }
    let mut obj_min = 0.0;
    for j in 0..n {
        let c = lp.objective[j];
        obj_min += if j < depth {
            c * x[j] as f64
        } else {
            (c * lo[j] as f64).min(c * hi[j] as f64)
        };
    }
    if obj_min >= *best - 1e-9 {
        return;
    }
    if depth == n {
        *best = obj_min;
        return;
    }
    // try the cheaper end first
    let vals: Vec<i64> = if lp.objective[depth] >= 0.0 {
        (lo[depth]..=hi[depth]).collect()
    } else {
        (lo[depth]..=hi[depth]).rev().collect()
    };
    for v in vals {
        x[depth] = v;
        enumerate_rec(lp, rows, lo, hi, depth + 1, x, best);
    }
}

/// Exact minimum of a mixed problem with few integer points: every integer
/// assignment is enumerated and the continuous remainder is solved by vertex
/// enumeration. Continuous variables need finite bounds.
pub fn enumerate_mixed_min(p: &MipProblem) -> Option<f64> {
    let lp = p.to_lp();
    let n = lp.num_vars;
    let ints: Vec<usize> = (0..n).filter(|&j| p.integrality[j] != VarKind::Continuous).collect();
    let conts: Vec<usize> = (0..n).filter(|&j| p.integrality[j] == VarKind::Continuous).collect();
    let ranges: Vec<(i64, i64)> = ints
        .iter()
        .map(|&j| (lp.lower[j].ceil() as i64, lp.upper[j].floor() as i64))
        .collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut assign: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        // sub-LP over continuous variables
        let mut sub = LinearProgram::new(conts.len())
            .with_objective(conts.iter().map(|&j| lp.objective[j]).collect())
            .with_bounds(
                conts.iter().map(|&j| lp.lower[j]).collect(),
                conts.iter().map(|&j| lp.upper[j]).collect(),
            );
        let mut fixed_obj = 0.0;
        for (k, &j) in ints.iter().enumerate() {
            fixed_obj += lp.objective[j] * assign[k] as f64;
        }
        let mut ok = true;
        for r in &lp.constraints {
            let mut rhs = r.rhs;
            let mut coeffs = Vec::new();
            for &(j, a) in &r.coeffs {
                if let Some(k) = ints.iter().position(|&i| i == j) {
                    rhs -= a * assign[k] as f64;
                } else {
                    coeffs.push((conts.iter().position(|&c| c == j).unwrap(), a));
                }
            }
            if coeffs.is_empty() {
                let probe = vmc_core::lp::Constraint::new(vec![], r.relation, rhs);
                if probe.violation(&[]) > 1e-9 {
                    ok = false;
                    break;
                }
            } else {
                sub.add_constraint(coeffs, r.relation, rhs);
            }
        }
        if ok {
            let v = if conts.is_empty() {
                Some(0.0)
            } else {
                vertex_enumeration_min(&sub)
            };
            if let Some(v) = v {
                let total = v + fixed_obj;
                best = Some(best.map_or(total, |b: f64| b.min(total)));
            }
        }
        // odometer
        let mut k = 0;
        loop {
            if k == assign.len() {
                return best;
            }
            if assign[k] < ranges[k].1 {
                assign[k] += 1;
                break;
            }
            assign[k] = ranges[k].0;
            k += 1;
        }
    }
}

/// Random small MIP. Pure-integer problems have up to `max_discrete`
/// variables; mixed ones carry one or two bounded continuous variables and at
/// most 12 discrete variables with narrow ranges so enumeration stays cheap.
/// Feasibility is not guaranteed.
pub fn random_mip<R: Rng>(rng: &mut R, max_discrete: usize) -> MipProblem {
    let mixed = rng.random_bool(0.3);
    let nd = if mixed {
        rng.random_range(1..=max_discrete.min(12))
    } else {
        rng.random_range(1..=max_discrete)
    };
    let nc = if mixed { rng.random_range(1..=2) } else { 0 };
    let n = nd + nc;
    let mut kinds = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for j in 0..n {
        if j >= nd {
            kinds.push(VarKind::Continuous);
            lower.push(0.0);
            upper.push(rng.random_range(1..=4) as f64 + 0.5);
        } else if rng.random_bool(if mixed { 0.7 } else { 0.8 }) {
            kinds.push(VarKind::Binary);
            lower.push(0.0);
            upper.push(1.0);
        } else {
            kinds.push(VarKind::Integer);
            let l = -(rng.random_range(0..=1) as f64);
            lower.push(l);
            upper.push(l + rng.random_range(1..=if mixed { 2 } else { 3 }) as f64);
        }
    }
    let objective = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let mut lp = LinearProgram::new(n).with_objective(objective).with_bounds(lower, upper.clone());
    let m = rng.random_range(1..=8);
    for _ in 0..m {
        let mut coeffs = Vec::new();
        let mut pos = 0.0;
        for j in 0..n {
            if rng.random_bool(0.6) {
                let a = rng.random_range(-4..=9) as f64;
                if a != 0.0 {
                    coeffs.push((j, a));
                    if a > 0.0 {
                        pos += a * upper[j];
                    }
                }
            }
        }
        let frac = rng.random_range(0.2..0.7);
        let rhs = (pos * frac).round();
        let (rel, rhs) = match rng.random_range(0..6) {
            0 => (Relation::Ge, (rhs * 0.3).round()),
            1 => (Relation::Eq, (rhs * 0.5).round()),
            _ => (Relation::Le, rhs),
        };
        lp.add_constraint(coeffs, rel, rhs);
    }
    MipProblem::new(lp, kinds)
}

/// Dispatches to the matching exhaustive oracle.
pub fn enumerate_min(p: &MipProblem) -> Option<f64> {
    if p.integrality.contains(&VarKind::Continuous) {
        enumerate_mixed_min(p)
    } else {
        enumerate_integer_min(p)
    }
}

/// Instance built from catalog rows: `vm_rows` and `server_rows` index the
/// VM and server tables; costs follow the default power model.
pub fn catalog_instance(vm_rows: &[usize], server_rows: &[usize], n: Vec<Vec<u64>>, d_new: Vec<u64>) -> Instance {
    let (vms, servers) = catalog();
    let vm_types: Vec<VmSpec> = vm_rows.iter().map(|&i| vms[i].clone()).collect();
    let servers: Vec<ServerSpec> = server_rows.iter().map(|&j| servers[j].clone()).collect();
    let costs = derive_costs(&vm_types, &servers, &PowerModel::default(), 1.0);
    Instance {
        generator: None,
        resources: RESOURCES.iter().map(|r| r.to_string()).collect(),
        vm_types,
        servers,
        n,
        d_new,
        costs,
    }
}

/// Random instance small enough for [`vmcp_brute_force`]: 2–3 servers, 1–2
/// of the three smallest VM types, a capacity-feasible current allocation.
pub fn tiny_instance<R: Rng>(rng: &mut R) -> Instance {
    let nj = rng.random_range(2..=3);
    let ni = rng.random_range(1..=2);
    let server_rows: Vec<usize> = (0..nj).map(|_| rng.random_range(0..10)).collect();
    let mut vm_rows: Vec<usize> = (0..3).collect();
    vm_rows.swap(0, rng.random_range(0..3));
    vm_rows.truncate(ni);
    let mut n = vec![vec![0u64; nj]; ni];
    let probe = catalog_instance(&vm_rows, &server_rows, n.clone(), vec![0; ni]);
    for j in 0..nj {
        for _ in 0..rng.random_range(0..=3) {
            let i = rng.random_range(0..ni);
            n[i][j] += 1;
            let fits = (0..3).all(|r| {
                let load: f64 = (0..ni).map(|k| probe.vm_types[k].demand[r] * n[k][j] as f64).sum();
                load <= probe.servers[j].capacity[r]
            });
            if !fits {
                n[i][j] -= 1;
            }
        }
    }
    let d_new = (0..ni).map(|_| rng.random_range(0..=2)).collect();
    catalog_instance(&vm_rows, &server_rows, n, d_new)
}

/// Exhaustive VMCP optimum: every activation pattern, every split of each
/// type's old and new VMs over the active servers. The cost is computed here
/// from the instance data with z = max(0, x - n). `None` when infeasible.
pub fn vmcp_brute_force(inst: &Instance) -> Option<f64> {
    let ni = inst.vm_types.len();
    let nj = inst.servers.len();
    let nr = inst.resources.len();
    let d: Vec<u64> = inst.n.iter().map(|row| row.iter().sum()).collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << nj) {
        let open: Vec<usize> = (0..nj).filter(|j| mask >> j & 1 == 1).collect();
        // 2 ni allocation vectors: old types first, then new types
        let mut alloc = vec![vec![0u64; nj]; 2 * ni];
        fn splits(total: u64, slots: &[usize], nj: usize) -> Vec<Vec<u64>> {
            let mut out = Vec::new();
            let mut cur = vec![0u64; nj];
            fn rec(k: usize, left: u64, slots: &[usize], cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
                if k + 1 == slots.len() {
                    cur[slots[k]] = left;
                    out.push(cur.clone());
                    cur[slots[k]] = 0;
                    return;
                }
                for v in 0..=left {
                    cur[slots[k]] = v;
                    rec(k + 1, left - v, slots, cur, out);
                }
                cur[slots[k]] = 0;
            }
            if slots.is_empty() {
                if total == 0 {
                    out.push(cur);
                }
                return out;
            }
            rec(0, total, slots, &mut cur, &mut out);
            out
        }
        let options: Vec<Vec<Vec<u64>>> = (0..2 * ni)
            .map(|t| {
                let total = if t < ni { d[t] } else { inst.d_new[t - ni] };
                splits(total, &open, nj)
            })
            .collect();
        if options.iter().any(|o| o.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; 2 * ni];
        loop {
            for t in 0..2 * ni {
                alloc[t].clone_from(&options[t][idx[t]]);
            }
            let fits = (0..nj).all(|j| {
                (0..nr).all(|r| {
                    let load: f64 = (0..ni)
                        .map(|i| inst.vm_types[i].demand[r] * (alloc[i][j] + alloc[ni + i][j]) as f64)
                        .sum();
                    let cap = if mask >> j & 1 == 1 { inst.servers[j].capacity[r] } else { 0.0 };
                    load <= cap + 1e-9
                })
            });
            if fits {
                let mut cost: f64 = open.iter().map(|&j| inst.costs.run[j]).sum();
                for i in 0..ni {
                    for j in 0..nj {
                        let x = alloc[i][j];
                        cost += inst.costs.assign[i][j] * x as f64;
                        cost += inst.costs.mig[i][j] * x.saturating_sub(inst.n[i][j]) as f64;
                        cost += inst.costs.new[i][j] * alloc[ni + i][j] as f64;
                    }
                }
                if best.is_none_or(|b| cost < b) {
                    best = Some(cost);
                }
            }
            let mut t = 0;
            while t < 2 * ni {
                idx[t] += 1;
                if idx[t] < options[t].len() {
                    break;
                }
                idx[t] = 0;
                t += 1;
            }
            if t == 2 * ni {
                break;
            }
        }
    }
    best
}
