//! Random VMCP instances built from the five VM types and ten server types
//! of the reference catalog.
//!
//! Randomness comes from ChaCha8 seeded with `seed`. Stream
//! `(attempt << 32) | k` drives the loading of server `k` and stream
//! `(attempt << 32) | 0xFFFF_FFFF` drives the new-VM demand, so every server
//! is generated independently of the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Costs, Instance, ServerSpec, VmSpec};

pub const FORMAT_VERSION: &str = "vmc-instance/1";
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64 + set_stream";
pub const MAX_ATTEMPTS: usize = 10;
const DEMAND_STREAM: u64 = 0xFFFF_FFFF;

pub const RESOURCES: [&str; 3] = ["cpu", "ram_gb", "bandwidth_mbps"];

/// (CPU, RAM GB, bandwidth Mbps)
const VM_TYPES: [[f64; 3]; 5] = [
    [1.0, 1.0, 10.0],
    [2.0, 4.0, 100.0],
    [4.0, 8.0, 300.0],
    [6.0, 12.0, 1000.0],
    [8.0, 16.0, 1200.0],
];

/// (CPU, RAM GB, bandwidth Mbps, max power W)
const SERVER_TYPES: [[f64; 4]; 10] = [
    [4.0, 8.0, 1000.0, 180.0],
    [8.0, 16.0, 1000.0, 200.0],
    [10.0, 16.0, 2000.0, 250.0],
    [12.0, 32.0, 2000.0, 250.0],
    [14.0, 32.0, 2000.0, 280.0],
    [14.0, 32.0, 2000.0, 300.0],
    [16.0, 32.0, 4000.0, 300.0],
    [16.0, 64.0, 4000.0, 350.0],
    [18.0, 64.0, 4000.0, 380.0],
    [18.0, 64.0, 4000.0, 410.0],
];

/// The VM and server catalogs; server `type_id`s are 1-based.
pub fn catalog() -> (Vec<VmSpec>, Vec<ServerSpec>) {
    let vms = VM_TYPES
        .iter()
        .map(|d| VmSpec { demand: d.to_vec() })
        .collect();
    let servers = SERVER_TYPES
        .iter()
        .enumerate()
        .map(|(t, s)| ServerSpec {
            type_id: t + 1,
            capacity: s[..3].to_vec(),
            p_max: s[3],
        })
        .collect();
    (vms, servers)
}

/// Linear power model `P = P_idle + (P_max - P_idle) U` with
/// `P_idle = p_idle_fraction · P_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub p_idle_fraction: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { p_idle_fraction: 0.6 }
    }
}

impl PowerModel {
    pub fn p_idle(&self, p_max: f64) -> f64 {
        self.p_idle_fraction * p_max
    }

    pub fn power(&self, p_max: f64, utilization: f64) -> f64 {
        let idle = self.p_idle(p_max);
        idle + (p_max - idle) * utilization
    }
}

/// Activation cost is idle power; assignment cost is the dynamic power of the
/// VM's CPU share. Migration cost equals assignment cost, and new-VM cost is
/// `new_cost_factor` times assignment cost. Resource 0 must be CPU.
pub fn derive_costs(vm_types: &[VmSpec], servers: &[ServerSpec], pm: &PowerModel, new_cost_factor: f64) -> Costs {
    let run = servers.iter().map(|s| pm.p_idle(s.p_max)).collect();
    let assign: Vec<Vec<f64>> = vm_types
        .iter()
        .map(|vm| {
            servers
                .iter()
                .map(|s| (s.p_max - pm.p_idle(s.p_max)) * vm.demand[0] / s.capacity[0])
                .collect()
        })
        .collect();
    let new = assign
        .iter()
        .map(|row| row.iter().map(|c| c * new_cost_factor).collect())
        .collect();
    Costs {
        run,
        mig: assign.clone(),
        assign,
        new,
    }
}

fn ratio(load: f64, cap: f64) -> f64 {
    if cap > 0.0 {
        load / cap
    } else if load > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Peak relative load of server `k` under the current allocation.
pub fn sigma_k(inst: &Instance, k: usize) -> f64 {
    (0..inst.resources.len())
        .map(|r| {
            let load: f64 = (0..inst.num_vm_types())
                .map(|i| inst.vm_types[i].demand[r] * inst.n[i][k] as f64)
                .sum();
            ratio(load, inst.servers[k].capacity[r])
        })
        .fold(0.0, f64::max)
}

/// Peak load of the new VMs relative to the aggregate capacity.
pub fn tau(inst: &Instance) -> f64 {
    (0..inst.resources.len())
        .map(|r| {
            let load: f64 = (0..inst.num_vm_types())
                .map(|i| inst.vm_types[i].demand[r] * inst.d_new[i] as f64)
                .sum();
            let cap: f64 = inst.servers.iter().map(|s| s.capacity[r]).sum();
            ratio(load, cap)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub num_servers: usize,
    /// Probability that a server starts loaded.
    pub alpha: f64,
    /// Load target of the current allocation.
    pub beta: f64,
    /// Load target of the new VMs.
    pub gamma: f64,
    pub seed: u64,
    #[serde(default)]
    pub power: PowerModel,
    #[serde(default = "one")]
    pub new_cost_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl GenParams {
    pub fn new(num_servers: usize, alpha: f64, beta: f64, gamma: f64, seed: u64) -> Self {
        Self {
            num_servers,
            alpha,
            beta,
            gamma,
            seed,
            power: PowerModel::default(),
            new_cost_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_servers == 0 {
            return Err(Error::InvalidInput("num_servers must be positive".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        let f = self.power.p_idle_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidInput(format!("p_idle_fraction must lie in [0, 1], got {f}")));
        }
        if !(self.new_cost_factor >= 0.0 && self.new_cost_factor.is_finite()) {
            return Err(Error::InvalidInput("new_cost_factor must be non-negative".into()));
        }
        Ok(())
    }
}

/// Header stored in generated instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub version: String,
    pub params: GenParams,
    pub rng: String,
    pub seed: u64,
}

/// Server types in catalog order, equal counts per type; the remainder goes
/// to the lowest-index types.
pub fn server_layout(num_servers: usize, num_types: usize) -> Vec<usize> {
    let (base, rem) = (num_servers / num_types, num_servers % num_types);
    (0..num_types)
        .flat_map(|t| std::iter::repeat_n(t, base + usize::from(t < rem)))
        .collect()
}

fn stream(seed: u64, attempt: usize, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((attempt as u64) << 32) | sub);
    rng
}

fn fits(vm: &VmSpec, server: &ServerSpec, load: &[f64]) -> bool {
    (0..load.len()).all(|r| load[r] + vm.demand[r] <= server.capacity[r])
}

/// Places every new VM, largest CPU demand first, on the first server with
/// room left over from the current allocation. Success certifies that the
/// plan "keep everything, add the new VMs" is feasible.
pub fn first_fit_new_vms(inst: &Instance) -> bool {
    let nr = inst.resources.len();
    let mut load: Vec<Vec<f64>> = (0..inst.num_servers())
        .map(|k| {
            (0..nr)
                .map(|r| {
                    (0..inst.num_vm_types())
                        .map(|i| inst.vm_types[i].demand[r] * inst.n[i][k] as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..inst.num_vm_types()).collect();
    order.sort_by(|&a, &b| {
        inst.vm_types[b].demand[0]
            .total_cmp(&inst.vm_types[a].demand[0])
            .then(a.cmp(&b))
    });
    for i in order {
        let vm = &inst.vm_types[i];
        for _ in 0..inst.d_new[i] {
            let Some(k) = (0..inst.num_servers()).find(|&k| fits(vm, &inst.servers[k], &load[k])) else {
                return false;
            };
            for r in 0..nr {
                load[k][r] += vm.demand[r];
            }
        }
    }
    true
}

/// Aggregate demand of old and new VMs within aggregate capacity.
pub fn aggregate_feasible(inst: &Instance) -> bool {
    (0..inst.resources.len()).all(|r| {
        let demand: f64 = (0..inst.num_vm_types())
            .map(|i| inst.vm_types[i].demand[r] * (inst.d(i) + inst.d_new[i]) as f64)
            .sum();
        let cap: f64 = inst.servers.iter().map(|s| s.capacity[r]).sum();
        demand <= cap
    })
}

pub fn generate_instance(params: &GenParams) -> Result<Instance> {
    params.validate()?;
    let (vm_types, catalog_servers) = catalog();
    let servers: Vec<ServerSpec> = server_layout(params.num_servers, catalog_servers.len())
        .into_iter()
        .map(|t| catalog_servers[t].clone())
        .collect();
    let costs = derive_costs(&vm_types, &servers, &params.power, params.new_cost_factor);
    let ni = vm_types.len();
    let nr = RESOURCES.len();
    for attempt in 0..MAX_ATTEMPTS {
        let mut inst = Instance {
            generator: Some(GeneratorInfo {
                version: FORMAT_VERSION.into(),
                params: *params,
                rng: RNG_NAME.into(),
                seed: params.seed,
            }),
            resources: RESOURCES.iter().map(|s| s.to_string()).collect(),
            vm_types: vm_types.clone(),
            servers: servers.clone(),
            n: vec![vec![0; servers.len()]; ni],
            d_new: vec![0; ni],
            costs: costs.clone(),
        };
        for k in 0..servers.len() {
            let mut rng = stream(params.seed, attempt, k as u64);
            if !rng.random_bool(params.alpha) {
                continue;
            }
            let mut load = vec![0.0; nr];
            loop {
                let candidates: Vec<usize> = (0..ni)
                    .filter(|&i| fits(&vm_types[i], &servers[k], &load))
                    .collect();
                if candidates.is_empty() {
                    break;
                }
                let i = candidates[rng.random_range(0..candidates.len())];
                inst.n[i][k] += 1;
                for (r, l) in load.iter_mut().enumerate() {
                    *l += vm_types[i].demand[r];
                }
                if sigma_k(&inst, k) > params.beta {
                    break;
                }
            }
        }
        let mut rng = stream(params.seed, attempt, DEMAND_STREAM);
        while tau(&inst) <= params.gamma {
            inst.d_new[rng.random_range(0..ni)] += 1;
        }
        if aggregate_feasible(&inst) && first_fit_new_vms(&inst) {
            return Ok(inst);
        }
        log::debug!("generation attempt {attempt} failed the feasibility check");
    }
    Err(Error::GenerationStalled(MAX_ATTEMPTS))
}
