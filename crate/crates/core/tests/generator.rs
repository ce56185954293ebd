use proptest::prelude::*;
use vmc_core::generator::*;
use vmc_core::model::Instance;
use vmc_core::Error;

fn load(inst: &Instance, k: usize, r: usize) -> f64 {
    (0..inst.num_vm_types())
        .map(|i| inst.vm_types[i].demand[r] * inst.n[i][k] as f64)
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn post_conditions(servers in 1usize..80, alpha in 0.05f64..1.0, beta in 0.05f64..0.9,
                       gamma in 0.05f64..0.8, seed in any::<u64>()) {
        let p = GenParams::new(servers, alpha, beta, gamma, seed);
        let inst = match generate_instance(&p) {
            Ok(inst) => inst,
            Err(e) => {
                prop_assert!(matches!(e, Error::GenerationStalled(_)));
                return Ok(());
            }
        };
        prop_assert_eq!(inst.num_servers(), servers);
        prop_assert!(tau(&inst) > gamma);
        prop_assert!(aggregate_feasible(&inst));
        prop_assert!(first_fit_new_vms(&inst));
        for k in 0..servers {
            for r in 0..inst.resources.len() {
                prop_assert!(load(&inst, k, r) <= inst.servers[k].capacity[r] + 1e-9);
            }
            let loaded = inst.n.iter().any(|row| row[k] > 0);
            let room = inst.vm_types.iter().any(|vm| {
                (0..inst.resources.len()).all(|r| load(&inst, k, r) + vm.demand[r] <= inst.servers[k].capacity[r])
            });
            if loaded && room {
                prop_assert!(sigma_k(&inst, k) > beta);
            }
        }
        let g = inst.generator.as_ref().unwrap();
        prop_assert_eq!(g.seed, seed);
        prop_assert_eq!(g.version.as_str(), FORMAT_VERSION);
        prop_assert_eq!(g.rng.as_str(), RNG_NAME);
    }

    #[test]
    fn same_params_same_instance(servers in 1usize..40, seed in any::<u64>()) {
        let p = GenParams::new(servers, 0.5, 0.3, 0.5, seed);
        // a stall must repeat too
        let (a, b) = (generate_instance(&p), generate_instance(&p));
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn seeds_differ() {
    let a = generate_instance(&GenParams::new(30, 0.5, 0.2, 0.5, 1)).unwrap();
    let b = generate_instance(&GenParams::new(30, 0.5, 0.2, 0.5, 2)).unwrap();
    assert_ne!(a.n, b.n);
}

#[test]
fn equal_server_counts_per_type() {
    let inst = generate_instance(&GenParams::new(40, 0.5, 0.2, 0.5, 0)).unwrap();
    for t in 1..=10 {
        assert_eq!(inst.servers.iter().filter(|s| s.type_id == t).count(), 4);
    }
}
