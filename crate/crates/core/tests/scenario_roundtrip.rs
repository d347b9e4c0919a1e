//! Serialization round-trips for scenario specs and sampled instances.

use std::sync::Arc;

use attacksim::instancer::{apply_permutation, instantiate, permute_ids, Instance};
use attacksim::scenario::{
    bundled_scenario, bundled_scenarios, parse_scenario, serialize_scenario,
};
use proptest::prelude::*;

#[test]
fn every_bundled_scenario_round_trips_exactly() {
    for (name, spec) in bundled_scenarios() {
        let text = serialize_scenario(&spec);
        let back = parse_scenario(&text).unwrap();
        assert_eq!(spec, back, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn instances_round_trip_through_json(scenario_idx in 0usize..8, seed in any::<u64>()) {
        let names: Vec<String> = bundled_scenarios().into_keys().collect();
        let spec = Arc::new(bundled_scenario(&names[scenario_idx]).unwrap());
        let instance = instantiate(&spec, seed).unwrap();
        let text = serde_json::to_string(&instance).unwrap();
        let back: Instance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&instance, &back);
    }

    #[test]
    fn permutations_are_reproducible_and_invertible_in_effect(
        scenario_idx in 0usize..8,
        seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        let names: Vec<String> = bundled_scenarios().into_keys().collect();
        let spec = Arc::new(bundled_scenario(&names[scenario_idx]).unwrap());
        let instance = instantiate(&spec, seed).unwrap();
        let (permuted, perm) = permute_ids(&instance, perm_seed);
        let (permuted2, _) = permute_ids(&instance, perm_seed);
        prop_assert_eq!(&permuted, &permuted2);
        prop_assert_eq!(&permuted, &apply_permutation(&instance, &perm));
        // relabeling preserves the multiset of host configurations
        let mut a: Vec<String> = instance
            .hosts
            .iter()
            .map(|h| format!("{:?}|{:?}|{}|{}", h.services, h.os, h.sensitive, h.value))
            .collect();
        let mut b: Vec<String> = permuted
            .hosts
            .iter()
            .map(|h| format!("{:?}|{:?}|{}|{}", h.services, h.os, h.sensitive, h.value))
            .collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}
