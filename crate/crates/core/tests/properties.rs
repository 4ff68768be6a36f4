//! Property tests for the invariants that hold for every input.

use std::collections::BTreeSet;

use algoprob::bdm::{
    bdm, block_entropy, cond_bdm_coarse, cond_bdm_strong, joint_bdm, mutual_bdm, partition, PartitionStrategy,
};
use algoprob::ctm::builtin_table;
use algoprob::generators::{
    eca_evolve, gen_eca_rule_dataset_sized, gen_nk_datasets, BoolFn, EcaRule, LabelledDataset, NkNetwork, NkParams,
    NkTask, Sample, Split, SplitSizes,
};
use algoprob::optimizer::{algorithmic_search, complexity_order, ParameterSpace, Stop};
use algoprob::par::Exec;
use algoprob::robustness::one_pixel_sweep_with;
use algoprob::weighting::{compute_weights, Tier, WeightSpec};
use algoprob::BinaryTensor;
use proptest::prelude::*;

fn bits(min: usize, max: usize) -> impl Strategy<Value = BinaryTensor> {
    prop::collection::vec(any::<bool>(), min..=max)
        .prop_map(|v| BinaryTensor::from_fn(1, v.len(), |_, c| v[c]))
}

fn block_set(x: &BinaryTensor, s: &PartitionStrategy) -> BTreeSet<String> {
    partition(x, s).unwrap().iter().map(|(b, _)| b.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn self_conditional_is_zero(x in bits(8, 64), block in 1usize..=8) {
        let s = PartitionStrategy::vector(block);
        prop_assert_eq!(cond_bdm_coarse(&x, &x, builtin_table(), &s).unwrap(), 0.0);
    }

    #[test]
    fn conditioning_never_adds(x in bits(8, 64), y in bits(8, 64), block in 1usize..=8) {
        let t = builtin_table();
        let s = PartitionStrategy::vector(block);
        let coarse = cond_bdm_coarse(&x, &y, t, &s).unwrap();
        let strong = cond_bdm_strong(&x, &y, None, true, t, &s).unwrap();
        prop_assert!(coarse <= bdm(&x, t, &s).unwrap() + 1e-9);
        prop_assert!(strong <= coarse + 1e-9);
        prop_assert!(strong >= 0.0);
    }

    #[test]
    fn zero_conditional_means_contained_blocks(x in bits(8, 32), y in bits(8, 32), block in 1usize..=3) {
        let s = PartitionStrategy::vector(block);
        if cond_bdm_coarse(&x, &y, builtin_table(), &s).unwrap() == 0.0 {
            prop_assert!(block_set(&x, &s).is_subset(&block_set(&y, &s)));
        }
    }

    #[test]
    fn disjoint_blocks_give_plain_bdm(ones in 1usize..8, zeros in 1usize..8, reps in 1usize..6) {
        // x made only of 1-blocks, y only of 0-blocks
        let x = BinaryTensor::from_fn(1, ones * reps, |_, _| true);
        let y = BinaryTensor::from_fn(1, zeros * reps, |_, _| false);
        let t = builtin_table();
        let s = PartitionStrategy::vector(1);
        prop_assert_eq!(cond_bdm_coarse(&x, &y, t, &s).unwrap(), bdm(&x, t, &s).unwrap());
    }

    #[test]
    fn mutual_is_symmetric_and_inclusion_exclusion(x in bits(8, 64), y in bits(8, 64), block in 1usize..=8) {
        let t = builtin_table();
        let s = PartitionStrategy::vector(block);
        let m = mutual_bdm(&x, &y, t, &s).unwrap();
        prop_assert!((m - mutual_bdm(&y, &x, t, &s).unwrap()).abs() <= 1e-9);
        let ie = bdm(&x, t, &s).unwrap() + bdm(&y, t, &s).unwrap() - joint_bdm(&x, &y, t, &s).unwrap();
        prop_assert!((m - ie).abs() <= 1e-9);
    }

    #[test]
    fn entropy_bounded_by_block_alphabet(x in bits(8, 64), block in 1usize..=4) {
        let h = block_entropy(&x, &PartitionStrategy::vector(block)).unwrap();
        prop_assert!(h >= 0.0 && h <= block as f64 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_repeat_under_seed(seed in any::<u64>()) {
        let sizes = SplitSizes { training: 2, validation: 1, test: 1 };
        let a = gen_eca_rule_dataset_sized(seed, sizes, Exec::default()).unwrap();
        let b = gen_eca_rule_dataset_sized(seed, sizes, Exec::Sequential).unwrap();
        prop_assert_eq!(a, b);
        let p = NkParams { sizes: SplitSizes { training: 2, validation: 1, test: 1 }, classes: 3, ..NkParams::default() };
        prop_assert_eq!(
            gen_nk_datasets(NkTask::Rules, seed, &p).unwrap(),
            gen_nk_datasets(NkTask::Rules, seed, &p).unwrap()
        );
    }

    #[test]
    fn eca_keeps_width(rule in any::<u8>(), init in any::<u32>(), steps in 1usize..12) {
        let x = BinaryTensor::from_uint(init as u128, 32);
        let evo = eca_evolve(EcaRule(rule), &x, steps).unwrap();
        prop_assert_eq!(evo.shape(), (steps + 1, 32));
        prop_assert_eq!(evo.row(0), x);
    }

    #[test]
    fn nk_node_ignores_non_inputs(
        a in 0usize..4, b in 0usize..4, fns in prop::collection::vec(0usize..4, 4), state in 0u64..16, other in 0u64..16
    ) {
        prop_assume!(a != b);
        let inputs: Vec<Vec<usize>> = (0..4).map(|i| if i == 0 { vec![a.min(b), a.max(b)] } else { vec![(i + 1) % 4, (i + 2) % 4] }).collect();
        let rules: Vec<BoolFn> = fns.iter().map(|&f| BoolFn::ALL[f]).collect();
        let net = NkNetwork::with_rule_list(inputs, &rules).unwrap();
        // keep node a and b, take every other node state from `other`
        let keep = (1u64 << (3 - a)) | (1u64 << (3 - b));
        let mixed = (state & keep) | (other & !keep & 0xF);
        prop_assert_eq!(net.step_bits(state) >> 3 & 1, net.step_bits(mixed) >> 3 & 1);
    }

    #[test]
    fn search_running_minimum(costs in prop::collection::vec(0u32..1000, 1..200)) {
        let idx: Vec<usize> = (0..costs.len()).collect();
        let r = algorithmic_search(&idx, |&i| costs[i] as f64, Stop::iters(costs.len()), Exec::default()).unwrap();
        let min = *costs.iter().min().unwrap() as f64;
        prop_assert_eq!(r.best_cost, min);
        prop_assert_eq!(costs.iter().position(|&c| c as f64 == min).unwrap(), r.best_rank);
        let mut running = f64::INFINITY;
        for row in &r.trace {
            prop_assert_eq!(row.is_new_min, row.cost < running);
            running = running.min(row.cost);
        }
        let again = algorithmic_search(&idx, |&i| costs[i] as f64, Stop::iters(costs.len()), Exec::Sequential).unwrap();
        prop_assert_eq!(r, again);
    }

    #[test]
    fn weights_scale_with_gamma(factor in 0.1f64..10.0, seed in any::<u64>()) {
        let ds = gen_eca_rule_dataset_sized(seed, SplitSizes { training: 4, validation: 0, test: 0 }, Exec::default())
            .unwrap()
            .training;
        let t = algoprob::ctm::builtin_block_table();
        let s = PartitionStrategy::blocks(4, 4);
        let spec = WeightSpec::default();
        let base = compute_weights(&ds, &spec, t, &s, Exec::default()).unwrap();
        let scaled = compute_weights(&ds, &spec.scaled(factor).unwrap(), t, &s, Exec::default()).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a.weight * factor - b.weight).abs() <= 1e-12 * b.weight.abs().max(1.0));
        }
    }

    #[test]
    fn weights_ignore_sample_order(values in prop::collection::vec((0usize..3, 0u32..256), 3..40), rot in 0usize..40) {
        let samples: Vec<Sample> = values
            .iter()
            .map(|&(c, v)| Sample { label: format!("c{c}"), tensor: BinaryTensor::from_uint(v as u128, 8) })
            .collect();
        let ds = LabelledDataset::new(Split::Training, 0, samples.clone()).unwrap();
        let mut rotated = samples;
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let rds = LabelledDataset::new(Split::Training, 0, rotated).unwrap();
        let spec = WeightSpec::new(vec![Tier { phi: 80.0, gamma: 0.1 }, Tier { phi: 20.0, gamma: 1.0 }, Tier { phi: 0.0, gamma: 3.0 }]).unwrap();
        let s = PartitionStrategy::vector(4);
        let a = compute_weights(&ds, &spec, builtin_table(), &s, Exec::default()).unwrap();
        let b = compute_weights(&rds, &spec, builtin_table(), &s, Exec::default()).unwrap();
        let n = a.len();
        for (i, row) in a.iter().enumerate() {
            prop_assert_eq!(row.weight, b[(i + n - k) % n].weight);
        }
    }

    #[test]
    fn sweep_ignores_sample_order(values in prop::collection::vec(0u32..4096, 2..12), rot in 0usize..12) {
        let samples: Vec<Sample> = values
            .iter()
            .map(|&v| Sample { label: "x".into(), tensor: BinaryTensor::from_uint(v as u128, 12) })
            .collect();
        // two classes from the number of ones
        let predict = |x: &BinaryTensor| Ok(x.count_ones() % 3 / 2);
        let ds = LabelledDataset::new(Split::Test, 0, samples.clone()).unwrap();
        let mut rotated = samples;
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let rds = LabelledDataset::new(Split::Test, 0, rotated).unwrap();
        let a = one_pixel_sweep_with(&ds, predict, Exec::default()).unwrap();
        let b = one_pixel_sweep_with(&rds, predict, Exec::Sequential).unwrap();
        prop_assert_eq!(a.total_vulnerabilities, b.total_vulnerabilities);
        prop_assert_eq!(a.vulnerable_samples, b.vulnerable_samples);
    }
}

#[test]
fn complexity_order_is_sorted_and_complete() {
    let t = builtin_table();
    let s = PartitionStrategy::vector(4);
    let order = complexity_order(ParameterSpace::vector(12).unwrap(), t, &s).unwrap();
    assert_eq!(order.len(), 4096);
    let space = ParameterSpace::vector(12).unwrap();
    let values: Vec<f64> = order.iter().map(|&c| bdm(&space.tensor(c), t, &s).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    let mut sorted = order.clone();
    sorted.sort_unstable();
    assert!(sorted.iter().enumerate().all(|(i, &c)| c == i as u64));
}
