//! End-to-end acceptance checks. Each test prints one `criterion N` line with
//! the measured numbers before asserting. The line goes straight to stderr,
//! past the test harness's output capture, so a plain `cargo test` shows it.

use std::collections::HashMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use algoprob::bdm::{
    bdm, cond_bdm_coarse, cond_bdm_strong, joint_bdm, mutual_bdm, partition, PartitionStrategy,
};
use algoprob::classifier::{evaluate, NearestNeighbour};
use algoprob::ctm::{builtin_block_table, builtin_table, enumerate_machines, frequency_bits, TuringMachineSpec};
use algoprob::domain::{build_nk_cond_dbs, NK_MISSING_PENALTY};
use algoprob::experiments::{
    entropy_vs_bdm, partition_sweep, speedup, weakly_increasing, HvBdmParams, Normalization, PartitionParams,
    SpeedupParams,
};
use algoprob::generators::{
    gen_eca_init_dataset, gen_eca_rule_dataset_sized, gen_nk_datasets, salt, DatasetSplits, EcaInitParams,
    NkParams, NkTask, SplitSizes,
};
use algoprob::ode::{
    encode_theta, fit_with_bank, noise_experiment, observe, theta_order, FitOptions, NoiseParams, OutputBank,
    TRUE_THETA,
};
use algoprob::par::Exec;
use algoprob::pipeline::{train, Model, Task, TaskTables, TrainConfig};
use algoprob::robustness::one_pixel_sweep_with;
use algoprob::weighting::{compute_weights, weights_csv, WeightSpec};
use algoprob::{BinaryTensor, Block};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

fn report(n: u32, name: &str, pass: bool, detail: String, start: Instant) -> bool {
    let line = format!(
        "criterion {n:>2} {name}: {} ({detail}; {:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    // a single write keeps lines from concurrent tests whole
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    pass
}

// ---------------------------------------------------------------------------
// 1. Conditional/joint/mutual identities over random pairs.

fn random_tensor(rng: &mut ChaCha8Rng, len: usize) -> BinaryTensor {
    let density: f64 = rng.gen_range(0.05..0.95);
    BinaryTensor::from_fn(1, len, |_, _| rng.gen_bool(density))
}

/// A tensor of `len / block` blocks none of which occurs in `avoid`.
fn disjoint_partner(rng: &mut ChaCha8Rng, avoid: &[u128], block: usize, len: usize) -> Option<BinaryTensor> {
    let free: Vec<u128> = (0..1u128 << block).filter(|b| !avoid.contains(b)).collect();
    if free.is_empty() {
        return None;
    }
    let mut t = BinaryTensor::zeros(1, len);
    for i in 0..len / block {
        let b = free[rng.gen_range(0..free.len())];
        t.paste(0, i * block, &BinaryTensor::from_uint(b, block));
    }
    Some(t)
}

#[test]
fn criterion_01_conditional_identities() {
    let start = Instant::now();
    let table = builtin_table();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tol = 1e-9;
    let (mut worst, mut disjoint_checked, mut failures) = (0.0f64, 0usize, Vec::new());
    for i in 0..10_000 {
        let block = rng.gen_range(1..=8);
        let (lx, ly) = (rng.gen_range(8..=64), rng.gen_range(8..=64));
        let x = random_tensor(&mut rng, lx);
        let y = random_tensor(&mut rng, ly);
        let s = PartitionStrategy::vector(block);
        let bx = bdm(&x, table, &s).unwrap();
        let by = bdm(&y, table, &s).unwrap();
        let c_xx = cond_bdm_coarse(&x, &x, table, &s).unwrap();
        let c_xy = cond_bdm_coarse(&x, &y, table, &s).unwrap();
        let strong = cond_bdm_strong(&x, &y, None, true, table, &s).unwrap();
        let m_xy = mutual_bdm(&x, &y, table, &s).unwrap();
        let m_yx = mutual_bdm(&y, &x, table, &s).unwrap();
        let j = joint_bdm(&x, &y, table, &s).unwrap();
        let checks = [
            ("self-conditional", c_xx.abs()),
            ("conditional bound", (c_xy - bx).max(0.0)),
            ("mutual symmetry", (m_xy - m_yx).abs()),
            ("inclusion-exclusion", (m_xy - (bx + by - j)).abs()),
            ("strong<=coarse", (strong - c_xy).max(0.0)),
        ];
        for (name, err) in checks {
            worst = worst.max(err);
            if err > tol {
                failures.push(format!("pair {i}: {name} off by {err}"));
            }
        }
        // partner built from blocks absent from x
        {
            let used: Vec<u128> = partition(&x, &s).unwrap().iter().map(|(b, _)| b.bits()).collect();
            let lz = rng.gen_range(8..=64);
            if let Some(z) = disjoint_partner(&mut rng, &used, block, lz) {
                disjoint_checked += 1;
                let err = (cond_bdm_coarse(&x, &z, table, &s).unwrap() - bx).abs();
                worst = worst.max(err);
                if err > tol {
                    failures.push(format!("pair {i}: disjoint partner off by {err}"));
                }
            }
        }
    }
    let pass = failures.is_empty() && disjoint_checked > 1000;
    report(
        1,
        "conditional identities",
        pass,
        format!("10000 pairs, {disjoint_checked} disjoint partners, worst error {worst:.2e}"),
        start,
    );
    assert!(pass, "{:?}", &failures[..failures.len().min(10)]);
}

// ---------------------------------------------------------------------------
// 2. Enumerated (2,2) table against a plain simulator.

/// Output counts of every (2,2) machine, by direct simulation. An instruction
/// is one of two halting writes or (write, direction, next state) for the two
/// working states; the output is the span of visited cells.
fn brute_force_22(max_steps: u32) -> (HashMap<String, u64>, u64) {
    #[derive(Clone, Copy)]
    enum Ins {
        Halt(u8),
        Go(u8, i64, usize),
    }
    let mut all = vec![Ins::Halt(0), Ins::Halt(1)];
    for next in 0..2 {
        for dir in [-1i64, 1] {
            for w in 0..2u8 {
                all.push(Ins::Go(w, dir, next));
            }
        }
    }
    let mut counts = HashMap::new();
    let mut halting = 0;
    let k = all.len();
    for code in 0..k.pow(4) {
        // rules[state][symbol]
        let pick = |i: usize| all[code / k.pow(i as u32) % k];
        let rules = [[pick(0), pick(1)], [pick(2), pick(3)]];
        let mut tape: HashMap<i64, u8> = HashMap::new();
        let (mut head, mut state, mut lo, mut hi) = (0i64, 0usize, 0i64, 0i64);
        for _ in 0..max_steps {
            let sym = *tape.get(&head).unwrap_or(&0);
            match rules[state][sym as usize] {
                Ins::Halt(w) => {
                    tape.insert(head, w);
                    let out: String =
                        (lo..=hi).map(|p| if *tape.get(&p).unwrap_or(&0) == 1 { '1' } else { '0' }).collect();
                    *counts.entry(out).or_insert(0) += 1;
                    halting += 1;
                    break;
                }
                Ins::Go(w, dir, next) => {
                    tape.insert(head, w);
                    head += dir;
                    lo = lo.min(head);
                    hi = hi.max(head);
                    state = next;
                }
            }
        }
    }
    (counts, halting)
}

#[test]
fn criterion_02_enumeration_oracle() {
    let start = Instant::now();
    let table = enumerate_machines(TuringMachineSpec::new(2, 107).unwrap()).unwrap();
    let (oracle, halting) = brute_force_22(107);
    let mut mismatches = 0;
    for (s, &c) in &oracle {
        let got = table.get(&s.parse::<Block>().unwrap());
        let want = frequency_bits(c, halting);
        let direct = -(c as f64 / halting as f64).log2();
        if got != Some(want) || (want - direct).abs() > 1e-6 {
            mismatches += 1;
        }
    }
    let mass = table.probability_mass();
    let pass = mismatches == 0 && table.len() == oracle.len() && table.total() == halting && mass <= 1.0 + 1e-12;
    report(
        2,
        "enumeration oracle",
        pass,
        format!("{} strings, {halting} halting machines, mass {mass:.9}, {mismatches} mismatches", oracle.len()),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. ODE parameter recovery.

#[test]
fn criterion_03_ode_recovery() {
    let start = Instant::now();
    let table = builtin_table();
    let opts = FitOptions::default();
    let grid: Vec<u32> = (1..=10).map(|k| k * 100).collect();
    let bank = OutputBank::build(&grid, opts.exec);
    let order = theta_order(table, opts.order_block, opts.exec).unwrap();
    let truth = encode_theta(&TRUE_THETA).unwrap();
    let rank = order.iter().position(|&c| c == truth as u64).unwrap();
    let full = fit_with_bank(&observe(&TRUE_THETA, &grid), &bank, &order, table, &opts).unwrap();
    let mut worst_pair_iters = 0;
    let mut pairs_ok = true;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let fit = fit_with_bank(&observe(&TRUE_THETA, &[grid[i], grid[j]]), &bank, &order, table, &opts).unwrap();
            pairs_ok &= fit.bits == truth;
            worst_pair_iters = worst_pair_iters.max(fit.iterations);
        }
    }
    let pass = full.bits == truth
        && format!("{:016b}", full.bits) == "0101000000010000"
        && full.iterations <= 10_000
        && pairs_ok
        && worst_pair_iters <= 10_000
        && (1_000..=20_000).contains(&rank);
    report(
        3,
        "ODE recovery",
        pass,
        format!(
            "truth rank {rank}, {} evaluations with 10 samples, every 2-sample pair recovers: {pairs_ok} (max {worst_pair_iters})",
            full.iterations
        ),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. ODE noise ordering.

#[test]
fn criterion_04_ode_noise() {
    let start = Instant::now();
    let cells = noise_experiment(SEED, &NoiseParams::default(), builtin_table(), &FitOptions::default()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for size in [5, 7, 10] {
        let at = |f: u32| cells.iter().find(|c| c.set_size == size && c.flips == f).unwrap().mean_distance;
        let low = (1..=4).map(at).sum::<f64>() / 4.0;
        let ok = at(0) == 0.0 && low < at(8);
        pass &= ok;
        detail.push(format!("n={size}: d0={:.3} d1..4={low:.3} d8={:.3}", at(0), at(8)));
    }
    report(4, "ODE noise ordering", pass, detail.join(", "), start);
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. ECA initial-condition classification.

fn task_eval(task: Task, data: &DatasetSplits) -> (Model, f64, TaskTables) {
    let tables = TaskTables::resolve(task, None, Exec::default()).unwrap();
    let model = train(task, &data.training, &tables, &TrainConfig::default(), Exec::default()).unwrap();
    let acc = model.evaluate(tables.tables(), &data.test, Exec::default()).unwrap().accuracy;
    (model, acc, tables)
}

#[test]
fn criterion_05_eca_init() {
    let start = Instant::now();
    let params = EcaInitParams::default();
    let data = gen_eca_init_dataset(SEED, &params).unwrap();
    let (model, acc, _) = task_eval(Task::EcaInit, &data);
    let Model::Centroid(m) = &model else { panic!("centroid model expected") };
    let exact = params
        .classes
        .iter()
        .filter(|&&c| m.centroid(&c.to_string()) == Some(&params.class_tensor(c)))
        .count();
    let pass = exact == params.classes.len() && acc >= 0.90;
    report(
        5,
        "ECA initial conditions",
        pass,
        format!("{exact}/{} centroids exact, accuracy {acc:.3}", params.classes.len()),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6 and 9. Reduced-scale ECA rule classifier, shared by both criteria.

struct EcaRuleRun {
    data: DatasetSplits,
    model: Model,
    tables: TaskTables,
    train_secs: f64,
}

fn eca_rule_run() -> &'static EcaRuleRun {
    static RUN: OnceLock<EcaRuleRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        // 11 classes: 10 training samples each, 23 test samples each (253)
        let sizes = SplitSizes { training: 10, validation: 0, test: 23 };
        let data = gen_eca_rule_dataset_sized(SEED, sizes, Exec::default()).unwrap();
        let tables = TaskTables::resolve(Task::EcaRules, None, Exec::default()).unwrap();
        let cfg = TrainConfig { budget: 100_000, ..TrainConfig::default() };
        let model = train(Task::EcaRules, &data.training, &tables, &cfg, Exec::default()).unwrap();
        EcaRuleRun { data, model, tables, train_secs: start.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_06_eca_rules() {
    let start = Instant::now();
    let run = eca_rule_run();
    let e = run.model.evaluate(run.tables.tables(), &run.data.test, Exec::default()).unwrap();
    let i110 = e.classes.iter().position(|c| c == "110").unwrap();
    let row = &e.confusion[i110];
    let rule110 = row[i110] as f64 / row.iter().sum::<usize>() as f64;
    let pass = e.accuracy >= 0.85 && rule110 >= 0.90;
    report(
        6,
        "ECA rules",
        pass,
        format!(
            "accuracy {:.3} on {} samples, rule 110 recall {rule110:.3}, training {:.1}s",
            e.accuracy, e.total, run.train_secs
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_09_one_pixel_sweep() {
    let start = Instant::now();
    let run = eca_rule_run();
    let before = run.data.test.to_text();
    let predict = run.model.predictor(run.tables.tables()).unwrap();
    let r = one_pixel_sweep_with(&run.data.test, predict, Exec::default()).unwrap();
    let unchanged = run.data.test.to_text() == before;
    let pass = r.pct_pixels <= 0.05 && unchanged;
    report(
        9,
        "one-pixel sweep",
        pass,
        format!(
            "{} vulnerable pixels over {} samples, {:.2} per sample, {:.3}% of pixels, data unchanged: {unchanged}",
            r.total_vulnerabilities,
            r.samples,
            r.per_sample_mean,
            100.0 * r.pct_pixels
        ),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Kauffman in-degree classification.

#[test]
fn criterion_07_nk_k_class() {
    let start = Instant::now();
    let data = gen_nk_datasets(NkTask::KClass, SEED, &NkParams::default()).unwrap();
    let (_, bdm_acc, tables) = task_eval(Task::NkKClass, &data);
    let cfg = TrainConfig { measure: algoprob::classifier::Measure::Entropy { block: 1 }, ..TrainConfig::default() };
    let ent = train(Task::NkKClass, &data.training, &tables, &cfg, Exec::default()).unwrap();
    let ent_acc = ent.evaluate(tables.tables(), &data.test, Exec::default()).unwrap().accuracy;
    // reported only: nearest neighbour on the same scalar
    let measure = algoprob::classifier::Measure::Bdm { block: 8 };
    let nn = NearestNeighbour::train(&data.training, measure, Some(tables.ctm), Exec::default()).unwrap();
    let nn_acc = evaluate(
        &nn.classes,
        &data.test,
        |x| nn.predict_index(Some(tables.ctm), x),
        Exec::default(),
    )
    .unwrap()
    .accuracy;
    let pass = (bdm_acc - 0.70).abs() <= 0.10 && bdm_acc > ent_acc;
    report(
        7,
        "NK in-degree",
        pass,
        format!("BDM {bdm_acc:.3}, entropy {ent_acc:.3}, BDM nearest neighbour {nn_acc:.3}"),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. NK conditional databases against a separate enumeration.

/// `(node inputs, function codes)` outcome from the all-zero state, written
/// out directly: 0=and 1=or 2=nand 3=xor.
fn nk_run(inputs: &[[usize; 2]; 4], codes: [u8; 4]) -> String {
    let mut state = [false; 4];
    let mut out = String::new();
    for _ in 0..10 {
        let mut next = [false; 4];
        for node in 0..4 {
            let (a, b) = (state[inputs[node][0]], state[inputs[node][1]]);
            next[node] = match codes[node] {
                0 => a && b,
                1 => a || b,
                2 => !(a && b),
                _ => a != b,
            };
        }
        state = next;
        out.extend(state.iter().map(|&v| if v { '1' } else { '0' }));
    }
    out
}

#[test]
fn criterion_08_nk_databases() {
    let start = Instant::now();
    let dbs = build_nk_cond_dbs().unwrap();
    let pairs: Vec<[usize; 2]> = (0..4).flat_map(|a| (a + 1..4).map(move |b| [a, b])).collect();
    let mut topo: HashMap<(String, String), u64> = HashMap::new();
    let mut rules: HashMap<(String, String), u64> = HashMap::new();
    let mut networks = 0u64;
    for t in 0..6usize.pow(4) {
        let inputs = [pairs[t / 216], pairs[t / 36 % 6], pairs[t / 6 % 6], pairs[t % 6]];
        let mut adj = ['0'; 16];
        for (j, inp) in inputs.iter().enumerate() {
            for &i in inp {
                adj[i * 4 + j] = '1';
            }
        }
        let adj: String = format!("4x4:{}", adj.iter().collect::<String>());
        for r in 0..256usize {
            let codes = [(r >> 6) as u8 & 3, (r >> 4) as u8 & 3, (r >> 2) as u8 & 3, r as u8 & 3];
            let key = format!("{r:08b}");
            let out = nk_run(&inputs, codes);
            *topo.entry((adj.clone(), out.clone())).or_default() += 1;
            *rules.entry((key, out)).or_default() += 1;
            networks += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut sampled = 0;
    let mut mismatches = 0;
    for (db, oracle) in [(&dbs.topology, &topo), (&dbs.rules, &rules)] {
        let entries = db.sorted_entries();
        for _ in 0..50 {
            let (cond, outcome, count) = &entries[rng.gen_range(0..entries.len())];
            let want = oracle.get(&(cond.to_string(), outcome.to_str01())).copied().unwrap_or(0);
            sampled += 1;
            if want != *count || db.count(outcome, cond) != want {
                mismatches += 1;
            }
        }
        if db.len() != oracle.len() || db.total() != networks {
            mismatches += 1;
        }
    }
    let pass = networks == 331_776
        && dbs.networks == networks
        && mismatches == 0
        && dbs.topology.missing_penalty() == NK_MISSING_PENALTY
        && dbs.rules.missing_penalty() == 19.0;
    report(
        8,
        "NK conditional databases",
        pass,
        format!(
            "{networks} networks, {} topology pairs, {} rule pairs, {sampled} sampled entries, {mismatches} mismatches",
            dbs.topology.len(),
            dbs.rules.len()
        ),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. Sample weighting on salted data.

#[test]
fn criterion_10_weighting() {
    let start = Instant::now();
    let sizes = SplitSizes { training: 40, validation: 0, test: 0 };
    let clean = gen_eca_rule_dataset_sized(SEED, sizes, Exec::default()).unwrap().training;
    let salted = salt(&clean, 0.4, 0.3, SEED).unwrap();
    let spec = WeightSpec::default();
    let table = builtin_block_table();
    let s = PartitionStrategy::blocks(4, 4);
    let rows = compute_weights(&salted.dataset, &spec, table, &s, Exec::default()).unwrap();
    let again = compute_weights(&salted.dataset, &spec, table, &s, Exec::default()).unwrap();
    let deterministic = weights_csv(&rows, &[("seed", SEED.to_string())]) == weights_csv(&again, &[("seed", SEED.to_string())]);
    let mut worst_class = String::new();
    let mut worst_gap = f64::INFINITY;
    let mut ok_classes = 0;
    let labels = clean.labels();
    for class in &labels {
        let mean = |want: bool| {
            let w: Vec<f64> = rows
                .iter()
                .filter(|r| &r.class == class && salted.salted.binary_search(&r.index).is_ok() == want)
                .map(|r| r.weight)
                .collect();
            w.iter().sum::<f64>() / w.len() as f64
        };
        let gap = mean(false) - mean(true);
        if gap > 0.0 {
            ok_classes += 1;
        }
        if gap < worst_gap {
            worst_gap = gap;
            worst_class = class.clone();
        }
    }
    let pass = ok_classes == labels.len() && deterministic;
    report(
        10,
        "salted weighting",
        pass,
        format!(
            "{ok_classes}/{} classes weight salted samples lower (smallest gap {worst_gap:.3} in class {worst_class}), deterministic export: {deterministic}",
            labels.len()
        ),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 11. Shapes of the partition and entropy experiments.

#[test]
fn criterion_11_experiment_shapes() {
    let start = Instant::now();
    let table = builtin_table();
    let params = PartitionParams::default();
    let points = partition_sweep(SEED, &params, table, Exec::default()).unwrap();
    let by_count: Vec<bool> =
        params.distributions.iter().map(|&o| weakly_increasing(&points, o, 1..=10, Normalization::BlockCount)).collect();
    let by_length: Vec<bool> =
        params.distributions.iter().map(|&o| weakly_increasing(&points, o, 1..=10, Normalization::BlockLength)).collect();
    let hv = entropy_vs_bdm(SEED, &HvBdmParams::default(), table, Exec::default()).unwrap();
    let finite = hv.iter().all(|p| {
        [p.bdm_ratio, p.entropy_ratio, p.bdm_normalized, p.entropy_normalized].iter().all(|v| v.is_finite())
    });
    let pass = by_count.iter().all(|&b| b) && hv.len() == 19 && finite;
    report(
        11,
        "experiment shapes",
        pass,
        format!(
            "partition increasing per block count {by_count:?}, per block length {by_length:?} (reported only); {} entropy/BDM points, finite: {finite}",
            hv.len()
        ),
        start,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 12. Complexity order against random order.

#[test]
fn criterion_12_speedup() {
    let start = Instant::now();
    let r = speedup(SEED, &SpeedupParams::default(), builtin_table(), Exec::default()).unwrap();
    let pass = r.trials.len() == 20 && r.ordered_mean < r.random_mean;
    report(
        12,
        "ordered search speed-up",
        pass,
        format!("mean hits: ordered {:.1}, random {:.1} over {} targets", r.ordered_mean, r.random_mean, r.trials.len()),
        start,
    );
    assert!(pass);
}
