//! Seeded generation of elementary cellular automata, NK networks and the
//! labelled datasets built from them, plus image binarization and salting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::par::Exec;
use crate::tensor::BinaryTensor;

/// A deterministic RNG for one stream of work derived from a seed.
pub fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EcaRule(pub u8);

impl EcaRule {
    pub fn new(number: u32) -> Result<Self> {
        u8::try_from(number)
            .map(EcaRule)
            .map_err(|_| Error::InvalidArgument(format!("ECA rule {number} outside 0..=255")))
    }

    /// Next state of a cell from its `(left, centre, right)` neighbourhood.
    #[inline]
    pub fn apply(self, left: bool, centre: bool, right: bool) -> bool {
        let idx = (left as u8) << 2 | (centre as u8) << 1 | right as u8;
        (self.0 >> idx) & 1 == 1
    }
}

/// One synchronous update of a cyclic row packed MSB-first into the low
/// `width` bits of `state`. Requires `3 <= width <= 64`.
pub fn eca_step_bits(rule: EcaRule, state: u64, width: u32) -> u64 {
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    // Cell i sits at bit width-1-i, so the left neighbour is one bit higher.
    let left = (state >> 1) | ((state & 1) << (width - 1));
    let right = ((state << 1) & mask) | (state >> (width - 1));
    let mut next = 0u64;
    for pattern in 0..8u8 {
        if (rule.0 >> pattern) & 1 == 0 {
            continue;
        }
        let l = if pattern & 4 != 0 { left } else { !left };
        let c = if pattern & 2 != 0 { state } else { !state };
        let r = if pattern & 1 != 0 { right } else { !right };
        next |= l & c & r;
    }
    next & mask
}

/// Evolves a `1×w` row for `steps` updates with a cyclic boundary. Row 0 of
/// the result is the initial row.
pub fn eca_evolve(rule: EcaRule, init: &BinaryTensor, steps: usize) -> Result<BinaryTensor> {
    if init.rows() != 1 || init.cols() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "ECA initial state must be 1xw with w >= 3, got {}x{}",
            init.rows(),
            init.cols()
        )));
    }
    let w = init.cols();
    let mut out = BinaryTensor::zeros(steps + 1, w);
    out.paste(0, 0, init);
    if w <= 64 {
        let mut state = init.to_uint() as u64;
        for r in 1..=steps {
            state = eca_step_bits(rule, state, w as u32);
            out.paste(r, 0, &BinaryTensor::from_uint(state as u128, w));
        }
        return Ok(out);
    }
    for r in 1..=steps {
        for c in 0..w {
            let left = out.get(r - 1, (c + w - 1) % w);
            let centre = out.get(r - 1, c);
            let right = out.get(r - 1, (c + 1) % w);
            out.set(r, c, rule.apply(left, centre, right));
        }
    }
    Ok(out)
}

/// The four two-input functions used for NK rule lists, in code order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoolFn {
    And,
    Or,
    Nand,
    XOr,
}

impl BoolFn {
    pub const ALL: [BoolFn; 4] = [BoolFn::And, BoolFn::Or, BoolFn::Nand, BoolFn::XOr];

    /// Two-bit code: And=00, Or=01, Nand=10, XOr=11.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        BoolFn::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("bad function code {code}")))
    }

    /// Truth table over `k` inputs. Row `i` of the table is output bit `i`,
    /// where the first listed input is the most significant bit of `i`.
    pub fn truth_table(self, k: usize) -> TruthTable {
        let mut bits = 0u64;
        for i in 0..(1u64 << k) {
            let ones = i.count_ones() as usize;
            let v = match self {
                BoolFn::And => ones == k,
                BoolFn::Or => ones > 0,
                BoolFn::Nand => ones != k,
                BoolFn::XOr => ones % 2 == 1,
            };
            bits |= (v as u64) << i;
        }
        TruthTable { k: k as u8, bits }
    }
}

impl fmt::Display for BoolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoolFn::And => "and",
            BoolFn::Or => "or",
            BoolFn::Nand => "nand",
            BoolFn::XOr => "xor",
        };
        f.write_str(s)
    }
}

/// A Boolean function of `k <= 6` inputs stored as `2^k` output bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruthTable {
    k: u8,
    bits: u64,
}

impl TruthTable {
    pub const MAX_ARITY: usize = 6;

    pub fn new(k: usize, bits: u64) -> Result<Self> {
        if k == 0 || k > Self::MAX_ARITY {
            return Err(Error::InvalidArgument(format!("arity {k} outside 1..=6")));
        }
        let rows = 1u32 << k;
        if rows < 64 && bits >> rows != 0 {
            return Err(Error::InvalidArgument(format!(
                "truth table {bits:#x} has more than {rows} bits"
            )));
        }
        Ok(TruthTable { k: k as u8, bits })
    }

    pub fn arity(&self) -> usize {
        self.k as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn eval(&self, index: usize) -> bool {
        (self.bits >> index) & 1 == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NkNetwork {
    n: usize,
    k: usize,
    inputs: Vec<Vec<usize>>,
    functions: Vec<TruthTable>,
}

impl NkNetwork {
    pub fn new(inputs: Vec<Vec<usize>>, functions: Vec<TruthTable>) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || n > 64 {
            return Err(Error::InvalidArgument(format!("node count {n} outside 1..=64")));
        }
        if functions.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} functions for {n} nodes",
                functions.len()
            )));
        }
        let k = inputs[0].len();
        for (i, list) in inputs.iter().enumerate() {
            if list.len() != k {
                return Err(Error::InvalidArgument(format!("node {i} has {} inputs, expected {k}", list.len())));
            }
            let mut seen = list.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != k || seen.iter().any(|&j| j >= n) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} inputs {list:?} must be {k} distinct nodes below {n}"
                )));
            }
            if functions[i].arity() != k {
                return Err(Error::InvalidArgument(format!(
                    "node {i} function has arity {}, expected {k}",
                    functions[i].arity()
                )));
            }
        }
        Ok(NkNetwork { n, k, inputs, functions })
    }

    /// A network whose every node uses one of the named two-input functions.
    pub fn with_rule_list(inputs: Vec<Vec<usize>>, rules: &[BoolFn]) -> Result<Self> {
        let k = inputs.first().map_or(0, Vec::len);
        NkNetwork::new(inputs, rules.iter().map(|f| f.truth_table(k)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn inputs(&self) -> &[Vec<usize>] {
        &self.inputs
    }

    pub fn functions(&self) -> &[TruthTable] {
        &self.functions
    }

    /// `n×n` matrix with a 1 at `(i, j)` when node `i` feeds node `j`.
    pub fn adjacency(&self) -> BinaryTensor {
        let mut m = BinaryTensor::zeros(self.n, self.n);
        for (j, list) in self.inputs.iter().enumerate() {
            for &i in list {
                m.set(i, j, true);
            }
        }
        m
    }

    /// One synchronous update; node `i` is bit `n-1-i` of the packed state.
    pub fn step_bits(&self, state: u64) -> u64 {
        let n = self.n;
        let mut next = 0u64;
        for (i, (list, f)) in self.inputs.iter().zip(&self.functions).enumerate() {
            let mut idx = 0usize;
            for &j in list {
                idx = idx << 1 | ((state >> (n - 1 - j)) & 1) as usize;
            }
            if f.eval(idx) {
                next |= 1 << (n - 1 - i);
            }
        }
        next
    }

    /// Concatenated states after each of `steps` updates, initial state
    /// excluded, as a `1×(n·steps)` tensor.
    pub fn evolve(&self, init: &BinaryTensor, steps: usize) -> Result<BinaryTensor> {
        if init.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "initial state has {} bits for {} nodes",
                init.len(),
                self.n
            )));
        }
        let mut state = init.to_uint() as u64;
        let mut out = BinaryTensor::zeros(1, self.n * steps);
        for s in 0..steps {
            state = self.step_bits(state);
            out.paste(0, s * self.n, &BinaryTensor::from_uint(state as u128, self.n));
        }
        Ok(out)
    }

    /// A random network with uniformly drawn input sets and truth tables.
    pub fn random(n: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        if k == 0 || k > n || k > TruthTable::MAX_ARITY {
            return Err(Error::InvalidArgument(format!("in-degree {k} invalid for {n} nodes")));
        }
        let nodes: Vec<usize> = (0..n).collect();
        let inputs = (0..n)
            .map(|_| nodes.choose_multiple(rng, k).copied().collect())
            .collect();
        let rows = 1u32 << k;
        let functions = (0..n)
            .map(|_| {
                let bits = if rows == 64 { rng.gen() } else { rng.gen_range(0..1u64 << rows) };
                TruthTable::new(k, bits)
            })
            .collect::<Result<_>>()?;
        NkNetwork::new(inputs, functions)
    }
}

/// Nodes feeding node `j` for each of the `C(4,2)^4` two-input topologies
/// over four nodes, enumerated in a fixed order.
pub fn all_k2_topologies(n: usize) -> Vec<Vec<Vec<usize>>> {
    let pairs: Vec<Vec<usize>> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| vec![a, b]))
        .collect();
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pairs.iter().map(move |p| {
                    let mut next = prefix.clone();
                    next.push(p.clone());
                    next
                })
            })
            .collect();
    }
    out
}

/// Every list of `n` functions drawn from [`BoolFn::ALL`].
pub fn all_rule_lists(n: usize) -> Vec<Vec<BoolFn>> {
    (0..4usize.pow(n as u32))
        .map(|code| {
            (0..n)
                .map(|i| BoolFn::ALL[(code >> (2 * (n - 1 - i))) & 3])
                .collect()
        })
        .collect()
}

/// 2-bit codes of a rule list packed in node order, as a `1×2n` tensor.
pub fn rule_list_key(rules: &[BoolFn]) -> BinaryTensor {
    let v = rules.iter().fold(0u128, |acc, f| acc << 2 | f.code() as u128);
    BinaryTensor::from_uint(v, 2 * rules.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Training,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Validation, Split::Test];

    fn stream(self) -> u64 {
        match self {
            Split::Training => 1,
            Split::Validation => 2,
            Split::Test => 3,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Training => "training",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" | "train" => Ok(Split::Training),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tensor: BinaryTensor,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledDataset {
    pub split: Split,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl LabelledDataset {
    pub fn new(split: Split, seed: u64, samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let shape = first.tensor.shape();
            if let Some(bad) = samples.iter().find(|s| s.tensor.shape() != shape) {
                return Err(Error::ShapeMismatch(format!(
                    "sample shape {:?} differs from {:?}",
                    bad.tensor.shape(),
                    shape
                )));
            }
        }
        Ok(LabelledDataset { split, seed, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.label) {
                out.push(s.label.clone());
            }
        }
        out
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| s.tensor.shape())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&format!("{}\t{}\n", s.label, s.tensor));
        }
        out
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn read(reader: impl Read, split: Split, seed: u64) -> Result<Self> {
        let mut samples = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, tensor) = line
                .split_once('\t')
                .ok_or_else(|| Error::malformed(idx + 1, "expected `<label>\\t<RxC>:<bits>`"))?;
            let tensor: BinaryTensor = tensor
                .parse()
                .map_err(|e| Error::malformed(idx + 1, format!("{e}")))?;
            samples.push(Sample { tensor, label: label.to_string() });
        }
        LabelledDataset::new(split, seed, samples)
    }

    pub fn load(path: impl AsRef<Path>, split: Split, seed: u64) -> Result<Self> {
        Self::read(std::fs::File::open(path)?, split, seed)
    }
}

/// Training, validation and test sets of one generated task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplits {
    pub task: String,
    pub seed: u64,
    pub training: LabelledDataset,
    pub validation: LabelledDataset,
    pub test: LabelledDataset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: String,
    pub seed: u64,
    pub splits: BTreeMap<String, usize>,
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub config_hash: String,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &LabelledDataset {
        match split {
            Split::Training => &self.training,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Writes `<task>_<split>.tsv` for each split plus `manifest.json`.
    pub fn persist(&self, dir: impl AsRef<Path>, config_hash: &str) -> Result<Manifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest {
            task: self.task.clone(),
            seed: self.seed,
            splits: BTreeMap::new(),
            files: BTreeMap::new(),
            config_hash: config_hash.to_string(),
        };
        for split in Split::ALL {
            let ds = self.get(split);
            let name = format!("{}_{}.tsv", self.task, split);
            let text = format!(
                "# task={}\n# split={split}\n# seed={}\n# config_hash={config_hash}\n{}",
                self.task,
                self.seed,
                ds.to_text()
            );
            atomic_write(&dir.join(&name), text.as_bytes())?;
            manifest.splits.insert(split.to_string(), ds.len());
            manifest.files.insert(split.to_string(), name);
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        atomic_write(&dir.join("manifest.json"), json.as_bytes())?;
        Ok(manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let load = |split: Split| -> Result<LabelledDataset> {
            let name = manifest
                .files
                .get(&split.to_string())
                .ok_or_else(|| Error::InvalidArgument(format!("manifest lacks split {split}")))?;
            LabelledDataset::load(dir.join(name), split, manifest.seed)
        };
        Ok(DatasetSplits {
            task: manifest.task.clone(),
            seed: manifest.seed,
            training: load(Split::Training)?,
            validation: load(Split::Validation)?,
            test: load(Split::Test)?,
        })
    }
}

/// Builds a split by calling `make(class_index, rng)` for `per_class` samples
/// of every class, each sample on its own RNG stream.
fn build_split(
    split: Split,
    seed: u64,
    labels: &[String],
    per_class: usize,
    exec: Exec,
    make: impl Fn(usize, &mut ChaCha8Rng) -> BinaryTensor + Sync,
) -> Result<LabelledDataset> {
    let n = labels.len() * per_class;
    let tensors = exec.map_range(n, |i| {
        let mut rng = sub_rng(seed, split.stream() << 32 | i as u64);
        make(i / per_class, &mut rng)
    });
    let samples = tensors
        .into_iter()
        .enumerate()
        .map(|(i, tensor)| Sample { tensor, label: labels[i / per_class].clone() })
        .collect();
    LabelledDataset::new(split, seed, samples)
}

pub const ECA_RULE_CLASSES: [u8; 11] = [167, 11, 129, 215, 88, 32, 237, 156, 173, 236, 110];

/// Samples per class for each split of a generated task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub training: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Training => self.training,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// 32×32 evolutions of the eleven rule classes from random initial rows.
pub fn gen_eca_rule_dataset(seed: u64) -> Result<DatasetSplits> {
    gen_eca_rule_dataset_sized(
        seed,
        SplitSizes { training: 25, validation: 25, test: 125 },
        Exec::default(),
    )
}

pub fn gen_eca_rule_dataset_sized(seed: u64, sizes: SplitSizes, exec: Exec) -> Result<DatasetSplits> {
    let labels: Vec<String> = ECA_RULE_CLASSES.iter().map(|r| r.to_string()).collect();
    let build = |split: Split| {
        build_split(split, seed, &labels, sizes.get(split), exec, |class, rng| {
            let init = BinaryTensor::from_uint(rng.gen::<u32>() as u128, 32);
            eca_evolve(EcaRule(ECA_RULE_CLASSES[class]), &init, 31).expect("valid width")
        })
    };
    Ok(DatasetSplits {
        task: "eca_rules".into(),
        seed,
        training: build(Split::Training)?,
        validation: build(Split::Validation)?,
        test: build(Split::Test)?,
    })
}

pub const ECA_INIT_CLASSES: [u32; 10] = [704, 3572, 3067, 3184, 1939, 2386, 2896, 205, 828, 3935];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcaInitParams {
    pub width: usize,
    pub steps: usize,
    pub n_rules: u32,
    /// Initial rows as integers, most significant bit first.
    pub classes: Vec<u32>,
    pub samples_per_split: usize,
}

impl Default for EcaInitParams {
    fn default() -> Self {
        EcaInitParams {
            width: 12,
            steps: 4,
            n_rules: 128,
            classes: ECA_INIT_CLASSES.to_vec(),
            samples_per_split: 200,
        }
    }
}

impl EcaInitParams {
    /// Width 24 with 20 seeded distinct classes.
    pub fn wide(seed: u64) -> Self {
        let mut rng = sub_rng(seed, 0xC1A55);
        let mut classes: Vec<u32> = Vec::new();
        while classes.len() < 20 {
            let c = rng.gen_range(0..1u32 << 24);
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
        EcaInitParams { width: 24, classes, samples_per_split: 400, ..EcaInitParams::default() }
    }

    pub fn class_tensor(&self, class: u32) -> BinaryTensor {
        BinaryTensor::from_uint(class as u128, self.width)
    }
}

/// `steps × width` evolutions (initial row removed) of the class initial rows
/// under a random rule below `n_rules`.
pub fn gen_eca_init_dataset(seed: u64, params: &EcaInitParams) -> Result<DatasetSplits> {
    if params.classes.is_empty() || params.samples_per_split % params.classes.len() != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} samples per split do not divide evenly over {} classes",
            params.samples_per_split,
            params.classes.len()
        )));
    }
    if params.n_rules == 0 || params.n_rules > 256 || params.width < 3 || params.steps == 0 {
        return Err(Error::InvalidArgument("invalid ECA initial-condition parameters".into()));
    }
    if params.width < 32 && params.classes.iter().any(|&c| c >> params.width != 0) {
        return Err(Error::InvalidArgument(format!("class wider than {} bits", params.width)));
    }
    let labels: Vec<String> = params.classes.iter().map(|c| c.to_string()).collect();
    let per_class = params.samples_per_split / params.classes.len();
    let build = |split: Split| {
        build_split(split, seed, &labels, per_class, Exec::default(), |class, rng| {
            let rule = EcaRule(rng.gen_range(0..params.n_rules) as u8);
            let init = params.class_tensor(params.classes[class]);
            let evo = eca_evolve(rule, &init, params.steps).expect("valid width");
            evo.window(1, 0, params.steps, params.width)
        })
    };
    Ok(DatasetSplits {
        task: "eca_init".into(),
        seed,
        training: build(Split::Training)?,
        validation: build(Split::Validation)?,
        test: build(Split::Test)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NkTask {
    KClass,
    Rules,
    Topology,
}

impl FromStr for NkTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k_class" | "k-class" => Ok(NkTask::KClass),
            "rules" => Ok(NkTask::Rules),
            "topology" => Ok(NkTask::Topology),
            _ => Err(Error::InvalidArgument(format!("unknown NK task `{s}`"))),
        }
    }
}

/// Which functions a generated rule list must contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleListConstraint {
    pub require_xor: bool,
    pub require_nand: bool,
}

impl Default for RuleListConstraint {
    /// From the all-zero state only Nand can produce a 1, so without it every
    /// evolution is identically zero.
    fn default() -> Self {
        RuleListConstraint { require_xor: true, require_nand: true }
    }
}

impl RuleListConstraint {
    pub fn admits(&self, rules: &[BoolFn]) -> bool {
        (!self.require_xor || rules.contains(&BoolFn::XOr))
            && (!self.require_nand || rules.contains(&BoolFn::Nand))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NkParams {
    /// Nodes of the rules and topology tasks; the k-class task uses `k_nodes`.
    pub nodes: usize,
    pub steps: usize,
    pub classes: usize,
    pub constraint: RuleListConstraint,
    pub sizes: SplitSizes,
    pub k_nodes: usize,
    pub k_values: Vec<usize>,
    pub k_sizes: SplitSizes,
}

impl Default for NkParams {
    fn default() -> Self {
        NkParams {
            nodes: 4,
            steps: 10,
            classes: 10,
            constraint: RuleListConstraint::default(),
            sizes: SplitSizes { training: 20, validation: 20, test: 200 },
            k_nodes: 24,
            k_values: vec![1, 2, 3],
            k_sizes: SplitSizes { training: 100, validation: 100, test: 100 },
        }
    }
}

fn random_k2_inputs(n: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let nodes: Vec<usize> = (0..n).collect();
    (0..n)
        .map(|_| {
            let mut pair: Vec<usize> = nodes.choose_multiple(rng, 2).copied().collect();
            pair.sort_unstable();
            pair
        })
        .collect()
}

fn random_rule_list(n: usize, constraint: RuleListConstraint, rng: &mut impl Rng) -> Result<Vec<BoolFn>> {
    let needed = constraint.require_xor as usize + constraint.require_nand as usize;
    if needed > n {
        return Err(Error::InvalidArgument(format!(
            "{n} nodes cannot satisfy the rule-list constraint"
        )));
    }
    loop {
        let rules: Vec<BoolFn> = (0..n).map(|_| BoolFn::ALL[rng.gen_range(0..4)]).collect();
        if constraint.admits(&rules) {
            return Ok(rules);
        }
    }
}

/// NK network datasets. The k-class task labels random-state evolutions of
/// random networks by in-degree; the rules and topology tasks label
/// zero-state evolutions by a fixed rule list or a fixed topology.
pub fn gen_nk_datasets(task: NkTask, seed: u64, params: &NkParams) -> Result<DatasetSplits> {
    let (labels, sizes, name): (Vec<String>, SplitSizes, &str) = match task {
        NkTask::KClass => (
            params.k_values.iter().map(|k| k.to_string()).collect(),
            params.k_sizes,
            "nk_k_class",
        ),
        NkTask::Rules => ((0..params.classes).map(|c| c.to_string()).collect(), params.sizes, "nk_rules"),
        NkTask::Topology => ((0..params.classes).map(|c| c.to_string()).collect(), params.sizes, "nk_topology"),
    };
    let mut class_rng = sub_rng(seed, 0);
    let mut fixed_rules: Vec<Vec<BoolFn>> = Vec::new();
    let mut fixed_topologies: Vec<Vec<Vec<usize>>> = Vec::new();
    match task {
        NkTask::KClass => {}
        NkTask::Rules => {
            while fixed_rules.len() < params.classes {
                let r = random_rule_list(params.nodes, params.constraint, &mut class_rng)?;
                if !fixed_rules.contains(&r) {
                    fixed_rules.push(r);
                }
            }
        }
        NkTask::Topology => {
            while fixed_topologies.len() < params.classes {
                let t = random_k2_inputs(params.nodes, &mut class_rng);
                if !fixed_topologies.contains(&t) {
                    fixed_topologies.push(t);
                }
            }
        }
    }
    let zero = BinaryTensor::zeros(1, params.nodes);
    let make = |class: usize, rng: &mut ChaCha8Rng| -> BinaryTensor {
        let net = match task {
            NkTask::KClass => {
                let k = params.k_values[class];
                let net = NkNetwork::random(params.k_nodes, k, rng).expect("valid k");
                let init = BinaryTensor::from_fn(1, params.k_nodes, |_, _| rng.gen());
                return net.evolve(&init, params.steps).expect("init width");
            }
            NkTask::Rules => {
                let inputs = random_k2_inputs(params.nodes, rng);
                NkNetwork::with_rule_list(inputs, &fixed_rules[class])
            }
            NkTask::Topology => {
                let rules = random_rule_list(params.nodes, params.constraint, rng).expect("checked");
                NkNetwork::with_rule_list(fixed_topologies[class].clone(), &rules)
            }
        };
        net.expect("valid network").evolve(&zero, params.steps).expect("init width")
    };
    if task == NkTask::KClass && params.k_values.iter().any(|&k| k == 0 || k > params.k_nodes.min(6)) {
        return Err(Error::InvalidArgument(format!("in-degrees {:?} invalid", params.k_values)));
    }
    if task != NkTask::KClass {
        random_rule_list(params.nodes, params.constraint, &mut sub_rng(seed, 1))?;
    }
    let build = |split: Split| build_split(split, seed, &labels, sizes.get(split), Exec::default(), make);
    Ok(DatasetSplits {
        task: name.into(),
        seed,
        training: build(Split::Training)?,
        validation: build(Split::Validation)?,
        test: build(Split::Test)?,
    })
}

/// The fixed per-class conditions of an NK rules or topology dataset, in class
/// order: rule-list keys or flattened adjacency matrices.
pub fn nk_class_conditions(task: NkTask, seed: u64, params: &NkParams) -> Result<Vec<BinaryTensor>> {
    let mut class_rng = sub_rng(seed, 0);
    let mut out: Vec<BinaryTensor> = Vec::new();
    match task {
        NkTask::KClass => {
            return Err(Error::InvalidArgument("the k-class task has no fixed conditions".into()))
        }
        NkTask::Rules => {
            let mut seen: Vec<Vec<BoolFn>> = Vec::new();
            while seen.len() < params.classes {
                let r = random_rule_list(params.nodes, params.constraint, &mut class_rng)?;
                if !seen.contains(&r) {
                    out.push(rule_list_key(&r));
                    seen.push(r);
                }
            }
        }
        NkTask::Topology => {
            let mut seen: Vec<Vec<Vec<usize>>> = Vec::new();
            while seen.len() < params.classes {
                let t = random_k2_inputs(params.nodes, &mut class_rng);
                if !seen.contains(&t) {
                    let net = NkNetwork::with_rule_list(t.clone(), &vec![BoolFn::And; params.nodes])?;
                    out.push(net.adjacency());
                    seen.push(t);
                }
            }
        }
    }
    Ok(out)
}

/// A grayscale image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} image",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(GrayImage { rows, cols, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Pixels strictly above `threshold` become 1.
pub fn binarize(image: &GrayImage, threshold: f64) -> BinaryTensor {
    BinaryTensor::from_fn(image.rows, image.cols, |r, c| image.values[r * image.cols + c] > threshold)
}

fn check_pct(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{name} {p} outside [0, 1]")));
    }
    Ok(())
}

/// Shuffles the values at a random `pct_pixels` subset of positions.
pub fn shuffle_pixels<T: Copy>(values: &mut [T], pct_pixels: f64, rng: &mut impl Rng) {
    let m = (pct_pixels * values.len() as f64).round() as usize;
    let mut positions: Vec<usize> = (0..values.len()).collect();
    positions.shuffle(rng);
    positions.truncate(m);
    let mut picked: Vec<T> = positions.iter().map(|&p| values[p]).collect();
    picked.shuffle(rng);
    for (p, v) in positions.into_iter().zip(picked) {
        values[p] = v;
    }
}

/// Salting result: the corrupted dataset and the indices that were salted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Salted {
    pub dataset: LabelledDataset,
    pub salted: Vec<usize>,
}

/// Picks `pct_samples` of each class and shuffles `pct_pixels` of the pixel
/// positions of every picked sample.
pub fn salt(ds: &LabelledDataset, pct_samples: f64, pct_pixels: f64, seed: u64) -> Result<Salted> {
    check_pct("pct_samples", pct_samples)?;
    check_pct("pct_pixels", pct_pixels)?;
    let mut rng = sub_rng(seed, 0x5A17);
    let mut salted = Vec::new();
    for label in ds.labels() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == label).collect();
        let m = (pct_samples * idx.len() as f64).round() as usize;
        idx.shuffle(&mut rng);
        salted.extend_from_slice(&idx[..m]);
    }
    salted.sort_unstable();
    let mut out = ds.clone();
    for &i in &salted {
        let t = &mut out.samples[i].tensor;
        let mut bits = t.to_bit_vec();
        let mut prng = sub_rng(seed, 0x5A17_0000_0000 | i as u64);
        shuffle_pixels(&mut bits, pct_pixels, &mut prng);
        *t = BinaryTensor::from_bits(t.rows(), t.cols(), &bits)?;
    }
    Ok(Salted { dataset: out, salted })
}

/// Grayscale salting; the same selection and shuffling as [`salt`].
pub fn salt_gray(
    images: &[(GrayImage, String)],
    pct_samples: f64,
    pct_pixels: f64,
    seed: u64,
) -> Result<(Vec<(GrayImage, String)>, Vec<usize>)> {
    check_pct("pct_samples", pct_samples)?;
    check_pct("pct_pixels", pct_pixels)?;
    let mut rng = sub_rng(seed, 0x5A17);
    let mut labels: Vec<&String> = Vec::new();
    for (_, l) in images {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let mut salted = Vec::new();
    for label in labels {
        let mut idx: Vec<usize> = (0..images.len()).filter(|&i| &images[i].1 == label).collect();
        let m = (pct_samples * idx.len() as f64).round() as usize;
        idx.shuffle(&mut rng);
        salted.extend_from_slice(&idx[..m]);
    }
    salted.sort_unstable();
    let mut out = images.to_vec();
    for &i in &salted {
        let mut prng = sub_rng(seed, 0x5A17_0000_0000 | i as u64);
        shuffle_pixels(&mut out[i].0.values, pct_pixels, &mut prng);
    }
    Ok((out, salted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> BinaryTensor {
        s.parse().unwrap()
    }

    #[test]
    fn rule_zero_absorbs() {
        let evo = eca_evolve(EcaRule(0), &t("1011010"), 3).unwrap();
        assert_eq!(evo.shape(), (4, 7));
        assert_eq!(evo.row(0), t("1011010"));
        for r in 1..4 {
            assert_eq!(evo.row(r).count_ones(), 0);
        }
    }

    #[test]
    fn rule_51_is_an_involution() {
        let s = t("110100101");
        let evo = eca_evolve(EcaRule(51), &s, 2).unwrap();
        assert_eq!(evo.row(1), t("001011010"));
        assert_eq!(evo.row(2), s);
    }

    #[test]
    fn rule_110_first_row_by_hand() {
        // 110 = 01101110: patterns 111,100,000 -> 0, others -> 1
        let s = t("0001001101");
        let evo = eca_evolve(EcaRule(110), &s, 1).unwrap();
        let w = s.cols();
        let expected = BinaryTensor::from_fn(1, w, |_, c| {
            let l = s.get(0, (c + w - 1) % w);
            let m = s.get(0, c);
            let r = s.get(0, (c + 1) % w);
            !matches!((l, m, r), (true, true, true) | (true, false, false) | (false, false, false))
        });
        assert_eq!(evo.row(1), expected);
    }

    #[test]
    fn wide_rows_use_the_generic_path() {
        let mut rng = sub_rng(3, 3);
        let init = BinaryTensor::from_fn(1, 70, |_, _| rng.gen());
        let wide = eca_evolve(EcaRule(30), &init, 5).unwrap();
        let narrow = eca_evolve(EcaRule(30), &init.window(0, 0, 1, 64), 0).unwrap();
        assert_eq!(wide.shape(), (6, 70));
        assert_eq!(narrow.shape(), (1, 64));
        assert!(eca_evolve(EcaRule(30), &t("10"), 1).is_err());
    }

    #[test]
    fn eca_rule_range() {
        assert!(EcaRule::new(255).is_ok());
        assert!(EcaRule::new(256).is_err());
    }

    #[test]
    fn bool_fn_tables() {
        assert_eq!(BoolFn::And.truth_table(2).bits(), 0b1000);
        assert_eq!(BoolFn::Or.truth_table(2).bits(), 0b1110);
        assert_eq!(BoolFn::Nand.truth_table(2).bits(), 0b0111);
        assert_eq!(BoolFn::XOr.truth_table(2).bits(), 0b0110);
        assert_eq!(BoolFn::from_code(2).unwrap(), BoolFn::Nand);
    }

    #[test]
    fn nk_all_and_from_zero_stays_zero() {
        let net = NkNetwork::with_rule_list(
            vec![vec![1, 2], vec![0, 3], vec![0, 1], vec![2, 3]],
            &[BoolFn::And; 4],
        )
        .unwrap();
        let out = net.evolve(&BinaryTensor::zeros(1, 4), 10).unwrap();
        assert_eq!(out.shape(), (1, 40));
        assert_eq!(out.count_ones(), 0);
    }

    #[test]
    fn nk_validation() {
        let tt = BoolFn::And.truth_table(2);
        assert!(NkNetwork::new(vec![vec![0, 0], vec![0, 1]], vec![tt, tt]).is_err());
        assert!(NkNetwork::new(vec![vec![0, 2], vec![0, 1]], vec![tt, tt]).is_err());
        assert!(NkNetwork::new(vec![vec![0, 1], vec![0, 1]], vec![tt]).is_err());
        assert!(TruthTable::new(2, 0b10000).is_err());
    }

    #[test]
    fn nk_wide_evolution_length() {
        let mut rng = sub_rng(1, 1);
        let net = NkNetwork::random(24, 3, &mut rng).unwrap();
        let init = BinaryTensor::from_fn(1, 24, |_, _| rng.gen());
        assert_eq!(net.evolve(&init, 10).unwrap().len(), 240);
    }

    #[test]
    fn topology_and_rule_counts() {
        let tops = all_k2_topologies(4);
        assert_eq!(tops.len(), 1296);
        assert_eq!(all_rule_lists(4).len(), 256);
        let net = NkNetwork::with_rule_list(tops[77].clone(), &[BoolFn::Or; 4]).unwrap();
        let adj = net.adjacency();
        for c in 0..4 {
            assert_eq!((0..4).filter(|&r| adj.get(r, c)).count(), 2);
        }
        assert_eq!(rule_list_key(&[BoolFn::And, BoolFn::Or, BoolFn::Nand, BoolFn::XOr]), t("00011011"));
    }

    #[test]
    fn eca_rule_dataset_sizes_and_determinism() {
        let sizes = SplitSizes { training: 2, validation: 1, test: 3 };
        let a = gen_eca_rule_dataset_sized(9, sizes, Exec::Sequential).unwrap();
        let b = gen_eca_rule_dataset_sized(9, sizes, Exec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.training.len(), 22);
        assert_eq!(a.test.len(), 33);
        assert_eq!(a.training.shape(), Some((32, 32)));
        let c = gen_eca_rule_dataset_sized(10, sizes, Exec::Sequential).unwrap();
        assert_ne!(a.training, c.training);
    }

    #[test]
    fn eca_init_dataset_shape() {
        let p = EcaInitParams::default();
        assert_eq!(p.class_tensor(704), t("001011000000"));
        let ds = gen_eca_init_dataset(5, &p).unwrap();
        assert_eq!(ds.training.len(), 200);
        assert_eq!(ds.test.shape(), Some((4, 12)));
        let wide = gen_eca_init_dataset(5, &EcaInitParams::wide(5)).unwrap();
        assert_eq!(wide.training.shape(), Some((4, 24)));
        assert_eq!(wide.training.labels().len(), 20);
    }

    #[test]
    fn nk_dataset_shapes() {
        let p = NkParams::default();
        let k = gen_nk_datasets(NkTask::KClass, 2, &p).unwrap();
        assert_eq!(k.training.len(), 300);
        assert_eq!(k.training.shape(), Some((1, 240)));
        let small = NkParams { sizes: SplitSizes { training: 2, validation: 2, test: 2 }, ..p.clone() };
        let r = gen_nk_datasets(NkTask::Rules, 2, &small).unwrap();
        assert_eq!(r.test.len(), 20);
        assert_eq!(r.test.shape(), Some((1, 40)));
        let conds = nk_class_conditions(NkTask::Topology, 2, &small).unwrap();
        assert_eq!(conds.len(), 10);
        for m in &conds {
            for c in 0..4 {
                assert_eq!((0..4).filter(|&r| m.get(r, c)).count(), 2);
            }
        }
        assert_eq!(nk_class_conditions(NkTask::Rules, 2, &small).unwrap().len(), 10);
    }

    #[test]
    fn binarize_is_strict() {
        let img = GrayImage::new(1, 3, vec![0.51, 0.5, 0.0]).unwrap();
        assert_eq!(binarize(&img, 0.5), t("100"));
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn salting_preserves_pixel_multisets() {
        let ds = gen_eca_rule_dataset_sized(4, SplitSizes { training: 5, validation: 0, test: 0 }, Exec::Sequential)
            .unwrap()
            .training;
        let s = salt(&ds, 0.4, 0.3, 8).unwrap();
        assert_eq!(s.salted.len(), 22);
        for (a, b) in ds.samples.iter().zip(&s.dataset.samples) {
            assert_eq!(a.tensor.count_ones(), b.tensor.count_ones());
            assert_eq!(a.label, b.label);
        }
        assert_eq!(salt(&ds, 0.0, 0.3, 8).unwrap().dataset, ds);
        assert!(salt(&ds, 1.5, 0.3, 8).is_err());
        assert_eq!(salt(&ds, 0.4, 0.3, 8).unwrap(), s);
    }

    #[test]
    fn dataset_text_round_trip() {
        let ds = gen_eca_init_dataset(1, &EcaInitParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = ds.persist(dir.path(), "abc").unwrap();
        assert_eq!(manifest.splits["test"], 200);
        let back = DatasetSplits::load(dir.path()).unwrap();
        assert_eq!(back, ds);
    }
}
