//! Complexity-ordered search, greedy block optimization and algorithmic cost
//! functions.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::bdm::{bdm, cond_bdm_coarse, PartitionStrategy};
use crate::ctm::CtmTable;
use crate::domain::{cond_ctm, CondCtmTable};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::tensor::{BinaryTensor, Block};

/// Spaces up to this many bits are enumerated in full.
pub const DEFAULT_CAP_BITS: u32 = 20;
/// Candidates evaluated per region when a region is searched by streaming.
pub const DEFAULT_BUDGET: usize = 100_000;

/// All `rows × cols` bit patterns; candidate `i` is the tensor whose row-major
/// bits spell `i` most significant bit first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub rows: usize,
    pub cols: usize,
}

impl ParameterSpace {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        let bits = rows * cols;
        if bits == 0 || bits > 63 {
            return Err(Error::InvalidArgument(format!("parameter space of {bits} bits")));
        }
        Ok(ParameterSpace { rows, cols })
    }

    pub fn vector(bits: usize) -> Result<Self> {
        ParameterSpace::new(1, bits)
    }

    pub fn bit_width(&self) -> usize {
        self.rows * self.cols
    }

    pub fn size(&self) -> u64 {
        1u64 << self.bit_width()
    }

    pub fn tensor(&self, candidate: u64) -> BinaryTensor {
        BinaryTensor::from_uint(candidate as u128, self.bit_width())
            .reshape(self.rows, self.cols)
            .expect("same cell count")
    }

    pub fn candidate(&self, t: &BinaryTensor) -> u64 {
        t.to_uint() as u64
    }
}

/// Every candidate of `space` sorted by ascending BDM, ties by bit order.
pub fn complexity_order(space: ParameterSpace, table: &CtmTable, s: &PartitionStrategy) -> Result<Vec<u64>> {
    complexity_order_with(space, table, s, DEFAULT_CAP_BITS, Exec::default())
}

pub fn complexity_order_with(
    space: ParameterSpace,
    table: &CtmTable,
    s: &PartitionStrategy,
    cap_bits: u32,
    exec: Exec,
) -> Result<Vec<u64>> {
    Ok(ranked_space(space, table, s, cap_bits, exec)?
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

/// [`complexity_order`] with the BDM of each candidate.
pub fn ranked_space(
    space: ParameterSpace,
    table: &CtmTable,
    s: &PartitionStrategy,
    cap_bits: u32,
    exec: Exec,
) -> Result<Vec<(u64, f64)>> {
    if space.bit_width() > cap_bits as usize {
        return Err(Error::SpaceTooLarge {
            estimated: space.size() as u128,
            cap: 1u128 << cap_bits,
        });
    }
    // Surface shape errors once instead of per candidate.
    bdm(&space.tensor(0), table, s)?;
    let values = exec.map_range(space.size() as usize, |i| {
        bdm(&space.tensor(i as u64), table, s).expect("checked shape")
    });
    let mut ranked: Vec<(u64, f64)> = values.into_iter().enumerate().map(|(i, v)| (i as u64, v)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Candidate-space ordering by arbitrary objects, for spaces that are not
/// plain bit patterns.
pub fn order_by_bdm<T: Clone>(
    items: &[T],
    tensor: impl Fn(&T) -> BinaryTensor,
    table: &CtmTable,
    s: &PartitionStrategy,
) -> Result<Vec<T>> {
    let mut keyed = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let t = tensor(item);
        keyed.push((bdm(&t, table, s)?, t.to_str01(), i));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, _, i)| items[i].clone()).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub max_iters: Option<usize>,
    pub target_cost: Option<f64>,
}

impl Stop {
    pub fn iters(n: usize) -> Self {
        Stop { max_iters: Some(n), target_cost: None }
    }

    pub fn target(cost: f64) -> Self {
        Stop { max_iters: None, target_cost: Some(cost) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub rank: usize,
    pub cost: f64,
    pub is_new_min: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult<C> {
    pub best: C,
    pub best_cost: f64,
    pub best_rank: usize,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl<C> SearchResult<C> {
    /// `rank,candidate_bits,cost,is_new_min` for each evaluated candidate.
    pub fn trace_csv(&self, candidates: &[C], bits: impl Fn(&C) -> String) -> String {
        let mut out = String::from("rank,candidate_bits,cost,is_new_min\n");
        for row in &self.trace {
            let _ = writeln!(out, "{},{},{},{}", row.rank, bits(&candidates[row.rank]), row.cost, row.is_new_min);
        }
        out
    }
}

/// Evaluates `candidates` in order, keeping the running minimum, until the
/// iteration bound or the target cost is reached.
pub fn algorithmic_search<C, F>(candidates: &[C], cost: F, stop: Stop, exec: Exec) -> Result<SearchResult<C>>
where
    C: Clone + Sync,
    F: Fn(&C) -> f64 + Sync + Send,
{
    if candidates.is_empty() {
        return Err(Error::Empty("search space is empty".into()));
    }
    if stop.max_iters.is_none() && stop.target_cost.is_none() {
        return Err(Error::InvalidArgument("a stop condition is required".into()));
    }
    let limit = stop.max_iters.unwrap_or(usize::MAX).min(candidates.len());
    if limit == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let chunk = if exec.is_parallel() { 1024 } else { 64 };
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut start = 0;
    'outer: while start < limit {
        let end = (start + chunk).min(limit);
        let costs = exec.map(&candidates[start..end], &cost);
        for (offset, c) in costs.into_iter().enumerate() {
            let rank = start + offset;
            let is_new_min = best.is_none_or(|(_, b)| c < b);
            if is_new_min {
                best = Some((rank, c));
            }
            trace.push(TraceRow { rank, cost: c, is_new_min });
            if stop.target_cost.is_some_and(|t| c <= t) {
                break 'outer;
            }
        }
        start = end;
    }
    let (best_rank, best_cost) = best.expect("at least one evaluation");
    Ok(SearchResult {
        best: candidates[best_rank].clone(),
        best_cost,
        best_rank,
        iterations: trace.len(),
        trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub r0: usize,
    pub c0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Regions of a model tensor optimized one after the other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub regions: Vec<Region>,
}

impl BlockSchedule {
    /// Row-major tiling of `shape` by `tile` regions.
    pub fn tiles(shape: (usize, usize), tile: (usize, usize)) -> Result<Self> {
        if tile.0 == 0 || tile.1 == 0 || shape.0 % tile.0 != 0 || shape.1 % tile.1 != 0 {
            return Err(Error::ShapeMismatch(format!("{tile:?} regions do not tile {shape:?}")));
        }
        let mut regions = Vec::new();
        for r in (0..shape.0).step_by(tile.0) {
            for c in (0..shape.1).step_by(tile.1) {
                regions.push(Region { r0: r, c0: c, rows: tile.0, cols: tile.1 });
            }
        }
        Ok(BlockSchedule { regions })
    }

    /// The four quadrants, upper left first.
    pub fn quadrants(shape: (usize, usize)) -> Result<Self> {
        if shape.0 % 2 != 0 || shape.1 % 2 != 0 {
            return Err(Error::ShapeMismatch(format!("{shape:?} has no even quadrants")));
        }
        BlockSchedule::tiles(shape, (shape.0 / 2, shape.1 / 2))
    }

    /// Checks that the regions cover every cell of `shape` exactly once.
    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        let mut hit = vec![false; shape.0 * shape.1];
        for g in &self.regions {
            if g.rows == 0 || g.cols == 0 || g.r0 + g.rows > shape.0 || g.c0 + g.cols > shape.1 {
                return Err(Error::ShapeMismatch(format!("region {g:?} outside {shape:?}")));
            }
            for r in g.r0..g.r0 + g.rows {
                for c in g.c0..g.c0 + g.cols {
                    if std::mem::replace(&mut hit[r * shape.1 + c], true) {
                        return Err(Error::ShapeMismatch(format!("region {g:?} overlaps another")));
                    }
                }
            }
        }
        if hit.iter().any(|h| !h) {
            return Err(Error::ShapeMismatch(format!("schedule does not tile {shape:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GreedyOptions {
    /// Regions of at most this many cells are searched exhaustively.
    pub cap_bits: u32,
    /// Candidates per streamed region.
    pub budget: usize,
    /// The cost only depends on the multiset of sub-blocks in a streamed
    /// region, so one arrangement per multiset suffices.
    pub permutation_invariant: bool,
    /// Blocks drawn by streamed regions; defaults to every block of the
    /// strategy's shape.
    pub universe: Option<Vec<Block>>,
    /// Let callers that know the cost restrict the universe to blocks seen
    /// in the data.
    pub observed_universe: bool,
    pub exec: Exec,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions {
            cap_bits: DEFAULT_CAP_BITS,
            budget: DEFAULT_BUDGET,
            permutation_invariant: false,
            universe: None,
            observed_universe: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    pub tensor: BinaryTensor,
    pub cost: f64,
    /// Cost before the first region and after each region.
    pub step_costs: Vec<f64>,
    /// Candidates evaluated per region.
    pub evaluations: Vec<usize>,
}

/// Starts from all zeros and, region by region, replaces the region with the
/// candidate of lowest cost while the rest stays fixed. Exhaustive regions
/// are scanned in complexity order; larger regions draw sub-block multisets
/// in ascending BDM up to the budget. The current content is kept unless a
/// candidate is strictly better.
pub fn greedy_block_optimize<F>(
    shape: (usize, usize),
    schedule: &BlockSchedule,
    cost: F,
    table: &CtmTable,
    s: &PartitionStrategy,
    opts: &GreedyOptions,
) -> Result<GreedyOutcome>
where
    F: Fn(&BinaryTensor) -> f64 + Sync + Send,
{
    schedule.validate(shape)?;
    let mut current = BinaryTensor::zeros(shape.0, shape.1);
    let mut current_cost = cost(&current);
    let mut step_costs = vec![current_cost];
    let mut evaluations = Vec::new();
    let mut orders: FxHashMap<(usize, usize), Vec<u64>> = FxHashMap::default();
    let mut universe: Option<Vec<Block>> = opts.universe.clone();
    for g in &schedule.regions {
        let cells = g.rows * g.cols;
        let candidates: Vec<BinaryTensor> = if cells <= opts.cap_bits as usize {
            let space = ParameterSpace::new(g.rows, g.cols)?;
            let order = match orders.get(&(g.rows, g.cols)) {
                Some(o) => o,
                None => {
                    let o = complexity_order_with(space, table, s, opts.cap_bits, opts.exec)?;
                    orders.entry((g.rows, g.cols)).or_insert(o)
                }
            };
            order.iter().map(|&c| space.tensor(c)).collect()
        } else {
            let (br, bc) = s.block_shape();
            if g.rows % br != 0 || g.cols % bc != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "{br}x{bc} blocks do not tile region {g:?}"
                )));
            }
            if universe.is_none() {
                universe = Some(full_universe(br, bc, table, opts.cap_bits)?);
            }
            let u = universe.as_ref().expect("set above");
            streamed_region(g, (br, bc), u, table, opts)
        };
        let evaluated = candidates.len();
        let costs = opts.exec.map(&candidates, |cand| {
            let mut t = current.clone();
            t.paste(g.r0, g.c0, cand);
            cost(&t)
        });
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in costs.into_iter().enumerate() {
            if c < current_cost && best.is_none_or(|(_, b)| c < b) {
                best = Some((i, c));
            }
        }
        if let Some((i, c)) = best {
            current.paste(g.r0, g.c0, &candidates[i]);
            current_cost = c;
        }
        step_costs.push(current_cost);
        evaluations.push(evaluated);
    }
    Ok(GreedyOutcome { tensor: current, cost: current_cost, step_costs, evaluations })
}

/// Every block of the given shape, by ascending table value then bits.
pub fn full_universe(rows: usize, cols: usize, table: &CtmTable, cap_bits: u32) -> Result<Vec<Block>> {
    let cells = rows * cols;
    if cells > cap_bits as usize {
        return Err(Error::SpaceTooLarge { estimated: 1u128 << cells, cap: 1u128 << cap_bits });
    }
    if !table.domain().accepts((rows, cols)) {
        return Err(Error::ShapeMismatch(format!("{rows}x{cols} blocks not scored by {}", table.domain())));
    }
    let mut blocks: Vec<Block> = (0u128..(1u128 << cells)).map(|b| Block::new(rows, cols, b).expect("fits")).collect();
    sort_universe(&mut blocks, table);
    Ok(blocks)
}

/// Sorts blocks by ascending table value, ties by bits.
pub fn sort_universe(blocks: &mut [Block], table: &CtmTable) {
    blocks.sort_by(|a, b| table.value(a).total_cmp(&table.value(b)).then(a.cmp(b)));
}

fn streamed_region(
    g: &Region,
    block: (usize, usize),
    universe: &[Block],
    table: &CtmTable,
    opts: &GreedyOptions,
) -> Vec<BinaryTensor> {
    let k = (g.rows / block.0) * (g.cols / block.1);
    let values: Vec<f64> = universe.iter().map(|b| table.value(b)).collect();
    let mut out = Vec::with_capacity(opts.budget.min(1 << 20));
    'outer: for (_, multiset) in MultisetStream::new(values, k) {
        let mut seq: Vec<usize> = Vec::with_capacity(k);
        for (idx, m) in &multiset {
            seq.extend(std::iter::repeat_n(*idx, *m as usize));
        }
        seq.sort_unstable();
        loop {
            if out.len() >= opts.budget {
                break 'outer;
            }
            out.push(arrange(g, block, universe, &seq));
            if opts.permutation_invariant || !next_permutation(&mut seq) {
                break;
            }
        }
    }
    out
}

fn arrange(g: &Region, block: (usize, usize), universe: &[Block], seq: &[usize]) -> BinaryTensor {
    let per_row = g.cols / block.1;
    let mut t = BinaryTensor::zeros(g.rows, g.cols);
    for (i, &idx) in seq.iter().enumerate() {
        t.paste((i / per_row) * block.0, (i % per_row) * block.1, &universe[idx].to_tensor());
    }
    t
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Multisets of `k` blocks from a universe sorted by value, yielded in
/// ascending `Σ (value + log2 multiplicity)` over distinct members.
///
/// Each multiplicity pattern (a partition of `k`) contributes a lattice of
/// index tuples, one index per part, non-decreasing among parts of equal
/// multiplicity. Costs grow along every lattice edge, so a best-first walk
/// from the origin yields tuples in order; tuples that repeat an index are
/// walked through but not yielded.
pub struct MultisetStream {
    values: Vec<f64>,
    patterns: Vec<Vec<u32>>,
    offsets: Vec<f64>,
    heap: BinaryHeap<Reverse<(Key, usize, Vec<u32>)>>,
    seen: FxHashSet<(usize, Vec<u32>)>,
}

impl MultisetStream {
    pub fn new(values: Vec<f64>, k: usize) -> Self {
        let patterns: Vec<Vec<u32>> = if values.is_empty() || k == 0 { Vec::new() } else { partitions(k as u32) };
        let offsets = patterns.iter().map(|p| p.iter().map(|&m| (m as f64).log2()).sum()).collect();
        let mut stream = MultisetStream {
            values,
            patterns,
            offsets,
            heap: BinaryHeap::new(),
            seen: FxHashSet::default(),
        };
        for p in 0..stream.patterns.len() {
            let origin = vec![0u32; stream.patterns[p].len()];
            stream.push(p, origin);
        }
        stream
    }

    fn push(&mut self, p: usize, tuple: Vec<u32>) {
        if self.seen.insert((p, tuple.clone())) {
            let cost = self.offsets[p] + tuple.iter().map(|&i| self.values[i as usize]).sum::<f64>();
            self.heap.push(Reverse((Key(cost), p, tuple)));
        }
    }
}

impl Iterator for MultisetStream {
    type Item = (f64, Vec<(usize, u32)>);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(Reverse((Key(cost), p, tuple))) = self.heap.pop() {
            let pattern = self.patterns[p].clone();
            let mut successors = Vec::new();
            for i in 0..tuple.len() {
                let next = tuple[i] + 1;
                if next as usize >= self.values.len() {
                    continue;
                }
                if i + 1 < tuple.len() && pattern[i + 1] == pattern[i] && next > tuple[i + 1] {
                    continue;
                }
                let mut t = tuple.clone();
                t[i] = next;
                successors.push(t);
            }
            for t in successors {
                self.push(p, t);
            }
            let mut sorted = tuple.clone();
            sorted.sort_unstable();
            if sorted.windows(2).all(|w| w[0] != w[1]) {
                let members = tuple.iter().zip(&pattern).map(|(&i, &m)| (i as usize, m)).collect();
                return Some((cost, members));
            }
        }
        None
    }
}

/// Partitions of `k` as non-increasing part lists.
fn partitions(k: u32) -> Vec<Vec<u32>> {
    fn rec(rest: u32, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            prefix.push(part);
            rec(rest - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    out
}

/// `J + λ·BDM(candidate)`.
pub fn regularized<'a, F>(
    cost: F,
    lambda: f64,
    table: &'a CtmTable,
    s: &'a PartitionStrategy,
) -> Result<impl Fn(&BinaryTensor) -> f64 + Sync + Send + 'a>
where
    F: Fn(&BinaryTensor) -> f64 + Sync + Send + 'a,
{
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(move |t: &BinaryTensor| {
        let k = if lambda == 0.0 { 0.0 } else { bdm(t, table, s).unwrap_or(f64::INFINITY) };
        cost(t) + lambda * k
    })
}

/// How far a target is from a prediction.
#[derive(Clone, Copy, Debug)]
pub enum Distance<'a> {
    CondBdm { table: &'a CtmTable, strategy: PartitionStrategy },
    CondCtm { db: &'a CondCtmTable },
}

impl Distance<'_> {
    /// `d(y | ŷ)`.
    pub fn eval(&self, y: &BinaryTensor, yhat: &BinaryTensor) -> Result<f64> {
        match self {
            Distance::CondBdm { table, strategy } => cond_bdm_coarse(y, yhat, table, strategy),
            Distance::CondCtm { db } => cond_ctm(db, y, yhat),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    SumSq,
}

impl Aggregation {
    fn apply(self, d: f64) -> f64 {
        match self {
            Aggregation::Sum => d,
            Aggregation::SumSq => d * d,
        }
    }
}

/// `Σ d(y_i | ŷ_i)^p` over paired targets and predictions.
pub fn aggregate_cost(
    targets: &[BinaryTensor],
    predictions: &[BinaryTensor],
    distance: &Distance<'_>,
    aggregation: Aggregation,
) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    let mut sum = 0.0;
    for (y, yhat) in targets.iter().zip(predictions) {
        sum += aggregation.apply(distance.eval(y, yhat)?);
    }
    Ok(sum)
}

/// A cost over model candidates: `predict(candidate, i)` gives the model's
/// output for sample `i`, scored against `targets[i]`. Distance errors make
/// the candidate infinitely costly.
pub fn algorithmic_cost<'a, P>(
    predict: P,
    targets: &'a [BinaryTensor],
    distance: Distance<'a>,
    aggregation: Aggregation,
) -> impl Fn(&BinaryTensor) -> f64 + Sync + Send + 'a
where
    P: Fn(&BinaryTensor, usize) -> BinaryTensor + Sync + Send + 'a,
{
    move |candidate: &BinaryTensor| {
        let mut sum = 0.0;
        for (i, y) in targets.iter().enumerate() {
            match distance.eval(y, &predict(candidate, i)) {
                Ok(d) => sum += aggregation.apply(d),
                Err(_) => return f64::INFINITY,
            }
        }
        sum
    }
}
