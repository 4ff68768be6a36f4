//! Reproducible studies: conditional BDM against conditional entropy on biased
//! strings, the partition-size sweep, the bilinear regression surface and the
//! complexity-ordering speed-up.
//!
//! Every function is a pure function of its seed and parameters.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bdm::{cond_bdm_coarse, cond_entropy, PartitionStrategy};
use crate::ctm::CtmTable;
use crate::error::{Error, Result};
use crate::generators::sub_rng;
use crate::optimizer::{algorithmic_search, complexity_order_with, ParameterSpace, Stop};
use crate::par::Exec;
use crate::tensor::BinaryTensor;

fn biased_string(len: usize, p: f64, rng: &mut impl Rng) -> BinaryTensor {
    BinaryTensor::from_fn(1, len, |_, _| rng.gen_bool(p))
}

// ---------------------------------------------------------------------------
// Conditional BDM against conditional entropy

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvBdmParams {
    /// Related pairs per bias level.
    pub pairs: usize,
    pub len: usize,
}

impl Default for HvBdmParams {
    fn default() -> Self {
        HvBdmParams { pairs: 500, len: 20 }
    }
}

impl HvBdmParams {
    pub fn full_scale() -> Self {
        HvBdmParams { pairs: 5000, len: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvBdmPoint {
    /// Expected number of ones per string.
    pub bias: u32,
    pub bdm_ratio: f64,
    pub entropy_ratio: f64,
    /// Ratios divided by their maximum over all bias levels.
    pub bdm_normalized: f64,
    pub entropy_normalized: f64,
}

/// For each bias `b` in 1..len, pairs `(x, y)` drawn independently with
/// `P(1) = b/len` and a uniform string `r`; averages
/// `(1 + d(x|y)) / (1 + d(x|r))` for conditional BDM and conditional entropy
/// at partition size 1.
pub fn entropy_vs_bdm(seed: u64, params: &HvBdmParams, table: &CtmTable, exec: Exec) -> Result<Vec<HvBdmPoint>> {
    if params.pairs == 0 || params.len < 2 {
        return Err(Error::InvalidArgument("need at least one pair of strings of length 2".into()));
    }
    let s = PartitionStrategy::vector(1);
    let biases: Vec<u32> = (1..params.len as u32).collect();
    let rows = exec.map(&biases, |&bias| -> Result<(f64, f64)> {
        let p = bias as f64 / params.len as f64;
        let mut rng = sub_rng(seed, 0x4876_0000 | bias as u64);
        let (mut sb, mut sh) = (0.0, 0.0);
        for _ in 0..params.pairs {
            let x = biased_string(params.len, p, &mut rng);
            let y = biased_string(params.len, p, &mut rng);
            let r = biased_string(params.len, 0.5, &mut rng);
            sb += (1.0 + cond_bdm_coarse(&x, &y, table, &s)?) / (1.0 + cond_bdm_coarse(&x, &r, table, &s)?);
            sh += (1.0 + cond_entropy(&x, &y, &s)?) / (1.0 + cond_entropy(&x, &r, &s)?);
        }
        let n = params.pairs as f64;
        Ok((sb / n, sh / n))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let max_b = rows.iter().map(|r| r.0).fold(f64::MIN, f64::max);
    let max_h = rows.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    Ok(biases
        .iter()
        .zip(rows)
        .map(|(&bias, (b, h))| HvBdmPoint {
            bias,
            bdm_ratio: b,
            entropy_ratio: h,
            bdm_normalized: b / max_b,
            entropy_normalized: h / max_h,
        })
        .collect())
}

pub fn hvbdm_csv(points: &[HvBdmPoint]) -> String {
    let mut out = String::from("bias,bdm_ratio,entropy_ratio,bdm_normalized,entropy_normalized\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.bias, p.bdm_ratio, p.entropy_ratio, p.bdm_normalized, p.entropy_normalized
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Partition-size sweep

/// How the mean conditional BDM at a partition size is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divided by the number of full blocks, `len / size`.
    BlockCount,
    /// Divided by the block length.
    BlockLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionParams {
    /// Pairs per (distribution, size) point.
    pub pairs: usize,
    pub len: usize,
    pub max_size: usize,
    /// Expected ones per string for each distribution.
    pub distributions: Vec<u32>,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams { pairs: 3000, len: 20, max_size: 20, distributions: vec![10, 3, 5, 7] }
    }
}

impl PartitionParams {
    pub fn full_scale() -> Self {
        PartitionParams { pairs: 30_000, ..PartitionParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPoint {
    pub ones: u32,
    pub size: usize,
    pub mean: f64,
    pub per_block: f64,
    pub per_length: f64,
}

impl PartitionPoint {
    pub fn normalized(&self, n: Normalization) -> f64 {
        match n {
            Normalization::BlockCount => self.per_block,
            Normalization::BlockLength => self.per_length,
        }
    }
}

/// Mean coarse conditional BDM of same-distribution pairs for every partition
/// size; leftover bits are discarded. The same pairs are reused across sizes.
pub fn partition_sweep(seed: u64, params: &PartitionParams, table: &CtmTable, exec: Exec) -> Result<Vec<PartitionPoint>> {
    if params.pairs == 0 || params.max_size == 0 || params.max_size > params.len {
        return Err(Error::InvalidArgument("sizes must lie in 1..=len and pairs be positive".into()));
    }
    let mut out = Vec::new();
    for &ones in &params.distributions {
        if ones == 0 || ones as usize > params.len {
            return Err(Error::InvalidArgument(format!("{ones} expected ones in strings of {}", params.len)));
        }
        let p = ones as f64 / params.len as f64;
        let mut rng = sub_rng(seed, 0x5041_0000 | ones as u64);
        let pairs: Vec<(BinaryTensor, BinaryTensor)> = (0..params.pairs)
            .map(|_| (biased_string(params.len, p, &mut rng), biased_string(params.len, p, &mut rng)))
            .collect();
        for size in 1..=params.max_size {
            let s = PartitionStrategy::vector(size);
            let vals = exec.map(&pairs, |(x, y)| cond_bdm_coarse(x, y, table, &s));
            let mut sum = 0.0;
            for v in vals {
                sum += v?;
            }
            let mean = sum / params.pairs as f64;
            let blocks = (params.len / size) as f64;
            out.push(PartitionPoint { ones, size, mean, per_block: mean / blocks, per_length: mean / size as f64 });
        }
    }
    Ok(out)
}

/// Whether the curve of distribution `ones` never decreases over `sizes`.
pub fn weakly_increasing(points: &[PartitionPoint], ones: u32, sizes: std::ops::RangeInclusive<usize>, n: Normalization) -> bool {
    let curve: Vec<f64> = points
        .iter()
        .filter(|p| p.ones == ones && sizes.contains(&p.size))
        .map(|p| p.normalized(n))
        .collect();
    !curve.is_empty() && curve.windows(2).all(|w| w[1] >= w[0])
}

pub fn partition_csv(points: &[PartitionPoint]) -> String {
    let mut out = String::from("ones,size,mean,per_block,per_length\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.ones, p.size, p.mean, p.per_block, p.per_length);
    }
    out
}

// ---------------------------------------------------------------------------
// Bilinear regression surface

/// Coefficients `0.10101011` and `0.01010101` as 8 fractional bits.
pub const SURFACE_TRUTH: (u8, u8) = (0b1010_1011, 0b0101_0101);
/// Output width: 4 integer and 8 fractional bits hold every exact `y`.
pub const SURFACE_Y_BITS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    pub points: usize,
    /// Grid points per coefficient, at most 256.
    pub resolution: usize,
    pub block: usize,
    pub pool: usize,
    /// Block size of the complexity order over the 16 coefficient bits.
    pub order_block: usize,
    pub squared: bool,
    /// Half-width, in grid steps of 1/256, of the descent's start square.
    pub descent_radius: u8,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            points: 20,
            resolution: 256,
            block: 3,
            pool: 5000,
            order_block: 4,
            squared: true,
            descent_radius: 64,
        }
    }
}

/// `y = s1·a + s2·b` for inputs `a, b < 8`, exact in 12 bits.
pub fn surface_output(coeffs: (u8, u8), a: u8, b: u8) -> BinaryTensor {
    let y = coeffs.0 as u128 * a as u128 + coeffs.1 as u128 * b as u128;
    BinaryTensor::from_uint(y, SURFACE_Y_BITS)
}

/// Seeded regression data and its cost function.
#[derive(Clone, Debug)]
pub struct SurfaceProblem {
    pub inputs: Vec<(u8, u8)>,
    pub targets: Vec<BinaryTensor>,
    strategy: PartitionStrategy,
    squared: bool,
}

impl SurfaceProblem {
    pub fn new(seed: u64, params: &SurfaceParams) -> Self {
        let mut rng = sub_rng(seed, 0x5355_5246);
        let inputs: Vec<(u8, u8)> = (0..params.points).map(|_| (rng.gen_range(0..8), rng.gen_range(0..8))).collect();
        let targets = inputs.iter().map(|&(a, b)| surface_output(SURFACE_TRUTH, a, b)).collect();
        SurfaceProblem { inputs, targets, strategy: PartitionStrategy::vector(params.block), squared: params.squared }
    }

    pub fn cost(&self, coeffs: (u8, u8), table: &CtmTable) -> f64 {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(&(a, b), y)| {
                let d = cond_bdm_coarse(y, &surface_output(coeffs, a, b), table, &self.strategy).unwrap_or(f64::INFINITY);
                if self.squared {
                    d * d
                } else {
                    d
                }
            })
            .sum()
    }
}

fn coeffs_of(candidate: u64) -> (u8, u8) {
    ((candidate >> 8) as u8, candidate as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub best: (u8, u8),
    pub best_cost: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub resolution: usize,
    /// `(s1, s2, cost)` in row-major grid order.
    pub grid: Vec<(u8, u8, f64)>,
    pub true_cost: f64,
    /// Share of grid points whose cost is at least the true cost.
    pub share_at_or_above_truth: f64,
    /// Zero-based position of the true coefficients in complexity order.
    pub truth_rank: usize,
    pub ordered: MethodResult,
    pub random_pool: MethodResult,
    pub descent: MethodResult,
    /// Mean and standard deviation of cost differences between grid
    /// neighbours along either axis.
    pub neighbour_delta_mean_abs: f64,
    pub neighbour_delta_std: f64,
}

fn grid_axis(resolution: usize) -> Vec<u8> {
    (0..resolution).map(|i| (i * 256 / resolution) as u8).collect()
}

pub fn regression_surface(seed: u64, params: &SurfaceParams, table: &CtmTable, exec: Exec) -> Result<SurfaceReport> {
    if params.resolution == 0 || params.resolution > 256 || params.points == 0 || params.pool == 0 {
        return Err(Error::InvalidArgument("resolution must lie in 1..=256, points and pool be positive".into()));
    }
    let problem = SurfaceProblem::new(seed, params);
    let axis = grid_axis(params.resolution);
    let r = axis.len();
    let costs = exec.map_range(r * r, |i| problem.cost((axis[i / r], axis[i % r]), table));
    let grid: Vec<(u8, u8, f64)> = (0..r * r).map(|i| (axis[i / r], axis[i % r], costs[i])).collect();
    let true_cost = problem.cost(SURFACE_TRUTH, table);
    let share = costs.iter().filter(|&&c| c >= true_cost).count() as f64 / costs.len() as f64;

    let mut deltas = Vec::new();
    for i in 0..r {
        for j in 0..r {
            let c = costs[i * r + j];
            if j + 1 < r {
                deltas.push(costs[i * r + j + 1] - c);
            }
            if i + 1 < r {
                deltas.push(costs[(i + 1) * r + j] - c);
            }
        }
    }
    let finite: Vec<f64> = deltas.into_iter().filter(|d| d.is_finite()).collect();
    let nd = finite.len().max(1) as f64;
    let mean = finite.iter().sum::<f64>() / nd;
    let mean_abs = finite.iter().map(|d| d.abs()).sum::<f64>() / nd;
    let std = (finite.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nd).sqrt();

    let space = ParameterSpace::vector(16)?;
    let order = complexity_order_with(space, table, &PartitionStrategy::vector(params.order_block), 16, exec)?;
    let truth_bits = ((SURFACE_TRUTH.0 as u64) << 8) | SURFACE_TRUTH.1 as u64;
    let truth_rank = order.iter().position(|&c| c == truth_bits).expect("order is a permutation");
    let search = algorithmic_search(&order, |&c| problem.cost(coeffs_of(c), table), Stop::target(0.0), exec)?;
    let ordered = MethodResult { best: coeffs_of(search.best), best_cost: search.best_cost, evaluations: search.iterations };

    let mut rng = sub_rng(seed, 0x504F_4F4C);
    let pool: Vec<u64> = (0..params.pool).map(|_| rng.gen_range(0..space.size())).collect();
    let pooled = algorithmic_search(&pool, |&c| problem.cost(coeffs_of(c), table), Stop::iters(pool.len()), exec)?;
    let random_pool = MethodResult { best: coeffs_of(pooled.best), best_cost: pooled.best_cost, evaluations: pooled.iterations };

    let descent = local_descent(&problem, table, params.descent_radius, &mut rng);
    Ok(SurfaceReport {
        resolution: r,
        grid,
        true_cost,
        share_at_or_above_truth: share,
        truth_rank,
        ordered,
        random_pool,
        descent,
        neighbour_delta_mean_abs: mean_abs,
        neighbour_delta_std: std,
    })
}

/// Steepest descent over the 8-neighbourhood on the 1/256 lattice, from a
/// seeded start in the square of half-width `radius` around the truth, and
/// confined to that square.
fn local_descent(problem: &SurfaceProblem, table: &CtmTable, radius: u8, rng: &mut impl Rng) -> MethodResult {
    let lo = |t: u8| t.saturating_sub(radius) as i32;
    let hi = |t: u8| t.saturating_add(radius) as i32;
    let bounds = [(lo(SURFACE_TRUTH.0), hi(SURFACE_TRUTH.0)), (lo(SURFACE_TRUTH.1), hi(SURFACE_TRUTH.1))];
    let mut at = (rng.gen_range(bounds[0].0..=bounds[0].1), rng.gen_range(bounds[1].0..=bounds[1].1));
    let to_coeffs = |p: (i32, i32)| (p.0 as u8, p.1 as u8);
    let mut cost = problem.cost(to_coeffs(at), table);
    let mut evaluations = 1;
    loop {
        let mut best = (at, cost);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let p = (at.0 + dx, at.1 + dy);
                if (dx, dy) == (0, 0) || p.0 < bounds[0].0 || p.0 > bounds[0].1 || p.1 < bounds[1].0 || p.1 > bounds[1].1 {
                    continue;
                }
                let c = problem.cost(to_coeffs(p), table);
                evaluations += 1;
                if c < best.1 {
                    best = (p, c);
                }
            }
        }
        if best.0 == at {
            break;
        }
        (at, cost) = best;
    }
    MethodResult { best: to_coeffs(at), best_cost: cost, evaluations }
}

pub fn surface_csv(report: &SurfaceReport) -> String {
    let mut out = String::from("s1,s2,cost\n");
    for (a, b, c) in &report.grid {
        let _ = writeln!(out, "{a},{b},{c}");
    }
    out
}

// ---------------------------------------------------------------------------
// Complexity-ordering speed-up

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedupParams {
    pub trials: usize,
    pub bits: usize,
    pub order_block: usize,
    /// Targets are drawn from this leading share of the complexity order.
    pub low_share: f64,
}

impl Default for SpeedupParams {
    fn default() -> Self {
        SpeedupParams { trials: 20, bits: 16, order_block: 4, low_share: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupTrial {
    pub target: u64,
    pub target_bdm_rank: usize,
    pub ordered_hits: usize,
    pub random_hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub trials: Vec<SpeedupTrial>,
    pub ordered_mean: f64,
    pub random_mean: f64,
}

/// Plants a low-BDM optimum (cost = Hamming distance to it) per trial and
/// counts candidates evaluated until it is hit, in complexity order and in a
/// seeded uniformly random order.
pub fn speedup(seed: u64, params: &SpeedupParams, table: &CtmTable, exec: Exec) -> Result<SpeedupReport> {
    if params.trials == 0 || !(params.low_share > 0.0 && params.low_share <= 1.0) {
        return Err(Error::InvalidArgument("need trials and a share in (0, 1]".into()));
    }
    let space = ParameterSpace::vector(params.bits)?;
    let order = complexity_order_with(space, table, &PartitionStrategy::vector(params.order_block), params.bits as u32, exec)?;
    let low = ((order.len() as f64 * params.low_share).ceil() as usize).max(1);
    let mut trials = Vec::with_capacity(params.trials);
    for i in 0..params.trials {
        let mut rng = sub_rng(seed, 0x5350_0000 | i as u64);
        let rank = rng.gen_range(0..low);
        let target = order[rank];
        let cost = |&c: &u64| (c ^ target).count_ones() as f64;
        let ordered = algorithmic_search(&order, cost, Stop::target(0.0), exec)?;
        let mut shuffled: Vec<u64> = (0..space.size()).collect();
        shuffled.shuffle(&mut rng);
        let random = algorithmic_search(&shuffled, cost, Stop::target(0.0), exec)?;
        trials.push(SpeedupTrial {
            target,
            target_bdm_rank: rank,
            ordered_hits: ordered.iterations,
            random_hits: random.iterations,
        });
    }
    let n = trials.len() as f64;
    Ok(SpeedupReport {
        ordered_mean: trials.iter().map(|t| t.ordered_hits as f64).sum::<f64>() / n,
        random_mean: trials.iter().map(|t| t.random_hits as f64).sum::<f64>() / n,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctm::builtin_table;

    #[test]
    fn hvbdm_emits_one_point_per_bias() {
        let p = HvBdmParams { pairs: 20, len: 20 };
        let pts = entropy_vs_bdm(3, &p, builtin_table(), Exec::Sequential).unwrap();
        assert_eq!(pts.len(), 19);
        for q in &pts {
            assert!(q.bdm_ratio.is_finite() && q.entropy_ratio.is_finite());
            assert!(q.bdm_normalized <= 1.0 && q.entropy_normalized <= 1.0);
        }
        assert_eq!(pts, entropy_vs_bdm(3, &p, builtin_table(), Exec::Parallel).unwrap());
    }

    #[test]
    fn partition_sweep_is_deterministic() {
        let p = PartitionParams { pairs: 30, max_size: 6, ..PartitionParams::default() };
        let a = partition_sweep(9, &p, builtin_table(), Exec::Sequential).unwrap();
        assert_eq!(a.len(), 4 * 6);
        assert_eq!(a, partition_sweep(9, &p, builtin_table(), Exec::Parallel).unwrap());
        assert_ne!(a, partition_sweep(10, &p, builtin_table(), Exec::Sequential).unwrap());
        let first = &a[0];
        assert_eq!(first.per_block, first.mean / 20.0);
        assert_eq!(first.per_length, first.mean);
    }

    #[test]
    fn weak_monotonicity_helper() {
        let pt = |size, v| PartitionPoint { ones: 1, size, mean: v, per_block: v, per_length: -v };
        let pts = vec![pt(1, 1.0), pt(2, 1.0), pt(3, 2.0)];
        assert!(weakly_increasing(&pts, 1, 1..=3, Normalization::BlockCount));
        assert!(!weakly_increasing(&pts, 1, 1..=3, Normalization::BlockLength));
        assert!(!weakly_increasing(&pts, 2, 1..=3, Normalization::BlockCount));
    }

    #[test]
    fn surface_outputs_are_exact() {
        let y = surface_output(SURFACE_TRUTH, 7, 7);
        assert_eq!(y.to_uint(), (171 + 85) * 7);
        let p = SurfaceProblem::new(1, &SurfaceParams::default());
        assert_eq!(p.inputs.len(), 20);
        assert_eq!(p.cost(SURFACE_TRUTH, builtin_table()), 0.0);
    }

    #[test]
    fn small_surface_grid() {
        let params = SurfaceParams { resolution: 16, pool: 50, ..SurfaceParams::default() };
        let r = regression_surface(2, &params, builtin_table(), Exec::default()).unwrap();
        assert_eq!(r.grid.len(), 256);
        assert_eq!(r.true_cost, 0.0);
        assert!(r.random_pool.best_cost.is_finite());
        assert!(r.ordered.evaluations <= r.truth_rank + 1);
        assert_eq!(r.ordered.best_cost, 0.0);
        assert!(r.descent.evaluations >= 1);
    }

    #[test]
    fn speedup_trials_hit_their_targets() {
        let p = SpeedupParams { trials: 3, bits: 10, ..SpeedupParams::default() };
        let r = speedup(4, &p, builtin_table(), Exec::Sequential).unwrap();
        for t in &r.trials {
            assert_eq!(t.ordered_hits, t.target_bdm_rank + 1);
            assert!(t.random_hits >= 1 && t.random_hits <= 1024);
        }
    }
}
