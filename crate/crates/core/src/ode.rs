//! Parameter identification for a two-compartment decay system by
//! complexity-ordered search, and its bit-flip noise experiment.
//!
//! The system is `dz1/dt = -θ1·z1`, `dz2/dt = θ1·z1 - θ2·z2` from `z = (1, 0)`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bdm::{coarse_of, partition, BlockMultiset, PartitionStrategy};
use crate::ctm::CtmTable;
use crate::error::{Error, Result};
use crate::generators::sub_rng;
use crate::optimizer::{algorithmic_search, complexity_order_with, ParameterSpace, SearchResult, Stop};
use crate::par::Exec;
use crate::tensor::BinaryTensor;

pub const STEP: f64 = 0.001;
/// Integer and fractional bits of each parameter.
pub const INT_BITS: u32 = 4;
pub const FRAC_BITS: u32 = 4;
/// Fractional bits of each encoded state.
pub const STATE_BITS: u32 = 8;
pub const TRUE_THETA: Theta = Theta { theta1: 5.0, theta2: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub theta1: f64,
    pub theta2: f64,
}

impl Theta {
    pub fn distance(&self, other: &Theta) -> f64 {
        ((self.theta1 - other.theta1).powi(2) + (self.theta2 - other.theta2).powi(2)).sqrt()
    }
}

fn encode_param(x: f64) -> Result<u16> {
    let scaled = x * (1 << FRAC_BITS) as f64;
    let max = (1u32 << (INT_BITS + FRAC_BITS)) as f64;
    if !(x >= 0.0 && scaled < max && scaled.fract() == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{x} is not representable with {INT_BITS}.{FRAC_BITS} fixed point"
        )));
    }
    Ok(scaled as u16)
}

/// θ1 in the high byte, θ2 in the low byte, each 4.4 fixed point.
pub fn encode_theta(theta: &Theta) -> Result<u16> {
    Ok(encode_param(theta.theta1)? << 8 | encode_param(theta.theta2)?)
}

pub fn decode_theta(bits: u16) -> Theta {
    let scale = (1 << FRAC_BITS) as f64;
    Theta {
        theta1: (bits >> 8) as f64 / scale,
        theta2: (bits & 0xFF) as f64 / scale,
    }
}

pub fn theta_tensor(bits: u16) -> BinaryTensor {
    BinaryTensor::from_uint(bits as u128, 16)
}

#[inline]
fn deriv(theta: &Theta, z: (f64, f64)) -> (f64, f64) {
    (-theta.theta1 * z.0, theta.theta1 * z.0 - theta.theta2 * z.1)
}

#[inline]
fn rk4_step(theta: &Theta, z: (f64, f64), h: f64) -> (f64, f64) {
    let k1 = deriv(theta, z);
    let k2 = deriv(theta, (z.0 + h / 2.0 * k1.0, z.1 + h / 2.0 * k1.1));
    let k3 = deriv(theta, (z.0 + h / 2.0 * k2.0, z.1 + h / 2.0 * k2.1));
    let k4 = deriv(theta, (z.0 + h * k3.0, z.1 + h * k3.1));
    (
        z.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        z.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// State at `t` by fixed-step RK4; a final shorter step lands exactly on `t`.
pub fn simulate(theta: &Theta, t: f64) -> (f64, f64) {
    simulate_many(theta, &[t]).pop().expect("one time")
}

/// States at each of `times` (any order) from a single integration.
pub fn simulate_many(theta: &Theta, times: &[f64]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![(0.0, 0.0); times.len()];
    let mut z = (1.0, 0.0);
    let mut steps_done = 0u64;
    for i in order {
        let t = times[i].max(0.0);
        let full = ((t / STEP) + 1e-9).floor() as u64;
        while steps_done < full {
            z = rk4_step(theta, z, STEP);
            steps_done += 1;
        }
        let rest = t - steps_done as f64 * STEP;
        out[i] = if rest > 1e-12 { rk4_step(theta, z, rest) } else { z };
    }
    out
}

const STATE_MAX: f64 = 1.0 - 1.0 / (1u32 << STATE_BITS) as f64;

fn encode_state(z: f64) -> u16 {
    (z * (1u32 << STATE_BITS) as f64).floor() as u16
}

/// Eight truncated fractional bits per state, `z1` first.
pub fn encode_output(z: (f64, f64)) -> Result<u16> {
    for v in [z.0, z.1] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("state {v} outside [0, 1)")));
        }
    }
    Ok(encode_state(z.0) << 8 | encode_state(z.1))
}

/// Clamps both states into the encodable range first; the flag reports
/// whether clamping changed anything.
pub fn encode_output_clamped(z: (f64, f64)) -> (u16, bool) {
    let c0 = z.0.clamp(0.0, STATE_MAX);
    let c1 = z.1.clamp(0.0, STATE_MAX);
    (encode_state(c0) << 8 | encode_state(c1), c0 != z.0 || c1 != z.1)
}

pub fn decode_output(bits: u16) -> (f64, f64) {
    let scale = (1u32 << STATE_BITS) as f64;
    ((bits >> 8) as f64 / scale, (bits & 0xFF) as f64 / scale)
}

/// An observation: time and encoded state pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub t_millis: u32,
    pub output: u16,
}

impl Observation {
    pub fn t(&self) -> f64 {
        self.t_millis as f64 / 1000.0
    }
}

/// Noise-free observations of the system at the given times.
pub fn observe(theta: &Theta, times_millis: &[u32]) -> Vec<Observation> {
    let times: Vec<f64> = times_millis.iter().map(|&m| m as f64 / 1000.0).collect();
    simulate_many(theta, &times)
        .into_iter()
        .zip(times_millis)
        .map(|(z, &t_millis)| Observation { t_millis, output: encode_output_clamped(z).0 })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Block length for the conditional BDM cost.
    pub cost_block: usize,
    /// Block length used to rank the parameter space.
    pub order_block: usize,
    pub squared: bool,
    pub stop: Stop,
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            cost_block: 4,
            order_block: 4,
            squared: true,
            stop: Stop { max_iters: None, target_cost: Some(0.0) },
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub bits: u16,
    pub theta: Theta,
    pub cost: f64,
    pub iterations: usize,
    /// Simulated states clamped before encoding, over every evaluation.
    pub clamped: usize,
    pub search: SearchResult<u64>,
}

/// Candidate outputs at a fixed set of sample times for every θ, computed
/// once so that repeated fits only score block multisets.
pub struct OutputBank {
    times_millis: Vec<u32>,
    /// `outputs[θ][i]` for sample time `i`.
    outputs: Vec<Vec<u16>>,
    clamped: usize,
}

impl OutputBank {
    pub fn build(times_millis: &[u32], exec: Exec) -> Self {
        let times: Vec<f64> = times_millis.iter().map(|&m| m as f64 / 1000.0).collect();
        let rows = exec.map_range(1 << 16, |bits| {
            let theta = decode_theta(bits as u16);
            let mut clamped = 0;
            let row = simulate_many(&theta, &times)
                .into_iter()
                .map(|z| {
                    let (b, c) = encode_output_clamped(z);
                    clamped += c as usize;
                    b
                })
                .collect::<Vec<u16>>();
            (row, clamped)
        });
        let clamped = rows.iter().map(|r| r.1).sum();
        OutputBank {
            times_millis: times_millis.to_vec(),
            outputs: rows.into_iter().map(|r| r.0).collect(),
            clamped,
        }
    }

    pub fn times_millis(&self) -> &[u32] {
        &self.times_millis
    }

    pub fn output(&self, bits: u16, time_index: usize) -> u16 {
        self.outputs[bits as usize][time_index]
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    fn index_of(&self, t_millis: u32) -> Result<usize> {
        self.times_millis
            .iter()
            .position(|&m| m == t_millis)
            .ok_or_else(|| Error::InvalidArgument(format!("time {t_millis}ms not in the output bank")))
    }
}

/// The 16-bit space in complexity order under `table` and `order_block`.
pub fn theta_order(table: &CtmTable, order_block: usize, exec: Exec) -> Result<Vec<u64>> {
    complexity_order_with(
        ParameterSpace::vector(16)?,
        table,
        &PartitionStrategy::vector(order_block),
        16,
        exec,
    )
}

fn output_multiset(bits: u16, block: usize) -> BlockMultiset {
    partition(&theta_tensor(bits), &PartitionStrategy::vector(block)).expect("16-bit output")
}

/// Searches θ in `order` for the lowest `Σ BDM(y | ŷ(θ))^p`.
pub fn fit_with_bank(
    observations: &[Observation],
    bank: &OutputBank,
    order: &[u64],
    table: &CtmTable,
    opts: &FitOptions,
) -> Result<FitResult> {
    if observations.is_empty() {
        return Err(Error::Empty("fitting needs at least one observation".into()));
    }
    if opts.cost_block == 0 || 16 % opts.cost_block != 0 {
        return Err(Error::InvalidArgument(format!(
            "cost block {} must divide 16",
            opts.cost_block
        )));
    }
    let idx: Vec<usize> = observations.iter().map(|o| bank.index_of(o.t_millis)).collect::<Result<_>>()?;
    let targets: Vec<BlockMultiset> = observations.iter().map(|o| output_multiset(o.output, opts.cost_block)).collect();
    let cost = |&cand: &u64| {
        let mut sum = 0.0;
        for (y, &i) in targets.iter().zip(&idx) {
            let yhat = output_multiset(bank.output(cand as u16, i), opts.cost_block);
            let d = coarse_of(y, &yhat, table);
            sum += if opts.squared { d * d } else { d };
        }
        sum
    };
    let search = algorithmic_search(order, cost, opts.stop, opts.exec)?;
    let bits = search.best as u16;
    Ok(FitResult {
        bits,
        theta: decode_theta(bits),
        cost: search.best_cost,
        iterations: search.iterations,
        clamped: bank.clamped(),
        search,
    })
}

/// One-shot fit: builds the output bank for the observation times.
pub fn fit(observations: &[Observation], table: &CtmTable, opts: &FitOptions) -> Result<FitResult> {
    let times: Vec<u32> = observations.iter().map(|o| o.t_millis).collect();
    let bank = OutputBank::build(&times, opts.exec);
    let order = theta_order(table, opts.order_block, opts.exec)?;
    fit_with_bank(observations, &bank, &order, table, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub set_sizes: Vec<usize>,
    pub max_flips: u32,
    pub reps: usize,
    /// Sample times are drawn from multiples of this step in `(0, 1]`.
    pub grid_millis: u32,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams { set_sizes: vec![5, 7, 10], max_flips: 8, reps: 10, grid_millis: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub set_size: usize,
    pub flips: u32,
    pub mean_distance: f64,
    pub distances: Vec<f64>,
}

/// Flips `flips` distinct bits of a 16-bit word.
pub fn flip_bits(word: u16, flips: u32, rng: &mut impl Rng) -> u16 {
    let mut w = word;
    for p in sample(rng, 16, flips as usize) {
        w ^= 1 << p;
    }
    w
}

/// Mean distance of the recovered θ from the truth for each set size and
/// each flip count `0..=max_flips`.
pub fn noise_experiment(seed: u64, params: &NoiseParams, table: &CtmTable, opts: &FitOptions) -> Result<Vec<NoiseCell>> {
    if params.max_flips > 16 || params.grid_millis == 0 || 1000 % params.grid_millis != 0 {
        return Err(Error::InvalidArgument("invalid noise experiment parameters".into()));
    }
    let grid: Vec<u32> = (1..=1000 / params.grid_millis).map(|k| k * params.grid_millis).collect();
    if params.set_sizes.iter().any(|&s| s == 0 || s > grid.len()) {
        return Err(Error::InvalidArgument(format!("set sizes must be within 1..={}", grid.len())));
    }
    let bank = OutputBank::build(&grid, opts.exec);
    let order = theta_order(table, opts.order_block, opts.exec)?;
    let clean = observe(&TRUE_THETA, &grid);
    let mut cells = Vec::new();
    for (si, &set_size) in params.set_sizes.iter().enumerate() {
        for flips in 0..=params.max_flips {
            let mut distances = Vec::with_capacity(params.reps);
            for rep in 0..params.reps {
                let stream = (si as u64) << 40 | (flips as u64) << 20 | rep as u64;
                let mut rng = sub_rng(seed, stream);
                let mut picks = sample(&mut rng, grid.len(), set_size).into_vec();
                picks.sort_unstable();
                let obs: Vec<Observation> = picks
                    .iter()
                    .map(|&i| Observation {
                        t_millis: clean[i].t_millis,
                        output: flip_bits(clean[i].output, flips, &mut rng),
                    })
                    .collect();
                let fit = fit_with_bank(&obs, &bank, &order, table, opts)?;
                distances.push(fit.theta.distance(&TRUE_THETA));
            }
            let mean_distance = distances.iter().sum::<f64>() / distances.len() as f64;
            cells.push(NoiseCell { set_size, flips, mean_distance, distances });
        }
    }
    Ok(cells)
}

pub fn noise_csv(cells: &[NoiseCell]) -> String {
    let mut out = String::from("set_size,flips,mean_distance\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.set_size, c.flips, c.mean_distance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_encoding() {
        assert_eq!(encode_theta(&TRUE_THETA).unwrap(), 0b0101_0000_0001_0000);
        assert_eq!(theta_tensor(0x5010).to_str01(), "0101000000010000");
        assert_eq!(decode_theta(0x5010), TRUE_THETA);
        for bits in [0u16, 1, 0x8F3A, 0xFFFF] {
            assert_eq!(encode_theta(&decode_theta(bits)).unwrap(), bits);
        }
        assert!(encode_theta(&Theta { theta1: 16.0, theta2: 0.0 }).is_err());
        assert!(encode_theta(&Theta { theta1: 0.01, theta2: 0.0 }).is_err());
    }

    #[test]
    fn simulate_matches_closed_form() {
        assert_eq!(simulate(&TRUE_THETA, 0.0), (1.0, 0.0));
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let (z1, z2) = simulate(&TRUE_THETA, t);
            assert!((z1 - (-5.0 * t).exp()).abs() < 1e-6);
            assert!((z2 - 1.25 * ((-t).exp() - (-5.0 * t).exp())).abs() < 1e-6);
        }
        let many = simulate_many(&TRUE_THETA, &[0.5, 0.1, 0.3]);
        assert_eq!(many[1], simulate(&TRUE_THETA, 0.1));
        assert_eq!(many[0], simulate(&TRUE_THETA, 0.5));
    }

    #[test]
    fn output_encoding() {
        assert_eq!(encode_output((0.0, 0.0)).unwrap(), 0);
        assert_eq!(theta_tensor(encode_output((0.5, 0.25)).unwrap()).to_str01(), "1000000001000000");
        assert!(encode_output((1.0, 0.0)).is_err());
        let (b, clamped) = encode_output_clamped((1.0, 0.2));
        assert!(clamped);
        assert_eq!(b >> 8, 255);
        let z = (0.7071, 0.123);
        let back = decode_output(encode_output(z).unwrap());
        assert!(z.0 - back.0 < 1.0 / 256.0 && z.0 >= back.0);
        assert!(z.1 - back.1 < 1.0 / 256.0 && z.1 >= back.1);
    }

    #[test]
    fn flips_are_distinct() {
        let mut rng = sub_rng(1, 1);
        for f in 0..=16 {
            assert_eq!((flip_bits(0xA5A5, f, &mut rng) ^ 0xA5A5).count_ones(), f);
            assert_eq!((flip_bits(0, f, &mut rng)).count_ones(), f);
        }
    }
}
