//! ODE fitting and the experiment commands.

use algoprob::ctm::builtin_table;
use algoprob::experiments::{
    entropy_vs_bdm, hvbdm_csv, partition_csv, partition_sweep, regression_surface, speedup as run_speedup,
    surface_csv, weakly_increasing, HvBdmParams, Normalization, PartitionParams, SpeedupParams, SurfaceParams,
};
use algoprob::ode::{
    encode_theta, fit_with_bank, noise_csv, noise_experiment, observe, theta_order, FitOptions, NoiseParams,
    OutputBank, Theta, TRUE_THETA,
};
use algoprob::optimizer::Stop;
use algoprob::par::Exec;
use algoprob::plot::{pgm, svg_lines, Series};
use anyhow::Result;
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ctx::{announce, invalid, load, Common, Ctx};

fn write_figure(ctx: &Ctx, name: &str, body: &str) -> Result<()> {
    let path = ctx.path(name);
    algoprob::io::atomic_write(&path, body.as_bytes())?;
    announce(&path);
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeFitConfig {
    /// Sample times in milliseconds within `(0, 1000]`.
    pub times_millis: Vec<u32>,
    pub theta: Theta,
    pub cost_block: usize,
    pub order_block: usize,
    pub squared: bool,
    /// Stop after this many candidates even without a zero-cost hit.
    pub max_iters: Option<usize>,
}

impl Default for OdeFitConfig {
    fn default() -> Self {
        OdeFitConfig {
            times_millis: vec![100, 300, 500, 700, 900],
            theta: TRUE_THETA,
            cost_block: 4,
            order_block: 4,
            squared: true,
            max_iters: None,
        }
    }
}

#[derive(Args, Debug)]
pub struct OdeFitArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Serialize)]
struct FitReport {
    theta_true: Theta,
    bits: u16,
    theta: Theta,
    distance: f64,
    cost: f64,
    iterations: usize,
    truth_rank: Option<usize>,
    clamped: usize,
}

pub fn ode_fit(a: OdeFitArgs) -> Result<()> {
    let (ctx, cfg) = load("ode fit", &a.common, |_: &mut OdeFitConfig| {})?;
    if cfg.times_millis.is_empty() || cfg.times_millis.iter().any(|&t| t == 0 || t > 1000) {
        return Err(invalid("times_millis must be non-empty and within 1..=1000"));
    }
    let truth = encode_theta(&cfg.theta)?;
    let table = builtin_table();
    let exec = Exec::default();
    let opts = FitOptions {
        cost_block: cfg.cost_block,
        order_block: cfg.order_block,
        squared: cfg.squared,
        stop: Stop { max_iters: cfg.max_iters, target_cost: Some(0.0) },
        exec,
    };
    let obs = observe(&cfg.theta, &cfg.times_millis);
    let bank = OutputBank::build(&cfg.times_millis, exec);
    let order = theta_order(table, cfg.order_block, exec)?;
    let fit = fit_with_bank(&obs, &bank, &order, table, &opts)?;
    let report = FitReport {
        theta_true: cfg.theta,
        bits: fit.bits,
        theta: fit.theta,
        distance: fit.theta.distance(&cfg.theta),
        cost: fit.cost,
        iterations: fit.iterations,
        truth_rank: order.iter().position(|&c| c == truth as u64),
        clamped: fit.clamped,
    };
    let path = ctx.write_json("ode_fit.json", &report)?;
    announce(&path);
    let path = ctx.write_csv("ode_trace.csv", &fit.search.trace_csv(&order, |c| format!("{c:016b}")))?;
    announce(&path);
    println!(
        "theta=({}, {}) distance={} iterations={}",
        report.theta.theta1, report.theta.theta2, report.distance, report.iterations
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct OdeNoiseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    reps: Option<usize>,
}

pub fn ode_noise(a: OdeNoiseArgs) -> Result<()> {
    let (ctx, cfg) = load("ode noise", &a.common, |c: &mut NoiseParams| {
        if let Some(r) = a.reps {
            c.reps = r;
        }
    })?;
    let cells = noise_experiment(ctx.seed, &cfg, builtin_table(), &FitOptions::default())?;
    let path = ctx.write_report("ode_noise", &cells, || noise_csv(&cells))?;
    announce(&path);
    let series: Vec<Series> = cfg
        .set_sizes
        .iter()
        .map(|&n| {
            let pts = cells.iter().filter(|c| c.set_size == n).map(|c| (c.flips as f64, c.mean_distance)).collect();
            Series::new(format!("{n} samples"), pts)
        })
        .collect();
    write_figure(&ctx, "ode_noise.svg", &svg_lines("Recovery distance", "flipped bits", "mean distance", &series)?)?;
    for c in &cells {
        println!("set_size={} flips={} mean_distance={:.4}", c.set_size, c.flips, c.mean_distance);
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ExpArgs {
    #[command(flatten)]
    common: Common,
    /// Use the full sample counts instead of the quick defaults.
    #[arg(long)]
    full_scale: bool,
}

/// The full-scale preset applies only when no config file is given.
fn exp_load<T>(command: &str, a: &ExpArgs, full: impl FnOnce() -> T) -> Result<(Ctx, T)>
where
    T: DeserializeOwned + Serialize + Default,
{
    let preset = a.full_scale && a.common.config.is_none();
    load(command, &a.common, |c: &mut T| {
        if preset {
            *c = full();
        }
    })
}

pub fn hvbdm(a: ExpArgs) -> Result<()> {
    let (ctx, cfg) = exp_load("exp hvbdm", &a, HvBdmParams::full_scale)?;
    let points = entropy_vs_bdm(ctx.seed, &cfg, builtin_table(), Exec::default())?;
    let path = ctx.write_report("hvbdm", &points, || hvbdm_csv(&points))?;
    announce(&path);
    let series = vec![
        Series::new("BDM", points.iter().map(|p| (p.bias as f64, p.bdm_normalized)).collect()),
        Series::new("entropy", points.iter().map(|p| (p.bias as f64, p.entropy_normalized)).collect()),
    ];
    write_figure(&ctx, "hvbdm.svg", &svg_lines("Conditional measures", "ones", "normalized value", &series)?)?;
    for p in &points {
        println!("bias={} bdm={:.4} entropy={:.4}", p.bias, p.bdm_normalized, p.entropy_normalized);
    }
    Ok(())
}

pub fn partition(a: ExpArgs) -> Result<()> {
    let (ctx, cfg) = exp_load("exp partition", &a, PartitionParams::full_scale)?;
    let points = partition_sweep(ctx.seed, &cfg, builtin_table(), Exec::default())?;
    let path = ctx.write_report("partition", &points, || partition_csv(&points))?;
    announce(&path);
    let series: Vec<Series> = cfg
        .distributions
        .iter()
        .map(|&o| {
            let pts = points.iter().filter(|p| p.ones == o).map(|p| (p.size as f64, p.per_block)).collect();
            Series::new(format!("{o} ones"), pts)
        })
        .collect();
    write_figure(&ctx, "partition.svg", &svg_lines("Mean BDM per block", "block size", "BDM / blocks", &series)?)?;
    let max = cfg.max_size.min(10);
    for &ones in &cfg.distributions {
        for n in [Normalization::BlockCount, Normalization::BlockLength] {
            println!("ones={ones} {n:?} increasing_1..={max}={}", weakly_increasing(&points, ones, 1..=max, n));
        }
    }
    Ok(())
}

pub fn surface(a: ExpArgs) -> Result<()> {
    let (ctx, cfg) = exp_load("exp surface", &a, SurfaceParams::default)?;
    let report = regression_surface(ctx.seed, &cfg, builtin_table(), Exec::default())?;
    let path = ctx.write_json("surface.json", &report)?;
    announce(&path);
    let path = ctx.write_csv("surface.csv", &surface_csv(&report))?;
    announce(&path);
    let costs: Vec<f64> = report.grid.iter().map(|g| g.2).collect();
    write_figure(&ctx, "surface.pgm", &pgm(report.resolution, report.resolution, &costs)?)?;
    println!(
        "truth_rank={} ordered={} random_pool={} descent={}",
        report.truth_rank, report.ordered.best_cost, report.random_pool.best_cost, report.descent.best_cost
    );
    Ok(())
}

pub fn speedup(a: ExpArgs) -> Result<()> {
    let (ctx, cfg) = exp_load("exp speedup", &a, SpeedupParams::default)?;
    let report = run_speedup(ctx.seed, &cfg, builtin_table(), Exec::default())?;
    let path = ctx.write_report("speedup", &report, || {
        let mut out = String::from("target,target_bdm_rank,ordered_hits,random_hits\n");
        for t in &report.trials {
            out.push_str(&format!("{},{},{},{}\n", t.target, t.target_bdm_rank, t.ordered_hits, t.random_hits));
        }
        out
    })?;
    announce(&path);
    println!("ordered_mean={:.2} random_mean={:.2}", report.ordered_mean, report.random_mean);
    Ok(())
}
