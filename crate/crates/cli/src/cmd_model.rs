//! Training, prediction, evaluation, sample weights and the pixel sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use algoprob::bdm::PartitionStrategy;
use algoprob::domain::CondCtmTable;
use algoprob::generators::{salt, DatasetSplits, LabelledDataset, Split};
use algoprob::par::Exec;
use algoprob::pipeline::{train as train_task, Model, Task, TaskTables, TrainConfig};
use algoprob::robustness::one_pixel_sweep_with;
use algoprob::weighting::{compute_weights, export_weights, WeightSpec};
use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::cmd_data::load_table;
use crate::ctx::{announce, invalid, load, Common, Ctx, NoConfig};

/// A trained model with what is needed to use it again.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    pub train_config: TrainConfig,
    pub model: Model,
}

impl ModelFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(s.parse()?)
}

/// A split of a generated dataset directory, or a single dataset file.
fn load_data(path: &Path, split: Split) -> Result<(Option<String>, LabelledDataset)> {
    if path.is_dir() {
        let ds = DatasetSplits::load(path)?;
        let task = ds.task.clone();
        Ok((Some(task), ds.get(split).clone()))
    } else {
        Ok((None, LabelledDataset::load(path, split, 0)?))
    }
}

fn tables_for(task: Task, cond_db: Option<&PathBuf>) -> Result<TaskTables> {
    let cond = cond_db.map(CondCtmTable::load).transpose()?;
    Ok(TaskTables::resolve(task, cond, Exec::default())?)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory written by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the dataset's task.
    #[arg(long)]
    task: Option<String>,
    /// Conditional database file; built on the fly when absent.
    #[arg(long)]
    cond_db: Option<PathBuf>,
    /// Candidates per streamed region.
    #[arg(long)]
    budget: Option<usize>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (ctx, cfg) = load("train", &a.common, |c: &mut TrainConfig| {
        if let Some(b) = a.budget {
            c.budget = b;
        }
    })?;
    let (ds_task, ds) = load_data(&a.data, Split::Training)?;
    let name = a.task.or(ds_task).ok_or_else(|| invalid("--task is required for a single dataset file"))?;
    let task = Task::from_name(&name)?;
    let tables = tables_for(task, a.cond_db.as_ref())?;
    let start = std::time::Instant::now();
    let mut model = train_task(task, &ds, &tables, &cfg, Exec::default())?;
    if let Model::Centroid(m) = &mut model {
        m.meta.seed = ctx.seed;
        m.meta.config_hash = ctx.config_hash.clone();
    }
    let file = ModelFile { task, seed: ctx.seed, config_hash: ctx.config_hash.clone(), train_config: cfg, model };
    let path = ctx.write_json("model.json", &file)?;
    announce(&path);
    println!("trained {} on {} samples in {:.1}s", task.name(), ds.len(), start.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory (its test split) or dataset file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    cond_db: Option<PathBuf>,
}

/// Reads `{.., result: ModelFile}` as written by `train`.
fn read_model(path: &Path) -> Result<ModelFile> {
    #[derive(Deserialize)]
    struct Doc {
        result: serde_json::Value,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str::<Doc>(&text) {
        Ok(doc) => serde_json::from_value(doc.result).map_err(|e| invalid(format!("{}: {e}", path.display()))),
        Err(_) => ModelFile::load(path),
    }
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let (ctx, _) = load("predict", &a.common, |_: &mut NoConfig| {})?;
    let file = read_model(&a.model)?;
    let (_, ds) = load_data(&a.data, parse_split(&a.split)?)?;
    let tables = tables_for(file.task, a.cond_db.as_ref())?;
    let p = file.model.predictor(tables.tables())?;
    let classes = file.model.classes();
    let preds = Exec::default().map(&ds.samples, |s| p(&s.tensor));
    let mut body = String::from("index,label,predicted\n");
    for (i, (s, p)) in ds.samples.iter().zip(preds).enumerate() {
        let _ = writeln!(body, "{i},{},{}", s.label, classes[p?]);
    }
    let path = ctx.write_csv("predictions.csv", &body)?;
    announce(&path);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    cond_db: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (ctx, _) = load("eval", &a.common, |_: &mut NoConfig| {})?;
    let file = read_model(&a.model)?;
    let (_, ds) = load_data(&a.data, parse_split(&a.split)?)?;
    let tables = tables_for(file.task, a.cond_db.as_ref())?;
    let e = file.model.evaluate(tables.tables(), &ds, Exec::default())?;
    let path = ctx.write_report("eval", &e, || {
        let mut out = format!("accuracy,{}\ntrue\\predicted,{}\n", e.accuracy, e.classes.join(","));
        for (c, row) in e.classes.iter().zip(&e.confusion) {
            let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{c},{}", cells.join(","));
        }
        out
    })?;
    announce(&path);
    println!("accuracy={:.4} samples={}", e.accuracy, e.total);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub split: String,
    pub spec: WeightSpec,
    /// `N` or `RxC`; 2D blocks use the bundled block table.
    pub block: String,
    pub table: Option<String>,
    /// Corrupt the split first: share of samples per class, share of pixels.
    pub salt: Option<(f64, f64)>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig { split: "training".into(), spec: WeightSpec::default(), block: "4x4".into(), table: None, salt: None }
    }
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// JSON list of `{"phi": .., "gamma": ..}` tiers.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    block: Option<String>,
}

#[derive(Serialize)]
struct WeightsSummary {
    rows: usize,
    salted: usize,
    mean_weight_salted: Option<f64>,
    mean_weight_clean: f64,
}

pub fn weights(a: WeightsArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => Some(WeightSpec::from_json(&std::fs::read_to_string(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let (ctx, cfg) = load("weights export", &a.common, |c: &mut WeightsConfig| {
        if let Some(s) = spec {
            c.spec = s;
        }
        if let Some(b) = a.block {
            c.block = b;
        }
    })?;
    let (_, mut ds) = load_data(&a.data, parse_split(&cfg.split)?)?;
    let mut salted = Vec::new();
    if let Some((samples, pixels)) = cfg.salt {
        let s = salt(&ds, samples, pixels, ctx.seed)?;
        ds = s.dataset;
        salted = s.salted;
    }
    let strategy = match cfg.block.split_once('x') {
        None => PartitionStrategy::vector(cfg.block.parse().map_err(|_| invalid("bad block"))?),
        Some((r, c)) => PartitionStrategy::blocks(
            r.parse().map_err(|_| invalid("bad block"))?,
            c.parse().map_err(|_| invalid("bad block"))?,
        ),
    };
    let table_name = cfg
        .table
        .clone()
        .unwrap_or_else(|| if strategy.block_rows == 1 { "builtin".into() } else { "builtin-blocks".into() });
    let table = load_table(&table_name)?;
    let rows = compute_weights(&ds, &cfg.spec, &table, &strategy, Exec::default())?;
    let prov = ctx.provenance();
    let meta: Vec<(&str, String)> = prov.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let path = ctx.path("weights.csv");
    export_weights(&rows, &path, &meta)?;
    announce(&path);
    let mean = |pick: &dyn Fn(usize) -> bool| {
        let w: Vec<f64> = rows.iter().filter(|r| pick(r.index)).map(|r| r.weight).collect();
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    };
    let summary = WeightsSummary {
        rows: rows.len(),
        salted: salted.len(),
        mean_weight_salted: mean(&|i| salted.binary_search(&i).is_ok()),
        mean_weight_clean: mean(&|i| salted.binary_search(&i).is_err()).unwrap_or(0.0),
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    cond_db: Option<PathBuf>,
}

pub fn attack(a: AttackArgs) -> Result<()> {
    let (ctx, _) = load("attack sweep", &a.common, |_: &mut NoConfig| {})?;
    let file = read_model(&a.model)?;
    let (_, ds) = load_data(&a.data, parse_split(&a.split)?)?;
    let tables = tables_for(file.task, a.cond_db.as_ref())?;
    let p = file.model.predictor(tables.tables())?;
    let report = one_pixel_sweep_with(&ds, p, Exec::default())?;
    let path = write_sweep(&ctx, &report)?;
    announce(&path);
    println!(
        "vulnerabilities={} per_sample={:.3} pct_pixels={:.4}",
        report.total_vulnerabilities, report.per_sample_mean, report.pct_pixels
    );
    Ok(())
}

fn write_sweep(ctx: &Ctx, r: &algoprob::robustness::SweepReport) -> Result<PathBuf> {
    ctx.write_report("attack", r, || {
        format!(
            "samples,pixels_per_sample,total_vulnerabilities,per_sample_mean,pct_pixels\n{},{},{},{},{}\n",
            r.samples, r.pixels_per_sample, r.total_vulnerabilities, r.per_sample_mean, r.pct_pixels
        )
    })
}
