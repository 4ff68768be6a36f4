//! Tables, complexity measures, datasets and conditional databases.

use std::path::PathBuf;

use algoprob::bdm::{
    block_entropy, cond_bdm_coarse, cond_bdm_strong, joint_bdm, mutual_bdm, PartitionStrategy,
};
use algoprob::ctm::{
    builtin_block_table, builtin_table, enumerate_machines, CtmTable, Domain, TuringMachineSpec, DEFAULT_MAX_STEPS,
};
use algoprob::domain::{build_eca_cond_db, build_nk_cond_dbs, CondCtmTable};
use algoprob::generators::{
    gen_eca_init_dataset, gen_eca_rule_dataset_sized, gen_nk_datasets, EcaInitParams, NkParams, NkTask, SplitSizes,
};
use algoprob::par::Exec;
use algoprob::{BinaryTensor, Block};
use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ctx::{announce, invalid, load, Common, Format, NoConfig};

/// `builtin`, `builtin-blocks` or a table file.
pub fn load_table(spec: &str) -> Result<CtmTable> {
    Ok(match spec {
        "builtin" => builtin_table().clone(),
        "builtin-blocks" => builtin_block_table().clone(),
        path => CtmTable::load(path)?,
    })
}

fn parse_tensor(s: &str) -> Result<BinaryTensor> {
    s.parse().map_err(|e| invalid(format!("tensor `{s}`: {e}")))
}

/// `N` for 1×N blocks or `RxC`.
fn parse_block(s: &str) -> Result<PartitionStrategy> {
    let bad = || invalid(format!("block `{s}`: expected N or RxC"));
    match s.split_once('x') {
        None => Ok(PartitionStrategy::vector(s.parse().map_err(|_| bad())?)),
        Some((r, c)) => Ok(PartitionStrategy::blocks(r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?)),
    }
}

fn print_value<T: Serialize>(format: Format, value: &T, csv_header: &str, csv_row: String) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string(value)?),
        Format::Csv => println!("{csv_header}\n{csv_row}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateConfig {
    pub states: u32,
    pub max_steps: u32,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        EnumerateConfig { states: 2, max_steps: DEFAULT_MAX_STEPS }
    }
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    states: Option<u32>,
    #[arg(long)]
    max_steps: Option<u32>,
}

pub fn enumerate(a: EnumerateArgs) -> Result<()> {
    let (ctx, cfg) = load("ctm enumerate", &a.common, |c: &mut EnumerateConfig| {
        if let Some(s) = a.states {
            c.states = s;
        }
        if let Some(m) = a.max_steps {
            c.max_steps = m;
        }
    })?;
    let spec = TuringMachineSpec::new(cfg.states, cfg.max_steps)?;
    let table = enumerate_machines(spec)?.with_notes(ctx.provenance());
    let path = ctx.path(&format!("ctm-{}-2.tsv", cfg.states));
    table.persist(&path)?;
    announce(&path);
    println!(
        "entries={} total={} max={:.6} penalty={} mass={:.9}",
        table.len(),
        table.total(),
        table.max_value(),
        table.missing_penalty(),
        table.probability_mass()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ImportArgs {
    #[command(flatten)]
    common: Common,
    /// Table in the versioned text format.
    #[arg(long)]
    file: PathBuf,
}

pub fn import(a: ImportArgs) -> Result<()> {
    let (ctx, _) = load("ctm import", &a.common, |_: &mut NoConfig| {})?;
    let table = CtmTable::load(&a.file)?;
    let mut notes: Vec<(String, String)> =
        table.notes().iter().filter(|(k, _)| !matches!(k.as_str(), "command" | "seed" | "config_hash")).cloned().collect();
    notes.extend(ctx.provenance());
    let name = a.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "table.tsv".into());
    let table = table.with_notes(notes);
    let path = ctx.path(&name);
    table.persist(&path)?;
    announce(&path);
    println!("entries={} domain={} penalty={}", table.len(), table.domain(), table.missing_penalty());
    Ok(())
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[command(flatten)]
    common: Common,
    /// Block as `0110` or `RxC:bits`.
    #[arg(long)]
    block: String,
    /// `builtin`, `builtin-blocks` or a table file.
    #[arg(long, default_value = "builtin")]
    table: String,
}

#[derive(Serialize)]
struct QueryResult {
    block: String,
    value: f64,
    missing: bool,
}

pub fn query(a: QueryArgs) -> Result<()> {
    let (ctx, _) = load("ctm query", &a.common, |_: &mut NoConfig| {})?;
    let table = load_table(&a.table)?;
    let block: Block = a.block.parse().map_err(|e| invalid(format!("block `{}`: {e}", a.block)))?;
    let accepted = match table.domain() {
        Domain::Strings => block.rows() == 1,
        Domain::Blocks { rows, cols } => block.shape() == (rows, cols),
    };
    if !accepted {
        return Err(invalid(format!("block {} outside table domain {}", a.block, table.domain())));
    }
    let r = QueryResult { block: a.block.clone(), value: table.value(&block), missing: table.get(&block).is_none() };
    print_value(ctx.format, &r, "block,value,missing", format!("{},{},{}", r.block, r.value, r.missing))
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct BdmArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tensor: String,
    /// Block shape: `N` or `RxC`.
    #[arg(long, default_value = "4")]
    block: String,
    #[arg(long, default_value = "builtin")]
    table: String,
}

#[derive(Serialize)]
struct BdmResult {
    bdm: f64,
    block_entropy: f64,
}

pub fn bdm(a: BdmArgs) -> Result<()> {
    let (ctx, _) = load("bdm compute", &a.common, |_: &mut NoConfig| {})?;
    let table = load_table(&a.table)?;
    let x = parse_tensor(&a.tensor)?;
    let s = parse_block(&a.block)?;
    let r = BdmResult { bdm: algoprob::bdm::bdm(&x, &table, &s)?, block_entropy: block_entropy(&x, &s)? };
    print_value(ctx.format, &r, "bdm,block_entropy", format!("{},{}", r.bdm, r.block_entropy))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CondKind {
    Coarse,
    Strong,
    Joint,
    Mutual,
}

#[derive(Args, Debug)]
pub struct CbdmArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long, default_value = "4")]
    block: String,
    #[arg(long, default_value = "builtin")]
    table: String,
    #[arg(long, value_enum, default_value_t = CondKind::Coarse)]
    kind: CondKind,
}

#[derive(Serialize)]
struct CbdmResult {
    kind: String,
    value: f64,
}

pub fn cbdm(a: CbdmArgs) -> Result<()> {
    let (ctx, _) = load("cbdm compute", &a.common, |_: &mut NoConfig| {})?;
    let table = load_table(&a.table)?;
    let x = parse_tensor(&a.x)?;
    let y = parse_tensor(&a.y)?;
    let s = parse_block(&a.block)?;
    let value = match a.kind {
        CondKind::Coarse => cond_bdm_coarse(&x, &y, &table, &s)?,
        CondKind::Strong => cond_bdm_strong(&x, &y, None, true, &table, &s)?,
        CondKind::Joint => joint_bdm(&x, &y, &table, &s)?,
        CondKind::Mutual => mutual_bdm(&x, &y, &table, &s)?,
    };
    let r = CbdmResult { kind: format!("{:?}", a.kind).to_lowercase(), value };
    print_value(ctx.format, &r, "kind,value", format!("{},{}", r.kind, r.value))
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcaRulesConfig {
    /// Samples per class and split.
    pub sizes: SplitSizes,
}

impl Default for EcaRulesConfig {
    fn default() -> Self {
        EcaRulesConfig { sizes: SplitSizes { training: 25, validation: 25, test: 125 } }
    }
}

pub fn gen_eca_rules(a: GenArgs) -> Result<()> {
    let (ctx, cfg) = load("gen eca-rules", &a.common, |_: &mut EcaRulesConfig| {})?;
    let ds = gen_eca_rule_dataset_sized(ctx.seed, cfg.sizes, Exec::default())?;
    let m = ds.persist(&ctx.out, &ctx.config_hash)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

pub fn gen_eca_init(a: GenArgs) -> Result<()> {
    let (ctx, cfg) = load("gen eca-init", &a.common, |_: &mut EcaInitParams| {})?;
    let ds = gen_eca_init_dataset(ctx.seed, &cfg)?;
    let m = ds.persist(&ctx.out, &ctx.config_hash)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenNkArgs {
    #[command(flatten)]
    common: Common,
    /// `k-class`, `rules` or `topology`.
    #[arg(long, default_value = "k-class")]
    task: String,
}

pub fn gen_nk(a: GenNkArgs) -> Result<()> {
    let task: NkTask = a.task.parse()?;
    let (ctx, cfg) = load(&format!("gen nk {}", a.task), &a.common, |_: &mut NkParams| {})?;
    let ds = gen_nk_datasets(task, ctx.seed, &cfg)?;
    let m = ds.persist(&ctx.out, &ctx.config_hash)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DctmArgs {
    #[command(flatten)]
    common: Common,
}

fn persist_db(db: CondCtmTable, ctx: &crate::ctx::Ctx, name: &str) -> Result<()> {
    let mut notes = db.notes().to_vec();
    notes.extend(ctx.provenance());
    let db = db.with_notes(notes);
    let path = ctx.path(name);
    db.persist(&path)?;
    announce(&path);
    println!("{name}: pairs={} total={} penalty={}", db.len(), db.total(), db.missing_penalty());
    Ok(())
}

pub fn build_eca(a: DctmArgs) -> Result<()> {
    let (ctx, _) = load("dctm build-eca", &a.common, |_: &mut NoConfig| {})?;
    persist_db(build_eca_cond_db()?, &ctx, "eca-cond.tsv")
}

pub fn build_nk(a: DctmArgs) -> Result<()> {
    let (ctx, _) = load("dctm build-nk", &a.common, |_: &mut NoConfig| {})?;
    let dbs = build_nk_cond_dbs()?;
    println!("networks={}", dbs.networks);
    persist_db(dbs.topology, &ctx, "nk-topology.tsv")?;
    persist_db(dbs.rules, &ctx, "nk-rules.tsv")
}
