//! Conditional CTM tables built by exhaustive enumeration of small ECA and NK
//! network spaces.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rustc_hash::FxHashMap;

use crate::ctm::{frequency_bits, Header, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::generators::{all_k2_topologies, all_rule_lists, eca_step_bits, rule_list_key, EcaRule, NkNetwork};
use crate::io::atomic_write;
use crate::par::Exec;
use crate::tensor::{BinaryTensor, Block};

pub const ECA_MISSING_PENALTY: f64 = 20.0;
pub const NK_MISSING_PENALTY: f64 = 19.0;

/// Pair counts `(condition, outcome) → count` over a finite set of pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct CondCtmTable {
    domain: String,
    source: String,
    entries: FxHashMap<(Block, Block), u64>,
    total: u64,
    missing_penalty: f64,
    notes: Vec<(String, String)>,
}

impl CondCtmTable {
    pub fn from_counts(
        domain: impl Into<String>,
        source: impl Into<String>,
        entries: FxHashMap<(Block, Block), u64>,
        missing_penalty: f64,
    ) -> Result<Self> {
        let total: u64 = entries.values().sum();
        if total == 0 {
            return Err(Error::Empty("conditional table has no pairs".into()));
        }
        if entries.values().any(|&c| c == 0) {
            return Err(Error::InvalidArgument("pair counts must be positive".into()));
        }
        let floor = (total as f64).log2();
        if !(missing_penalty.is_finite() && missing_penalty > floor) {
            return Err(Error::InvalidArgument(format!(
                "missing penalty {missing_penalty} must exceed log2(total) = {floor:.6}"
            )));
        }
        Ok(CondCtmTable {
            domain: domain.into(),
            source: source.into(),
            entries,
            total,
            missing_penalty,
            notes: Vec::new(),
        })
    }

    /// Extra `#key=value` header lines, written after the mandatory ones.
    pub fn with_notes(mut self, notes: Vec<(String, String)>) -> Self {
        self.notes = notes;
        self
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn notes(&self) -> &[(String, String)] {
        &self.notes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn missing_penalty(&self) -> f64 {
        self.missing_penalty
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, outcome: &Block, condition: &Block) -> u64 {
        self.entries.get(&(*condition, *outcome)).copied().unwrap_or(0)
    }

    /// `-log2(count / total)`, or the missing penalty for an absent pair.
    pub fn value(&self, outcome: &Block, condition: &Block) -> f64 {
        match self.entries.get(&(*condition, *outcome)) {
            Some(&c) => frequency_bits(c, self.total),
            None => self.missing_penalty,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Block, Block), &u64)> {
        self.entries.iter()
    }

    /// `(condition, outcome, count)` sorted by key.
    pub fn sorted_entries(&self) -> Vec<(Block, Block, u64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&(c, o), &n)| (c, o, n)).collect();
        v.sort_unstable();
        v
    }

    /// Pair count of every condition.
    pub fn condition_totals(&self) -> FxHashMap<Block, u64> {
        let mut out = FxHashMap::default();
        for (&(c, _), &n) in &self.entries {
            *out.entry(c).or_default() += n;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#version={FORMAT_VERSION}\n"));
        out.push_str("#kind=conditional\n");
        out.push_str(&format!("#domain={}\n", self.domain));
        out.push_str(&format!("#source={}\n", self.source));
        out.push_str(&format!("#total={}\n", self.total));
        out.push_str(&format!("#penalty={:.6}\n", self.missing_penalty));
        for (k, v) in &self.notes {
            out.push_str(&format!("#{k}={v}\n"));
        }
        for (c, o, n) in self.sorted_entries() {
            out.push_str(&format!("{}\t{}\t{n}\n", key_text(&c), key_text(&o)));
        }
        out
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        let mut header = Header::default();
        let mut entries = FxHashMap::default();
        let mut in_body = false;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if in_body {
                    return Err(Error::malformed(lineno, "header line after body"));
                }
                header.accept(lineno, h, COND_HEADER_KEYS)?;
                if header.kind.as_deref().is_some_and(|k| k != "conditional") {
                    return Err(Error::malformed(lineno, "expected `#kind=conditional`"));
                }
                continue;
            }
            header.require_complete(lineno, COND_HEADER_KEYS)?;
            in_body = true;
            let mut parts = line.split('\t');
            let (Some(c), Some(o), Some(n), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(Error::malformed(lineno, "expected `<condition>\\t<outcome>\\t<count>`"));
            };
            let parse = |s: &str| -> Result<Block> { s.parse().map_err(|e| Error::malformed(lineno, format!("{e}"))) };
            let n: u64 = n
                .trim()
                .parse()
                .map_err(|_| Error::malformed(lineno, format!("bad count `{n}`")))?;
            if n == 0 {
                return Err(Error::malformed(lineno, "count must be positive"));
            }
            if entries.insert((parse(c)?, parse(o)?), n).is_some() {
                return Err(Error::malformed(lineno, "duplicate pair"));
            }
        }
        header.require_complete(0, COND_HEADER_KEYS)?;
        let total = header.total.unwrap();
        let sum: u64 = entries.values().sum();
        if sum != total {
            return Err(Error::malformed(0, format!("counts sum to {sum}, header says {total}")));
        }
        let table = CondCtmTable::from_counts(
            header.domain.unwrap(),
            header.source.unwrap(),
            entries,
            header.penalty.unwrap(),
        )?;
        Ok(table.with_notes(header.extra))
    }
}

const COND_HEADER_KEYS: &[&str] = &["version", "kind", "domain", "source", "total", "penalty"];

fn key_text(b: &Block) -> String {
    if b.rows() == 1 {
        b.to_str01()
    } else {
        b.to_tensor().to_string()
    }
}

pub fn cond_ctm(db: &CondCtmTable, outcome: &BinaryTensor, condition: &BinaryTensor) -> Result<f64> {
    Ok(db.value(&Block::from_tensor(outcome)?, &Block::from_tensor(condition)?))
}

/// Geometry of the ECA conditional database.
pub const ECA_WIDTH: u32 = 12;
pub const ECA_STEPS: usize = 4;
pub const ECA_RULES: u32 = 128;
/// First and last retained columns of the inner crop.
pub const ECA_CROP: (usize, usize) = (3, 8);

/// Condition (inner initial bits) and outcome (inner crop of the evolution)
/// keys of one ECA run.
pub fn eca_cond_pair(rule: EcaRule, init: u64) -> (Block, Block) {
    let (lo, hi) = ECA_CROP;
    let cw = hi - lo + 1;
    let shift = ECA_WIDTH as usize - 1 - hi;
    let crop = |s: u64| (s >> shift) & ((1 << cw) - 1);
    let mut state = init;
    let mut outcome = 0u128;
    for _ in 0..ECA_STEPS {
        state = eca_step_bits(rule, state, ECA_WIDTH);
        outcome = outcome << cw | crop(state) as u128;
    }
    (
        Block::new(1, cw, crop(init) as u128).expect("crop fits"),
        Block::new(ECA_STEPS, cw, outcome).expect("crop fits"),
    )
}

/// Every rule below 128 run from every 12-bit initial row for four steps.
pub fn build_eca_cond_db() -> Result<CondCtmTable> {
    build_eca_cond_db_with(Exec::default())
}

pub fn build_eca_cond_db_with(exec: Exec) -> Result<CondCtmTable> {
    let parts = exec.map_range(ECA_RULES as usize, |rule| {
        let mut counts: FxHashMap<(Block, Block), u64> = FxHashMap::default();
        for init in 0..(1u64 << ECA_WIDTH) {
            *counts.entry(eca_cond_pair(EcaRule(rule as u8), init)).or_default() += 1;
        }
        counts
    });
    let counts = merge(parts);
    let (lo, hi) = ECA_CROP;
    CondCtmTable::from_counts(
        format!("eca:width={ECA_WIDTH},steps={ECA_STEPS},crop={lo}..{hi}"),
        format!("enumerated:rules=0..{ECA_RULES},inits=all"),
        counts,
        ECA_MISSING_PENALTY,
    )
}

fn merge(parts: Vec<FxHashMap<(Block, Block), u64>>) -> FxHashMap<(Block, Block), u64> {
    let mut out: FxHashMap<(Block, Block), u64> = FxHashMap::default();
    for part in parts {
        for (k, v) in part {
            *out.entry(k).or_default() += v;
        }
    }
    out
}

pub const NK_NODES: usize = 4;
pub const NK_STEPS: usize = 10;

/// Conditional databases over every four-node, in-degree-two network with
/// functions from And/Or/Nand/XOr, evolved from the all-zero state.
#[derive(Clone, Debug, PartialEq)]
pub struct NkCondDbs {
    /// Keyed by the flattened 4×4 adjacency matrix.
    pub topology: CondCtmTable,
    /// Keyed by the 8-bit rule-list code.
    pub rules: CondCtmTable,
    pub networks: u64,
}

/// Evolution of one network from zero as a 1×40 block.
pub fn nk_outcome(inputs: &[Vec<usize>], rules: &[crate::generators::BoolFn]) -> Result<Block> {
    let net = NkNetwork::with_rule_list(inputs.to_vec(), rules)?;
    Block::from_tensor(&net.evolve(&BinaryTensor::zeros(1, NK_NODES), NK_STEPS)?)
}

pub fn build_nk_cond_dbs() -> Result<NkCondDbs> {
    build_nk_cond_dbs_with(Exec::default())
}

pub fn build_nk_cond_dbs_with(exec: Exec) -> Result<NkCondDbs> {
    let topologies = all_k2_topologies(NK_NODES);
    let rule_lists = all_rule_lists(NK_NODES);
    let rule_keys: Vec<Block> = rule_lists
        .iter()
        .map(|r| Block::from_tensor(&rule_list_key(r)))
        .collect::<Result<_>>()?;
    let parts = exec.map(&topologies, |inputs| -> Result<_> {
        let net = NkNetwork::with_rule_list(inputs.clone(), &rule_lists[0])?;
        let topo_key = Block::from_tensor(&net.adjacency())?;
        let mut topo = FxHashMap::default();
        let mut rules = FxHashMap::default();
        for (r, rk) in rule_lists.iter().zip(&rule_keys) {
            let outcome = nk_outcome(inputs, r)?;
            *topo.entry((topo_key, outcome)).or_default() += 1;
            *rules.entry((*rk, outcome)).or_default() += 1;
        }
        Ok((topo, rules))
    });
    let mut topo_parts = Vec::new();
    let mut rule_parts = Vec::new();
    for p in parts {
        let (t, r) = p?;
        topo_parts.push(t);
        rule_parts.push(r);
    }
    let networks = (topologies.len() * rule_lists.len()) as u64;
    let codes = vec![("codes".to_string(), "and=00,or=01,nand=10,xor=11".to_string())];
    let domain = format!("nk:n={NK_NODES},k=2,steps={NK_STEPS},init=zero");
    let topology = CondCtmTable::from_counts(
        format!("{domain},key=adjacency"),
        "enumerated:networks=all",
        merge(topo_parts),
        NK_MISSING_PENALTY,
    )?
    .with_notes(codes.clone());
    let rules = CondCtmTable::from_counts(
        format!("{domain},key=rules"),
        "enumerated:networks=all",
        merge(rule_parts),
        NK_MISSING_PENALTY,
    )?
    .with_notes(codes);
    Ok(NkCondDbs { topology, rules, networks })
}
