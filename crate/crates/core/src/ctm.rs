//! Coding-theorem complexity tables.
//!
//! A [`CtmTable`] maps base blocks to an approximate algorithmic complexity in
//! bits, `-log2(frequency)`, where the frequency is the share of halting
//! machines of a small Turing-machine space that output the block. Tables are
//! built by [`enumerate_machines`] or loaded from the text format written by
//! [`CtmTable::persist`].
//!
//! Machines use the busy-beaver formalism: `n` working states plus a halting
//! state, two symbols, and for every `(state, symbol)` one of `4n + 2`
//! instructions (write, move left/right, next state; or write and halt without
//! moving). A machine starts on a blank tape of 0s in state 1; its output is
//! the contiguous segment of cells the head visited.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::OnceLock;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::par::Exec;
use crate::tensor::{BinaryTensor, Block};

pub const FORMAT_VERSION: u32 = 1;

/// Step bound that is exact for every halting machine with up to four states.
pub const DEFAULT_MAX_STEPS: u32 = 107;

/// Default cap on the number of machines an enumeration may cover.
pub const DEFAULT_MACHINE_CAP: u128 = 20_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuringMachineSpec {
    pub states: u32,
    pub symbols: u32,
    pub max_steps: u32,
}

impl TuringMachineSpec {
    pub fn new(states: u32, max_steps: u32) -> Result<Self> {
        let spec = TuringMachineSpec {
            states,
            symbols: 2,
            max_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(Error::InvalidArgument("states must be >= 1".into()));
        }
        if self.symbols != 2 {
            return Err(Error::InvalidArgument(format!(
                "only 2-symbol machines are supported, got {}",
                self.symbols
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Instructions available to each `(state, symbol)` entry.
    pub fn instructions_per_entry(&self) -> u64 {
        4 * self.states as u64 + 2
    }

    pub fn entries(&self) -> u32 {
        2 * self.states
    }

    /// `(4n + 2)^(2n)`.
    pub fn machine_count(&self) -> u128 {
        (self.instructions_per_entry() as u128).pow(self.entries())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Binary strings of any length (blocks of shape `1×n`).
    Strings,
    /// Square or rectangular blocks of one fixed shape.
    Blocks { rows: usize, cols: usize },
}

impl Domain {
    pub fn accepts(&self, shape: (usize, usize)) -> bool {
        match *self {
            Domain::Strings => shape.0 == 1,
            Domain::Blocks { rows, cols } => shape == (rows, cols),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Strings => write!(f, "1d"),
            Domain::Blocks { rows, cols } => write!(f, "2d:{rows}x{cols}"),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "1d" {
            return Ok(Domain::Strings);
        }
        let shape = s
            .strip_prefix("2d:")
            .ok_or_else(|| Error::InvalidArgument(format!("unknown domain `{s}`")))?;
        let (rows, cols) = crate::tensor::parse_shape(shape)?;
        if rows == 0 || cols == 0 || rows * cols > Block::MAX_CELLS {
            return Err(Error::InvalidArgument(format!("bad block domain `{s}`")));
        }
        Ok(Domain::Blocks { rows, cols })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TableSource {
    Enumerated(TuringMachineSpec),
    Imported(String),
    /// Built from another table, e.g. 2D blocks scored by their rows.
    Derived(String),
}

impl fmt::Display for TableSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableSource::Enumerated(s) => write!(
                f,
                "enumerated:states={},symbols={},max_steps={}",
                s.states, s.symbols, s.max_steps
            ),
            TableSource::Imported(p) => write!(f, "imported:{p}"),
            TableSource::Derived(d) => write!(f, "derived:{d}"),
        }
    }
}

impl std::str::FromStr for TableSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("bad source `{s}`")))?;
        match kind {
            "enumerated" => {
                let mut states = None;
                let mut symbols = None;
                let mut max_steps = None;
                for kv in rest.split(',') {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidArgument(format!("bad source `{s}`")))?;
                    let v: u32 = v
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad source `{s}`")))?;
                    match k {
                        "states" => states = Some(v),
                        "symbols" => symbols = Some(v),
                        "max_steps" => max_steps = Some(v),
                        _ => return Err(Error::InvalidArgument(format!("bad source `{s}`"))),
                    }
                }
                let spec = TuringMachineSpec {
                    states: states.ok_or_else(|| Error::InvalidArgument("missing states".into()))?,
                    symbols: symbols.unwrap_or(2),
                    max_steps: max_steps
                        .ok_or_else(|| Error::InvalidArgument("missing max_steps".into()))?,
                };
                spec.validate()?;
                Ok(TableSource::Enumerated(spec))
            }
            "imported" => Ok(TableSource::Imported(rest.to_string())),
            "derived" => Ok(TableSource::Derived(rest.to_string())),
            _ => Err(Error::InvalidArgument(format!("unknown source kind `{kind}`"))),
        }
    }
}

/// Rounds up to the sixth decimal so that the stored value is exactly what the
/// text format reproduces, and never understates a complexity.
pub fn quantize_bits(x: f64) -> f64 {
    // The small offset keeps values already on the grid where they are.
    let q = (x * 1e6 - 1e-6).ceil() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// `-log2(count / total)`, quantized.
pub fn frequency_bits(count: u64, total: u64) -> f64 {
    quantize_bits(-((count as f64) / (total as f64)).log2())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtmTable {
    domain: Domain,
    entries: FxHashMap<Block, f64>,
    total: u64,
    source: TableSource,
    missing_penalty: f64,
    notes: Vec<(String, String)>,
}

impl CtmTable {
    /// Builds a table from explicit values. The penalty defaults to
    /// `ceil(max) + 1` when not given.
    pub fn from_entries(
        domain: Domain,
        entries: impl IntoIterator<Item = (Block, f64)>,
        total: u64,
        source: TableSource,
        missing_penalty: Option<f64>,
    ) -> Result<Self> {
        let mut map = FxHashMap::default();
        for (block, value) in entries {
            if !domain.accepts(block.shape()) {
                return Err(Error::ShapeMismatch(format!(
                    "block {block} outside table domain {domain}"
                )));
            }
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "complexity of {block} must be a non-negative number, got {value}"
                )));
            }
            map.insert(block, quantize_bits(value));
        }
        let max = map.values().cloned().fold(0.0, f64::max);
        let penalty = match missing_penalty {
            Some(p) => quantize_bits(p),
            None => max.ceil() + 1.0,
        };
        if penalty < max {
            return Err(Error::InvalidArgument(format!(
                "missing penalty {penalty} below the largest entry {max}"
            )));
        }
        Ok(CtmTable {
            domain,
            entries: map,
            total,
            source,
            missing_penalty: penalty,
            notes: Vec::new(),
        })
    }

    fn from_counts(
        spec: TuringMachineSpec,
        counts: FxHashMap<Block, u64>,
        total: u64,
    ) -> Result<Self> {
        let entries = counts
            .into_iter()
            .map(|(b, c)| (b, frequency_bits(c, total)))
            .collect::<Vec<_>>();
        CtmTable::from_entries(
            Domain::Strings,
            entries,
            total,
            TableSource::Enumerated(spec),
            None,
        )
    }

    /// Extra `#key=value` header lines, e.g. provenance.
    pub fn with_notes(mut self, notes: Vec<(String, String)>) -> Self {
        self.notes = notes;
        self
    }

    pub fn notes(&self) -> &[(String, String)] {
        &self.notes
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn source(&self) -> &TableSource {
        &self.source
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

    pub fn get(&self, block: &Block) -> Option<f64> {
        self.entries.get(block).copied()
    }

    /// Stored value or the missing penalty. The caller has checked the shape.
    #[inline]
    pub fn value(&self, block: &Block) -> f64 {
        self.entries
            .get(block)
            .copied()
            .unwrap_or(self.missing_penalty)
    }

    /// Complexity of `block`, or the missing penalty when it is absent.
    pub fn ctm(&self, block: &BinaryTensor) -> Result<f64> {
        if !self.domain.accepts(block.shape()) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} block queried against a {} table",
                block.rows(),
                block.cols(),
                self.domain
            )));
        }
        Ok(self.value(&Block::from_tensor(block)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Block, &f64)> {
        self.entries.iter()
    }

    /// Entries sorted by shape and then lexicographically.
    pub fn sorted_entries(&self) -> Vec<(Block, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(b, v)| (*b, *v)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn max_value(&self) -> f64 {
        self.entries.values().cloned().fold(0.0, f64::max)
    }

    /// `Σ 2^-value` over all entries.
    pub fn probability_mass(&self) -> f64 {
        self.entries.values().map(|v| (-v).exp2()).sum()
    }

    /// Arithmetic mean over the stored entries of one block length.
    pub fn mean_value(&self, len: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .entries
            .iter()
            .filter(|(b, _)| b.len() == len)
            .map(|(_, v)| *v)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// Longest `n` such that every string of length `1..=n` has an entry.
    pub fn complete_length(&self) -> usize {
        if self.domain != Domain::Strings {
            return 0;
        }
        let mut per_len: BTreeMap<usize, usize> = BTreeMap::new();
        for b in self.entries.keys() {
            *per_len.entry(b.len()).or_default() += 1;
        }
        let mut n = 0;
        while n < 63 && per_len.get(&(n + 1)).copied().unwrap_or(0) == 1usize << (n + 1) {
            n += 1;
        }
        n
    }

    /// A table over `rows×cols` blocks that scores every block by the BDM of
    /// its rows under this string table. Blocks whose rows are all covered by
    /// this table keep finite, ordered values; the result is complete.
    pub fn derive_row_blocks(&self, rows: usize, cols: usize) -> Result<CtmTable> {
        if self.domain != Domain::Strings {
            return Err(Error::InvalidArgument(
                "row-derived tables need a string table".into(),
            ));
        }
        let cells = rows * cols;
        if cells == 0 || cells > 24 {
            return Err(Error::InvalidArgument(format!(
                "derived block shape {rows}x{cols} must have 1..=24 cells"
            )));
        }
        let row_mask = (1u128 << cols) - 1;
        let mut entries = Vec::with_capacity(1 << cells);
        for bits in 0u128..(1u128 << cells) {
            let mut seen: Vec<(u128, u32)> = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = (bits >> ((rows - 1 - r) * cols)) & row_mask;
                match seen.iter_mut().find(|(b, _)| *b == row) {
                    Some(e) => e.1 += 1,
                    None => seen.push((row, 1)),
                }
            }
            let value: f64 = seen
                .iter()
                .map(|(row, n)| self.value(&Block::raw(1, cols, *row)) + (*n as f64).log2())
                .sum();
            entries.push((Block::raw(rows, cols, bits), value));
        }
        CtmTable::from_entries(
            Domain::Blocks { rows, cols },
            entries,
            0,
            TableSource::Derived(format!("rows-of:{}", self.source)),
            None,
        )
    }

    /// Writes the table in the versioned text format, atomically.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#version={FORMAT_VERSION}\n"));
        out.push_str(&format!("#domain={}\n", self.domain));
        out.push_str(&format!("#source={}\n", self.source));
        out.push_str(&format!("#total={}\n", self.total));
        out.push_str(&format!("#penalty={:.6}\n", self.missing_penalty));
        for (k, v) in &self.notes {
            out.push_str(&format!("#{k}={v}\n"));
        }
        for (block, value) in self.sorted_entries() {
            let key = match self.domain {
                Domain::Strings => block.to_str01(),
                Domain::Blocks { .. } => block.to_tensor().to_string(),
            };
            out.push_str(&format!("{key}\t{value:.6}\n"));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read(file)
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut header = Header::default();
        let mut entries = Vec::new();
        let mut domain = None;
        let mut source = None;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if !entries.is_empty() {
                    return Err(Error::malformed(lineno, "header line after body"));
                }
                header.accept(lineno, h, CTM_HEADER_KEYS)?;
                if domain.is_none() {
                    if let Some(d) = &header.domain {
                        let d: Domain = d
                            .parse()
                            .map_err(|_| Error::malformed(lineno, format!("bad domain `{d}`")))?;
                        domain = Some(d);
                    }
                }
                if source.is_none() {
                    if let Some(v) = &header.source {
                        let v: TableSource = v
                            .parse()
                            .map_err(|_| Error::malformed(lineno, format!("bad source `{v}`")))?;
                        source = Some(v);
                    }
                }
                continue;
            }
            header.require_complete(lineno, CTM_HEADER_KEYS)?;
            let domain = domain.expect("domain parsed with header");
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::malformed(lineno, "expected `<block>\\t<value>`"))?;
            let block: Block = key
                .parse()
                .map_err(|e| Error::malformed(lineno, format!("{e}")))?;
            if !domain.accepts(block.shape()) {
                return Err(Error::malformed(
                    lineno,
                    format!("block {key} outside domain {domain}"),
                ));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::malformed(lineno, format!("bad value `{value}`")))?;
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::malformed(
                    lineno,
                    format!("complexity must be non-negative, got {value}"),
                ));
            }
            entries.push((block, value));
        }
        header.require_complete(0, CTM_HEADER_KEYS)?;
        Ok(CtmTable::from_entries(
            domain.unwrap(),
            entries,
            header.total.unwrap(),
            source.unwrap(),
            header.penalty,
        )?
        .with_notes(header.extra))
    }
}

/// Text of the bundled table: the (4,2) space with the default step bound.
pub const BUILTIN_TABLE_TEXT: &str = include_str!("../data/ctm-4-2.tsv");

/// The bundled string table, parsed once.
pub fn builtin_table() -> &'static CtmTable {
    static TABLE: OnceLock<CtmTable> = OnceLock::new();
    TABLE.get_or_init(|| CtmTable::read(BUILTIN_TABLE_TEXT.as_bytes()).expect("bundled table parses"))
}

/// 4×4 blocks scored from their rows under [`builtin_table`].
pub fn builtin_block_table() -> &'static CtmTable {
    static TABLE: OnceLock<CtmTable> = OnceLock::new();
    TABLE.get_or_init(|| builtin_table().derive_row_blocks(4, 4).expect("4x4 derivation"))
}

const CTM_HEADER_KEYS: &[&str] = &["version", "domain", "source", "total", "penalty"];

/// Header parser shared with the conditional-table format. Keys must appear
/// in the canonical order, each exactly once.
#[derive(Default)]
pub(crate) struct Header {
    seen: usize,
    pub version: Option<u32>,
    pub kind: Option<String>,
    pub domain: Option<String>,
    pub source: Option<String>,
    pub total: Option<u64>,
    pub penalty: Option<f64>,
    pub extra: Vec<(String, String)>,
}

impl Header {
    pub(crate) fn accept(&mut self, lineno: usize, line: &str, keys: &[&str]) -> Result<()> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::malformed(lineno, "header must be `#key=value`"))?;
        let Some(pos) = keys.iter().position(|key| *key == k) else {
            self.extra.push((k.to_string(), v.to_string()));
            return Ok(());
        };
        if pos != self.seen {
            return Err(Error::malformed(
                lineno,
                format!("header `{k}` out of order; expected `{}`", keys.get(self.seen).unwrap_or(&"body")),
            ));
        }
        self.seen += 1;
        let bad = |what: &str| Error::malformed(lineno, format!("bad {what} `{v}`"));
        match k {
            "version" => {
                let ver: u32 = v.parse().map_err(|_| bad("version"))?;
                if ver != FORMAT_VERSION {
                    return Err(Error::Version(v.to_string()));
                }
                self.version = Some(ver);
            }
            "kind" => self.kind = Some(v.to_string()),
            "domain" => self.domain = Some(v.to_string()),
            "source" => self.source = Some(v.to_string()),
            "total" => self.total = Some(v.parse().map_err(|_| bad("total"))?),
            "penalty" => {
                let p: f64 = v.parse().map_err(|_| bad("penalty"))?;
                if !(p.is_finite() && p >= 0.0) {
                    return Err(bad("penalty"));
                }
                self.penalty = Some(p);
            }
            _ => self.extra.push((k.to_string(), v.to_string())),
        }
        Ok(())
    }

    pub(crate) fn require_complete(&self, lineno: usize, keys: &[&str]) -> Result<()> {
        if self.seen < keys.len() {
            return Err(Error::malformed(
                lineno,
                format!("missing header `{}`", keys[self.seen]),
            ));
        }
        Ok(())
    }
}

/// Options for [`enumerate_machines_with`].
#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    pub machine_cap: u128,
    pub exec: Exec,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            machine_cap: DEFAULT_MACHINE_CAP,
            exec: Exec::default(),
        }
    }
}

/// Output counts of one machine space, before conversion into bits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutputCounts {
    pub counts: FxHashMap<Block, u64>,
    /// Machines that halted within the step bound.
    pub halting: u64,
    /// Every machine of the space, halting or not.
    pub machines: u128,
}

impl OutputCounts {
    fn merge(mut self, other: OutputCounts) -> OutputCounts {
        for (b, c) in other.counts {
            *self.counts.entry(b).or_default() += c;
        }
        self.halting += other.halting;
        self.machines += other.machines;
        self
    }
}

pub fn enumerate_machines(spec: TuringMachineSpec) -> Result<CtmTable> {
    enumerate_machines_with(spec, EnumerationOptions::default())
}

pub fn enumerate_machines_with(
    spec: TuringMachineSpec,
    options: EnumerationOptions,
) -> Result<CtmTable> {
    let out = count_outputs(spec, options)?;
    if out.halting == 0 {
        return Err(Error::InvalidArgument("no machine halted".into()));
    }
    let table = CtmTable::from_counts(spec, out.counts, out.halting)?;
    debug_assert!(table.probability_mass() <= 1.0 + 1e-9);
    Ok(table)
}

/// Runs every machine of the space from a blank tape.
///
/// Machines are explored as a tree of partial transition tables: a run only
/// branches when it reaches an entry it has not used yet, and a run that halts
/// or exceeds the step bound with `u` entries still unset stands for
/// `(4n + 2)^u` complete machines that all behave identically.
pub fn count_outputs(spec: TuringMachineSpec, options: EnumerationOptions) -> Result<OutputCounts> {
    spec.validate()?;
    let estimated = spec.machine_count();
    if estimated > options.machine_cap {
        return Err(Error::SpaceTooLarge {
            estimated,
            cap: options.machine_cap,
        });
    }
    let runner = TreeRunner::new(spec);
    // Split two levels deep for load balance; runs that finish during the
    // split are accounted for directly.
    let mut first = Vec::new();
    runner.expand(runner.root(), &mut first);
    let mut subtrees = Vec::new();
    let mut out = OutputCounts::default();
    for (p, c) in first {
        runner.advance_or_expand(p, c, &mut subtrees, &mut out);
    }
    let parts = options.exec.map(&subtrees, |(p, c)| {
        let mut acc = OutputCounts::default();
        runner.dfs(p.clone(), c.clone(), &mut acc);
        acc
    });
    for p in parts {
        out = out.merge(p);
    }
    debug_assert_eq!(out.machines, spec.machine_count());
    Ok(out)
}

const UNSET: u8 = u8::MAX;

type Partial = Vec<u8>;

#[derive(Clone)]
struct Config {
    tape: Vec<u8>,
    head: usize,
    state: u8,
    steps: u32,
    lo: usize,
    hi: usize,
}

enum Instr {
    Halt { write: u8 },
    Move { write: u8, right: bool, next: u8 },
}

struct TreeRunner {
    spec: TuringMachineSpec,
    per_entry: u64,
    /// `per_entry^u` for `u` unset entries.
    weights: Vec<u64>,
}

impl TreeRunner {
    fn new(spec: TuringMachineSpec) -> Self {
        let per_entry = spec.instructions_per_entry();
        let weights = (0..=spec.entries())
            .map(|u| per_entry.pow(u))
            .collect();
        TreeRunner {
            spec,
            per_entry,
            weights,
        }
    }

    fn decode(&self, code: u8) -> Instr {
        if code < 2 {
            Instr::Halt { write: code }
        } else {
            let k = code - 2;
            Instr::Move {
                write: k & 1,
                right: (k >> 1) & 1 == 1,
                next: k / 4 + 1,
            }
        }
    }

    fn root(&self) -> (Partial, Config) {
        let width = 2 * self.spec.max_steps as usize + 3;
        let head = width / 2;
        (
            vec![UNSET; self.spec.entries() as usize],
            Config {
                tape: vec![0; width],
                head,
                state: 1,
                steps: 0,
                lo: head,
                hi: head,
            },
        )
    }

    fn entry(&self, c: &Config) -> usize {
        (c.state as usize - 1) * 2 + c.tape[c.head] as usize
    }

    fn expand(&self, (p, c): (Partial, Config), out: &mut Vec<(Partial, Config)>) {
        let e = self.entry(&c);
        for code in 0..self.per_entry as u8 {
            let mut p2 = p.clone();
            p2[e] = code;
            out.push((p2, c.clone()));
        }
    }

    fn unset(&self, p: &Partial) -> usize {
        p.iter().filter(|&&x| x == UNSET).count()
    }

    /// Runs until the next unset entry and expands it, or records the leaf.
    fn advance_or_expand(
        &self,
        p: Partial,
        mut c: Config,
        next: &mut Vec<(Partial, Config)>,
        acc: &mut OutputCounts,
    ) {
        match self.run(&p, &mut c) {
            Some(Step::NeedsEntry) => self.expand((p, c), next),
            Some(Step::Halted) => self.record_halt(&p, &c, acc),
            Some(Step::Exhausted) | None => {
                acc.machines += self.weights[self.unset(&p)] as u128;
            }
        }
    }

    fn record_halt(&self, p: &Partial, c: &Config, acc: &mut OutputCounts) {
        let w = self.weights[self.unset(p)];
        let len = c.hi - c.lo + 1;
        let bits = c.tape[c.lo..=c.hi]
            .iter()
            .fold(0u128, |a, &b| (a << 1) | b as u128);
        *acc.counts.entry(Block::raw(1, len, bits)).or_default() += w;
        acc.halting += w;
        acc.machines += w as u128;
    }

    fn dfs(&self, p: Partial, mut c: Config, acc: &mut OutputCounts) {
        match self.run(&p, &mut c) {
            Some(Step::NeedsEntry) => {
                let e = self.entry(&c);
                for code in 0..self.per_entry as u8 {
                    let mut p2 = p.clone();
                    p2[e] = code;
                    self.dfs(p2, c.clone(), acc);
                }
            }
            Some(Step::Halted) => self.record_halt(&p, &c, acc),
            Some(Step::Exhausted) | None => {
                acc.machines += self.weights[self.unset(&p)] as u128;
            }
        }
    }

    /// Executes defined instructions until halting, the step bound, or an
    /// unset entry.
    fn run(&self, p: &Partial, c: &mut Config) -> Option<Step> {
        loop {
            let e = self.entry(c);
            if p[e] == UNSET {
                return Some(Step::NeedsEntry);
            }
            if c.steps >= self.spec.max_steps {
                return Some(Step::Exhausted);
            }
            c.steps += 1;
            match self.decode(p[e]) {
                Instr::Halt { write } => {
                    c.tape[c.head] = write;
                    return Some(Step::Halted);
                }
                Instr::Move { write, right, next } => {
                    c.tape[c.head] = write;
                    if right {
                        c.head += 1;
                        c.hi = c.hi.max(c.head);
                    } else {
                        c.head -= 1;
                        c.lo = c.lo.min(c.head);
                    }
                    c.state = next;
                }
            }
        }
    }
}

enum Step {
    NeedsEntry,
    Halted,
    Exhausted,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table22() -> CtmTable {
        enumerate_machines(TuringMachineSpec::new(2, DEFAULT_MAX_STEPS).unwrap()).unwrap()
    }

    #[test]
    fn machine_counts() {
        assert_eq!(TuringMachineSpec::new(2, 1).unwrap().machine_count(), 10_000);
        assert_eq!(TuringMachineSpec::new(3, 1).unwrap().machine_count(), 7_529_536);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TuringMachineSpec::new(0, 10).is_err());
        assert!(TuringMachineSpec::new(2, 0).is_err());
        let spec = TuringMachineSpec {
            states: 2,
            symbols: 3,
            max_steps: 10,
        };
        assert!(enumerate_machines(spec).is_err());
    }

    #[test]
    fn refuses_spaces_over_cap() {
        let spec = TuringMachineSpec::new(5, DEFAULT_MAX_STEPS).unwrap();
        match enumerate_machines(spec) {
            Err(Error::SpaceTooLarge { estimated, .. }) => assert_eq!(estimated, 22u128.pow(10)),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn covers_every_machine() {
        let spec = TuringMachineSpec::new(2, DEFAULT_MAX_STEPS).unwrap();
        let out = count_outputs(spec, EnumerationOptions::default()).unwrap();
        assert_eq!(out.machines, 10_000);
        assert_eq!(out.counts.values().sum::<u64>(), out.halting);
    }

    #[test]
    fn most_frequent_output_is_simplest() {
        let t = table22();
        let spec = TuringMachineSpec::new(2, DEFAULT_MAX_STEPS).unwrap();
        let out = count_outputs(spec, EnumerationOptions::default()).unwrap();
        let (top, _) = out.counts.iter().max_by_key(|(b, c)| (**c, std::cmp::Reverse(**b))).unwrap();
        let min = t.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        assert_eq!(t.get(top), Some(min));
    }

    #[test]
    fn probability_mass_bounded() {
        let t = table22();
        assert!(t.probability_mass() <= 1.0 + 1e-9);
        assert!(t.missing_penalty() >= t.max_value());
        assert_eq!(t.missing_penalty(), t.max_value().ceil() + 1.0);
    }

    #[test]
    fn lookup_and_penalty() {
        let t = table22();
        let present = t.sorted_entries()[0];
        assert_eq!(t.ctm(&present.0.to_tensor()).unwrap(), present.1);
        let absent = BinaryTensor::from_str01("1011011101").unwrap();
        assert_eq!(t.ctm(&absent).unwrap(), t.missing_penalty());
        let matrix = BinaryTensor::zeros(2, 2);
        assert!(matches!(t.ctm(&matrix), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mean_over_length_matches_direct_mean() {
        let t = table22();
        let ones: Vec<f64> = t
            .iter()
            .filter(|(b, _)| b.len() == 2)
            .map(|(_, v)| *v)
            .collect();
        let direct = ones.iter().sum::<f64>() / ones.len() as f64;
        assert_eq!(t.mean_value(2).unwrap(), direct);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = table22();
        let back = CtmTable::read(t.to_text().as_bytes()).unwrap();
        assert_eq!(back, t);
        let derived = t.derive_row_blocks(2, 2).unwrap();
        let back = CtmTable::read(derived.to_text().as_bytes()).unwrap();
        assert_eq!(back, derived);
    }

    #[test]
    fn rejects_malformed_files() {
        let ok = "#version=1\n#domain=1d\n#source=imported:x\n#total=0\n#penalty=5.000000\n01\t2.5\n";
        assert!(CtmTable::read(ok.as_bytes()).is_ok());
        let negative = ok.replace("01\t2.5", "01\t-1.0");
        assert!(matches!(
            CtmTable::read(negative.as_bytes()),
            Err(Error::Malformed { line: 6, .. })
        ));
        let version = ok.replace("#version=1", "#version=9");
        assert!(matches!(CtmTable::read(version.as_bytes()), Err(Error::Version(_))));
        let order = ok.replace("#domain=1d\n#source=imported:x", "#source=imported:x\n#domain=1d");
        assert!(CtmTable::read(order.as_bytes()).is_err());
        let missing = ok.replace("#penalty=5.000000\n", "");
        assert!(CtmTable::read(missing.as_bytes()).is_err());
        let low_penalty = ok.replace("#penalty=5.000000", "#penalty=1.000000");
        assert!(CtmTable::read(low_penalty.as_bytes()).is_err());
        let bad_block = ok.replace("01\t2.5", "0x1\t2.5");
        assert!(CtmTable::read(bad_block.as_bytes()).is_err());
    }

    #[test]
    fn derived_rows_score_blocks_by_their_rows() {
        let t = table22();
        let d = t.derive_row_blocks(2, 2).unwrap();
        let zero = Block::raw(1, 2, 0);
        let same_rows = Block::raw(2, 2, 0);
        assert_eq!(d.get(&same_rows).unwrap(), quantize_bits(t.value(&zero) + 1.0));
        assert_eq!(d.len(), 16);
    }
}
