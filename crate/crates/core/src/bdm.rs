//! Block decomposition: partitions, BDM and its conditional, joint and mutual
//! forms, plus the block-entropy baselines.
//!
//! All logarithms are base 2. Multiplicities are always at least one, so
//! `log2(n)` is never evaluated at zero.

use serde::{Deserialize, Serialize};

use crate::ctm::CtmTable;
use crate::domain::CondCtmTable;
use crate::error::{Error, Result};
use crate::tensor::{BinaryTensor, Block};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leftover {
    /// Trailing fragments smaller than the block shape are dropped.
    #[default]
    Discard,
    /// Fragments are kept when the table in use has an entry for them.
    KeepIfScored,
}

/// Non-overlapping row-major tiling into `block_rows × block_cols` blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionStrategy {
    pub block_rows: usize,
    pub block_cols: usize,
    #[serde(default)]
    pub leftover: Leftover,
}

impl PartitionStrategy {
    pub fn vector(len: usize) -> Self {
        PartitionStrategy::blocks(1, len)
    }

    pub fn blocks(rows: usize, cols: usize) -> Self {
        PartitionStrategy {
            block_rows: rows,
            block_cols: cols,
            leftover: Leftover::Discard,
        }
    }

    pub fn with_leftover(mut self, leftover: Leftover) -> Self {
        self.leftover = leftover;
        self
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.block_rows, self.block_cols)
    }

    /// Number of full blocks the strategy cuts from a tensor of `shape`.
    pub fn full_blocks(&self, shape: (usize, usize)) -> usize {
        (shape.0 / self.block_rows) * (shape.1 / self.block_cols)
    }

    fn check(&self, x: &BinaryTensor) -> Result<()> {
        if x.is_empty() {
            return Err(Error::Empty("cannot partition an empty tensor".into()));
        }
        if self.block_rows == 0 || self.block_cols == 0 {
            return Err(Error::InvalidArgument("block dimensions must be >= 1".into()));
        }
        if self.block_rows * self.block_cols > Block::MAX_CELLS {
            return Err(Error::InvalidArgument(format!(
                "blocks of {}x{} exceed {} cells",
                self.block_rows,
                self.block_cols,
                Block::MAX_CELLS
            )));
        }
        if self.block_rows > x.rows() || self.block_cols > x.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} blocks do not fit a {}x{} tensor",
                self.block_rows,
                self.block_cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// `Adj(X)`: distinct blocks with their multiplicities, sorted by block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockMultiset {
    entries: Vec<(Block, u32)>,
}

impl BlockMultiset {
    pub fn from_blocks(mut blocks: Vec<Block>) -> Self {
        blocks.sort_unstable();
        let mut entries: Vec<(Block, u32)> = Vec::with_capacity(blocks.len());
        for b in blocks {
            match entries.last_mut() {
                Some((last, n)) if *last == b => *n += 1,
                _ => entries.push((b, 1)),
            }
        }
        BlockMultiset { entries }
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (Block, u32)>) -> Self {
        let mut blocks = Vec::new();
        for (b, n) in counts {
            blocks.extend(std::iter::repeat_n(b, n as usize));
        }
        BlockMultiset::from_blocks(blocks)
    }

    pub fn entries(&self) -> &[(Block, u32)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Block, u32)> {
        self.entries.iter()
    }

    /// Number of distinct blocks.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_blocks(&self) -> u64 {
        self.entries.iter().map(|(_, n)| *n as u64).sum()
    }

    pub fn multiplicity(&self, block: &Block) -> Option<u32> {
        self.entries
            .binary_search_by(|(b, _)| b.cmp(block))
            .ok()
            .map(|i| self.entries[i].1)
    }

    fn retain_scored(mut self, shape: (usize, usize), table: &CtmTable) -> Self {
        self.entries
            .retain(|(b, _)| b.shape() == shape || table.get(b).is_some());
        self
    }
}

/// Cuts `x` into blocks. With [`Leftover::KeepIfScored`] the edge fragments
/// are included here and filtered against the table by the scoring functions.
pub fn partition(x: &BinaryTensor, s: &PartitionStrategy) -> Result<BlockMultiset> {
    s.check(x)?;
    Ok(BlockMultiset::from_blocks(partition_blocks(x, s)))
}

/// The tiles of `x` in row-major tile order.
pub fn partition_blocks(x: &BinaryTensor, s: &PartitionStrategy) -> Vec<Block> {
    let (br, bc) = s.block_shape();
    let keep = s.leftover == Leftover::KeepIfScored;
    let mut blocks = Vec::with_capacity(s.full_blocks(x.shape()) + 1);
    let mut r = 0;
    while r < x.rows() {
        let h = br.min(x.rows() - r);
        if h < br && !keep {
            break;
        }
        let mut c = 0;
        while c < x.cols() {
            let w = bc.min(x.cols() - c);
            if w < bc && !keep {
                break;
            }
            blocks.push(Block::from_window(x, r, c, h, w));
            c += bc;
        }
        r += br;
    }
    blocks
}

fn scored_partition(x: &BinaryTensor, table: &CtmTable, s: &PartitionStrategy) -> Result<BlockMultiset> {
    if !table.domain().accepts(s.block_shape()) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} blocks cannot be scored by a {} table",
            s.block_rows,
            s.block_cols,
            table.domain()
        )));
    }
    let ms = partition(x, s)?;
    Ok(match s.leftover {
        Leftover::Discard => ms,
        Leftover::KeepIfScored => ms.retain_scored(s.block_shape(), table),
    })
}

#[inline]
fn log2n(n: u32) -> f64 {
    (n as f64).log2()
}

/// `0` when the multiplicities agree, `log2(nx)` otherwise.
#[inline]
pub fn f_multiplicity(nx: u32, ny: u32) -> f64 {
    if nx == ny {
        0.0
    } else {
        log2n(nx)
    }
}

/// `Σ ctm(r) + log2(n)` over a multiset.
pub fn bdm_of(ms: &BlockMultiset, table: &CtmTable) -> f64 {
    ms.iter().map(|(b, n)| table.value(b) + log2n(*n)).sum()
}

pub fn bdm(x: &BinaryTensor, table: &CtmTable, s: &PartitionStrategy) -> Result<f64> {
    Ok(bdm_of(&scored_partition(x, table, s)?, table))
}

/// Coarse conditional BDM over two multisets.
pub fn coarse_of(mx: &BlockMultiset, my: &BlockMultiset, table: &CtmTable) -> f64 {
    let ys = my.entries();
    let mut j = 0;
    let mut sum = 0.0;
    for (b, nx) in mx.iter() {
        while j < ys.len() && ys[j].0 < *b {
            j += 1;
        }
        if j < ys.len() && ys[j].0 == *b {
            sum += f_multiplicity(*nx, ys[j].1);
        } else {
            sum += table.value(b) + log2n(*nx);
        }
    }
    sum
}

pub fn cond_bdm_coarse(
    x: &BinaryTensor,
    y: &BinaryTensor,
    table: &CtmTable,
    s: &PartitionStrategy,
) -> Result<f64> {
    let mx = scored_partition(x, table, s)?;
    let my = scored_partition(y, table, s)?;
    Ok(coarse_of(&mx, &my, table))
}

/// How block pairs are scored by the strong conditional form.
#[derive(Clone, Copy, Debug)]
pub enum PairScorer<'a> {
    /// Conditional-table lookup, absent pairs at the table's penalty.
    Table(&'a CondCtmTable),
    /// `0` for identical blocks and `ctm(r)` otherwise.
    Fallback,
}

impl PairScorer<'_> {
    #[inline]
    fn score(&self, outcome: &Block, condition: &Block, table: &CtmTable) -> f64 {
        match self {
            PairScorer::Table(db) => db.value(outcome, condition),
            PairScorer::Fallback => {
                if outcome == condition {
                    0.0
                } else {
                    table.value(outcome)
                }
            }
        }
    }
}

/// Strong conditional BDM over two multisets.
///
/// Each `(r_x, n_x)` is paired with the `Y` entry that minimises its term, as
/// `Y` entries may be reused. Pairing a block with an identical one costs only
/// `f(n_x, n_y)`; pairing it with a different block costs the pair score,
/// capped at `ctm(r_x)`, plus `log2(n_x)` to state the multiplicity.
pub fn strong_of(mx: &BlockMultiset, my: &BlockMultiset, scorer: PairScorer<'_>, table: &CtmTable) -> f64 {
    mx.iter()
        .map(|(rx, nx)| {
            let own = table.value(rx);
            let mut best = own + log2n(*nx);
            for (ry, ny) in my.iter() {
                let term = if rx == ry {
                    f_multiplicity(*nx, *ny)
                } else {
                    scorer.score(rx, ry, table).min(own) + log2n(*nx)
                };
                if term < best {
                    best = term;
                }
            }
            best
        })
        .sum()
}

pub fn cond_bdm_strong(
    x: &BinaryTensor,
    y: &BinaryTensor,
    cond: Option<&CondCtmTable>,
    fallback: bool,
    table: &CtmTable,
    s: &PartitionStrategy,
) -> Result<f64> {
    let scorer = match (cond, fallback) {
        (Some(db), _) => PairScorer::Table(db),
        (None, true) => PairScorer::Fallback,
        (None, false) => {
            return Err(Error::InvalidArgument(
                "strong conditional BDM needs a conditional table or fallback mode".into(),
            ))
        }
    };
    let mx = scored_partition(x, table, s)?;
    let my = scored_partition(y, table, s)?;
    Ok(strong_of(&mx, &my, scorer, table))
}

/// Strong conditional BDM with position-aligned pairing: tile `i` of `x` is
/// scored against tile `i` of `y`. The two tensors may use different block
/// shapes as long as they produce the same tile grid. The score of a tile is
/// capped at its unconditional complexity when `table` can score its shape.
pub fn cond_bdm_aligned(
    x: &BinaryTensor,
    y: &BinaryTensor,
    cond: &CondCtmTable,
    sx: &PartitionStrategy,
    sy: &PartitionStrategy,
    table: Option<&CtmTable>,
) -> Result<f64> {
    sx.check(x)?;
    sy.check(y)?;
    let gx = (x.rows() / sx.block_rows, x.cols() / sx.block_cols);
    let gy = (y.rows() / sy.block_rows, y.cols() / sy.block_cols);
    if gx != gy {
        return Err(Error::ShapeMismatch(format!(
            "tile grids differ: {gx:?} vs {gy:?}"
        )));
    }
    let tx = partition_blocks(x, &sx.with_leftover(Leftover::Discard));
    let ty = partition_blocks(y, &sy.with_leftover(Leftover::Discard));
    let cap = table.filter(|t| t.domain().accepts(sx.block_shape()));
    Ok(tx
        .iter()
        .zip(&ty)
        .map(|(bx, by)| {
            let v = cond.value(bx, by);
            match cap {
                Some(t) => v.min(t.value(bx)),
                None => v,
            }
        })
        .sum())
}

/// `BDM(Y|X) + BDM(X)`.
pub fn joint_bdm(x: &BinaryTensor, y: &BinaryTensor, table: &CtmTable, s: &PartitionStrategy) -> Result<f64> {
    let mx = scored_partition(x, table, s)?;
    let my = scored_partition(y, table, s)?;
    Ok(coarse_of(&my, &mx, table) + bdm_of(&mx, table))
}

/// `BDM(X) - BDM(X|Y)`.
pub fn mutual_bdm(x: &BinaryTensor, y: &BinaryTensor, table: &CtmTable, s: &PartitionStrategy) -> Result<f64> {
    let mx = scored_partition(x, table, s)?;
    let my = scored_partition(y, table, s)?;
    Ok(bdm_of(&mx, table) - coarse_of(&mx, &my, table))
}

fn entropy_of_counts(counts: impl Iterator<Item = u64>) -> f64 {
    let counts: Vec<u64> = counts.collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 for degenerate distributions
    h.max(0.0)
}

/// Shannon entropy (bits per block) of the empirical block distribution.
pub fn block_entropy(x: &BinaryTensor, s: &PartitionStrategy) -> Result<f64> {
    let ms = partition(x, s)?;
    Ok(entropy_of_counts(ms.iter().map(|(_, n)| *n as u64)))
}

/// `H(X, Y) - H(Y)` over position-aligned block pairs.
pub fn cond_entropy(x: &BinaryTensor, y: &BinaryTensor, s: &PartitionStrategy) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "conditional entropy needs equal shapes, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    s.check(x)?;
    let bx = partition_blocks(x, s);
    let by = partition_blocks(y, s);
    let mut pairs: Vec<(Block, Block)> = bx.into_iter().zip(by.iter().copied()).collect();
    pairs.sort_unstable();
    let mut joint = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if i == 0 || pairs[i - 1] != *p {
            joint.push(1u64);
        } else {
            *joint.last_mut().unwrap() += 1;
        }
    }
    let hy = entropy_of_counts(BlockMultiset::from_blocks(by).iter().map(|(_, n)| *n as u64));
    Ok((entropy_of_counts(joint.into_iter()) - hy).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctm::{Domain, TableSource};

    fn t(s: &str) -> BinaryTensor {
        s.parse().unwrap()
    }

    fn b(s: &str) -> Block {
        s.parse().unwrap()
    }

    /// Every string up to length 3 with a value of `2 + len + ones/10`.
    fn toy_table() -> CtmTable {
        let mut entries = Vec::new();
        for len in 1..=3usize {
            for bits in 0u128..(1 << len) {
                let v = 2.0 + len as f64 + bits.count_ones() as f64 / 10.0;
                entries.push((Block::vector(len, bits).unwrap(), v));
            }
        }
        CtmTable::from_entries(Domain::Strings, entries, 0, TableSource::Imported("toy".into()), None)
            .unwrap()
    }

    #[test]
    fn partition_examples() {
        let s3 = PartitionStrategy::vector(3);
        let ms = partition(&t("10111"), &s3).unwrap();
        assert_eq!(ms.entries(), &[(b("101"), 1)]);
        let ms = partition(&t("11110000"), &PartitionStrategy::vector(8)).unwrap();
        assert_eq!(ms.entries(), &[(b("11110000"), 1)]);
        let ms = partition(&t("10101010"), &PartitionStrategy::vector(2)).unwrap();
        assert_eq!(ms.entries(), &[(b("10"), 4)]);
    }

    #[test]
    fn partition_errors() {
        let empty = BinaryTensor::zeros(0, 0);
        assert!(matches!(
            partition(&empty, &PartitionStrategy::vector(1)),
            Err(Error::Empty(_))
        ));
        assert!(partition(&t("101"), &PartitionStrategy::vector(4)).is_err());
    }

    #[test]
    fn partition_2d_tiles_row_major() {
        let x = t("4x4:1100110000110011");
        let tiles = partition_blocks(&x, &PartitionStrategy::blocks(2, 2));
        assert_eq!(tiles.len(), 4);
        assert_eq!(tiles[0].to_str01(), "1111");
        assert_eq!(tiles[1].to_str01(), "0000");
        assert_eq!(tiles[3].to_str01(), "1111");
    }

    #[test]
    fn leftover_keep_if_scored() {
        let table = toy_table();
        let s = PartitionStrategy::vector(3).with_leftover(Leftover::KeepIfScored);
        let ms = partition(&t("10111"), &s).unwrap();
        assert_eq!(ms.len(), 2);
        let v = bdm(&t("10111"), &table, &s).unwrap();
        assert_eq!(v, table.value(&b("101")) + table.value(&b("11")));
    }

    #[test]
    fn bdm_examples() {
        let table = toy_table();
        let v = bdm(&t("1010"), &table, &PartitionStrategy::vector(2)).unwrap();
        assert_eq!(v, table.value(&b("10")) + 1.0);
        let m = BinaryTensor::zeros(2, 2);
        assert!(matches!(
            bdm(&m, &table, &PartitionStrategy::blocks(2, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn f_multiplicity_cases() {
        assert_eq!(f_multiplicity(3, 3), 0.0);
        assert_eq!(f_multiplicity(4, 2), 2.0);
        assert_eq!(f_multiplicity(1, 5), 0.0);
    }

    #[test]
    fn coarse_examples() {
        let table = toy_table();
        let s2 = PartitionStrategy::vector(2);
        let x = t("10101010");
        let y = t("01010101");
        assert_eq!(cond_bdm_coarse(&x, &x, &table, &s2).unwrap(), 0.0);
        assert_eq!(
            cond_bdm_coarse(&x, &y, &table, &s2).unwrap(),
            bdm(&x, &table, &s2).unwrap()
        );
    }

    #[test]
    fn zero_conditional_means_equal_multisets_not_equal_tensors() {
        let table = toy_table();
        let s2 = PartitionStrategy::vector(2);
        let x = t("1100");
        let y = t("0011");
        assert_ne!(x, y);
        assert_eq!(cond_bdm_coarse(&x, &y, &table, &s2).unwrap(), 0.0);
        assert_eq!(partition(&x, &s2).unwrap(), partition(&y, &s2).unwrap());
    }

    #[test]
    fn strong_examples() {
        let table = toy_table();
        let s2 = PartitionStrategy::vector(2);
        let x = t("10101010");
        let y = t("01010101");
        assert_eq!(cond_bdm_strong(&x, &x, None, true, &table, &s2).unwrap(), 0.0);
        assert_eq!(
            cond_bdm_strong(&x, &y, None, true, &table, &s2).unwrap(),
            cond_bdm_coarse(&x, &y, &table, &s2).unwrap()
        );
        assert!(cond_bdm_strong(&x, &y, None, false, &table, &s2).is_err());
    }

    #[test]
    fn joint_and_mutual() {
        let table = toy_table();
        let s = PartitionStrategy::vector(2);
        let x = t("110100111010");
        let y = t("011100101011");
        assert_eq!(joint_bdm(&x, &x, &table, &s).unwrap(), bdm(&x, &table, &s).unwrap());
        let m = mutual_bdm(&x, &y, &table, &s).unwrap();
        let rhs = bdm(&x, &table, &s).unwrap() + bdm(&y, &table, &s).unwrap()
            - joint_bdm(&x, &y, &table, &s).unwrap();
        assert!((m - rhs).abs() < 1e-9);
    }

    #[test]
    fn entropy_examples() {
        let s1 = PartitionStrategy::vector(1);
        assert_eq!(block_entropy(&BinaryTensor::zeros(1, 16), &s1).unwrap(), 0.0);
        assert_eq!(block_entropy(&t("0101"), &s1).unwrap(), 1.0);
        let x = t("0110100111");
        assert_eq!(cond_entropy(&x, &x, &s1).unwrap(), 0.0);
        assert!(cond_entropy(&x, &t("01"), &s1).is_err());
    }
}
