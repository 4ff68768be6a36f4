//! Binary vectors and matrices.
//!
//! [`BinaryTensor`] is the general carrier for samples, centroids and encoded
//! parameters. [`Block`] is a compact, `Copy` form for tensors of at most 128
//! cells, used as the key type of complexity tables and block multisets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major 0/1 tensor with `rows == 1` for vectors.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryTensor {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl BinaryTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryTensor {
            rows,
            cols,
            words: vec![0; (rows * cols).div_ceil(64)],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: &[u8]) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} bits given for a {rows}x{cols} tensor",
                bits.len()
            )));
        }
        let mut t = BinaryTensor::zeros(rows, cols);
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => t.set_index(i, true),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "bit value {other} at position {i}"
                    )))
                }
            }
        }
        Ok(t)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut t = BinaryTensor::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    t.set(r, c, true);
                }
            }
        }
        t
    }

    /// A 1×n vector from a string of `0`/`1` characters.
    pub fn from_str01(s: &str) -> Result<Self> {
        let bits = parse_bits(s)?;
        BinaryTensor::from_bits(1, bits.len(), &bits)
    }

    /// A 1×`width` vector holding `value` most-significant bit first.
    pub fn from_uint(value: u128, width: usize) -> Self {
        let mut t = BinaryTensor::zeros(1, width);
        for i in 0..width {
            let shift = width - 1 - i;
            if shift < 128 && (value >> shift) & 1 == 1 {
                t.set_index(i, true);
            }
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(&self) -> bool {
        self.rows == 1
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.get_index(r * self.cols + c)
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.set_index(r * self.cols + c, value)
    }

    pub fn flip(&mut self, r: usize, c: usize) {
        let v = self.get(r, c);
        self.set(r, c, !v);
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len()).map(move |i| self.get_index(i) as u8)
    }

    pub fn to_bit_vec(&self) -> Vec<u8> {
        self.bits().collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Row-major bits as a `0`/`1` string without the shape prefix.
    pub fn to_str01(&self) -> String {
        self.bits().map(|b| if b == 1 { '1' } else { '0' }).collect()
    }

    /// The first `min(len, 128)` bits read as an unsigned integer, MSB first.
    pub fn to_uint(&self) -> u128 {
        self.bits()
            .take(128)
            .fold(0u128, |acc, b| (acc << 1) | b as u128)
    }

    pub fn row(&self, r: usize) -> BinaryTensor {
        self.window(r, 0, 1, self.cols)
    }

    /// The `height`×`width` sub-tensor whose top-left cell is `(r0, c0)`.
    pub fn window(&self, r0: usize, c0: usize, height: usize, width: usize) -> BinaryTensor {
        BinaryTensor::from_fn(height, width, |r, c| self.get(r0 + r, c0 + c))
    }

    /// Copies `src` into this tensor with its top-left cell at `(r0, c0)`.
    pub fn paste(&mut self, r0: usize, c0: usize, src: &BinaryTensor) {
        for r in 0..src.rows {
            for c in 0..src.cols {
                self.set(r0 + r, c0 + c, src.get(r, c));
            }
        }
    }

    /// Same bits reinterpreted under a new shape with equal cell count.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<BinaryTensor> {
        if rows * cols != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {}x{} into {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(BinaryTensor {
            rows,
            cols,
            words: self.words.clone(),
        })
    }

    pub fn hamming(&self, other: &BinaryTensor) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

impl fmt::Display for BinaryTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:{}", self.rows, self.cols, self.to_str01())
    }
}

impl fmt::Debug for BinaryTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryTensor({self})")
    }
}

/// Parses `RxC:bits`, or a bare `0`/`1` string as a 1×n vector.
impl FromStr for BinaryTensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((shape, bits)) => {
                let (rows, cols) = parse_shape(shape)?;
                BinaryTensor::from_bits(rows, cols, &parse_bits(bits)?)
            }
            None => BinaryTensor::from_str01(s),
        }
    }
}

impl Serialize for BinaryTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BinaryTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::InvalidArgument(format!(
                "unexpected character `{other}` in bit string"
            ))),
        })
        .collect()
}

pub(crate) fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| Error::InvalidArgument(format!("bad shape `{s}`")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("bad shape `{s}`")))
    };
    Ok((parse(r)?, parse(c)?))
}

/// A tensor of at most 128 cells packed into an integer.
///
/// The first row-major cell is the most significant of the `rows * cols`
/// used bits, so for equal shapes the derived ordering is lexicographic.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    rows: u8,
    cols: u8,
    bits: u128,
}

impl Block {
    pub const MAX_CELLS: usize = 128;

    pub fn new(rows: usize, cols: usize, bits: u128) -> Result<Self> {
        let n = rows * cols;
        if rows == 0 || cols == 0 || n > Self::MAX_CELLS || rows > 255 || cols > 255 {
            return Err(Error::InvalidArgument(format!(
                "block shape {rows}x{cols} outside 1..=128 cells"
            )));
        }
        if n < 128 && bits >> n != 0 {
            return Err(Error::InvalidArgument(format!(
                "value {bits} does not fit a {rows}x{cols} block"
            )));
        }
        Ok(Block {
            rows: rows as u8,
            cols: cols as u8,
            bits,
        })
    }

    /// Unchecked constructor for hot loops; callers guarantee the invariants.
    #[inline]
    pub(crate) fn raw(rows: usize, cols: usize, bits: u128) -> Self {
        debug_assert!(rows * cols <= 128 && rows > 0 && cols > 0);
        Block {
            rows: rows as u8,
            cols: cols as u8,
            bits,
        }
    }

    pub fn vector(len: usize, bits: u128) -> Result<Self> {
        Block::new(1, len, bits)
    }

    pub fn from_tensor(t: &BinaryTensor) -> Result<Self> {
        Block::new(t.rows(), t.cols(), 0)?;
        Ok(Self::from_window(t, 0, 0, t.rows(), t.cols()))
    }

    #[inline]
    pub(crate) fn from_window(
        t: &BinaryTensor,
        r0: usize,
        c0: usize,
        height: usize,
        width: usize,
    ) -> Self {
        let mut bits = 0u128;
        for r in 0..height {
            let base = (r0 + r) * t.cols() + c0;
            for c in 0..width {
                bits = (bits << 1) | t.get_index(base + c) as u128;
            }
        }
        Block::raw(height, width, bits)
    }

    pub fn rows(&self) -> usize {
        self.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.cols as usize
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Cell `i` in row-major order.
    pub fn get(&self, i: usize) -> bool {
        (self.bits >> (self.len() - 1 - i)) & 1 == 1
    }

    pub fn to_tensor(&self) -> BinaryTensor {
        let n = self.len();
        let mut t = BinaryTensor::zeros(self.rows(), self.cols());
        for i in 0..n {
            if self.get(i) {
                t.set_index(i, true);
            }
        }
        t
    }

    pub fn to_str01(&self) -> String {
        (0..self.len())
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rows == 1 {
            write!(f, "{}", self.to_str01())
        } else {
            write!(f, "{}x{}:{}", self.rows, self.cols, self.to_str01())
        }
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({}x{}:{})", self.rows, self.cols, self.to_str01())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: BinaryTensor = s.parse()?;
        Block::from_tensor(&t)
    }
}
