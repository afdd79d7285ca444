//! Packed bit strings and populations.
//!
//! Positions are 0-based throughout the API. The textual form (`"110"`)
//! lists position 0 first.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A search point in `{0,1}^n` with a cached zero-bit count.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
    zeros: usize,
}

impl BitString {
    pub fn ones(len: usize) -> Self {
        let mut words = vec![u64::MAX; words_for(len)];
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Self { len, words, zeros: 0 }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
            zeros: len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.words[i / WORD] |= 1 << (i % WORD);
            }
        }
        s.zeros = bits.iter().filter(|b| !**b).count();
        s
    }

    /// All-ones string with zeros at the given positions.
    pub fn with_zeros_at(len: usize, positions: &[usize]) -> Self {
        let mut s = Self::ones(len);
        for &p in positions {
            s.set(p, false);
        }
        s
    }

    pub(crate) fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), words_for(len));
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        let ones: usize = words.iter().map(|w| w.count_ones() as usize).sum();
        Self {
            len,
            words,
            zeros: len - ones,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn zero_count(&self) -> usize {
        self.zeros
    }

    #[inline]
    pub fn one_count(&self) -> usize {
        self.len - self.zeros
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "position {i} out of range {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Recounts zero-bits from scratch.
    pub fn recount_zeros(&self) -> usize {
        self.len - self.words.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    pub fn is_all_ones(&self) -> bool {
        self.zeros == 0
    }

    pub fn zero_positions(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| !self.get(i)).collect()
    }

    pub fn one_positions(&self) -> Vec<usize> {
        iter_set_bits(&self.words).collect()
    }

    fn set(&mut self, i: usize, bit: bool) {
        let (w, b) = (i / WORD, 1u64 << (i % WORD));
        let was = self.words[w] & b != 0;
        if was == bit {
            return;
        }
        if bit {
            self.words[w] |= b;
            self.zeros -= 1;
        } else {
            self.words[w] &= !b;
            self.zeros += 1;
        }
    }

    /// Flips one position in place, keeping the zero count current.
    #[inline]
    pub(crate) fn flip_in_place(&mut self, i: usize) {
        debug_assert!(i < self.len);
        let (w, b) = (i / WORD, 1u64 << (i % WORD));
        self.words[w] ^= b;
        if self.words[w] & b != 0 {
            self.zeros -= 1;
        } else {
            self.zeros += 1;
        }
    }

    /// Copy with the given (distinct) positions flipped.
    pub fn with_flipped(&self, positions: &[usize]) -> Self {
        let mut out = self.clone();
        for &p in positions {
            assert!(p < self.len, "position {p} out of range {}", self.len);
            out.flip_in_place(p);
        }
        debug_assert_eq!(out.zeros, out.recount_zeros());
        out
    }

    /// Copy with positions permuted: bit `i` of `self` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.len);
        let mut out = Self::zeros(self.len);
        for (i, &to) in perm.iter().enumerate() {
            if self.get(i) {
                out.set(to, true);
            }
        }
        out
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, zeros={})", self.len, self.zeros)
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bits(&bits))
    }
}

pub(crate) fn iter_set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(wi * WORD + b)
        })
    })
}

/// `true` iff `x_i >= y_i` at every position.
///
/// Panics on a length mismatch.
pub fn dominates(x: &BitString, y: &BitString) -> bool {
    assert_eq!(x.len, y.len, "dominates: length mismatch");
    x.words.iter().zip(&y.words).all(|(a, b)| b & !a == 0)
}

/// Positions at which not all of `strings` agree, ascending.
pub fn diff_positions<'a, I>(strings: I) -> Vec<usize>
where
    I: IntoIterator<Item = &'a BitString>,
{
    let mut it = strings.into_iter();
    let Some(first) = it.next() else {
        return Vec::new();
    };
    let mut acc = vec![0u64; first.words.len()];
    for s in it {
        assert_eq!(s.len, first.len, "diff_positions: length mismatch");
        for ((a, x), y) in acc.iter_mut().zip(&s.words).zip(&first.words) {
            *a |= x ^ y;
        }
    }
    iter_set_bits(&acc).collect()
}

/// A multiset of equal-length search points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Population {
    members: Vec<BitString>,
}

impl Population {
    pub fn new(members: Vec<BitString>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidParameter("population must be non-empty".into()));
        };
        if let Some(bad) = members.iter().find(|m| m.len != first.len) {
            return Err(Error::LengthMismatch(first.len, bad.len));
        }
        Ok(Self { members })
    }

    /// `mu` copies of `x`.
    pub fn degenerate(x: BitString, mu: usize) -> Result<Self> {
        if mu == 0 {
            return Err(Error::InvalidParameter("mu must be >= 1".into()));
        }
        Ok(Self { members: vec![x; mu] })
    }

    #[inline]
    pub fn mu(&self) -> usize {
        self.members.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.members[0].len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> &[BitString] {
        &self.members
    }

    pub fn into_members(self) -> Vec<BitString> {
        self.members
    }

    pub(crate) fn members_mut(&mut self) -> &mut Vec<BitString> {
        &mut self.members
    }

    pub fn is_degenerate(&self) -> bool {
        let first = &self.members[0];
        self.members[1..]
            .iter()
            .all(|m| m.zeros == first.zeros && m.words == first.words)
    }

    /// Positions where the members (plus `extra`, if any) disagree.
    pub fn diff_positions(&self, extra: Option<&BitString>) -> Vec<usize> {
        diff_positions(self.members.iter().chain(extra))
    }

    pub fn min_zero_count(&self) -> usize {
        self.members.iter().map(|m| m.zeros).min().unwrap_or(0)
    }

    /// Degenerate at the all-ones string.
    pub fn is_optimal(&self) -> bool {
        self.members.iter().all(|m| m.zeros == 0)
    }
}
