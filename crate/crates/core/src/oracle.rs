//! Exact verifiers: selection probabilities by enumeration of relative
//! priority orders, and an absorbing Markov chain for tiny `n`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitpop::{BitString, Population};
use crate::error::{invalid, Error, Result};
use crate::Rational;

/// Largest number of differing positions the enumeration accepts.
pub const MAX_PROFILE_POSITIONS: usize = 12;
/// Largest string count in a profile.
pub const MAX_PROFILE_STRINGS: usize = 3;

/// A group of interchangeable differing positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    pub size: usize,
    /// Bit of each string at these positions.
    pub pattern: Vec<bool>,
}

/// Up to three strings described only by their differing positions,
/// grouped by bit pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryProfile {
    strings: usize,
    categories: Vec<Category>,
    offspring: Option<usize>,
}

impl CategoryProfile {
    pub fn new(strings: usize, categories: Vec<Category>, offspring: Option<usize>) -> Result<Self> {
        if !(1..=MAX_PROFILE_STRINGS).contains(&strings) {
            return Err(invalid(format!("profile needs 1..=3 strings, got {strings}")));
        }
        if offspring.is_some_and(|o| o >= strings) {
            return Err(invalid("offspring index out of range"));
        }
        for c in &categories {
            if c.pattern.len() != strings {
                return Err(Error::LengthMismatch(c.pattern.len(), strings));
            }
            if c.pattern.iter().all(|&b| b == c.pattern[0]) {
                return Err(invalid(format!("category {} does not separate any strings", c.label)));
            }
        }
        Ok(Self {
            strings,
            categories,
            offspring,
        })
    }

    /// Groups the differing positions of `strings` by column pattern.
    pub fn from_strings(strings: &[&BitString], offspring: Option<usize>) -> Result<Self> {
        let Some(first) = strings.first() else {
            return Err(invalid("profile needs at least one string"));
        };
        if let Some(s) = strings.iter().find(|s| s.len() != first.len()) {
            return Err(Error::LengthMismatch(first.len(), s.len()));
        }
        let mut groups: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        for p in crate::bitpop::diff_positions(strings.iter().copied()) {
            *groups.entry(strings.iter().map(|s| s.get(p)).collect()).or_default() += 1;
        }
        let categories = groups
            .into_iter()
            .map(|(pattern, size)| Category {
                label: pattern.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                size,
                pattern,
            })
            .collect();
        Self::new(strings.len(), categories, offspring)
    }

    /// `{x, x(1-r), x(1-k)}` with strings ordered (`r` string, `k` string,
    /// reference); the `k` string is the offspring.
    pub fn a_state(r: usize, k: usize) -> Result<Self> {
        Self::new(
            3,
            vec![
                cat("r-one", 1, [true, false, false]),
                cat("r-zeros", r, [false, true, true]),
                cat("k-one", 1, [false, true, false]),
                cat("k-zeros", k, [true, false, true]),
            ],
            Some(1),
        )
    }

    /// `{x, x(1-r), x(2-r-k)}` with strings ordered (reference, `r`
    /// string, offspring); the offspring comes from the `r` string by
    /// flipping one zero-bit and `k` one-bits.
    pub fn b_state(r: usize, k: usize) -> Result<Self> {
        Self::new(
            3,
            vec![
                cat("r-one", 1, [false, true, true]),
                cat("r-zeros", r, [true, false, false]),
                cat("new-one", 1, [false, false, true]),
                cat("k-zeros", k, [true, true, false]),
            ],
            Some(2),
        )
    }

    /// `{x, x(1-r)}` with the second string the offspring.
    pub fn pair(r: usize) -> Result<Self> {
        Self::new(
            2,
            vec![cat("one", 1, [false, true]), cat("zeros", r, [true, false])],
            Some(1),
        )
    }

    pub fn strings(&self) -> usize {
        self.strings
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn offspring(&self) -> Option<usize> {
        self.offspring
    }

    pub fn differing_positions(&self) -> usize {
        self.categories.iter().map(|c| c.size).sum()
    }
}

fn cat<const N: usize>(label: &str, size: usize, pattern: [bool; N]) -> Category {
    Category {
        label: label.into(),
        size,
        pattern: pattern.to_vec(),
    }
}

struct DiscardSolver<'a> {
    profile: &'a CategoryProfile,
    memo: HashMap<(u8, Vec<usize>), Vec<Rational>>,
}

impl DiscardSolver<'_> {
    fn splits(&self, cands: u8, j: usize) -> bool {
        let pat = &self.profile.categories[j].pattern;
        let mut seen = [false; 2];
        for (i, &b) in pat.iter().enumerate() {
            if cands & (1 << i) != 0 {
                seen[usize::from(b)] = true;
            }
        }
        seen[0] && seen[1]
    }

    fn tie(&self, cands: u8) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.profile.strings];
        match self.profile.offspring {
            Some(o) if cands & (1 << o) != 0 => out[o] = Rational::one(),
            _ => {
                let count = cands.count_ones() as i128;
                for (i, slot) in out.iter_mut().enumerate() {
                    if cands & (1 << i) != 0 {
                        *slot = Rational::new(1, count);
                    }
                }
            }
        }
        out
    }

    /// Next position drawn from category `j` with probability
    /// `counts[j]/total`, which weights each category arrangement by its
    /// multinomial count.
    fn solve(&mut self, cands: u8, counts: Vec<usize>) -> Vec<Rational> {
        if cands.count_ones() == 1 {
            let mut out = vec![Rational::zero(); self.profile.strings];
            out[cands.trailing_zeros() as usize] = Rational::one();
            return out;
        }
        let live: Vec<usize> = (0..counts.len())
            .filter(|&j| counts[j] > 0 && self.splits(cands, j))
            .collect();
        if live.is_empty() {
            return self.tie(cands);
        }
        // Only splitting categories matter; the rest never change the candidates.
        let key_counts: Vec<usize> = (0..counts.len())
            .map(|j| if live.contains(&j) { counts[j] } else { 0 })
            .collect();
        let key = (cands, key_counts.clone());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let total: usize = live.iter().map(|&j| key_counts[j]).sum();
        let mut out = vec![Rational::zero(); self.profile.strings];
        for &j in &live {
            let pat = &self.profile.categories[j].pattern;
            let next_cands = (0..self.profile.strings)
                .filter(|&i| cands & (1 << i) != 0 && !pat[i])
                .fold(0u8, |m, i| m | (1 << i));
            let mut next_counts = key_counts.clone();
            next_counts[j] -= 1;
            let w = Rational::new(key_counts[j] as i128, total as i128);
            for (o, v) in out.iter_mut().zip(self.solve(next_cands, next_counts)) {
                *o += w * v;
            }
        }
        self.memo.insert(key, out.clone());
        out
    }
}

/// Exact probability that each string is the one discarded, under a
/// uniformly random priority order of the differing positions.
pub fn exact_discard_distribution(profile: &CategoryProfile) -> Result<Vec<Rational>> {
    let d = profile.differing_positions();
    if d > MAX_PROFILE_POSITIONS {
        return Err(Error::ProfileTooLarge(d, MAX_PROFILE_POSITIONS));
    }
    let mut solver = DiscardSolver {
        profile,
        memo: HashMap::new(),
    };
    let all = (1u8 << profile.strings) - 1;
    Ok(solver.solve(all, profile.categories.iter().map(|c| c.size).collect()))
}

/// Probability that `x(1-r)` beats its parent `x`.
pub fn exact_acceptance(r: usize) -> Result<Rational> {
    Ok(Rational::one() - exact_discard_distribution(&CategoryProfile::pair(r)?)?[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrderItem {
    /// The extra one-bit of `x(1-r)`.
    ExtraOne,
    /// One of the `r` extra one-bits of `x`.
    ExtraZero,
    /// A zero-bit shared by both strings.
    SharedZero,
    /// The first flipped bit of the mutation.
    Marker,
}

/// Exact probabilities of the two events over all category arrangements,
/// each arrangement weighted by `weight`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryReport {
    /// `x(1-r)` at least as fit as `x`.
    pub fitter: Rational,
    /// The first flipped bit comes after the first zero-bit of either string.
    pub marker_late: Rational,
    pub joint: Rational,
}

impl SymmetryReport {
    pub fn independent(&self) -> bool {
        self.joint == self.fitter * self.marker_late
    }
}

fn arrangements(counts: &mut [(OrderItem, usize)], prefix: &mut Vec<OrderItem>, out: &mut Vec<Vec<OrderItem>>) {
    if counts.iter().all(|c| c.1 == 0) {
        out.push(prefix.clone());
        return;
    }
    for j in 0..counts.len() {
        if counts[j].1 > 0 {
            counts[j].1 -= 1;
            prefix.push(counts[j].0);
            arrangements(counts, prefix, out);
            prefix.pop();
            counts[j].1 += 1;
        }
    }
}

/// Event probabilities for `r` extra zeros and `shared` common zero-bits,
/// with arrangements weighted by `weight` (normalized internally).
pub fn symmetry_report_weighted<F>(r: usize, shared: usize, weight: F) -> Result<SymmetryReport>
where
    F: Fn(&[OrderItem]) -> Rational,
{
    if r == 0 {
        return Err(invalid("r must be >= 1"));
    }
    if r + 1 > MAX_PROFILE_POSITIONS {
        return Err(Error::ProfileTooLarge(r + 1, MAX_PROFILE_POSITIONS));
    }
    let mut counts = [
        (OrderItem::ExtraOne, 1),
        (OrderItem::ExtraZero, r),
        (OrderItem::SharedZero, shared),
        (OrderItem::Marker, 1),
    ];
    let mut all = Vec::new();
    arrangements(&mut counts, &mut Vec::new(), &mut all);
    let (mut total, mut fitter, mut late, mut joint) =
        (Rational::zero(), Rational::zero(), Rational::zero(), Rational::zero());
    for seq in &all {
        let w = weight(seq);
        total += w;
        let first_diff = seq
            .iter()
            .find(|&&i| matches!(i, OrderItem::ExtraOne | OrderItem::ExtraZero));
        let is_fitter = first_diff == Some(&OrderItem::ExtraOne);
        let is_late = seq[0] != OrderItem::Marker;
        if is_fitter {
            fitter += w;
        }
        if is_late {
            late += w;
        }
        if is_fitter && is_late {
            joint += w;
        }
    }
    if total.is_zero() {
        return Err(invalid("weights sum to zero"));
    }
    Ok(SymmetryReport {
        fitter: fitter / total,
        marker_late: late / total,
        joint: joint / total,
    })
}

/// Checks exactly that "`x(1-r)` at least as fit as `x`" and "the first
/// flipped bit comes after the first zero-bit" are independent under a
/// uniform order, for 0, 1 and 2 shared zero-bits.
pub fn conditional_symmetry_check(r: usize) -> Result<bool> {
    for shared in 0..=2 {
        if !symmetry_report_weighted(r, shared, |_| Rational::one())?.independent() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact expected zero-count at the next degenerate population.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactChainResult {
    /// Zero-count at the start minus the expected zero-count afterwards.
    pub drift: BigRational,
    pub expected_next_zeros: BigRational,
    pub state_count: usize,
    /// SHA-256 over the sorted transition table.
    pub digest: String,
}

impl ExactChainResult {
    pub fn drift_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.drift.to_f64().unwrap_or(f64::NAN)
    }
}

/// Population up to position and member permutations: the count of each
/// column pattern, minimized over member orders.
type ChainState = Vec<usize>;

const MAX_CHAIN_N: usize = 5;
const MAX_CHAIN_MU: usize = 2;
const MAX_CHAIN_STATES: usize = 5000;

fn member_perms(mu: usize) -> Vec<Vec<usize>> {
    match mu {
        1 => vec![vec![0]],
        _ => vec![vec![0, 1], vec![1, 0]],
    }
}

fn canonical(members: &[BitString]) -> ChainState {
    let mu = members.len();
    let n = members[0].len();
    member_perms(mu)
        .into_iter()
        .map(|perm| {
            let mut counts = vec![0usize; 1 << mu];
            for p in 0..n {
                let pat = perm
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (slot, &m)| acc | (usize::from(members[m].get(p)) << slot));
                counts[pat] += 1;
            }
            counts
        })
        .min()
        .expect("at least one permutation")
}

fn representative(state: &ChainState, mu: usize) -> Vec<BitString> {
    let mut bits = vec![Vec::new(); mu];
    for (pat, &count) in state.iter().enumerate() {
        for _ in 0..count {
            for (m, b) in bits.iter_mut().enumerate() {
                b.push(pat & (1 << m) != 0);
            }
        }
    }
    bits.iter().map(|b| BitString::from_bits(b)).collect()
}

fn is_degenerate_state(state: &ChainState, mu: usize) -> bool {
    let all = (1usize << mu) - 1;
    state
        .iter()
        .enumerate()
        .all(|(pat, &c)| c == 0 || pat == 0 || pat == all)
}

fn big(q: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

struct Chain {
    mu: usize,
    n: usize,
    flip: BigRational,
    keep: BigRational,
    discard_memo: HashMap<CategoryProfileKey, Vec<Rational>>,
}

type CategoryProfileKey = (Vec<(Vec<bool>, usize)>, Option<usize>);

impl Chain {
    fn discard(&mut self, strings: &[&BitString], offspring: usize) -> Result<Vec<Rational>> {
        let profile = CategoryProfile::from_strings(strings, Some(offspring))?;
        let key = (
            profile.categories.iter().map(|c| (c.pattern.clone(), c.size)).collect(),
            Some(offspring),
        );
        if let Some(v) = self.discard_memo.get(&key) {
            return Ok(v.clone());
        }
        let v = exact_discard_distribution(&profile)?;
        self.discard_memo.insert(key, v.clone());
        Ok(v)
    }

    /// One generation from `members`, as a distribution over canonical states.
    fn transitions(&mut self, members: &[BitString]) -> Result<BTreeMap<ChainState, BigRational>> {
        let mut out: BTreeMap<ChainState, BigRational> = BTreeMap::new();
        let pick = BigRational::new(BigInt::one(), BigInt::from(self.mu));
        for parent in 0..self.mu {
            for mask in 0u32..(1 << self.n) {
                let flips: Vec<usize> = (0..self.n).filter(|&i| mask & (1 << i) != 0).collect();
                let k = flips.len();
                let mut prob = pick.clone();
                for _ in 0..k {
                    prob *= &self.flip;
                }
                for _ in k..self.n {
                    prob *= &self.keep;
                }
                let child = members[parent].with_flipped(&flips);
                let mut all: Vec<&BitString> = members.iter().collect();
                all.push(&child);
                let discard = self.discard(&all, self.mu)?;
                for (loser, p) in discard.iter().enumerate() {
                    if p.is_zero() {
                        continue;
                    }
                    let next: Vec<BitString> = all
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != loser)
                        .map(|(_, s)| (*s).clone())
                        .collect();
                    *out.entry(canonical(&next)).or_insert_with(BigRational::zero) += &prob * big(p);
                }
            }
        }
        Ok(out)
    }
}

fn zeros_of(state: &ChainState) -> usize {
    // degenerate: pattern 0 counts the zero columns
    state[0]
}

/// Exact degenerate-population drift for `n <= 5`, `mu <= 2`, starting
/// from `m` zero-bits, with mutation rate `c/n`.
pub fn exact_tiny_chain_drift(n: usize, mu: usize, c: Rational, m: usize) -> Result<ExactChainResult> {
    if m > n {
        return Err(invalid(format!("start zero-count {m} exceeds n = {n}")));
    }
    let zeros: Vec<usize> = (0..m).collect();
    let pop = Population::degenerate(BitString::with_zeros_at(n.max(1), &zeros), mu.max(1))?;
    if n == 0 || mu == 0 {
        return Err(invalid("n and mu must be >= 1"));
    }
    exact_chain_from(&pop, c)
}

/// Exact expected zero-count of the next degenerate population reached
/// after at least one generation from `pop`.
pub fn exact_chain_from(pop: &Population, c: Rational) -> Result<ExactChainResult> {
    let (n, mu) = (pop.len(), pop.mu());
    if n > MAX_CHAIN_N || mu > MAX_CHAIN_MU {
        return Err(invalid(format!(
            "exact chain supports n <= {MAX_CHAIN_N}, mu <= {MAX_CHAIN_MU}; got n = {n}, mu = {mu}"
        )));
    }
    let p = c / Rational::from_integer(n as i128);
    if p <= Rational::zero() || p >= Rational::one() {
        return Err(invalid("need 0 < c < n"));
    }
    let flip = big(&p);
    let mut chain = Chain {
        mu,
        n,
        keep: BigRational::one() - &flip,
        flip,
        discard_memo: HashMap::new(),
    };

    let start_members = pop.members().to_vec();
    let start_zeros = pop.min_zero_count();
    let first = chain.transitions(&start_members)?;

    // Explore transient states reachable from the first step.
    let mut index: HashMap<ChainState, usize> = HashMap::new();
    let mut rows: Vec<BTreeMap<ChainState, BigRational>> = Vec::new();
    let mut order: Vec<ChainState> = Vec::new();
    let mut queue: VecDeque<ChainState> = first.keys().filter(|s| !is_degenerate_state(s, mu)).cloned().collect();
    while let Some(s) = queue.pop_front() {
        if index.contains_key(&s) {
            continue;
        }
        if index.len() >= MAX_CHAIN_STATES {
            return Err(Error::StateSpaceOverflow(index.len(), MAX_CHAIN_STATES));
        }
        let row = chain.transitions(&representative(&s, mu))?;
        for t in row.keys() {
            if !is_degenerate_state(t, mu) && !index.contains_key(t) {
                queue.push_back(t.clone());
            }
        }
        index.insert(s.clone(), order.len());
        order.push(s);
        rows.push(row);
    }

    let mut digest = Sha256::new();
    for (s, row) in std::iter::once((&canonical(&start_members), &first)).chain(order.iter().zip(&rows)) {
        let total: BigRational = row.values().sum();
        if !total.is_one() {
            return Err(Error::InfeasibleState(format!("transition row {s:?} sums to {total}")));
        }
        digest.update(format!("{s:?}:"));
        for (t, pr) in row {
            digest.update(format!("{t:?}={pr};"));
        }
        digest.update("\n");
    }

    // h = Q h + b on transient states, h(degenerate) = its zero-count.
    let size = order.len();
    let mut a = vec![vec![BigRational::zero(); size + 1]; size];
    for (i, row) in rows.iter().enumerate() {
        a[i][i] = BigRational::one();
        for (t, pr) in row {
            match index.get(t) {
                Some(&j) => a[i][j] -= pr,
                None => a[i][size] += pr * BigRational::from_integer(BigInt::from(zeros_of(t))),
            }
        }
    }
    let h = solve_linear(a)?;

    let mut expected = BigRational::zero();
    for (t, pr) in &first {
        let v = match index.get(t) {
            Some(&j) => h[j].clone(),
            None => BigRational::from_integer(BigInt::from(zeros_of(t))),
        };
        expected += pr * v;
    }
    Ok(ExactChainResult {
        drift: BigRational::from_integer(BigInt::from(start_zeros)) - &expected,
        expected_next_zeros: expected,
        state_count: size + 1,
        digest: format!("{:x}", digest.finalize()),
    })
}

/// Gauss-Jordan elimination on an augmented matrix.
fn solve_linear(mut a: Vec<Vec<BigRational>>) -> Result<Vec<BigRational>> {
    let size = a.len();
    for col in 0..size {
        let pivot = (col..size)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::InfeasibleState("singular absorbing system".into()))?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for v in a[col].iter_mut().skip(col) {
            *v *= &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v -= &f * p;
            }
        }
    }
    Ok(a.into_iter().map(|row| row[size].clone()).collect())
}
