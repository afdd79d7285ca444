//! Per-generation random fitness.
//!
//! DynBV is represented ordinally: with weights `2^(n-i)` on a random
//! permutation, comparing two strings is lexicographic in the
//! permutation's priority order, so only the relative priorities of the
//! positions where the compared strings differ are ever drawn.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::bitpop::{diff_positions, BitString};
use crate::error::{invalid, Result};
use crate::Rational;

/// One generation's priority order over positions, revealed lazily.
///
/// Revealed positions are kept in priority order (index 0 is the most
/// significant position). A batch of new positions is merged into a
/// uniformly random interleaving with the known ones, so every revealed
/// set is in uniformly random relative order and later reveals stay
/// consistent with earlier comparisons.
#[derive(Clone, Debug, Default)]
pub struct GenerationRanking {
    order: Vec<usize>,
    known: Vec<usize>,
}

impl GenerationRanking {
    pub fn new() -> Self {
        Self::default()
    }

    /// A fully fixed order, highest priority first.
    pub fn from_order(order: Vec<usize>) -> Self {
        let mut known = order.clone();
        known.sort_unstable();
        known.dedup();
        assert_eq!(known.len(), order.len(), "duplicate positions in order");
        Self { order, known }
    }

    pub fn revealed(&self) -> &[usize] {
        &self.order
    }

    pub fn is_revealed(&self, pos: usize) -> bool {
        self.known.binary_search(&pos).is_ok()
    }

    /// Draws relative priorities for every position in `positions` not yet
    /// revealed.
    pub fn reveal<R: Rng + ?Sized>(&mut self, positions: &[usize], rng: &mut R) {
        let mut fresh: Vec<usize> = positions.iter().copied().filter(|p| !self.is_revealed(*p)).collect();
        fresh.sort_unstable();
        fresh.dedup();
        if fresh.is_empty() {
            return;
        }
        fresh.shuffle(rng);
        if self.order.is_empty() {
            self.order = fresh.clone();
        } else {
            let total = self.order.len() + fresh.len();
            let mut slots = rand::seq::index::sample(rng, total, fresh.len()).into_vec();
            slots.sort_unstable();
            let mut merged = Vec::with_capacity(total);
            let (mut old, mut new) = (self.order.iter(), fresh.iter());
            let mut next_slot = slots.iter().peekable();
            for i in 0..total {
                if next_slot.peek() == Some(&&i) {
                    next_slot.next();
                    merged.push(*new.next().unwrap());
                } else {
                    merged.push(*old.next().unwrap());
                }
            }
            self.order = merged;
        }
        self.known.extend_from_slice(&fresh);
        self.known.sort_unstable();
    }

    /// `positions` sorted by priority, highest first. `positions` must be
    /// ascending.
    pub fn ordered<R: Rng + ?Sized>(&mut self, positions: &[usize], rng: &mut R) -> Vec<usize> {
        debug_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        self.reveal(positions, rng);
        if positions.len() == self.order.len() {
            return self.order.clone();
        }
        self.order
            .iter()
            .copied()
            .filter(|p| positions.binary_search(p).is_ok())
            .collect()
    }

    /// Highest-priority position in `positions`.
    pub fn first_among<R: Rng + ?Sized>(&mut self, positions: &[usize], rng: &mut R) -> Option<usize> {
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        self.ordered(&sorted, rng).first().copied()
    }

    /// Highest-priority zero-bit of `z` among `positions`.
    pub fn first_zero_among<R: Rng + ?Sized>(
        &mut self,
        z: &BitString,
        positions: &[usize],
        rng: &mut R,
    ) -> Option<usize> {
        let zeros: Vec<usize> = positions.iter().copied().filter(|&p| !z.get(p)).collect();
        self.first_among(&zeros, rng)
    }

    /// Compares `f(x)` with `f(y)`; `Greater` means `x` is fitter.
    pub fn compare<R: Rng + ?Sized>(&mut self, x: &BitString, y: &BitString, rng: &mut R) -> Ordering {
        assert_eq!(x.len(), y.len(), "compare: length mismatch");
        let d = diff_positions([x, y]);
        if d.is_empty() {
            return Ordering::Equal;
        }
        let top = self.ordered(&d, rng)[0];
        if x.get(top) {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
}

/// Fitness of one generation, able to pick the individual to discard.
pub trait GenerationFitness {
    /// Index of a least fit member of `s`.
    ///
    /// Ties are broken uniformly at random, except that a tied `offspring`
    /// is always the one discarded.
    fn least_fit<R: Rng + ?Sized>(&mut self, s: &[&BitString], offspring: Option<usize>, rng: &mut R) -> usize;
}

fn pick_tied<R: Rng + ?Sized>(tied: &[usize], offspring: Option<usize>, rng: &mut R) -> usize {
    debug_assert!(!tied.is_empty());
    match offspring {
        Some(o) if tied.contains(&o) => o,
        _ => tied[rng.random_range(0..tied.len())],
    }
}

impl GenerationFitness for GenerationRanking {
    fn least_fit<R: Rng + ?Sized>(&mut self, s: &[&BitString], offspring: Option<usize>, rng: &mut R) -> usize {
        assert!(s.len() >= 2, "least_fit needs at least two strings");
        let d = diff_positions(s.iter().copied());
        let mut cands: Vec<usize> = (0..s.len()).collect();
        if !d.is_empty() {
            for pos in self.ordered(&d, rng) {
                let zeros = cands.iter().filter(|&&i| !s[i].get(pos)).count();
                if zeros > 0 && zeros < cands.len() {
                    cands.retain(|&i| !s[i].get(pos));
                    if cands.len() == 1 {
                        return cands[0];
                    }
                }
            }
        }
        pick_tied(&cands, offspring, rng)
    }
}

/// Distribution of the i.i.d. positive weights of a dynamic linear function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightDistribution {
    Exponential {
        rate: f64,
    },
    /// Number of trials up to and including the first success, on `{1, 2, ...}`.
    Geometric {
        p: f64,
    },
    /// Uniform on `(0, 1]`.
    Uniform,
    /// Every weight equals 1 (OneMax).
    PointMass,
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(invalid(format!("exponential rate must be positive, got {rate}")))
            }
            Self::Geometric { p } if !(p > 0.0 && p < 1.0) => {
                Err(invalid(format!("geometric p must lie in (0,1), got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Geometric { p } => 1.0 / p,
            Self::Uniform => 0.5,
            Self::PointMass => 1.0,
        }
    }

    /// One draw; assumes `validate` passed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                let exp = Exp::new(rate).expect("validated rate");
                loop {
                    let w = exp.sample(rng);
                    if w > 0.0 {
                        return w;
                    }
                }
            }
            Self::Geometric { p } => {
                let g = Geometric::new(p).expect("validated p");
                (g.sample(rng) + 1) as f64
            }
            Self::Uniform => 1.0 - rng.random::<f64>(),
            Self::PointMass => 1.0,
        }
    }
}

impl std::fmt::Display for WeightDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
            Self::Geometric { p } => write!(f, "geom:{p}"),
            Self::Uniform => f.write_str("uniform"),
            Self::PointMass => f.write_str("point"),
        }
    }
}

impl std::str::FromStr for WeightDistribution {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
            match a {
                Some(a) => a.parse().map_err(|_| invalid(format!("bad number in {s:?}"))),
                None => default.ok_or_else(|| invalid(format!("{kind} needs a parameter"))),
            }
        };
        let d = match kind {
            "exp" | "exponential" => Self::Exponential {
                rate: num(arg, Some(1.0))?,
            },
            "geom" | "geometric" => Self::Geometric { p: num(arg, None)? },
            "uniform" => Self::Uniform,
            "point" | "onemax" => Self::PointMass,
            other => return Err(invalid(format!("unknown weight distribution {other:?}"))),
        };
        d.validate()?;
        Ok(d)
    }
}

/// `n` i.i.d. weights.
pub fn sample_weights<R: Rng + ?Sized>(dist: &WeightDistribution, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    dist.validate()?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `sum_i w_i x_i`. Panics on a length mismatch or a non-positive weight.
pub fn linear_fitness(x: &BitString, weights: &[f64]) -> f64 {
    assert_eq!(x.len(), weights.len(), "linear_fitness: length mismatch");
    assert!(weights.iter().all(|&w| w > 0.0), "weights must be positive");
    x.one_positions().into_iter().map(|i| weights[i]).sum()
}

/// A dynamic linear function for one generation; weights are drawn only
/// for positions that some comparison needs.
#[derive(Clone, Debug)]
pub struct LinearGeneration {
    dist: WeightDistribution,
    weights: Vec<(usize, f64)>,
}

impl LinearGeneration {
    pub fn new(dist: WeightDistribution) -> Self {
        Self {
            dist,
            weights: Vec::new(),
        }
    }

    pub fn weight<R: Rng + ?Sized>(&mut self, pos: usize, rng: &mut R) -> f64 {
        if let Some(&(_, w)) = self.weights.iter().find(|(p, _)| *p == pos) {
            return w;
        }
        let w = self.dist.sample(rng);
        self.weights.push((pos, w));
        w
    }
}

impl GenerationFitness for LinearGeneration {
    fn least_fit<R: Rng + ?Sized>(&mut self, s: &[&BitString], offspring: Option<usize>, rng: &mut R) -> usize {
        assert!(s.len() >= 2, "least_fit needs at least two strings");
        let d = diff_positions(s.iter().copied());
        let w: Vec<f64> = d.iter().map(|&p| self.weight(p, rng)).collect();
        let scores: Vec<f64> = s
            .iter()
            .map(|x| d.iter().zip(&w).filter(|(&p, _)| x.get(p)).map(|(_, w)| w).sum())
            .collect();
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..s.len()).filter(|&i| scores[i] == min).collect();
        pick_tied(&tied, offspring, rng)
    }
}

/// Probability `1/(r+1)` that an offspring with one extra one-bit and `r`
/// extra zero-bits beats its parent.
pub fn accept_probability(r: u32) -> Rational {
    Rational::new(1, i128::from(r) + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    #[test]
    fn compare_examples() {
        let mut r = rng(1);
        let mut g = GenerationRanking::new();
        assert_eq!(g.compare(&bs("101"), &bs("101"), &mut r), Ordering::Equal);
        // priority order (3,1,2), 1-indexed
        let mut fixed = GenerationRanking::from_order(vec![2, 0, 1]);
        assert_eq!(fixed.compare(&bs("110"), &bs("101"), &mut r), Ordering::Less);
        assert_eq!(fixed.compare(&bs("101"), &bs("110"), &mut r), Ordering::Greater);
    }

    #[test]
    fn dominating_string_always_fitter() {
        let mut r = rng(2);
        let x = bs("1110110111");
        let y = bs("0110100101");
        for _ in 0..500 {
            let mut g = GenerationRanking::new();
            assert_eq!(g.compare(&x, &y, &mut r), Ordering::Greater);
        }
    }

    #[test]
    fn least_fit_dominated_member() {
        let mut r = rng(3);
        let x = bs("11011");
        let y = bs("10011");
        for _ in 0..200 {
            let mut g = GenerationRanking::new();
            assert_eq!(g.least_fit(&[&x, &x, &y], Some(2), &mut r), 2);
            let mut g = GenerationRanking::new();
            assert_eq!(g.least_fit(&[&y, &x, &x], Some(2), &mut r), 0);
        }
    }

    #[test]
    fn least_fit_identical_pair_is_fair() {
        let mut r = rng(4);
        let x = bs("1101");
        let trials = 20_000;
        let zeros = (0..trials)
            .filter(|_| GenerationRanking::new().least_fit(&[&x, &x], None, &mut r) == 0)
            .count();
        let p = zeros as f64 / trials as f64;
        let se = (0.25 / trials as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn identical_offspring_is_discarded() {
        let mut r = rng(5);
        let x = bs("1101");
        for _ in 0..100 {
            assert_eq!(GenerationRanking::new().least_fit(&[&x, &x, &x], Some(2), &mut r), 2);
        }
    }

    #[test]
    fn offspring_one_minus_one_loses_half_the_time() {
        let mut r = rng(6);
        let x0 = bs("110111");
        let off = bs("111011"); // gains position 2, loses position 3
        let trials = 40_000;
        let lost = (0..trials)
            .filter(|_| GenerationRanking::new().least_fit(&[&x0, &x0, &off], Some(2), &mut r) == 2)
            .count();
        let p = lost as f64 / trials as f64;
        let se = (0.25 / trials as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn accept_probability_values() {
        assert_eq!(accept_probability(0), Rational::from_integer(1));
        assert_eq!(accept_probability(1), Rational::new(1, 2));
        assert_eq!(accept_probability(3), Rational::new(1, 4));
    }

    #[test]
    fn linear_fitness_examples() {
        assert_eq!(linear_fitness(&bs("000"), &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(linear_fitness(&BitString::ones(7), &[1.0; 7]), 7.0);
        assert_eq!(linear_fitness(&bs("101"), &[3.0, 5.0, 2.0]), 5.0);
    }

    #[test]
    #[should_panic]
    fn linear_fitness_rejects_zero_weight() {
        linear_fitness(&bs("1"), &[0.0]);
    }

    #[test]
    fn weight_sampling() {
        let mut r = rng(7);
        assert!(sample_weights(&WeightDistribution::PointMass, 50, &mut r)
            .unwrap()
            .iter()
            .all(|&w| w == 1.0));
        let n = 100_000;
        let exp = sample_weights(&WeightDistribution::Exponential { rate: 1.0 }, n, &mut r).unwrap();
        let mean = exp.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!(exp.iter().all(|&w| w > 0.0));
        let geo = sample_weights(&WeightDistribution::Geometric { p: 0.5 }, n, &mut r).unwrap();
        let mean = geo.iter().sum::<f64>() / n as f64;
        // variance (1-p)/p^2 = 2
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "mean {mean}");
        assert!(geo.iter().all(|&w| w >= 1.0 && w.fract() == 0.0));
        let uni = sample_weights(&WeightDistribution::Uniform, 1000, &mut r).unwrap();
        assert!(uni.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn invalid_weight_parameters() {
        let mut r = rng(8);
        assert!(sample_weights(&WeightDistribution::Geometric { p: 1.0 }, 3, &mut r).is_err());
        assert!(sample_weights(&WeightDistribution::Geometric { p: 0.0 }, 3, &mut r).is_err());
        assert!(sample_weights(&WeightDistribution::Exponential { rate: 0.0 }, 3, &mut r).is_err());
        assert!("geom".parse::<WeightDistribution>().is_err());
        assert_eq!(
            "geom:0.5".parse::<WeightDistribution>().unwrap(),
            WeightDistribution::Geometric { p: 0.5 }
        );
    }

    #[test]
    fn reveal_keeps_earlier_order() {
        let mut r = rng(9);
        let mut g = GenerationRanking::new();
        g.reveal(&[3, 7], &mut r);
        let before: Vec<usize> = g.revealed().to_vec();
        g.reveal(&[1, 5, 9, 11], &mut r);
        let after: Vec<usize> = g.revealed().iter().copied().filter(|p| before.contains(p)).collect();
        assert_eq!(before, after);
        assert_eq!(g.revealed().len(), 6);
    }

    #[test]
    fn linear_tie_discards_offspring() {
        let mut r = rng(10);
        // equal weights: x0 and the 1-1 offspring tie
        let x0 = bs("1101");
        let off = bs("1110");
        for _ in 0..100 {
            let mut g = LinearGeneration::new(WeightDistribution::PointMass);
            assert_eq!(g.least_fit(&[&x0, &off], Some(1), &mut r), 1);
        }
    }
}
