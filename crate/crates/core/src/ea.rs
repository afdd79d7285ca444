//! The (mu+1)-EA generation loop and run drivers.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bitpop::{BitString, Population};
use crate::dynbv::{GenerationFitness, GenerationRanking, LinearGeneration, WeightDistribution};
use crate::error::{invalid, Error, Result};

/// Which per-generation fitness the selection step uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FitnessMode {
    #[default]
    DynBv,
    DynamicLinear {
        weights: WeightDistribution,
    },
}

impl std::fmt::Display for FitnessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DynBv => f.write_str("dynbv"),
            Self::DynamicLinear { weights } => write!(f, "linear-{weights}"),
        }
    }
}

impl std::str::FromStr for FitnessMode {
    type Err = Error;

    /// `dynbv`, or a weight distribution such as `exp:1`, `geom:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynbv" => Ok(Self::DynBv),
            other => Ok(Self::DynamicLinear {
                weights: other.strip_prefix("linear-").unwrap_or(other).parse()?,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaParams {
    pub n: usize,
    pub mu: usize,
    /// Mutation parameter; each bit flips with probability `c/n`.
    pub c: f64,
    /// Probability that a generation uses uniform crossover instead of mutation.
    pub crossover_prob: f64,
    pub fitness: FitnessMode,
}

impl EaParams {
    /// Pure (mu+1)-EA on DynBV.
    pub fn new(n: usize, mu: usize, c: f64) -> Result<Self> {
        let p = Self {
            n,
            mu,
            c,
            crossover_prob: 0.0,
            fitness: FitnessMode::DynBv,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_crossover(mut self, prob: f64) -> Result<Self> {
        self.crossover_prob = prob;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fitness(mut self, fitness: FitnessMode) -> Result<Self> {
        self.fitness = fitness;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        if self.mu == 0 {
            return Err(invalid("mu must be >= 1"));
        }
        if !(self.c > 0.0 && self.c < self.n as f64) {
            return Err(invalid(format!(
                "c must lie in (0, n) = (0, {}), got {}",
                self.n, self.c
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(invalid(format!(
                "crossover_prob must lie in [0,1], got {}",
                self.crossover_prob
            )));
        }
        if let FitnessMode::DynamicLinear { weights } = &self.fitness {
            weights.validate()?;
        }
        Ok(())
    }
}

/// Standard bit mutation: a Binomial(n, c/n) flip count, then that many
/// distinct uniform positions.
#[derive(Clone, Debug)]
pub struct Mutator {
    n: usize,
    count: Binomial,
}

impl Mutator {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        if n == 0 || !(c > 0.0 && c < n as f64) {
            return Err(invalid(format!("mutation needs 0 < c < n, got c = {c}, n = {n}")));
        }
        let count = Binomial::new(n as u64, c / n as f64).map_err(|e| invalid(e.to_string()))?;
        Ok(Self { n, count })
    }

    /// Fills `out` with the positions to flip.
    pub fn sample_flips<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let k = self.count.sample(rng) as usize;
        if k <= 16 && k * 4 <= self.n {
            while out.len() < k {
                let p = rng.random_range(0..self.n);
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        } else {
            out.extend(rand::seq::index::sample(rng, self.n, k).iter());
        }
    }

    pub fn mutate<R: Rng + ?Sized>(&self, x: &BitString, rng: &mut R) -> BitString {
        assert_eq!(x.len(), self.n, "mutate: length mismatch");
        let mut flips = Vec::new();
        self.sample_flips(rng, &mut flips);
        x.with_flipped(&flips)
    }
}

/// Flips each bit of `x` independently with probability `c/n`.
pub fn mutate<R: Rng + ?Sized>(x: &BitString, c: f64, rng: &mut R) -> Result<BitString> {
    Ok(Mutator::new(x.len(), c)?.mutate(x, rng))
}

/// Uniform crossover: each position copies `x1` or `x2` with probability 1/2.
pub fn crossover<R: Rng + ?Sized>(x1: &BitString, x2: &BitString, rng: &mut R) -> Result<BitString> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(x1.len(), x2.len()));
    }
    let words = x1
        .words()
        .iter()
        .zip(x2.words())
        .map(|(&a, &b)| {
            let mask: u64 = rng.random();
            (a & mask) | (b & !mask)
        })
        .collect();
    Ok(BitString::from_words(x1.len(), words))
}

/// What happened in one generation.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub parent: usize,
    pub crossover: bool,
    /// Mutation flips (zero for crossover offspring).
    pub flips: usize,
    /// Flips that turned a zero-bit of the parent into a one-bit.
    pub zero_flips: usize,
    /// The member replaced by the offspring; `None` if the offspring was
    /// the one discarded.
    pub replaced: Option<(usize, BitString)>,
}

impl StepOutcome {
    pub fn accepted(&self) -> bool {
        self.replaced.is_some()
    }
}

/// Result of iterating until the population degenerates.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerationRun {
    pub generations: u64,
    pub hit_cap: bool,
    /// Total zero-bit flips by mutation over the transition.
    pub zero_flips: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub generations_used: u64,
    pub reached_optimum: bool,
    pub final_population: Population,
}

/// Reusable generation engine for one parameter set.
#[derive(Clone, Debug)]
pub struct Simulator {
    params: EaParams,
    mutator: Mutator,
    flips: Vec<usize>,
}

impl Simulator {
    pub fn new(params: EaParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            mutator: Mutator::new(params.n, params.c)?,
            params,
            flips: Vec::with_capacity(16),
        })
    }

    pub fn params(&self) -> &EaParams {
        &self.params
    }

    fn check(&self, pop: &Population) {
        assert_eq!(pop.len(), self.params.n, "population length differs from n");
    }

    /// One generation.
    pub fn step<R: Rng + ?Sized>(&mut self, pop: &mut Population, rng: &mut R) -> StepOutcome {
        let degenerate = pop.is_degenerate();
        self.step_hinted(pop, degenerate, rng)
    }

    /// One generation, given whether `pop` is currently degenerate.
    pub(crate) fn step_hinted<R: Rng + ?Sized>(
        &mut self,
        pop: &mut Population,
        degenerate: bool,
        rng: &mut R,
    ) -> StepOutcome {
        self.check(pop);
        let mu = pop.mu();
        let use_crossover = self.params.crossover_prob > 0.0 && rng.random_bool(self.params.crossover_prob);
        let parent = rng.random_range(0..mu);

        let (offspring, flips, zero_flips) = if use_crossover {
            let other = if mu >= 2 {
                let j = rng.random_range(0..mu - 1);
                if j >= parent {
                    j + 1
                } else {
                    j
                }
            } else {
                parent
            };
            let members = pop.members();
            let child = crossover(&members[parent], &members[other], rng).expect("equal lengths");
            (child, 0, 0)
        } else {
            self.mutator.sample_flips(rng, &mut self.flips);
            let x = &pop.members()[parent];
            let zero_flips = self.flips.iter().filter(|&&p| !x.get(p)).count();
            if degenerate && zero_flips == 0 {
                // Dominated by (or identical to) every member: discarded.
                return StepOutcome {
                    parent,
                    crossover: false,
                    flips: self.flips.len(),
                    zero_flips,
                    replaced: None,
                };
            }
            (x.with_flipped(&self.flips), self.flips.len(), zero_flips)
        };

        let loser = {
            let mut all: Vec<&BitString> = Vec::with_capacity(mu + 1);
            all.extend(pop.members());
            all.push(&offspring);
            match self.params.fitness {
                FitnessMode::DynBv => GenerationRanking::new().least_fit(&all, Some(mu), rng),
                FitnessMode::DynamicLinear { weights } => LinearGeneration::new(weights).least_fit(&all, Some(mu), rng),
            }
        };
        let replaced = (loser < mu).then(|| (loser, std::mem::replace(&mut pop.members_mut()[loser], offspring)));
        StepOutcome {
            parent,
            crossover: use_crossover,
            flips,
            zero_flips,
            replaced,
        }
    }

    /// Steps until the population is degenerate (at least one generation).
    pub fn run_to_next_degenerate<R: Rng + ?Sized>(
        &mut self,
        pop: &mut Population,
        cap: u64,
        rng: &mut R,
    ) -> DegenerationRun {
        assert!(cap >= 1, "cap must be >= 1");
        let mut degenerate = pop.is_degenerate();
        let mut run = DegenerationRun {
            generations: 0,
            hit_cap: false,
            zero_flips: 0,
        };
        loop {
            let out = self.step_hinted(pop, degenerate, rng);
            run.generations += 1;
            run.zero_flips += out.zero_flips as u64;
            if out.accepted() {
                degenerate = pop.is_degenerate();
            }
            if degenerate {
                return run;
            }
            if run.generations >= cap {
                run.hit_cap = true;
                return run;
            }
        }
    }

    /// Steps until the population is degenerate at the all-ones string or
    /// `budget` generations have passed.
    pub fn run_to_optimum<R: Rng + ?Sized>(&mut self, pop: &mut Population, budget: u64, rng: &mut R) -> (u64, bool) {
        let mut degenerate = pop.is_degenerate();
        let mut generations = 0;
        while !pop.is_optimal() {
            if generations >= budget {
                return (generations, false);
            }
            let out = self.step_hinted(pop, degenerate, rng);
            generations += 1;
            if out.accepted() {
                degenerate = pop.is_degenerate();
            }
        }
        (generations, true)
    }
}

/// One generation of the (mu+1)-EA (or GA when `crossover_prob > 0`).
pub fn step<R: Rng + ?Sized>(pop: &Population, params: &EaParams, rng: &mut R) -> Result<Population> {
    if pop.mu() != params.mu {
        return Err(invalid(format!(
            "population has {} members, params say {}",
            pop.mu(),
            params.mu
        )));
    }
    let mut sim = Simulator::new(*params)?;
    let mut next = pop.clone();
    sim.step(&mut next, rng);
    Ok(next)
}

pub fn run_to_next_degenerate<R: Rng + ?Sized>(
    pop: &Population,
    params: &EaParams,
    cap: u64,
    rng: &mut R,
) -> Result<(Population, DegenerationRun)> {
    if cap == 0 {
        return Err(invalid("cap must be >= 1"));
    }
    let mut sim = Simulator::new(*params)?;
    let mut p = pop.clone();
    let run = sim.run_to_next_degenerate(&mut p, cap, rng);
    Ok((p, run))
}

pub fn run_to_optimum<R: Rng + ?Sized>(
    pop: &Population,
    params: &EaParams,
    budget: u64,
    rng: &mut R,
) -> Result<RunResult> {
    let mut sim = Simulator::new(*params)?;
    let mut p = pop.clone();
    let (generations_used, reached_optimum) = sim.run_to_optimum(&mut p, budget, rng);
    Ok(RunResult {
        generations_used,
        reached_optimum,
        final_population: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpop::dominates;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    #[test]
    fn params_validation() {
        assert!(EaParams::new(10, 2, 0.0).is_err());
        assert!(EaParams::new(10, 2, 10.0).is_err());
        assert!(EaParams::new(10, 2, 9.0).is_ok());
        assert!(EaParams::new(10, 0, 1.0).is_err());
        assert!(EaParams::new(0, 1, 1.0).is_err());
        assert!(EaParams::new(10, 2, 1.0).unwrap().with_crossover(1.5).is_err());
        let geo = FitnessMode::DynamicLinear {
            weights: WeightDistribution::Geometric { p: 2.0 },
        };
        assert!(EaParams::new(10, 2, 1.0).unwrap().with_fitness(geo).is_err());
    }

    #[test]
    fn mutation_rejects_bad_rate() {
        let x = BitString::ones(5);
        assert!(mutate(&x, 0.0, &mut rng(0)).is_err());
        assert!(mutate(&x, 5.0, &mut rng(0)).is_err());
        assert!(mutate(&x, 4.0, &mut rng(0)).is_ok());
    }

    #[test]
    fn flip_count_mean_and_no_flip_frequency() {
        let (n, c) = (100usize, 1.5);
        let m = Mutator::new(n, c).unwrap();
        let mut r = rng(1);
        let mut buf = Vec::new();
        let trials = 1_000_000u32;
        let (mut sum, mut none) = (0u64, 0u64);
        for _ in 0..trials {
            m.sample_flips(&mut r, &mut buf);
            let mut sorted = buf.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), buf.len());
            sum += buf.len() as u64;
            none += u64::from(buf.is_empty());
        }
        let t = f64::from(trials);
        let p = c / n as f64;
        let mean = sum as f64 / t;
        let sd = (n as f64 * p * (1.0 - p) / t).sqrt();
        assert!((mean - c).abs() < 3.0 * sd, "mean {mean}");
        let p0 = (1.0 - p).powi(n as i32);
        let freq = none as f64 / t;
        assert!(
            (freq - p0).abs() < 3.0 * (p0 * (1.0 - p0) / t).sqrt(),
            "freq {freq} vs {p0}"
        );
    }

    #[test]
    fn mutation_positions_are_uniform() {
        let m = Mutator::new(8, 2.0).unwrap();
        let mut r = rng(2);
        let mut buf = Vec::new();
        let mut hits = [0u32; 8];
        let trials = 200_000;
        for _ in 0..trials {
            m.sample_flips(&mut r, &mut buf);
            for &p in &buf {
                hits[p] += 1;
            }
        }
        let expect = trials as f64 * 0.25;
        let sd = (expect * 0.75).sqrt();
        for h in hits {
            assert!((f64::from(h) - expect).abs() < 4.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn high_rate_mutation() {
        let n = 50;
        let m = Mutator::new(n, (n - 1) as f64).unwrap();
        let mut r = rng(3);
        let x = BitString::ones(n);
        let trials = 20_000;
        let total: usize = (0..trials).map(|_| m.mutate(&x, &mut r).zero_count()).sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 49.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn crossover_examples() {
        let mut r = rng(4);
        let x: BitString = "1011001".parse().unwrap();
        assert_eq!(crossover(&x, &x, &mut r).unwrap(), x);
        let y: BitString = "1110011".parse().unwrap();
        for _ in 0..100 {
            let z = crossover(&x, &y, &mut r).unwrap();
            for i in 0..7 {
                if x.get(i) == y.get(i) {
                    assert_eq!(z.get(i), x.get(i));
                }
            }
            assert_eq!(z.zero_count(), z.recount_zeros());
        }
        assert!(crossover(&x, &BitString::ones(3), &mut r).is_err());
    }

    #[test]
    fn crossover_of_complements_is_binomial_half() {
        let n = 1000;
        let mut r = rng(5);
        let (a, b) = (BitString::ones(n), BitString::zeros(n));
        let trials = 2000;
        let mean = (0..trials)
            .map(|_| crossover(&a, &b, &mut r).unwrap().one_count() as f64)
            .sum::<f64>()
            / trials as f64;
        let sd = (n as f64 * 0.25 / trials as f64).sqrt();
        assert!((mean - 500.0).abs() < 4.0 * sd, "mean {mean}");
    }

    #[test]
    fn degenerate_step_outcomes() {
        // every single-flip mutation of a degenerate population
        let n = 20;
        let params = EaParams::new(n, 3, 0.5).unwrap();
        let mut sim = Simulator::new(params).unwrap();
        let x0 = BitString::with_zeros_at(n, &[2, 5, 11]);
        let mut r = rng(6);
        for _ in 0..5000 {
            let mut pop = Population::degenerate(x0.clone(), 3).unwrap();
            let out = sim.step(&mut pop, &mut r);
            match (out.flips, out.zero_flips) {
                (_, 0) => assert_eq!(pop, Population::degenerate(x0.clone(), 3).unwrap()),
                (1, 1) => {
                    assert!(out.accepted());
                    let (_, runs) = run_to_next_degenerate(&pop, &params, 1_000_000, &mut r).unwrap();
                    assert!(!runs.hit_cap);
                }
                _ => {}
            }
        }
    }

    #[test]
    fn single_zero_flip_degenerates_to_improvement() {
        let n = 30;
        let params = EaParams::new(n, 2, 1.0).unwrap();
        let x0 = BitString::with_zeros_at(n, &[4, 9]);
        let x1 = x0.with_flipped(&[4]);
        let mut r = rng(7);
        for _ in 0..200 {
            let pop = Population::new(vec![x0.clone(), x1.clone()]).unwrap();
            let mut sim = Simulator::new(params).unwrap();
            let mut p = pop.clone();
            loop {
                let out = sim.step(&mut p, &mut r);
                if out.zero_flips > 0 {
                    break;
                }
                if p.is_degenerate() {
                    assert_eq!(p.members()[0], x1);
                    break;
                }
            }
        }
    }

    #[test]
    fn mu_one_always_degenerate_in_one() {
        let params = EaParams::new(40, 1, 2.0).unwrap();
        let mut r = rng(8);
        let pop = Population::degenerate(BitString::with_zeros_at(40, &[1, 2, 3, 4]), 1).unwrap();
        for _ in 0..500 {
            let (_, run) = run_to_next_degenerate(&pop, &params, 10, &mut r).unwrap();
            assert_eq!(run.generations, 1);
        }
    }

    #[test]
    fn run_to_optimum_from_optimum_is_free() {
        let params = EaParams::new(40, 3, 1.0).unwrap();
        let pop = Population::degenerate(BitString::ones(40), 3).unwrap();
        let res = run_to_optimum(&pop, &params, 100, &mut rng(9)).unwrap();
        assert_eq!(res.generations_used, 0);
        assert!(res.reached_optimum);
    }

    #[test]
    fn reached_optimum_implies_all_ones_degenerate() {
        let params = EaParams::new(60, 3, 1.0).unwrap();
        let pop = Population::degenerate(BitString::with_zeros_at(60, &[0, 10, 20, 30]), 3).unwrap();
        let res = run_to_optimum(&pop, &params, 1_000_000, &mut rng(10)).unwrap();
        assert!(res.reached_optimum);
        assert!(res.final_population.is_degenerate());
        assert!(res.final_population.members()[0].is_all_ones());
    }

    #[test]
    fn dominating_member_survives() {
        let n = 40;
        let params = EaParams::new(n, 4, 2.0).unwrap();
        let mut sim = Simulator::new(params).unwrap();
        let mut r = rng(11);
        let start = BitString::with_zeros_at(n, &(0..12).collect::<Vec<_>>());
        let mut pop = Population::degenerate(start, 4).unwrap();
        for _ in 0..20_000 {
            let before = pop.clone();
            let out = sim.step(&mut pop, &mut r);
            if let Some((_, gone)) = &out.replaced {
                for (i, m) in before.members().iter().enumerate() {
                    let strictly_best = before
                        .members()
                        .iter()
                        .enumerate()
                        .all(|(j, o)| j == i || (dominates(m, o) && m != o));
                    if strictly_best {
                        assert_ne!(gone, m);
                    }
                }
            }
        }
    }

    #[test]
    fn reproducible_trajectories() {
        let params = EaParams::new(100, 3, 1.5).unwrap().with_crossover(0.5).unwrap();
        let start = Population::degenerate(BitString::with_zeros_at(100, &(0..30).collect::<Vec<_>>()), 3).unwrap();
        let a = run_to_optimum(&start, &params, 2000, &mut rng(12)).unwrap();
        let b = run_to_optimum(&start, &params, 2000, &mut rng(12)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_plus_one_accepts_iff_fitter() {
        // mu = 1 on DynBV with a single-zero parent: an offspring flipping
        // the zero and r ones is kept with probability 1/(r+1).
        let n = 10;
        let params = EaParams::new(n, 1, 3.0).unwrap();
        let mut sim = Simulator::new(params).unwrap();
        let x0 = BitString::with_zeros_at(n, &[0]);
        let mut r = rng(13);
        let (mut seen, mut kept) = ([0u32; 4], [0u32; 4]);
        for _ in 0..200_000 {
            let mut pop = Population::degenerate(x0.clone(), 1).unwrap();
            let out = sim.step(&mut pop, &mut r);
            if out.zero_flips == 1 && out.flips <= 4 {
                let ones = out.flips - 1;
                seen[ones] += 1;
                kept[ones] += u32::from(out.accepted());
            }
        }
        for ones in 0..4 {
            let p = f64::from(kept[ones]) / f64::from(seen[ones]);
            let expect = 1.0 / (ones as f64 + 1.0);
            let se = (expect * (1.0 - expect) / f64::from(seen[ones])).sqrt();
            assert!((p - expect).abs() <= 4.0 * se + 1e-12, "r={ones}: {p} vs {expect}");
        }
    }
}
