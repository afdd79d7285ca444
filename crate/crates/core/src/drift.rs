//! Monte Carlo estimates of the drift between consecutive degenerate
//! populations, from degenerate starts and from named intermediate states.

use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitpop::{BitString, Population};
use crate::dynbv::{GenerationFitness, GenerationRanking, LinearGeneration};
use crate::ea::{EaParams, FitnessMode, Simulator};
use crate::error::{invalid, Error, Result};

/// Default generation cap per trial.
pub const DEFAULT_CAP: u64 = 1_000_000;
/// Largest aborted fraction a valid estimate may have.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

const CHUNK: u64 = 2048;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix(splitmix(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Master seed of the grid cell at `(c, eps)`; depends on the values, not
/// on the cell's place in a grid.
pub fn cell_seed(master: u64, c: f64, eps: f64) -> u64 {
    splitmix(splitmix(master ^ c.to_bits()) ^ eps.to_bits().rotate_left(17))
}

pub fn trial_rng(master: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(trial_seed(master, index))
}

/// `floor(eps * n)`, forgiving a rounding error just below an integer.
pub fn zero_count_for(eps: f64, n: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid(format!("eps must lie in [0,1], got {eps}")));
    }
    Ok(((eps * n as f64) + 1e-9).floor().min(n as f64) as usize)
}

/// Results that merge exactly and commutatively across trial batches.
pub trait Accumulate: Default + Send {
    fn merge(&mut self, other: Self);
}

/// Runs `trial` for every index in `range` in parallel; each trial gets its
/// own generator derived from `(master, index)`.
pub fn fold_trials<T, F>(params: &EaParams, range: Range<u64>, master: u64, trial: F) -> Result<T>
where
    T: Accumulate,
    F: Fn(&mut Simulator, &mut Xoshiro256PlusPlus, &mut T) + Sync,
{
    let sim = Simulator::new(*params)?;
    let chunks = (range.end.saturating_sub(range.start)).div_ceil(CHUNK);
    Ok((0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut sim = sim.clone();
            let mut acc = T::default();
            let lo = range.start + ch * CHUNK;
            for i in lo..(lo + CHUNK).min(range.end) {
                let mut rng = trial_rng(master, i);
                trial(&mut sim, &mut rng, &mut acc);
            }
            acc
        })
        .reduce(T::default, |mut a, b| {
            a.merge(b);
            a
        }))
}

/// Integer sums of per-trial zero-count decreases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub aborted: u64,
    pub sum: i64,
    pub sum_sq: i128,
}

impl Tally {
    pub fn record(&mut self, value: i64) {
        self.trials += 1;
        self.sum += value;
        self.sum_sq += i128::from(value) * i128::from(value);
    }

    pub fn abort(&mut self) {
        self.aborted += 1;
    }

    /// Completed trials (aborts excluded).
    pub fn completed(&self) -> u64 {
        self.trials
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.trials as f64
    }

    pub fn standard_error(&self) -> f64 {
        if self.trials < 2 {
            return f64::INFINITY;
        }
        let n = self.trials as f64;
        let mean = self.mean();
        let var = ((self.sum_sq as f64) - n * mean * mean) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

impl Accumulate for Tally {
    fn merge(&mut self, other: Self) {
        self.trials += other.trials;
        self.aborted += other.aborted;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub standard_error: f64,
    /// Completed trials.
    pub trials: u64,
    pub aborted_trials: u64,
    pub epsilon: f64,
    pub params: EaParams,
    pub tally: Tally,
}

impl DriftEstimate {
    pub fn from_tally(tally: Tally, epsilon: f64, params: EaParams) -> Result<Self> {
        if tally.trials == 0 {
            return Err(Error::AllTrialsAborted(tally.aborted));
        }
        Ok(Self {
            mean: tally.mean(),
            standard_error: tally.standard_error(),
            trials: tally.trials,
            aborted_trials: tally.aborted,
            epsilon,
            params,
            tally,
        })
    }

    /// False when more than 0.1% of the trials hit the generation cap.
    pub fn is_valid(&self) -> bool {
        let total = (self.trials + self.aborted_trials) as f64;
        self.aborted_trials as f64 <= MAX_ABORT_FRACTION * total
    }

    /// `mean / standard_error`.
    pub fn z_score(&self) -> f64 {
        if self.standard_error > 0.0 {
            self.mean / self.standard_error
        } else if self.mean == 0.0 {
            0.0
        } else {
            self.mean.signum() * f64::INFINITY
        }
    }

    /// `+1`/`-1` when the mean is more than `z` standard errors from zero.
    pub fn decisive_sign(&self, z: f64) -> Option<i8> {
        let s = self.z_score();
        if s > z {
            Some(1)
        } else if s < -z {
            Some(-1)
        } else {
            None
        }
    }
}

/// `count` distinct uniform positions below `n`.
pub fn random_positions<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    sample(rng, n, count).into_vec()
}

fn random_degenerate<R: Rng + ?Sized>(n: usize, zeros: usize, mu: usize, rng: &mut R) -> Population {
    let pos = random_positions(n, zeros, rng);
    Population::degenerate(BitString::with_zeros_at(n, &pos), mu).expect("mu >= 1")
}

/// Tally of degenerate-drift trials with indices in `range`, each starting
/// from `zeros` zero-bits at fresh random positions.
pub fn degenerate_drift_tally(
    params: &EaParams,
    zeros: usize,
    range: Range<u64>,
    cap: u64,
    master: u64,
) -> Result<Tally> {
    if zeros > params.n {
        return Err(invalid(format!("zero count {zeros} exceeds n = {}", params.n)));
    }
    if cap == 0 {
        return Err(invalid("cap must be >= 1"));
    }
    fold_trials(params, range, master, |sim, rng, acc: &mut Tally| {
        let mut pop = random_degenerate(params.n, zeros, params.mu, rng);
        let run = sim.run_to_next_degenerate(&mut pop, cap, rng);
        if run.hit_cap {
            acc.abort();
        } else {
            acc.record(zeros as i64 - pop.min_zero_count() as i64);
        }
    })
}

/// Degenerate-population drift at distance `eps` from the optimum.
pub fn estimate_degenerate_drift(
    params: &EaParams,
    eps: f64,
    trials: u64,
    cap: u64,
    master: u64,
) -> Result<DriftEstimate> {
    params.validate()?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let zeros = zero_count_for(eps, params.n)?;
    let tally = degenerate_drift_tally(params, zeros, 0..trials, cap, master)?;
    DriftEstimate::from_tally(tally, eps, *params)
}

/// Named population shapes around a reference string `x` with `zeros`
/// zero-bits. `x(a-b)` has `a` extra one-bits and `b` extra zero-bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateKind {
    /// `mu` copies of `x`.
    Degenerate,
    /// `mu-1` copies of `x` and one `x(1-r)`.
    F { r: usize },
    /// `{x, x(1-r), x(1-k)}` before selection; the last is the offspring.
    A { r: usize, k: usize },
    /// `{x, x(1-r), x(2-r-k)}` before selection; the offspring comes from
    /// `x(1-r)`.
    B { r: usize, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpec {
    pub kind: StateKind,
    pub n: usize,
    /// Zero-bits of the reference string.
    pub zeros: usize,
    pub mu: usize,
}

impl StateSpec {
    pub fn new(kind: StateKind, n: usize, zeros: usize, mu: usize) -> Result<Self> {
        let s = Self { kind, n, zeros, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.zeros);
        if self.mu == 0 || n == 0 {
            return Err(invalid("n and mu must be >= 1"));
        }
        if m > n {
            return Err(Error::InfeasibleState(format!("{m} zeros exceed n = {n}")));
        }
        let (zeros_needed, ones_needed) = match self.kind {
            StateKind::Degenerate => (0, 0),
            StateKind::F { r } => {
                if self.mu < 2 || r == 0 {
                    return Err(Error::InfeasibleState("F(r) needs mu >= 2 and r >= 1".into()));
                }
                (1, r)
            }
            StateKind::A { r, k } | StateKind::B { r, k } => {
                if self.mu != 2 || r == 0 || k == 0 {
                    return Err(Error::InfeasibleState("A/B states need mu = 2 and r, k >= 1".into()));
                }
                (2, r + k)
            }
        };
        if m < zeros_needed || n - m < ones_needed {
            return Err(Error::InfeasibleState(format!(
                "{:?} needs {zeros_needed} zero-bits and {ones_needed} one-bits; x has {m} and {}",
                self.kind,
                n - m
            )));
        }
        Ok(())
    }

    /// Members before the next generation's selection; `mu + 1` of them for
    /// A and B.
    pub fn member_count(&self) -> usize {
        match self.kind {
            StateKind::A { .. } | StateKind::B { .. } => self.mu + 1,
            _ => self.mu,
        }
    }
}

/// A materialized state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateInstance {
    pub population: Population,
    /// Member still awaiting selection (A and B).
    pub offspring: Option<usize>,
    pub reference: BitString,
}

/// Builds a random population realizing `spec`; the reference's zeros and
/// all extra positions are uniform and pairwise disjoint.
pub fn construct_state<R: Rng + ?Sized>(spec: &StateSpec, rng: &mut R) -> Result<StateInstance> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.zeros);
    let zero_pos = sample(rng, n, m).into_vec();
    let x = BitString::with_zeros_at(n, &zero_pos);
    // extra one-bits come from x's zeros, extra zero-bits from x's ones
    let ones = x.one_positions();
    let take_ones = |count: usize, rng: &mut R| -> Vec<usize> {
        sample(rng, ones.len(), count).into_iter().map(|i| ones[i]).collect()
    };
    let (members, offspring) = match spec.kind {
        StateKind::Degenerate => (vec![x.clone(); spec.mu], None),
        StateKind::F { r } => {
            let mut flips = take_ones(r, rng);
            flips.push(zero_pos[rng.random_range(0..m)]);
            let mut members = vec![x.clone(); spec.mu - 1];
            members.push(x.with_flipped(&flips));
            (members, None)
        }
        StateKind::A { r, k } | StateKind::B { r, k } => {
            let two = sample(rng, m, 2);
            let (z1, z2) = (zero_pos[two.index(0)], zero_pos[two.index(1)]);
            let extra = take_ones(r + k, rng);
            let mut first = extra[..r].to_vec();
            first.push(z1);
            let xr = x.with_flipped(&first);
            let mut second = extra[r..].to_vec();
            second.push(z2);
            let child = if matches!(spec.kind, StateKind::A { .. }) {
                x.with_flipped(&second)
            } else {
                xr.with_flipped(&second)
            };
            (vec![x.clone(), xr, child], Some(2))
        }
    };
    Ok(StateInstance {
        population: Population::new(members)?,
        offspring,
        reference: x,
    })
}

fn select_out<R: Rng + ?Sized>(inst: StateInstance, fitness: &FitnessMode, rng: &mut R) -> Population {
    let Some(off) = inst.offspring else {
        return inst.population;
    };
    let members = inst.population.into_members();
    let refs: Vec<&BitString> = members.iter().collect();
    let loser = match fitness {
        FitnessMode::DynBv => GenerationRanking::new().least_fit(&refs, Some(off), rng),
        FitnessMode::DynamicLinear { weights } => LinearGeneration::new(*weights).least_fit(&refs, Some(off), rng),
    };
    let kept = members
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| i != loser)
        .map(|(_, s)| s)
        .collect();
    Population::new(kept).expect("non-empty")
}

fn check_spec(spec: &StateSpec, params: &EaParams) -> Result<()> {
    params.validate()?;
    spec.validate()?;
    if spec.n != params.n || spec.mu != params.mu {
        return Err(invalid(format!(
            "state has n = {}, mu = {} but params have n = {}, mu = {}",
            spec.n, spec.mu, params.n, params.mu
        )));
    }
    Ok(())
}

/// Drift from a named state: the reference's zero-count minus the
/// zero-count of the next degenerate population.
pub fn estimate_state_drift(
    spec: &StateSpec,
    params: &EaParams,
    trials: u64,
    cap: u64,
    master: u64,
) -> Result<DriftEstimate> {
    check_spec(spec, params)?;
    if trials == 0 || cap == 0 {
        return Err(invalid("trials and cap must be >= 1"));
    }
    let tally = fold_trials(params, 0..trials, master, |sim, rng, acc: &mut Tally| {
        let inst = construct_state(spec, rng).expect("validated spec");
        let mut pop = select_out(inst, &params.fitness, rng);
        if !pop.is_degenerate() && sim.run_to_next_degenerate(&mut pop, cap, rng).hit_cap {
            acc.abort();
            return;
        }
        acc.record(spec.zeros as i64 - pop.min_zero_count() as i64);
    })?;
    DriftEstimate::from_tally(tally, spec.zeros as f64 / spec.n as f64, *params)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EjectTally {
    /// Counted acceptances.
    pub accepted: u64,
    /// Counted acceptances that removed a copy of the reference.
    pub ejected_reference: u64,
    /// Acceptances skipped because the mutation flipped a zero-bit.
    pub excluded: u64,
    pub aborted: u64,
}

impl Accumulate for EjectTally {
    fn merge(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.ejected_reference += o.ejected_reference;
        self.excluded += o.excluded;
        self.aborted += o.aborted;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EjectFrequency {
    pub frequency: f64,
    pub standard_error: f64,
    pub tally: EjectTally,
}

/// How often the first accepted offspring from `F(r)` replaces a copy of
/// the reference string. Each trial runs until one acceptance; trials
/// whose accepted offspring flipped a zero-bit of its parent are excluded.
pub fn conditional_eject_frequency(
    spec: &StateSpec,
    params: &EaParams,
    trials: u64,
    cap: u64,
    master: u64,
) -> Result<EjectFrequency> {
    check_spec(spec, params)?;
    if !matches!(spec.kind, StateKind::F { .. }) {
        return Err(invalid("eject frequency is defined for F(r) states"));
    }
    let tally = fold_trials(params, 0..trials, master, |sim, rng, acc: &mut EjectTally| {
        let mut pop = construct_state(spec, rng).expect("validated spec").population;
        let reference = pop.members()[0].clone();
        for _ in 0..cap {
            let out = sim.step(&mut pop, rng);
            if let Some((_, gone)) = out.replaced {
                if out.zero_flips > 0 || out.crossover {
                    acc.excluded += 1;
                } else {
                    acc.accepted += 1;
                    acc.ejected_reference += u64::from(gone == reference);
                }
                return;
            }
        }
        acc.aborted += 1;
    })?;
    if tally.accepted == 0 {
        return Err(Error::NoAcceptances(trials));
    }
    let p = tally.ejected_reference as f64 / tally.accepted as f64;
    Ok(EjectFrequency {
        frequency: p,
        standard_error: (p * (1.0 - p) / tally.accepted as f64).sqrt(),
        tally,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub c: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub estimate: DriftEstimate,
}

/// Degenerate drift on every `(c, eps)` pair, in row-major order over
/// `c_grid`. Each cell uses [`cell_seed`].
pub fn drift_surface(
    c_grid: &[f64],
    eps_grid: &[f64],
    template: &EaParams,
    trials: u64,
    cap: u64,
    master: u64,
) -> Result<Vec<SurfaceCell>> {
    if c_grid.is_empty() || eps_grid.is_empty() {
        return Err(invalid("grids must be non-empty"));
    }
    let mut out = Vec::with_capacity(c_grid.len() * eps_grid.len());
    for &c in c_grid {
        let params = EaParams { c, ..*template };
        for &eps in eps_grid {
            let seed = cell_seed(master, c, eps);
            out.push(SurfaceCell {
                c,
                epsilon: eps,
                seed,
                estimate: estimate_degenerate_drift(&params, eps, trials, cap, seed)?,
            });
        }
    }
    Ok(out)
}

/// Counts of degenerate-to-degenerate transitions by zero-bit flips.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroFlipTally {
    pub transitions: u64,
    /// Transitions whose mutations flipped at least two zero-bits in total.
    pub multiple: u64,
    pub aborted: u64,
}

impl Accumulate for ZeroFlipTally {
    fn merge(&mut self, o: Self) {
        self.transitions += o.transitions;
        self.multiple += o.multiple;
        self.aborted += o.aborted;
    }
}

impl ZeroFlipTally {
    pub fn fraction(&self) -> f64 {
        self.multiple as f64 / self.transitions as f64
    }
}

pub fn zero_flip_tally(params: &EaParams, eps: f64, trials: u64, cap: u64, master: u64) -> Result<ZeroFlipTally> {
    params.validate()?;
    let zeros = zero_count_for(eps, params.n)?;
    fold_trials(params, 0..trials, master, |sim, rng, acc: &mut ZeroFlipTally| {
        let mut pop = random_degenerate(params.n, zeros, params.mu, rng);
        let run = sim.run_to_next_degenerate(&mut pop, cap, rng);
        if run.hit_cap {
            acc.aborted += 1;
        } else {
            acc.transitions += 1;
            acc.multiple += u64::from(run.zero_flips >= 2);
        }
    })
}
