//! The five experiment commands. Each returns its rows; writing them out is
//! left to the caller.

use dynbv_core::analytic::{discard_probs_a, discard_probs_b, drift_coefficients, epsilon_star, find_c0, mu_zero};
use dynbv_core::drift::{
    cell_seed, degenerate_drift_tally, drift_surface, random_positions, trial_rng, zero_count_for, Accumulate, Tally,
};
use dynbv_core::ea::run_to_optimum;
use dynbv_core::oracle::{conditional_symmetry_check, exact_acceptance, exact_discard_distribution, CategoryProfile};
use dynbv_core::{BitString, EaParams, Population, Rational};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{float, HeatCell, Row};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftRow {
    pub c: f64,
    pub eps: f64,
    pub n: usize,
    pub mu: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub aborted: u64,
    pub seed: u64,
}

impl Row for DriftRow {
    const HEADER: &'static [&'static str] = &["c", "eps", "n", "mu", "mean", "stderr", "trials", "aborted", "seed"];
    fn fields(&self) -> Vec<String> {
        vec![
            float(self.c),
            float(self.eps),
            self.n.to_string(),
            self.mu.to_string(),
            float(self.mean),
            float(self.stderr),
            self.trials.to_string(),
            self.aborted.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Drift rows plus whether every cell passed the abort-rate check.
pub struct DriftOutcome {
    pub rows: Vec<DriftRow>,
    pub all_valid: bool,
}

impl DriftOutcome {
    pub fn heat_cells(&self) -> Vec<HeatCell> {
        self.rows
            .iter()
            .map(|r| HeatCell {
                row: r.c,
                col: r.eps,
                value: r.mean,
                significant: r.mean.abs() > 3.0 * r.stderr,
            })
            .collect()
    }
}

pub fn cmd_drift(cfg: &ExperimentConfig) -> Result<DriftOutcome, CliError> {
    let seed = cfg.require_seed()?;
    let template = cfg.ea.params()?;
    for &c in &cfg.drift.c {
        EaParams { c, ..template }.validate().map_err(CliError::config)?;
    }
    let cells = drift_surface(&cfg.drift.c, &cfg.drift.eps, &template, cfg.trials, cfg.cap, seed)?;
    let all_valid = cells.iter().all(|c| c.estimate.is_valid());
    let rows = cells
        .into_iter()
        .map(|cell| DriftRow {
            c: cell.c,
            eps: cell.epsilon,
            n: template.n,
            mu: template.mu,
            mean: cell.estimate.mean,
            stderr: cell.estimate.standard_error,
            trials: cell.estimate.trials,
            aborted: cell.estimate.aborted_trials,
            seed: cell.seed,
        })
        .collect();
    Ok(DriftOutcome { rows, all_valid })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticRow {
    pub c: f64,
    pub f0: f64,
    pub f1: f64,
    pub c0: f64,
    pub eps_star: f64,
    pub mu0: f64,
}

impl Row for AnalyticRow {
    const HEADER: &'static [&'static str] = &["c", "f0", "f1", "c0", "eps_star", "mu0"];
    fn fields(&self) -> Vec<String> {
        [self.c, self.f0, self.f1, self.c0, self.eps_star, self.mu0]
            .into_iter()
            .map(float)
            .collect()
    }
}

/// One row per grid value, then one at the root of `f0`.
pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<Vec<AnalyticRow>, CliError> {
    let series = cfg.analytic.series();
    let c0 = find_c0(&series)?;
    let mut grid = cfg.analytic.c.clone();
    grid.push(c0);
    grid.into_iter()
        .map(|c| {
            let d = drift_coefficients(c, &series).map_err(CliError::config)?;
            Ok(AnalyticRow {
                c,
                f0: d.f0,
                f1: d.f1,
                c0,
                eps_star: epsilon_star(c, &series).unwrap_or(f64::NAN),
                mu0: mu_zero(c),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleRow {
    pub check: String,
    pub r: usize,
    pub k: usize,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

impl Row for OracleRow {
    const HEADER: &'static [&'static str] = &["check", "r", "k", "expected", "actual", "pass"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.check.clone(),
            self.r.to_string(),
            self.k.to_string(),
            self.expected.clone(),
            self.actual.clone(),
            self.pass.to_string(),
        ]
    }
}

fn show(values: &[Rational]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn row(check: &str, r: usize, k: usize, expected: String, actual: String) -> OracleRow {
    OracleRow {
        check: check.into(),
        r,
        k,
        pass: expected == actual,
        expected,
        actual,
    }
}

/// Closed-form selection probabilities against exact enumeration.
pub fn cmd_oracle_check(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>, CliError> {
    let o = &cfg.oracle_check;
    if o.max_r == 0 || o.max_k == 0 || o.max_r + o.max_k + 2 > 12 {
        return Err(CliError::Config(
            "oracle check needs 1 <= r, k and r + k + 2 <= 12".into(),
        ));
    }
    let mut rows = Vec::new();
    for r in 1..=o.max_r {
        for k in 1..=o.max_k {
            let (ru, ku) = (r as u32, k as u32);
            let got = exact_discard_distribution(&CategoryProfile::a_state(r, k)?)?;
            rows.push(row("discard-a", r, k, show(&discard_probs_a(ru, ku)?), show(&got)));
            let got = exact_discard_distribution(&CategoryProfile::b_state(r, k)?)?;
            rows.push(row("discard-b", r, k, show(&discard_probs_b(ru, ku)?), show(&got)));
        }
    }
    for r in 0..=o.max_accept_r {
        let expected = Rational::new(1, r as i128 + 1);
        rows.push(row(
            "acceptance",
            r,
            0,
            expected.to_string(),
            exact_acceptance(r)?.to_string(),
        ));
    }
    for r in 1..=o.max_symmetry_r {
        let ok = conditional_symmetry_check(r)?;
        rows.push(row(
            "symmetry",
            r,
            0,
            "independent".into(),
            if ok { "independent" } else { "dependent" }.into(),
        ));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub n: usize,
    pub mu: usize,
    pub c: f64,
    pub start_eps: f64,
    pub median_generations: f64,
    pub success_rate: f64,
    pub trials: u64,
    pub success_stderr: f64,
    pub budget: u64,
    pub seed: u64,
}

impl Row for RuntimeRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "mu",
        "c",
        "start_eps",
        "median_generations",
        "success_rate",
        "trials",
        "success_stderr",
        "budget",
        "seed",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.mu.to_string(),
            float(self.c),
            float(self.start_eps),
            float(self.median_generations),
            float(self.success_rate),
            self.trials.to_string(),
            float(self.success_stderr),
            self.budget.to_string(),
            self.seed.to_string(),
        ]
    }
}

fn median(sorted: &[u64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2] as f64
    } else {
        (sorted[m / 2 - 1] as f64 + sorted[m / 2] as f64) / 2.0
    }
}

/// Repeated runs to the optimum. Failed runs enter the median at the budget.
pub fn cmd_runtime(cfg: &ExperimentConfig) -> Result<Vec<RuntimeRow>, CliError> {
    let master = cfg.require_seed()?;
    let rt = &cfg.runtime;
    if cfg.trials == 0 || rt.n.is_empty() {
        return Err(CliError::Config(
            "runtime needs trials >= 1 and a non-empty n list".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in &rt.n {
        let params = cfg.ea_for_n(n)?;
        let zeros = zero_count_for(rt.start_eps, n)?;
        let budget = (rt.budget_factor * n as f64 * (n as f64).ln()).ceil() as u64;
        let seed = cell_seed(master, n as f64, rt.start_eps);
        let results: Vec<(u64, bool)> = (0..cfg.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(seed, i);
                let pos = random_positions(n, zeros, &mut rng);
                let pop = Population::degenerate(BitString::with_zeros_at(n, &pos), params.mu).expect("mu >= 1");
                let res = run_to_optimum(&pop, &params, budget, &mut rng).expect("validated params");
                (res.generations_used, res.reached_optimum)
            })
            .collect();
        let mut gens: Vec<u64> = results.iter().map(|r| r.0).collect();
        gens.sort_unstable();
        let p = results.iter().filter(|r| r.1).count() as f64 / results.len() as f64;
        rows.push(RuntimeRow {
            n,
            mu: params.mu,
            c: params.c,
            start_eps: rt.start_eps,
            median_generations: median(&gens),
            success_rate: p,
            trials: cfg.trials,
            success_stderr: (p * (1.0 - p) / results.len() as f64).sqrt(),
            budget,
            seed,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub fitness: String,
    pub n: usize,
    pub mu: usize,
    pub eps: f64,
    pub lo: f64,
    pub hi: f64,
    pub lo_mean: f64,
    pub lo_stderr: f64,
    pub hi_mean: f64,
    pub hi_stderr: f64,
    /// Whether the bracket reached the target width.
    pub resolved: bool,
    pub evaluations: u64,
    pub trials: u64,
    pub seed: u64,
}

impl Row for ThresholdRow {
    const HEADER: &'static [&'static str] = &[
        "fitness",
        "n",
        "mu",
        "eps",
        "lo",
        "hi",
        "lo_mean",
        "lo_stderr",
        "hi_mean",
        "hi_stderr",
        "resolved",
        "evaluations",
        "trials",
        "seed",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.fitness.clone(),
            self.n.to_string(),
            self.mu.to_string(),
            float(self.eps),
            float(self.lo),
            float(self.hi),
            float(self.lo_mean),
            float(self.lo_stderr),
            float(self.hi_mean),
            float(self.hi_stderr),
            self.resolved.to_string(),
            self.evaluations.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Drift at one `c`, with trials quadrupled until the sign is clear or
/// `max_trials` is reached.
pub fn decide_sign(
    params: &EaParams,
    eps: f64,
    min_trials: u64,
    max_trials: u64,
    z: f64,
    cap: u64,
    master: u64,
) -> Result<(Tally, Option<i8>), CliError> {
    let zeros = zero_count_for(eps, params.n)?;
    let seed = cell_seed(master, params.c, eps);
    let mut tally = Tally::default();
    let mut done = 0;
    let mut target = min_trials.max(2).min(max_trials.max(2));
    loop {
        tally.merge(degenerate_drift_tally(params, zeros, done..target, cap, seed)?);
        done = target;
        let se = tally.standard_error();
        let m = tally.mean();
        let sign = if m > z * se {
            Some(1)
        } else if m < -z * se {
            Some(-1)
        } else {
            None
        };
        if sign.is_some() || done >= max_trials {
            return Ok((tally, sign));
        }
        target = (done * 4).min(max_trials);
    }
}

/// Bisection on the sign of the drift in `c`, positive at `lo` and
/// negative at `hi`.
pub fn cmd_threshold(cfg: &ExperimentConfig) -> Result<ThresholdRow, CliError> {
    let master = cfg.require_seed()?;
    let th = &cfg.threshold;
    let template = cfg.ea.params()?;
    if th.lo.partial_cmp(&th.hi) != Some(std::cmp::Ordering::Less) || th.tolerance <= 0.0 {
        return Err(CliError::Config("threshold needs lo < hi and tolerance > 0".into()));
    }
    let at = |c: f64| -> Result<(Tally, Option<i8>), CliError> {
        let params = EaParams { c, ..template };
        params.validate().map_err(CliError::config)?;
        decide_sign(&params, th.eps, cfg.trials, th.max_trials, th.z, cfg.cap, master)
    };
    let (mut lo, mut hi) = (th.lo, th.hi);
    let (mut lo_t, lo_s) = at(lo)?;
    let (mut hi_t, hi_s) = at(hi)?;
    let mut evaluations = 2;
    let mut trials = lo_t.trials + lo_t.aborted + hi_t.trials + hi_t.aborted;
    if lo_s != Some(1) || hi_s != Some(-1) {
        return Err(CliError::Validity(format!(
            "no sign change on [{lo}, {hi}]: signs {lo_s:?} and {hi_s:?}"
        )));
    }
    let mut resolved = true;
    while hi - lo > th.tolerance {
        let mid = 0.5 * (lo + hi);
        let (t, s) = at(mid)?;
        evaluations += 1;
        trials += t.trials + t.aborted;
        match s {
            Some(1) => (lo, lo_t) = (mid, t),
            Some(_) => (hi, hi_t) = (mid, t),
            None => {
                resolved = false;
                break;
            }
        }
    }
    Ok(ThresholdRow {
        fitness: cfg.ea.fitness.clone(),
        n: template.n,
        mu: template.mu,
        eps: th.eps,
        lo,
        hi,
        lo_mean: lo_t.mean(),
        lo_stderr: lo_t.standard_error(),
        hi_mean: hi_t.mean(),
        hi_stderr: hi_t.standard_error(),
        resolved,
        evaluations,
        trials,
        seed: master,
    })
}
