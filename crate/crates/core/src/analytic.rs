//! Closed-form drift quantities: exact rational transition terms and the
//! floating-point series `f0`, `f1` with their thresholds.

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Rational;

fn q(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

fn to_f64(x: &Rational) -> f64 {
    x.to_f64().expect("small rational")
}

fn need_pos(name: &str, v: u32) -> Result<()> {
    if v == 0 {
        Err(invalid(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

fn need_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("c must be positive and finite, got {c}")))
    }
}

/// Probability that an accepted offspring ejects a copy of the parent
/// genotype: `1/(1+(mu-1)r)`.
pub fn hat_p(mu: u32, r: u32) -> Result<Rational> {
    need_pos("mu", mu)?;
    Ok(q(1, 1 + (i128::from(mu) - 1) * i128::from(r)))
}

/// First-order drift from the state with `mu-1` copies of the reference
/// string and one string with one extra one and `r` extra zeros.
pub fn delta_f_first(mu: u32, r: u32) -> Result<Rational> {
    if mu < 2 {
        return Err(invalid("mu must be >= 2"));
    }
    need_pos("r", r)?;
    let r = i128::from(r);
    Ok(q(1 - r, 1 + (i128::from(mu) - 1) * r))
}

/// Simplified lower bound `c e^{-c} (1 - e^c/(mu-1))` on the first-order
/// drift coefficient.
pub fn first_order_bound(mu: u32, c: f64) -> Result<f64> {
    if mu < 2 {
        return Err(invalid("mu must be >= 2"));
    }
    need_c(c)?;
    Ok(c * (-c).exp() * (1.0 - c.exp() / f64::from(mu - 1)))
}

/// The sharper bound `c e^{-c} (1 - sum_r c^r/(r+1)! (r-1)/(1+(mu-1)r))`.
pub fn first_order_bound_sharp(mu: u32, c: f64, cfg: &SeriesConfig) -> Result<f64> {
    if mu < 2 {
        return Err(invalid("mu must be >= 2"));
    }
    need_c(c)?;
    let m = f64::from(mu - 1);
    let mut term = c / 2.0; // c^r/(r+1)! at r = 1
    let mut sum = 0.0;
    for r in 1..=cfg.terms_for(c) {
        let rf = r as f64;
        sum += term * (rf - 1.0) / (1.0 + m * rf);
        term *= c / (rf + 2.0);
    }
    Ok(c * (-c).exp() * (1.0 - sum))
}

fn delta_i_raw(i: u32, r: i128, k: i128) -> Option<Rational> {
    Some(match i {
        2 => q(1 - k, k + 1),
        3 | 9 => q(1 - r, r + 1),
        4 => q(2 - 2 * r * k, k + r + 2),
        5 => q(2 * (2 - r), 2 + r),
        6 => q(2 - r * r, r + 2),
        7 => q(2 - r - r * k, k + 1),
        8 => q(2 * (2 - r - k), r + k + 2),
        _ => return None,
    })
}

/// Drift contribution of the second-order transition with index `i` in 2..=9.
/// `k` is ignored by the indices that do not use it.
pub fn delta_i(i: u32, r: u32, k: u32) -> Result<Rational> {
    need_pos("r", r)?;
    if matches!(i, 2 | 4 | 7 | 8) {
        need_pos("k", k)?;
    }
    delta_i_raw(i, r.into(), k.into()).ok_or(Error::UnknownIndex(i))
}

fn probs_a(r: i128, k: i128) -> [Rational; 3] {
    [
        q(r * (r + 2), (r + k + 2) * (r + 1)),
        q(k * (k + 2), (r + k + 2) * (k + 1)),
        q(1, (r + 1) * (k + 1)),
    ]
}

fn probs_b(r: i128, k: i128) -> [Rational; 3] {
    [
        q(r + 2, (r + 1) * (r + k + 2)),
        q(r, (r + 1) * (k + 1)),
        q(k * (r + k + 1), (k + 1) * (r + k + 2)),
    ]
}

/// Discard probabilities in the state `{x, x(1-r), x(1-k)}`, ordered as
/// (the `r` string, the `k` string, the reference string).
pub fn discard_probs_a(r: u32, k: u32) -> Result<[Rational; 3]> {
    need_pos("r", r)?;
    need_pos("k", k)?;
    Ok(probs_a(r.into(), k.into()))
}

/// Discard probabilities in the state `{x, x(1-r), x(2-r-k)}`, ordered as
/// (the reference string, the `r` string, the offspring).
pub fn discard_probs_b(r: u32, k: u32) -> Result<[Rational; 3]> {
    need_pos("r", r)?;
    need_pos("k", k)?;
    Ok(probs_b(r.into(), k.into()))
}

fn delta_a_raw(r: i128, k: i128) -> Rational {
    q(
        r * (r + 2) * (1 - k) + k * (k + 2) * (1 - r) + 2 - 2 * r * k,
        (r + k + 2) * (r + 1) * (k + 1),
    )
}

fn delta_b_raw(r: i128, k: i128) -> Rational {
    q(
        -2 * r * r * k - r * k * k - 3 * r * r - 4 * r * k + k * k + 4 * r + k + 4,
        (k + 1) * (r + 1) * (k + r + 2),
    )
}

pub fn delta_a(r: u32, k: u32) -> Result<Rational> {
    need_pos("r", r)?;
    need_pos("k", k)?;
    Ok(delta_a_raw(r.into(), k.into()))
}

pub fn delta_b(r: u32, k: u32) -> Result<Rational> {
    need_pos("r", r)?;
    need_pos("k", k)?;
    Ok(delta_b_raw(r.into(), k.into()))
}

/// Truncation control for the `f0`/`f1` series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Minimum number of terms per sum.
    pub terms: usize,
    /// Absolute bound the dropped tail must stay under.
    pub tail_target: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            terms: 60,
            tail_target: 1e-12,
        }
    }
}

impl SeriesConfig {
    /// Bound on the dropped tail after `terms` terms. Every series here
    /// has summands at most `K (1+c)^4 (r+1) c^r/r!`.
    pub fn tail_bound(c: f64, terms: usize) -> f64 {
        let r1 = terms as f64 + 1.0;
        if c >= terms as f64 + 2.0 {
            return f64::INFINITY;
        }
        // c^{R+1}/(R+1)! in log space
        let log_lead = r1 * c.ln() - ln_factorial(terms + 1);
        let geometric = 1.0 / (1.0 - c / (r1 + 1.0));
        64.0 * (1.0 + c).powi(4) * (r1 + 1.0) * log_lead.exp() * geometric
    }

    /// Terms needed at `c`: at least `self.terms`, more if the tail bound
    /// demands it.
    pub fn terms_for(&self, c: f64) -> usize {
        let mut r = self.terms.max(1);
        while Self::tail_bound(c, r) > self.tail_target && r < 10_000 {
            r += 10;
        }
        r
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// First- and second-order drift coefficients at one mutation parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCoefficients {
    pub c: f64,
    pub f0: f64,
    pub f1: f64,
}

pub fn drift_coefficients(c: f64, cfg: &SeriesConfig) -> Result<DriftCoefficients> {
    Ok(DriftCoefficients {
        c,
        f0: f0(c, cfg)?,
        f1: f1(c, cfg)?,
    })
}

/// `1 + sum_{r>=1} c^r/(r+1)! (1-r)/(r+1)`, the factor of `f0` after `c e^{-c}`.
pub fn f0_series(c: f64, cfg: &SeriesConfig) -> Result<f64> {
    need_c(c)?;
    let mut term = c / 2.0;
    let mut sum = 1.0;
    for r in 1..=cfg.terms_for(c) {
        let rf = r as f64;
        sum += term * (1.0 - rf) / (rf + 1.0);
        term *= c / (rf + 2.0);
    }
    Ok(sum)
}

/// First-order drift coefficient of the (2+1)-EA.
pub fn f0(c: f64, cfg: &SeriesConfig) -> Result<f64> {
    Ok(c * (-c).exp() * f0_series(c, cfg)?)
}

/// Second-order drift coefficient of the (2+1)-EA. The inner sums over `k`
/// start at 0 and use the closed forms of the A/B drifts there as well.
pub fn f1(c: f64, cfg: &SeriesConfig) -> Result<f64> {
    need_c(c)?;
    let big_r = cfg.terms_for(c);
    let emc = (-c).exp();
    // c^k/k! for k = 0..=R
    let mut pk = Vec::with_capacity(big_r + 1);
    let mut t = 1.0;
    for k in 0..=big_r {
        pk.push(t);
        t *= c / (k as f64 + 1.0);
    }

    let mut first = c * c * emc;
    let mut second = 0.0;
    let mut t2 = c * c * c / 6.0; // c^{r+2}/(r+2)! at r = 1
    let mut t1 = c * c * c / 2.0; // c^{r+2}/(r+1)! at r = 1
    for r in 1..=big_r {
        let ri = r as i128;
        let rf = r as f64;
        let d5 = to_f64(&delta_i_raw(5, ri, 0).expect("index"));
        let d6 = to_f64(&delta_i_raw(6, ri, 0).expect("index"));
        first += (rf + 1.0) * emc * t2 * d5;

        let mut num = (2.0 + d6 + rf * d5) / (rf + 1.0);
        let mut den = 0.0;
        for (k, &p) in pk.iter().enumerate() {
            let ki = k as i128;
            num += p * to_f64(&(delta_a_raw(ri, ki) + delta_b_raw(ri, ki)));
            den += p * emc * (rf + 1.0) / (rf + k as f64 + 1.0);
        }
        second += t1 * num / den;

        t2 *= c / (rf + 3.0);
        t1 *= c / (rf + 2.0);
    }
    Ok(first + (-2.0 * c).exp() / 2.0 * second)
}

/// `eps f0(c) + eps^2 f1(c)`.
pub fn second_order_drift(c: f64, eps: f64, cfg: &SeriesConfig) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(invalid(format!("eps must lie in [0,1), got {eps}")));
    }
    let d = drift_coefficients(c, cfg)?;
    Ok(eps * d.f0 + eps * eps * d.f1)
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BracketFailure { lo, hi });
    }
    let neg_at_lo = fa < 0.0;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == neg_at_lo {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Positive root of `f0`, searched on [1, 4].
pub fn find_c0(cfg: &SeriesConfig) -> Result<f64> {
    bisect(|c| f0(c, cfg), 1.0, 4.0, 1e-9)
}

/// `-f0(c)/f1(c)`, the distance where the second-order drift changes sign.
pub fn epsilon_star(c: f64, cfg: &SeriesConfig) -> Result<f64> {
    let d = drift_coefficients(c, cfg)?;
    if d.f1.abs() < 1e-12 {
        return Err(Error::DegenerateRatio(d.f1));
    }
    Ok(-d.f0 / d.f1)
}

/// Population size above which the first-order drift is positive.
pub fn mu_zero(c: f64) -> f64 {
    c.exp() + 2.0
}

/// First-order drift coefficient of the (1+1)-EA:
/// `c e^{-c} sum_{r>=0} (1-r) c^r/(r+1)!`.
pub fn f0_mu1(c: f64, cfg: &SeriesConfig) -> Result<f64> {
    need_c(c)?;
    let mut term = 1.0;
    let mut sum = 0.0;
    for r in 0..=cfg.terms_for(c) {
        let rf = r as f64;
        sum += (1.0 - rf) * term;
        term *= c / (rf + 2.0);
    }
    Ok(c * (-c).exp() * sum)
}

/// Positive root of [`f0_mu1`], searched on [1, 2].
pub fn find_c0_mu1(cfg: &SeriesConfig) -> Result<f64> {
    bisect(|c| f0_mu1(c, cfg), 1.0, 2.0, 1e-9)
}

/// Known critical mutation parameters of the (1+1)-EA on dynamic linear
/// functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceThresholds {
    pub exponential: f64,
    pub geometric_half: f64,
}

/// Critical mutation parameter for weights drawn from Geom(p) on {1,2,...}.
pub fn geometric_threshold(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must lie in (0,1), got {p}")));
    }
    Ok((2.0 - p) / (1.0 - p))
}

pub fn reference_thresholds() -> ReferenceThresholds {
    ReferenceThresholds {
        exponential: 2.0,
        geometric_half: 3.0,
    }
}

/// Sum of the three rationals, for total-probability checks.
pub fn triple_sum(t: &[Rational; 3]) -> Rational {
    t.iter().fold(Rational::zero(), |a, b| a + b)
}
