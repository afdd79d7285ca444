//! Statistical properties of the process that need more than a handful of
//! runs.

use dynbv_core::analytic::{delta_f_first, f0, SeriesConfig};
use dynbv_core::drift::{
    estimate_degenerate_drift, estimate_state_drift, trial_rng, zero_flip_tally, StateKind, StateSpec, DEFAULT_CAP,
};
use dynbv_core::{BitString, EaParams, Population, Simulator};
use num_traits::ToPrimitive;

#[test]
fn degeneration_time_has_geometric_tail() {
    let (n, mu, runs) = (1000, 3, 100_000u64);
    let mut sim = Simulator::new(EaParams::new(n, mu, 1.0).unwrap()).unwrap();
    let x = BitString::with_zeros_at(n, &(0..100).collect::<Vec<_>>());
    let y = x.with_flipped(&[0, 500]);
    let mut hist = vec![0u64; 64];
    for i in 0..runs {
        let mut pop = Population::new(vec![x.clone(), x.clone(), y.clone()]).unwrap();
        let run = sim.run_to_next_degenerate(&mut pop, DEFAULT_CAP, &mut trial_rng(11, i));
        assert!(!run.hit_cap);
        hist[((run.generations / mu as u64) as usize).min(63)] += 1;
    }
    // survival[k] = Pr(K >= k * mu)
    let survival: Vec<u64> = (0..64).map(|k| hist[k..].iter().sum()).collect();
    let supported: Vec<u64> = survival.iter().copied().skip(1).take_while(|&s| s >= 200).collect();
    assert!(supported.len() >= 10, "tail too short: {survival:?}");
    for w in supported.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!(ratio < 0.85, "survival ratio {ratio} in {supported:?}");
    }
}

#[test]
fn multiple_zero_flips_are_second_order() {
    let params = EaParams::new(2000, 2, 1.0).unwrap();
    let frac = |eps: f64| {
        let t = zero_flip_tally(&params, eps, 4_000_000, DEFAULT_CAP, 12).unwrap();
        assert_eq!(t.aborted, 0);
        (t.fraction(), t.multiple as f64)
    };
    let (hi, hi_count) = frac(0.02);
    let (lo, lo_count) = frac(0.01);
    let ratio = hi / lo;
    let se = ratio * (1.0 / hi_count + 1.0 / lo_count).sqrt();
    // exactly 4 only as eps -> 0
    assert!((ratio - 4.0).abs() <= 3.0 * se + 0.4, "ratio {ratio} +- {se}");
}

#[test]
fn drift_from_f2_with_five_members_respects_first_order_floor() {
    let (n, mu) = (10_000, 5);
    let spec = StateSpec::new(StateKind::F { r: 2 }, n, 10, mu).unwrap();
    let est = estimate_state_drift(&spec, &EaParams::new(n, mu, 1.0).unwrap(), 100_000, DEFAULT_CAP, 13).unwrap();
    let floor = delta_f_first(mu as u32, 2).unwrap().to_f64().unwrap();
    assert!((floor + 1.0 / 9.0).abs() < 1e-15);
    assert!(
        est.mean >= floor - (3.0 * est.standard_error + 0.02),
        "{} +- {}",
        est.mean,
        est.standard_error
    );
}

#[test]
fn drift_sign_follows_leading_coefficient_below_root() {
    let cfg = SeriesConfig::default();
    assert!(f0(2.2, &cfg).unwrap() > 0.0);
    let est =
        estimate_degenerate_drift(&EaParams::new(3000, 2, 2.2).unwrap(), 0.005, 1_000_000, DEFAULT_CAP, 14).unwrap();
    assert!(est.z_score() > 3.0, "{} +- {}", est.mean, est.standard_error);
}
