//! Straight-line reference implementations checked against the library.

use proptest::prelude::*;
use xrsched_core::aoi::{self, AoiParams, AoiState};
use xrsched_core::scheduler::{pf_update, ue_cap, PfState};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Recomputes the age sequence from the full reset history.
fn replay(clip: u32, phis: &[bool]) -> Vec<(u32, u64, u64)> {
    let mut out = Vec::with_capacity(phis.len());
    let mut age = 1u32;
    let mut sum = 0u64;
    let mut count = 0u64;
    for &p in phis {
        if p {
            sum += age as u64;
            count += 1;
            age = 1;
        } else {
            age = if age > clip { clip } else { age };
            age += 1;
        }
        out.push((age, sum, count));
    }
    out
}

fn weight_ref(d: f64, kappa: f64, pdb: u32) -> f64 {
    if d > pdb as f64 {
        1.0 - 1.0 / d.powf(kappa)
    } else {
        1.0 / d.powf(kappa)
    }
}

proptest! {
    #[test]
    fn phi_is_a_conjunction(b: bool, s: bool, g: bool) {
        let expected = if b { if s { g } else { false } } else { false };
        prop_assert_eq!(aoi::phi(b, s, g), expected);
    }

    #[test]
    fn incremental_age_matches_replay(
        clip in 1u32..60,
        trace in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..400),
    ) {
        let phis: Vec<bool> = trace.iter().map(|&(b, s, g)| aoi::phi(b, s, g)).collect();
        let reference = replay(clip, &phis);
        let mut st = AoiState::new(clip);
        for (t, &p) in phis.iter().enumerate() {
            st = aoi::aoi_step(st, p);
            prop_assert_eq!((st.age, st.paoi_sum, st.paoi_count), reference[t]);
            prop_assert!(st.age <= clip + 1);
        }
    }

    #[test]
    fn paoi_is_mean_of_pre_reset_ages(phis in prop::collection::vec(any::<bool>(), 1..300)) {
        let mut st = AoiState::new(100);
        let mut samples = Vec::new();
        for &p in &phis {
            if p {
                samples.push(st.age as f64);
            }
            st = st.step(p);
        }
        match aoi::paoi(&st) {
            None => prop_assert!(samples.is_empty()),
            Some(v) => {
                let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                prop_assert!(rel_close(v, mean, 1e-12));
            }
        }
    }

    #[test]
    fn weighted_age_reference(
        theta in 0.0f64..=1.0,
        age in 1u32..200,
        sum in 0u64..100_000,
        count in 0u64..500,
    ) {
        let st = AoiState { age, clip: 200, paoi_sum: sum, paoi_count: count, last_phi: false, elapsed: 0 };
        let params = AoiParams { kappa: 2.0, theta, pdb: 30 };
        let history = if count == 0 { age as f64 } else { sum as f64 / count as f64 };
        let expected = theta * age as f64 + (1.0 - theta) * history;
        prop_assert!(rel_close(aoi::weighted_age(&st, &params), expected, 1e-12));
    }

    #[test]
    fn weight_reference(d in 1.0f64..300.0, kappa in 0.1f64..6.0, pdb in 1u32..100) {
        let params = AoiParams { kappa, theta: 0.5, pdb };
        prop_assert!(rel_close(aoi::paoi_weight(d, &params), weight_ref(d, kappa, pdb), 1e-12));
    }

    #[test]
    fn weight_decreases_then_increases(
        a in 1.0f64..300.0,
        b in 1.0f64..300.0,
        kappa in 0.1f64..6.0,
        pdb in 1u32..100,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let params = AoiParams { kappa, theta: 0.5, pdb };
        let (wl, wh) = (aoi::paoi_weight(lo, &params), aoi::paoi_weight(hi, &params));
        let p = pdb as f64;
        if hi <= p {
            prop_assert!(wh <= wl);
        }
        if lo > p {
            prop_assert!(wh >= wl);
        }
        prop_assert!(wl > 0.0 && wl <= 1.0);
    }

    #[test]
    fn pf_update_reference(
        q_avg in 1e-6f64..1e6,
        tau in 0.0f64..=1.0,
        beta: bool,
        q in 0.0f64..1e6,
    ) {
        let next = pf_update(PfState::new(q_avg, tau), beta, q).q_avg;
        let served = if beta { q } else { 0.0 };
        let expected = f64::max(q_avg - tau * q_avg + tau * served, 1e-6);
        prop_assert!(rel_close(next, expected, 1e-12));
    }

    #[test]
    fn ue_cap_reference(
        lambdas in prop::collection::vec(0usize..5, 1..12),
        layer_cap in 1usize..17,
    ) {
        let n = lambdas.len();
        let total: usize = lambdas.iter().sum();
        let expected = if total == 0 {
            n
        } else {
            let mean = total as f64 / n as f64;
            let mut k = 0;
            while (k as f64) * mean < layer_cap as f64 - 1e-9 {
                k += 1;
            }
            k
        };
        prop_assert_eq!(ue_cap(&lambdas, layer_cap, n), expected);
    }
}

#[test]
fn pf_fixed_point() {
    let mut st = PfState::new(10.0, 0.01);
    for _ in 0..5000 {
        st = pf_update(st, true, 50.0);
    }
    assert!((st.q_avg - 50.0).abs() < 1e-12 * 50.0 + 1e-9);
}

#[test]
fn never_served_average_hits_floor() {
    let mut st = PfState::new(1.0, 0.5);
    for _ in 0..200 {
        st = pf_update(st, false, 0.0);
    }
    assert_eq!(st.q_avg, 1e-6);
}
