use qlink_core::apc::{converge, feedback_intensities, run_stabilization, ApcState, DriftRecord};
use qlink_core::polarization::fidelity;
use qlink_core::{default_paper_scenario, Direction, JonesVector, PolUnitary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_by(records: &[DriftRecord<f64>], d: Direction, f: impl Fn(&DriftRecord<f64>) -> f64) -> f64 {
    let v: Vec<f64> = records.iter().filter(|r| r.direction == d).map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn converged_controller_restores_every_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let apc = ApcState::default();
    for _ in 0..50 {
        let fiber = PolUnitary::random(&mut rng);
        let (state, its) = converge(&apc, &fiber, 2.0 - 1e-4, 2000);
        assert!(its.is_some());
        let (i1, i2) = feedback_intensities(&fiber, &state);
        assert!(i1 >= 1.0 - 1e-4 && i2 >= 1.0 - 1e-4);
        let total = state.controller_unitary() * fiber;
        for _ in 0..100 {
            let probe = JonesVector::random(&mut rng);
            assert!(fidelity(&probe, &total.apply(&probe)) >= 1.0 - 1e-3);
        }
        // The reverse traversal is compensated by the same setting.
        let back = total.transpose();
        let probe = JonesVector::random(&mut rng);
        assert!(fidelity(&probe, &back.apply(&probe)) >= 1.0 - 1e-3);
    }
}

#[test]
fn run_is_deterministic_per_seed() {
    let cfg = default_paper_scenario().stabilization_config().unwrap();
    let a = run_stabilization(&cfg, 30.0, true, 9).unwrap();
    let b = run_stabilization(&cfg, 30.0, true, 9).unwrap();
    let c = run_stabilization(&cfg, 30.0, true, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 60);
}

#[test]
fn zero_duration_rejected() {
    let cfg = default_paper_scenario().stabilization_config().unwrap();
    assert!(run_stabilization(&cfg, 0.0, true, 1).is_err());
}

#[test]
fn controlled_run_keeps_fidelity() {
    let cfg = default_paper_scenario().stabilization_config().unwrap();
    let r = run_stabilization(&cfg, 1000.0, true, 3).unwrap();
    for d in Direction::BOTH {
        let f = mean_by(&r, d, |x| x.fidelity);
        assert!(f >= 0.98, "{d}: {f}");
    }
}

#[test]
fn uncontrolled_fidelity_decays() {
    let cfg = default_paper_scenario().stabilization_config().unwrap();
    let r = run_stabilization(&cfg, 2000.0, false, 3).unwrap();
    let early: Vec<f64> = r.iter().take(10).map(|x| x.fidelity).collect();
    let late = mean_by(&r[r.len() / 2..], Direction::OneToTwo, |x| x.fidelity);
    assert!(early.iter().all(|&f| f > 0.9));
    assert!(late < 0.85, "{late}");
    let v: Vec<f64> = r.iter().map(|x| x.visibility_window).collect();
    let span = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(span > 0.5, "{span}");
}

#[test]
fn frozen_fiber_counts_are_poissonian() {
    let mut s = default_paper_scenario();
    s.apc.drift_rate = 0.0;
    s.apc.controller_jitter_rad = 0.0;
    let cfg = s.stabilization_config().unwrap();
    let r = run_stabilization(&cfg, 4000.0, false, 5).unwrap();
    let counts: Vec<f64> = r
        .iter()
        .filter(|x| x.direction == Direction::TwoToOne)
        .map(|x| x.counts_spcm_a as f64)
        .collect();
    let n = counts.len() as f64;
    let (first, second) = counts.split_at(counts.len() / 2);
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / mean - 1.0).abs() < 0.1, "var/mean = {}", var / mean);
    let m1 = first.iter().sum::<f64>() / first.len() as f64;
    let m2 = second.iter().sum::<f64>() / second.len() as f64;
    let sigma = (2.0 * mean / (n / 2.0)).sqrt();
    assert!((m1 - m2).abs() < 4.0 * sigma, "{m1} vs {m2}");
}

#[test]
fn control_beats_drift() {
    let cfg = default_paper_scenario().stabilization_config().unwrap();
    for (seed, rate) in [(1u64, 0.02), (2, 0.05), (3, 0.2)] {
        let mut c = cfg.clone();
        c.drift_rate = rate;
        let on = run_stabilization(&c, 2000.0, true, seed).unwrap();
        let off = run_stabilization(&c, 2000.0, false, seed).unwrap();
        let stats = |r: &[DriftRecord<f64>]| {
            let v: Vec<f64> = r.iter().map(|x| x.visibility_window).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            (m, s / (v.len() as f64).sqrt())
        };
        let ((m_on, e_on), (m_off, e_off)) = (stats(&on), stats(&off));
        assert!(m_on - m_off > 3.0 * (e_on.hypot(e_off)), "rate {rate}: {m_on} vs {m_off}");
    }
}

#[test]
fn residual_pigtail_drift_degrades_control() {
    let mut s = default_paper_scenario();
    s.apc.residual_drift_rate = 0.01;
    let with = run_stabilization(&s.stabilization_config().unwrap(), 2000.0, true, 4).unwrap();
    let without = run_stabilization(&default_paper_scenario().stabilization_config().unwrap(), 2000.0, true, 4).unwrap();
    let f = |r: &[DriftRecord<f64>]| mean_by(r, Direction::OneToTwo, |x| x.fidelity);
    assert!(f(&with) < f(&without));
}
