use qlink_core::analysis::{crossover_distance, max_distance, visibility_vs_distance, z_grid, VISIBILITY_THRESHOLD};
use qlink_core::{default_paper_scenario, Direction, FiberType};

#[test]
fn reference_point_reproduces_baselines() {
    let s = default_paper_scenario();
    let m = s.distance_model().unwrap();
    assert!((m.visibility_at(Direction::OneToTwo, 23.0).unwrap() - 0.916).abs() < 1e-3);
    assert!((m.visibility_at(Direction::TwoToOne, 23.0).unwrap() - 0.931).abs() < 1e-3);
}

#[test]
fn visibility_falls_with_distance() {
    let m = default_paper_scenario().distance_model().unwrap();
    let sweep = visibility_vs_distance(&m, &z_grid(23.0, 120.0, 0.5).unwrap()).unwrap();
    for d in Direction::BOTH {
        assert!(sweep.column(d).windows(2).all(|w| w[1] < w[0]), "{d}");
    }
    assert!(sweep.rows.iter().all(|r| r.ber > 0.0 && r.ber < 0.5));
}

#[test]
fn directions_cross() {
    let m = default_paper_scenario().distance_model().unwrap();
    assert!(m.visibility_at(Direction::TwoToOne, 23.0).unwrap() > m.visibility_at(Direction::OneToTwo, 23.0).unwrap());
    let z = crossover_distance(&m, 1.0).unwrap().expect("curves cross");
    assert!(z > 23.0 && z < 80.0, "{z}");
    assert!(m.visibility_at(Direction::OneToTwo, z + 5.0).unwrap() > m.visibility_at(Direction::TwoToOne, z + 5.0).unwrap());
}

/// Crossing distance, or zero when the link is already below threshold at the reference length.
fn limit(s: &qlink_core::Scenario, d: Direction) -> f64 {
    match max_distance(&s.distance_model().unwrap(), d, VISIBILITY_THRESHOLD) {
        Ok(z) => z,
        Err(qlink_core::Error::BelowThresholdAtReference { .. }) => 0.0,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn limit_shrinks_with_launch_power() {
    let s = default_paper_scenario();
    for d in Direction::BOTH {
        let mut prev = f64::INFINITY;
        for p in [-25.0, -22.0, -19.8, -17.8, -15.0] {
            let z = limit(&s.with_overrides(&[("launch_dbm", p.to_string())]).unwrap(), d);
            assert!(z <= prev, "{d} at {p} dBm");
            prev = z;
        }
    }
}

#[test]
fn limit_shrinks_with_filter_and_channels() {
    let s = default_paper_scenario();
    for d in Direction::BOTH {
        let mut prev = f64::INFINITY;
        for bw in [5.0, 25.0, 50.0, 100.0] {
            let z = limit(&s.with_channels(2, 100, FiberType::DispersionShifted, bw).unwrap(), d);
            assert!(z <= prev);
            prev = z;
        }
        let mut prev = f64::INFINITY;
        for n in 1..=16 {
            let z = limit(&s.with_channels(n, 100, FiberType::DispersionShifted, 50.0).unwrap(), d);
            assert!(z <= prev, "{d} n={n}");
            prev = z;
        }
    }
}

#[test]
fn count_rates_differ_by_controller_loss() {
    let r = default_paper_scenario().count_rate_ratio().unwrap();
    assert!((r - 2.0).abs() < 0.2, "{r}");
}

#[test]
fn reclaimed_loss_matches_half_photon() {
    // Lower-loss DWDM filters (1.4 dB) plus ~1 dB of spliced connectors
    // remove 3.1 dB, so μ = 0.5 gives back the μ = 1 count level.
    let s = default_paper_scenario();
    let low = s
        .with_overrides(&[
            ("mu", "0.5".to_string()),
            ("budgets.2-1.entries.0.loss_db", "1.4".to_string()),
            ("budgets.2-1.entries.2.loss_db", (qlink_core::scenario::NODE_INSERTION_DB - 1.0).to_string()),
        ])
        .unwrap();
    let (c_full, _) = s.signal_rates(Direction::TwoToOne).unwrap();
    let (c_half, _) = low.signal_rates(Direction::TwoToOne).unwrap();
    assert!((c_half / c_full - 10f64.powf(0.31) / 2.0).abs() < 0.01);
}
